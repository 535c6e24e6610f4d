//! Time-dependent coefficient functions of the form
//!
//! ```text
//! f(t) = a + Σ_k b_k · sin(c_k · π · t + φ_k)
//! ```
//!
//! Velocities, damping factors and mean-reversion levels all live in this
//! family. Its antiderivative is known in closed form, which makes exact
//! integrals and the arrival-time inversion `∫_{t_start}^{t_end} f = target`
//! cheap and accurate.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TimeFnError {
    #[error("integration bounds out of order: a = {a} > b = {b}")]
    ArgumentOrder { a: f64, b: f64 },
    #[error("integral target must be a finite non-negative number, got {target}")]
    Domain { target: f64 },
    #[error("function is not strictly positive near t = {t} (value {value}); cannot invert its integral")]
    NonInvertible { t: f64, value: f64 },
    #[error("non-finite time argument {t}")]
    NonFinite { t: f64 },
}

/// One `b · sin(c·π·t + φ)` summand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SineTerm {
    pub amplitude: f64,
    /// Multiplier of `π·t`; `sin(2πt)` has `angular_factor = 2`.
    pub angular_factor: f64,
    #[serde(default)]
    pub phase: f64,
}

impl SineTerm {
    pub fn new(amplitude: f64, angular_factor: f64, phase: f64) -> Self {
        Self {
            amplitude,
            angular_factor,
            phase,
        }
    }

    fn omega(&self) -> f64 {
        self.angular_factor * PI
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeFunction {
    pub constant: f64,
    #[serde(default)]
    pub terms: Vec<SineTerm>,
}

impl TimeFunction {
    pub fn new(constant: f64, terms: Vec<SineTerm>) -> Self {
        Self { constant, terms }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(value, Vec::new())
    }

    /// `constant + amplitude · sin(angular_factor·π·t + phase)`.
    pub fn sinusoid(constant: f64, amplitude: f64, angular_factor: f64, phase: f64) -> Self {
        Self::new(
            constant,
            vec![SineTerm::new(amplitude, angular_factor, phase)],
        )
    }

    pub fn is_finite(&self) -> bool {
        self.constant.is_finite()
            && self.terms.iter().all(|s| {
                s.amplitude.is_finite() && s.angular_factor.is_finite() && s.phase.is_finite()
            })
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.terms.iter().fold(self.constant, |acc, s| {
            acc + s.amplitude * (s.omega() * t + s.phase).sin()
        })
    }

    /// A closed-form antiderivative `F` with `F' = f`.
    pub fn antiderivative(&self, t: f64) -> f64 {
        self.terms.iter().fold(self.constant * t, |acc, s| {
            let w = s.omega();
            if w == 0.0 {
                acc + s.amplitude * s.phase.sin() * t
            } else {
                acc - s.amplitude / w * (w * t + s.phase).cos()
            }
        })
    }

    /// `∫_a^b f(s) ds`.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64, TimeFnError> {
        if !a.is_finite() {
            return Err(TimeFnError::NonFinite { t: a });
        }
        if !b.is_finite() {
            return Err(TimeFnError::NonFinite { t: b });
        }
        if a > b {
            return Err(TimeFnError::ArgumentOrder { a, b });
        }
        Ok(self.integral_unchecked(a, b))
    }

    // Sums the cosine differences term by term, which keeps cancellation
    // bounded by the size of each term rather than by |F|.
    fn integral_unchecked(&self, a: f64, b: f64) -> f64 {
        self.terms.iter().fold(self.constant * (b - a), |acc, s| {
            let w = s.omega();
            if w == 0.0 {
                acc + s.amplitude * s.phase.sin() * (b - a)
            } else {
                // cos(x) - cos(y) = -2 sin((x+y)/2) sin((x-y)/2)
                let x = w * b + s.phase;
                let y = w * a + s.phase;
                let diff_cos = -2.0 * (0.5 * (x + y)).sin() * (0.5 * w * (b - a)).sin();
                acc - s.amplitude / w * diff_cos
            }
        })
    }

    /// Guaranteed lower bound `a - Σ|b_k|` over all t.
    pub fn lower_bound(&self) -> f64 {
        self.constant - self.terms.iter().map(|s| s.amplitude.abs()).sum::<f64>()
    }

    /// Guaranteed upper bound `a + Σ|b_k|` over all t.
    pub fn upper_bound(&self) -> f64 {
        self.constant + self.terms.iter().map(|s| s.amplitude.abs()).sum::<f64>()
    }

    /// Smallest value seen on a uniform sample of `[a, b]` (endpoints included).
    pub fn sampled_min(&self, a: f64, b: f64, samples: usize) -> f64 {
        let n = samples.max(1);
        (0..=n)
            .map(|k| self.eval(a + (b - a) * k as f64 / n as f64))
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest value seen on a uniform sample of `[a, b]` (endpoints included).
    pub fn sampled_max(&self, a: f64, b: f64, samples: usize) -> f64 {
        let n = samples.max(1);
        (0..=n)
            .map(|k| self.eval(a + (b - a) * k as f64 / n as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Returns `t_end ≥ t_start` with `∫_{t_start}^{t_end} f = target`.
    ///
    /// This is `F⁻¹(target + F(t_start))` for the antiderivative `F`; it
    /// requires `f > 0` on the bracket that gets searched.
    pub fn advance_by_integral(&self, t_start: f64, target: f64) -> Result<f64, TimeFnError> {
        self.solve_offset(t_start, target, Direction::Forward)
    }

    /// Returns `t_start ≤ t_end` with `∫_{t_start}^{t_end} f = target`.
    pub fn retreat_by_integral(&self, t_end: f64, target: f64) -> Result<f64, TimeFnError> {
        self.solve_offset(t_end, target, Direction::Backward)
    }

    fn solve_offset(&self, anchor: f64, target: f64, dir: Direction) -> Result<f64, TimeFnError> {
        if !anchor.is_finite() {
            return Err(TimeFnError::NonFinite { t: anchor });
        }
        if !(target >= 0.0) || !target.is_finite() {
            return Err(TimeFnError::Domain { target });
        }
        if target == 0.0 {
            return Ok(anchor);
        }
        let sign = dir.sign();
        // g(s) = signed mass between anchor and anchor + sign·s, minus target.
        // Increasing in s as long as f > 0.
        let mass = |s: f64| -> f64 {
            if s <= 0.0 {
                return -target;
            }
            let t = anchor + sign * s;
            let m = if sign > 0.0 {
                self.integral_unchecked(anchor, t)
            } else {
                self.integral_unchecked(t, anchor)
            };
            m - target
        };

        let (mut lo, mut hi) = self.bracket(anchor, target, sign, &mass)?;
        let tol = 1e-14 * target.max(1.0);

        // Safeguarded Newton on the offset s; the derivative of g is f(anchor + sign·s).
        let mut s = 0.5 * (lo + hi);
        for _ in 0..200 {
            let g = mass(s);
            if g.abs() <= tol {
                return Ok(anchor + sign * s);
            }
            if g < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            if hi - lo <= 4.0 * f64::EPSILON * (anchor.abs() + hi) {
                break;
            }
            let slope = self.eval(anchor + sign * s);
            let newton = s - g / slope;
            s = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Ok(anchor + sign * s)
    }

    fn bracket(
        &self,
        anchor: f64,
        target: f64,
        sign: f64,
        mass: &dyn Fn(f64) -> f64,
    ) -> Result<(f64, f64), TimeFnError> {
        let lower = self.lower_bound();
        if lower > 0.0 {
            let upper = self.upper_bound();
            // Tiny widening absorbs rounding in the bounds themselves.
            return Ok((
                target / upper * (1.0 - 1e-12),
                target / lower * (1.0 + 1e-12),
            ));
        }

        // No global positivity guarantee: grow the bracket geometrically and
        // check positivity on a coarse sample of every newly covered piece.
        let scale = self.constant.abs().max(self.upper_bound().abs()).max(1e-3);
        let mut lo = 0.0;
        let mut width = target / scale;
        for _ in 0..128 {
            let a = anchor + sign * lo;
            let b = anchor + sign * width;
            let (x0, x1) = if sign > 0.0 { (a, b) } else { (b, a) };
            for k in 0..=64 {
                let t = x0 + (x1 - x0) * k as f64 / 64.0;
                let v = self.eval(t);
                if !(v > 0.0) {
                    return Err(TimeFnError::NonInvertible { t, value: v });
                }
            }
            if mass(width) >= 0.0 {
                return Ok((lo, width));
            }
            lo = width;
            width *= 2.0;
        }
        Err(TimeFnError::NonInvertible {
            t: anchor + sign * width,
            value: self.eval(anchor + sign * width),
        })
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: &TimeFunction, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / panels as f64;
        let mut acc = f.eval(a) + f.eval(b);
        for k in 1..panels {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f.eval(a + k as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn eval_examples() {
        let arc1 = TimeFunction::sinusoid(14.0, 1.0, 2.0, 0.0);
        assert_eq!(arc1.eval(0.0), 14.0);
        assert_eq!(TimeFunction::constant(0.5).eval(7.3), 0.5);
        let theta = TimeFunction::sinusoid(0.45, 0.2, 1.0, 1.0);
        assert!((theta.eval(0.0) - 0.618_294_196_961_579_3).abs() < 1e-15);
    }

    #[test]
    fn integral_examples() {
        assert_eq!(TimeFunction::constant(1.0).integral(0.0, 1.0).unwrap(), 1.0);
        let s = TimeFunction::sinusoid(0.0, 1.0, 2.0, 0.0);
        assert!(s.integral(0.0, 1.0).unwrap().abs() < 1e-15);
        let f = TimeFunction::sinusoid(1.0, 0.2, 1.0, 0.0);
        let exact = 1.0 + 0.4 / PI;
        assert!((f.integral(0.0, 1.0).unwrap() - exact).abs() < 1e-14);
        assert!((simpson(&f, 0.0, 1.0, 2000) - exact).abs() < 1e-12);
    }

    #[test]
    fn integral_rejects_reversed_bounds() {
        let f = TimeFunction::constant(1.0);
        assert_eq!(
            f.integral(1.0, 0.0),
            Err(TimeFnError::ArgumentOrder { a: 1.0, b: 0.0 })
        );
    }

    #[test]
    fn integral_matches_simpson_on_reference_functions() {
        let fns = [
            TimeFunction::sinusoid(14.0, 1.0, 2.0, 0.0),
            TimeFunction::sinusoid(12.0, 1.0, 4.0, 0.0),
            TimeFunction::sinusoid(0.5, 0.3, 1.0, -0.5),
            TimeFunction::sinusoid(1.0, 0.2, 1.0, 0.0),
        ];
        for f in &fns {
            let exact = f.integral(0.3, 2.1).unwrap();
            assert!((simpson(f, 0.3, 2.1, 4000) - exact).abs() < 1e-11);
        }
    }

    #[test]
    fn advance_constant_speed() {
        assert_eq!(
            TimeFunction::constant(2.0)
                .advance_by_integral(0.0, 1.0)
                .unwrap(),
            0.5
        );
        assert_eq!(
            TimeFunction::constant(1.0)
                .advance_by_integral(3.0, 1.0)
                .unwrap(),
            4.0
        );
    }

    #[test]
    fn advance_matches_bisection_oracle() {
        let f = TimeFunction::sinusoid(14.0, 1.0, 2.0, 0.0);
        // 14t + (1 - cos 2πt)/(2π) = 1 by plain bisection.
        let g = |t: f64| 14.0 * t + (1.0 - (2.0 * PI * t).cos()) / (2.0 * PI) - 1.0;
        let (mut lo, mut hi) = (0.0, 1.0);
        while hi - lo > 1e-15 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        let t1 = f.advance_by_integral(0.0, 1.0).unwrap();
        assert!((t1 - lo).abs() < 1e-12, "{t1} vs {lo}");
        assert!((t1 - 0.070_336_372_360_229_4).abs() < 1e-12);
    }

    #[test]
    fn retreat_inverts_advance() {
        let f = TimeFunction::sinusoid(12.0, 1.0, 4.0, 0.0);
        let t = f.advance_by_integral(0.37, 1.0).unwrap();
        let back = f.retreat_by_integral(t, 1.0).unwrap();
        assert!((back - 0.37).abs() < 1e-13);
    }

    #[test]
    fn advance_domain_errors() {
        let f = TimeFunction::constant(1.0);
        assert!(matches!(
            f.advance_by_integral(0.0, -1.0),
            Err(TimeFnError::Domain { .. })
        ));
        let sign_changing = TimeFunction::sinusoid(0.0, 1.0, 1.0, 0.0);
        assert!(matches!(
            sign_changing.advance_by_integral(0.5, 3.0),
            Err(TimeFnError::NonInvertible { .. })
        ));
        let negative = TimeFunction::constant(-1.0);
        assert!(matches!(
            negative.advance_by_integral(0.0, 1.0),
            Err(TimeFnError::NonInvertible { .. })
        ));
    }

    #[test]
    fn advance_without_global_bound_uses_sampled_bracket() {
        // 0.5 + sin(πt) dips below zero, but stays positive on [0.1, 0.9].
        let f = TimeFunction::sinusoid(0.5, 1.0, 1.0, 0.0);
        let t = f.advance_by_integral(0.1, 0.4).unwrap();
        assert!((f.integral(0.1, t).unwrap() - 0.4).abs() < 1e-12);
    }
}
