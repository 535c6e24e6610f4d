//! Nonlinear damping shapes `ĝ(z)` and the exact solution of the damping ODE
//! along a characteristic,
//!
//! ```text
//! d/dt z(t) = -μ(t) · ĝ(z(t)).
//! ```
//!
//! With `g̃ = 1/ĝ` and its antiderivative `G̃`, separation of variables gives
//! `G̃(z(t_end)) = G̃(z(t_start)) - ∫μ`, so both directions reduce to evaluating
//! `G̃` and `G̃⁻¹`. For super-linear monomials the backward direction can blow
//! up in finite time; that case is reported as [`DampingError::Infeasible`].

use crate::timefuncs::{TimeFnError, TimeFunction};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DampingError {
    #[error("damping is defined for z >= 0 only, got z = {z}")]
    Domain { z: f64 },
    #[error("value {y} lies outside the range of the reciprocal antiderivative")]
    Range { y: f64 },
    #[error("shape without damping has no reciprocal antiderivative")]
    NoAntiderivative,
    #[error(
        "backward damping blows up: damping mass {mass} is too large to deliver z = {z_end} \
         (G̃(z_end) + mass = {y} is outside the range of G̃)"
    )]
    Infeasible { mass: f64, z_end: f64, y: f64 },
    #[error("invalid damping shape: {0}")]
    InvalidShape(String),
    #[error(transparent)]
    Time(#[from] TimeFnError),
}

/// Monomial constants `C_n` normalised so that `∫_0^{0.1} C_n z^n dz = 1/200`.
pub fn default_coefficient(degree: u32) -> Option<f64> {
    match degree {
        1 => Some(1.0),
        2 => Some(15.0),
        3 => Some(200.0),
        4 => Some(2500.0),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DampingShape {
    None,
    Monomial { degree: u32, coefficient: f64 },
}

impl DampingShape {
    pub fn monomial(degree: u32, coefficient: f64) -> Result<Self, DampingError> {
        if degree == 0 {
            return Err(DampingError::InvalidShape(
                "degree must be at least 1".into(),
            ));
        }
        if !(coefficient > 0.0) || !coefficient.is_finite() {
            return Err(DampingError::InvalidShape(format!(
                "coefficient must be finite and positive, got {coefficient}"
            )));
        }
        Ok(DampingShape::Monomial {
            degree,
            coefficient,
        })
    }

    /// One of the four reference monomials `z, 15z², 200z³, 2500z⁴`.
    pub fn reference(degree: u32) -> Result<Self, DampingError> {
        let c = default_coefficient(degree).ok_or_else(|| {
            DampingError::InvalidShape(format!("no reference coefficient for degree {degree}"))
        })?;
        Self::monomial(degree, c)
    }

    pub fn is_none(&self) -> bool {
        matches!(self, DampingShape::None)
    }

    pub fn label(&self) -> String {
        match self {
            DampingShape::None => "none".to_string(),
            DampingShape::Monomial {
                degree,
                coefficient,
            } => format!("monomial(n={degree}, C={coefficient})"),
        }
    }

    pub fn g_hat(&self, z: f64) -> Result<f64, DampingError> {
        if !(z >= 0.0) {
            return Err(DampingError::Domain { z });
        }
        Ok(self.g_hat_unchecked(z))
    }

    #[inline]
    pub(crate) fn g_hat_unchecked(&self, z: f64) -> f64 {
        match *self {
            DampingShape::None => 0.0,
            DampingShape::Monomial {
                degree,
                coefficient,
            } => coefficient * z.powi(degree as i32),
        }
    }

    /// `G̃(z)`, the antiderivative of `1/ĝ`, for `z > 0`.
    pub fn g_tilde(&self, z: f64) -> Result<f64, DampingError> {
        if !(z > 0.0) {
            return Err(DampingError::Domain { z });
        }
        match *self {
            DampingShape::None => Err(DampingError::NoAntiderivative),
            DampingShape::Monomial {
                degree: 1,
                coefficient,
            } => Ok(z.ln() / coefficient),
            DampingShape::Monomial {
                degree,
                coefficient,
            } => {
                let e = 1.0 - degree as f64;
                Ok(z.powf(e) / (coefficient * e))
            }
        }
    }

    /// `G̃⁻¹(y)`; for `n ≥ 2` the range of `G̃` is `(-∞, 0)`.
    pub fn g_tilde_inv(&self, y: f64) -> Result<f64, DampingError> {
        if !y.is_finite() {
            return Err(DampingError::Range { y });
        }
        match *self {
            DampingShape::None => Err(DampingError::NoAntiderivative),
            DampingShape::Monomial {
                degree: 1,
                coefficient,
            } => Ok((coefficient * y).exp()),
            DampingShape::Monomial {
                degree,
                coefficient,
            } => {
                if y >= 0.0 {
                    return Err(DampingError::Range { y });
                }
                let e = 1.0 - degree as f64;
                Ok((coefficient * e * y).powf(1.0 / e))
            }
        }
    }

    /// Upstream value `z_start` at `t_start` that the damping ODE carries to
    /// `z_end` at `t_end`: `G̃⁻¹(G̃(z_end) + ∫_{t_start}^{t_end} μ)`.
    pub fn backward_damp(
        &self,
        mu: &TimeFunction,
        t_start: f64,
        t_end: f64,
        z_end: f64,
    ) -> Result<f64, DampingError> {
        if !(z_end >= 0.0) {
            return Err(DampingError::Domain { z: z_end });
        }
        let mass = mu.integral(t_start, t_end)?;
        self.backward_by_mass(mass, z_end)
    }

    /// Same as [`backward_damp`](Self::backward_damp) with the damping mass
    /// `∫μ` already computed.
    pub fn backward_by_mass(&self, mass: f64, z_end: f64) -> Result<f64, DampingError> {
        if !(z_end >= 0.0) {
            return Err(DampingError::Domain { z: z_end });
        }
        if z_end == 0.0 || mass == 0.0 {
            return Ok(z_end);
        }
        match *self {
            DampingShape::None => Ok(z_end),
            DampingShape::Monomial {
                degree: 1,
                coefficient,
            } => Ok(z_end * (coefficient * mass).exp()),
            DampingShape::Monomial {
                degree,
                coefficient,
            } => {
                // G̃(z) = -z^{1-n} / (C(n-1)); rearranged to avoid the division
                // by C(n-1) and back.
                let k = degree as f64 - 1.0;
                let w = z_end.powf(-k) - coefficient * k * mass;
                if w > 0.0 && w.is_finite() {
                    Ok(w.powf(-1.0 / k))
                } else {
                    let y = -z_end.powf(-k) / (coefficient * k) + mass;
                    Err(DampingError::Infeasible { mass, z_end, y })
                }
            }
        }
    }

    /// Downstream value at `t_end` reached from `z_start` at `t_start`:
    /// `G̃⁻¹(G̃(z_start) - ∫_{t_start}^{t_end} μ)`.
    pub fn forward_damp(
        &self,
        mu: &TimeFunction,
        t_start: f64,
        t_end: f64,
        z_start: f64,
    ) -> Result<f64, DampingError> {
        if !(z_start >= 0.0) {
            return Err(DampingError::Domain { z: z_start });
        }
        let mass = mu.integral(t_start, t_end)?;
        self.forward_by_mass(mass, z_start)
    }

    pub fn forward_by_mass(&self, mass: f64, z_start: f64) -> Result<f64, DampingError> {
        if !(z_start >= 0.0) {
            return Err(DampingError::Domain { z: z_start });
        }
        if z_start == 0.0 || mass == 0.0 {
            return Ok(z_start);
        }
        Ok(match *self {
            DampingShape::None => z_start,
            DampingShape::Monomial {
                degree: 1,
                coefficient,
            } => z_start * (-coefficient * mass).exp(),
            DampingShape::Monomial {
                degree,
                coefficient,
            } => {
                let k = degree as f64 - 1.0;
                (z_start.powf(-k) + coefficient * k * mass).powf(-1.0 / k)
            }
        })
    }
}

/// Config form of a damping shape; the coefficient may be left out for the
/// reference degrees 1 to 4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DampingSpec {
    None,
    Monomial {
        degree: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        coefficient: Option<f64>,
    },
}

impl DampingSpec {
    pub fn resolve(&self) -> Result<DampingShape, DampingError> {
        match *self {
            DampingSpec::None => Ok(DampingShape::None),
            DampingSpec::Monomial {
                degree,
                coefficient: Some(c),
            } => DampingShape::monomial(degree, c),
            DampingSpec::Monomial {
                degree,
                coefficient: None,
            } => DampingShape::reference(degree),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(n: u32) -> DampingShape {
        DampingShape::reference(n).unwrap()
    }

    #[test]
    fn g_hat_reference_values() {
        assert!((shape(2).g_hat(0.1).unwrap() - 0.15).abs() < 1e-15);
        assert!((shape(4).g_hat(0.1).unwrap() - 0.25).abs() < 1e-15);
        for n in 1..=4 {
            assert_eq!(shape(n).g_hat(0.0).unwrap(), 0.0);
        }
        assert_eq!(DampingShape::None.g_hat(0.3).unwrap(), 0.0);
        assert!(matches!(
            shape(1).g_hat(-0.1),
            Err(DampingError::Domain { .. })
        ));
    }

    #[test]
    fn g_tilde_closed_forms() {
        let lin = shape(1);
        assert!((lin.g_tilde_inv(lin.g_tilde(0.5).unwrap()).unwrap() - 0.5).abs() < 1e-15);
        let quad = shape(2);
        assert!((quad.g_tilde(0.05).unwrap() + 4.0 / 3.0).abs() < 1e-14);
        assert!(matches!(
            quad.g_tilde_inv(0.3),
            Err(DampingError::Range { .. })
        ));
        assert!(matches!(
            DampingShape::None.g_tilde(0.3),
            Err(DampingError::NoAntiderivative)
        ));
    }

    #[test]
    fn g_tilde_matches_quadrature_of_reciprocal() {
        // G̃(b) - G̃(a) = ∫_a^b 1/(15 z²) dz, composite Simpson.
        let quad = shape(2);
        let (a, b) = (0.05, 0.2);
        let n = 4000;
        let h = (b - a) / n as f64;
        let f = |z: f64| 1.0 / (15.0 * z * z);
        let mut acc = f(a) + f(b);
        for k in 1..n {
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
        }
        let simpson = acc * h / 3.0;
        let closed = quad.g_tilde(b).unwrap() - quad.g_tilde(a).unwrap();
        assert!((simpson - closed).abs() < 1e-10);
    }

    #[test]
    fn backward_examples() {
        let one = TimeFunction::constant(1.0);
        let zero = TimeFunction::constant(0.0);
        for n in 1..=4 {
            assert_eq!(shape(n).backward_damp(&zero, 0.0, 1.0, 0.07).unwrap(), 0.07);
        }
        let z = shape(1).backward_damp(&one, 0.0, 1.0, 0.1).unwrap();
        assert!((z - 0.1 * std::f64::consts::E).abs() < 1e-15);
        let z = shape(2).backward_damp(&one, 0.0, 1.0, 0.05).unwrap();
        assert!((z - 0.2).abs() < 1e-14);
        assert!(matches!(
            shape(2).backward_damp(&one, 0.0, 1.0, 0.1),
            Err(DampingError::Infeasible { .. })
        ));
    }

    #[test]
    fn forward_examples() {
        let one = TimeFunction::constant(1.0);
        for n in 1..=4 {
            assert_eq!(shape(n).forward_damp(&one, 0.0, 1.0, 0.0).unwrap(), 0.0);
        }
        let z = shape(1).forward_damp(&one, 0.0, 1.0, 0.271828).unwrap();
        assert!((z - 0.271828 / std::f64::consts::E).abs() < 1e-15);
        assert!((z - 0.1).abs() < 1e-6);
    }

    #[test]
    fn spec_resolution_fills_reference_coefficients() {
        let spec = DampingSpec::Monomial {
            degree: 3,
            coefficient: None,
        };
        assert_eq!(spec.resolve().unwrap(), shape(3));
        let spec = DampingSpec::Monomial {
            degree: 7,
            coefficient: None,
        };
        assert!(spec.resolve().is_err());
        let spec = DampingSpec::Monomial {
            degree: 2,
            coefficient: Some(-1.0),
        };
        assert!(spec.resolve().is_err());
    }
}
