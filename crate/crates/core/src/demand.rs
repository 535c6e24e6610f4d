//! Jacobi demand processes
//!
//! ```text
//! dD = κ(θ(t) - D) dt + σ √(D(1-D)) dW,   D(t0) = d0,
//! ```
//!
//! simulated with a truncated Euler–Maruyama scheme, together with the
//! conditional mean `m(t) = E[D_t | D_s = d]`, which solves
//! `m' = κ(θ - m)` and is available in closed form for sinusoidal `θ`.
//!
//! Normal variates come from `rand_distr::StandardNormal` (ziggurat method)
//! drawn from a ChaCha8 stream, see [`crate::rng`].

use crate::timefuncs::TimeFunction;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DemandError {
    #[error("invalid demand parameters for node {node}: {reason}")]
    InvalidSpec { node: String, reason: String },
    #[error("invalid time grid: {0}")]
    Grid(String),
    #[error("conditional mean requested at t = {t} before conditioning time {t_cond}")]
    TimeOrder { t_cond: f64, t: f64 },
    #[error("conditioning value {d} outside [0, 1]")]
    ConditionRange { d: f64 },
    #[error("time {t} is not a point of the demand grid")]
    OffGrid { t: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JacobiDemandSpec {
    pub node: String,
    pub kappa: f64,
    pub theta: TimeFunction,
    pub sigma: f64,
    pub d0: f64,
}

impl JacobiDemandSpec {
    /// Checks the parameter invariants, with the range of `θ` checked on
    /// `[t0, t_end]` by amplitude bound or, failing that, by sampling.
    pub fn validate(&self, t0: f64, t_end: f64) -> Result<(), DemandError> {
        let fail = |reason: String| {
            Err(DemandError::InvalidSpec {
                node: self.node.clone(),
                reason,
            })
        };
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return fail(format!("kappa must be positive, got {}", self.kappa));
        }
        if !(self.sigma >= 0.0) || !self.sigma.is_finite() {
            return fail(format!("sigma must be non-negative, got {}", self.sigma));
        }
        if !(0.0..=1.0).contains(&self.d0) {
            return fail(format!("d0 must lie in [0, 1], got {}", self.d0));
        }
        if !self.theta.is_finite() {
            return fail("theta has non-finite coefficients".into());
        }
        let (lo, hi) = (self.theta.lower_bound(), self.theta.upper_bound());
        if lo >= 0.0 && hi <= 1.0 {
            return Ok(());
        }
        let samples = 2000;
        let smin = self.theta.sampled_min(t0, t_end, samples);
        let smax = self.theta.sampled_max(t0, t_end, samples);
        if smin < 0.0 || smax > 1.0 {
            return fail(format!(
                "theta leaves [0, 1] on [{t0}, {t_end}] (sampled range [{smin}, {smax}])"
            ));
        }
        Ok(())
    }

    /// `E[D_t | D_{t_cond} = d_cond]`.
    ///
    /// For `θ(s) = a + Σ b_k sin(ω_k s + φ_k)` and `Δ = t - t_cond`:
    ///
    /// ```text
    /// m(t) = d e^{-κΔ} + a (1 - e^{-κΔ})
    ///      + Σ κ b_k / (κ² + ω_k²) · [ψ_k(t) - e^{-κΔ} ψ_k(t_cond)],
    /// ψ_k(s) = κ sin(ω_k s + φ_k) - ω_k cos(ω_k s + φ_k).
    /// ```
    pub fn conditional_mean(&self, t_cond: f64, d_cond: f64, t: f64) -> Result<f64, DemandError> {
        if t < t_cond {
            return Err(DemandError::TimeOrder { t_cond, t });
        }
        if !(0.0..=1.0).contains(&d_cond) {
            return Err(DemandError::ConditionRange { d: d_cond });
        }
        Ok(self.conditional_mean_unchecked(t_cond, d_cond, t))
    }

    pub(crate) fn conditional_mean_unchecked(&self, t_cond: f64, d_cond: f64, t: f64) -> f64 {
        let k = self.kappa;
        let decay = (-k * (t - t_cond)).exp();
        let mut m = d_cond * decay + self.theta.constant * (1.0 - decay);
        for s in &self.theta.terms {
            let w = s.angular_factor * std::f64::consts::PI;
            let psi = |x: f64| {
                let arg = w * x + s.phase;
                k * arg.sin() - w * arg.cos()
            };
            m += k * s.amplitude / (k * k + w * w) * (psi(t) - decay * psi(t_cond));
        }
        m
    }

    /// One truncated Euler–Maruyama path on the uniform grid `t0 + j·dt`.
    pub fn simulate(
        &self,
        t0: f64,
        t_end: f64,
        dt: f64,
        seed: u64,
    ) -> Result<DemandPath, DemandError> {
        let mut rng = crate::rng::stream(seed);
        self.simulate_with(t0, t_end, dt, &mut rng)
    }

    pub fn simulate_with<R: Rng + ?Sized>(
        &self,
        t0: f64,
        t_end: f64,
        dt: f64,
        rng: &mut R,
    ) -> Result<DemandPath, DemandError> {
        let steps = grid_steps(t0, t_end, dt)?;
        let sqrt_dt = dt.sqrt();
        let mut values = Vec::with_capacity(steps + 1);
        let mut d = self.d0;
        values.push(d);
        for j in 0..steps {
            let t = t0 + j as f64 * dt;
            let x: f64 = rng.sample(StandardNormal);
            let next = d
                + dt * self.kappa * (self.theta.eval(t) - d)
                + self.sigma * sqrt_dt * (d * (1.0 - d)).sqrt() * x;
            d = truncate_unit(next);
            values.push(d);
        }
        Ok(DemandPath { t0, dt, values })
    }
}

/// The three-case truncation into `[0, 1]`.
#[inline]
pub fn truncate_unit(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Number of steps of size `dt` covering `[t0, t_end]`; the interval length
/// must be an integer multiple of `dt` up to a relative 1e-9.
pub fn grid_steps(t0: f64, t_end: f64, dt: f64) -> Result<usize, DemandError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(DemandError::Grid(format!(
            "step must be positive, got {dt}"
        )));
    }
    if !(t_end > t0) {
        return Err(DemandError::Grid(format!(
            "horizon end {t_end} must exceed start {t0}"
        )));
    }
    let ratio = (t_end - t0) / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
        return Err(DemandError::Grid(format!(
            "step {dt} does not divide the horizon [{t0}, {t_end}]"
        )));
    }
    Ok(steps as usize)
}

/// Grid index of `t` on `t0 + j·dt`, if `t` is a grid point.
pub fn grid_index(t0: f64, dt: f64, t: f64) -> Option<usize> {
    let r = (t - t0) / dt;
    let j = r.round();
    if j < 0.0 || (r - j).abs() > 1e-9 * r.abs().max(1.0) {
        None
    } else {
        Some(j as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandPath {
    pub t0: f64,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl DemandPath {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, j: usize) -> f64 {
        self.t0 + j as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.values.len()).map(|j| self.time(j)).collect()
    }

    /// Value at a grid time.
    pub fn value_at(&self, t: f64) -> Result<f64, DemandError> {
        grid_index(self.t0, self.dt, t)
            .and_then(|j| self.values.get(j).copied())
            .ok_or(DemandError::OffGrid { t })
    }
}
