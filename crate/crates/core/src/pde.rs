//! Forward network simulator.
//!
//! Each arc carries `z_t + (λ(t) z)_x + μ(t) ĝ(z) = 0` on a uniform grid of
//! cell width `dx`. Time steps are chosen per arc so that the CFL number is
//! exactly one, `Δt_j = dx / λ(t_j)`, which turns the upwind transport update
//! into an exact shift by one cell. Damping is applied afterwards as an
//! explicit Euler step with `μ` evaluated at the new time.
//!
//! Arcs are processed parent before child. The flux leaving a parent arc is
//! recorded on the parent's time grid, interpolated linearly onto the child's
//! grid and multiplied by the junction's distribution parameter.

use crate::control::{ControlError, InflowProfile};
use crate::network::{ArcSpec, Network};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("negative boundary flux {flux} on arc {arc} at t = {t}")]
    NegativeBoundary { arc: String, t: f64, flux: f64 },
    #[error("damping step produced negative density {value} on arc {arc}, cell {cell}, t = {t}")]
    Negativity {
        arc: String,
        t: f64,
        cell: usize,
        value: f64,
    },
    #[error("coupling into arc {arc} at t = {t}: {reason}")]
    Coupling { arc: String, t: f64, reason: String },
    #[error("grid error: {0}")]
    Grid(String),
    #[error("initial data: {0}")]
    InitialData(String),
    #[error(transparent)]
    Split(#[from] ControlError),
}

/// Source of distribution parameters `α(junction, outgoing arc, t)`.
pub trait SplitProvider {
    fn share(&self, junction: usize, arc: usize, t: f64) -> Result<f64, ControlError>;
}

impl<F> SplitProvider for F
where
    F: Fn(usize, usize, f64) -> f64,
{
    fn share(&self, junction: usize, arc: usize, t: f64) -> Result<f64, ControlError> {
        Ok(self(junction, arc, t))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialMode {
    /// Arc states built from backward characteristics of the first targets.
    #[default]
    Warm,
    Zero,
}

/// Number of cells of width `dx` on an arc of `length`.
pub fn cell_count(length: f64, dx: f64) -> Result<usize, PdeError> {
    if !(dx > 0.0) || !dx.is_finite() {
        return Err(PdeError::Grid(format!(
            "cell width must be positive, got {dx}"
        )));
    }
    let ratio = length / dx;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio.max(1.0) {
        return Err(PdeError::Grid(format!(
            "cell width {dx} does not divide arc length {length}"
        )));
    }
    Ok(n as usize)
}

/// CFL-one time grid of an arc: `t_{j+1} = t_j + dx/λ(t_j)`, from `t0` until
/// the first grid time at or beyond `t_end`.
pub fn arc_time_grid(arc: &ArcSpec, dx: f64, t0: f64, t_end: f64) -> Result<Vec<f64>, PdeError> {
    let mut times = vec![t0];
    let mut t = t0;
    while t < t_end {
        let lam = arc.velocity.eval(t);
        if !(lam > 0.0) {
            return Err(PdeError::Grid(format!(
                "velocity on arc {} is {lam} at t = {t}",
                arc.id
            )));
        }
        t += dx / lam;
        times.push(t);
        if times.len() > 50_000_000 {
            return Err(PdeError::Grid(format!(
                "arc {} needs too many steps",
                arc.id
            )));
        }
    }
    Ok(times)
}

/// Upwind update for a right-moving wave, `z_l ← z_l - ν (z_l - z_{l-1})`,
/// with `ghost` as `z_{-1}`. For `ν = 1` this is an exact shift.
pub fn upwind_transport(z: &mut [f64], ghost: f64, courant: f64) {
    let n = z.len();
    if n == 0 {
        return;
    }
    if courant == 1.0 {
        z.copy_within(0..n - 1, 1);
        z[0] = ghost;
        return;
    }
    for l in (1..n).rev() {
        z[l] -= courant * (z[l] - z[l - 1]);
    }
    z[0] -= courant * (z[0] - ghost);
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArcState {
    pub z: Vec<f64>,
}

impl ArcState {
    pub fn zeros(cells: usize) -> Self {
        Self {
            z: vec![0.0; cells],
        }
    }

    /// Flux leaving the arc at time `t`.
    pub fn outflow(&self, arc: &ArcSpec, t: f64) -> f64 {
        arc.velocity.eval(t) * self.z.last().copied().unwrap_or(0.0)
    }
}

/// Advances one CFL-one step from `t`, feeding `boundary_flux` in at the
/// inlet; returns the new time.
pub fn step_arc(
    state: &mut ArcState,
    arc: &ArcSpec,
    dx: f64,
    t: f64,
    boundary_flux: f64,
) -> Result<f64, PdeError> {
    if !(boundary_flux >= 0.0) {
        return Err(PdeError::NegativeBoundary {
            arc: arc.id.clone(),
            t,
            flux: boundary_flux,
        });
    }
    let lam = arc.velocity.eval(t);
    let dt = dx / lam;
    let t_next = t + dt;
    upwind_transport(&mut state.z, boundary_flux / lam, 1.0);

    if !arc.damping.is_none() {
        let rate = dt * arc.damping_factor.eval(t_next);
        if rate != 0.0 {
            for (cell, z) in state.z.iter_mut().enumerate() {
                let next = *z - rate * arc.damping.g_hat_unchecked(*z);
                if next < 0.0 {
                    return Err(PdeError::Negativity {
                        arc: arc.id.clone(),
                        t: t_next,
                        cell,
                        value: next,
                    });
                }
                *z = next;
            }
        }
    }
    Ok(t_next)
}

/// A sampled time series with linear interpolation between samples.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Series {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl Series {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Self {
        debug_assert_eq!(times.len(), values.len());
        Self { times, values }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Linear interpolation; exact at sample times, `None` outside the
    /// sampled range (up to a 1e-12 slack).
    pub fn interp(&self, t: f64) -> Option<f64> {
        let (first, last) = (*self.times.first()?, *self.times.last()?);
        let slack = 1e-12 * (1.0 + t.abs());
        if t < first - slack || t > last + slack {
            return None;
        }
        let i = self.times.partition_point(|&s| s < t);
        if i < self.times.len() && self.times[i] == t {
            return Some(self.values[i]);
        }
        if i == 0 {
            return Some(self.values[0]);
        }
        if i == self.times.len() {
            return Some(self.values[i - 1]);
        }
        let (t0, t1) = (self.times[i - 1], self.times[i]);
        let w = (t - t0) / (t1 - t0);
        Some(self.values[i - 1] + w * (self.values[i] - self.values[i - 1]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArcRecord {
    /// Arc time grid `t_0 < t_1 < …`.
    pub times: Vec<f64>,
    /// Boundary flux fed in at `t_j` for the step to `t_{j+1}`.
    pub inflow: Vec<f64>,
    /// Outflow flux `λ(t_j) z_last(t_j)` for every grid time.
    pub outflow: Vec<f64>,
}

impl ArcRecord {
    pub fn outflow_series(&self) -> Series {
        Series::new(self.times.clone(), self.outflow.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaSeries {
    pub junction: usize,
    pub arc: usize,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Flux arriving at the junction, interpolated onto `times`.
    pub arriving: Vec<f64>,
}

/// Full space-time field of one arc.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub arc: usize,
    pub dx: f64,
    pub times: Vec<f64>,
    pub z: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SimOptions {
    pub record_field: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSimulation {
    pub dx: f64,
    pub arcs: Vec<ArcRecord>,
    pub alphas: Vec<AlphaSeries>,
    pub fields: Vec<FieldDump>,
}

impl NetworkSimulation {
    /// Supply (outflow of the leaf arc) at each demand slot.
    pub fn supplies(&self, net: &Network) -> Vec<Series> {
        net.demand_nodes()
            .iter()
            .map(|&d| {
                let arc = net.in_arc(d).expect("demand node has an ingoing arc");
                self.arcs[arc].outflow_series()
            })
            .collect()
    }
}

/// Simulates all arcs over `[t0, t_end]`.
///
/// `inflow` is sampled at the root arc's grid times (exactly, when the
/// profile was computed on that grid). `initial[k]` holds the cell values of
/// arc `k` at `t0`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_network(
    net: &Network,
    inflow: &InflowProfile,
    splits: &dyn SplitProvider,
    initial: &[Vec<f64>],
    t0: f64,
    t_end: f64,
    dx: f64,
    options: SimOptions,
) -> Result<NetworkSimulation, PdeError> {
    let n_arcs = net.arcs().len();
    if initial.len() != n_arcs {
        return Err(PdeError::InitialData(format!(
            "{} arcs but {} initial states",
            n_arcs,
            initial.len()
        )));
    }
    let inflow_series = Series::new(inflow.times.clone(), inflow.values.clone());
    let mut records: Vec<Option<ArcRecord>> = vec![None; n_arcs];
    let mut alphas = Vec::new();
    let mut fields = Vec::new();

    for &k in net.arc_order() {
        let arc = net.arc(k);
        let cells = cell_count(arc.length, dx)?;
        if initial[k].len() != cells || initial[k].iter().any(|z| !(*z >= 0.0)) {
            return Err(PdeError::InitialData(format!(
                "arc {} needs {cells} non-negative initial values",
                arc.id
            )));
        }
        let times = arc_time_grid(arc, dx, t0, t_end)?;
        let steps = times.len() - 1;

        let tail = net.tail(k);
        let boundary: Vec<f64> = match net.in_arc(tail) {
            None => times[..steps]
                .iter()
                .map(|&t| {
                    inflow_series.interp(t).ok_or_else(|| PdeError::Coupling {
                        arc: arc.id.clone(),
                        t,
                        reason: "inflow profile does not cover this time".into(),
                    })
                })
                .collect::<Result<_, _>>()?,
            Some(parent) => {
                let parent_rec = records[parent]
                    .as_ref()
                    .expect("parent arc simulated first");
                let parent_out = parent_rec.outflow_series();
                let mut values = Vec::with_capacity(steps);
                let mut shares = Vec::with_capacity(steps);
                let mut arriving = Vec::with_capacity(steps);
                for &t in &times[..steps] {
                    let f = parent_out.interp(t).ok_or_else(|| PdeError::Coupling {
                        arc: arc.id.clone(),
                        t,
                        reason: format!("no outflow of arc {} recorded", net.arc(parent).id),
                    })?;
                    let a = splits.share(tail, k, t)?;
                    if !(0.0..=1.0).contains(&a) {
                        return Err(PdeError::Coupling {
                            arc: arc.id.clone(),
                            t,
                            reason: format!("distribution parameter {a} outside [0, 1]"),
                        });
                    }
                    values.push(a * f);
                    shares.push(a);
                    arriving.push(f);
                }
                alphas.push(AlphaSeries {
                    junction: tail,
                    arc: k,
                    times: times[..steps].to_vec(),
                    values: shares,
                    arriving,
                });
                values
            }
        };

        let mut state = ArcState {
            z: initial[k].clone(),
        };
        let mut outflow = Vec::with_capacity(times.len());
        outflow.push(state.outflow(arc, times[0]));
        let mut field = options.record_field.then(|| vec![state.z.clone()]);
        for j in 0..steps {
            let t_next = step_arc(&mut state, arc, dx, times[j], boundary[j])?;
            debug_assert_eq!(t_next, times[j + 1]);
            outflow.push(state.outflow(arc, t_next));
            if let Some(f) = field.as_mut() {
                f.push(state.z.clone());
            }
        }
        if let Some(z) = field {
            fields.push(FieldDump {
                arc: k,
                dx,
                times: times.clone(),
                z,
            });
        }
        records[k] = Some(ArcRecord {
            times,
            inflow: boundary,
            outflow,
        });
    }

    Ok(NetworkSimulation {
        dx,
        arcs: records
            .into_iter()
            .map(|r| r.expect("every arc simulated"))
            .collect(),
        alphas,
        fields,
    })
}

/// Zero initial data for every arc.
pub fn zero_initial(net: &Network, dx: f64) -> Result<Vec<Vec<f64>>, PdeError> {
    net.arcs()
        .iter()
        .map(|a| cell_count(a.length, dx).map(|n| vec![0.0; n]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::damping::DampingShape;
    use crate::network::{NodeKind, NodeSpec, TreeNetwork};
    use crate::timefuncs::TimeFunction;

    fn c(v: f64) -> TimeFunction {
        TimeFunction::constant(v)
    }

    fn single_arc(speed: f64, mu: f64, shape: DampingShape) -> ArcSpec {
        ArcSpec::new("1", "s", "d", c(speed)).with_damping(c(mu), shape)
    }

    #[test]
    fn shift_is_exact() {
        let mut z = vec![1.0, 2.0, 3.0];
        upwind_transport(&mut z, 0.5, 1.0);
        assert_eq!(z, vec![0.5, 1.0, 2.0]);
    }

    #[test]
    fn partial_courant_upwind() {
        let mut z = vec![1.0, 1.0, 0.0];
        upwind_transport(&mut z, 1.0, 0.5);
        assert_eq!(z, vec![1.0, 1.0, 0.5]);
    }

    #[test]
    fn undamped_arc_delays_inflow_exactly() {
        let arc = single_arc(4.0, 0.0, DampingShape::None);
        let dx = 1.0 / 8.0;
        let mut st = ArcState::zeros(8);
        let mut t = 0.0;
        let inflow: Vec<f64> = (0..40).map(|j| (j as f64 * 0.37).sin().abs()).collect();
        let mut out = Vec::new();
        for &u in &inflow {
            t = step_arc(&mut st, &arc, dx, t, u).unwrap();
            out.push(st.outflow(&arc, t));
        }
        // Entering at step j, leaving after 8 shifts.
        for j in 0..32 {
            assert_eq!(out[j + 7], inflow[j]);
        }
    }

    #[test]
    fn reference_velocity_step_range() {
        let arc = single_arc(1.0, 0.0, DampingShape::None);
        let arc = ArcSpec {
            velocity: TimeFunction::sinusoid(14.0, 1.0, 2.0, 0.0),
            ..arc
        };
        let times = arc_time_grid(&arc, 1.0 / 200.0, 0.0, 2.5).unwrap();
        for w in times.windows(2) {
            let dt = w[1] - w[0];
            assert!((1.0 / (15.0 * 200.0) - 1e-15..=1.0 / (13.0 * 200.0) + 1e-15).contains(&dt));
            // CFL number is one by construction.
            let cfl = dt * arc.velocity.eval(w[0]) * 200.0;
            assert!((cfl - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_boundary_rejected() {
        let arc = single_arc(1.0, 0.0, DampingShape::None);
        let mut st = ArcState::zeros(4);
        assert!(matches!(
            step_arc(&mut st, &arc, 0.25, 0.0, -1.0),
            Err(PdeError::NegativeBoundary { .. })
        ));
    }

    #[test]
    fn linear_damping_steady_outflow_converges() {
        // Constant inflow flux F through a unit arc with z' = -z: steady
        // outflow F/e, approached at first order in dx.
        let mut errs = Vec::new();
        for cells in [100usize, 200, 400] {
            let dx = 1.0 / cells as f64;
            let arc = single_arc(1.0, 1.0, DampingShape::reference(1).unwrap());
            let mut st = ArcState::zeros(cells);
            let mut t = 0.0;
            for _ in 0..3 * cells {
                t = step_arc(&mut st, &arc, dx, t, 0.8).unwrap();
            }
            errs.push((st.outflow(&arc, t) - 0.8 / std::f64::consts::E).abs());
        }
        for w in errs.windows(2) {
            let ratio = w[1] / w[0];
            assert!((0.4..=0.6).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn cell_count_checks() {
        assert_eq!(cell_count(1.0, 1.0 / 200.0).unwrap(), 200);
        assert!(cell_count(1.0, 0.3).is_err());
        assert!(cell_count(1.0, 0.0).is_err());
    }

    #[test]
    fn series_interp() {
        let s = Series::new(vec![0.0, 1.0, 3.0], vec![0.0, 2.0, 0.0]);
        assert_eq!(s.interp(1.0), Some(2.0));
        assert_eq!(s.interp(0.5), Some(1.0));
        assert_eq!(s.interp(2.0), Some(1.0));
        assert_eq!(s.interp(3.5), None);
    }

    #[test]
    fn one_two_symmetric_split() {
        let shape = DampingShape::reference(1).unwrap();
        let net = TreeNetwork::new(
            vec![
                NodeSpec::new("v0", NodeKind::Source),
                NodeSpec::new("v1", NodeKind::Junction),
                NodeSpec::new("v2", NodeKind::Demand),
                NodeSpec::new("v3", NodeKind::Demand),
            ],
            vec![
                ArcSpec::new("1", "v0", "v1", c(2.0)).with_damping(c(0.5), shape),
                ArcSpec::new("2", "v1", "v2", c(2.0)).with_damping(c(0.5), shape),
                ArcSpec::new("3", "v1", "v3", c(2.0)).with_damping(c(0.5), shape),
            ],
        )
        .into_validated()
        .unwrap();
        let dx = 1.0 / 400.0;
        let grid = arc_time_grid(net.arc(0), dx, 0.0, 3.0).unwrap();
        let inflow = InflowProfile {
            values: vec![2.0 * 0.3; grid.len()],
            windows: vec![0; grid.len()],
            times: grid,
        };
        let half = |_: usize, _: usize, _: f64| 0.5;
        let init = zero_initial(&net, dx).unwrap();
        let sim = simulate_network(
            &net,
            &inflow,
            &half,
            &init,
            0.0,
            3.0,
            dx,
            SimOptions::default(),
        )
        .unwrap();
        // Two arcs of transit time 0.5 each: density attenuated by e^{-0.5·0.5} twice.
        let expect = 0.3 * (-0.5f64).exp();
        for s in sim.supplies(&net) {
            let last = *s.values.last().unwrap();
            assert!((last - expect).abs() < 2e-3, "{last} vs {expect}");
        }
        for a in &sim.alphas {
            for (v, f) in a.values.iter().zip(&a.arriving) {
                assert_eq!(v * f, 0.5 * f);
            }
        }
    }
}
