//! Backward computation of the optimal inflow.
//!
//! The optimal supply at a demand node is the conditional mean of its demand
//! given the latest update. Walking a characteristic backwards from the demand
//! node to the source turns that target into an inflow: on each arc the
//! density is carried back through the exact damping ODE solution, and at a
//! junction the required exit flux of the ingoing arc is the sum of the
//! required entry fluxes of its outgoing arcs.

use crate::damping::DampingError;
use crate::demand::{DemandError, JacobiDemandSpec};
use crate::network::Network;
use crate::timefuncs::TimeFnError;
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error(
        "no finite inflow can deliver the target through arc {arc} entered at t = {t_enter}: \
         damping mass {mass} blows up the backward solution from z = {z_end}"
    )]
    Infeasible {
        arc: String,
        t_enter: f64,
        mass: f64,
        z_end: f64,
    },
    #[error("negative target {value} for demand node {node} at t = {t}")]
    NegativeTarget { node: String, t: f64, value: f64 },
    #[error("all required fluxes out of junction {junction} vanish at t = {t}; split undefined")]
    UndefinedSplit { junction: String, t: f64 },
    #[error("invalid information policy: {0}")]
    Policy(String),
    #[error(transparent)]
    Time(#[from] TimeFnError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Damping(#[from] DampingError),
    #[error("at injection time {t_in}: {source}")]
    AtInjection {
        t_in: f64,
        #[source]
        source: Box<ControlError>,
    },
}

impl ControlError {
    /// Whether the root cause is a backward blow-up of the damping ODE.
    pub fn is_infeasible(&self) -> bool {
        match self {
            ControlError::Infeasible { .. } => true,
            ControlError::AtInjection { source, .. } => source.is_infeasible(),
            _ => false,
        }
    }
}

/// Expected demand per demand slot, the quantity the supply has to track.
pub trait DemandTargets {
    fn expected(&self, slot: usize, t: f64) -> Result<f64, ControlError>;
}

impl<F> DemandTargets for F
where
    F: Fn(usize, f64) -> f64,
{
    fn expected(&self, slot: usize, t: f64) -> Result<f64, ControlError> {
        Ok(self(slot, t))
    }
}

/// Conditional means given the demand observed at one update time.
#[derive(Debug, Clone, Copy)]
pub struct ConditionedTargets<'a> {
    pub specs: &'a [JacobiDemandSpec],
    pub t_cond: f64,
    pub observed: &'a [f64],
}

impl DemandTargets for ConditionedTargets<'_> {
    fn expected(&self, slot: usize, t: f64) -> Result<f64, ControlError> {
        Ok(self.specs[slot].conditional_mean(self.t_cond, self.observed[slot], t)?)
    }
}

/// Times at which a unit injected at `t_in` reaches the head of each arc of
/// `path`.
pub fn arrival_times(net: &Network, path: &[usize], t_in: f64) -> Result<Vec<f64>, ControlError> {
    let mut t = t_in;
    path.iter()
        .map(|&k| {
            let a = net.arc(k);
            t = a.velocity.advance_by_integral(t, a.length)?;
            Ok(t)
        })
        .collect()
}

/// Injection time at the source of the characteristic that reaches `node`
/// at time `t`.
pub fn injection_time(net: &Network, node: usize, t: f64) -> Result<f64, ControlError> {
    let mut s = t;
    for &k in net.path_to(node).iter().rev() {
        let a = net.arc(k);
        s = a.velocity.retreat_by_integral(s, a.length)?;
    }
    Ok(s)
}

/// Flux that has to enter `arc` at `t_enter` so that every demand node
/// downstream receives its target.
pub fn required_flux_into_arc(
    net: &Network,
    arc: usize,
    t_enter: f64,
    targets: &dyn DemandTargets,
) -> Result<f64, ControlError> {
    let a = net.arc(arc);
    Ok(a.velocity.eval(t_enter) * required_density(net, arc, 0.0, t_enter, targets)?)
}

/// Density required at position `x` of `arc` at time `t`.
pub fn required_density(
    net: &Network,
    arc: usize,
    x: f64,
    t: f64,
    targets: &dyn DemandTargets,
) -> Result<f64, ControlError> {
    let a = net.arc(arc);
    let remaining = (a.length - x).max(0.0);
    let t_exit = a.velocity.advance_by_integral(t, remaining)?;
    let f_exit = required_flux_at_node(net, net.head(arc), t_exit, targets)?;
    let z_exit = f_exit / a.velocity.eval(t_exit);
    let mass = a.damping_factor.integral(t, t_exit)?;
    a.damping
        .backward_by_mass(mass, z_exit)
        .map_err(|e| match e {
            DampingError::Infeasible { mass, z_end, .. } => ControlError::Infeasible {
                arc: a.id.clone(),
                t_enter: t,
                mass,
                z_end,
            },
            other => other.into(),
        })
}

/// Flux that has to arrive at `node` at time `t`.
pub fn required_flux_at_node(
    net: &Network,
    node: usize,
    t: f64,
    targets: &dyn DemandTargets,
) -> Result<f64, ControlError> {
    if net.is_demand(node) {
        let slot = net.demand_slot(node).expect("demand node has a slot");
        let value = targets.expected(slot, t)?;
        if !(value >= 0.0) {
            return Err(ControlError::NegativeTarget {
                node: net.node(node).id.clone(),
                t,
                value,
            });
        }
        return Ok(value);
    }
    net.out_arcs(node)
        .iter()
        .map(|&k| required_flux_into_arc(net, k, t, targets))
        .sum()
}

/// Shares of the flux arriving at `junction` at time `t`, proportional to
/// the flux each outgoing arc requires. The shares are normalised by their
/// own sum, so they add up to one.
pub fn distribution_params(
    net: &Network,
    junction: usize,
    t: f64,
    targets: &dyn DemandTargets,
) -> Result<Vec<(usize, f64)>, ControlError> {
    let outs = net.out_arcs(junction);
    let required: Vec<f64> = outs
        .iter()
        .map(|&k| required_flux_into_arc(net, k, t, targets))
        .collect::<Result<_, _>>()?;
    let total: f64 = required.iter().sum();
    if !(total > 0.0) {
        return Err(ControlError::UndefinedSplit {
            junction: net.node(junction).id.clone(),
            t,
        });
    }
    Ok(outs
        .iter()
        .zip(&required)
        .map(|(&k, &r)| (k, r / total))
        .collect())
}

/// Update times and the demand observed at each of them (one value per
/// demand slot).
#[derive(Debug, Clone, PartialEq)]
pub struct InformationPolicy {
    update_times: Vec<f64>,
    observations: Vec<Vec<f64>>,
}

impl InformationPolicy {
    pub fn new(update_times: Vec<f64>, observations: Vec<Vec<f64>>) -> Result<Self, ControlError> {
        if update_times.is_empty() {
            return Err(ControlError::Policy(
                "at least one update time required".into(),
            ));
        }
        if update_times.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(ControlError::Policy(
                "update times must be strictly increasing".into(),
            ));
        }
        if observations.len() != update_times.len() {
            return Err(ControlError::Policy(format!(
                "{} update times but {} observation sets",
                update_times.len(),
                observations.len()
            )));
        }
        let width = observations[0].len();
        if observations.iter().any(|o| o.len() != width) {
            return Err(ControlError::Policy(
                "observation sets differ in length".into(),
            ));
        }
        if observations
            .iter()
            .flatten()
            .any(|d| !(0.0..=1.0).contains(d))
        {
            return Err(ControlError::Policy(
                "observations must lie in [0, 1]".into(),
            ));
        }
        Ok(Self {
            update_times,
            observations,
        })
    }

    /// Single update at `t0` with the initial demands; no information
    /// arrives later.
    pub fn single(t0: f64, initial: Vec<f64>) -> Result<Self, ControlError> {
        Self::new(vec![t0], vec![initial])
    }

    pub fn update_times(&self) -> &[f64] {
        &self.update_times
    }

    pub fn observations(&self, window: usize) -> &[f64] {
        &self.observations[window]
    }

    pub fn window_count(&self) -> usize {
        self.update_times.len()
    }

    /// Index of the latest update at or before `t`; times before the first
    /// update fall in window 0.
    pub fn window_for(&self, t: f64) -> usize {
        self.update_times
            .partition_point(|&u| u <= t)
            .saturating_sub(1)
    }

    pub fn targets<'a>(
        &'a self,
        window: usize,
        specs: &'a [JacobiDemandSpec],
    ) -> ConditionedTargets<'a> {
        ConditionedTargets {
            specs,
            t_cond: self.update_times[window],
            observed: &self.observations[window],
        }
    }
}

/// Optimal inflow sampled on an injection grid.
#[derive(Debug, Clone, PartialEq)]
pub struct InflowProfile {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Update window whose information each value uses.
    pub windows: Vec<usize>,
}

impl InflowProfile {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest jump between consecutive grid values.
    pub fn max_jump(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max)
    }
}

/// `u(t_in)` on `grid`, each value using the latest update at or before
/// `t_in`.
pub fn optimal_inflow_profile(
    net: &Network,
    specs: &[JacobiDemandSpec],
    policy: &InformationPolicy,
    grid: &[f64],
) -> Result<InflowProfile, ControlError> {
    check_slots(net, specs, policy)?;
    let root = net.root_arc();
    let mut values = Vec::with_capacity(grid.len());
    let mut windows = Vec::with_capacity(grid.len());
    for &t_in in grid {
        let w = policy.window_for(t_in);
        let targets = policy.targets(w, specs);
        let u = required_flux_into_arc(net, root, t_in, &targets).map_err(|e| {
            ControlError::AtInjection {
                t_in,
                source: Box::new(e),
            }
        })?;
        values.push(u);
        windows.push(w);
    }
    Ok(InflowProfile {
        times: grid.to_vec(),
        values,
        windows,
    })
}

fn check_slots(
    net: &Network,
    specs: &[JacobiDemandSpec],
    policy: &InformationPolicy,
) -> Result<(), ControlError> {
    let n = net.demand_nodes().len();
    if specs.len() != n || policy.observations(0).len() != n {
        return Err(ControlError::Policy(format!(
            "network has {n} demand nodes but {} demand specs and {} observations per update",
            specs.len(),
            policy.observations(0).len()
        )));
    }
    Ok(())
}

/// Initial densities along every arc obtained from backward characteristics
/// of `targets` at time `t0`. Cell `l` of an arc with `cells` cells holds the
/// density at position `(l + 1)·length/cells`.
pub fn warm_start(
    net: &Network,
    targets: &dyn DemandTargets,
    t0: f64,
    cells: &[usize],
) -> Result<Vec<Vec<f64>>, ControlError> {
    (0..net.arcs().len())
        .map(|k| {
            let n = cells[k];
            let dx = net.arc(k).length / n as f64;
            (0..n)
                .map(|l| required_density(net, k, (l + 1) as f64 * dx, t0, targets))
                .collect()
        })
        .collect()
}

/// A junction split that falls back to equal shares when every outgoing
/// requirement vanishes.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitWarning {
    pub junction: String,
    pub t: f64,
}

/// Distribution parameters for a running simulation: the flux reaching a
/// junction at time `t` is split according to the requirements computed
/// with the information available when that flux was injected.
pub struct SplitRule<'a> {
    net: &'a Network,
    specs: &'a [JacobiDemandSpec],
    policy: &'a InformationPolicy,
    warnings: Mutex<Vec<SplitWarning>>,
}

impl<'a> SplitRule<'a> {
    pub fn new(
        net: &'a Network,
        specs: &'a [JacobiDemandSpec],
        policy: &'a InformationPolicy,
    ) -> Self {
        Self {
            net,
            specs,
            policy,
            warnings: Mutex::new(Vec::new()),
        }
    }

    pub fn shares(&self, junction: usize, t: f64) -> Result<Vec<(usize, f64)>, ControlError> {
        let t_in = injection_time(self.net, junction, t)?;
        let targets = self
            .policy
            .targets(self.policy.window_for(t_in), self.specs);
        match distribution_params(self.net, junction, t, &targets) {
            Err(ControlError::UndefinedSplit { junction: id, t }) => {
                self.warnings
                    .lock()
                    .expect("warning log poisoned")
                    .push(SplitWarning { junction: id, t });
                let outs = self.net.out_arcs(junction);
                let share = 1.0 / outs.len() as f64;
                Ok(outs.iter().map(|&k| (k, share)).collect())
            }
            other => other,
        }
    }

    pub fn warnings(&self) -> Vec<SplitWarning> {
        self.warnings.lock().expect("warning log poisoned").clone()
    }
}

impl crate::pde::SplitProvider for SplitRule<'_> {
    fn share(&self, junction: usize, arc: usize, t: f64) -> Result<f64, ControlError> {
        self.shares(junction, t)?
            .into_iter()
            .find(|&(k, _)| k == arc)
            .map(|(_, a)| a)
            .ok_or_else(|| {
                ControlError::Policy(format!(
                    "arc {} does not leave junction {}",
                    self.net.arc(arc).id,
                    self.net.node(junction).id
                ))
            })
    }
}
