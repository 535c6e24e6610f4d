//! Scenario runner: single realizations, damping comparisons and Monte Carlo
//! ensembles.

use crate::control::{
    arrival_times, optimal_inflow_profile, warm_start, ControlError, InflowProfile,
    InformationPolicy, SplitRule,
};
use crate::damping::DampingShape;
use crate::demand::{grid_index, grid_steps, DemandError, DemandPath, JacobiDemandSpec};
use crate::network::Network;
use crate::pde::{
    arc_time_grid, cell_count, simulate_network, zero_initial, AlphaSeries, FieldDump, InitialMode,
    PdeError, Series, SimOptions,
};
use crate::rng::mix_seed;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error("variant {variant}, run {run}: {source}")]
    Control {
        variant: String,
        run: u64,
        #[source]
        source: ControlError,
    },
    #[error("variant {variant}, run {run}: {source}")]
    Pde {
        variant: String,
        run: u64,
        #[source]
        source: PdeError,
    },
    #[error("objective: {0}")]
    Objective(String),
}

impl ExperimentError {
    pub fn is_infeasible(&self) -> bool {
        match self {
            ExperimentError::Control { source, .. } => source.is_infeasible(),
            ExperimentError::Pde {
                source: PdeError::Split(e),
                ..
            } => e.is_infeasible(),
            _ => false,
        }
    }
}

/// A damping setting to run. `shape: None` keeps each arc's declared shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub label: String,
    pub shape: Option<DampingShape>,
}

impl Variant {
    pub fn declared() -> Self {
        Self {
            label: "declared".into(),
            shape: None,
        }
    }

    pub fn uniform(label: impl Into<String>, shape: DampingShape) -> Self {
        Self {
            label: label.into(),
            shape: Some(shape),
        }
    }

    /// No damping plus the four reference monomials.
    pub fn reference_set() -> Vec<Variant> {
        let mut v = vec![Variant::uniform("none", DampingShape::None)];
        for n in 1..=4 {
            v.push(Variant::uniform(
                format!("monomial{n}"),
                DampingShape::reference(n).expect("reference degree"),
            ));
        }
        v
    }
}

/// Fully resolved experiment inputs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub network: Network,
    /// Demand specifications in the network's demand-slot order.
    pub demands: Vec<JacobiDemandSpec>,
    pub t0: f64,
    pub t_end: f64,
    pub update_times: Vec<f64>,
    pub sde_dt: f64,
    pub pde_dx: f64,
    pub monte_carlo_runs: usize,
    pub master_seed: u64,
    pub variants: Vec<Variant>,
    pub initial: InitialMode,
    pub workers: Option<usize>,
}

impl Scenario {
    /// Checks the cross-field invariants: grids, update times and the demand
    /// slot assignment.
    pub fn check(&self) -> Result<(), ExperimentError> {
        let cfg = |m: String| Err(ExperimentError::Config(m));
        grid_steps(self.t0, self.t_end, self.sde_dt)?;
        for a in self.network.arcs() {
            cell_count(a.length, self.pde_dx)
                .map_err(|e| ExperimentError::Config(e.to_string()))?;
        }
        if self.monte_carlo_runs < 1 {
            return cfg("monte_carlo_runs must be at least 1".into());
        }
        if self.variants.is_empty() {
            return cfg("at least one damping variant required".into());
        }
        let slots = self.network.demand_nodes();
        if slots.len() != self.demands.len() {
            return cfg(format!(
                "{} demand nodes but {} demand specifications",
                slots.len(),
                self.demands.len()
            ));
        }
        for (&node, spec) in slots.iter().zip(&self.demands) {
            if self.network.node(node).id != spec.node {
                return cfg(format!(
                    "demand slot for node {} holds spec of {}",
                    self.network.node(node).id,
                    spec.node
                ));
            }
            spec.validate(self.t0, self.t_end)?;
        }
        let u = &self.update_times;
        if u.is_empty() {
            return cfg("at least one update time required".into());
        }
        if grid_index(self.t0, self.sde_dt, u[0]) != Some(0) {
            return cfg(format!("first update {} must equal t0 = {}", u[0], self.t0));
        }
        if u.windows(2).any(|w| !(w[0] < w[1])) {
            return cfg("update times must be strictly increasing".into());
        }
        for &t in u {
            if !(t < self.t_end) {
                return cfg(format!("update time {t} is not before the horizon end"));
            }
            if grid_index(self.t0, self.sde_dt, t).is_none() {
                return cfg(format!(
                    "update time {t} is not on the demand grid of step {}",
                    self.sde_dt
                ));
            }
        }
        Ok(())
    }

    pub fn variant_network(&self, variant: &Variant) -> Network {
        match variant.shape {
            Some(shape) => self.network.with_damping(shape),
            None => self.network.clone(),
        }
    }

    /// Injection grid: the CFL-one time grid of the root arc.
    pub fn injection_grid(&self) -> Result<Vec<f64>, PdeError> {
        arc_time_grid(
            self.network.arc(self.network.root_arc()),
            self.pde_dx,
            self.t0,
            self.t_end,
        )
    }

    pub fn demand_times(&self) -> Vec<f64> {
        let n = grid_steps(self.t0, self.t_end, self.sde_dt).unwrap_or(0);
        (0..=n).map(|j| self.t0 + j as f64 * self.sde_dt).collect()
    }

    pub fn run_seed(&self, run_index: u64) -> u64 {
        mix_seed(self.master_seed, run_index)
    }

    /// Demand paths of one run, one per slot.
    pub fn demand_paths(&self, run_index: u64) -> Result<Vec<DemandPath>, DemandError> {
        let seed = self.run_seed(run_index);
        self.demands
            .iter()
            .enumerate()
            .map(|(s, spec)| {
                spec.simulate(self.t0, self.t_end, self.sde_dt, mix_seed(seed, s as u64))
            })
            .collect()
    }

    /// Information policy built from the demand observed at each update.
    pub fn policy_for(&self, paths: &[DemandPath]) -> Result<InformationPolicy, ExperimentError> {
        let obs = self
            .update_times
            .iter()
            .map(|&t| {
                paths
                    .iter()
                    .map(|p| p.value_at(t))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        InformationPolicy::new(self.update_times.clone(), obs)
            .map_err(|e| ExperimentError::Config(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowObjective {
    pub update: usize,
    pub start: f64,
    pub end: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveBreakdown {
    pub total: f64,
    pub windows: Vec<WindowObjective>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantResult {
    pub label: String,
    pub inflow: InflowProfile,
    /// Supply per demand slot on the leaf arc's grid.
    pub supplies: Vec<Series>,
    /// Supply per demand slot interpolated onto the demand grid.
    pub supply_on_demand_grid: Vec<Vec<f64>>,
    pub alphas: Vec<AlphaSeries>,
    pub objective: Vec<ObjectiveBreakdown>,
    pub split_fallbacks: usize,
    /// Density fields, only when requested through [`SimOptions`].
    pub fields: Vec<FieldDump>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub run_index: u64,
    pub seed: u64,
    pub demand: Vec<DemandPath>,
    pub variants: Vec<VariantResult>,
}

/// One realization: demand paths, update-conditioned inflow and forward
/// simulation for every variant.
pub fn run_single(scenario: &Scenario, run_index: u64) -> Result<RunResult, ExperimentError> {
    run_single_with(scenario, run_index, SimOptions::default())
}

pub fn run_single_with(
    scenario: &Scenario,
    run_index: u64,
    options: SimOptions,
) -> Result<RunResult, ExperimentError> {
    let paths = scenario.demand_paths(run_index)?;
    let policy = scenario.policy_for(&paths)?;
    let grid = scenario
        .injection_grid()
        .map_err(|e| ExperimentError::Pde {
            variant: "-".into(),
            run: run_index,
            source: e,
        })?;
    let variants = scenario
        .variants
        .iter()
        .map(|v| run_variant(scenario, v, run_index, &paths, &policy, &grid, options))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(RunResult {
        run_index,
        seed: scenario.run_seed(run_index),
        demand: paths,
        variants,
    })
}

fn run_variant(
    scenario: &Scenario,
    variant: &Variant,
    run: u64,
    paths: &[DemandPath],
    policy: &InformationPolicy,
    grid: &[f64],
    options: SimOptions,
) -> Result<VariantResult, ExperimentError> {
    let control_err = |source| ExperimentError::Control {
        variant: variant.label.clone(),
        run,
        source,
    };
    let pde_err = |source| ExperimentError::Pde {
        variant: variant.label.clone(),
        run,
        source,
    };
    let net = scenario.variant_network(variant);
    let specs = &scenario.demands;
    let inflow = optimal_inflow_profile(&net, specs, policy, grid).map_err(control_err)?;

    let initial = match scenario.initial {
        InitialMode::Zero => zero_initial(&net, scenario.pde_dx).map_err(pde_err)?,
        InitialMode::Warm => {
            let cells = net
                .arcs()
                .iter()
                .map(|a| cell_count(a.length, scenario.pde_dx))
                .collect::<Result<Vec<_>, _>>()
                .map_err(pde_err)?;
            warm_start(&net, &policy.targets(0, specs), scenario.t0, &cells).map_err(control_err)?
        }
    };

    let rule = SplitRule::new(&net, specs, policy);
    let sim = simulate_network(
        &net,
        &inflow,
        &rule,
        &initial,
        scenario.t0,
        scenario.t_end,
        scenario.pde_dx,
        options,
    )
    .map_err(pde_err)?;

    let supplies = sim.supplies(&net);
    let demand_times = paths[0].times();
    let mut supply_on_demand_grid = Vec::with_capacity(supplies.len());
    let mut objective = Vec::with_capacity(supplies.len());
    for (slot, (supply, path)) in supplies.iter().zip(paths).enumerate() {
        let on_grid = interpolate_onto(supply, &demand_times)?;
        let edges = window_edges(scenario, &net, slot).map_err(control_err)?;
        objective.push(objective_from_samples(
            &demand_times,
            &path.values,
            &on_grid,
            &edges,
        )?);
        supply_on_demand_grid.push(on_grid);
    }

    Ok(VariantResult {
        label: variant.label.clone(),
        inflow,
        supplies,
        supply_on_demand_grid,
        alphas: sim.alphas,
        objective,
        split_fallbacks: rule.warnings().len(),
        fields: sim.fields,
    })
}

/// Window boundaries `t̃(v, t̂_j)` at a demand slot for updates `j ≥ 1`.
fn window_edges(scenario: &Scenario, net: &Network, slot: usize) -> Result<Vec<f64>, ControlError> {
    let path = &net.root_to_leaf_paths()[slot];
    scenario.update_times[1..]
        .iter()
        .map(|&u| Ok(*arrival_times(net, path, u)?.last().expect("non-empty path")))
        .collect()
}

fn interpolate_onto(series: &Series, times: &[f64]) -> Result<Vec<f64>, ExperimentError> {
    times
        .iter()
        .map(|&t| {
            series.interp(t).ok_or_else(|| {
                ExperimentError::Objective(format!("supply series does not cover t = {t}"))
            })
        })
        .collect()
}

/// Trapezoidal estimate of `∫ (demand - supply)²` over the demand grid, with
/// the supply interpolated linearly onto that grid. `edges` are the interior
/// boundaries between update windows; the result lists one entry per window.
pub fn objective_estimate(
    demand: &DemandPath,
    supply: &Series,
    edges: &[f64],
) -> Result<ObjectiveBreakdown, ExperimentError> {
    let times = demand.times();
    let on_grid = interpolate_onto(supply, &times)?;
    objective_from_samples(&times, &demand.values, &on_grid, edges)
}

fn objective_from_samples(
    times: &[f64],
    demand: &[f64],
    supply: &[f64],
    edges: &[f64],
) -> Result<ObjectiveBreakdown, ExperimentError> {
    if times.len() != demand.len() || times.len() != supply.len() || times.len() < 2 {
        return Err(ExperimentError::Objective(
            "mismatched sample lengths".into(),
        ));
    }
    let sq: Vec<f64> = demand
        .iter()
        .zip(supply)
        .map(|(d, s)| (d - s) * (d - s))
        .collect();
    let (first, last) = (times[0], *times.last().unwrap());
    let mut bounds = vec![first];
    bounds.extend(edges.iter().map(|&e| e.clamp(first, last)));
    bounds.push(last);
    let windows: Vec<WindowObjective> = bounds
        .windows(2)
        .enumerate()
        .map(|(j, w)| WindowObjective {
            update: j,
            start: w[0],
            end: w[1].max(w[0]),
            value: trapz_between(times, &sq, w[0], w[1].max(w[0])),
        })
        .collect();
    Ok(ObjectiveBreakdown {
        total: windows.iter().map(|w| w.value).sum(),
        windows,
    })
}

/// Integral of the piecewise-linear interpolant of `(times, values)` over
/// `[a, b]`.
fn trapz_between(times: &[f64], values: &[f64], a: f64, b: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let interp = |t: f64| -> f64 {
        let i = times.partition_point(|&s| s < t).clamp(1, times.len() - 1);
        let (t0, t1) = (times[i - 1], times[i]);
        values[i - 1] + (t - t0) / (t1 - t0) * (values[i] - values[i - 1])
    };
    let mut acc = 0.0;
    let mut prev_t = a;
    let mut prev_v = interp(a);
    let start = times.partition_point(|&s| s <= a);
    for i in start..times.len() {
        if times[i] >= b {
            break;
        }
        acc += 0.5 * (times[i] - prev_t) * (values[i] + prev_v);
        prev_t = times[i];
        prev_v = values[i];
    }
    acc + 0.5 * (b - prev_t) * (interp(b) + prev_v)
}

/// Running per-element mean and variance (Welford), mergeable in a fixed
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    pub fn new(len: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn push(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.mean.len(), "sample length mismatch");
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *m;
            *m += delta / n;
            *s += delta * (v - *m);
        }
    }

    /// Chan et al. pairwise combination.
    pub fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        for i in 0..self.mean.len() {
            let delta = other.mean[i] - self.mean[i];
            self.mean[i] += delta * nb / n;
            self.m2[i] += other.m2[i] + delta * delta * na * nb / n;
        }
        self.n += other.n;
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Standard error of the mean, `sqrt(s² / n)` with the unbiased sample
    /// variance; zero for fewer than two samples.
    pub fn std_error(&self) -> Vec<f64> {
        if self.n < 2 {
            return vec![0.0; self.mean.len()];
        }
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|&s| (s.max(0.0) / (n - 1.0) / n).sqrt())
            .collect()
    }

    pub fn summary(&self) -> MeanSe {
        MeanSe {
            mean: self.mean.clone(),
            se: self.std_error(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanSe {
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
}

/// Aggregates run results of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleAccumulator {
    demand: Vec<Moments>,
    variants: Vec<VariantMoments>,
    first_run_jumps: Option<(u64, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
struct VariantMoments {
    label: String,
    inflow_times: Vec<f64>,
    inflow: Moments,
    supply: Vec<Moments>,
    objective: Moments,
}

impl EnsembleAccumulator {
    pub fn new(scenario: &Scenario, inflow_times: &[f64]) -> Self {
        let n_t = scenario.demand_times().len();
        let slots = scenario.demands.len();
        Self {
            demand: (0..slots).map(|_| Moments::new(n_t)).collect(),
            variants: scenario
                .variants
                .iter()
                .map(|v| VariantMoments {
                    label: v.label.clone(),
                    inflow_times: inflow_times.to_vec(),
                    inflow: Moments::new(inflow_times.len()),
                    supply: (0..slots).map(|_| Moments::new(n_t)).collect(),
                    objective: Moments::new(slots),
                })
                .collect(),
            first_run_jumps: None,
        }
    }

    pub fn push(&mut self, run: &RunResult) {
        for (m, p) in self.demand.iter_mut().zip(&run.demand) {
            m.push(&p.values);
        }
        for (acc, v) in self.variants.iter_mut().zip(&run.variants) {
            acc.inflow.push(&v.inflow.values);
            for (m, s) in acc.supply.iter_mut().zip(&v.supply_on_demand_grid) {
                m.push(s);
            }
            let obj: Vec<f64> = v.objective.iter().map(|o| o.total).collect();
            acc.objective.push(&obj);
        }
        self.note_jumps(
            run.run_index,
            run.variants.iter().map(|v| v.inflow.max_jump()).collect(),
        );
    }

    fn note_jumps(&mut self, run: u64, jumps: Vec<f64>) {
        match &self.first_run_jumps {
            Some((r, _)) if *r <= run => {}
            _ => self.first_run_jumps = Some((run, jumps)),
        }
    }

    pub fn merge(&mut self, other: &EnsembleAccumulator) {
        for (a, b) in self.demand.iter_mut().zip(&other.demand) {
            a.merge(b);
        }
        for (a, b) in self.variants.iter_mut().zip(&other.variants) {
            a.inflow.merge(&b.inflow);
            for (x, y) in a.supply.iter_mut().zip(&b.supply) {
                x.merge(y);
            }
            a.objective.merge(&b.objective);
        }
        if let Some((r, j)) = &other.first_run_jumps {
            self.note_jumps(*r, j.clone());
        }
    }

    pub fn finish(&self, demand_times: Vec<f64>) -> EnsembleResult {
        let jumps = self
            .first_run_jumps
            .clone()
            .map(|(_, j)| j)
            .unwrap_or_default();
        EnsembleResult {
            runs: self.demand.first().map(|m| m.count()).unwrap_or(0),
            demand_times,
            demand: self.demand.iter().map(Moments::summary).collect(),
            variants: self
                .variants
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let inflow = v.inflow.summary();
                    let averaged_max_jump = inflow
                        .mean
                        .windows(2)
                        .map(|w| (w[1] - w[0]).abs())
                        .fold(0.0, f64::max);
                    EnsembleVariant {
                        label: v.label.clone(),
                        inflow_times: v.inflow_times.clone(),
                        inflow,
                        supply: v.supply.iter().map(Moments::summary).collect(),
                        objective: v.objective.summary(),
                        single_run_max_jump: jumps.get(i).copied().unwrap_or(0.0),
                        averaged_max_jump,
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleVariant {
    pub label: String,
    pub inflow_times: Vec<f64>,
    pub inflow: MeanSe,
    /// Supply per demand slot on the demand grid.
    pub supply: Vec<MeanSe>,
    /// Objective per demand slot.
    pub objective: MeanSe,
    /// Largest inflow jump of the lowest-indexed run.
    pub single_run_max_jump: f64,
    /// Largest jump of the run-averaged inflow.
    pub averaged_max_jump: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub runs: u64,
    pub demand_times: Vec<f64>,
    pub demand: Vec<MeanSe>,
    pub variants: Vec<EnsembleVariant>,
}

/// Runs per accumulation chunk. Results depend on this constant, not on the
/// worker count.
const CHUNK: u64 = 32;

/// Monte Carlo over `monte_carlo_runs` realizations, run indices
/// `0..monte_carlo_runs`.
pub fn run_monte_carlo(scenario: &Scenario) -> Result<EnsembleResult, ExperimentError> {
    let runs = scenario.monte_carlo_runs as u64;
    if runs < 2 {
        return Err(ExperimentError::Config(
            "Monte Carlo needs at least two runs".into(),
        ));
    }
    let grid = scenario
        .injection_grid()
        .map_err(|e| ExperimentError::Pde {
            variant: "-".into(),
            run: 0,
            source: e,
        })?;
    let workers = scenario
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| ExperimentError::Config(format!("thread pool: {e}")))?;

    let chunks = runs.div_ceil(CHUNK);
    let batch = (workers as u64 * 4).max(1);
    let mut total = EnsembleAccumulator::new(scenario, &grid);
    let mut c = 0;
    while c < chunks {
        let end = (c + batch).min(chunks);
        let partials: Vec<EnsembleAccumulator> = pool.install(|| {
            (c..end)
                .into_par_iter()
                .map(|chunk| {
                    let mut acc = EnsembleAccumulator::new(scenario, &grid);
                    for r in chunk * CHUNK..((chunk + 1) * CHUNK).min(runs) {
                        acc.push(&run_single(scenario, r)?);
                    }
                    Ok(acc)
                })
                .collect::<Result<_, ExperimentError>>()
        })?;
        for p in &partials {
            total.merge(p);
        }
        c = end;
    }
    Ok(total.finish(scenario.demand_times()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moments_identical_samples() {
        let mut m = Moments::new(3);
        m.push(&[0.1, 0.2, 0.3]);
        m.push(&[0.1, 0.2, 0.3]);
        assert_eq!(m.mean(), &[0.1, 0.2, 0.3]);
        assert_eq!(m.std_error(), vec![0.0; 3]);
    }

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..20).map(|i| ((i * 7919) % 13) as f64 * 0.1).collect();
        let mut seq = Moments::new(1);
        for &x in &xs {
            seq.push(&[x]);
        }
        let mut a = Moments::new(1);
        let mut b = Moments::new(1);
        for &x in &xs[..7] {
            a.push(&[x]);
        }
        for &x in &xs[7..] {
            b.push(&[x]);
        }
        a.merge(&b);
        assert!((a.mean()[0] - seq.mean()[0]).abs() < 1e-14);
        assert!((a.std_error()[0] - seq.std_error()[0]).abs() < 1e-14);
        let mean = xs.iter().sum::<f64>() / 20.0;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 19.0;
        assert!((seq.std_error()[0] - (var / 20.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn objective_zero_and_offset() {
        let path = DemandPath {
            t0: 0.0,
            dt: 0.01,
            values: (0..=250)
                .map(|j| 0.5 + 0.1 * (j as f64 * 0.03).sin())
                .collect(),
        };
        let times = path.times();
        let same = Series::new(times.clone(), path.values.clone());
        let obj = objective_estimate(&path, &same, &[1.0]).unwrap();
        assert_eq!(obj.total, 0.0);
        let shifted = Series::new(times, path.values.iter().map(|v| v + 0.2).collect());
        let obj = objective_estimate(&path, &shifted, &[0.755, 1.3]).unwrap();
        assert!((obj.total - 0.04 * 2.5).abs() < 1e-12);
        assert_eq!(obj.windows.len(), 3);
        assert!((obj.windows[0].value - 0.04 * 0.755).abs() < 1e-12);
        assert!((obj.windows[1].value - 0.04 * (1.3 - 0.755)).abs() < 1e-12);
    }

    #[test]
    fn objective_rejects_short_supply() {
        let path = DemandPath {
            t0: 0.0,
            dt: 0.5,
            values: vec![0.1; 5],
        };
        let supply = Series::new(vec![0.0, 1.0], vec![0.1, 0.1]);
        assert!(objective_estimate(&path, &supply, &[]).is_err());
    }

    #[test]
    fn trapz_partial_intervals() {
        let t = [0.0, 1.0, 2.0];
        let v = [0.0, 1.0, 0.0];
        assert!((trapz_between(&t, &v, 0.0, 2.0) - 1.0).abs() < 1e-15);
        assert!((trapz_between(&t, &v, 0.5, 1.5) - 0.75).abs() < 1e-15);
        assert!((trapz_between(&t, &v, 0.25, 0.75) - 0.25).abs() < 1e-15);
    }
}
