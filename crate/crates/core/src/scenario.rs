//! Scenario files (TOML).
//!
//! ```toml
//! [horizon]
//! t0 = 0.0
//! t_end = 2.5
//!
//! [numerics]
//! sde_dt = 0.001
//! pde_dx = 0.005
//! initial_data = "warm"   # or "zero"
//!
//! [updates]
//! count = 7               # or: times = [0.0, 0.5, ...]
//!
//! [experiment]
//! monte_carlo_runs = 10000
//! master_seed = 1
//! variants = [{ label = "none", damping = { kind = "none" } }]
//!
//! [[nodes]]
//! id = "v0"
//! kind = "source"
//!
//! [[arcs]]
//! id = "1"
//! tail = "v0"
//! head = "v1"
//! velocity = { constant = 14.0, terms = [{ amplitude = 1.0, angular_factor = 2.0 }] }
//! damping_factor = { constant = 1.0 }
//! damping = { kind = "monomial", degree = 2 }
//!
//! [[demands]]
//! node = "v2"
//! kappa = 2.0
//! theta = { constant = 0.45, terms = [{ amplitude = 0.2, angular_factor = 1.0, phase = 1.0 }] }
//! sigma = 0.9
//! d0 = 0.4
//! ```
//!
//! Unknown keys are rejected everywhere.

use crate::damping::DampingSpec;
use crate::demand::{grid_steps, DemandError, JacobiDemandSpec};
use crate::experiment::{ExperimentError, Scenario, Variant};
use crate::network::{ArcSpec, NodeKind, NodeSpec, TreeNetwork, Violation};
use crate::pde::InitialMode;
use crate::timefuncs::TimeFunction;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scenario does not match the schema: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Schema(String),
    #[error("network validation failed: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Network(Vec<Violation>),
    #[error(transparent)]
    Demand(#[from] DemandError),
}

/// Upper bound on `[updates] count`.
pub const MAX_UPDATES: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub horizon: HorizonSection,
    pub numerics: NumericsSection,
    pub updates: UpdatesSection,
    pub experiment: ExperimentSection,
    pub nodes: Vec<NodeSpec>,
    pub arcs: Vec<ArcEntry>,
    pub demands: Vec<JacobiDemandSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSection {
    pub t0: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    pub sde_dt: f64,
    pub pde_dx: f64,
    #[serde(default)]
    pub initial_data: InitialMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdatesSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Equidistant updates `t0 + j·(t_end - t0)/count`, rounded down onto the
    /// demand grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub monte_carlo_runs: usize,
    pub master_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variants: Vec<VariantEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantEntry {
    pub label: String,
    pub damping: DampingSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArcEntry {
    pub id: String,
    pub tail: String,
    pub head: String,
    #[serde(default = "unit_length")]
    pub length: f64,
    pub velocity: TimeFunction,
    #[serde(default = "no_damping_factor")]
    pub damping_factor: TimeFunction,
    #[serde(default = "no_damping")]
    pub damping: DampingSpec,
}

fn unit_length() -> f64 {
    1.0
}

fn no_damping_factor() -> TimeFunction {
    TimeFunction::constant(0.0)
}

fn no_damping() -> DampingSpec {
    DampingSpec::None
}

impl ScenarioFile {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serialises to TOML")
    }

    /// SHA-256 of the canonical serialisation.
    pub fn config_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml_string().as_bytes()))
    }

    /// Keeps only the variant with this label.
    pub fn select_variant(&mut self, label: &str) -> Result<(), ScenarioError> {
        let found: Vec<VariantEntry> = self
            .experiment
            .variants
            .iter()
            .filter(|v| v.label == label)
            .cloned()
            .collect();
        if found.is_empty() {
            return Err(ScenarioError::Schema(format!(
                "no variant labelled {label}"
            )));
        }
        self.experiment.variants = found;
        Ok(())
    }

    pub fn update_times(&self) -> Result<Vec<f64>, ScenarioError> {
        let (t0, t_end, dt) = (self.horizon.t0, self.horizon.t_end, self.numerics.sde_dt);
        match (&self.updates.times, self.updates.count) {
            (Some(times), None) => Ok(times.clone()),
            (None, Some(count)) if count >= 1 => {
                let steps = grid_steps(t0, t_end, dt)?;
                if count > steps.min(MAX_UPDATES) {
                    return Err(ScenarioError::Schema(format!(
                        "update count {count} exceeds the {} demand grid steps or the limit {MAX_UPDATES}",
                        steps
                    )));
                }
                let span = (t_end - t0) / count as f64;
                let mut times: Vec<f64> = (0..count)
                    .map(|j| {
                        let k = ((j as f64 * span) / dt + 1e-9).floor();
                        t0 + k * dt
                    })
                    .collect();
                times.dedup();
                Ok(times)
            }
            (None, Some(_)) => Err(ScenarioError::Schema(
                "update count must be at least 1".into(),
            )),
            _ => Err(ScenarioError::Schema(
                "[updates] needs exactly one of `times` or `count`".into(),
            )),
        }
    }

    /// Resolves and validates everything into a runnable [`Scenario`].
    pub fn build(&self) -> Result<Scenario, ScenarioError> {
        let arcs = self
            .arcs
            .iter()
            .map(|a| {
                let shape = a
                    .damping
                    .resolve()
                    .map_err(|e| ScenarioError::Schema(format!("arc {}: {e}", a.id)))?;
                Ok(ArcSpec {
                    id: a.id.clone(),
                    tail: a.tail.clone(),
                    head: a.head.clone(),
                    length: a.length,
                    velocity: a.velocity.clone(),
                    damping_factor: a.damping_factor.clone(),
                    damping: shape,
                })
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        let network = TreeNetwork::new(self.nodes.clone(), arcs)
            .into_validated()
            .map_err(|e| match e {
                crate::network::NetworkError::Invalid(v) => ScenarioError::Network(v),
                other => ScenarioError::Schema(other.to_string()),
            })?;

        for d in &self.demands {
            match self.nodes.iter().find(|n| n.id == d.node) {
                Some(n) if n.kind == NodeKind::Demand => {}
                Some(_) => {
                    return Err(ScenarioError::Schema(format!(
                        "demand spec for {} which is not a demand node",
                        d.node
                    )))
                }
                None => {
                    return Err(ScenarioError::Schema(format!(
                        "demand spec for unknown node {}",
                        d.node
                    )))
                }
            }
        }
        let demands = network
            .demand_nodes()
            .iter()
            .map(|&v| {
                let id = &network.node(v).id;
                let mut matching = self.demands.iter().filter(|d| &d.node == id);
                match (matching.next(), matching.next()) {
                    (Some(d), None) => Ok(d.clone()),
                    (None, _) => Err(ScenarioError::Schema(format!(
                        "no demand spec for demand node {id}"
                    ))),
                    (Some(_), Some(_)) => Err(ScenarioError::Schema(format!(
                        "several demand specs for node {id}"
                    ))),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;

        let variants = if self.experiment.variants.is_empty() {
            vec![Variant::declared()]
        } else {
            let mut labels = std::collections::HashSet::new();
            self.experiment
                .variants
                .iter()
                .map(|v| {
                    if !labels.insert(v.label.as_str()) {
                        return Err(ScenarioError::Schema(format!(
                            "duplicate variant label {}",
                            v.label
                        )));
                    }
                    let shape = v
                        .damping
                        .resolve()
                        .map_err(|e| ScenarioError::Schema(format!("variant {}: {e}", v.label)))?;
                    Ok(Variant::uniform(v.label.clone(), shape))
                })
                .collect::<Result<Vec<_>, _>>()?
        };
        if self.experiment.workers == Some(0) {
            return Err(ScenarioError::Schema("workers must be at least 1".into()));
        }

        let scenario = Scenario {
            network,
            demands,
            t0: self.horizon.t0,
            t_end: self.horizon.t_end,
            update_times: self.update_times()?,
            sde_dt: self.numerics.sde_dt,
            pde_dx: self.numerics.pde_dx,
            monte_carlo_runs: self.experiment.monte_carlo_runs,
            master_seed: self.experiment.master_seed,
            variants,
            initial: self.numerics.initial_data,
            workers: self.experiment.workers,
        };
        scenario.check().map_err(|e| match e {
            ExperimentError::Demand(d) => ScenarioError::Demand(d),
            other => ScenarioError::Schema(other.to_string()),
        })?;
        Ok(scenario)
    }
}

/// No damping plus the four normalised monomials, labelled `none` and
/// `monomial1` to `monomial4`.
pub fn reference_variants() -> Vec<VariantEntry> {
    let mut variants = vec![VariantEntry {
        label: "none".into(),
        damping: DampingSpec::None,
    }];
    for n in 1..=4 {
        variants.push(VariantEntry {
            label: format!("monomial{n}"),
            damping: DampingSpec::Monomial {
                degree: n,
                coefficient: None,
            },
        });
    }
    variants
}

/// The reference 1-2 network scenario: two Jacobi demands, sinusoidal arc
/// velocities and damping factors, `T = 2.5`, seven equidistant updates,
/// `Δt = 1/1000`, `Δx = 1/200`, `10⁴` Monte Carlo runs and the five damping
/// variants.
pub fn reference_scenario() -> ScenarioFile {
    let sine = |c: f64, a: f64, w: f64, p: f64| TimeFunction::sinusoid(c, a, w, p);
    let arc = |id: &str, head: &str, tail: &str, vel: TimeFunction, mu: TimeFunction| ArcEntry {
        id: id.into(),
        tail: tail.into(),
        head: head.into(),
        length: 1.0,
        velocity: vel,
        damping_factor: mu,
        damping: DampingSpec::Monomial {
            degree: 1,
            coefficient: None,
        },
    };
    let variants = reference_variants();
    ScenarioFile {
        horizon: HorizonSection {
            t0: 0.0,
            t_end: 2.5,
        },
        numerics: NumericsSection {
            sde_dt: 1e-3,
            pde_dx: 1.0 / 200.0,
            initial_data: InitialMode::Warm,
        },
        updates: UpdatesSection {
            times: None,
            count: Some(7),
        },
        experiment: ExperimentSection {
            monte_carlo_runs: 10_000,
            master_seed: 20_240_101,
            workers: None,
            variants,
        },
        nodes: vec![
            NodeSpec::new("v0", NodeKind::Source),
            NodeSpec::new("v1", NodeKind::Junction),
            NodeSpec::new("v2", NodeKind::Demand),
            NodeSpec::new("v3", NodeKind::Demand),
        ],
        arcs: vec![
            arc(
                "1",
                "v1",
                "v0",
                sine(14.0, 1.0, 2.0, 0.0),
                sine(1.0, 0.2, 1.0, 0.0),
            ),
            arc(
                "2",
                "v2",
                "v1",
                sine(12.0, 1.0, 2.0, 0.0),
                sine(0.8, 0.2, 1.0, 0.0),
            ),
            arc(
                "3",
                "v3",
                "v1",
                sine(12.0, 1.0, 4.0, 0.0),
                sine(0.8, 0.2, 1.0, 0.0),
            ),
        ],
        demands: vec![
            JacobiDemandSpec {
                node: "v2".into(),
                kappa: 2.0,
                theta: sine(0.45, 0.2, 1.0, 1.0),
                sigma: 0.9,
                d0: 0.4,
            },
            JacobiDemandSpec {
                node: "v3".into(),
                kappa: 1.0,
                theta: sine(0.5, 0.3, 1.0, -0.5),
                sigma: 0.6,
                d0: 0.6,
            },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_builds() {
        let s = reference_scenario().build().unwrap();
        assert_eq!(s.variants.len(), 5);
        assert_eq!(s.update_times.len(), 7);
        let expect = [0.0, 0.357, 0.714, 1.071, 1.428, 1.785, 2.142];
        for (a, b) in s.update_times.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn toml_round_trip() {
        let file = reference_scenario();
        let text = file.to_toml_string();
        let back = ScenarioFile::from_toml_str(&text).unwrap();
        assert_eq!(back, file);
        assert_eq!(back.to_toml_string(), text);
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut text = reference_scenario().to_toml_string();
        text = text.replace("[horizon]", "[horizon]\nbogus = 1");
        assert!(matches!(
            ScenarioFile::from_toml_str(&text),
            Err(ScenarioError::Parse(_))
        ));
    }

    #[test]
    fn network_violation_surfaces() {
        let mut file = reference_scenario();
        file.arcs[2].tail = "v0".into();
        assert!(matches!(file.build(), Err(ScenarioError::Network(_))));
    }

    #[test]
    fn off_grid_update_rejected() {
        let mut file = reference_scenario();
        file.updates = UpdatesSection {
            times: Some(vec![0.0, 0.3571]),
            count: None,
        };
        assert!(matches!(file.build(), Err(ScenarioError::Schema(_))));
    }

    #[test]
    fn missing_demand_spec() {
        let mut file = reference_scenario();
        file.demands.pop();
        assert!(matches!(file.build(), Err(ScenarioError::Schema(_))));
    }

    #[test]
    fn updates_need_one_form() {
        let mut file = reference_scenario();
        file.updates = UpdatesSection {
            times: Some(vec![0.0]),
            count: Some(3),
        };
        assert!(file.build().is_err());
    }

    #[test]
    fn bundled_files_parse() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios");
        let reference = ScenarioFile::load(format!("{dir}/reference.toml")).unwrap();
        assert_eq!(reference, reference_scenario());
        let closed = ScenarioFile::load(format!("{dir}/one_one_closed_form.toml")).unwrap();
        closed.build().unwrap();
    }
}
