//! CSV exports and run manifests.
//!
//! Every writer produces a single long-format CSV with a header row, ready
//! for external plotting. A `manifest.json` next to them records the config
//! hash, seeds and grid parameters.

use crate::control::InflowProfile;
use crate::demand::DemandPath;
use crate::experiment::{EnsembleResult, RunResult, Scenario};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {message}")]
    Write { path: String, message: String },
}

fn write_err(path: &Path, e: impl std::fmt::Display) -> OutputError {
    OutputError::Write {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Writes CSV files into one directory and remembers their names.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self, OutputError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| write_err(&root, e))?;
        Ok(Self {
            root,
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Names of the files written so far, in order.
    pub fn files(&self) -> &[String] {
        &self.files
    }

    fn csv<F>(&mut self, name: &str, header: &[&str], fill: F) -> Result<(), OutputError>
    where
        F: FnOnce(&mut csv::Writer<fs::File>) -> csv::Result<()>,
    {
        let path = self.root.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| write_err(&path, e))?;
        w.write_record(header).map_err(|e| write_err(&path, e))?;
        fill(&mut w).map_err(|e| write_err(&path, e))?;
        w.flush().map_err(|e| write_err(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    /// Demand path per demand node.
    pub fn write_demand(
        &mut self,
        scenario: &Scenario,
        paths: &[DemandPath],
    ) -> Result<(), OutputError> {
        let net = &scenario.network;
        self.csv("demand.csv", &["node", "t", "demand"], |w| {
            for (path, &v) in paths.iter().zip(net.demand_nodes()) {
                let id = net.node(v).id.as_str();
                for (i, d) in path.values.iter().enumerate() {
                    w.write_record([id, &num(path.time(i)), &num(*d)])?;
                }
            }
            Ok(())
        })
    }

    /// Inflow profiles labelled by variant.
    pub fn write_inflow(&mut self, profiles: &[(&str, &InflowProfile)]) -> Result<(), OutputError> {
        self.csv("inflow.csv", &["variant", "window", "t_in", "u"], |w| {
            for (label, p) in profiles {
                for i in 0..p.len() {
                    w.write_record([
                        *label,
                        &p.windows[i].to_string(),
                        &num(p.times[i]),
                        &num(p.values[i]),
                    ])?;
                }
            }
            Ok(())
        })
    }

    /// Demand paths, inflow, supplies, distribution parameters, objective and
    /// (when recorded) density fields of one run.
    pub fn write_run(&mut self, scenario: &Scenario, run: &RunResult) -> Result<(), OutputError> {
        let net = &scenario.network;
        let node_ids: Vec<&str> = net
            .demand_nodes()
            .iter()
            .map(|&v| net.node(v).id.as_str())
            .collect();

        self.write_demand(scenario, &run.demand)?;
        let profiles: Vec<(&str, &InflowProfile)> = run
            .variants
            .iter()
            .map(|v| (v.label.as_str(), &v.inflow))
            .collect();
        self.write_inflow(&profiles)?;

        self.csv("supply.csv", &["variant", "node", "t", "supply"], |w| {
            for v in &run.variants {
                for (s, id) in v.supplies.iter().zip(&node_ids) {
                    for (t, x) in s.times.iter().zip(&s.values) {
                        w.write_record([v.label.as_str(), id, &num(*t), &num(*x)])?;
                    }
                }
            }
            Ok(())
        })?;

        self.csv(
            "supply_demand.csv",
            &["variant", "node", "t", "demand", "supply"],
            |w| {
                for v in &run.variants {
                    for ((s, path), id) in v
                        .supply_on_demand_grid
                        .iter()
                        .zip(&run.demand)
                        .zip(&node_ids)
                    {
                        for (i, x) in s.iter().enumerate() {
                            w.write_record([
                                v.label.as_str(),
                                id,
                                &num(path.time(i)),
                                &num(path.values[i]),
                                &num(*x),
                            ])?;
                        }
                    }
                }
                Ok(())
            },
        )?;

        self.csv(
            "alpha.csv",
            &["variant", "junction", "arc", "t", "alpha", "arriving_flux"],
            |w| {
                for v in &run.variants {
                    for a in &v.alphas {
                        let junction = net.node(a.junction).id.as_str();
                        let arc = net.arc(a.arc).id.as_str();
                        for i in 0..a.times.len() {
                            w.write_record([
                                v.label.as_str(),
                                junction,
                                arc,
                                &num(a.times[i]),
                                &num(a.values[i]),
                                &num(a.arriving[i]),
                            ])?;
                        }
                    }
                }
                Ok(())
            },
        )?;

        self.csv(
            "objective.csv",
            &["variant", "node", "window", "start", "end", "value"],
            |w| {
                for v in &run.variants {
                    for (o, id) in v.objective.iter().zip(&node_ids) {
                        for win in &o.windows {
                            w.write_record([
                                v.label.as_str(),
                                id,
                                &win.update.to_string(),
                                &num(win.start),
                                &num(win.end),
                                &num(win.value),
                            ])?;
                        }
                        let (start, end) = (scenario.t0, scenario.t_end);
                        w.write_record([
                            v.label.as_str(),
                            id,
                            "total",
                            &num(start),
                            &num(end),
                            &num(o.total),
                        ])?;
                    }
                }
                Ok(())
            },
        )?;

        if run.variants.iter().any(|v| !v.fields.is_empty()) {
            self.csv("field.csv", &["variant", "arc", "t", "x", "z"], |w| {
                for v in &run.variants {
                    for f in &v.fields {
                        let arc = net.arc(f.arc).id.as_str();
                        for (t, row) in f.times.iter().zip(&f.z) {
                            for (l, z) in row.iter().enumerate() {
                                let x = (l + 1) as f64 * f.dx;
                                w.write_record([
                                    v.label.as_str(),
                                    arc,
                                    &num(*t),
                                    &num(x),
                                    &num(*z),
                                ])?;
                            }
                        }
                    }
                }
                Ok(())
            })?;
        }
        Ok(())
    }

    /// Per-variant summary of one run: objective per node, inflow range and
    /// split fallbacks.
    pub fn write_comparison(
        &mut self,
        scenario: &Scenario,
        run: &RunResult,
    ) -> Result<(), OutputError> {
        let net = &scenario.network;
        self.csv(
            "comparison.csv",
            &[
                "variant",
                "node",
                "objective",
                "inflow_min",
                "inflow_max",
                "max_jump",
                "split_fallbacks",
            ],
            |w| {
                for v in &run.variants {
                    let lo = v
                        .inflow
                        .values
                        .iter()
                        .copied()
                        .fold(f64::INFINITY, f64::min);
                    let hi = v
                        .inflow
                        .values
                        .iter()
                        .copied()
                        .fold(f64::NEG_INFINITY, f64::max);
                    for (o, &node) in v.objective.iter().zip(net.demand_nodes()) {
                        w.write_record([
                            v.label.as_str(),
                            net.node(node).id.as_str(),
                            &num(o.total),
                            &num(lo),
                            &num(hi),
                            &num(v.inflow.max_jump()),
                            &v.split_fallbacks.to_string(),
                        ])?;
                    }
                }
                Ok(())
            },
        )
    }

    /// Ensemble means and standard errors.
    pub fn write_ensemble(
        &mut self,
        scenario: &Scenario,
        ens: &EnsembleResult,
    ) -> Result<(), OutputError> {
        let net = &scenario.network;
        let node_ids: Vec<&str> = net
            .demand_nodes()
            .iter()
            .map(|&v| net.node(v).id.as_str())
            .collect();
        let t = &ens.demand_times;

        self.csv("mc_demand.csv", &["node", "t", "mean", "se"], |w| {
            for (m, id) in ens.demand.iter().zip(&node_ids) {
                for (i, ti) in t.iter().enumerate() {
                    w.write_record([*id, &num(*ti), &num(m.mean[i]), &num(m.se[i])])?;
                }
            }
            Ok(())
        })?;

        self.csv("mc_inflow.csv", &["variant", "t_in", "mean", "se"], |w| {
            for v in &ens.variants {
                for i in 0..v.inflow_times.len() {
                    w.write_record([
                        v.label.as_str(),
                        &num(v.inflow_times[i]),
                        &num(v.inflow.mean[i]),
                        &num(v.inflow.se[i]),
                    ])?;
                }
            }
            Ok(())
        })?;

        self.csv(
            "mc_supply.csv",
            &["variant", "node", "t", "mean", "se"],
            |w| {
                for v in &ens.variants {
                    for (m, id) in v.supply.iter().zip(&node_ids) {
                        for (i, ti) in t.iter().enumerate() {
                            w.write_record([
                                v.label.as_str(),
                                id,
                                &num(*ti),
                                &num(m.mean[i]),
                                &num(m.se[i]),
                            ])?;
                        }
                    }
                }
                Ok(())
            },
        )?;

        self.csv(
            "mc_objective.csv",
            &["variant", "node", "mean", "se"],
            |w| {
                for v in &ens.variants {
                    for (i, id) in node_ids.iter().enumerate() {
                        w.write_record([
                            v.label.as_str(),
                            id,
                            &num(v.objective.mean[i]),
                            &num(v.objective.se[i]),
                        ])?;
                    }
                }
                Ok(())
            },
        )?;

        self.csv(
            "mc_inflow_jumps.csv",
            &["variant", "single_run_max_jump", "averaged_max_jump"],
            |w| {
                for v in &ens.variants {
                    w.write_record([
                        v.label.as_str(),
                        &num(v.single_run_max_jump),
                        &num(v.averaged_max_jump),
                    ])?;
                }
                Ok(())
            },
        )
    }

    /// Writes `manifest.json` listing every file written so far.
    pub fn write_manifest(&mut self, manifest: Manifest) -> Result<(), OutputError> {
        let manifest = Manifest {
            files: self.files.clone(),
            ..manifest
        };
        let path = self.root.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| write_err(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| write_err(&path, e))?;
        Ok(())
    }
}

/// Provenance of an output directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_sha256: String,
    pub master_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_index: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub run_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<u64>,
    pub t0: f64,
    pub t_end: f64,
    pub sde_dt: f64,
    pub pde_dx: f64,
    pub update_times: Vec<f64>,
    pub variants: Vec<String>,
    pub files: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config_sha256: String, scenario: &Scenario) -> Self {
        Self {
            tool: "dampnet".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_sha256,
            master_seed: scenario.master_seed,
            run_index: None,
            run_seed: None,
            runs: None,
            t0: scenario.t0,
            t_end: scenario.t_end,
            sde_dt: scenario.sde_dt,
            pde_dx: scenario.pde_dx,
            update_times: scenario.update_times.clone(),
            variants: scenario.variants.iter().map(|v| v.label.clone()).collect(),
            files: Vec::new(),
        }
    }
}

/// Shortest representation that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x:?}")
}
