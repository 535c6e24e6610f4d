use clap::{Args, Parser, Subcommand};
use dampnet::control::{optimal_inflow_profile, InflowProfile};
use dampnet::experiment::{run_monte_carlo, run_single_with, ExperimentError, Scenario};
use dampnet::output::{Manifest, OutputDir, OutputError};
use dampnet::pde::SimOptions;
use dampnet::scenario::{reference_variants, ScenarioError, ScenarioFile};
use serde_json::{json, Value};
use std::path::PathBuf;
use std::process::ExitCode;

/// Optimal inflow control for damped transport networks with stochastic
/// demand.
#[derive(Parser)]
#[command(name = "dampnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and print the resolved parameters as JSON.
    Validate { scenario: PathBuf },
    /// Inflow profiles of one realization, without forward simulation.
    Inflow(RunArgs),
    /// One realization: inflow, forward simulation, supplies, objective.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Also dump the density field of every arc.
        #[arg(long)]
        field: bool,
    },
    /// Monte Carlo ensemble means and standard errors.
    Montecarlo {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// One realization for no damping and the four normalised monomials; with
    /// `--runs` also the ensemble for the same five variants.
    CompareDamping {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Args)]
struct CommonArgs {
    scenario: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    /// Overrides the master seed of the file.
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,
    /// Keeps only the variant with this label.
    #[arg(long)]
    variant: Option<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 0)]
    run_index: u64,
}

enum CliError {
    Scenario(ScenarioError),
    Experiment(ExperimentError),
    Output(OutputError),
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Scenario(e)
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        CliError::Experiment(e)
    }
}

impl From<OutputError> for CliError {
    fn from(e: OutputError) -> Self {
        CliError::Output(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Scenario(ScenarioError::Io { .. }) | CliError::Output(_) => 1,
            CliError::Scenario(ScenarioError::Network(_)) => 3,
            CliError::Scenario(_) => 2,
            CliError::Experiment(e) if e.is_infeasible() => 4,
            CliError::Experiment(ExperimentError::Config(_)) => 2,
            CliError::Experiment(_) => 5,
        }
    }

    fn kind(&self) -> &'static str {
        match self.exit_code() {
            1 => "io",
            2 => "schema",
            3 => "network",
            4 => "infeasible",
            _ => "numerics",
        }
    }

    fn to_json(&self) -> Value {
        let message = match self {
            CliError::Scenario(e) => e.to_string(),
            CliError::Experiment(e) => e.to_string(),
            CliError::Output(e) => e.to_string(),
        };
        let mut v = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": message,
        });
        match self {
            CliError::Scenario(ScenarioError::Network(violations)) => {
                v["violations"] = violations.iter().map(|x| x.to_string()).collect();
            }
            CliError::Experiment(
                ExperimentError::Control { variant, run, .. }
                | ExperimentError::Pde { variant, run, .. },
            ) => {
                v["variant"] = json!(variant);
                v["run"] = json!(run);
            }
            _ => {}
        }
        v
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(report) => {
            println!(
                "{}",
                serde_json::to_string_pretty(&report).expect("report serialises")
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(command: Command) -> Result<Value, CliError> {
    match command {
        Command::Validate { scenario } => validate(scenario),
        Command::Inflow(args) => inflow(args),
        Command::Simulate { run, field } => simulate(run, field),
        Command::Montecarlo {
            common,
            runs,
            workers,
        } => montecarlo(common, runs, workers),
        Command::CompareDamping { run, runs, workers } => compare_damping(run, runs, workers),
    }
}

fn load(common: &CommonArgs) -> Result<ScenarioFile, CliError> {
    let mut file = ScenarioFile::load(&common.scenario)?;
    if let Some(seed) = common.seed {
        file.experiment.master_seed = seed;
    }
    if let Some(label) = &common.variant {
        file.select_variant(label)?;
    }
    Ok(file)
}

fn finish(mut out: OutputDir, manifest: Manifest, extra: Value) -> Result<Value, CliError> {
    out.write_manifest(manifest)?;
    let mut files: Vec<String> = out.files().to_vec();
    files.push("manifest.json".into());
    let mut report = json!({
        "status": "ok",
        "out_dir": out.root().display().to_string(),
        "files": files,
    });
    if let (Value::Object(r), Value::Object(e)) = (&mut report, extra) {
        r.extend(e);
    }
    Ok(report)
}

fn validate(path: PathBuf) -> Result<Value, CliError> {
    let file = ScenarioFile::load(&path)?;
    let scenario = file.build()?;
    let net = &scenario.network;
    let paths: Vec<Vec<&str>> = net
        .root_to_leaf_paths()
        .iter()
        .map(|p| p.iter().map(|&k| net.arc(k).id.as_str()).collect())
        .collect();
    Ok(json!({
        "status": "ok",
        "config_sha256": file.config_hash(),
        "demand_nodes": net.demand_nodes().iter().map(|&v| &net.node(v).id).collect::<Vec<_>>(),
        "junctions": net.junctions().iter().map(|&v| &net.node(v).id).collect::<Vec<_>>(),
        "paths": paths,
        "update_times": scenario.update_times,
        "variants": scenario.variants.iter().map(|v| &v.label).collect::<Vec<_>>(),
        "scenario": serde_json::to_value(&file).expect("scenario serialises"),
    }))
}

fn run_manifest(
    command: &str,
    file: &ScenarioFile,
    scenario: &Scenario,
    run_index: u64,
) -> Manifest {
    let mut m = Manifest::new(command, file.config_hash(), scenario);
    m.run_index = Some(run_index);
    m.run_seed = Some(scenario.run_seed(run_index));
    m
}

fn inflow(args: RunArgs) -> Result<Value, CliError> {
    let file = load(&args.common)?;
    let scenario = file.build()?;
    let paths = scenario
        .demand_paths(args.run_index)
        .map_err(ExperimentError::from)?;
    let policy = scenario.policy_for(&paths)?;
    let grid = scenario
        .injection_grid()
        .map_err(|source| ExperimentError::Pde {
            variant: "-".into(),
            run: args.run_index,
            source,
        })?;
    let profiles: Vec<(String, InflowProfile)> = scenario
        .variants
        .iter()
        .map(|v| {
            let net = scenario.variant_network(v);
            optimal_inflow_profile(&net, &scenario.demands, &policy, &grid)
                .map(|p| (v.label.clone(), p))
                .map_err(|source| {
                    CliError::Experiment(ExperimentError::Control {
                        variant: v.label.clone(),
                        run: args.run_index,
                        source,
                    })
                })
        })
        .collect::<Result<_, _>>()?;

    let mut out = OutputDir::create(&args.common.out_dir)?;
    out.write_demand(&scenario, &paths)?;
    let refs: Vec<(&str, &InflowProfile)> = profiles.iter().map(|(l, p)| (l.as_str(), p)).collect();
    out.write_inflow(&refs)?;
    let manifest = run_manifest("inflow", &file, &scenario, args.run_index);
    finish(out, manifest, json!({}))
}

fn simulate(args: RunArgs, field: bool) -> Result<Value, CliError> {
    let file = load(&args.common)?;
    let scenario = file.build()?;
    let run = run_single_with(
        &scenario,
        args.run_index,
        SimOptions {
            record_field: field,
        },
    )?;
    let mut out = OutputDir::create(&args.common.out_dir)?;
    out.write_run(&scenario, &run)?;
    let objectives: Vec<Value> = run
        .variants
        .iter()
        .map(|v| json!({"variant": v.label, "objective": v.objective.iter().map(|o| o.total).collect::<Vec<_>>()}))
        .collect();
    let manifest = run_manifest("simulate", &file, &scenario, args.run_index);
    finish(out, manifest, json!({ "objectives": objectives }))
}

fn montecarlo(
    common: CommonArgs,
    runs: Option<usize>,
    workers: Option<usize>,
) -> Result<Value, CliError> {
    let mut file = load(&common)?;
    if let Some(r) = runs {
        file.experiment.monte_carlo_runs = r;
    }
    if workers.is_some() {
        file.experiment.workers = workers;
    }
    let scenario = file.build()?;
    let ens = run_monte_carlo(&scenario)?;
    let mut out = OutputDir::create(&common.out_dir)?;
    out.write_ensemble(&scenario, &ens)?;
    let mut manifest = Manifest::new("montecarlo", file.config_hash(), &scenario);
    manifest.runs = Some(ens.runs);
    finish(out, manifest, json!({ "runs": ens.runs }))
}

fn compare_damping(
    args: RunArgs,
    runs: Option<usize>,
    workers: Option<usize>,
) -> Result<Value, CliError> {
    let mut file = ScenarioFile::load(&args.common.scenario)?;
    if let Some(seed) = args.common.seed {
        file.experiment.master_seed = seed;
    }
    file.experiment.variants = reference_variants();
    if let Some(label) = &args.common.variant {
        file.select_variant(label)?;
    }
    if let Some(r) = runs {
        file.experiment.monte_carlo_runs = r;
    }
    if workers.is_some() {
        file.experiment.workers = workers;
    }
    let scenario = file.build()?;
    let run = run_single_with(&scenario, args.run_index, SimOptions::default())?;
    let mut out = OutputDir::create(&args.common.out_dir)?;
    out.write_run(&scenario, &run)?;
    out.write_comparison(&scenario, &run)?;
    let mut manifest = run_manifest("compare-damping", &file, &scenario, args.run_index);
    if runs.is_some() {
        let ens = run_monte_carlo(&scenario)?;
        out.write_ensemble(&scenario, &ens)?;
        manifest.runs = Some(ens.runs);
    }
    finish(out, manifest, json!({}))
}
