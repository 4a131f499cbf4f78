//! `ddrhc`: data generation, invariant-set construction, closed-loop simulation and
//! controller cross-checks from a JSON experiment config.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ddrhc::consistency::{ConsistencySet, DataDictionary};
use ddrhc::controller::{solve_dual, solve_primal_vertex, verify_certificate, ControllerContext, NoiseModel};
use ddrhc::invariant::{certify_invariance, compute_invariant};
use ddrhc::polytope::HPolytope;
use ddrhc::simulator::{gen_training_data, run, Mode, SimConfig};
use ddrhc::Error;
use log::info;
use nalgebra::DVector;
use serde_json::json;

use config::{ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "ddrhc", version, about = "Robust data-driven receding-horizon control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample training triples from the configured plant.
    GenData {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the training seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build the robust controlled invariant set from training data.
    Invariant {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the closed loop and write one trajectory CSV per mode.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        polytope: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the simulation noise seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Solve the control problem at one state by both formulations and compare.
    Check {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Gauge carrier; defaults to the configured state set.
        #[arg(long)]
        polytope: Option<PathBuf>,
        /// Comma-separated state, e.g. "1,0.8".
        #[arg(long, value_parser = parse_state)]
        state: StateArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Rh,
    Static,
    Both,
}

#[derive(Clone)]
struct StateArg(Vec<f64>);

fn parse_state(text: &str) -> Result<StateArg, String> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("bad component {s:?}: {e}")))
        .collect::<Result<_, _>>()
        .map(StateArg)
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                Error::Lp(_) | Error::LpContext { .. } => 4,
                Error::ControllerInfeasible(_)
                | Error::ModelInvalidated
                | Error::NoInvariantSet(_)
                | Error::Empty
                | Error::Unbounded
                | Error::RankDeficient => 3,
                _ => 2,
            },
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DDRHC_LOG", "warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::GenData { config, out, seed } => gen_data(&config, out, seed),
        Command::Invariant { config, data, out } => invariant(&config, &data, out),
        Command::Simulate {
            config,
            data,
            polytope,
            out,
            seed,
            mode,
        } => simulate(&config, &data, &polytope, out, seed, mode),
        Command::Check {
            config,
            data,
            polytope,
            state,
        } => check(&config, &data, polytope.as_deref(), state.0),
    }
}

fn out_dir(config: &ExperimentConfig, out: Option<PathBuf>) -> CliResult<PathBuf> {
    let dir = out.unwrap_or_else(|| config.output_dir.clone());
    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    Ok(dir)
}

fn load_data(config: &ExperimentConfig, path: &Path) -> CliResult<DataDictionary> {
    let data = DataDictionary::read_json(path)?;
    if data.state_dim() != config.state_dim() || data.input_dim() != config.input_dim() {
        return Err(ConfigError::Invalid("data file does not match the configured plant".into()).into());
    }
    Ok(data)
}

fn noise_model(config: &ExperimentConfig) -> CliResult<NoiseModel> {
    Ok(NoiseModel::from_bound(config.state_dim(), config.plant.epsilon)?)
}

fn gen_data(config: &Path, out: Option<PathBuf>, seed: Option<u64>) -> CliResult {
    let config = ExperimentConfig::read(config)?;
    let plant = config.plant()?;
    let seed = seed.unwrap_or(config.training.seed);
    let data = gen_training_data(&plant, config.training.samples, &config.state_set()?, &config.input_set()?, seed)?;
    let path = out_dir(&config, out)?.join("data.json");
    data.write_json(&path)?;
    info!("wrote {} triples to {}", data.len(), path.display());
    println!("{}", path.display());
    Ok(())
}

fn invariant(config: &Path, data: &Path, out: Option<PathBuf>) -> CliResult {
    let config = ExperimentConfig::read(config)?;
    let data = load_data(&config, data)?;
    let noise = noise_model(&config)?;
    let x_set = config.state_set()?;
    let u_set = config.input_set()?;
    let cs = ConsistencySet::build(&data, noise.shape())?;
    let systems = cs.system_vertices()?;
    let result = compute_invariant(&x_set, &u_set, noise.vertices(), &systems, config.invariant.max_iter)?;
    let report = certify_invariance(
        &result.set,
        &u_set,
        noise.vertices(),
        &systems,
        config.invariant.certify_samples,
        config.training.seed,
    )?;
    let dir = out_dir(&config, out)?;
    result.set.write_json(dir.join("invariant.json"))?;
    let diagnostics = json!({
        "iterations": result.iterations,
        "converged": result.converged,
        "row_counts": result.row_counts,
        "final_rows": result.set.num_rows(),
        "vertex_systems": systems.len(),
        "certification": {
            "samples": report.samples,
            "failures": report.failures.len(),
            "worst_excess": report.worst_excess,
        },
    });
    std::fs::write(
        dir.join("invariant_diagnostics.json"),
        serde_json::to_string_pretty(&diagnostics).map_err(Error::from)?,
    )
    .map_err(Error::from)?;
    println!("{}", dir.join("invariant.json").display());
    Ok(())
}

fn simulate(
    config: &Path,
    data: &Path,
    polytope: &Path,
    out: Option<PathBuf>,
    seed: Option<u64>,
    mode: Option<ModeArg>,
) -> CliResult {
    let config = ExperimentConfig::read(config)?;
    let data = load_data(&config, data)?;
    let x_i = HPolytope::read_json(polytope)?;
    let u_set = config.input_set()?;
    let plant = config.plant()?;
    let noise = noise_model(&config)?;
    let modes = match mode {
        Some(ModeArg::Rh) => vec![Mode::Rh],
        Some(ModeArg::Static) => vec![Mode::Static],
        Some(ModeArg::Both) => vec![Mode::Rh, Mode::Static],
        None => config.simulation.modes.clone(),
    };
    let dir = out_dir(&config, out)?;
    let sim = |mode: Mode| {
        let mut cfg = SimConfig::new(config.x0(), config.simulation.steps, mode, seed.unwrap_or(config.plant.seed));
        cfg.grace_after_uub = config.simulation.grace_after_uub;
        cfg.timing = config.simulation.timing;
        run(&cfg, &plant, &x_i, &u_set, &noise, &data)
    };
    let logs: Vec<ddrhc::Result<_>> = std::thread::scope(|s| {
        let handles: Vec<_> = modes.iter().map(|&m| s.spawn(move || sim(m))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread panicked")).collect()
    });
    for (mode, log) in modes.iter().zip(logs) {
        let log = log?;
        let stem = format!("trajectory_{}", mode.as_str());
        log.write(&dir, &stem)?;
        let safe = log.safety_ok(&x_i, &u_set)?;
        println!(
            "{}: {} steps, safe: {safe}, first λ >= 1 at {}",
            mode.as_str(),
            log.len(),
            log.first_uub_step().map_or("never".to_string(), |k| k.to_string())
        );
    }
    Ok(())
}

fn check(config: &Path, data: &Path, polytope: Option<&Path>, state: Vec<f64>) -> CliResult {
    let config = ExperimentConfig::read(config)?;
    let data = load_data(&config, data)?;
    if state.len() != config.state_dim() {
        return Err(ConfigError::Invalid(format!("--state needs {} components", config.state_dim())).into());
    }
    let carrier = match polytope {
        Some(p) => HPolytope::read_json(p)?,
        None => config.state_set()?,
    };
    let noise = noise_model(&config)?;
    let cs = ConsistencySet::build(&data, noise.shape())?;
    let systems = cs.system_vertices()?;
    let ctx = ControllerContext::new(&carrier, &config.input_set()?, Some(noise), cs)?;
    let x = DVector::from_vec(state);
    let dual = solve_dual(&ctx, &x)?;
    let primal = solve_primal_vertex(&ctx, &x, &systems)?;
    let report = json!({
        "state": x.as_slice(),
        "psi": dual.psi,
        "lambda_dual": finite_or_null(dual.lambda),
        "lambda_primal": finite_or_null(primal.lambda),
        "bound_dual": dual.bound,
        "bound_primal": primal.bound,
        "difference": (dual.bound - primal.bound).abs(),
        "u_dual": dual.u.as_slice(),
        "u_primal": primal.u.as_slice(),
        "certificate_verified": verify_certificate(&dual, &ctx, &x),
        "vertex_systems": systems.len(),
    });
    println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?);
    Ok(())
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}
