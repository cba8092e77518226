//! `ntzone` command-line front end.
//!
//! Exit codes: 0 success, 2 config parse error, 3 validation error,
//! 4 numerical failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use ntzone::config::{ConfigError, RunConfig};
use ntzone::corrector1d::{u0_1d_via_generator, Corrector1D};
use ntzone::report::{boundaries_table, study_table, sweep_table, Table};
use ntzone::simulate::{paired_difference, SimConfig, RNG_NAME};
use ntzone::{
    certainty_equivalent_loss, ellipsoid_solution, estimate_welfare, merton_solution, scaling_study,
    trading_boundaries_1d, width_sweep, Error,
};

const BUILD_ID: &str = env!("NTZONE_BUILD_ID");

#[derive(Parser)]
#[command(name = "ntzone", version, about = "No-trade regions under small fixed transaction costs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long, short)]
    config: PathBuf,
    /// Write CSV here (plus a manifest sidecar) instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimFlags {
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Fixed cost; overrides `lambda` in the config.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Frictionless Merton solution.
    Merton {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Single-asset trading boundaries and equivalent proportional cost over a wealth grid.
    Boundaries {
        #[command(flatten)]
        common: Common,
        /// Comma-separated wealth levels; defaults to 50 log-spaced levels in [1000, 100000].
        #[arg(long, value_delimiter = ',')]
        wealth: Option<Vec<f64>>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Single-asset corrector coefficients at one wealth level.
    Corrector {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long)]
        wealth: Option<f64>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// No-trade ellipsoid boundary in weight space.
    Ellipsoid {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        wealth: Option<f64>,
        #[arg(long, default_value_t = 360)]
        points: usize,
    },
    /// Monte Carlo welfare estimate of the almost-optimal policy.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimFlags,
    },
    /// Welfare loss and trade frequency across fixed costs, with log-log slopes.
    Scaling {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimFlags,
        #[arg(long, value_delimiter = ',')]
        lambdas: Option<Vec<f64>>,
    },
    /// Welfare loss as the single-asset width constant is scaled.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sim: SimFlags,
        #[arg(long, value_delimiter = ',')]
        multipliers: Option<Vec<f64>>,
    },
}

enum Failure {
    Parse(String),
    Invalid(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Parse(_) => 2,
            Failure::Invalid(_) => 3,
            Failure::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Parse(m) | Failure::Invalid(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Invalid(e.to_string())
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Parse(m) => Failure::Parse(m),
            ConfigError::Invalid(e) => e.into(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Invalid(format!("{}: {e}", path.display()))
}

struct Loaded {
    cfg: RunConfig,
    digest: String,
}

fn load(path: &Path) -> Result<Loaded, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Failure::Parse(format!("{}: not UTF-8", path.display())))?;
    let cfg = RunConfig::from_json(&text)?;
    Ok(Loaded { cfg, digest: hex::encode(Sha256::digest(&bytes)) })
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: String,
    config_digest: &'a str,
    seed: Option<u64>,
    outputs: Vec<String>,
    library_version: &'a str,
    build_id: &'a str,
    results: serde_json::Value,
}

/// Writes the CSV to `--out` with a manifest sidecar, or prints it.
fn emit(
    command: &str,
    common: &Common,
    loaded: &Loaded,
    table: &Table,
    seed: Option<u64>,
    results: serde_json::Value,
    extra: Vec<(PathBuf, String)>,
) -> Result<(), Failure> {
    let Some(out) = &common.out else {
        print!("{}", table.to_csv());
        if !results.is_null() {
            eprintln!("{}", serde_json::to_string_pretty(&results).unwrap());
        }
        return Ok(());
    };
    fs::write(out, table.to_csv()).map_err(|e| io_failure(out, e))?;
    let mut outputs = vec![out.display().to_string()];
    for (path, body) in &extra {
        fs::write(path, body).map_err(|e| io_failure(path, e))?;
        outputs.push(path.display().to_string());
    }
    let manifest = RunManifest {
        command,
        config: common.config.display().to_string(),
        config_digest: &loaded.digest,
        seed,
        outputs,
        library_version: env!("CARGO_PKG_VERSION"),
        build_id: BUILD_ID,
        results,
    };
    let path = sidecar(out, "manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).unwrap() + "\n")
        .map_err(|e| io_failure(&path, e))?;
    Ok(())
}

fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut name = out.file_stem().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    out.with_file_name(name)
}

fn require(value: Option<f64>, fallback: Option<f64>, key: &str) -> Result<f64, Failure> {
    value
        .or(fallback)
        .ok_or_else(|| Failure::Invalid(format!("missing `{key}` (flag or config key)")))
}

fn threads_from_env() -> Result<usize, Failure> {
    match std::env::var("NTZONE_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Invalid(format!("NTZONE_THREADS must be a count, got `{v}`"))),
        Err(_) => Ok(0),
    }
}

fn sim_config(cfg: &RunConfig, flags: &SimFlags) -> Result<SimConfig, Failure> {
    let mut cfg = cfg.clone();
    if flags.lambda.is_some() {
        cfg.lambda = flags.lambda;
    }
    let mut sim = cfg.sim_config()?;
    if let Some(v) = flags.paths {
        sim.n_paths = v;
    }
    if let Some(v) = flags.seed {
        sim.seed = v;
    }
    if let Some(v) = flags.dt {
        sim.dt = v;
    }
    if let Some(v) = flags.horizon {
        sim.horizon = v;
    }
    sim.threads = threads_from_env()?;
    sim.validate()?;
    Ok(sim)
}

fn sim_metadata(sim: &SimConfig) -> serde_json::Value {
    json!({
        "seed": sim.seed,
        "dt": sim.dt,
        "horizon": sim.horizon,
        "n_paths": sim.n_paths,
        "eta": sim.eta,
        "tail_mode": sim.tail_mode,
        "rng": RNG_NAME,
        "build_id": BUILD_ID,
    })
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Merton { config } => {
            let loaded = load(&config)?;
            let sol = merton_solution(&loaded.cfg.market()?, &loaded.cfg.preferences()?)?;
            let weights: Vec<String> = sol.pi_m.iter().map(|w| w.to_string()).collect();
            println!("pi_m = [{}]", weights.join(", "));
            println!("c_m = {}", sol.c_m);
            println!("c_m_2gamma = {}", sol.c_m_double);
            println!("v0 = {}", sol.v0);
            println!("alpha_condition_number = {}", sol.alpha_condition_number());
        }
        Command::Boundaries { common, wealth, lambda } => {
            let loaded = load(&common.config)?;
            let sol = merton_solution(&loaded.cfg.market()?, &loaded.cfg.preferences()?)?;
            let lambda = require(lambda, loaded.cfg.lambda, "lambda")?;
            let grid = wealth.unwrap_or_else(|| log_grid(1000.0, 100_000.0, 50));
            let table = boundaries_table(&sol, &grid, lambda)?;
            emit("boundaries", &common, &loaded, &table, None, json!({ "lambda": lambda }), vec![])?;
        }
        Command::Corrector { config, wealth, lambda } => {
            let loaded = load(&config)?;
            let sol = merton_solution(&loaded.cfg.market()?, &loaded.cfg.preferences()?)?;
            let z = require(wealth, loaded.cfg.wealth, "wealth")?;
            let c = Corrector1D::from_solution(&sol)?;
            let k = c.coeffs(z)?;
            println!("A = {}", k.a_coef);
            println!("B = {}", k.b_coef);
            println!("xi0 = {}", k.xi0);
            println!("a = {}", k.a);
            println!("u0 = {}", c.u0(sol.c_m, sol.c_m_double)?);
            println!("u0_generator_route = {}", u0_1d_via_generator(&sol)?);
            if let Some(l) = lambda.or(loaded.cfg.lambda) {
                let (lo, hi) = trading_boundaries_1d(&sol, z, l)?;
                println!("boundaries = [{lo}, {hi}]");
            }
        }
        Command::Ellipsoid { common, lambda, wealth, points } => {
            let loaded = load(&common.config)?;
            let sol = merton_solution(&loaded.cfg.market()?, &loaded.cfg.preferences()?)?;
            let e = ellipsoid_solution(&sol)?;
            let lambda = require(lambda, loaded.cfg.lambda, "lambda")?;
            let z = require(wealth, loaded.cfg.wealth, "wealth")?;
            let pts = e.boundary_points(z, lambda, points)?;
            let d = sol.dim();
            let mut header = vec!["angle"];
            let names = ["w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8"];
            if d > names.len() {
                return Err(Failure::Invalid(format!("ellipsoid output supports up to {} assets", names.len())));
            }
            header.extend_from_slice(&names[..d]);
            let mut table = Table::new(header);
            for (angle, p) in &pts {
                let mut row = vec![*angle];
                row.extend(p.iter());
                table.push(row);
            }
            let rows: Vec<Vec<f64>> = (0..d).map(|i| e.m.row(i).iter().copied().collect()).collect();
            let results = json!({
                "M": rows,
                "a0": e.a0,
                "a0_normalized": e.a0_tilde,
                "u0": e.u0,
                "riccati_residual": e.residual,
                "pi_m": e.pi_m.iter().collect::<Vec<_>>(),
                "certainty_equivalent_loss": certainty_equivalent_loss(&sol, &e, z, lambda)?,
                "lambda": lambda,
                "wealth": z,
            });
            let extra = match &common.out {
                Some(out) => vec![(
                    sidecar(out, "ellipsoid.json"),
                    serde_json::to_string_pretty(&results).unwrap() + "\n",
                )],
                None => vec![],
            };
            emit("ellipsoid", &common, &loaded, &table, None, results, extra)?;
        }
        Command::Simulate { common, sim } => {
            let loaded = load(&common.config)?;
            let cfg = sim_config(&loaded.cfg, &sim)?;
            let res = estimate_welfare(&cfg)?;
            let table = study_table(std::slice::from_ref(&res));
            let results = json!({ "meta": sim_metadata(&cfg), "result": res });
            emit("simulate", &common, &loaded, &table, Some(cfg.seed), results, vec![])?;
        }
        Command::Scaling { common, sim, lambdas } => {
            let loaded = load(&common.config)?;
            let lambdas = lambdas
                .or_else(|| loaded.cfg.lambdas.clone())
                .ok_or_else(|| Failure::Invalid("missing `lambdas` (flag or config key)".into()))?;
            let mut run_cfg = loaded.cfg.clone();
            if run_cfg.lambda.is_none() && sim.lambda.is_none() {
                run_cfg.lambda = lambdas.iter().cloned().reduce(f64::max);
            }
            let cfg = sim_config(&run_cfg, &sim)?;
            let study = scaling_study(&cfg, &lambdas)?;
            let table = study_table(&study.results);
            let results = json!({
                "meta": sim_metadata(&cfg),
                "loss_slope": study.loss_slope,
                "trade_slope": study.trade_slope,
                "predicted_losses": study.predicted_losses,
            });
            emit("scaling", &common, &loaded, &table, Some(cfg.seed), results, vec![])?;
        }
        Command::Sweep { common, sim, multipliers } => {
            let loaded = load(&common.config)?;
            let multipliers = multipliers
                .or_else(|| loaded.cfg.multipliers.clone())
                .unwrap_or_else(|| vec![0.25, 0.5, 1.0, 2.0, 4.0]);
            let cfg = sim_config(&loaded.cfg, &sim)?;
            let results = width_sweep(&cfg, &multipliers)?;
            let reference = multipliers.iter().position(|&c| c == 1.0).unwrap_or(0);
            let paired = results
                .iter()
                .map(|r| paired_difference(r, &results[reference]))
                .collect::<Result<Vec<_>, _>>()?;
            let table = sweep_table(&results, &paired);
            let meta = json!({
                "meta": sim_metadata(&cfg),
                "reference_multiplier": multipliers[reference],
            });
            emit("sweep", &common, &loaded, &table, Some(cfg.seed), meta, vec![])?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
