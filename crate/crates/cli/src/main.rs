use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ma_noma::experiments::{
    cmd_convergence, cmd_single, cmd_sweep_antennas, cmd_sweep_power, ANTENNA_COLUMNS,
    CONVERGENCE_COLUMNS, POWER_COLUMNS,
};
use ma_noma::optimizer::RunOptions;
use ma_noma::{Error, ScenarioConfig};

const DEFAULTS: &str = "\
Scenario defaults (override with --config <file.toml>, same key names):
  M = 4                      antennas
  K = 3                      users
  L = 5                      paths per user
  A = 3.0                    region side, wavelengths
  D = 0.5                    minimum antenna spacing, wavelengths
  P_s = 10.0                 transmit power, dBm
  sigma2 = -80.0             noise power, dBm
  R_min = 0.25               per-user minimum rate, bps/Hz
  pathloss_ref_db = -30.0    path loss at 1 m, dB
  pathloss_exponent = 2.8
  distance_range_m = [50.0, 100.0]
  trials = 50
  seed = 2024
  order_policy = \"auto\"      enumerate orders for K <= 3, else channel-norm heuristic
  enumeration_cap = 4
  eps = 0.001                relative-increase stopping threshold
  T_max = 150                maximum outer iterations

Exit status is 0 on success, 2 on configuration errors and 1 on solver or
I/O failures; errors are printed to stderr as one JSON object.";

#[derive(Parser, Debug)]
#[command(name = "ma-noma", version, about = "Movable-antenna NOMA sum-rate experiments", after_help = DEFAULTS)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Scenario file (TOML); unspecified keys keep their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed [default: from config, 2024].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte-Carlo trials per sweep point [default: from config, 50].
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "results", value_name = "DIR")]
    out: PathBuf,
    /// Worker threads for trials; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Mean objective per iteration for several array sizes (K and P_s from config).
    Convergence {
        /// Antenna counts.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
        ms: Vec<usize>,
    },
    /// All schemes versus transmit power.
    SweepPower {
        /// Transmit powers in dBm.
        #[arg(long, value_delimiter = ',', default_value = "10,12,14,16,18,20,22,24")]
        powers: Vec<f64>,
    },
    /// All schemes versus antenna and user counts.
    SweepAntennas {
        /// Antenna counts.
        #[arg(long, value_delimiter = ',', default_value = "2,3,4,5,6")]
        ms: Vec<usize>,
        /// User counts.
        #[arg(long, value_delimiter = ',', default_value = "2,3")]
        ks: Vec<usize>,
        /// Transmit power in dBm.
        #[arg(long, default_value_t = 20.0)]
        power: f64,
    },
    /// One trial with every iterate dumped to JSON.
    Single,
}

fn load_config(common: &Common) -> Result<ScenarioConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::from_toml_str(&std::fs::read_to_string(path)?)?,
        None => ScenarioConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn report_paths(csv: &Path, json: &Path) {
    println!("wrote {}", csv.display());
    println!("wrote {}", json.display());
}

fn execute(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(&cli.common)?;
    let options = RunOptions::default();
    let out = &cli.common.out;
    match &cli.command {
        Command::Convergence { ms } => {
            let rep = cmd_convergence(&cfg, ms, &options)?;
            let (csv, json) = rep.write(out, "convergence", &CONVERGENCE_COLUMNS)?;
            report_paths(&csv, &json);
        }
        Command::SweepPower { powers } => {
            let rep = cmd_sweep_power(&cfg, powers, &options)?;
            let (csv, json) = rep.write(out, "sweep_power", &POWER_COLUMNS)?;
            report_paths(&csv, &json);
        }
        Command::SweepAntennas { ms, ks, power } => {
            let cfg = ScenarioConfig {
                power_dbm: *power,
                ..cfg
            };
            cfg.validate()?;
            let rep = cmd_sweep_antennas(&cfg, ms, ks, &options)?;
            let (csv, json) = rep.write(out, "sweep_antennas", &ANTENNA_COLUMNS)?;
            report_paths(&csv, &json);
        }
        Command::Single => {
            let dump = cmd_single(&cfg, &options)?;
            std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
            let path = out.join("single.json");
            std::fs::write(&path, serde_json::to_string_pretty(&dump)?)?;
            println!("wrote {}", path.display());
            println!(
                "objective {:.6} bps/Hz after {} iterations ({:?})",
                dump.record.objective(),
                dump.record.iterations,
                dump.record.status
            );
        }
    }
    Ok(())
}

fn error_kind(e: &anyhow::Error) -> (&'static str, u8) {
    match e.downcast_ref::<Error>() {
        Some(Error::Config(_)) | Some(Error::InvalidInput(_)) => ("config", 2),
        Some(Error::Solver(_)) => ("solver", 1),
        Some(Error::Io(_)) => ("io", 1),
        Some(_) => ("internal", 1),
        None if e.downcast_ref::<std::io::Error>().is_some() => ("io", 1),
        None => ("internal", 1),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.common.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.common.threads)
            .build_global()
        {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = error_kind(&e);
            let msg = serde_json::json!({ "error": { "kind": kind, "message": format!("{e:#}") } });
            eprintln!("{msg}");
            ExitCode::from(code)
        }
    }
}
