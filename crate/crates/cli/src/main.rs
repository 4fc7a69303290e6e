//! `hotgate` command-line driver.
//!
//! Exit codes: 0 success, 1 selftest failure, 2 invalid input, 3 numerical failure.

use clap::{Args, Parser, Subcommand, ValueEnum};
use hotgate::config::ScenarioConfig;
use hotgate::errorbudget::{self, PhysicalParams, Preset};
use hotgate::output::write_json;
use hotgate::{scenarios, selftest, Error};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "hotgate", version, about = "Resonator-mediated two-qubit gate simulator and error budget")]
struct Cli {
    /// Directory for emitted artifacts.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads for parallel sweeps.
    #[arg(long, global = true, env = "HOTGATE_THREADS")]
    threads: Option<usize>,
    /// Seed for any sampled quantities; recorded in the manifest.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario configuration file.
    Simulate { config: PathBuf },
    /// Closed-form error budget; prints a JSON report.
    Budget(BudgetArgs),
    /// Oracle and invariant checks at small dimensions.
    Selftest {
        #[arg(long, hide = true, default_value_t = 1.0)]
        tolerance_scale: f64,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetArg {
    CircuitQed,
    Saw,
    Custom,
}

#[derive(Args, Debug)]
struct BudgetArgs {
    #[arg(long, value_enum, default_value = "custom")]
    preset: PresetArg,
    /// Resonator frequency ω_c/2π in GHz.
    #[arg(long = "fc", alias = "fc-ghz")]
    fc: Option<f64>,
    /// Effective coupling g/2π in GHz.
    #[arg(long = "g", alias = "g-ghz")]
    g: Option<f64>,
    /// Bath temperature in K.
    #[arg(long = "T", alias = "temperature")]
    temperature: Option<f64>,
    /// Resonator quality factor.
    #[arg(long = "Q", alias = "q")]
    q: Option<f64>,
    /// Qubit dephasing rate Γ/2π in GHz.
    #[arg(long = "gamma", alias = "gamma-ghz")]
    gamma: Option<f64>,
    /// Qubit relaxation rate γ₁/2π in GHz.
    #[arg(long = "gamma1", alias = "gamma1-ghz")]
    gamma1: Option<f64>,
    /// Qubit splitting ω_q/2π in GHz.
    #[arg(long = "fq", alias = "fq-ghz")]
    fq: Option<f64>,
    /// Ratio below which a ≪ condition counts as met.
    #[arg(long, default_value_t = errorbudget::DEFAULT_THRESHOLD)]
    threshold: f64,
}

#[derive(Serialize, Debug)]
struct ScenarioStatus {
    name: String,
    status: &'static str,
    message: Option<String>,
}

#[derive(Serialize, Debug)]
struct RunManifest {
    command: String,
    config_hash: Option<String>,
    tool_version: &'static str,
    seed: u64,
    started: String,
    finished: String,
    files: Vec<String>,
    scenarios: Vec<ScenarioStatus>,
}

fn exit_code_for(e: &Error) -> u8 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

struct Run {
    out_dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn new(cli: &Cli, command: &str) -> Run {
        Run {
            out_dir: cli.out_dir.clone(),
            manifest: RunManifest {
                command: command.to_string(),
                config_hash: None,
                tool_version: env!("CARGO_PKG_VERSION"),
                seed: cli.seed,
                started: now(),
                finished: String::new(),
                files: Vec::new(),
                scenarios: Vec::new(),
            },
        }
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.manifest.files.push(name.to_string());
        self.out_dir.join(name)
    }

    fn finish(mut self) -> Result<(), Error> {
        self.manifest.finished = now();
        let p = self.out_dir.join("manifest.json");
        write_json(&p, &self.manifest)
    }
}

fn simulate(cli: &Cli, config: &Path) -> Result<u8, Error> {
    let cfg = ScenarioConfig::load(config)?;
    std::fs::create_dir_all(&cli.out_dir)?;
    let mut run = Run::new(cli, "simulate");
    run.manifest.config_hash = Some(cfg.hash());
    let code = match scenarios::run_config(&cfg) {
        Ok(out) => {
            let csv = cfg.output.path.clone().unwrap_or_else(|| format!("{}.csv", cfg.name));
            let stem = Path::new(&csv).with_extension("");
            let json = format!("{}.json", stem.display());
            out.table.write(&run.path(&csv))?;
            write_json(&run.path(&json), &out.sidecar)?;
            let (status, code) = if out.numerical_failure { ("numerical-failure", 3) } else { ("ok", 0) };
            run.manifest.scenarios.push(ScenarioStatus { name: cfg.name.clone(), status, message: None });
            if code != 0 {
                eprintln!("error: scenario `{}` had points that failed numerical checks; see {json}", cfg.name);
            }
            code
        }
        Err(e) => {
            eprintln!("error: {e}");
            let status = if e.is_numerical() { "numerical-failure" } else { "invalid" };
            run.manifest.scenarios.push(ScenarioStatus { name: cfg.name.clone(), status, message: Some(e.to_string()) });
            exit_code_for(&e)
        }
    };
    run.finish()?;
    Ok(code)
}

fn physical_params(a: &BudgetArgs) -> Result<PhysicalParams, Error> {
    let base = match a.preset {
        PresetArg::CircuitQed => Some(Preset::CircuitQed.params()),
        PresetArg::Saw => Some(Preset::Saw.params()),
        PresetArg::Custom => None,
    };
    let pick = |flag: Option<f64>, preset: Option<f64>, name: &str, default: Option<f64>| {
        flag.or(preset).or(default).ok_or_else(|| Error::InvalidConfig(format!("--{name} is required without a preset")))
    };
    Ok(PhysicalParams {
        f_c_ghz: pick(a.fc, base.map(|b| b.f_c_ghz), "fc", None)?,
        g_ghz: pick(a.g, base.map(|b| b.g_ghz), "g", None)?,
        temperature_k: pick(a.temperature, base.map(|b| b.temperature_k), "T", None)?,
        q: pick(a.q, base.map(|b| b.q), "Q", Some(f64::INFINITY))?,
        gamma_ghz: pick(a.gamma, base.map(|b| b.gamma_ghz), "gamma", Some(0.0))?,
        gamma1_ghz: pick(a.gamma1, base.map(|b| b.gamma1_ghz), "gamma1", Some(0.0))?,
        f_q_ghz: pick(a.fq, base.map(|b| b.f_q_ghz), "fq", Some(0.0))?,
    })
}

fn budget(cli: &Cli, a: &BudgetArgs) -> Result<u8, Error> {
    let report = errorbudget::budget_physical(physical_params(a)?, a.threshold)?;
    let text = serde_json::to_string_pretty(&report).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    println!("{text}");
    std::fs::create_dir_all(&cli.out_dir)?;
    let mut run = Run::new(cli, "budget");
    write_json(&run.path("budget.json"), &report)?;
    run.manifest.scenarios.push(ScenarioStatus { name: "budget".into(), status: "ok", message: None });
    run.finish()?;
    Ok(0)
}

fn self_test(cli: &Cli, scale: f64) -> Result<u8, Error> {
    let report = selftest::run(cli.seed, scale)?;
    print!("{}", report.render());
    let pass = report.all_pass();
    println!("{}", if pass { "selftest: all checks passed" } else { "selftest: FAILED" });
    Ok(if pass { 0 } else { 1 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool already initialised: {e}");
        }
    }
    let result = match &cli.command {
        Command::Simulate { config } => simulate(&cli, config),
        Command::Budget(a) => budget(&cli, a),
        Command::Selftest { tolerance_scale } => self_test(&cli, *tolerance_scale),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
