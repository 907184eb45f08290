mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use auction_learn::experiment::SCHEMA_VERSION;
use auction_learn::simulation::{aggregate_runs, run_seeds};
use auction_learn::verify::{self, Faults};
use auction_learn::{Error, ExperimentConfig, SweepParam};
use clap::{Args, Parser, Subcommand, ValueEnum};

use output::{ArmResult, Manifest, SweepRow, SweepSpec};

#[derive(Parser)]
#[command(name = "auction-learn", version, about = "Repeated procurement auctions with no-regret bidders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every arm of an experiment over all seeds.
    Run(RunArgs),
    /// Rerun an experiment once per value of one parameter.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// K, alpha_hat, eta, eta_scale, T or Q.
        #[arg(long)]
        param: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Check the solvers and estimators against brute-force oracles.
    Verify {
        #[arg(long, value_enum, hide = true)]
        inject_fault: Option<Fault>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `output.dir` from the config.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Threads for running seeds in parallel (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Replaces the config's seed list.
    #[arg(long, value_delimiter = ',')]
    seed_override: Option<Vec<u64>>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    RevelationBelowW,
    VcgWrongSign,
}

enum Failure {
    Config(String),
    Infeasible(String),
    Property,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Infeasible(_) => 2,
            Failure::Property => 3,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_infeasible() {
            Failure::Infeasible(e.to_string())
        } else {
            Failure::Config(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(format!("writing outputs: {e}"))
    }
}

struct Loaded {
    config: ExperimentConfig,
    text: String,
    path: PathBuf,
    out_dir: PathBuf,
    seed_override: bool,
}

fn load(args: &RunArgs) -> Result<Loaded, Failure> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Failure::Config(format!("{}: {e}", args.config.display())))?;
    let mut config =
        ExperimentConfig::from_toml(&text).map_err(|e| with_path(&args.config, e))?;
    if let Some(seeds) = &args.seed_override {
        config.override_seeds(seeds.clone())?;
    }
    let out_dir = args.out_dir.clone().unwrap_or_else(|| PathBuf::from(&config.output.dir));
    Ok(Loaded { config, text, path: args.config.clone(), out_dir, seed_override: args.seed_override.is_some() })
}

fn with_path(path: &Path, e: Error) -> Failure {
    match Failure::from(e) {
        Failure::Config(msg) => Failure::Config(format!("{}: {msg}", path.display())),
        other => other,
    }
}

fn run_arms(config: &ExperimentConfig, workers: usize) -> Result<Vec<ArmResult>, Failure> {
    let seeds = config.seeds()?;
    let mut arms = Vec::new();
    for (arm, &mode) in config.learning.arms.iter().enumerate() {
        let reports = run_seeds(&seeds, workers, |seed| {
            Ok(config.build_simulation(arm, seed)?.without_records().run(seed)?.report)
        })?;
        let summary = aggregate_runs(&reports)?;
        arms.push(ArmResult { mode, reports, summary });
    }
    Ok(arms)
}

fn manifest(loaded: &Loaded, config: &ExperimentConfig, workers: usize, command: String) -> Result<Manifest, Failure> {
    Ok(Manifest {
        schema_version: SCHEMA_VERSION,
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_path: loaded.path.clone(),
        config_sha256: output::sha256_hex(loaded.text.as_bytes()),
        config: loaded.text.clone(),
        seeds: config.seeds()?,
        seed_override: loaded.seed_override,
        workers,
        sweep: None,
        resolved: config.resolve()?,
        outputs: Vec::new(),
    })
}

fn cmd_run(args: &RunArgs) -> Result<(), Failure> {
    let loaded = load(args)?;
    let config = &loaded.config;
    let arms = run_arms(config, args.workers)?;
    let mut m = manifest(&loaded, config, args.workers, "run".into())?;
    m.outputs = output::write_run(&loaded.out_dir, &arms, &config.output.formats, config.output.keep_runs)?;
    m.outputs.push("manifest.json".into());
    output::write_json(&loaded.out_dir.join("manifest.json"), &m)?;
    for arm in &arms {
        let s = &arm.summary;
        println!(
            "{:<20} final regret {:>10.3} ± {:<9.3} alpha_avg {:>6.3}  social cost {:.3}",
            arm.mode.label(),
            s.final_regret_all.mean,
            s.final_regret_all.std,
            s.alpha_avg_all.mean,
            s.social_cost.mean
        );
    }
    println!("wrote {}", loaded.out_dir.display());
    Ok(())
}

fn cmd_sweep(args: &RunArgs, param: &str, values: &[f64]) -> Result<(), Failure> {
    let loaded = load(args)?;
    let p = SweepParam::parse(param)?;
    let mut rows = Vec::new();
    let mut outputs = Vec::new();
    for &value in values {
        let config = loaded.config.with_param(p, value)?;
        let arms = run_arms(&config, args.workers)?;
        let sub = format!("{}={value}", p.label());
        let dir = loaded.out_dir.join(&sub);
        let written = output::write_run(&dir, &arms, &config.output.formats, config.output.keep_runs)?;
        outputs.extend(written.into_iter().map(|f| format!("{sub}/{f}")));
        for arm in arms {
            println!(
                "{}={value:<8} {:<20} final regret {:>10.3}  alpha_avg {:>6.3}",
                p.label(),
                arm.mode.label(),
                arm.summary.final_regret_all.mean,
                arm.summary.alpha_avg_all.mean
            );
            rows.push(SweepRow { value, mode: arm.mode, summary: arm.summary });
        }
    }
    outputs.push(output::write_sweep(&loaded.out_dir, p.label(), &rows)?);
    let mut m = manifest(&loaded, &loaded.config, args.workers, "sweep".into())?;
    m.sweep = Some(SweepSpec { param: p.label().into(), values: values.to_vec() });
    outputs.push("manifest.json".into());
    m.outputs = outputs;
    output::write_json(&loaded.out_dir.join("manifest.json"), &m)?;
    println!("wrote {}", loaded.out_dir.display());
    Ok(())
}

fn cmd_verify(fault: Option<Fault>) -> Result<(), Failure> {
    let faults = Faults {
        revelation_below_w: matches!(fault, Some(Fault::RevelationBelowW)),
        vcg_wrong_sign: matches!(fault, Some(Fault::VcgWrongSign)),
    };
    let results = verify::run_all(faults);
    for r in &results {
        let tag = if r.passed() { "PASS" } else { "FAIL" };
        let extra = if r.detail.is_empty() { String::new() } else { format!(" ({})", r.detail) };
        println!("{tag} {}: {} violations in {} trials{extra}", r.name, r.violations, r.trials);
    }
    if results.iter().all(|r| r.passed()) {
        Ok(())
    } else {
        Err(Failure::Property)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep { run, param, values } => cmd_sweep(run, param, values),
        Command::Verify { inject_fault } => cmd_verify(*inject_fault),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(msg) => eprintln!("error: {msg}"),
                Failure::Infeasible(msg) => eprintln!("infeasible: {msg}"),
                Failure::Property => eprintln!("property check failed"),
            }
            ExitCode::from(f.code())
        }
    }
}
