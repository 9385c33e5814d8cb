use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ddopt::checks::{run_checks, CheckOptions};
use ddopt::config::{ConfigSources, LoadedConfig, Profile, Scenario};
use ddopt::experiments::{build_instance, oracle_json, run_experiment, solve_oracle, write_outputs, TrialOracle};
use ddopt::Error;

#[derive(Parser, Debug)]
#[command(name = "ddopt", version, about = "Online optimization under decision-dependent distribution dynamics")]
struct Cli {
    /// Worker threads (default: number of logical cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured experiment and write CSV/JSON outputs.
    Run(ConfigArgs),
    /// Run a rate sweep over the configured horizons.
    Sweep(ConfigArgs),
    /// Solve for the optimal decision of the trial-0 instance.
    Oracle(ConfigArgs),
    /// Run the invariant suites.
    Check(CheckArgs),
    /// Print the resolved configuration, defaults included.
    Describe(ConfigArgs),
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Scale profile: fast (desk scale) or paper.
    #[arg(long)]
    profile: Option<String>,

    /// Override a configuration value, e.g. `--set optimizer.eta=0.01` or `--set eta=0.01`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Output directory (default: experiment.output).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Scenario used when the configuration does not name one.
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Run only this suite.
    #[arg(long)]
    suite: Option<String>,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Multiplier on the number of random cases.
    #[arg(long, default_value_t = 1.0)]
    scale: f64,

    /// Test hook: perturb the named suite so that it fails.
    #[arg(long, hide = true)]
    inject_failure: Option<String>,
}

/// Errors split by exit status: 2 for configuration problems, 1 otherwise.
fn exit_code(e: &Error) -> ExitCode {
    if e.is_config() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn load(args: &ConfigArgs) -> Result<LoadedConfig, Error> {
    if let Some(path) = &args.config {
        if !path.is_file() {
            return Err(Error::Config(format!("config file not found: {}", path.display())));
        }
    }
    let profile = args.profile.as_deref().map(str::parse::<Profile>).transpose()?;
    let scenario = args.scenario.as_deref().map(str::parse::<Scenario>).transpose()?;
    ConfigSources {
        file: args.config.as_deref(),
        profile,
        overrides: &args.overrides,
        seed_env: None,
        scenario,
    }
    .with_env()
    .load()
}

fn out_dir(args: &ConfigArgs, loaded: &LoadedConfig) -> PathBuf {
    args.out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&loaded.config.experiment.output))
}

fn fmt_opt(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.4e}")
    } else {
        "n/a".into()
    }
}

fn cmd_run(args: &ConfigArgs, require_sweep: bool) -> Result<(), Error> {
    let loaded = load(args)?;
    let cfg = &loaded.config;
    if require_sweep && cfg.experiment.scenario != Scenario::RateSweep {
        return Err(Error::Config(format!(
            "sweep needs a rate_sweep configuration, got {}",
            cfg.experiment.scenario
        )));
    }
    let out = run_experiment(cfg)?;
    let dir = out_dir(args, &loaded);
    write_outputs(&out, Some(&loaded), &dir)?;
    if let Some(sweep) = &out.sweep {
        for p in &sweep.points {
            println!(
                "horizon {:>6}  eta {:.4e}  mean squared gradient {:.4e}",
                p.horizon, p.eta, p.mean
            );
        }
        println!("log-log slope {:.4}", sweep.slope);
    } else {
        for s in &out.summaries {
            println!(
                "{:<9} trials {:>3}  final gap {}  final distance {}  final W1 {}",
                s.algorithm.name(),
                s.summary.trials,
                fmt_opt(s.final_gap()),
                fmt_opt(s.final_distance()),
                fmt_opt(s.final_w1())
            );
        }
    }
    println!("outputs written to {}", dir.display());
    Ok(())
}

fn cmd_oracle(args: &ConfigArgs) -> Result<(), Error> {
    let loaded = load(args)?;
    let cfg = &loaded.config;
    let inst = build_instance(cfg, 0)?;
    let sol = solve_oracle(cfg, &inst, 0)?;
    let items: Vec<String> = sol.u_star.iter().map(|x| format!("{x:.10e}")).collect();
    println!("u* = [{}]", items.join(", "));
    println!("value* = {:.12e}", sol.value_star);
    println!("residual = {:.3e}", sol.residual);
    println!("converged restarts = {}/{}", sol.converged_restarts, cfg.oracle.restarts);
    let dir = out_dir(args, &loaded);
    std::fs::create_dir_all(&dir)?;
    let meta = serde_json::json!({
        "scenario": cfg.experiment.scenario.name(),
        "master_seed": cfg.experiment.seed,
        "config": serde_json::to_value(cfg)?,
        "oracle": oracle_json(&TrialOracle { trial: 0, solution: sol }),
    });
    let path = dir.join("oracle.json");
    std::fs::write(&path, serde_json::to_string_pretty(&meta)? + "\n")?;
    println!("written to {}", path.display());
    Ok(())
}

fn cmd_describe(args: &ConfigArgs) -> Result<(), Error> {
    let loaded = load(args)?;
    print!("{}", loaded.config.to_toml()?);
    for (k, v) in &loaded.overrides {
        println!("# override {k} = {v}");
    }
    if let Some(s) = loaded.seed_from_env {
        println!("# seed {s} from DDOPT_SEED");
    }
    Ok(())
}

fn cmd_check(args: &CheckArgs) -> Result<bool, Error> {
    let opts = CheckOptions {
        seed: args.seed,
        scale: args.scale,
        inject: args.inject_failure.clone(),
    };
    let reports = run_checks(args.suite.as_deref(), &opts)?;
    let mut ok = true;
    for r in &reports {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        println!(
            "{status} {:<13} cases {:>5}  worst {:.3e}  tolerance {:.0e}",
            r.suite, r.cases, r.worst, r.tolerance
        );
        for f in &r.failures {
            println!("    {}: {f}", r.suite);
        }
        ok &= r.passed();
    }
    Ok(ok)
}

fn configure_threads(jobs: Option<usize>) -> Result<(), Error> {
    if let Some(n) = jobs {
        if n == 0 {
            return Err(Error::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot configure {n} worker threads: {e}")))?;
    }
    Ok(())
}

fn report(e: &Error) {
    // Wrapping variants already embed their source in the message.
    eprintln!("error: {e}");
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads(cli.jobs) {
        report(&e);
        return exit_code(&e);
    }
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a, false),
        Command::Sweep(a) => cmd_run(a, true),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Describe(a) => cmd_describe(a),
        Command::Check(a) => match cmd_check(a) {
            Ok(true) => return ExitCode::SUCCESS,
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            exit_code(&e)
        }
    }
}
