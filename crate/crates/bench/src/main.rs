use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use coreplan::features::{epsilon_approx, FeatureFile};
use coreplan::mdp::value_iteration;
use coreplan_bench::config::InstanceSource;
use coreplan_bench::experiment::RunReport;
use coreplan_bench::{plot, report, run_experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "coreplan", version, about = "Core-state planners: experiments, bound checks, reports")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the base seed (and the generator seed for `generate`).
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; rayon's default when absent.
    #[arg(long)]
    parallel: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance and write `mdp.json`, `features.json` and `instance.json`.
    Generate(Common),
    /// Run an experiment and write `trials.csv` and `report.json`.
    Run(Common),
    /// Plot `report.json` from the output directory.
    Plot(Common),
    /// Run an experiment and print the checks without writing files.
    Verify(Common),
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let Some(path) = &common.config else {
        bail!("--config is required");
    };
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(trials) = common.trials {
        config.trials = trials;
    }
    if let Some(out) = &common.out {
        config.out = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn print_checks(report: &RunReport) {
    for c in &report.checks {
        let tag = match (c.passed, c.hard) {
            (true, _) => "ok",
            (false, true) => "FAIL",
            (false, false) => "flag",
        };
        println!("[{tag:>4}] {}: {}", c.name, c.detail);
    }
    if let Some(s) = report.gap_slope {
        println!("gap slope {s:.4}");
    }
}

fn generate(common: &Common) -> Result<ExitCode> {
    let mut config = load_config(common)?;
    let InstanceSource::Generate(spec) = &mut config.instance else {
        bail!("generate needs a generator instance source");
    };
    if let Some(seed) = common.seed {
        spec.seed = seed;
    }
    let inst = config.instance()?;
    std::fs::create_dir_all(&config.out)?;
    inst.mdp.save(config.out.join("mdp.json"))?;
    FeatureFile::from_parts(&inst.features, &inst.core).save(config.out.join("features.json"))?;
    let v = value_iteration(&inst.mdp, 1e-11);
    let (eps, _) = epsilon_approx(&inst.features, &v)?;
    let summary = serde_json::json!({
        "num_states": inst.mdp.num_states(),
        "num_actions": inst.mdp.num_actions(),
        "gamma": inst.mdp.gamma(),
        "dim": inst.features.dim(),
        "core": inst.core.indices(),
        "eps_approx": eps,
        "v_star": v.values,
    });
    std::fs::write(config.out.join("instance.json"), serde_json::to_string_pretty(&summary)?)?;
    println!(
        "wrote {} (S={}, A={}, d={}, m={}, ε={eps:.3e})",
        config.out.display(),
        inst.mdp.num_states(),
        inst.mdp.num_actions(),
        inst.features.dim(),
        inst.core.len()
    );
    Ok(ExitCode::SUCCESS)
}

fn run(common: &Common, write: bool) -> Result<ExitCode> {
    let config = load_config(common)?;
    let report = run_experiment(&config, common.parallel)?;
    if write {
        report::write_all(&report, &config.out)?;
        println!("wrote {}", config.out.display());
    }
    print_checks(&report);
    Ok(if report.hard_failures() == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn plot_cmd(common: &Common) -> Result<ExitCode> {
    let dir = match (&common.out, &common.config) {
        (Some(out), _) => out.clone(),
        (None, Some(_)) => load_config(common)?.out,
        (None, None) => PathBuf::from("out"),
    };
    let report = report::read_json(&dir.join(report::REPORT_FILE))?;
    let out = plot::emit_plots(&report, &dir)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(c) => generate(c),
        Command::Run(c) => run(c, true),
        Command::Plot(c) => plot_cmd(c),
        Command::Verify(c) => run(c, false),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(2)
    })
}
