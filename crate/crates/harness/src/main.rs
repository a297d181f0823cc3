use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use mentorcore::metrics::RegretKind;
use mentorcore_harness::{fit_and_report, plot, run_experiment, write_csv, ExperimentConfig, RunOptions};

/// Run a horizon sweep and write CSV results plus a JSON slope summary.
///
/// Exits 0 iff every configured slope ceiling passes.
#[derive(Debug, Parser)]
#[command(name = "mentorcore", version)]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// CSV output path; overrides `output` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Root seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per horizon override.
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated metric override, e.g. `MDP,QUERIES`.
    #[arg(long, value_delimiter = ',')]
    metric: Option<Vec<RegretKind>>,
    /// Write log-log SVG plots next to the CSV.
    #[arg(long)]
    emit_plots: bool,
    /// Record wall-clock milliseconds in the CSV (breaks byte-for-byte reproducibility).
    #[arg(long)]
    timing: bool,
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    if let Ok(threads) = std::env::var("MENTORCORE_THREADS") {
        let n: usize = threads.parse().context("MENTORCORE_THREADS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    let mut config = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(trials) = cli.trials {
        config.trials = trials;
    }
    if let Some(metrics) = cli.metric {
        config.metrics = metrics;
    }
    config.validate()?;
    let out = cli.out.or_else(|| config.output.clone()).unwrap_or_else(|| PathBuf::from("results.csv"));

    let rows = run_experiment(&config, RunOptions { timing: cli.timing })?;
    let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    write_csv(&rows, file)?;

    let summary = fit_and_report(&rows, &config.ceilings, config.environment.dim());
    let summary_path = out.with_extension("summary.json");
    std::fs::write(&summary_path, serde_json::to_string_pretty(&summary)? + "\n")?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    for m in &summary.metrics {
        let slope = m.fit.as_ref().map_or("n/a".to_string(), |f| format!("{:.4}", f.slope));
        let verdict = match m.pass {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "-",
        };
        println!(
            "{:<8} slope {slope:>8}  ceiling {:>6}  reference {:.4}  {verdict}",
            m.metric,
            m.ceiling.map_or("-".to_string(), |c| c.to_string()),
            summary.reference_exponent
        );
    }
    if cli.emit_plots {
        let dir = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(std::path::Path::new("."));
        for p in plot::plot_csv(&out, dir)? {
            println!("wrote {}", p.display());
        }
    }
    println!("wrote {} and {}", out.display(), summary_path.display());
    Ok(summary.all_pass)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
