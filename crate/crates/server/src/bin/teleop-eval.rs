use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use log::{error, info};
use teleop_server::eval::{load_fixtures, run_fixture, summarize, write_report, OperatorConfig};
use teleop_server::metrics::{MetricsLog, Mode};

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Hsi,
    Ee,
    Both,
}

/// Runs scripted operators against task fixtures and writes the metrics
/// summary.
#[derive(Parser)]
#[command(name = "teleop-eval", version)]
struct Cli {
    /// Directory of fixture files.
    #[arg(long)]
    fixtures: PathBuf,
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,
    /// Summary CSV; bar-chart data goes next to it.
    #[arg(long)]
    out: PathBuf,
    /// Also append every run's metrics record (NDJSON) here.
    #[arg(long)]
    metrics: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TELEOP_LOG_LEVEL", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    let modes: &[Mode] = match cli.mode {
        ModeArg::Hsi => &[Mode::Hsi],
        ModeArg::Ee => &[Mode::Ee],
        ModeArg::Both => &[Mode::Hsi, Mode::Ee],
    };
    let fixtures = load_fixtures(&cli.fixtures)?;
    let mut log = cli.metrics.as_deref().map(MetricsLog::open).transpose()?;
    let op = OperatorConfig::default();
    let mut records = Vec::new();
    let mut unexpected = 0;
    for f in &fixtures {
        for &mode in modes.iter().filter(|m| f.modes.contains(m)) {
            let r = run_fixture(f, mode, &op)?;
            println!(
                "{:<18} {:<3} {:<7} completion {:>7.2} s  interaction {:>7.2} s{}",
                f.name,
                mode.to_string(),
                if r.success { "success" } else { "failure" },
                r.record.completion_time,
                r.record.interaction_time,
                if r.expected { "" } else { "  (unexpected)" }
            );
            for c in r.checks.iter().filter(|c| !c.ok) {
                info!("  {} off by {:.4} m, support {:?}", c.instance_id, c.error, c.support);
            }
            if !r.expected {
                unexpected += 1;
            }
            if let Some(l) = log.as_mut() {
                l.append(&r.record)?;
            }
            records.push((r.record, r.success));
        }
    }
    let rows = summarize(&records);
    let bars = write_report(&cli.out, &rows)?;
    println!("{} runs; summary in {}, chart data in {}", records.len(), cli.out.display(), bars.display());
    Ok(if unexpected == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
