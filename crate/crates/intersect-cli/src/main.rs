use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use intersect_cli::{run_scenario, RunArgs};

#[derive(Parser)]
#[command(name = "intersect", about = "Intersection coordination simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its trace, summary and optional series.
    Run {
        /// Scenario file, or a name under `scenarios/`.
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Stops the run at this time (s).
        #[arg(long)]
        until: Option<f64>,
        /// Disables the recovery overshoot barrier.
        #[arg(long)]
        no_anti_overshoot: bool,
        /// Comma-separated series: speeds, ped_distances, min_safety, trajectory_xy, steering.
        #[arg(long, value_delimiter = ',')]
        export: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run { scenario, out, seed, until, no_anti_overshoot, export } = cli.command;
    let args = RunArgs { scenario, out, seed, until, anti_overshoot: !no_anti_overshoot, export };
    match run_scenario(&args) {
        Ok(report) => {
            let m = &report.metrics;
            println!(
                "{} seed={} wall_ms={} records={} min_rear_end={} min_lateral={} min_pedestrian={} min_speed={}",
                report.scenario,
                report.seed,
                report.wall_ms,
                m.records,
                m.min_rear_end,
                m.min_lateral,
                m.min_pedestrian,
                m.min_speed
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
