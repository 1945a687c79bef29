use std::path::PathBuf;
use std::process::ExitCode;

use boa_lab::harness::{run, verify, Experiment, SimConfig};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "boa-lab", version, about = "Adiabatic effective-dynamics convergence laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write CSV/JSON results.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// thm1, thm3, remainder, naip, identities or all.
        #[arg(long, value_parser = parse_experiment)]
        experiment: Experiment,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the assumption certificate and step check without running dynamics.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    s.parse().map_err(|e: boa_lab::LabError| e.to_string())
}

fn execute(cli: Cli) -> boa_lab::Result<bool> {
    match cli.command {
        Command::Run {
            config,
            experiment,
            out,
            seed,
        } => {
            let mut cfg = SimConfig::load(&config)?;
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let output = run(&cfg, experiment)?;
            let report = &output.report;
            for r in &report.reports {
                let slope = r.fit.map_or_else(|| "n/a".to_string(), |f| format!("{:.3} (R² {:.4})", f.slope, f.r_squared));
                println!(
                    "{:<14} slope {:<22} {:?}  {}",
                    r.experiment,
                    slope,
                    r.status,
                    if r.band_met { "ok" } else { "FAIL" }
                );
            }
            for c in &report.checks {
                let mark = match (c.passed, c.acceptance) {
                    (true, _) => "ok",
                    (false, true) => "FAIL",
                    (false, false) => "off-band",
                };
                println!("{:<44} {:>12.4e}  {}", c.name, c.value, mark);
            }
            if let Some(csv) = &output.csv {
                println!("wrote {}", csv.display());
            }
            println!("wrote {}", output.json.display());
            Ok(report.all_bands_met)
        }
        Command::Verify { config } => {
            let cfg = SimConfig::load(&config)?;
            let v = verify(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(v.passed)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
