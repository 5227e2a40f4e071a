use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use plecho_cli::{runner, CliError};

#[derive(Parser)]
#[command(
    name = "plecho",
    version,
    about = "Phase-locked photon-echo simulator: run scenarios, sweep parameters, validate protocol algebra, fit decays"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write the signal CSV and summary JSON.
    Run {
        /// Scenario file (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Also render an SVG plot from the written CSV.
        #[arg(long)]
        svg: bool,
        /// Worker threads (0 = automatic).
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Sweep one protocol parameter and write the result table.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Swept parameter: r-delay, lock-duration, b1-delay or b2-area.
        #[arg(long)]
        axis: String,
        /// Comma list ("10,20,30") or range ("0.5pi:12pi:0.25pi").
        #[arg(long, allow_hyphen_values = true)]
        values: String,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        svg: bool,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Check protocol algebra without simulating: sequence validity, area
    /// classification, echo-time prediction and phase matching.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Fit I(t) = I0*exp(-2t/tau) to two CSV columns.
    Fit {
        /// Input CSV with a header row.
        csv: PathBuf,
        /// Names of the time and intensity columns.
        #[arg(long, default_value = "value,intensity")]
        columns: String,
    },
}

fn configure_threads(threads: usize) {
    if threads > 0 {
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, out_dir, svg, threads } => {
            configure_threads(threads);
            let artifacts = runner::cmd_run(&config, &out_dir, svg)?;
            let s = &artifacts.summary_value;
            println!(
                "echo at {:.4} us (predicted {:.4}), |P| = {:.6}",
                s.echo_time_us,
                s.predicted_echo_time_us,
                (s.echo_amplitude_re * s.echo_amplitude_re
                    + s.echo_amplitude_im * s.echo_amplitude_im)
                    .sqrt()
            );
            if let Some(eff) = s.efficiency {
                println!("signed efficiency vs two-pulse reference: {eff:+.4}");
            }
            if let Some(c) = &s.area_classification {
                println!("area classification: {}", c.condition);
            }
            println!("wrote {}", artifacts.csv.display());
            println!("wrote {}", artifacts.summary.display());
            if let Some(svg) = &artifacts.svg {
                println!("wrote {}", svg.display());
            }
            Ok(())
        }
        Command::Sweep { config, axis, values, out_dir, svg, threads } => {
            configure_threads(threads);
            let artifacts = runner::cmd_sweep(&config, &axis, &values, &out_dir, svg)?;
            let ok = artifacts.table.rows.iter().filter(|r| r.outcome.is_ok()).count();
            println!(
                "{} of {} points simulated; reference echo at {:.4} us",
                ok,
                artifacts.table.rows.len(),
                artifacts.table.reference.t_peak
            );
            println!("wrote {}", artifacts.csv.display());
            println!("wrote {}", artifacts.summary.display());
            if let Some(svg) = &artifacts.svg {
                println!("wrote {}", svg.display());
            }
            Ok(())
        }
        Command::Validate { config, out_dir } => {
            let report = runner::cmd_validate(&config, &out_dir)?;
            if report.sequence_valid {
                println!("sequence: valid");
            } else {
                println!("sequence: INVALID");
                for v in &report.violations {
                    println!("  {}: {}", v.code, v.message);
                }
            }
            if let Some(c) = &report.area_classification {
                match &c.rule {
                    Some(rule) => println!("areas: {} ({rule})", c.condition),
                    None => println!("areas: {}", c.condition),
                }
                println!("unlock areas sum to a multiple of 4pi: {}", c.sum_multiple_of_4pi);
            }
            if let Some(t) = report.predicted_echo_time_us {
                println!("predicted echo time: {t:.4} us");
            }
            if let Some(pm) = &report.phase_matching {
                println!(
                    "phase matching: k_E = [{:.6}, {:.6}, {:.6}], backwardness = {:.6}",
                    pm.k_e[0], pm.k_e[1], pm.k_e[2], pm.backwardness
                );
                if let Some(w) = pm.omega_e_mhz {
                    println!("echo carrier: {w:.6} MHz");
                }
            }
            Ok(())
        }
        Command::Fit { csv, columns } => {
            let fit = runner::cmd_fit(&csv, &columns)?;
            let text = serde_json::to_string_pretty(&fit)
                .map_err(|e| CliError::Io(format!("json encoding: {e}")))?;
            println!("{text}");
            Ok(())
        }
    }
}
