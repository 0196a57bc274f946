use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use histlab_cli::config::load_input;
use histlab_cli::plotdata::emit_plotdata;
use histlab_cli::presets::{preset, NAMES};
use histlab_cli::run::{run_input, RunOptions, RunOutcome};
use histlab_cli::{CliError, Result};

#[derive(Parser)]
#[command(
    name = "histlab",
    version,
    about = "Decoherent-history and Bohmian-trajectory probabilities for coarse-grained position histories"
)]
struct Cli {
    /// Override the ensemble seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write every trajectory at every history time.
    #[arg(long, global = true)]
    traj_dump: bool,
    /// Output path: the run directory for `run`, the file for `preset`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run an experiment config or a finite record model.
    Run { config: PathBuf },
    /// Print (or write with --out) a built-in config.
    Preset { name: String },
    /// Derive plot tables from a run directory.
    EmitPlotdata { run_dir: PathBuf },
}

fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::config(format!("--threads: {e}")))?;
    }
    match cli.cmd {
        Cmd::Run { config } => {
            let input = load_input(&config)?;
            let opts = RunOptions { out: cli.out, seed: cli.seed, traj_dump: cli.traj_dump };
            match run_input(input, &opts)? {
                RunOutcome::Experiment(r) => {
                    let (c, rep) = (&r.comparison, &r.dh.report);
                    println!("wrote {}", r.dir.display());
                    println!(
                        "decoherent: {} (max normalized off-diagonal {:.3e} for weights >= {:.0e}, {:.3e} overall); \
                         histories with weight: dh {}, bm {}",
                        if rep.consistent { "consistent" } else { "inconsistent" },
                        rep.max_normalized_offdiag,
                        rep.min_weight,
                        rep.max_normalized_offdiag_all,
                        r.dh.labels.len(),
                        r.bm.labels.len()
                    );
                    println!("comparison: {} (max |p_dh - p_bm| = {:.3e})", c.verdict.as_str(), c.max_diff);
                }
                RunOutcome::Model { dir, report } => {
                    println!("wrote {}", dir.display());
                    for f in report["families"].as_array().into_iter().flatten() {
                        println!("{}", serde_json::to_string(f).unwrap_or_default());
                    }
                }
            }
        }
        Cmd::Preset { name } => {
            let text = preset(&name)?.to_json()?;
            match cli.out {
                Some(p) => {
                    std::fs::write(&p, text + "\n").map_err(|e| CliError::io(format!("writing {}", p.display()), e))?
                }
                None => println!("{text}"),
            }
        }
        Cmd::EmitPlotdata { run_dir } => {
            for p in emit_plotdata(&run_dir)? {
                println!("wrote {}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match e.guard_name() {
                Some(g) => eprintln!("error [{g}]: {e}"),
                None => eprintln!("error: {e}"),
            }
            if let CliError::Config { .. } = e {
                eprintln!("known presets: {}", NAMES.join(", "));
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
