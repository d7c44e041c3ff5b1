use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context as _;
use clap::{Args, Parser, Subcommand};
use nes_core::harness::{self, BoundsInput, ExperimentConfig};
use nes_core::noise::TransitionMatrix;
use nes_core::training::{PolicyKind, RunLog};
use nes_core::Error;

/// Label-noise early-stopping experiments.
#[derive(Parser, Debug)]
#[command(name = "nes", version)]
struct Cli {
    /// Experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run this single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of seeds or grid points run at once.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Extra `key=value` configuration entries; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train every seed and write run logs, checkpoints and a NES/ES/WES summary.
    Train,
    /// Repeat `train` over a grid of noise rates.
    Sweep {
        /// Comma-separated rates; defaults to `sweep.etas`.
        #[arg(long, value_delimiter = ',')]
        etas: Vec<f64>,
    },
    /// Clean-vs-noisy accuracy pairs of a run log with the affine prediction.
    Scatter {
        /// Run log written by `train`.
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        classes: Option<usize>,
    },
    /// Decision-tree accuracy across depths.
    TreeDepth {
        #[arg(long, value_delimiter = ',')]
        depths: Vec<usize>,
    },
    /// Per-epoch g-vectors under a known transition matrix.
    Gvector,
    /// Worst-case clean-risk gap bounds.
    Bounds(BoundsArgs),
    /// Print the configured recipe's transition matrix.
    GenNoise,
    /// Resample a label file through the configured recipe.
    Inject {
        /// Whitespace-separated 0-based labels.
        #[arg(long)]
        labels: PathBuf,
        /// Destination; one label per line.
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Args, Debug)]
struct BoundsArgs {
    /// Column-permutation transition matrix file.
    #[arg(long, conflicts_with_all = ["eta_min", "eta_max", "pairwise"])]
    matrix: Option<PathBuf>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    eta_min: Option<f64>,
    #[arg(long)]
    eta_max: Option<f64>,
    /// Use the pairwise-noise bound.
    #[arg(long)]
    pairwise: bool,
    /// Noisy accuracy of the best model (of the selected model with `--pairwise`).
    #[arg(long)]
    noisy_accuracy: f64,
    /// Noisy accuracy of the selected model, for the general form.
    #[arg(long)]
    selected_noisy_accuracy: Option<f64>,
}

fn load_config(cli: &Cli, required: bool) -> nes_core::Result<ExperimentConfig> {
    let mut overrides = Vec::new();
    for kv in &cli.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::config(format!("--set `{kv}` is not KEY=VALUE")))?;
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(out) = &cli.out {
        let out = std::path::absolute(out).map_err(Error::Io)?;
        overrides.push(("output.dir".into(), out.display().to_string()));
    }
    if let Some(seed) = cli.seed {
        overrides.push(("seeds".into(), seed.to_string()));
    }
    if let Some(jobs) = cli.jobs {
        overrides.push(("jobs".into(), jobs.to_string()));
    }
    match &cli.config {
        Some(path) => ExperimentConfig::load_with(path, &overrides),
        None if required => Err(Error::config("--config is required for this command")),
        None => ExperimentConfig::parse("", Path::new("."), &overrides),
    }
}

fn summary_table(summary: &harness::TrainSummary) -> String {
    let mut out = String::from("policy  clean-test accuracy (mean ± sd over seeds)\n");
    for p in PolicyKind::ALL {
        if let Some((m, s)) = summary.stats(p) {
            out.push_str(&format!(
                "{:<7} {:.2} ± {:.2}\n",
                p.to_string(),
                100.0 * m,
                100.0 * s
            ));
        }
    }
    out
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Train => {
            let cfg = load_config(cli, true)?;
            let summary = harness::cmd_train(&cfg)?;
            print!("{}", summary_table(&summary));
            println!("wrote {}", cfg.output.join("summary.csv").display());
        }
        Command::Sweep { etas } => {
            let cfg = load_config(cli, true)?;
            let rows = harness::cmd_sweep(&cfg, etas)?;
            print!("{}", harness::sweep_csv(&rows));
            println!("wrote {}", cfg.output.join("sweep.csv").display());
        }
        Command::Scatter { log, eta, classes } => {
            let text = std::fs::read_to_string(log)
                .with_context(|| format!("reading {}", log.display()))?;
            let runlog = RunLog::from_csv(&text)?;
            let report = harness::cmd_scatter(&runlog, *eta, *classes)?;
            let dir = cli
                .out
                .clone()
                .unwrap_or_else(|| log.parent().unwrap_or(Path::new(".")).to_path_buf());
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("scatter_points.csv"), report.points_csv())?;
            std::fs::write(dir.join("scatter_lines.csv"), report.lines_csv())?;
            print!("{}", report.lines_csv());
        }
        Command::TreeDepth { depths } => {
            let cfg = load_config(cli, true)?;
            let curves = harness::cmd_tree_depth(&cfg, depths)?;
            for c in &curves {
                println!(
                    "seed {}: noisy-argmax depth {}, clean-argmax depth {}, clean-val deficit {:.2} points",
                    c.seed,
                    c.noisy_argmax,
                    c.clean_argmax,
                    100.0 * c.deficit()
                );
            }
        }
        Command::Gvector => {
            let cfg = load_config(cli, true)?;
            for r in harness::cmd_gvector(&cfg)? {
                println!(
                    "seed {}: minima window epochs {}..{} (width {}{})",
                    r.seed,
                    r.window.t1,
                    r.window.t2,
                    r.window.width(),
                    if r.window.degenerate {
                        ", degenerate"
                    } else {
                        ""
                    }
                );
            }
        }
        Command::Bounds(b) => {
            let input = if b.pairwise {
                let eta = b
                    .eta
                    .ok_or_else(|| Error::config("--pairwise needs --eta"))?;
                BoundsInput::Pairwise {
                    eta,
                    noisy_accuracy: b.noisy_accuracy,
                }
            } else if let Some(path) = &b.matrix {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                BoundsInput::Matrix {
                    matrix: TransitionMatrix::from_text(&text)?,
                    best_noisy_accuracy: b.noisy_accuracy,
                    selected_noisy_accuracy: b.selected_noisy_accuracy,
                }
            } else {
                match (b.eta, b.eta_min, b.eta_max) {
                    (Some(eta), Some(eta_min), Some(eta_max)) => BoundsInput::Rates {
                        eta,
                        eta_min,
                        eta_max,
                        best_noisy_accuracy: b.noisy_accuracy,
                        selected_noisy_accuracy: b.selected_noisy_accuracy,
                    },
                    _ => {
                        return Err(Error::config(
                            "give --matrix, --pairwise, or all of --eta --eta-min --eta-max",
                        )
                        .into())
                    }
                }
            };
            let report = harness::cmd_bounds(&input)?;
            println!("{report}");
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("bounds.csv"), report.to_csv(&[]))?;
            }
        }
        Command::GenNoise => {
            let cfg = load_config(cli, false)?;
            let t = harness::cmd_gen_noise(&cfg)?;
            print!("{}", t.to_text());
            if let Some(dir) = &cli.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join("matrix.txt"), t.to_text())?;
            }
        }
        Command::Inject { labels, output } => {
            let cfg = load_config(cli, false)?;
            let text = std::fs::read_to_string(labels)
                .with_context(|| format!("reading {}", labels.display()))?;
            let clean = harness::parse_label_text(&text)?;
            let seed = cli.seed.or_else(|| cfg.seeds.first().copied()).unwrap_or(0);
            let noisy = harness::cmd_inject(&cfg, &clean, seed)?;
            let body: String = noisy.iter().map(|l| format!("{l}\n")).collect();
            std::fs::write(output, body)?;
            let flipped = noisy.iter().zip(&clean).filter(|(a, b)| a != b).count();
            println!("{flipped} of {} labels changed", clean.len());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_)) => 2,
        Some(e) if e.is_numeric() => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
