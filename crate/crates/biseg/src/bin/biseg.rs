//! Command-line entry point for the segmentation pipeline.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 numeric failure, 5 verification tolerance breach.

use biseg::attention::BiDirMode;
use biseg::checkpoint::Checkpoint;
use biseg::config::{RunConfig, CONFIG_ENV_VAR};
use biseg::data::SceneSpec;
use biseg::error::{Error, Result};
use biseg::gradcheck::{self, GradcheckSettings};
use biseg::pipeline;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "biseg",
    version,
    about = "Joint instance and semantic segmentation of point clouds with bi-directional attention"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Config file plus the common overrides. The file defaults to the path in
/// the BISEG_CONFIG environment variable; built-in defaults apply when
/// neither is present.
#[derive(Args, Clone)]
struct ConfigArgs {
    /// Run config TOML file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 guarantees bit-reproducible outputs (parallel
    /// sections merge in index order, so higher counts match in practice).
    #[arg(long)]
    threads: Option<usize>,
    /// Override training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Override batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Override the initial learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Attention mode: both-stoi-first, both-itos-first, stoi-only,
    /// itos-only, self-attention, none.
    #[arg(long)]
    mode: Option<String>,
    /// Override points per block.
    #[arg(long)]
    points_per_block: Option<usize>,
    /// Override the mean-shift bandwidth.
    #[arg(long)]
    bandwidth: Option<f64>,
    /// Override the class count.
    #[arg(long)]
    n_c: Option<usize>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => match std::env::var(CONFIG_ENV_VAR) {
                Ok(path) if !path.is_empty() => RunConfig::load(PathBuf::from(path).as_path())?,
                _ => RunConfig::default(),
            },
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(threads) = self.threads {
            cfg.threads = threads;
        }
        if let Some(epochs) = self.epochs {
            cfg.optim.epochs = epochs;
        }
        if let Some(batch) = self.batch_size {
            cfg.optim.batch_size = batch;
        }
        if let Some(lr) = self.lr {
            cfg.optim.lr = lr;
        }
        if let Some(mode) = &self.mode {
            cfg.attention.mode = BiDirMode::parse(mode)?;
        }
        if let Some(ppb) = self.points_per_block {
            cfg.blocks.points_per_block = ppb;
        }
        if let Some(bw) = self.bandwidth {
            cfg.cluster.bandwidth = bw;
        }
        if let Some(n_c) = self.n_c {
            cfg.model.n_c = n_c;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate labeled synthetic scenes plus a manifest.
    Generate {
        /// Scene spec TOML; the built-in two-class spec when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Number of scenes.
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Override the spec's base seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a model; writes checkpoints, a loss log, and the effective config.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory of labeled scenes.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Resume from a checkpoint (continues the step counter).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint over labeled scenes and write metric reports.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Segment one scene and write the labeled cloud.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Verify analytic gradients against Kronecker-literal evaluation and
    /// finite differences; nonzero exit on any breach.
    Gradcheck {
        /// Largest point count for the literal Kronecker equality checks.
        #[arg(long, default_value_t = 3)]
        kron_max_n: usize,
        /// Number of random finite-difference cases for the simplified op.
        #[arg(long, default_value_t = 20)]
        fd_cases: usize,
        /// Comma-separated seeds for the full-model check.
        #[arg(long, default_value = "0,1,2,3,4")]
        model_seeds: String,
        /// Cloud size for the full-model check.
        #[arg(long, default_value_t = 8)]
        points: usize,
        /// Also write the table as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train and evaluate every attention mode on the same data and seed.
    Ablate {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        train_data: PathBuf,
        #[arg(long)]
        test_data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export binarized similarity-matrix rows as labeled clouds.
    ExportSim {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        /// Row to export: the reference point's index.
        #[arg(long)]
        point_index: usize,
        /// Similarity threshold; defaults to 1/N.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_spec(path: &Option<PathBuf>, seed: Option<u64>) -> Result<SceneSpec> {
    let mut spec = match path {
        Some(p) => {
            let body =
                std::fs::read_to_string(p).map_err(|e| Error::io(p.display().to_string(), e))?;
            toml::from_str(&body).map_err(|e| Error::Parse {
                path: p.display().to_string(),
                line: 0,
                detail: e.to_string(),
            })?
        }
        None => SceneSpec::default(),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    Ok(spec)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            spec,
            out,
            count,
            seed,
        } => {
            let spec = load_spec(&spec, seed)?;
            let manifest = pipeline::generate_dataset(&spec, &out, count)?;
            println!(
                "wrote {} scenes to {} (seed {})",
                manifest.count,
                out.display(),
                spec.seed
            );
        }
        Command::Train {
            config,
            data,
            out,
            resume,
        } => {
            let cfg = config.resolve()?;
            let outcome = pipeline::train(&cfg, &data, &out, resume.as_deref())?;
            let last = outcome.log.last();
            println!(
                "trained {} epochs, final total loss {:.6}, best {:.6}",
                outcome.log.len(),
                last.map_or(f64::NAN, |r| r.total),
                outcome.best_total
            );
            println!("final checkpoint: {}", outcome.final_checkpoint.display());
            println!("best checkpoint:  {}", outcome.best_checkpoint.display());
        }
        Command::Eval {
            checkpoint,
            data,
            out,
            threads,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let mut cfg = ck.config.clone();
            if let Some(threads) = threads {
                cfg.threads = threads;
            }
            let (report, per_scene) =
                pipeline::evaluate(&ck.model, &cfg, &data, cfg.effective_threads())?;
            pipeline::write_eval_outputs(&out, &report, &per_scene, &cfg)?;
            print!("{}", report.render_text());
        }
        Command::Infer {
            checkpoint,
            scene,
            out,
            threads,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let mut cfg = ck.config.clone();
            if let Some(threads) = threads {
                cfg.threads = threads;
            }
            let result =
                pipeline::infer_to_file(&ck.model, &cfg, &scene, &out, cfg.effective_threads())?;
            let instances = result
                .instance
                .iter()
                .collect::<std::collections::BTreeSet<_>>();
            println!(
                "segmented {} points into {} instances ({} uncovered)",
                result.semantic.len(),
                instances.len(),
                result.uncovered_points
            );
        }
        Command::Gradcheck {
            kron_max_n,
            fd_cases,
            model_seeds,
            points,
            out,
        } => {
            let seeds: Vec<u64> = model_seeds
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| {
                    s.trim().parse::<u64>().map_err(|_| Error::Config {
                        detail: format!("bad seed '{s}'"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let settings = GradcheckSettings {
                kron_max_n,
                fd_cases,
                model_seeds: seeds,
                model_points: points,
                corruption: 0.0,
            };
            let report = gradcheck::run(&settings)?;
            print!("{}", report.render_text());
            if let Some(path) = out {
                let body = serde_json::to_string_pretty(&report).map_err(|e| Error::Io {
                    path: path.display().to_string(),
                    detail: e.to_string(),
                })?;
                std::fs::write(&path, body + "\n")
                    .map_err(|e| Error::io(path.display().to_string(), e))?;
            }
            if !report.all_pass() {
                let failing: Vec<&str> = report
                    .rows
                    .iter()
                    .filter(|r| !r.pass)
                    .map(|r| r.check.as_str())
                    .collect();
                return Err(Error::Tolerance {
                    detail: format!("gradient checks failed: {}", failing.join("; ")),
                });
            }
        }
        Command::Ablate {
            config,
            train_data,
            test_data,
            out,
        } => {
            let cfg = config.resolve()?;
            let report = pipeline::ablate(&cfg, &train_data, &test_data, &out)?;
            print!("{}", report.render_text());
        }
        Command::ExportSim {
            checkpoint,
            scene,
            point_index,
            threshold,
            out,
        } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let export =
                pipeline::export_similarity(&ck.model, &scene, point_index, threshold, &out)?;
            println!(
                "exported similarity row {} over {} points (threshold {:.6}): {} semantic-similar, {} instance-similar",
                export.point_index,
                export.num_points,
                export.threshold,
                export.semantic_similar,
                export.instance_similar
            );
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
