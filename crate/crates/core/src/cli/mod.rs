//! The `qinr` command-line front end.
//!
//! Subcommands are plain library functions in [`commands`]; this module only
//! maps flags onto them. Failures exit with [`Error::exit_code`].

pub mod commands;
pub mod config;
pub mod image;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::{value::StrDeserializer, DeserializeOwned, IntoDeserializer};

use crate::data::{default_data_root, DatasetName, DatasetSpec};
use crate::error::{Error, Result};
use crate::models::DecoderKind;
use crate::qsim::ReadoutMode;
use crate::training::Reconstruction;
pub use commands::{EvalOptions, FidFeatures, MetricKind};
pub use config::{resolve, ModelKind, Overrides, RunConfig};

/// Parses a kebab-case enum value through its serde name.
fn kebab<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    let de: StrDeserializer<'_, serde::de::value::Error> = s.into_deserializer();
    T::deserialize(de).map_err(|e| e.to_string())
}

fn from_str<T: std::str::FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "qinr", version, about = "Quantum implicit neural representation autoencoders")]
pub struct Cli {
    /// Dataset root; defaults to $QINR_DATA_ROOT, then the bundled data/.
    #[arg(long, global = true)]
    pub data_root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an autoencoder or variational autoencoder.
    Train(TrainArgs),
    /// Sample a grid of images from a variational checkpoint's prior.
    Generate(GenerateArgs),
    /// Originals above eval-mode reconstructions.
    Reconstruct(ReconstructArgs),
    /// Write a JSON metrics report for a checkpoint.
    Evaluate(EvaluateArgs),
    /// Count trainable parameters per submodule.
    Census(CensusArgs),
}

/// Config file plus the flags that override it.
#[derive(Debug, Args, Default)]
pub struct ConfigArgs {
    /// TOML run config; may be partial.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model preset: ae or vae.
    #[arg(long, value_parser = kebab::<ModelKind>)]
    pub model: Option<ModelKind>,
    /// mnist, emnist-letters or fashion-mnist.
    #[arg(long, value_parser = from_str::<DatasetName>)]
    pub dataset: Option<DatasetName>,
    #[arg(long, conflicts_with = "all_classes")]
    pub class: Option<u8>,
    /// Train on every class at once (three encoding layers, 40 epochs).
    #[arg(long)]
    pub all_classes: bool,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Master seed; init, shuffle and noise seeds derive from it.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Encoding layers L.
    #[arg(long)]
    pub reuploads: Option<usize>,
    /// Learn a global log-scale on the encoding angles.
    #[arg(long)]
    pub global_scale: bool,
    /// z-only or multibasis.
    #[arg(long, value_parser = kebab::<ReadoutMode>)]
    pub readout: Option<ReadoutMode>,
    /// qinr or classical-linear.
    #[arg(long, value_parser = kebab::<DecoderKind>)]
    pub decoder: Option<DecoderKind>,
    /// Reconstruction loss: bce or mse.
    #[arg(long, value_parser = kebab::<Reconstruction>)]
    pub loss: Option<Reconstruction>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long)]
    pub no_shuffle: bool,
    /// Record elapsed seconds in the loss log (makes it nondeterministic).
    #[arg(long)]
    pub log_wall_time: bool,
    /// Run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Checkpoint interval in epochs; 0 keeps only the final checkpoint.
    #[arg(long)]
    pub checkpoint_every: Option<u32>,
    /// Also write PNG copies of image grids.
    #[arg(long)]
    pub png: bool,
}

impl ConfigArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            kind: self.model,
            dataset: self.dataset,
            class: self.class,
            all_classes: self.all_classes,
            samples_per_class: self.samples_per_class,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            reuploads: self.reuploads,
            global_scale: self.global_scale,
            readout: self.readout,
            decoder: self.decoder,
            reconstruction: self.loss,
            grad_clip: self.grad_clip,
            no_shuffle: self.no_shuffle,
            log_wall_time: self.log_wall_time,
            out: self.out.clone(),
            checkpoint_every: self.checkpoint_every,
            png: self.png,
        }
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let text = self.config.as_deref().map(std::fs::read_to_string).transpose()?;
        resolve(text.as_deref(), &self.overrides())
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Continue from a checkpoint, using the config stored in its run
    /// directory (only --epochs may change).
    #[arg(long, conflicts_with = "config")]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    pub checkpoint: PathBuf,
    #[arg(short, long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Tiles per row; one row by default.
    #[arg(long)]
    pub cols: Option<usize>,
    /// Output path without extension.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub png: bool,
}

/// Dataset selection for commands that read images; falls back to the run
/// directory's config.
#[derive(Debug, Args, Default)]
pub struct DatasetArgs {
    #[arg(long, value_parser = from_str::<DatasetName>)]
    pub dataset: Option<DatasetName>,
    #[arg(long, conflicts_with = "all_classes")]
    pub class: Option<u8>,
    #[arg(long)]
    pub all_classes: bool,
    #[arg(long)]
    pub samples_per_class: Option<usize>,
}

impl DatasetArgs {
    pub fn spec(&self, checkpoint: &Path) -> Result<DatasetSpec> {
        let stored = commands::run_config_of(checkpoint)?.map(|c| c.dataset);
        let name = self.dataset.or(stored.as_ref().map(|s| s.name));
        let class = if self.all_classes {
            Some(None)
        } else {
            self.class.map(Some).or(stored.as_ref().map(|s| s.class))
        };
        let (Some(name), Some(class)) = (name, class) else {
            return Err(Error::Config(format!(
                "no config found next to {}; pass --dataset and --class or --all-classes",
                checkpoint.display()
            )));
        };
        let n = self.samples_per_class.or(stored.map(|s| s.samples_per_class)).unwrap_or(500);
        let spec = DatasetSpec::new(name, class, n);
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    #[arg(short, long, default_value_t = 8)]
    pub n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub png: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub dataset: DatasetArgs,
    /// Comma-separated subset of ssim, psnr, cosine, fid.
    #[arg(long, value_delimiter = ',', value_parser = from_str::<MetricKind>, default_value = "ssim,psnr,cosine")]
    pub metrics: Vec<MetricKind>,
    /// Prior samples for variational models (default: one per image).
    #[arg(long)]
    pub prior_samples: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// raw or pcaK.
    #[arg(long, value_parser = from_str::<FidFeatures>, default_value = "pca64")]
    pub fid_features: FidFeatures,
    /// Report path (default: metrics.json in the run directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CensusArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    let data_root = cli.data_root.unwrap_or_else(default_data_root);
    match cli.command {
        Command::Train(a) => {
            let cfg = match &a.resume {
                Some(ck) => {
                    let mut cfg = commands::run_config_of(ck)?.ok_or_else(|| {
                        Error::Config(format!("no {} next to {}", config::CONFIG_FILE, ck.display()))
                    })?;
                    if let Some(e) = a.config.epochs {
                        cfg.train.epochs = e;
                    }
                    cfg
                }
                None => a.config.resolve()?,
            };
            eprintln!("run directory {}", cfg.output.dir.display());
            let out = commands::train(&cfg, &data_root, a.resume.as_deref(), |r| {
                eprintln!(
                    "epoch {:>3}  rec {:.4}  kl {:.4}  total {:.4}  beta {:.3}  C {:.3}",
                    r.epoch, r.rec_loss, r.kl_loss, r.total_loss, r.beta_t, r.c_t
                );
            })?;
            println!("{}", out.final_checkpoint.display());
        }
        Command::Generate(a) => {
            for p in commands::generate(&a.checkpoint, a.n, a.seed, a.cols, a.out.as_deref(), a.png)? {
                println!("{}", p.display());
            }
        }
        Command::Reconstruct(a) => {
            let spec = a.dataset.spec(&a.checkpoint)?;
            for p in commands::reconstruct(&a.checkpoint, &spec, &data_root, a.n, a.out.as_deref(), a.png)? {
                println!("{}", p.display());
            }
        }
        Command::Evaluate(a) => {
            let spec = a.dataset.spec(&a.checkpoint)?;
            let opts = EvalOptions {
                metrics: a.metrics,
                prior_samples: a.prior_samples,
                seed: a.seed,
                fid_features: a.fid_features,
            };
            let (report, path) = commands::evaluate(&a.checkpoint, &spec, &data_root, &opts, a.out.as_deref())?;
            for (k, m) in &report.metrics {
                println!("{k:<24} {:.6}", m.mean);
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", path.display());
        }
        Command::Census(a) => {
            let mut ov = a.config.overrides();
            // The class only matters for the all-classes preset, so any
            // label will do when none was given.
            let text = a.config.config.as_deref().map(std::fs::read_to_string).transpose()?;
            if ov.class.is_none() && !ov.all_classes && !text.as_deref().is_some_and(|t| t.contains("class")) {
                ov.class = Some(0);
            }
            let cfg = resolve(text.as_deref(), &ov)?;
            let c = commands::census(&cfg.model)?;
            if a.json {
                println!("{}", serde_json::to_string_pretty(&c).map_err(|e| Error::Config(e.to_string()))?);
            } else {
                print!("{}", commands::format_census(&c));
            }
        }
    }
    Ok(())
}

/// Entry point for the binary: parses arguments, runs, and returns the
/// process exit code.
pub fn main() -> i32 {
    match run(Cli::parse()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
