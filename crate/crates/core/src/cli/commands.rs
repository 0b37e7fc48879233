use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{config_hash, RunConfig, CONFIG_FILE};
use super::image::{grid, save_grid, Gray};
use crate::data::{load_dataset, to_unit, DatasetSpec, Sample, IMAGE_PIXELS, IMAGE_SIDE};
use crate::error::{Error, Result};
use crate::metrics::{cosine_similarity, fid, psnr, ssim, FeatureBackend, MetricSummary, MetricsReport};
use crate::models::{Census, Model, ModelConfig};
use crate::training::{load_checkpoint, save_checkpoint, write_loss_csv, Checkpoint, TrainRecord, Trainer};

pub const LOSS_CSV: &str = "loss.csv";
pub const FINAL_CHECKPOINT: &str = "model.ckpt";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Images per eval-mode forward pass.
const EVAL_CHUNK: usize = 64;

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub final_checkpoint: PathBuf,
    pub records: Vec<TrainRecord>,
}

/// Trains per `cfg`, writing the resolved config, the loss log after every
/// epoch, periodic checkpoints and the final checkpoint into
/// `cfg.output.dir`. With `resume`, training continues from that
/// checkpoint up to `cfg.train.epochs`.
pub fn train(
    cfg: &RunConfig,
    data_root: &Path,
    resume: Option<&Path>,
    mut on_epoch: impl FnMut(&TrainRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir)?;
    cfg.write(&dir)?;
    let samples = load_dataset(data_root, &cfg.dataset)?;

    let mut trainer = match resume {
        Some(p) => {
            let t = load_checkpoint(p)?.into_trainer()?;
            if t.model.config != cfg.model || t.seeds != cfg.seeds {
                return Err(Error::Config(format!("{} was trained with a different configuration", p.display())));
            }
            Trainer { settings: cfg.train.clone(), ..t }
        }
        None => Trainer::new(cfg.model.clone(), cfg.train.clone(), cfg.schedule.clone(), cfg.seeds)?,
    };

    let every = cfg.output.checkpoint_every;
    if every > 0 {
        std::fs::create_dir_all(dir.join(CHECKPOINT_DIR))?;
    }
    trainer.run(&samples, |t, r| {
        write_loss_csv(&dir.join(LOSS_CSV), &t.records)?;
        if every > 0 && r.epoch % every == 0 {
            save_checkpoint(&dir.join(CHECKPOINT_DIR).join(format!("epoch-{:04}.ckpt", r.epoch)), &t.checkpoint())?;
        }
        on_epoch(r);
        Ok(())
    })?;
    write_loss_csv(&dir.join(LOSS_CSV), &trainer.records)?;
    let final_checkpoint = dir.join(FINAL_CHECKPOINT);
    save_checkpoint(&final_checkpoint, &trainer.checkpoint())?;
    Ok(TrainOutcome { dir, final_checkpoint, records: trainer.records })
}

/// Run directory a checkpoint belongs to (periodic checkpoints live one
/// level down).
pub fn run_dir_of(checkpoint: &Path) -> PathBuf {
    let parent = checkpoint.parent().unwrap_or(Path::new("."));
    if parent.file_name().is_some_and(|n| n == CHECKPOINT_DIR) {
        parent.parent().unwrap_or(Path::new(".")).to_path_buf()
    } else {
        parent.to_path_buf()
    }
}

/// The resolved config stored next to `checkpoint`, if any.
pub fn run_config_of(checkpoint: &Path) -> Result<Option<RunConfig>> {
    let path = run_dir_of(checkpoint).join(CONFIG_FILE);
    if path.exists() {
        RunConfig::load(&path).map(Some)
    } else {
        Ok(None)
    }
}

/// `n` prior samples decoded with the seeded generator, laid out with
/// `cols` tiles per row (a single row by default).
pub fn generate_grid(model: &mut Model, n: usize, seed: u64, cols: Option<usize>) -> Result<Gray> {
    if n == 0 {
        return Err(Error::Config("number of images must be at least 1".into()));
    }
    if !model.is_variational() {
        return Err(Error::Contract(
            "this checkpoint is an autoencoder and has no prior to sample; use `qinr reconstruct`".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = model.generate(n, &mut rng)?;
    let cols = cols.unwrap_or(n).clamp(1, n);
    grid(&images, n.div_ceil(cols), cols)
}

/// Originals on the top row, eval-mode reconstructions below.
pub fn reconstruct_grid(model: &mut Model, samples: &[Sample], n: usize) -> Result<Gray> {
    if n == 0 {
        return Err(Error::Config("number of images must be at least 1".into()));
    }
    if samples.len() < n {
        return Err(Error::Data(format!("asked for {n} images but the dataset spec yields {}", samples.len())));
    }
    let pixels: Vec<f64> = samples[..n].iter().flat_map(|s| s.pixels.iter().copied()).collect();
    let recon = model.reconstruct(&pixels, EVAL_CHUNK)?;
    let mut both = to_unit(&pixels);
    both.extend(recon);
    grid(&both, 2, n)
}

pub fn generate(checkpoint: &Path, n: usize, seed: u64, cols: Option<usize>, out: Option<&Path>, png: bool) -> Result<Vec<PathBuf>> {
    let mut model = load_checkpoint(checkpoint)?.model()?;
    let img = generate_grid(&mut model, n, seed, cols)?;
    let stem = out.map_or_else(|| run_dir_of(checkpoint).join(format!("generated-s{seed}-n{n}")), Path::to_path_buf);
    save_grid(&img, &stem, png)
}

pub fn reconstruct(
    checkpoint: &Path,
    spec: &DatasetSpec,
    data_root: &Path,
    n: usize,
    out: Option<&Path>,
    png: bool,
) -> Result<Vec<PathBuf>> {
    let mut model = load_checkpoint(checkpoint)?.model()?;
    let samples = load_dataset(data_root, spec)?;
    let img = reconstruct_grid(&mut model, &samples, n)?;
    let stem = out.map_or_else(|| run_dir_of(checkpoint).join(format!("reconstructed-n{n}")), Path::to_path_buf);
    save_grid(&img, &stem, png)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum MetricKind {
    Ssim,
    Psnr,
    Cosine,
    Fid,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [MetricKind::Ssim, MetricKind::Psnr, MetricKind::Cosine, MetricKind::Fid];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Ssim => "ssim",
            MetricKind::Psnr => "psnr",
            MetricKind::Cosine => "cosine",
            MetricKind::Fid => "fid",
        }
    }
}

impl FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?} (expected ssim, psnr, cosine or fid)")))
    }
}

/// Feature space for FID.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FidFeatures {
    RawPixels,
    /// Top principal axes of the real images.
    Pca(usize),
}

impl Default for FidFeatures {
    fn default() -> Self {
        FidFeatures::Pca(64)
    }
}

impl FromStr for FidFeatures {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "raw" {
            return Ok(FidFeatures::RawPixels);
        }
        s.strip_prefix("pca")
            .and_then(|k| k.trim_start_matches(['-', ':']).parse().ok())
            .map(FidFeatures::Pca)
            .ok_or_else(|| Error::Config(format!("unknown FID features {s:?} (expected raw or pcaK, e.g. pca64)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub metrics: Vec<MetricKind>,
    /// Prior samples for variational models; defaults to the number of
    /// dataset images.
    pub prior_samples: Option<usize>,
    pub seed: u64,
    pub fid_features: FidFeatures,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            metrics: vec![MetricKind::Ssim, MetricKind::Psnr, MetricKind::Cosine],
            prior_samples: None,
            seed: 0,
            fid_features: FidFeatures::default(),
        }
    }
}

/// Index-paired SSIM/PSNR/cosine between `real` and `other` (both in
/// [0, 1]), keyed `<prefix>.<metric>`. Degenerate cosines are reported in
/// `warnings`.
pub fn paired_metrics(
    real: &[Vec<f64>],
    other: &[Vec<f64>],
    metrics: &[MetricKind],
    prefix: &str,
    warnings: &mut Vec<String>,
) -> Result<BTreeMap<String, MetricSummary>> {
    let mut out = BTreeMap::new();
    for &m in metrics {
        let values = match m {
            MetricKind::Ssim => real.iter().zip(other).map(|(a, b)| ssim(a, b, IMAGE_SIDE)).collect::<Result<Vec<_>>>()?,
            MetricKind::Psnr => real.iter().zip(other).map(|(a, b)| psnr(a, b)).collect::<Result<Vec<_>>>()?,
            MetricKind::Cosine => {
                let mut degenerate = 0;
                let v = real
                    .iter()
                    .zip(other)
                    .map(|(a, b)| {
                        let c = cosine_similarity(a, b)?;
                        degenerate += usize::from(c.degenerate);
                        Ok(c.value)
                    })
                    .collect::<Result<Vec<_>>>()?;
                if degenerate > 0 {
                    warnings.push(format!("{prefix}.cosine: {degenerate} zero-norm pairs scored as 0"));
                }
                v
            }
            MetricKind::Fid => continue,
        };
        out.insert(format!("{prefix}.{}", m.as_str()), MetricSummary::from_values(values));
    }
    Ok(out)
}

#[derive(Serialize)]
struct HashedSettings<'a> {
    model: &'a ModelConfig,
    settings: &'a crate::training::TrainSettings,
    schedule: &'a crate::losses::LossSchedule,
    seeds: &'a crate::training::Seeds,
}

/// Computes the requested metrics for a checkpoint on `samples`.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, spec: &DatasetSpec, samples: &[Sample], opts: &EvalOptions) -> Result<MetricsReport> {
    let mut model = ckpt.model()?;
    let meta = &ckpt.meta;
    if opts.metrics.contains(&MetricKind::Fid) && !model.is_variational() {
        return Err(Error::Contract("FID compares prior samples and is not defined for an autoencoder".into()));
    }
    if samples.is_empty() {
        return Err(Error::Data("no images to evaluate".into()));
    }
    let real: Vec<Vec<f64>> = samples.iter().map(|s| to_unit(&s.pixels)).collect();
    let pixels: Vec<f64> = samples.iter().flat_map(|s| s.pixels.iter().copied()).collect();
    let recon: Vec<Vec<f64>> = model
        .reconstruct(&pixels, EVAL_CHUNK)?
        .chunks_exact(IMAGE_PIXELS)
        .map(<[f64]>::to_vec)
        .collect();

    let mut warnings = Vec::new();
    let mut protocol = BTreeMap::new();
    protocol.insert(
        "reconstruction".to_string(),
        format!(
            "each of the {} dataset images against its eval-mode reconstruction{}",
            real.len(),
            if model.is_variational() { " (posterior mean decoded)" } else { "" }
        ),
    );
    let mut metrics = paired_metrics(&real, &recon, &opts.metrics, "reconstruction", &mut warnings)?;

    if model.is_variational() {
        let n = opts.prior_samples.unwrap_or(real.len());
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let gen: Vec<Vec<f64>> = model.generate(n, &mut rng)?.chunks_exact(IMAGE_PIXELS).map(<[f64]>::to_vec).collect();
        protocol.insert(
            "prior".to_string(),
            format!("{n} prior samples with seed {}; generated image i is paired with dataset image i in file order, no nearest-neighbour matching", opts.seed),
        );
        metrics.extend(paired_metrics(&real, &gen, &opts.metrics, "prior", &mut warnings)?);
        if opts.metrics.contains(&MetricKind::Fid) {
            let backend = match opts.fid_features {
                FidFeatures::RawPixels => FeatureBackend::RawPixels,
                FidFeatures::Pca(k) => FeatureBackend::pca(&real, k)?,
            };
            protocol.insert(
                "fid".to_string(),
                format!("Frechet distance of Gaussian fits in {} feature space ({} fitted on the real images)", backend.name(), real.len()),
            );
            let d = fid(&real, &gen, &backend)?;
            metrics.insert("prior.fid".to_string(), MetricSummary { mean: d, values: vec![d] });
        }
    }

    let seeds = BTreeMap::from([
        ("init".to_string(), meta.seeds.init),
        ("shuffle".to_string(), meta.seeds.shuffle),
        ("noise".to_string(), meta.seeds.noise),
        ("eval".to_string(), opts.seed),
    ]);
    let hashed = HashedSettings { model: &meta.model, settings: &meta.settings, schedule: &meta.schedule, seeds: &meta.seeds };
    Ok(MetricsReport {
        dataset: spec.name.to_string(),
        class: spec.class,
        config_hash: config_hash(&hashed),
        seeds,
        protocol,
        metrics,
        warnings,
    })
}

/// Loads the checkpoint and dataset, evaluates, and writes the JSON report
/// to `out` (default `metrics.json` in the run directory).
pub fn evaluate(
    checkpoint: &Path,
    spec: &DatasetSpec,
    data_root: &Path,
    opts: &EvalOptions,
    out: Option<&Path>,
) -> Result<(MetricsReport, PathBuf)> {
    let ckpt = load_checkpoint(checkpoint)?;
    let samples = load_dataset(data_root, spec)?;
    let report = evaluate_checkpoint(&ckpt, spec, &samples, opts)?;
    let path = out.map_or_else(|| run_dir_of(checkpoint).join("metrics.json"), Path::to_path_buf);
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(&path, json + "\n")?;
    Ok((report, path))
}

pub fn census(cfg: &ModelConfig) -> Result<Census> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    Ok(Model::new(cfg.clone(), &mut rng)?.census())
}

pub fn format_census(c: &Census) -> String {
    let width = c.entries.iter().map(|(m, ..)| m.len()).max().unwrap_or(0).max(9);
    let mut s = String::new();
    let _ = writeln!(s, "{:<width$}  {:<9}  {:>9}", "submodule", "group", "params");
    for (m, g, n) in &c.entries {
        let g = match g {
            crate::models::ParamGroup::Classical => "classical",
            crate::models::ParamGroup::Quantum => "quantum",
        };
        let _ = writeln!(s, "{m:<width$}  {g:<9}  {n:>9}");
    }
    let _ = writeln!(s);
    for (k, v) in [
        ("encoder", c.encoder),
        ("decoder", c.decoder),
        ("classical", c.classical),
        ("quantum", c.quantum),
        ("total", c.total()),
    ] {
        let _ = writeln!(s, "{k:<width$}  {:<9}  {v:>9}", "");
    }
    s
}
