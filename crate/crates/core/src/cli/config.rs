use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{DatasetName, DatasetSpec};
use crate::error::{Error, Result};
use crate::losses::LossSchedule;
use crate::models::{DecoderKind, ModelConfig};
use crate::qsim::ReadoutMode;
use crate::training::{Reconstruction, Seeds, TrainSettings};

pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Ae,
    #[default]
    Vae,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Save a checkpoint every this many epochs; 0 keeps only the final one.
    pub checkpoint_every: u32,
    /// Write PNG copies of image grids next to the PGM files.
    pub png: bool,
}

/// Everything a training run depends on. A run directory always holds the
/// resolved copy in `config.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kind: ModelKind,
    pub dataset: DatasetSpec,
    pub model: ModelConfig,
    pub schedule: LossSchedule,
    pub train: TrainSettings,
    pub seeds: Seeds,
    pub output: OutputConfig,
}

/// KL schedule used by the variational preset for each dataset.
pub fn dataset_schedule(name: DatasetName) -> LossSchedule {
    match name {
        DatasetName::Mnist => LossSchedule::beta_warmup(5),
        DatasetName::EmnistLetters => LossSchedule::capacity(10.0, 10, 20.0, 0.25),
        DatasetName::FashionMnist => LossSchedule::capacity(12.0, 10, 10.0, 0.5),
    }
}

impl RunConfig {
    /// Published defaults for a model kind and dataset. Training every class
    /// at once switches to three encoding layers and 40 epochs.
    pub fn preset(kind: ModelKind, dataset: DatasetName, class: Option<u8>) -> Self {
        let (mut model, mut train, schedule) = match kind {
            ModelKind::Ae => (ModelConfig::standard_ae(), TrainSettings::standard_ae(), LossSchedule::default()),
            ModelKind::Vae => (ModelConfig::standard_vae(), TrainSettings::standard_vae(), dataset_schedule(dataset)),
        };
        if class.is_none() {
            model.reuploads = 3;
            train.epochs = 40;
        }
        let seeds = Seeds::from_master(0);
        let dir = default_run_dir(kind, dataset, class, seeds.init);
        Self {
            kind,
            dataset: DatasetSpec::new(dataset, class, 500),
            model,
            schedule,
            train,
            seeds,
            output: OutputConfig { dir, checkpoint_every: 5, png: false },
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.model.validate()?;
        self.schedule.validate()?;
        self.train.validate()?;
        if self.model.variational != (self.kind == ModelKind::Vae) {
            return Err(Error::Config(format!(
                "model.variational = {} contradicts kind = {:?}",
                self.model.variational, self.kind
            )));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(CONFIG_FILE);
        std::fs::write(&path, self.to_toml()?)?;
        Ok(path)
    }

    /// Parses a complete config, such as a run directory's resolved copy.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        config_hash(self)
    }
}

pub fn config_hash<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config types serialize to JSON");
    Sha256::digest(json).iter().map(|b| format!("{b:02x}")).collect()
}

fn default_run_dir(kind: ModelKind, dataset: DatasetName, class: Option<u8>, seed: u64) -> PathBuf {
    let kind = match kind {
        ModelKind::Ae => "ae",
        ModelKind::Vae => "vae",
    };
    let class = class.map_or_else(|| "all".to_string(), |c| c.to_string());
    PathBuf::from("runs").join(format!("{kind}-{dataset}-{class}-s{seed}"))
}

/// Command-line adjustments applied on top of the preset and config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub kind: Option<ModelKind>,
    pub dataset: Option<DatasetName>,
    pub class: Option<u8>,
    pub all_classes: bool,
    pub samples_per_class: Option<usize>,
    pub epochs: Option<u32>,
    pub batch_size: Option<usize>,
    pub seed: Option<u64>,
    pub reuploads: Option<usize>,
    pub global_scale: bool,
    pub readout: Option<ReadoutMode>,
    pub decoder: Option<DecoderKind>,
    pub reconstruction: Option<Reconstruction>,
    pub grad_clip: Option<f64>,
    pub no_shuffle: bool,
    pub log_wall_time: bool,
    pub out: Option<PathBuf>,
    pub checkpoint_every: Option<u32>,
    pub png: bool,
}

/// Builds a config from the preset selected by kind, dataset and class,
/// overlays `file` (TOML, possibly partial), then applies `ov`.
///
/// Keys that do not exist in the schema are rejected.
pub fn resolve(file: Option<&str>, ov: &Overrides) -> Result<RunConfig> {
    let user: toml::Table = match file {
        Some(text) => toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?,
        None => toml::Table::new(),
    };
    let kind = match ov.kind {
        Some(k) => k,
        None => match user.get("kind") {
            Some(v) => v.clone().try_into().map_err(|e: toml::de::Error| Error::Config(format!("kind: {e}")))?,
            None => ModelKind::default(),
        },
    };
    let file_dataset = user.get("dataset").and_then(toml::Value::as_table);
    let dataset = match ov.dataset {
        Some(d) => d,
        None => match file_dataset.and_then(|t| t.get("name")).and_then(toml::Value::as_str) {
            Some(s) => s.parse()?,
            None => DatasetName::Mnist,
        },
    };
    let class = if ov.all_classes {
        None
    } else if let Some(c) = ov.class {
        Some(c)
    } else {
        match file_dataset.and_then(|t| t.get("class")) {
            Some(toml::Value::Integer(c)) => Some(u8::try_from(*c).map_err(|_| Error::Config(format!("class {c} out of range")))?),
            Some(toml::Value::String(s)) if s == "all" => None,
            Some(other) => return Err(Error::Config(format!("dataset.class must be a label or \"all\", got {other}"))),
            None => return Err(Error::Config("choose a class (--class N) or --all-classes".into())),
        }
    };

    let preset = RunConfig::preset(kind, dataset, class);
    let mut merged = toml::Table::try_from(&preset).map_err(|e| Error::Config(e.to_string()))?;
    merge(&mut merged, user.clone());
    let mut cfg: RunConfig =
        toml::Value::Table(merged).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;

    cfg.kind = kind;
    cfg.dataset.name = dataset;
    cfg.dataset.class = class;
    if let Some(n) = ov.samples_per_class {
        cfg.dataset.samples_per_class = n;
    }
    if let Some(e) = ov.epochs {
        cfg.train.epochs = e;
    }
    if let Some(b) = ov.batch_size {
        cfg.train.batch_size = b;
    }
    if let Some(g) = ov.grad_clip {
        cfg.train.grad_clip = g;
    }
    if let Some(r) = ov.reconstruction {
        cfg.train.reconstruction = r;
    }
    if ov.no_shuffle {
        cfg.train.shuffle = false;
    }
    if ov.log_wall_time {
        cfg.train.log_wall_time = true;
    }
    if let Some(s) = ov.seed {
        cfg.seeds = Seeds::from_master(s);
        if ov.out.is_none() && !file_sets(&user, "output", "dir") {
            cfg.output.dir = default_run_dir(kind, dataset, class, s);
        }
    }
    if let Some(l) = ov.reuploads {
        cfg.model.reuploads = l;
    }
    if ov.global_scale {
        cfg.model.global_scale = true;
    }
    if let Some(r) = ov.readout {
        cfg.model.readout = r;
    }
    if let Some(d) = ov.decoder {
        cfg.model.decoder = d;
    }
    if let Some(o) = &ov.out {
        cfg.output.dir = o.clone();
    }
    if let Some(c) = ov.checkpoint_every {
        cfg.output.checkpoint_every = c;
    }
    if ov.png {
        cfg.output.png = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn file_sets(user: &toml::Table, section: &str, key: &str) -> bool {
    user.get(section).and_then(toml::Value::as_table).is_some_and(|t| t.contains_key(key))
}

/// Recursively overlays `top` onto `base`; tables merge, everything else
/// replaces.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::ScheduleMode;

    fn flags(kind: ModelKind, class: u8) -> Overrides {
        Overrides { kind: Some(kind), class: Some(class), ..Overrides::default() }
    }

    #[test]
    fn vae_defaults() {
        let c = resolve(None, &flags(ModelKind::Vae, 1)).unwrap();
        assert_eq!(c.model.latent_dim, 8);
        assert_eq!(c.train.batch_size, 32);
        assert_eq!(c.train.adam.lr_classical, 0.002);
        assert_eq!(c.train.adam.lr_quantum, 0.0002);
        assert_eq!(c.train.epochs, 45);
        assert_eq!(c.schedule, LossSchedule::beta_warmup(5));
        assert!(c.model.variational);
    }

    #[test]
    fn ae_defaults() {
        let ov = Overrides { epochs: Some(25), ..flags(ModelKind::Ae, 1) };
        let c = resolve(None, &ov).unwrap();
        assert_eq!(c.train.adam.lr_quantum, 0.0005);
        assert_eq!(c.train.epochs, 25);
        assert!(!c.model.variational);
    }

    #[test]
    fn appendix_regime() {
        let ov = Overrides {
            kind: Some(ModelKind::Ae),
            dataset: Some(DatasetName::FashionMnist),
            all_classes: true,
            global_scale: true,
            readout: Some(ReadoutMode::Multibasis),
            ..Overrides::default()
        };
        let c = resolve(None, &ov).unwrap();
        assert_eq!(c.dataset.class, None);
        assert_eq!(c.dataset.classes().len(), 10);
        assert_eq!((c.model.reuploads, c.model.reps, c.train.epochs), (3, 2, 40));
        assert!(c.model.global_scale);
        assert_eq!(c.model.readout, ReadoutMode::Multibasis);
    }

    #[test]
    fn dataset_schedules() {
        for (d, mode) in [
            (DatasetName::Mnist, ScheduleMode::BetaWarmup),
            (DatasetName::EmnistLetters, ScheduleMode::Capacity),
            (DatasetName::FashionMnist, ScheduleMode::Capacity),
        ] {
            let ov = Overrides { dataset: Some(d), ..flags(ModelKind::Vae, 3) };
            assert_eq!(resolve(None, &ov).unwrap().schedule.mode, mode);
        }
        let f = dataset_schedule(DatasetName::FashionMnist);
        assert_eq!((f.c_max, f.n_c, f.gamma, f.free_bits), (12.0, 10, 10.0, 0.5));
    }

    #[test]
    fn file_then_flags() {
        let text = "kind = \"ae\"\n[dataset]\nname = \"fashion-mnist\"\nclass = 4\n[train]\nepochs = 7\nbatch_size = 16\n";
        let c = resolve(Some(text), &Overrides::default()).unwrap();
        assert_eq!((c.kind, c.dataset.name, c.dataset.class), (ModelKind::Ae, DatasetName::FashionMnist, Some(4)));
        assert_eq!((c.train.epochs, c.train.batch_size), (7, 16));
        assert_eq!(c.train.adam.lr_quantum, 0.0005);
        let c = resolve(Some(text), &Overrides { epochs: Some(2), ..Overrides::default() }).unwrap();
        assert_eq!(c.train.epochs, 2);
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = resolve(Some("[train]\nepochz = 3\n"), &flags(ModelKind::Vae, 1)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("epochz"), "{err}");
        assert!(resolve(Some("bogus = 1\n"), &flags(ModelKind::Vae, 1)).is_err());
    }

    #[test]
    fn class_is_required() {
        assert!(matches!(resolve(None, &Overrides::default()), Err(Error::Config(_))));
    }

    #[test]
    fn resolved_config_round_trips() {
        let ov = Overrides { all_classes: true, seed: Some(7), ..flags(ModelKind::Vae, 0) };
        let c = resolve(None, &ov).unwrap();
        let text = c.to_toml().unwrap();
        assert!(text.contains("class = \"all\""));
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(resolve(Some(&text), &Overrides::default()).unwrap(), c);
        assert_eq!(c.output.dir, PathBuf::from("runs/vae-mnist-all-s7"));
    }

    #[test]
    fn contradictory_kind_is_rejected() {
        let err = resolve(Some("[model]\nvariational = false\n"), &flags(ModelKind::Vae, 1)).unwrap_err();
        assert!(err.to_string().contains("variational"));
    }
}
