use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{NoiseKind, NoiseSpec};
use crate::earlycut::CutConfig;
use crate::error::{Error, Result};
use crate::nettrain::{Arch, TrainConfig};
use crate::seed;

/// Label noise applied to generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseBlock {
    pub kind: NoiseKind,
    pub rate: f64,
    pub class_map: Option<Vec<(usize, usize)>>,
}

impl Default for NoiseBlock {
    fn default() -> Self {
        Self {
            kind: NoiseKind::InstanceDependent,
            rate: 0.4,
            class_map: None,
        }
    }
}

/// Where the data comes from. With `path` set the stored container is used
/// as is and the generator and noise settings are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetBlock {
    pub path: Option<PathBuf>,
    /// Clean held-out set for a stored dataset.
    pub test_path: Option<PathBuf>,
    pub n: usize,
    pub dim: usize,
    pub num_classes: usize,
    pub separation: f64,
    pub within_std: f64,
    /// Size of the generated clean test set; zero disables it.
    pub test_size: usize,
    pub validation_fraction: f64,
    pub noise: NoiseBlock,
}

impl Default for DatasetBlock {
    fn default() -> Self {
        Self {
            path: None,
            test_path: None,
            n: 4000,
            dim: 32,
            num_classes: 4,
            separation: 3.0,
            within_std: 1.0,
            test_size: 2000,
            validation_fraction: 0.1,
            noise: NoiseBlock::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchBlock {
    pub hidden_dims: Vec<usize>,
}

impl Default for ArchBlock {
    fn default() -> Self {
        Self {
            hidden_dims: vec![12],
        }
    }
}

/// Command-specific settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentBlock {
    pub groups: usize,
    pub repeats: usize,
    /// Checkpoint epoch whose penultimate features the `report` command
    /// uses for distance ratios.
    pub feature_epoch: usize,
    /// Inputs of `select`: a dynamics log, plus either a checkpoint
    /// directory or a per-sample metrics table.
    pub dynlog: Option<PathBuf>,
    pub checkpoints: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
}

impl Default for ExperimentBlock {
    fn default() -> Self {
        Self {
            groups: 5,
            repeats: 3,
            feature_epoch: 10,
            dynlog: None,
            checkpoints: None,
            metrics: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root of every random stream.
    pub seed: u64,
    /// Left out of the hash and the manifest so runs into different
    /// directories stay comparable.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub dataset: DatasetBlock,
    pub arch: ArchBlock,
    pub train: TrainConfig,
    pub cut: CutConfig,
    pub experiment: ExperimentBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("ecut-out"),
            dataset: DatasetBlock::default(),
            arch: ArchBlock::default(),
            train: TrainConfig::default(),
            cut: CutConfig::default(),
            experiment: ExperimentBlock::default(),
        }
    }
}

/// Seeds actually used by a run, all derived from the root.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedSet {
    pub root: u64,
    pub dataset: u64,
    pub noise: u64,
    pub split: u64,
    pub train: u64,
}

impl ExperimentConfig {
    /// Read `path` (or start from defaults), apply `key=value` overrides and
    /// the flag values, then validate.
    pub fn load(
        path: Option<&Path>,
        overrides: &[String],
        seed: Option<u64>,
        out: Option<&Path>,
    ) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                text.parse::<toml::Table>().map_err(|e| Error::Parse {
                    path: p.to_path_buf(),
                    message: e.to_string(),
                })?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        if let Some(t) = doc.get("train").and_then(|t| t.as_table()) {
            if t.contains_key("seed") {
                return Err(Error::InvalidConfig(
                    "train.seed is derived from the root `seed`; set that instead".into(),
                ));
            }
        }
        let mut cfg: ExperimentConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(o) = out {
            cfg.output_dir = o.to_path_buf();
        }
        cfg.train.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.cut.validate()?;
        let d = &self.dataset;
        if d.path.is_none() {
            self.noise_spec().validate(d.num_classes)?;
        }
        if !(d.validation_fraction > 0.0 && d.validation_fraction < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "validation_fraction {} outside (0, 1)",
                d.validation_fraction
            )));
        }
        if self.arch.hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer of width 0".into()));
        }
        if self.experiment.groups == 0 || self.experiment.repeats == 0 {
            return Err(Error::InvalidConfig(
                "experiment.groups and experiment.repeats must be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn seeds(&self) -> SeedSet {
        SeedSet {
            root: self.seed,
            dataset: seed::derive(self.seed, seed::DATASET),
            noise: seed::derive(self.seed, seed::NOISE),
            split: seed::derive(self.seed, seed::SPLIT),
            train: self.train.seed,
        }
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        let n = &self.dataset.noise;
        NoiseSpec {
            kind: n.kind,
            rate: n.rate,
            class_map: n.class_map.clone(),
            seed: self.seeds().noise,
        }
    }

    pub fn arch(&self, input_dim: usize, num_classes: usize) -> Arch {
        Arch::new(input_dim, self.arch.hidden_dims.clone(), num_classes)
    }

    /// SHA-256 of the resolved configuration in canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        format!("{:x}", Sha256::digest(&json))
    }
}

/// Set `a.b.c = value` in `doc`. The value is read as a TOML literal when it
/// parses as one and as a bare string otherwise.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::InvalidConfig(format!(
            "override `{assignment}` is not of the form key=value"
        ))
    })?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidConfig(format!(
            "malformed override key `{key}`"
        )));
    }
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut table = doc;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            Error::InvalidConfig(format!("override `{key}`: `{p}` is not a table"))
        })?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_set_nested_values() {
        let mut doc = toml::Table::new();
        apply_override(&mut doc, "cut.i_rate=1").unwrap();
        apply_override(&mut doc, "arch.hidden_dims=[8, 4]").unwrap();
        apply_override(&mut doc, "dataset.noise.kind=symmetric").unwrap();
        let cfg: ExperimentConfig = toml::Value::Table(doc).try_into().unwrap();
        assert_eq!(cfg.cut.i_rate, 1);
        assert_eq!(cfg.arch.hidden_dims, vec![8, 4]);
        assert_eq!(cfg.dataset.noise.kind, NoiseKind::Symmetric);
    }

    #[test]
    fn malformed_overrides_rejected() {
        let mut doc = toml::Table::new();
        assert!(apply_override(&mut doc, "cut.i_rate").is_err());
        assert!(apply_override(&mut doc, "cut..x=1").is_err());
        apply_override(&mut doc, "seed=3").unwrap();
        assert!(apply_override(&mut doc, "seed.x=1").is_err());
    }

    #[test]
    fn unknown_keys_and_train_seed_rejected() {
        let err = ExperimentConfig::load(None, &["cut.gama=2".into()], None, None).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        let err = ExperimentConfig::load(None, &["train.seed=2".into()], None, None).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
    }

    #[test]
    fn flags_override_file_values() {
        let cfg = ExperimentConfig::load(
            None,
            &["seed=3".into()],
            Some(9),
            Some(Path::new("elsewhere")),
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.output_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.cut.gamma = 2.0;
        assert_ne!(a.hash(), b.hash());
    }
}
