//! Run configuration tree (model + training + data sections), base-config
//! resolution, and dotted-key overrides (`--set model.alpha=8`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use spectformer_core::data::{gen_frequency_dataset, load_cifar10_binary, load_mnist_dir, Dataset};
use spectformer_core::model::config::{config_by_name, ModelConfig};
use spectformer_core::numerics::rng::Rng;
use spectformer_core::training::TrainHyper;

use crate::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataKind {
    Synth,
    Mnist,
    Cifar10,
}

fn default_n_train() -> usize {
    2048
}
fn default_n_test() -> usize {
    512
}
fn default_classes() -> usize {
    4
}
fn default_size() -> usize {
    32
}
fn default_sigma() -> f64 {
    0.3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub kind: DataKind,
    /// Directory containing MNIST IDX or CIFAR-10 binary files.
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default = "default_n_train")]
    pub n_train: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Truncate the training split to this many samples (0: keep all).
    #[serde(default)]
    pub limit_train: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            kind: DataKind::Synth,
            dir: None,
            n_train: default_n_train(),
            n_test: default_n_test(),
            classes: default_classes(),
            size: default_size(),
            sigma: default_sigma(),
            limit_train: 0,
        }
    }
}

/// Full run description; JSON configs mirror this tree and unknown keys
/// are rejected at every level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainHyper,
    #[serde(default)]
    pub data: DataConfig,
}

impl RunConfig {
    /// Resolve `--model`: a registered name, or a path to a JSON file
    /// holding either a bare model config or a full run config.
    pub fn resolve(model: &str, data_kind: Option<DataKind>, data_dir: Option<&Path>) -> CliResult<Self> {
        let mut run = if model.ends_with(".json") || Path::new(model).exists() {
            let text = std::fs::read_to_string(model)
                .map_err(|e| CliError::Config(format!("cannot read config {model}: {e}")))?;
            // try the full tree first, then the bare model section
            match serde_json::from_str::<RunConfig>(&text) {
                Ok(rc) => rc,
                Err(tree_err) => match serde_json::from_str::<ModelConfig>(&text) {
                    Ok(model) => RunConfig {
                        model,
                        train: TrainHyper::default(),
                        data: DataConfig::default(),
                    },
                    Err(_) => {
                        return Err(CliError::Config(format!("invalid config {model}: {tree_err}")))
                    }
                },
            }
        } else {
            RunConfig {
                model: config_by_name(model).map_err(CliError::from)?,
                train: TrainHyper::default(),
                data: DataConfig::default(),
            }
        };
        if let Some(kind) = data_kind {
            run.data.kind = kind;
        }
        if let Some(dir) = data_dir {
            run.data.dir = Some(dir.to_path_buf());
        }
        Ok(run)
    }

    /// Apply `key=value` overrides onto the serialized tree, then
    /// re-deserialize so unknown keys and type mismatches are rejected.
    pub fn apply_overrides(&self, sets: &[String]) -> CliResult<Self> {
        let mut tree = serde_json::to_value(self).map_err(|e| CliError::Other(e.to_string()))?;
        for set in sets {
            let (key, raw) = set.split_once('=').ok_or_else(|| {
                CliError::Config(format!("malformed --set {set:?}: expected key=value"))
            })?;
            let value: Value = serde_json::from_str(raw).unwrap_or(Value::String(raw.to_string()));
            let parts: Vec<&str> = key.split('.').collect();
            set_path(&mut tree, &parts, value, key)?;
        }
        let run: RunConfig = serde_json::from_value(tree)
            .map_err(|e| CliError::Config(format!("invalid override: {e}")))?;
        run.model.validate().map_err(CliError::from)?;
        Ok(run)
    }

    /// Load the (train, test) datasets this run is configured for.
    pub fn load_data(&self, seed: u64) -> CliResult<(Dataset<f32>, Dataset<f32>)> {
        let (train, test) = match self.data.kind {
            DataKind::Synth => {
                // a dedicated stream keeps data independent of model init
                let mut rng = Rng::new(seed, 0x6461_7461);
                let d = &self.data;
                let train = gen_frequency_dataset::<f32>(&mut rng, d.n_train, d.classes, d.size, d.sigma)
                    .map_err(CliError::from)?;
                let test = gen_frequency_dataset::<f32>(&mut rng, d.n_test, d.classes, d.size, d.sigma)
                    .map_err(CliError::from)?;
                (train, test)
            }
            DataKind::Mnist => {
                let dir = self.data.dir.clone().unwrap_or_else(|| PathBuf::from("data/mnist"));
                let train = load_mnist_dir::<f32>(&dir, true, Some(32)).map_err(CliError::from)?;
                let test = load_mnist_dir::<f32>(&dir, false, Some(32)).map_err(CliError::from)?;
                (train, test)
            }
            DataKind::Cifar10 => {
                let dir = self.data.dir.clone().unwrap_or_else(|| PathBuf::from("data/cifar10"));
                let train_paths: Vec<PathBuf> =
                    (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
                let train = load_cifar10_binary::<f32>(&train_paths).map_err(CliError::from)?;
                let test =
                    load_cifar10_binary::<f32>(&[dir.join("test_batch.bin")]).map_err(CliError::from)?;
                (train, test)
            }
        };
        let train = if self.data.limit_train > 0 {
            train.take(self.data.limit_train)
        } else {
            train
        };
        Ok((train, test))
    }
}

fn set_path(node: &mut Value, parts: &[&str], value: Value, full_key: &str) -> CliResult<()> {
    let Some((head, rest)) = parts.split_first() else {
        return Ok(());
    };
    let obj = node
        .as_object_mut()
        .ok_or_else(|| CliError::Config(format!("--set {full_key}: {head:?} is not an object")))?;
    if rest.is_empty() {
        obj.insert(head.to_string(), value);
        return Ok(());
    }
    let child = obj
        .entry(head.to_string())
        .or_insert_with(|| Value::Object(Default::default()));
    set_path(child, rest, value, full_key)
}
