//! End-to-end pipelines: dataset preparation, training for the texture and
//! BRDF tasks, evaluation, checkpointing, and the inference benchmark.

pub mod bench;
pub mod checkpoint;
pub mod dataset;
pub mod eval;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bench::{benchmark_inference, random_surface_batch, BenchReport};
pub use checkpoint::{load_checkpoint, Checkpoint, LoadedCheckpoint};
pub use dataset::{prepare_samples, Dataset, ShadingData};
pub use eval::{evaluate, render_model_view, EvalReport};
pub use train::{batch_loss, batch_loss_and_grads, train, EpochLog, TrainResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Texture,
    Brdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

/// Training configuration. Batch size and epoch count default per task
/// (8000/1000 for texture, 16384/500 for BRDF) when left unset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub task: Task,
    #[serde(default = "default_resolutions")]
    pub resolutions: Vec<f64>,
    #[serde(default = "default_feature_dim")]
    pub feature_dim: usize,
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: usize,
    #[serde(default = "default_lr_mlp")]
    pub lr_mlp: f64,
    #[serde(default = "default_lr_features")]
    pub lr_features: f64,
    #[serde(default = "default_l2_mlp")]
    pub l2_mlp: f64,
    #[serde(default = "default_lambda_reg")]
    pub lambda_reg: f64,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_precision")]
    pub precision: Precision,
}

fn default_resolutions() -> Vec<f64> {
    vec![1.0, 0.1, 0.05, 0.01]
}
fn default_feature_dim() -> usize {
    4
}
fn default_hidden_dim() -> usize {
    32
}
fn default_hidden_layers() -> usize {
    2
}
fn default_lr_mlp() -> f64 {
    2e-4
}
fn default_lr_features() -> f64 {
    5e-3
}
fn default_l2_mlp() -> f64 {
    1e-5
}
fn default_lambda_reg() -> f64 {
    1.5e-6
}
fn default_precision() -> Precision {
    Precision::F32
}

impl TrainConfig {
    pub fn for_task(task: Task) -> Self {
        TrainConfig {
            task,
            resolutions: default_resolutions(),
            feature_dim: default_feature_dim(),
            hidden_dim: default_hidden_dim(),
            hidden_layers: default_hidden_layers(),
            lr_mlp: default_lr_mlp(),
            lr_features: default_lr_features(),
            l2_mlp: default_l2_mlp(),
            lambda_reg: default_lambda_reg(),
            batch_size: None,
            epochs: None,
            seed: 0,
            precision: default_precision(),
        }
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size.unwrap_or(match self.task {
            Task::Texture => 8000,
            Task::Brdf => 1 << 14,
        })
    }

    pub fn epochs(&self) -> usize {
        self.epochs.unwrap_or(match self.task {
            Task::Texture => 1000,
            Task::Brdf => 500,
        })
    }

    pub fn output_dim(&self) -> usize {
        match self.task {
            Task::Texture => 3,
            Task::Brdf => crate::render::brdf::PARAM_COUNT,
        }
    }

    /// Decoder layer sizes: feature dimension through the hidden stack to
    /// the task's output dimension.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.feature_dim];
        sizes.extend(std::iter::repeat_n(self.hidden_dim, self.hidden_layers));
        sizes.push(self.output_dim());
        sizes
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolutions.is_empty() || (self.resolutions[0] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(
                "resolutions must start at 1".into(),
            ));
        }
        let positive = self.feature_dim >= 1
            && self.hidden_dim >= 1
            && self.lr_mlp > 0.0
            && self.lr_features > 0.0
            && self.l2_mlp >= 0.0
            && self.lambda_reg >= 0.0
            && self.batch_size() > 0
            && self.epochs() > 0;
        if !positive {
            return Err(Error::InvalidArgument(
                "all training sizes and rates must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: TrainConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }
}
