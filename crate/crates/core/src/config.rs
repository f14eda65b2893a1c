//! Experiment configuration: a TOML key tree with a default for every field
//! and hard rejection of unknown keys, so typos abort before any compute.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blobs::BlobsSpec;
use crate::error::{Error, Result};
use crate::federation::AggregationMode;
use crate::mlp::{DistanceKind, MlpSpec};
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::orchestration::{FinetuneConfig, RunConfig};
use crate::synthesis::SynthConfig;
use crate::theory::ScheduleConfig;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub task: TaskConfig,
    pub model: ModelConfig,
    pub federation: FederationConfig,
    pub trajectory: TrajectoryConfig,
    pub synthesis: SynthesisConfig,
    pub finetune: FinetuneSection,
    pub theory: TheoryConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            output_dir: PathBuf::from("runs/out"),
            task: TaskConfig::default(),
            model: ModelConfig::default(),
            federation: FederationConfig::default(),
            trajectory: TrajectoryConfig::default(),
            synthesis: SynthesisConfig::default(),
            finetune: FinetuneSection::default(),
            theory: TheoryConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskConfig {
    /// "blobs" or "idx".
    pub kind: TaskKind,
    pub classes: usize,
    pub dims: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub radius: f64,
    pub std: f64,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Blobs,
    Idx,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            kind: TaskKind::Blobs,
            classes: 5,
            dims: 2,
            per_class: 200,
            test_per_class: 50,
            radius: 4.0,
            std: 0.5,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
        }
    }
}

impl TaskConfig {
    pub fn blobs_spec(&self) -> BlobsSpec {
        BlobsSpec {
            classes: self.classes,
            dims: self.dims,
            per_class: self.per_class,
            radius: self.radius,
            std: self.std,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { hidden: vec![32] }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FederationConfig {
    pub rounds: usize,
    pub clients: usize,
    pub participation: f64,
    pub local_epochs: usize,
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Dirichlet heterogeneity; smaller is more skewed.
    pub alpha: f64,
    pub aggregation: AggregationMode,
    pub mu_prox: f64,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            rounds: 200,
            clients: 80,
            participation: 0.4,
            local_epochs: 1,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            batch_size: 64,
            alpha: 0.04,
            aggregation: AggregationMode::Weighted,
            mu_prox: 0.01,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    pub length: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig { length: 20 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    pub span: usize,
    pub inner_steps: usize,
    pub outer_iterations: usize,
    pub outer_lr: f64,
    pub inner_lr: f64,
    pub samples: usize,
    pub target_avg: usize,
    pub metric: DistanceKind,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        let d = SynthConfig::default();
        SynthesisConfig {
            span: d.span,
            inner_steps: d.inner_steps,
            outer_iterations: d.outer_iterations,
            outer_lr: d.outer_lr,
            inner_lr: d.inner_lr,
            samples: d.samples,
            target_avg: d.target_avg_count,
            metric: d.metric,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneSection {
    pub steps: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
}

impl Default for FinetuneSection {
    fn default() -> Self {
        let d = FinetuneConfig::default();
        FinetuneSection {
            steps: d.steps,
            learning_rate: d.learning_rate,
            optimizer: d.optimizer,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoryConfig {
    pub dims: usize,
    pub mu: f64,
    pub condition: f64,
    pub clients: usize,
    pub samples_per_client: usize,
    pub noise_std: f64,
    pub surrogate_matrix_rel: f64,
    pub surrogate_shift: f64,
    pub surrogate_noise_std: f64,
    pub surrogate_samples: usize,
    pub c: f64,
    pub gamma: f64,
    pub tau1: usize,
    pub tau2: usize,
    pub steps: usize,
    pub seeds: usize,
    pub tail_window: f64,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig {
            dims: 20,
            mu: 1.0,
            condition: 50.0,
            clients: 4,
            samples_per_client: 16,
            noise_std: 1.0,
            surrogate_matrix_rel: 0.002,
            surrogate_shift: 0.005,
            surrogate_noise_std: 1.0,
            surrogate_samples: 64,
            c: 5.0,
            gamma: 250.0,
            tau1: 5,
            tau2: 2,
            steps: 10_000,
            seeds: 5,
            tail_window: 0.9,
        }
    }
}

impl TheoryConfig {
    pub fn schedule(&self) -> ScheduleConfig {
        ScheduleConfig { c: self.c, gamma: self.gamma, tau1: self.tau1, tau2: self.tau2 }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::from_toml(&text)
    }

    pub fn mlp_spec(&self) -> Result<MlpSpec> {
        let mut sizes = vec![self.task.dims];
        sizes.extend_from_slice(&self.model.hidden);
        sizes.push(self.task.classes);
        MlpSpec::new(sizes)
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            span: self.synthesis.span,
            inner_steps: self.synthesis.inner_steps,
            outer_iterations: self.synthesis.outer_iterations,
            outer_lr: self.synthesis.outer_lr,
            inner_lr: self.synthesis.inner_lr,
            samples: self.synthesis.samples,
            target_avg_count: self.synthesis.target_avg,
            metric: self.synthesis.metric,
        }
    }

    pub fn finetune_config(&self) -> FinetuneConfig {
        FinetuneConfig {
            steps: self.finetune.steps,
            learning_rate: self.finetune.learning_rate,
            optimizer: self.finetune.optimizer,
        }
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        Ok(RunConfig {
            model: self.mlp_spec()?,
            rounds: self.federation.rounds,
            clients: self.federation.clients,
            participation: self.federation.participation,
            local_epochs: self.federation.local_epochs,
            local_opt: OptimizerConfig {
                kind: self.federation.optimizer,
                learning_rate: self.federation.learning_rate,
                batch_size: self.federation.batch_size,
            },
            trajectory_len: self.trajectory.length,
            synth: self.synth_config(),
            finetune: self.finetune_config(),
            aggregation: self.federation.aggregation,
            seed: self.seed,
        })
    }
}
