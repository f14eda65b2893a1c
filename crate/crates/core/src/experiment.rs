//! Config-driven experiment execution and file emission.
//!
//! Everything here is a pure function of (config, seed) up to wall-clock
//! columns: task generation, partitioning, training, synthesis, and the
//! written artifacts reproduce bit-for-bit across runs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::blobs::{generate_blobs, BlobsSpec};
use crate::checkpoint;
use crate::config::{ExperimentConfig, TaskKind};
use crate::error::{Error, Result};
use crate::federation::{dirichlet_partition, LabeledDataset, Partition};
use crate::idx::load_idx;
use crate::mlp::{DistanceKind, MlpSpec, ParamVector};
use crate::orchestration::{run_dynafed, run_fedavg, run_fedprox, RoundMetrics, RunOutput};
use crate::rng::Rng;
use crate::synthesis::{
    datasyn, init_synthetic, meta_loss_and_grads, trajectory_fidelity, FidelityCandidate,
    FidelityReport, SynthConfig, SyntheticDataset,
};
use crate::theory::{
    estimate_gradient_stats, fit_loglog_slope, run_convex_convergence, QuadraticSurrogate,
    QuadraticTask,
};
use crate::{fdiff, mlp};

pub const METRICS_HEADER: &str = "round,phase,test_loss,test_acc,pre_ft_acc,post_ft_acc,wall_ms";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainAlgo {
    FedAvg,
    FedProx,
    DynaFed,
}

impl TrainAlgo {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "fedavg" => Ok(TrainAlgo::FedAvg),
            "fedprox" => Ok(TrainAlgo::FedProx),
            "dynafed" => Ok(TrainAlgo::DynaFed),
            other => Err(Error::Config(format!(
                "unknown algorithm '{other}' (expected fedavg, fedprox, or dynafed)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TrainAlgo::FedAvg => "fedavg",
            TrainAlgo::FedProx => "fedprox",
            TrainAlgo::DynaFed => "dynafed",
        }
    }
}

/// JSON summary written next to every run's outputs.
#[derive(Clone, Debug, Serialize)]
pub struct RunSummary {
    pub algo: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_acc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slope: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma_m: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g_max: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hypothesis_ok: Option<bool>,
    /// How (delta, epsilon) were fit, reported alongside the numbers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_method: Option<String>,
}

/// Build the train/test datasets named by the config. Blob tasks derive
/// their randomness from the run seed through fixed stream labels.
pub fn build_task(cfg: &ExperimentConfig) -> Result<(LabeledDataset, LabeledDataset)> {
    match cfg.task.kind {
        TaskKind::Blobs => {
            let root = Rng::new(cfg.seed);
            let train = generate_blobs(&cfg.task.blobs_spec(), &mut root.split("task/train"))?;
            let test_spec = BlobsSpec {
                per_class: cfg.task.test_per_class,
                ..cfg.task.blobs_spec()
            };
            let test = generate_blobs(&test_spec, &mut root.split("task/test"))?;
            Ok((train, test))
        }
        TaskKind::Idx => {
            let need = |field: &Option<PathBuf>, name: &str| {
                field.clone().ok_or_else(|| {
                    Error::Config(format!("idx task requires task.{name}"))
                })
            };
            let train = load_idx(
                &need(&cfg.task.train_images, "train_images")?,
                &need(&cfg.task.train_labels, "train_labels")?,
            )?;
            let test = load_idx(
                &need(&cfg.task.test_images, "test_images")?,
                &need(&cfg.task.test_labels, "test_labels")?,
            )?;
            Ok((train, test))
        }
    }
}

pub fn build_partition(cfg: &ExperimentConfig, train: &LabeledDataset) -> Result<Partition> {
    let root = Rng::new(cfg.seed);
    dirichlet_partition(
        &train.labels,
        train.class_count,
        cfg.federation.clients,
        cfg.federation.alpha,
        &mut root.split("partition"),
    )
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn write_metrics_csv(path: &Path, metrics: &[RoundMetrics]) -> Result<()> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            m.round, m.phase, m.test_loss, m.test_acc, m.pre_ft_acc, m.test_acc, m.wall_ms
        ));
    }
    write_text(path, &out)
}

fn write_per_client_csv(path: &Path, metrics: &[RoundMetrics]) -> Result<()> {
    let mut out = String::from("round,client,pre_ft_loss,post_ft_loss\n");
    for m in metrics {
        for (c, (pre, post)) in m.per_client_pre.iter().zip(&m.per_client_post).enumerate() {
            out.push_str(&format!("{},{},{},{}\n", m.round, c, pre, post));
        }
    }
    write_text(path, &out)
}

fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    let json = serde_json::to_string_pretty(summary)
        .map_err(|e| Error::Config(format!("summary serialization: {e}")))?;
    write_text(path, &json)
}

/// Run one training experiment and write metrics, checkpoints, and the
/// summary into the config's output directory.
pub fn execute_train(cfg: &ExperimentConfig, algo: TrainAlgo) -> Result<(RunOutput, RunSummary)> {
    let (train, test) = build_task(cfg)?;
    let partition = build_partition(cfg, &train)?;
    let run_cfg = cfg.run_config()?;
    if algo == TrainAlgo::DynaFed && cfg.synthesis.samples < train.class_count {
        eprintln!(
            "warning: {} synthetic samples for {} classes",
            cfg.synthesis.samples, train.class_count
        );
    }
    let output = match algo {
        TrainAlgo::FedAvg => run_fedavg(&run_cfg, &train, &test, &partition)?,
        TrainAlgo::FedProx => {
            run_fedprox(&run_cfg, &train, &test, &partition, cfg.federation.mu_prox)?
        }
        TrainAlgo::DynaFed => run_dynafed(&run_cfg, &train, &test, &partition)?,
    };

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    write_metrics_csv(&dir.join("metrics.csv"), &output.metrics)?;
    write_per_client_csv(&dir.join("per_client_losses.csv"), &output.metrics)?;
    checkpoint::save_params(&dir.join("model_final.dyna"), &output.final_model)?;
    checkpoint::save_trajectory(&dir.join("trajectory.dyna"), &output.trajectory)?;
    if let Some(dsyn) = &output.synthetic {
        checkpoint::save_synthetic(&dir.join("dsyn.dyna"), dsyn)?;
    }
    let summary = RunSummary {
        algo: algo.name().to_string(),
        seed: cfg.seed,
        final_acc: output.metrics.last().map(|m| m.test_acc),
        slope: None,
        delta: None,
        epsilon: None,
        sigma_m: None,
        g_max: None,
        hypothesis_ok: None,
        fit_method: None,
    };
    write_summary(&dir.join("summary.json"), &summary)?;
    Ok((output, summary))
}

/// Partition statistics as a JSON document (sizes, weights, histograms).
pub fn partition_stats_json(cfg: &ExperimentConfig) -> Result<String> {
    #[derive(Serialize)]
    struct Stats {
        clients: usize,
        alpha: f64,
        seed: u64,
        sizes: Vec<usize>,
        weights: Vec<f64>,
        class_histograms: Vec<Vec<usize>>,
    }
    let (train, _) = build_task(cfg)?;
    let partition = build_partition(cfg, &train)?;
    let stats = Stats {
        clients: partition.client_count(),
        alpha: cfg.federation.alpha,
        seed: cfg.seed,
        sizes: partition.client_indices.iter().map(Vec::len).collect(),
        weights: partition.weights.clone(),
        class_histograms: (0..partition.client_count())
            .map(|m| partition.class_histogram(m, &train))
            .collect(),
    };
    serde_json::to_string_pretty(&stats).map_err(|e| Error::Config(e.to_string()))
}

/// Run data synthesis against a saved trajectory; writes the learned dataset
/// and the loss log.
pub fn execute_synth(cfg: &ExperimentConfig, trajectory_path: &Path) -> Result<SyntheticDataset> {
    let traj = checkpoint::load_trajectory(trajectory_path)?;
    let synth_cfg = cfg.synth_config();
    let root = Rng::new(cfg.seed);
    let outcome = datasyn(&traj, &synth_cfg, &root.split("synthesis"))?;
    if let Some(w) = outcome.dataset.undersized_warning() {
        eprintln!("warning: {w}");
    }
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    checkpoint::save_synthetic(&dir.join("dsyn.dyna"), &outcome.dataset)?;
    let mut log = String::from("iteration,segment_t,loss\n");
    for entry in &outcome.log {
        log.push_str(&format!("{},{},{}\n", entry.iteration, entry.segment_start, entry.loss));
    }
    write_text(&dir.join("synth_log.csv"), &log)?;
    Ok(outcome.dataset)
}

/// Compare a learned dataset against a same-size real subset and noise on
/// every trajectory segment; writes the table as CSV and returns it.
pub fn execute_fidelity(
    cfg: &ExperimentConfig,
    trajectory_path: &Path,
    dsyn_path: &Path,
) -> Result<FidelityReport> {
    let traj = checkpoint::load_trajectory(trajectory_path)?;
    let dsyn = checkpoint::load_synthetic(dsyn_path)?;
    let (train, _) = build_task(cfg)?;
    let root = Rng::new(cfg.seed);
    let n = dsyn.len();
    let mut pick_rng = root.split("fidelity/real-subset");
    let subset = pick_rng.sample_without_replacement(train.len(), n.min(train.len()));
    let candidates = vec![
        FidelityCandidate::from_synthetic("dsyn", &dsyn),
        FidelityCandidate::from_labeled("real_subset", &train, &subset),
        FidelityCandidate::noise(
            "noise",
            n,
            dsyn.dim(),
            dsyn.class_count(),
            &mut root.split("fidelity/noise"),
        ),
    ];
    let report = trajectory_fidelity(&traj, &cfg.synth_config(), &candidates)?;

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let mut out = String::from("candidate,mean");
    for t in &report.segment_starts {
        out.push_str(&format!(",segment_{t}"));
    }
    out.push('\n');
    for (i, (name, row)) in report.distances.iter().enumerate() {
        out.push_str(&format!("{name},{}", report.mean(i)));
        for v in row {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    write_text(&dir.join("fidelity.csv"), &out)?;
    Ok(report)
}

pub struct TheoryOutcome {
    pub slope: f64,
    pub summary: RunSummary,
}

/// Convergence-rate experiment on the quadratic task plus assumption
/// constant estimates; writes the suboptimality series and summary.
pub fn execute_theory(cfg: &ExperimentConfig) -> Result<TheoryOutcome> {
    let t = &cfg.theory;
    let root = Rng::new(cfg.seed);
    let mut task_rng = root.split("theory/task");
    let task = QuadraticTask::generate(
        t.dims,
        t.mu,
        t.condition,
        t.clients,
        t.samples_per_client,
        t.noise_std,
        &mut task_rng,
    )?;
    let mut srng = root.split("theory/surrogate");
    let surrogate = QuadraticSurrogate::perturbed(
        &task,
        t.surrogate_matrix_rel,
        t.surrogate_shift,
        t.surrogate_noise_std,
        t.surrogate_samples,
        &mut srng,
    )?;
    let seeds: Vec<u64> = (0..t.seeds as u64).map(|i| cfg.seed.wrapping_add(i)).collect();
    let result = run_convex_convergence(&task, &t.schedule(), &surrogate, t.steps, &seeds)?;
    let slope = fit_loglog_slope(&result.mean, t.tail_window)?;

    let mut probe_rng = root.split("theory/probes");
    let probes: Vec<Vec<f64>> = (0..8)
        .map(|_| {
            task.w_star
                .iter()
                .map(|w| w + probe_rng.normal())
                .collect()
        })
        .collect();
    let (sigma_m, g_max) = estimate_gradient_stats(&task, &probes);

    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let mut series = String::from("step,mean,std\n");
    for (i, (m, s)) in result.mean.iter().zip(&result.std).enumerate() {
        series.push_str(&format!("{},{},{}\n", i + 1, m, s));
    }
    write_text(&dir.join("theory_series.csv"), &series)?;
    let summary = RunSummary {
        algo: "theory".into(),
        seed: cfg.seed,
        final_acc: None,
        slope: Some(slope),
        delta: Some(result.delta),
        epsilon: Some(result.epsilon),
        sigma_m: Some(sigma_m),
        g_max: Some(g_max),
        hypothesis_ok: Some(result.hypothesis_ok),
        fit_method: Some(crate::theory::ENVELOPE_FIT_METHOD.to_string()),
    };
    write_summary(&dir.join("summary.json"), &summary)?;
    Ok(TheoryOutcome { slope, summary })
}

/// Max relative error of the synthesis meta-gradients against central finite
/// differences on a tiny fixed instance, across all metrics and a few
/// unroll depths.
pub fn selftest_meta_gradient() -> Result<f64> {
    let spec = MlpSpec::new(vec![4, 2, 3])?;
    let w_start = mlp::init_params(&spec, &mut Rng::new(70));
    let w_target = mlp::init_params(&spec, &mut Rng::new(71));
    let mut rng = Rng::new(72);
    let mut dsyn = init_synthetic(3, 4, 3, &mut rng)?;
    for (i, v) in dsyn.y_logits.data_mut().iter_mut().enumerate() {
        *v = 0.3 * ((i as f64) * 0.7).sin();
    }
    let h = 1e-5;
    let mut worst = 0.0f64;
    for metric in [DistanceKind::L2, DistanceKind::NormalizedL2, DistanceKind::Cosine] {
        for inner_steps in [1usize, 2, 4] {
            let cfg = SynthConfig {
                span: 2,
                inner_steps,
                outer_iterations: 1,
                outer_lr: 5e-2,
                inner_lr: 0.05,
                samples: 3,
                target_avg_count: 0,
                metric,
            };
            let got = meta_loss_and_grads(&dsyn, &w_start, &w_target, &cfg)?;
            let fd_x = fdiff::finite_difference(
                |x| {
                    let probe = SyntheticDataset::new(x.clone(), dsyn.y_logits.clone())?;
                    crate::synthesis::meta_loss(&probe, &w_start, &w_target, &cfg)
                },
                &dsyn.x,
                h,
            )?;
            let fd_y = fdiff::finite_difference(
                |y| {
                    let probe = SyntheticDataset::new(dsyn.x.clone(), y.clone())?;
                    crate::synthesis::meta_loss(&probe, &w_start, &w_target, &cfg)
                },
                &dsyn.y_logits,
                h,
            )?;
            worst = worst
                .max(fdiff::max_relative_error(&got.grad_x, &fd_x, 1e-7))
                .max(fdiff::max_relative_error(&got.grad_y, &fd_y, 1e-7));
        }
    }
    Ok(worst)
}

/// Checkpoint a parameter vector or synthetic dataset to `path` based on
/// the file's role; convenience for library consumers.
pub fn save_model(path: &Path, w: &ParamVector) -> Result<()> {
    checkpoint::save_params(path, w)
}
