//! Synthetic-data learning by trajectory matching.
//!
//! A short training run on the learned dataset, started from a trajectory
//! checkpoint, should land close to a later checkpoint. The dataset (inputs
//! and label logits) is optimized by differentiating that distance through
//! the unrolled training steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{grad, Bindings, Evaluator, Expr};
use crate::federation::LabeledDataset;
use crate::mlp::{
    self, distance, distance_expr, DistanceKind, DistanceMetric, MlpSpec, ParamVector,
};
use crate::optim::Adam;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Ordered global-model checkpoints, one per communication round, with the
/// initialization at index 0.
#[derive(Clone, Debug)]
pub struct Trajectory {
    checkpoints: Vec<ParamVector>,
    rounds: Vec<usize>,
}

impl Trajectory {
    pub fn new(checkpoints: Vec<ParamVector>, rounds: Vec<usize>) -> Result<Self> {
        if checkpoints.is_empty() || checkpoints.len() != rounds.len() {
            return Err(Error::InvalidArgument("checkpoint/round count mismatch".into()));
        }
        if rounds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("round indices must strictly increase".into()));
        }
        let spec = checkpoints[0].spec();
        if checkpoints.iter().any(|c| c.spec() != spec) {
            return Err(Error::InvalidArgument("checkpoints with mixed specs".into()));
        }
        Ok(Trajectory { checkpoints, rounds })
    }

    pub fn len(&self) -> usize {
        self.checkpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.checkpoints.is_empty()
    }

    pub fn spec(&self) -> &MlpSpec {
        self.checkpoints[0].spec()
    }

    pub fn checkpoint(&self, i: usize) -> &ParamVector {
        &self.checkpoints[i]
    }

    pub fn checkpoints(&self) -> &[ParamVector] {
        &self.checkpoints
    }

    pub fn rounds(&self) -> &[usize] {
        &self.rounds
    }
}

/// Learnable synthetic dataset: inputs `x` (`n x d`) and label logits
/// `y_logits` (`n x K`); training targets are `softmax(y_logits)` rows, so
/// gradient updates can never leave the probability simplex.
#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub x: Tensor,
    pub y_logits: Tensor,
}

impl SyntheticDataset {
    pub fn new(x: Tensor, y_logits: Tensor) -> Result<Self> {
        if x.rank() != 2 || y_logits.rank() != 2 || x.rows() != y_logits.rows() {
            return Err(Error::InvalidArgument("synthetic x/y shape mismatch".into()));
        }
        if !x.is_finite() || !y_logits.is_finite() {
            return Err(Error::InvalidArgument("non-finite synthetic data".into()));
        }
        Ok(SyntheticDataset { x, y_logits })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn class_count(&self) -> usize {
        self.y_logits.cols()
    }

    /// Softmax of the logits: one probability row per sample.
    pub fn soft_targets(&self) -> Tensor {
        self.y_logits.log_softmax().exp()
    }

    /// Fewer samples than classes is allowed but worth flagging.
    pub fn undersized_warning(&self) -> Option<String> {
        (self.len() < self.class_count()).then(|| {
            format!(
                "synthetic dataset has {} samples for {} classes",
                self.len(),
                self.class_count()
            )
        })
    }
}

/// Settings for the synthesis loop.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Segment span in rounds between start and target checkpoint.
    pub span: usize,
    /// Training steps taken on the synthetic data per segment.
    pub inner_steps: usize,
    /// Outer optimization iterations.
    pub outer_iterations: usize,
    pub outer_lr: f64,
    pub inner_lr: f64,
    /// Synthetic sample count.
    pub samples: usize,
    /// How many intermediate checkpoints get averaged into the target.
    pub target_avg_count: usize,
    pub metric: DistanceKind,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            span: 5,
            inner_steps: 10,
            outer_iterations: 1000,
            outer_lr: 5e-2,
            inner_lr: 1e-5,
            samples: 150,
            target_avg_count: 2,
            metric: DistanceKind::NormalizedL2,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.span == 0 {
            return Err(Error::Config("segment span must be at least 1".into()));
        }
        if self.inner_steps == 0 || self.outer_iterations == 0 {
            return Err(Error::Config("inner steps and outer iterations must be at least 1".into()));
        }
        if self.outer_lr <= 0.0 || self.inner_lr <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.samples == 0 {
            return Err(Error::Config("need at least one synthetic sample".into()));
        }
        if self.target_avg_count + 1 > self.span {
            return Err(Error::Config(format!(
                "cannot average {} intermediate checkpoints over a span of {}",
                self.target_avg_count, self.span
            )));
        }
        Ok(())
    }
}

/// Fresh synthetic dataset: inputs are standard normal noise; logits are all
/// zero, so every label row starts exactly uniform.
pub fn init_synthetic(n: usize, d: usize, k: usize, rng: &mut Rng) -> Result<SyntheticDataset> {
    if n == 0 || d == 0 || k == 0 {
        return Err(Error::InvalidArgument("synthetic dims must be positive".into()));
    }
    let data: Vec<f64> = (0..n * d).map(|_| rng.normal()).collect();
    SyntheticDataset::new(Tensor::new(vec![n, d], data)?, Tensor::zeros(vec![n, k]))
}

/// A sampled trajectory segment: start checkpoint plus the averaged target.
#[derive(Clone, Debug)]
pub struct SegmentSample {
    pub start_index: usize,
    /// Checkpoint indices averaged into the target, ascending (always
    /// includes `start_index + span`).
    pub target_indices: Vec<usize>,
    pub w_start: ParamVector,
    pub w_target: ParamVector,
}

/// Draw a segment start uniformly (the initialization at index 0 is
/// admissible) and average the end checkpoint with `target_avg_count`
/// distinct intermediates drawn without replacement.
///
/// Sub-streams are derived from `rng` by iteration number, so each outer
/// iteration's draws are reproducible in isolation.
pub fn sample_segment(
    traj: &Trajectory,
    cfg: &SynthConfig,
    rng: &Rng,
    iteration: u64,
) -> Result<SegmentSample> {
    let s = cfg.span;
    if traj.len() < s + 1 {
        return Err(Error::Config(format!(
            "trajectory of {} checkpoints cannot fit a span of {s}",
            traj.len()
        )));
    }
    if cfg.target_avg_count > s - 1 {
        return Err(Error::Config("target_avg_count exceeds span - 1".into()));
    }
    let starts = traj.len() - s; // valid start indices: 0..starts
    let mut start_rng = rng.split_indexed("segment-start", iteration);
    let t = if starts == 1 { 0 } else { start_rng.index(starts) };

    let mut indices = vec![t + s];
    if cfg.target_avg_count > 0 {
        let mut avg_rng = rng.split_indexed("target-avg", iteration);
        let picked = avg_rng.sample_without_replacement(s - 1, cfg.target_avg_count);
        indices.extend(picked.into_iter().map(|off| t + 1 + off));
    }
    indices.sort_unstable();

    let mut values = vec![0.0; traj.spec().param_count()];
    for &i in &indices {
        for (v, &c) in values.iter_mut().zip(traj.checkpoint(i).values()) {
            *v += c;
        }
    }
    let scale = 1.0 / indices.len() as f64;
    values.iter_mut().for_each(|v| *v *= scale);
    Ok(SegmentSample {
        start_index: t,
        target_indices: indices,
        w_start: traj.checkpoint(t).clone(),
        w_target: ParamVector::new(traj.spec().clone(), values)?,
    })
}

/// Matching loss and its exact gradients with respect to the synthetic
/// inputs and label logits, differentiated through the whole inner unroll.
pub struct MetaGradients {
    pub loss: f64,
    pub grad_x: Tensor,
    pub grad_y: Tensor,
}

pub fn meta_loss_and_grads(
    dsyn: &SyntheticDataset,
    w_start: &ParamVector,
    w_target: &ParamVector,
    cfg: &SynthConfig,
) -> Result<MetaGradients> {
    if w_start.values() == w_target.values() {
        return Err(Error::SkipSegment);
    }
    let metric = DistanceMetric::for_kind(cfg.metric, w_start, w_target)?;

    let x_in = Expr::input("syn/x", vec![dsyn.len(), dsyn.dim()]);
    let y_in = Expr::input("syn/y", vec![dsyn.len(), dsyn.class_count()]);
    let targets = y_in.log_softmax()?.exp();
    let steps = mlp::sgd_unroll_expr(
        &mlp::param_constants(w_start),
        &x_in,
        &targets,
        cfg.inner_lr,
        cfg.inner_steps,
    )?;
    let loss = distance_expr(steps.last().unwrap(), w_target, &metric)?;
    let grads = grad(&loss, &[x_in, y_in])?;

    let mut bindings = Bindings::new();
    bindings.insert("syn/x".into(), dsyn.x.clone());
    bindings.insert("syn/y".into(), dsyn.y_logits.clone());
    let mut ev = Evaluator::new(&bindings);
    for (step, layers) in steps.iter().enumerate().skip(1) {
        for (w, b) in layers {
            for e in [w, b] {
                ev.eval(e).map_err(|_| Error::Divergence {
                    context: format!("inner unroll step {step}"),
                })?;
            }
        }
    }
    Ok(MetaGradients {
        loss: ev.eval(&loss)?.scalar_value(),
        grad_x: ev.eval(&grads[0])?,
        grad_y: ev.eval(&grads[1])?,
    })
}

/// Matching loss only, computed over the value-level unroll. Used as the
/// function probed by the finite-difference oracle.
pub fn meta_loss(
    dsyn: &SyntheticDataset,
    w_start: &ParamVector,
    w_target: &ParamVector,
    cfg: &SynthConfig,
) -> Result<f64> {
    if w_start.values() == w_target.values() {
        return Err(Error::SkipSegment);
    }
    let metric = DistanceMetric::for_kind(cfg.metric, w_start, w_target)?;
    let trained = mlp::sgd_unroll(
        w_start,
        &dsyn.x,
        &dsyn.soft_targets(),
        cfg.inner_lr,
        cfg.inner_steps,
    )?;
    distance(&trained, w_target, &metric)
}

#[derive(Clone, Debug)]
pub struct SynthLogEntry {
    pub iteration: usize,
    pub segment_start: usize,
    pub loss: f64,
}

pub struct SynthOutcome {
    pub dataset: SyntheticDataset,
    pub log: Vec<SynthLogEntry>,
    pub skipped_segments: usize,
}

/// Learn a synthetic dataset from a trajectory.
///
/// Each outer iteration samples a segment, computes the matching loss and
/// its meta-gradients, and takes one Adam step on the inputs and logits.
/// Degenerate segments (start equals target) are skipped and resampled; if
/// more segments get skipped than used, the trajectory carries no signal
/// and the run aborts.
pub fn datasyn(traj: &Trajectory, cfg: &SynthConfig, rng: &Rng) -> Result<SynthOutcome> {
    cfg.validate()?;
    let spec = traj.spec();
    let mut dsyn = init_synthetic(
        cfg.samples,
        spec.input_dim(),
        spec.class_count(),
        &mut rng.split("init"),
    )?;
    let sample_rng = rng.split("segments");
    let mut adam_x = Adam::new(dsyn.x.len(), cfg.outer_lr);
    let mut adam_y = Adam::new(dsyn.y_logits.len(), cfg.outer_lr);
    let mut log = Vec::with_capacity(cfg.outer_iterations);
    let mut skipped = 0usize;
    let mut draw = 0u64;
    for iteration in 0..cfg.outer_iterations {
        let meta = loop {
            let segment = sample_segment(traj, cfg, &sample_rng, draw)?;
            draw += 1;
            match meta_loss_and_grads(&dsyn, &segment.w_start, &segment.w_target, cfg) {
                Ok(meta) => break (segment.start_index, meta),
                Err(Error::SkipSegment) => {
                    skipped += 1;
                    if skipped > cfg.outer_iterations {
                        return Err(Error::DegenerateTrajectory(format!(
                            "{skipped} degenerate segments over {} draws",
                            draw
                        )));
                    }
                }
                Err(e) => return Err(e),
            }
        };
        let (segment_start, meta) = meta;
        adam_x.step(dsyn.x.data_mut(), meta.grad_x.data());
        adam_y.step(dsyn.y_logits.data_mut(), meta.grad_y.data());
        if !dsyn.x.is_finite() || !dsyn.y_logits.is_finite() {
            return Err(Error::Divergence {
                context: format!("synthesis iteration {iteration}"),
            });
        }
        log.push(SynthLogEntry { iteration, segment_start, loss: meta.loss });
    }
    Ok(SynthOutcome { dataset: dsyn, log, skipped_segments: skipped })
}

/// A named dataset entered into the fidelity comparison.
#[derive(Clone, Debug)]
pub struct FidelityCandidate {
    pub name: String,
    pub x: Tensor,
    pub targets: Tensor,
}

impl FidelityCandidate {
    pub fn from_synthetic(name: impl Into<String>, dsyn: &SyntheticDataset) -> Self {
        FidelityCandidate {
            name: name.into(),
            x: dsyn.x.clone(),
            targets: dsyn.soft_targets(),
        }
    }

    pub fn from_labeled(name: impl Into<String>, data: &LabeledDataset, indices: &[usize]) -> Self {
        let (x, targets) = data.gather(indices);
        FidelityCandidate { name: name.into(), x, targets }
    }

    /// Standard-normal inputs with uniformly drawn one-hot labels.
    pub fn noise(name: impl Into<String>, n: usize, d: usize, k: usize, rng: &mut Rng) -> Self {
        let x: Vec<f64> = (0..n * d).map(|_| rng.normal()).collect();
        let mut t = vec![0.0; n * k];
        for row in 0..n {
            t[row * k + rng.index(k)] = 1.0;
        }
        FidelityCandidate {
            name: name.into(),
            x: Tensor::new(vec![n, d], x).unwrap(),
            targets: Tensor::new(vec![n, k], t).unwrap(),
        }
    }
}

/// Per-candidate matching distances over every valid trajectory segment.
#[derive(Clone, Debug)]
pub struct FidelityReport {
    pub segment_starts: Vec<usize>,
    /// One row per candidate, aligned with `segment_starts`.
    pub distances: Vec<(String, Vec<f64>)>,
}

impl FidelityReport {
    pub fn mean(&self, candidate: usize) -> f64 {
        let d = &self.distances[candidate].1;
        d.iter().sum::<f64>() / d.len() as f64
    }
}

/// Unroll every candidate over every valid segment (fixed end checkpoint,
/// no target averaging) and record the matching distance.
pub fn trajectory_fidelity(
    traj: &Trajectory,
    cfg: &SynthConfig,
    candidates: &[FidelityCandidate],
) -> Result<FidelityReport> {
    cfg.validate()?;
    let s = cfg.span;
    if traj.len() < s + 1 {
        return Err(Error::Config("trajectory shorter than one segment".into()));
    }
    let spec = traj.spec();
    for c in candidates {
        if c.x.cols() != spec.input_dim() || c.targets.cols() != spec.class_count() {
            return Err(Error::InvalidArgument(format!(
                "candidate '{}' does not match the trajectory architecture",
                c.name
            )));
        }
    }
    let mut segment_starts = Vec::new();
    let mut distances: Vec<(String, Vec<f64>)> =
        candidates.iter().map(|c| (c.name.clone(), Vec::new())).collect();
    for t in 0..traj.len() - s {
        let w_start = traj.checkpoint(t);
        let w_target = traj.checkpoint(t + s);
        if w_start.values() == w_target.values() {
            continue;
        }
        let metric = DistanceMetric::for_kind(cfg.metric, w_start, w_target)?;
        segment_starts.push(t);
        for (c, row) in candidates.iter().zip(&mut distances) {
            let trained = mlp::sgd_unroll(w_start, &c.x, &c.targets, cfg.inner_lr, cfg.inner_steps)?;
            row.1.push(distance(&trained, w_target, &metric)?);
        }
    }
    if segment_starts.is_empty() {
        return Err(Error::DegenerateTrajectory("all segments degenerate".into()));
    }
    Ok(FidelityReport { segment_starts, distances })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdiff::{finite_difference, max_relative_error};
    use crate::mlp::init_params;

    fn tiny_spec() -> MlpSpec {
        MlpSpec::new(vec![4, 2, 3]).unwrap()
    }

    fn tiny_cfg(metric: DistanceKind, inner_steps: usize) -> SynthConfig {
        SynthConfig {
            span: 2,
            inner_steps,
            outer_iterations: 1,
            outer_lr: 5e-2,
            inner_lr: 0.05,
            samples: 3,
            target_avg_count: 0,
            metric,
        }
    }

    fn tiny_instance(seed: u64) -> (SyntheticDataset, ParamVector, ParamVector) {
        let spec = tiny_spec();
        let w_start = init_params(&spec, &mut Rng::new(seed));
        let w_target = init_params(&spec, &mut Rng::new(seed + 1));
        let mut rng = Rng::new(seed + 2);
        let mut dsyn = init_synthetic(3, 4, 3, &mut rng).unwrap();
        // Non-uniform logits so the label gradient path is exercised.
        for (i, v) in dsyn.y_logits.data_mut().iter_mut().enumerate() {
            *v = 0.3 * ((i as f64) * 0.7).sin();
        }
        (dsyn, w_start, w_target)
    }

    #[test]
    fn trajectory_constructor_enforces_invariants() {
        let spec = tiny_spec();
        let a = init_params(&spec, &mut Rng::new(1));
        let b = init_params(&spec, &mut Rng::new(2));
        // Non-increasing round indices.
        assert!(Trajectory::new(vec![a.clone(), b.clone()], vec![1, 1]).is_err());
        // Mixed specs.
        let other = init_params(&MlpSpec::new(vec![4, 3]).unwrap(), &mut Rng::new(3));
        assert!(Trajectory::new(vec![a.clone(), other], vec![0, 1]).is_err());
        // Count mismatch and empty.
        assert!(Trajectory::new(vec![a.clone()], vec![0, 1]).is_err());
        assert!(Trajectory::new(vec![], vec![]).is_err());
        assert!(Trajectory::new(vec![a, b], vec![0, 1]).is_ok());
    }

    #[test]
    fn init_synthetic_rows_start_uniform() {
        let mut rng = Rng::new(400);
        let d = init_synthetic(5, 2, 4, &mut rng).unwrap();
        let sm = d.soft_targets();
        assert!(sm.data().iter().all(|&p| p == 0.25));
    }

    #[test]
    fn init_synthetic_moments() {
        let mut rng = Rng::new(401);
        let d = init_synthetic(200, 50, 2, &mut rng).unwrap();
        let n = d.x.len() as f64;
        let mean = d.x.data().iter().sum::<f64>() / n;
        let var = d.x.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.05, "mean {mean}");
        assert!((var - 1.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn init_synthetic_is_deterministic() {
        let a = init_synthetic(4, 3, 2, &mut Rng::new(7)).unwrap();
        let b = init_synthetic(4, 3, 2, &mut Rng::new(7)).unwrap();
        assert_eq!(a.x.data(), b.x.data());
    }

    fn line_trajectory(spec: &MlpSpec, len: usize) -> Trajectory {
        // Distinct checkpoints along a fixed direction.
        let base = init_params(spec, &mut Rng::new(55));
        let dir = init_params(spec, &mut Rng::new(56));
        let mut cps = Vec::new();
        for i in 0..len {
            let vals: Vec<f64> = base
                .values()
                .iter()
                .zip(dir.values())
                .map(|(b, d)| b + 0.1 * i as f64 * d)
                .collect();
            cps.push(ParamVector::new(spec.clone(), vals).unwrap());
        }
        Trajectory::new(cps, (0..len).collect()).unwrap()
    }

    #[test]
    fn segment_without_averaging_hits_span_end() {
        let spec = tiny_spec();
        let traj = line_trajectory(&spec, 8);
        let cfg = tiny_cfg(DistanceKind::L2, 1);
        let rng = Rng::new(1);
        let s = sample_segment(&traj, &cfg, &rng, 0).unwrap();
        assert_eq!(s.target_indices, vec![s.start_index + cfg.span]);
        assert_eq!(s.w_target.values(), traj.checkpoint(s.start_index + cfg.span).values());
    }

    #[test]
    fn degenerate_range_forces_start_zero() {
        let spec = tiny_spec();
        let traj = line_trajectory(&spec, 3);
        let cfg = tiny_cfg(DistanceKind::L2, 1);
        let rng = Rng::new(2);
        // span == len - 1: only t = 0 fits.
        let s = sample_segment(&traj, &cfg, &rng, 9).unwrap();
        assert_eq!(s.start_index, 0);
    }

    #[test]
    fn averaged_target_replays_from_logged_indices() {
        let spec = tiny_spec();
        let traj = line_trajectory(&spec, 10);
        let cfg = SynthConfig {
            span: 5,
            target_avg_count: 2,
            ..tiny_cfg(DistanceKind::L2, 1)
        };
        let rng = Rng::new(3);
        for iter in 0..20 {
            let s = sample_segment(&traj, &cfg, &rng, iter).unwrap();
            assert_eq!(s.target_indices.len(), 3);
            // Recompute the mean from the logged indices.
            let mut want = vec![0.0; spec.param_count()];
            for &i in &s.target_indices {
                for (w, &v) in want.iter_mut().zip(traj.checkpoint(i).values()) {
                    *w += v / 3.0;
                }
            }
            for (a, b) in s.w_target.values().iter().zip(&want) {
                assert!((a - b).abs() < 1e-12);
            }
            // Intermediates are strictly inside the segment.
            for &i in &s.target_indices[..2] {
                assert!(i > s.start_index && i < s.start_index + 5);
            }
        }
    }

    #[test]
    fn excessive_target_averaging_is_a_config_error() {
        let spec = tiny_spec();
        let traj = line_trajectory(&spec, 10);
        let cfg = SynthConfig {
            span: 2,
            target_avg_count: 2,
            ..tiny_cfg(DistanceKind::L2, 1)
        };
        assert!(matches!(
            sample_segment(&traj, &cfg, &Rng::new(4), 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn identical_endpoints_signal_skip() {
        let (dsyn, w_start, _) = tiny_instance(60);
        let cfg = tiny_cfg(DistanceKind::NormalizedL2, 2);
        assert!(matches!(
            meta_loss_and_grads(&dsyn, &w_start, &w_start, &cfg),
            Err(Error::SkipSegment)
        ));
    }

    #[test]
    fn meta_gradients_match_finite_differences_for_all_metrics() {
        // The build-gating check: exact hypergradients through the unroll.
        let h = 1e-5;
        for metric in [DistanceKind::L2, DistanceKind::NormalizedL2, DistanceKind::Cosine] {
            for inner_steps in [1usize, 2, 4] {
                let (dsyn, w_start, w_target) = tiny_instance(70);
                let cfg = tiny_cfg(metric, inner_steps);
                let got = meta_loss_and_grads(&dsyn, &w_start, &w_target, &cfg).unwrap();

                let fd_x = finite_difference(
                    |x: &Tensor| {
                        let probe = SyntheticDataset::new(x.clone(), dsyn.y_logits.clone())?;
                        meta_loss(&probe, &w_start, &w_target, &cfg)
                    },
                    &dsyn.x,
                    h,
                )
                .unwrap();
                let fd_y = finite_difference(
                    |y: &Tensor| {
                        let probe = SyntheticDataset::new(dsyn.x.clone(), y.clone())?;
                        meta_loss(&probe, &w_start, &w_target, &cfg)
                    },
                    &dsyn.y_logits,
                    h,
                )
                .unwrap();
                let ex = max_relative_error(&got.grad_x, &fd_x, 1e-7);
                let ey = max_relative_error(&got.grad_y, &fd_y, 1e-7);
                assert!(
                    ex < 1e-4 && ey < 1e-4,
                    "{metric:?} s'={inner_steps}: grad_x err {ex}, grad_y err {ey}"
                );
            }
        }
    }

    #[test]
    fn permuting_samples_permutes_gradients() {
        let (dsyn, w_start, w_target) = tiny_instance(80);
        let cfg = tiny_cfg(DistanceKind::NormalizedL2, 2);
        let base = meta_loss_and_grads(&dsyn, &w_start, &w_target, &cfg).unwrap();

        // Swap rows 0 and 2 of both x and y.
        let perm = [2usize, 1, 0];
        let permute = |t: &Tensor| {
            let k = t.cols();
            let mut data = Vec::with_capacity(t.len());
            for &p in &perm {
                data.extend_from_slice(t.row(p));
            }
            Tensor::new(vec![3, k], data).unwrap()
        };
        let shuffled = SyntheticDataset::new(permute(&dsyn.x), permute(&dsyn.y_logits)).unwrap();
        let got = meta_loss_and_grads(&shuffled, &w_start, &w_target, &cfg).unwrap();
        assert!((got.loss - base.loss).abs() < 1e-12);
        for (row, &p) in perm.iter().enumerate() {
            for c in 0..dsyn.x.cols() {
                assert!((got.grad_x.row(row)[c] - base.grad_x.row(p)[c]).abs() < 1e-12);
            }
            for c in 0..dsyn.y_logits.cols() {
                assert!((got.grad_y.row(row)[c] - base.grad_y.row(p)[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn meta_loss_is_continuous_in_x() {
        // Slope boundedness: perturbing x by delta moves the loss O(delta).
        let (dsyn, w_start, w_target) = tiny_instance(90);
        let cfg = tiny_cfg(DistanceKind::NormalizedL2, 3);
        let base = meta_loss(&dsyn, &w_start, &w_target, &cfg).unwrap();
        let mut prev_slope: Option<f64> = None;
        for delta in [1e-3, 1e-4, 1e-5] {
            let mut x = dsyn.x.clone();
            x.data_mut()[0] += delta;
            let probe = SyntheticDataset::new(x, dsyn.y_logits.clone()).unwrap();
            let moved = meta_loss(&probe, &w_start, &w_target, &cfg).unwrap();
            let slope = (moved - base).abs() / delta;
            assert!(slope < 1e3, "slope {slope} at delta {delta}");
            if let Some(p) = prev_slope {
                // Slopes stabilize as delta shrinks (no blow-up).
                assert!(slope < 10.0 * p.max(1e-9) + 1.0);
            }
            prev_slope = Some(slope);
        }
    }

    #[test]
    fn datasyn_single_iteration_logs_once() {
        let spec = tiny_spec();
        let traj = line_trajectory(&spec, 6);
        let cfg = SynthConfig {
            outer_iterations: 1,
            samples: 3,
            span: 2,
            inner_steps: 2,
            inner_lr: 0.05,
            target_avg_count: 0,
            ..SynthConfig::default()
        };
        let out = datasyn(&traj, &cfg, &Rng::new(5)).unwrap();
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.dataset.len(), 3);
    }

    #[test]
    fn datasyn_loss_log_is_bit_reproducible() {
        let spec = tiny_spec();
        let traj = line_trajectory(&spec, 8);
        let cfg = SynthConfig {
            outer_iterations: 12,
            samples: 4,
            span: 3,
            inner_steps: 2,
            inner_lr: 0.05,
            target_avg_count: 1,
            ..SynthConfig::default()
        };
        let a = datasyn(&traj, &cfg, &Rng::new(6)).unwrap();
        let b = datasyn(&traj, &cfg, &Rng::new(6)).unwrap();
        for (x, y) in a.log.iter().zip(&b.log) {
            assert_eq!(x.loss.to_bits(), y.loss.to_bits());
            assert_eq!(x.segment_start, y.segment_start);
        }
    }

    #[test]
    fn constant_trajectory_is_degenerate() {
        let spec = tiny_spec();
        let w = init_params(&spec, &mut Rng::new(8));
        let traj = Trajectory::new(vec![w.clone(), w.clone(), w.clone(), w], vec![0, 1, 2, 3]).unwrap();
        let cfg = SynthConfig {
            outer_iterations: 4,
            samples: 3,
            span: 2,
            inner_steps: 1,
            target_avg_count: 0,
            ..SynthConfig::default()
        };
        assert!(matches!(
            datasyn(&traj, &cfg, &Rng::new(9)),
            Err(Error::DegenerateTrajectory(_))
        ));
    }

    #[test]
    fn fidelity_self_consistency() {
        // A trajectory generated by full-batch GD on a dataset, probed with
        // that same dataset at matched step count and lr, lands exactly on
        // the target checkpoints.
        let spec = tiny_spec();
        let mut rng = Rng::new(200);
        let n = 6;
        let x = Tensor::new(vec![n, 4], (0..n * 4).map(|_| rng.normal()).collect::<Vec<_>>()).unwrap();
        let mut t = Tensor::zeros(vec![n, 3]);
        for i in 0..n {
            t.data_mut()[i * 3 + i % 3] = 1.0;
        }
        let lr = 0.1;
        let s = 3usize;
        let mut cps = vec![init_params(&spec, &mut Rng::new(201))];
        for _ in 0..9 {
            let next = mlp::sgd_unroll(cps.last().unwrap(), &x, &t, lr, 1).unwrap();
            cps.push(next);
        }
        let traj = Trajectory::new(cps, (0..10).collect()).unwrap();
        let cfg = SynthConfig {
            span: s,
            inner_steps: s,
            inner_lr: lr,
            samples: n,
            target_avg_count: 0,
            metric: DistanceKind::L2,
            ..SynthConfig::default()
        };
        let generator = FidelityCandidate { name: "generator".into(), x, targets: t };
        let noise = FidelityCandidate::noise("noise", n, 4, 3, &mut Rng::new(202));
        let report = trajectory_fidelity(&traj, &cfg, &[generator, noise]).unwrap();
        let gen_mean = report.mean(0);
        let noise_mean = report.mean(1);
        assert!(gen_mean < 1e-20, "generator distance {gen_mean}");
        assert!(noise_mean > 0.0, "noise distance {noise_mean}");
    }
}
