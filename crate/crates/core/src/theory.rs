//! Empirical rate verification on strongly convex surrogate tasks.
//!
//! Simulates the interleaved local-training / biased-finetuning process with
//! a decaying step size and checks that the suboptimality tail decays like
//! `1/t`. Also estimates the constants the analysis assumes: per-client
//! gradient variance, a squared-gradient-norm bound, and the biased-gradient
//! envelope `(delta, epsilon)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::federation::LabeledDataset;
use crate::mlp::{self, ParamVector};
use crate::rng::Rng;
use crate::synthesis::SyntheticDataset;
use crate::tensor::Tensor;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn matvec(a: &Tensor, x: &[f64]) -> Vec<f64> {
    let d = a.rows();
    let mut out = vec![0.0; d];
    for i in 0..d {
        out[i] = dot(a.row(i), x);
    }
    out
}

/// Random orthogonal matrix via Gram-Schmidt on a Gaussian matrix.
fn random_orthogonal(d: usize, rng: &mut Rng) -> Tensor {
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(d);
    while cols.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        for u in &cols {
            let proj = dot(&v, u);
            for i in 0..d {
                v[i] -= proj * u[i];
            }
        }
        let n = norm(&v);
        if n > 1e-8 {
            v.iter_mut().for_each(|x| *x /= n);
            cols.push(v);
        }
    }
    let mut data = vec![0.0; d * d];
    for (j, col) in cols.iter().enumerate() {
        for i in 0..d {
            data[i * d + j] = col[i];
        }
    }
    Tensor::new(vec![d, d], data).unwrap()
}

/// Symmetric positive definite matrix with log-spaced eigenvalues in
/// `[mu, mu * condition]`.
fn spd_with_spectrum(d: usize, mu: f64, condition: f64, rng: &mut Rng) -> Tensor {
    let q = random_orthogonal(d, rng);
    let lambda: Vec<f64> = (0..d)
        .map(|i| {
            let frac = if d == 1 { 0.0 } else { i as f64 / (d - 1) as f64 };
            mu * condition.powf(frac)
        })
        .collect();
    // A = Q diag(lambda) Q^T
    let mut scaled = q.clone();
    for i in 0..d {
        for j in 0..d {
            scaled.data_mut()[i * d + j] *= lambda[j];
        }
    }
    scaled.matmul(&q.transpose())
}

/// Strongly convex quadratic split across clients.
///
/// Every client shares the curvature `a`; heterogeneity and stochasticity
/// come from per-sample gradient offsets whose weighted global mean is zero,
/// so the full gradient stays `a w - b` and the minimizer is known exactly.
#[derive(Clone, Debug)]
pub struct QuadraticTask {
    pub a: Tensor,
    pub b: Vec<f64>,
    pub w_star: Vec<f64>,
    pub mu: f64,
    pub smoothness: f64,
    /// Per-client, per-sample gradient offsets.
    pub client_offsets: Vec<Vec<Vec<f64>>>,
    pub alpha: Vec<f64>,
}

impl QuadraticTask {
    /// `condition` is the eigenvalue ratio `smoothness / mu`.
    pub fn generate(
        d: usize,
        mu: f64,
        condition: f64,
        clients: usize,
        samples_per_client: usize,
        noise_std: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if d == 0 || clients == 0 || samples_per_client == 0 {
            return Err(Error::InvalidArgument("quadratic task dims must be positive".into()));
        }
        if mu <= 0.0 || condition < 1.0 {
            return Err(Error::InvalidArgument("need mu > 0 and condition >= 1".into()));
        }
        let mut arng = rng.split("matrix");
        let a = spd_with_spectrum(d, mu, condition, &mut arng);
        let mut wrng = rng.split("minimizer");
        let w_star: Vec<f64> = (0..d).map(|_| wrng.normal()).collect();
        let b = matvec(&a, &w_star);

        let alpha = vec![1.0 / clients as f64; clients];
        let mut zrng = rng.split("offsets");
        let mut client_offsets: Vec<Vec<Vec<f64>>> = (0..clients)
            .map(|_| {
                (0..samples_per_client)
                    .map(|_| (0..d).map(|_| noise_std * zrng.normal()).collect())
                    .collect()
            })
            .collect();
        // Center the weighted global mean so the full gradient is exact.
        let mut global_mean = vec![0.0; d];
        for (m, shard) in client_offsets.iter().enumerate() {
            for z in shard {
                for i in 0..d {
                    global_mean[i] += alpha[m] * z[i] / shard.len() as f64;
                }
            }
        }
        for shard in &mut client_offsets {
            for z in shard {
                for i in 0..d {
                    z[i] -= global_mean[i];
                }
            }
        }
        Ok(QuadraticTask {
            a,
            b,
            w_star,
            mu,
            smoothness: mu * condition,
            client_offsets,
            alpha,
        })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        0.5 * dot(w, &matvec(&self.a, w)) - dot(&self.b, w)
    }

    pub fn suboptimality(&self, w: &[f64]) -> f64 {
        self.loss(w) - self.loss(&self.w_star)
    }

    pub fn full_gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = matvec(&self.a, w);
        for i in 0..g.len() {
            g[i] -= self.b[i];
        }
        g
    }

    pub fn client_mean_offset(&self, m: usize) -> Vec<f64> {
        let shard = &self.client_offsets[m];
        let mut mean = vec![0.0; self.dim()];
        for z in shard {
            for i in 0..mean.len() {
                mean[i] += z[i] / shard.len() as f64;
            }
        }
        mean
    }

    /// Stochastic gradient of client `m` at sample `j`.
    pub fn sample_gradient(&self, m: usize, j: usize, w: &[f64]) -> Vec<f64> {
        let mut g = self.full_gradient(w);
        for (gi, zi) in g.iter_mut().zip(&self.client_offsets[m][j]) {
            *gi += zi;
        }
        g
    }
}

/// Surrogate dataset used in the finetuning phase: a perturbed quadratic
/// whose gradients are biased relative to the task's.
#[derive(Clone, Debug)]
pub struct QuadraticSurrogate {
    pub a: Tensor,
    pub b: Vec<f64>,
    /// Zero-mean per-sample offsets.
    pub offsets: Vec<Vec<f64>>,
}

impl QuadraticSurrogate {
    /// Perturb the task curvature and linear term, and attach `samples`
    /// zero-mean stochastic offsets.
    pub fn perturbed(
        task: &QuadraticTask,
        matrix_rel: f64,
        shift: f64,
        noise_std: f64,
        samples: usize,
        rng: &mut Rng,
    ) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidArgument("surrogate needs samples".into()));
        }
        let d = task.dim();
        let mut a = task.a.clone();
        let mut prng = rng.split("matrix");
        // Symmetric perturbation with entries scaled to ~matrix_rel * mu.
        let scale = matrix_rel * task.mu / (d as f64).sqrt();
        let noise: Vec<f64> = (0..d * d).map(|_| scale * prng.normal()).collect();
        for i in 0..d {
            for j in 0..=i {
                let e = 0.5 * (noise[i * d + j] + noise[j * d + i]);
                a.data_mut()[i * d + j] += e;
                if i != j {
                    a.data_mut()[j * d + i] += e;
                }
            }
        }
        let mut srng = rng.split("shift");
        let mut dir: Vec<f64> = (0..d).map(|_| srng.normal()).collect();
        let n = norm(&dir).max(1e-12);
        dir.iter_mut().for_each(|v| *v *= shift / n);
        let b: Vec<f64> = task.b.iter().zip(&dir).map(|(x, e)| x + e).collect();

        let mut zrng = rng.split("offsets");
        let mut offsets: Vec<Vec<f64>> = (0..samples)
            .map(|_| (0..d).map(|_| noise_std * zrng.normal()).collect())
            .collect();
        let mut mean = vec![0.0; d];
        for z in &offsets {
            for i in 0..d {
                mean[i] += z[i] / samples as f64;
            }
        }
        for z in &mut offsets {
            for i in 0..d {
                z[i] -= mean[i];
            }
        }
        Ok(QuadraticSurrogate { a, b, offsets })
    }

    pub fn mean_gradient(&self, w: &[f64]) -> Vec<f64> {
        let mut g = matvec(&self.a, w);
        for i in 0..g.len() {
            g[i] -= self.b[i];
        }
        g
    }

    pub fn sample_gradient(&self, j: usize, w: &[f64]) -> Vec<f64> {
        let mut g = self.mean_gradient(w);
        for (gi, zi) in g.iter_mut().zip(&self.offsets[j]) {
            *gi += zi;
        }
        g
    }
}

/// Step-size schedule `eta_t = c / (t + gamma)` plus the phase lengths of
/// the interleaved process: `tau1` local steps, then `tau2` finetune steps.
#[derive(Clone, Debug, Serialize)]
pub struct ScheduleConfig {
    pub c: f64,
    pub gamma: f64,
    pub tau1: usize,
    pub tau2: usize,
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c <= 0.0 || self.gamma < 0.0 {
            return Err(Error::Config("need c > 0 and gamma >= 0".into()));
        }
        if self.tau1 == 0 {
            return Err(Error::Config("tau1 must be at least 1".into()));
        }
        Ok(())
    }
}

/// Empirical stand-ins for the analysis constants.
#[derive(Clone, Debug, Serialize)]
pub struct AssumptionEstimates {
    pub sigma_m: Vec<f64>,
    pub g_max: f64,
    pub delta: f64,
    pub epsilon: f64,
}

/// Human-readable name of the envelope-fit procedure, reported next to the
/// fitted constants.
pub const ENVELOPE_FIT_METHOD: &str =
    "vertex enumeration minimizing delta + epsilon/median(norms) subject to delta*a_i + epsilon >= r_i";

/// Minimal envelope `delta * a_i + epsilon >= r_i` with `delta, epsilon >= 0`
/// minimizing `delta + epsilon / scale` where `scale` is the median norm.
///
/// Solved exactly by vertex enumeration of the two-variable feasible region;
/// the result does not depend on probe order.
pub fn fit_bias_envelope(norms: &[f64], residuals: &[f64]) -> Result<(f64, f64)> {
    assert_eq!(norms.len(), residuals.len());
    if norms.is_empty() {
        return Err(Error::UndefinedFit("no probes".into()));
    }
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    if max_norm == 0.0 {
        return Err(Error::UndefinedFit("all probe gradients are zero".into()));
    }
    let mut sorted = norms.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let scale = if median > 0.0 { median } else { max_norm };

    let lift = |delta: f64| -> f64 {
        norms
            .iter()
            .zip(residuals)
            .map(|(&a, &r)| r - delta * a)
            .fold(0.0, f64::max)
    };
    let mut candidates: Vec<f64> = vec![0.0];
    // Slopes through every pair of probes, plus per-probe exact slopes.
    for i in 0..norms.len() {
        if norms[i] > 0.0 {
            candidates.push(residuals[i] / norms[i]);
        }
        for j in i + 1..norms.len() {
            let da = norms[i] - norms[j];
            if da.abs() > 1e-300 {
                let slope = (residuals[i] - residuals[j]) / da;
                if slope.is_finite() && slope >= 0.0 {
                    candidates.push(slope);
                }
            }
        }
    }
    let mut best: Option<(f64, f64, f64)> = None; // (objective, delta, epsilon)
    for delta in candidates {
        let epsilon = lift(delta).max(0.0);
        let objective = delta + epsilon / scale;
        let key = (objective, delta, epsilon);
        best = Some(match best {
            None => key,
            Some(prev) => {
                if key.0 < prev.0
                    || (key.0 == prev.0 && (key.1 < prev.1 || (key.1 == prev.1 && key.2 < prev.2)))
                {
                    key
                } else {
                    prev
                }
            }
        });
    }
    let (_, delta, epsilon) = best.unwrap();
    Ok((delta, epsilon))
}

/// A dataset viewed as `(inputs, soft target rows)` for gradient probing.
#[derive(Clone, Debug)]
pub struct GradientDataset {
    pub x: Tensor,
    pub targets: Tensor,
}

impl From<&LabeledDataset> for GradientDataset {
    fn from(d: &LabeledDataset) -> Self {
        GradientDataset { x: d.inputs.clone(), targets: d.one_hot_targets() }
    }
}

impl From<&SyntheticDataset> for GradientDataset {
    fn from(d: &SyntheticDataset) -> Self {
        GradientDataset { x: d.x.clone(), targets: d.soft_targets() }
    }
}

/// Fit the biased-gradient envelope constants of a synthetic dataset
/// against the real dataset over a set of probe parameters.
///
/// Residuals are `||grad_syn - grad_data||` and norms `||grad_data||`,
/// both full-batch.
pub fn estimate_bias_constants(
    syn: &GradientDataset,
    data: &GradientDataset,
    probes: &[ParamVector],
) -> Result<(f64, f64)> {
    if probes.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "need at least 10 probe points, got {}",
            probes.len()
        )));
    }
    let mut norms = Vec::with_capacity(probes.len());
    let mut residuals = Vec::with_capacity(probes.len());
    for w in probes {
        let (_, g_syn) = mlp::loss_and_grad(w, &syn.x, &syn.targets)?;
        let (_, g_data) = mlp::loss_and_grad(w, &data.x, &data.targets)?;
        let diff: Vec<f64> = g_syn.iter().zip(&g_data).map(|(a, b)| a - b).collect();
        residuals.push(norm(&diff));
        norms.push(norm(&g_data));
    }
    fit_bias_envelope(&norms, &residuals)
}

/// Measure `(delta, epsilon)` of a quadratic surrogate against its task over
/// probe points.
pub fn measure_surrogate_bias(
    task: &QuadraticTask,
    surrogate: &QuadraticSurrogate,
    probes: &[Vec<f64>],
) -> Result<(f64, f64)> {
    let mut norms = Vec::with_capacity(probes.len());
    let mut residuals = Vec::with_capacity(probes.len());
    for w in probes {
        let gd = task.full_gradient(w);
        let gs = surrogate.mean_gradient(w);
        let diff: Vec<f64> = gs.iter().zip(&gd).map(|(a, b)| a - b).collect();
        residuals.push(norm(&diff));
        norms.push(norm(&gd));
    }
    fit_bias_envelope(&norms, &residuals)
}

/// Per-client gradient variance and max squared-norm estimates at probes.
pub fn estimate_gradient_stats(task: &QuadraticTask, probes: &[Vec<f64>]) -> (Vec<f64>, f64) {
    let clients = task.client_offsets.len();
    let mut sigma = vec![0.0f64; clients];
    let mut g_sq_max = 0.0f64;
    for w in probes {
        for m in 0..clients {
            let mean_off = task.client_mean_offset(m);
            let base = task.full_gradient(w);
            let shard = &task.client_offsets[m];
            let mut var = 0.0;
            let mut sq_mean = 0.0;
            for z in shard {
                let mut dev = 0.0;
                let mut sq = 0.0;
                for i in 0..z.len() {
                    let d = z[i] - mean_off[i];
                    dev += d * d;
                    let g = base[i] + z[i];
                    sq += g * g;
                }
                var += dev / shard.len() as f64;
                sq_mean += sq / shard.len() as f64;
            }
            sigma[m] = sigma[m].max(var.sqrt());
            g_sq_max = g_sq_max.max(sq_mean);
        }
    }
    (sigma, g_sq_max.sqrt())
}

/// Output of one multi-seed convergence run.
#[derive(Clone, Debug)]
pub struct ConvergenceResult {
    /// Per-step mean suboptimality over seeds.
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub delta: f64,
    pub epsilon: f64,
    /// True when the measured bias satisfies `delta * smoothness < mu`.
    pub hypothesis_ok: bool,
}

/// Simulate the interleaved process: `tau1` stochastic local steps per
/// client, aggregation, then `tau2` steps on the biased surrogate, with
/// `eta_t = c / (t + gamma)` (t counted from 1). Series are averaged over
/// seeds in order.
///
/// The schedule check `c * mu_tilde > 1` (with `mu_tilde = 0.9 * (mu -
/// delta * smoothness)`) is enforced whenever the bias hypothesis holds;
/// runs violating the hypothesis proceed but are flagged.
pub fn run_convex_convergence(
    task: &QuadraticTask,
    schedule: &ScheduleConfig,
    surrogate: &QuadraticSurrogate,
    total_steps: usize,
    seeds: &[u64],
) -> Result<ConvergenceResult> {
    schedule.validate()?;
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("need at least one seed".into()));
    }

    // Probe bias constants near the optimum and along a coarse scale.
    let mut prng = Rng::new(0xb1a5);
    let probes: Vec<Vec<f64>> = (0..32)
        .map(|i| {
            let scale = 0.1 + 0.2 * i as f64;
            task.w_star
                .iter()
                .map(|w| w + scale * prng.normal())
                .collect()
        })
        .collect();
    let (delta, epsilon) = measure_surrogate_bias(task, surrogate, &probes)?;
    let hypothesis_ok = delta * task.smoothness < task.mu;
    if hypothesis_ok {
        let mu_tilde = 0.9 * (task.mu - delta * task.smoothness);
        if schedule.c * mu_tilde <= 1.0 {
            return Err(Error::Config(format!(
                "schedule violates c * mu_tilde > 1: c = {}, mu_tilde = {mu_tilde}",
                schedule.c
            )));
        }
    }

    let d = task.dim();
    let clients = task.client_offsets.len();
    let period = schedule.tau1 + schedule.tau2;
    let mut mean = vec![0.0; total_steps];
    let mut sq = vec![0.0; total_steps];
    for &seed in seeds {
        let root = Rng::new(seed);
        let mut init_rng = root.split("init");
        let w0: Vec<f64> = (0..d).map(|_| 2.0 * init_rng.normal()).collect();
        let mut w: Vec<Vec<f64>> = vec![w0; clients];
        let mut sample_rng = root.split("samples");
        for t in 0..total_steps {
            let eta = schedule.c / ((t + 1) as f64 + schedule.gamma);
            let in_local = (t % period) < schedule.tau1;
            if in_local {
                for (m, wm) in w.iter_mut().enumerate() {
                    let j = sample_rng.index(task.client_offsets[m].len());
                    let g = task.sample_gradient(m, j, wm);
                    for i in 0..d {
                        wm[i] -= eta * g[i];
                    }
                }
            } else {
                // All replicas are identical here; one draw updates them all.
                let j = sample_rng.index(surrogate.offsets.len());
                let g = surrogate.sample_gradient(j, &w[0]);
                for wm in w.iter_mut() {
                    for i in 0..d {
                        wm[i] -= eta * g[i];
                    }
                }
            }
            if (t + 1) % period == schedule.tau1 % period {
                let mut avg = vec![0.0; d];
                for (m, wm) in w.iter().enumerate() {
                    for i in 0..d {
                        avg[i] += task.alpha[m] * wm[i];
                    }
                }
                for wm in w.iter_mut() {
                    wm.copy_from_slice(&avg);
                }
            }
            let mut bar = vec![0.0; d];
            for (m, wm) in w.iter().enumerate() {
                for i in 0..d {
                    bar[i] += task.alpha[m] * wm[i];
                }
            }
            let sub = task.suboptimality(&bar);
            if !sub.is_finite() {
                return Err(Error::Divergence { context: format!("convex process step {t}") });
            }
            mean[t] += sub / seeds.len() as f64;
            sq[t] += sub * sub / seeds.len() as f64;
        }
    }
    let std = mean
        .iter()
        .zip(&sq)
        .map(|(&m, &s)| (s - m * m).max(0.0).sqrt())
        .collect();
    Ok(ConvergenceResult { mean, std, delta, epsilon, hypothesis_ok })
}

/// Ordinary least-squares slope of `log(series)` against `log(t)` over the
/// tail `window` fraction (t counted from 1).
pub fn fit_loglog_slope(series: &[f64], window: f64) -> Result<f64> {
    if !(window > 0.0 && window <= 1.0) {
        return Err(Error::InvalidArgument("window must lie in (0, 1]".into()));
    }
    let start = ((series.len() as f64) * (1.0 - window)).floor() as usize;
    let tail = &series[start..];
    if tail.len() < 2 {
        return Err(Error::CannotFit("tail window has fewer than two points".into()));
    }
    if tail.iter().any(|&v| v <= 0.0) {
        return Err(Error::CannotFit("non-positive values in the tail window".into()));
    }
    let xs: Vec<f64> = (start..series.len()).map(|t| ((t + 1) as f64).ln()).collect();
    let ys: Vec<f64> = tail.iter().map(|v| v.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    if den == 0.0 {
        return Err(Error::CannotFit("degenerate abscissa".into()));
    }
    Ok(num / den)
}

/// Strongly convex regularized logistic regression with a high-precision
/// Newton-solved minimizer.
#[derive(Clone, Debug)]
pub struct LogisticTask {
    pub features: Tensor,
    /// Labels in {-1, +1}.
    pub labels: Vec<f64>,
    pub mu: f64,
    pub smoothness: f64,
    pub w_star: Vec<f64>,
}

/// Cholesky solve of an SPD system; used by the Newton iteration.
fn solve_spd(a: &Tensor, b: &[f64]) -> Result<Vec<f64>> {
    let d = a.rows();
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut sum = a.data()[i * d + j];
            for k in 0..j {
                sum -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(Error::InvalidArgument("matrix not positive definite".into()));
                }
                l[i * d + j] = sum.sqrt();
            } else {
                l[i * d + j] = sum / l[j * d + j];
            }
        }
    }
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[i * d + k] * y[k];
        }
        y[i] = sum / l[i * d + i];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let mut sum = y[i];
        for k in i + 1..d {
            sum -= l[k * d + i] * x[k];
        }
        x[i] = sum / l[i * d + i];
    }
    Ok(x)
}

impl LogisticTask {
    pub fn generate(d: usize, samples: usize, mu: f64, rng: &mut Rng) -> Result<Self> {
        if d == 0 || samples == 0 || mu <= 0.0 {
            return Err(Error::InvalidArgument("bad logistic task parameters".into()));
        }
        let mut xrng = rng.split("features");
        let data: Vec<f64> = (0..samples * d).map(|_| xrng.normal()).collect();
        let features = Tensor::new(vec![samples, d], data)?;
        let mut lrng = rng.split("labels");
        let truth: Vec<f64> = (0..d).map(|_| lrng.normal()).collect();
        let labels: Vec<f64> = (0..samples)
            .map(|i| {
                let margin = dot(features.row(i), &truth) + 0.3 * lrng.normal();
                if margin >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();

        // Smoothness bound: lambda_max((1/4n) X^T X) + mu via power iteration.
        let gram = features.transpose().matmul(&features);
        let mut v = vec![1.0 / (d as f64).sqrt(); d];
        let mut lam = 0.0;
        for _ in 0..200 {
            let next = matvec(&gram, &v);
            lam = norm(&next);
            if lam == 0.0 {
                break;
            }
            v = next.iter().map(|x| x / lam).collect();
        }
        let smoothness = lam / (4.0 * samples as f64) + mu;

        let mut task = LogisticTask { features, labels, mu, smoothness, w_star: vec![0.0; d] };
        task.w_star = task.newton_minimizer()?;
        Ok(task)
    }

    pub fn loss(&self, w: &[f64]) -> f64 {
        let n = self.labels.len() as f64;
        let mut total = 0.0;
        for i in 0..self.labels.len() {
            let margin = self.labels[i] * dot(self.features.row(i), w);
            // log(1 + exp(-m)) computed stably
            total += if margin > 0.0 {
                (-margin).exp().ln_1p()
            } else {
                -margin + margin.exp().ln_1p()
            };
        }
        total / n + 0.5 * self.mu * dot(w, w)
    }

    pub fn full_gradient(&self, w: &[f64]) -> Vec<f64> {
        let d = w.len();
        let n = self.labels.len() as f64;
        let mut g = vec![0.0; d];
        for i in 0..self.labels.len() {
            let row = self.features.row(i);
            let margin = self.labels[i] * dot(row, w);
            let sig = 1.0 / (1.0 + margin.exp());
            for k in 0..d {
                g[k] -= self.labels[i] * row[k] * sig / n;
            }
        }
        for k in 0..d {
            g[k] += self.mu * w[k];
        }
        g
    }

    fn hessian(&self, w: &[f64]) -> Tensor {
        let d = w.len();
        let n = self.labels.len() as f64;
        let mut h = vec![0.0; d * d];
        for i in 0..self.labels.len() {
            let row = self.features.row(i);
            let margin = self.labels[i] * dot(row, w);
            let sig = 1.0 / (1.0 + margin.exp());
            let weight = sig * (1.0 - sig) / n;
            for a in 0..d {
                for b in 0..d {
                    h[a * d + b] += weight * row[a] * row[b];
                }
            }
        }
        for a in 0..d {
            h[a * d + a] += self.mu;
        }
        Tensor::new(vec![d, d], h).unwrap()
    }

    fn newton_minimizer(&self) -> Result<Vec<f64>> {
        let mut w = vec![0.0; self.features.cols()];
        for _ in 0..100 {
            let g = self.full_gradient(&w);
            if norm(&g) < 1e-13 {
                break;
            }
            let step = solve_spd(&self.hessian(&w), &g)?;
            for i in 0..w.len() {
                w[i] -= step[i];
            }
        }
        Ok(w)
    }
}
