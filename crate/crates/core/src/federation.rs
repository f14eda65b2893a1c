//! Client-side primitives: non-IID partitioning, local training (plain and
//! proximal), weighted aggregation, and model evaluation.

use crate::error::{Error, Result};
use crate::mlp::{self, ParamVector};
use crate::optim::{Adam, OptimizerConfig, OptimizerKind};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// A labeled dataset: `n x d` inputs and integer labels in `[0, K)`.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if inputs.rank() != 2 || inputs.rows() != labels.len() || labels.is_empty() {
            return Err(Error::InvalidArgument("inputs/labels shape mismatch".into()));
        }
        if labels.iter().any(|&l| l >= class_count) {
            return Err(Error::InvalidArgument("label outside class range".into()));
        }
        Ok(LabeledDataset { inputs, labels, class_count })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.cols()
    }

    /// Rows and one-hot targets for the given sample indices.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let d = self.dim();
        let k = self.class_count;
        let mut x = Vec::with_capacity(indices.len() * d);
        let mut t = vec![0.0; indices.len() * k];
        for (row, &idx) in indices.iter().enumerate() {
            x.extend_from_slice(self.inputs.row(idx));
            t[row * k + self.labels[idx]] = 1.0;
        }
        (
            Tensor::new(vec![indices.len(), d], x).unwrap(),
            Tensor::new(vec![indices.len(), k], t).unwrap(),
        )
    }

    pub fn one_hot_targets(&self) -> Tensor {
        let all: Vec<usize> = (0..self.len()).collect();
        self.gather(&all).1
    }
}

/// Disjoint per-client index lists plus sample-count weights.
#[derive(Clone, Debug)]
pub struct Partition {
    pub client_indices: Vec<Vec<usize>>,
    pub weights: Vec<f64>,
}

impl Partition {
    pub fn client_count(&self) -> usize {
        self.client_indices.len()
    }

    /// Per-class sample counts for one client.
    pub fn class_histogram(&self, client: usize, data: &LabeledDataset) -> Vec<usize> {
        let mut hist = vec![0usize; data.class_count];
        for &i in &self.client_indices[client] {
            hist[data.labels[i]] += 1;
        }
        hist
    }
}

/// The active-client set of one communication round.
#[derive(Clone, Debug)]
pub struct RoundPlan {
    pub round: usize,
    pub active: Vec<usize>,
    pub weight_sum: f64,
}

/// Sample `round(ratio * M)` distinct clients (at least one), ascending.
pub fn sample_round_plan(
    partition: &Partition,
    ratio: f64,
    round: usize,
    rng: &mut Rng,
) -> Result<RoundPlan> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(Error::InvalidArgument(format!("participation ratio {ratio} not in (0, 1]")));
    }
    let m = partition.client_count();
    let count = ((ratio * m as f64).round() as usize).clamp(1, m);
    let active = rng.sample_without_replacement(m, count);
    let weight_sum = active.iter().map(|&i| partition.weights[i]).sum();
    Ok(RoundPlan { round, active, weight_sum })
}

/// Per-class Dirichlet allocation of samples to clients.
///
/// For each class, proportions are drawn from `Dirichlet(alpha * 1_M)` and
/// the class's samples are split by largest-remainder rounding. Clients left
/// with nothing afterwards steal one sample from the currently largest
/// client, so every client is nonempty.
pub fn dirichlet_partition(
    labels: &[usize],
    class_count: usize,
    clients: usize,
    alpha: f64,
    rng: &mut Rng,
) -> Result<Partition> {
    if clients == 0 {
        return Err(Error::InvalidArgument("need at least one client".into()));
    }
    if alpha <= 0.0 {
        return Err(Error::InvalidArgument("dirichlet alpha must be positive".into()));
    }
    let n = labels.len();
    if clients > n {
        return Err(Error::InfeasiblePartition(format!("{clients} clients for {n} samples")));
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); class_count];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }

    let mut assignments: Vec<Vec<usize>> = vec![Vec::new(); clients];
    for class_samples in by_class.iter().filter(|c| !c.is_empty()) {
        let mut props = Vec::with_capacity(clients);
        let mut total = 0.0;
        for _ in 0..clients {
            let g = rng.gamma(alpha)?;
            props.push(g);
            total += g;
        }
        if total <= 0.0 {
            // All gamma draws underflowed (tiny alpha); give the class to one client.
            let lucky = rng.index(clients);
            props.iter_mut().for_each(|p| *p = 0.0);
            props[lucky] = 1.0;
            total = 1.0;
        }
        let n_k = class_samples.len();
        let mut counts = vec![0usize; clients];
        let mut fractions: Vec<(f64, usize)> = Vec::with_capacity(clients);
        let mut assigned = 0usize;
        for m in 0..clients {
            let exact = props[m] / total * n_k as f64;
            let floor = exact.floor() as usize;
            counts[m] = floor;
            assigned += floor;
            fractions.push((exact - floor as f64, m));
        }
        // Largest remainder first; ties broken toward the lower client index.
        fractions.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        for &(_, m) in fractions.iter().take(n_k - assigned) {
            counts[m] += 1;
        }
        let mut cursor = 0;
        for (m, &c) in counts.iter().enumerate() {
            assignments[m].extend_from_slice(&class_samples[cursor..cursor + c]);
            cursor += c;
        }
    }

    // Repair empty clients by stealing one sample from the largest client.
    for m in 0..clients {
        if assignments[m].is_empty() {
            let donor = (0..clients)
                .max_by(|&a, &b| {
                    assignments[a].len().cmp(&assignments[b].len()).then(b.cmp(&a))
                })
                .unwrap();
            if assignments[donor].len() <= 1 {
                return Err(Error::InfeasiblePartition("cannot repair empty client".into()));
            }
            let sample = assignments[donor].pop().unwrap();
            assignments[m].push(sample);
        }
    }

    for shard in &mut assignments {
        shard.sort_unstable();
    }
    let weights = assignments.iter().map(|s| s.len() as f64 / n as f64).collect();
    Ok(Partition { client_indices: assignments, weights })
}

/// One client's view of the data for a round of local training.
pub struct ClientShard<'a> {
    pub data: &'a LabeledDataset,
    pub indices: &'a [usize],
}

impl ClientShard<'_> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Minibatch local training: `epochs` passes over a per-epoch seeded
/// shuffle of the shard. Equivalent to [`fedprox_local_train`] with a zero
/// proximal weight.
pub fn local_train(
    w: &ParamVector,
    shard: &ClientShard,
    epochs: usize,
    opt: &OptimizerConfig,
    rng: &mut Rng,
) -> Result<ParamVector> {
    fedprox_local_train(w, shard, epochs, opt, 0.0, rng)
}

/// Local training with a proximal penalty `(mu/2) * ||w - w_anchor||^2`
/// anchored at the round's incoming global model.
pub fn fedprox_local_train(
    w: &ParamVector,
    shard: &ClientShard,
    epochs: usize,
    opt: &OptimizerConfig,
    mu_prox: f64,
    rng: &mut Rng,
) -> Result<ParamVector> {
    if epochs == 0 {
        return Err(Error::InvalidArgument("local training needs at least one epoch".into()));
    }
    if shard.is_empty() {
        return Err(Error::InvalidArgument("empty client shard".into()));
    }
    if mu_prox < 0.0 {
        return Err(Error::InvalidArgument("mu_prox must be non-negative".into()));
    }
    let anchor = w.values().to_vec();
    let mut current = w.clone();
    let mut adam = match opt.kind {
        OptimizerKind::Adam => Some(Adam::new(w.len(), opt.learning_rate)),
        OptimizerKind::Sgd => None,
    };
    let mut order: Vec<usize> = shard.indices.to_vec();
    for epoch in 0..epochs {
        rng.shuffle(&mut order);
        for (batch_no, batch) in order.chunks(opt.batch_size.max(1)).enumerate() {
            let (x, t) = shard.data.gather(batch);
            let (_, mut g) = mlp::loss_and_grad(&current, &x, &t)?;
            if mu_prox > 0.0 {
                for i in 0..g.len() {
                    g[i] += mu_prox * (current.values()[i] - anchor[i]);
                }
            }
            match adam.as_mut() {
                Some(a) => a.step(current.values_mut(), &g),
                None => crate::optim::sgd_step(current.values_mut(), &g, opt.learning_rate),
            }
            if current.values().iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    context: format!("local training epoch {epoch} batch {batch_no}"),
                });
            }
        }
    }
    Ok(current)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    /// Convex combination with the supplied weights, normalized by their sum.
    Weighted,
    /// Plain mean of the participating models.
    Uniform,
}

/// Combine locally trained parameter vectors. Consumes the list in the
/// given (ascending client) order so results are bit-reproducible.
pub fn aggregate(
    params: &[ParamVector],
    weights: &[f64],
    mode: AggregationMode,
) -> Result<ParamVector> {
    let first = params.first().ok_or_else(|| {
        Error::InvalidArgument("cannot aggregate an empty parameter list".into())
    })?;
    if params.iter().any(|p| p.spec() != first.spec()) {
        return Err(Error::InvalidArgument("aggregate across mismatched specs".into()));
    }
    let coeffs: Vec<f64> = match mode {
        AggregationMode::Uniform => vec![1.0 / params.len() as f64; params.len()],
        AggregationMode::Weighted => {
            if weights.len() != params.len() {
                return Err(Error::InvalidArgument("weights/params length mismatch".into()));
            }
            let total: f64 = weights.iter().sum();
            if !(total > 0.0) || weights.iter().any(|&w| w < 0.0) {
                return Err(Error::InvalidArgument("weights must be non-negative with positive sum".into()));
            }
            weights.iter().map(|w| w / total).collect()
        }
    };
    let mut out = vec![0.0; first.len()];
    for (p, &c) in params.iter().zip(&coeffs) {
        for (o, &v) in out.iter_mut().zip(p.values()) {
            *o += c * v;
        }
    }
    ParamVector::new(first.spec().clone(), out)
}

/// Mean loss and argmax accuracy on a dataset. Ties in the argmax go to the
/// lowest class index.
pub fn evaluate(w: &ParamVector, data: &LabeledDataset) -> Result<(f64, f64)> {
    let logits = mlp::forward_logits(w, &data.inputs);
    let targets = data.one_hot_targets();
    let n = data.len() as f64;
    let loss = targets.mul(&logits.log_softmax()).sum() * (-1.0 / n);
    let mut correct = 0usize;
    for i in 0..data.len() {
        let row = logits.row(i);
        let mut best = 0usize;
        for (k, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = k;
            }
        }
        if best == data.labels[i] {
            correct += 1;
        }
    }
    Ok((loss, correct as f64 / n))
}

/// Mean loss of `w` on each client's shard.
pub fn per_client_losses(
    w: &ParamVector,
    partition: &Partition,
    data: &LabeledDataset,
) -> Result<Vec<f64>> {
    partition
        .client_indices
        .iter()
        .map(|indices| {
            let (x, t) = data.gather(indices);
            mlp::mean_loss(w, &x, &t)
        })
        .collect()
}
