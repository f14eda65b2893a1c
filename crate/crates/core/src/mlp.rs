//! MLP model family: parameter flattening, soft-target cross-entropy,
//! the differentiable full-batch inner trainer, and parameter-space
//! distance measures.


use crate::error::{Error, Result};
use crate::expr::{grad, Bindings, Evaluator, Expr};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Layer widths of a relu MLP with a linear output layer:
/// `[input dim, hidden..., class count]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    layer_sizes: Vec<usize>,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(
                "an MLP needs at least input and output sizes".into(),
            ));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument("layer sizes must be positive".into()));
        }
        Ok(MlpSpec { layer_sizes })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn class_count(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// `(fan_in, fan_out)` per layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        self.layer_sizes.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// Flat parameter vector paired with its architecture.
///
/// Layout per layer: the `fan_in x fan_out` weight matrix in row-major
/// order, then the `fan_out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    spec: MlpSpec,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(spec: MlpSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.param_count() {
            return Err(Error::InvalidArgument(format!(
                "spec wants {} parameters, got {}",
                spec.param_count(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite parameter values".into()));
        }
        Ok(ParamVector { spec, values })
    }

    pub fn zeros(spec: MlpSpec) -> Self {
        let n = spec.param_count();
        ParamVector { spec, values: vec![0.0; n] }
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Unflatten into `(weights [in, out], biases [1, out])` per layer.
    pub fn layer_tensors(&self) -> Vec<(Tensor, Tensor)> {
        let mut out = Vec::new();
        let mut offset = 0;
        for (fan_in, fan_out) in self.spec.layer_dims() {
            let w = Tensor::new(
                vec![fan_in, fan_out],
                self.values[offset..offset + fan_in * fan_out].to_vec(),
            )
            .unwrap();
            offset += fan_in * fan_out;
            let b = Tensor::new(vec![1, fan_out], self.values[offset..offset + fan_out].to_vec())
                .unwrap();
            offset += fan_out;
            out.push((w, b));
        }
        out
    }

    /// Flatten layer tensors back into a vector; exact inverse of
    /// [`layer_tensors`](Self::layer_tensors).
    pub fn from_layer_tensors(spec: MlpSpec, layers: &[(Tensor, Tensor)]) -> Result<Self> {
        let mut values = Vec::with_capacity(spec.param_count());
        if layers.len() != spec.layer_dims().len() {
            return Err(Error::InvalidArgument("layer count mismatch".into()));
        }
        for ((w, b), (fan_in, fan_out)) in layers.iter().zip(spec.layer_dims()) {
            if w.shape() != [fan_in, fan_out] || b.shape() != [1, fan_out] {
                return Err(Error::InvalidArgument("layer tensor shape mismatch".into()));
            }
            values.extend_from_slice(w.data());
            values.extend_from_slice(b.data());
        }
        ParamVector::new(spec, values)
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// He-style initialization: weights `Normal(0, 2/fan_in)`, biases zero.
pub fn init_params(spec: &MlpSpec, rng: &mut Rng) -> ParamVector {
    let mut values = Vec::with_capacity(spec.param_count());
    for (fan_in, fan_out) in spec.layer_dims() {
        let std = (2.0 / fan_in as f64).sqrt();
        for _ in 0..fan_in * fan_out {
            values.push(rng.normal() * std);
        }
        values.extend(std::iter::repeat_n(0.0, fan_out));
    }
    ParamVector { spec: spec.clone(), values }
}

fn input_label(prefix: &str, layer: usize, which: &str) -> String {
    format!("{prefix}/{which}{layer}")
}

/// Named input nodes for every layer tensor, plus the matching bindings.
pub fn param_inputs(spec: &MlpSpec, prefix: &str) -> Vec<(Expr, Expr)> {
    spec.layer_dims()
        .iter()
        .enumerate()
        .map(|(l, &(fan_in, fan_out))| {
            (
                Expr::input(input_label(prefix, l, "w"), vec![fan_in, fan_out]),
                Expr::input(input_label(prefix, l, "b"), vec![1, fan_out]),
            )
        })
        .collect()
}

pub fn param_bindings(params: &ParamVector, prefix: &str, bindings: &mut Bindings) {
    for (l, (w, b)) in params.layer_tensors().into_iter().enumerate() {
        bindings.insert(input_label(prefix, l, "w"), w);
        bindings.insert(input_label(prefix, l, "b"), b);
    }
}

/// Layer tensors as constant expressions.
pub fn param_constants(params: &ParamVector) -> Vec<(Expr, Expr)> {
    params
        .layer_tensors()
        .into_iter()
        .map(|(w, b)| (Expr::constant(w), Expr::constant(b)))
        .collect()
}

/// Logits of the MLP as an expression: relu between layers, linear output.
pub fn logits_expr(layers: &[(Expr, Expr)], x: &Expr) -> Result<Expr> {
    let n = x.shape()[0];
    let mut h = x.clone();
    let last = layers.len() - 1;
    for (l, (w, b)) in layers.iter().enumerate() {
        let z = h.matmul(w)?.add(&b.broadcast_rows(n)?)?;
        h = if l < last { z.relu() } else { z };
    }
    Ok(h)
}

/// Mean soft-target cross-entropy:
/// `(1/n) * sum_i -sum_k target_ik * log_softmax(logits_i)_k`.
pub fn loss_from_logits(logits: &Expr, target: &Expr) -> Result<Expr> {
    let n = logits.shape()[0] as f64;
    Ok(target.mul(&logits.log_softmax()?)?.sum().scale(-1.0 / n))
}

pub fn loss_expr(layers: &[(Expr, Expr)], x: &Expr, target: &Expr) -> Result<Expr> {
    loss_from_logits(&logits_expr(layers, x)?, target)
}

fn check_target_rows(target: &Tensor) -> Result<()> {
    for i in 0..target.rows() {
        let sum: f64 = target.row(i).iter().sum();
        if (sum - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "target row {i} sums to {sum}, not 1"
            )));
        }
    }
    Ok(())
}

/// Loss graph with the parameters exposed as differentiable inputs.
pub struct LossGraph {
    pub loss: Expr,
    pub params: Vec<(Expr, Expr)>,
    pub bindings: Bindings,
}

/// Build the soft-target loss of `params` on `(x, target)`.
///
/// Target rows must be probability distributions; hard labels are one-hot
/// rows. The parameters stay inputs so the graph is differentiable in them.
pub fn loss(params: &ParamVector, x: &Tensor, target: &Tensor) -> Result<LossGraph> {
    if x.rank() != 2 || target.rank() != 2 {
        return Err(Error::InvalidArgument("inputs and targets must be matrices".into()));
    }
    if x.cols() != params.spec().input_dim()
        || target.cols() != params.spec().class_count()
        || x.rows() != target.rows()
    {
        return Err(Error::InvalidArgument(format!(
            "data shapes {:?}/{:?} do not fit spec {:?}",
            x.shape(),
            target.shape(),
            params.spec().layer_sizes()
        )));
    }
    check_target_rows(target)?;
    let inputs = param_inputs(params.spec(), "param");
    let loss = loss_expr(&inputs, &Expr::constant(x.clone()), &Expr::constant(target.clone()))?;
    let mut bindings = Bindings::new();
    param_bindings(params, "param", &mut bindings);
    Ok(LossGraph { loss, params: inputs, bindings })
}

/// Loss value and flat gradient in one evaluation pass.
pub fn loss_and_grad(params: &ParamVector, x: &Tensor, target: &Tensor) -> Result<(f64, Vec<f64>)> {
    let g = loss(params, x, target)?;
    let wrt: Vec<Expr> = g.params.iter().flat_map(|(w, b)| [w.clone(), b.clone()]).collect();
    let grads = grad(&g.loss, &wrt)?;
    let mut ev = Evaluator::new(&g.bindings);
    let loss_value = ev.eval(&g.loss)?.scalar_value();
    let mut flat = Vec::with_capacity(params.len());
    for ge in &grads {
        flat.extend_from_slice(ev.eval(ge)?.data());
    }
    Ok((loss_value, flat))
}

/// Direct (graph-free) logits; uses the same kernels in the same order as
/// the expression path, so values match bit for bit.
pub fn forward_logits(params: &ParamVector, x: &Tensor) -> Tensor {
    let n = x.rows();
    let mut h = x.clone();
    let layers = params.layer_tensors();
    let last = layers.len() - 1;
    for (l, (w, b)) in layers.iter().enumerate() {
        let z = h.matmul(w).add(&b.broadcast_rows(n));
        h = if l < last { z.relu() } else { z };
    }
    h
}

/// Mean soft-target loss without building a graph.
pub fn mean_loss(params: &ParamVector, x: &Tensor, target: &Tensor) -> Result<f64> {
    check_target_rows(target)?;
    let logits = forward_logits(params, x);
    let n = logits.rows() as f64;
    Ok(target.mul(&logits.log_softmax()).sum() * (-1.0 / n))
}

/// Unrolled full-batch gradient descent:
/// `w_{k+1} = w_k - lr * grad(loss(w_k; x, target))`.
///
/// The returned per-step layer expressions keep `x` and `target` free, so a
/// caller holding them as inputs can differentiate the final parameters with
/// respect to the data — the meta-gradient path.
pub fn sgd_unroll_expr(
    start: &[(Expr, Expr)],
    x: &Expr,
    target: &Expr,
    lr: f64,
    steps: usize,
) -> Result<Vec<Vec<(Expr, Expr)>>> {
    let mut all_steps = vec![start.to_vec()];
    let mut current = start.to_vec();
    for _ in 0..steps {
        let loss = loss_expr(&current, x, target)?;
        let wrt: Vec<Expr> = current.iter().flat_map(|(w, b)| [w.clone(), b.clone()]).collect();
        let grads = grad(&loss, &wrt)?;
        let mut next = Vec::with_capacity(current.len());
        for (l, (w, b)) in current.iter().enumerate() {
            let gw = &grads[2 * l];
            let gb = &grads[2 * l + 1];
            next.push((w.sub(&gw.scale(lr))?, b.sub(&gb.scale(lr))?));
        }
        all_steps.push(next.clone());
        current = next;
    }
    Ok(all_steps)
}

/// Value-level unroll. Builds the same graph as the differentiable mode and
/// evaluates it, so both modes agree bit for bit; a non-finite step yields a
/// divergence error naming the step index.
pub fn sgd_unroll(
    params: &ParamVector,
    x: &Tensor,
    target: &Tensor,
    lr: f64,
    steps: usize,
) -> Result<ParamVector> {
    if lr <= 0.0 {
        return Err(Error::InvalidArgument("learning rate must be positive".into()));
    }
    if steps == 0 {
        return Ok(params.clone());
    }
    check_target_rows(target)?;
    let x_in = Expr::input("unroll/x", x.shape().to_vec());
    let t_in = Expr::input("unroll/target", target.shape().to_vec());
    let start = param_constants(params);
    let unrolled = sgd_unroll_expr(&start, &x_in, &t_in, lr, steps)?;
    let mut bindings = Bindings::new();
    bindings.insert("unroll/x".into(), x.clone());
    bindings.insert("unroll/target".into(), target.clone());
    let mut ev = Evaluator::new(&bindings);
    let mut final_layers = Vec::new();
    for (step, layers) in unrolled.iter().enumerate().skip(1) {
        let mut values = Vec::with_capacity(layers.len());
        for (w, b) in layers {
            let wv = ev.eval(w).map_err(|_| Error::Divergence {
                context: format!("unroll step {step}"),
            })?;
            let bv = ev.eval(b).map_err(|_| Error::Divergence {
                context: format!("unroll step {step}"),
            })?;
            values.push((wv, bv));
        }
        if step == steps {
            final_layers = values;
        }
    }
    ParamVector::from_layer_tensors(params.spec().clone(), &final_layers)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    L2,
    Cosine,
    NormalizedL2,
}

/// Distance measure between parameter vectors. `normalized_l2` divides the
/// squared distance by the squared length of a stored reference segment.
#[derive(Clone, Debug)]
pub struct DistanceMetric {
    kind: DistanceKind,
    reference: Option<(ParamVector, ParamVector)>,
}

impl DistanceMetric {
    pub fn l2() -> Self {
        DistanceMetric { kind: DistanceKind::L2, reference: None }
    }

    pub fn cosine() -> Self {
        DistanceMetric { kind: DistanceKind::Cosine, reference: None }
    }

    pub fn normalized_l2(start: &ParamVector, target: &ParamVector) -> Result<Self> {
        if l2_sq(start, target) == 0.0 {
            return Err(Error::UndefinedMetric(
                "normalized_l2 reference pair has zero distance".into(),
            ));
        }
        DistanceMetric::for_kind(DistanceKind::NormalizedL2, start, target)
    }

    /// Metric of `kind` with the reference pair attached (used by the
    /// matching loss, which re-anchors the normalizer per segment).
    pub fn for_kind(kind: DistanceKind, start: &ParamVector, target: &ParamVector) -> Result<Self> {
        Ok(DistanceMetric {
            kind,
            reference: Some((start.clone(), target.clone())),
        })
    }

    pub fn kind(&self) -> DistanceKind {
        self.kind
    }

    fn normalizer(&self) -> Result<f64> {
        let (s, t) = self.reference.as_ref().ok_or_else(|| {
            Error::UndefinedMetric("normalized_l2 requires a reference pair".into())
        })?;
        let d = l2_sq(s, t);
        if d == 0.0 {
            return Err(Error::UndefinedMetric(
                "normalized_l2 reference pair has zero distance".into(),
            ));
        }
        Ok(d)
    }
}

fn l2_sq(a: &ParamVector, b: &ParamVector) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.values().iter().zip(b.values()) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

/// Distance between two parameter vectors of the same spec.
pub fn distance(a: &ParamVector, b: &ParamVector, metric: &DistanceMetric) -> Result<f64> {
    if a.spec() != b.spec() {
        return Err(Error::InvalidArgument("distance across different specs".into()));
    }
    match metric.kind {
        DistanceKind::L2 => Ok(l2_sq(a, b)),
        DistanceKind::NormalizedL2 => Ok(l2_sq(a, b) / metric.normalizer()?),
        DistanceKind::Cosine => {
            let (na, nb) = (a.l2_norm(), b.l2_norm());
            if na == 0.0 || nb == 0.0 {
                return Err(Error::UndefinedMetric("cosine with a zero vector".into()));
            }
            let mut dot = 0.0;
            for (x, y) in a.values().iter().zip(b.values()) {
                dot += x * y;
            }
            Ok(1.0 - dot / (na * nb))
        }
    }
}

/// Distance as an expression: `a` is a live set of layer expressions, `b` a
/// fixed parameter vector. Layer terms accumulate in ascending layer order.
pub fn distance_expr(
    a_layers: &[(Expr, Expr)],
    b: &ParamVector,
    metric: &DistanceMetric,
) -> Result<Expr> {
    let b_layers = param_constants(b);
    let pairwise = |f: &dyn Fn(&Expr, &Expr) -> Result<Expr>| -> Result<Expr> {
        let mut total: Option<Expr> = None;
        for ((aw, ab), (bw, bb)) in a_layers.iter().zip(&b_layers) {
            for (ae, be) in [(aw, bw), (ab, bb)] {
                let term = f(ae, be)?;
                total = Some(match total {
                    Some(t) => t.add(&term)?,
                    None => term,
                });
            }
        }
        Ok(total.expect("at least one layer"))
    };
    let sq_dist = |ae: &Expr, be: &Expr| -> Result<Expr> {
        let d = ae.sub(be)?;
        Ok(d.mul(&d)?.sum())
    };
    match metric.kind {
        DistanceKind::L2 => pairwise(&sq_dist),
        DistanceKind::NormalizedL2 => {
            let norm = metric.normalizer()?;
            Ok(pairwise(&sq_dist)?.scale(1.0 / norm))
        }
        DistanceKind::Cosine => {
            let nb = b.l2_norm();
            if nb == 0.0 {
                return Err(Error::UndefinedMetric("cosine with a zero vector".into()));
            }
            let dot = pairwise(&|ae, be| Ok(ae.mul(be)?.sum()))?;
            let na = pairwise(&|ae, _| Ok(ae.mul(ae)?.sum()))?.sqrt();
            let cos = dot.mul(&na.scale(nb).recip())?;
            Expr::scalar(1.0).sub(&cos)
        }
    }
}
