//! Differentiable expression graphs.
//!
//! Reverse-mode differentiation here is symbolic: [`grad`] returns new
//! expressions built from the same primitive set, so an SGD update is an
//! ordinary subgraph and gradients of gradients need no extra machinery.
//! Expressions are immutable, cheap to clone, and `Send + Sync`.
//!
//! All traversals (evaluation, differentiation, drop) are iterative; graphs
//! from long unrolled optimizations must not hit recursion limits.

use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Clone)]
pub struct Expr(Arc<Node>);

pub struct Node {
    id: u64,
    shape: Vec<usize>,
    op: Op,
}

enum Op {
    Input(String),
    Constant(Tensor),
    MatMul(Expr, Expr),
    Add(Expr, Expr),
    Sub(Expr, Expr),
    Mul(Expr, Expr),
    Scale(Expr, f64),
    Relu(Expr),
    /// 1 where the child is strictly positive, else 0; derivative is zero.
    ReluMask(Expr),
    LogSoftmax(Expr),
    Exp(Expr),
    Sqrt(Expr),
    Recip(Expr),
    /// Full reduction to a scalar.
    Sum(Expr),
    /// `[n, h] -> [1, h]`.
    SumRows(Expr),
    /// `[n, k] -> [n, 1]`.
    SumCols(Expr),
    /// `[1, h] -> [n, h]`.
    BroadcastRows(Expr, usize),
    /// `[n, 1] -> [n, k]`.
    BroadcastCols(Expr, usize),
    /// Scalar filled out to an arbitrary shape.
    ScalarFill(Expr, Vec<usize>),
    Transpose(Expr),
}

impl Op {
    fn kind(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Constant(_) => "constant",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "subtract",
            Op::Mul(..) => "elementwise-mul",
            Op::Scale(..) => "scale",
            Op::Relu(_) => "relu",
            Op::ReluMask(_) => "relu-mask",
            Op::LogSoftmax(_) => "log-softmax",
            Op::Exp(_) => "exp",
            Op::Sqrt(_) => "sqrt",
            Op::Recip(_) => "reciprocal",
            Op::Sum(_) => "sum",
            Op::SumRows(_) => "sum-rows",
            Op::SumCols(_) => "sum-cols",
            Op::BroadcastRows(..) => "broadcast-rows",
            Op::BroadcastCols(..) => "broadcast-cols",
            Op::ScalarFill(..) => "scalar-fill",
            Op::Transpose(_) => "transpose",
        }
    }

    fn children(&self) -> [Option<&Expr>; 2] {
        match self {
            Op::Input(_) | Op::Constant(_) => [None, None],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                [Some(a), Some(b)]
            }
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::ReluMask(a)
            | Op::LogSoftmax(a)
            | Op::Exp(a)
            | Op::Sqrt(a)
            | Op::Recip(a)
            | Op::Sum(a)
            | Op::SumRows(a)
            | Op::SumCols(a)
            | Op::BroadcastRows(a, _)
            | Op::BroadcastCols(a, _)
            | Op::ScalarFill(a, _)
            | Op::Transpose(a) => [Some(a), None],
        }
    }

    fn take_children(&mut self, out: &mut Vec<Expr>) {
        let taken = std::mem::replace(self, Op::Input(String::new()));
        match taken {
            Op::Input(_) | Op::Constant(_) => {}
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                out.push(a);
                out.push(b);
            }
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::ReluMask(a)
            | Op::LogSoftmax(a)
            | Op::Exp(a)
            | Op::Sqrt(a)
            | Op::Recip(a)
            | Op::Sum(a)
            | Op::SumRows(a)
            | Op::SumCols(a)
            | Op::BroadcastRows(a, _)
            | Op::BroadcastCols(a, _)
            | Op::ScalarFill(a, _)
            | Op::Transpose(a) => out.push(a),
        }
    }
}

// Deep graphs would otherwise recurse through Arc drops; unlink children
// iteratively instead.
impl Drop for Node {
    fn drop(&mut self) {
        let mut stack = Vec::new();
        self.op.take_children(&mut stack);
        while let Some(expr) = stack.pop() {
            if let Some(mut node) = Arc::into_inner(expr.0) {
                node.op.take_children(&mut stack);
            }
        }
    }
}

fn shape_err(node: &str, detail: String) -> Error {
    Error::ShapeMismatch { node: node.into(), detail }
}

impl Expr {
    fn build(shape: Vec<usize>, op: Op) -> Expr {
        Expr(Arc::new(Node {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            op,
        }))
    }

    pub fn input(name: impl Into<String>, shape: Vec<usize>) -> Expr {
        Expr::build(shape, Op::Input(name.into()))
    }

    pub fn constant(value: Tensor) -> Expr {
        Expr::build(value.shape().to_vec(), Op::Constant(value))
    }

    pub fn scalar(value: f64) -> Expr {
        Expr::constant(Tensor::scalar(value))
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn is_scalar(&self) -> bool {
        self.0.shape.is_empty()
    }

    pub fn input_name(&self) -> Option<&str> {
        match &self.0.op {
            Op::Input(name) => Some(name),
            _ => None,
        }
    }

    fn kind(&self) -> &'static str {
        self.0.op.kind()
    }

    pub fn matmul(&self, other: &Expr) -> Result<Expr> {
        let (a, b) = (self.shape(), other.shape());
        if a.len() != 2 || b.len() != 2 || a[1] != b[0] {
            return Err(shape_err("matmul", format!("{a:?} x {b:?}")));
        }
        let shape = vec![a[0], b[1]];
        Ok(Expr::build(shape, Op::MatMul(self.clone(), other.clone())))
    }

    fn zip(&self, other: &Expr, node: &'static str, f: impl FnOnce(Expr, Expr) -> Op) -> Result<Expr> {
        if self.shape() != other.shape() {
            return Err(shape_err(node, format!("{:?} vs {:?}", self.shape(), other.shape())));
        }
        Ok(Expr::build(self.shape().to_vec(), f(self.clone(), other.clone())))
    }

    pub fn add(&self, other: &Expr) -> Result<Expr> {
        self.zip(other, "add", Op::Add)
    }

    pub fn sub(&self, other: &Expr) -> Result<Expr> {
        self.zip(other, "subtract", Op::Sub)
    }

    pub fn mul(&self, other: &Expr) -> Result<Expr> {
        self.zip(other, "elementwise-mul", Op::Mul)
    }

    pub fn scale(&self, c: f64) -> Expr {
        Expr::build(self.shape().to_vec(), Op::Scale(self.clone(), c))
    }

    pub fn relu(&self) -> Expr {
        Expr::build(self.shape().to_vec(), Op::Relu(self.clone()))
    }

    pub fn relu_mask(&self) -> Expr {
        Expr::build(self.shape().to_vec(), Op::ReluMask(self.clone()))
    }

    pub fn log_softmax(&self) -> Result<Expr> {
        if self.shape().len() != 2 {
            return Err(shape_err("log-softmax", format!("{:?} is not a matrix", self.shape())));
        }
        Ok(Expr::build(self.shape().to_vec(), Op::LogSoftmax(self.clone())))
    }

    pub fn exp(&self) -> Expr {
        Expr::build(self.shape().to_vec(), Op::Exp(self.clone()))
    }

    pub fn sqrt(&self) -> Expr {
        Expr::build(self.shape().to_vec(), Op::Sqrt(self.clone()))
    }

    pub fn recip(&self) -> Expr {
        Expr::build(self.shape().to_vec(), Op::Recip(self.clone()))
    }

    pub fn sum(&self) -> Expr {
        Expr::build(vec![], Op::Sum(self.clone()))
    }

    pub fn sum_rows(&self) -> Result<Expr> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(shape_err("sum-rows", format!("{s:?} is not a matrix")));
        }
        Ok(Expr::build(vec![1, s[1]], Op::SumRows(self.clone())))
    }

    pub fn sum_cols(&self) -> Result<Expr> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(shape_err("sum-cols", format!("{s:?} is not a matrix")));
        }
        Ok(Expr::build(vec![s[0], 1], Op::SumCols(self.clone())))
    }

    pub fn broadcast_rows(&self, n: usize) -> Result<Expr> {
        let s = self.shape();
        if s.len() != 2 || s[0] != 1 {
            return Err(shape_err("broadcast-rows", format!("{s:?} is not a single row")));
        }
        Ok(Expr::build(vec![n, s[1]], Op::BroadcastRows(self.clone(), n)))
    }

    pub fn broadcast_cols(&self, k: usize) -> Result<Expr> {
        let s = self.shape();
        if s.len() != 2 || s[1] != 1 {
            return Err(shape_err("broadcast-cols", format!("{s:?} is not a single column")));
        }
        Ok(Expr::build(vec![s[0], k], Op::BroadcastCols(self.clone(), k)))
    }

    pub fn scalar_fill(&self, shape: Vec<usize>) -> Result<Expr> {
        if !self.is_scalar() {
            return Err(shape_err("scalar-fill", format!("{:?} is not a scalar", self.shape())));
        }
        Ok(Expr::build(shape.clone(), Op::ScalarFill(self.clone(), shape)))
    }

    pub fn transpose(&self) -> Result<Expr> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(shape_err("transpose", format!("{s:?} is not a matrix")));
        }
        Ok(Expr::build(vec![s[1], s[0]], Op::Transpose(self.clone())))
    }
}

impl std::fmt::Debug for Expr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Expr#{}({} {:?})", self.id(), self.kind(), self.shape())
    }
}

/// Input-name to value map used by evaluation.
pub type Bindings = HashMap<String, Tensor>;

/// Reverse postorder over the DAG reachable from `roots`, each node once.
fn postorder(roots: &[Expr]) -> Vec<Expr> {
    let mut order = Vec::new();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut stack: Vec<(Expr, bool)> = Vec::new();
    for root in roots {
        stack.push((root.clone(), false));
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !seen.insert(node.id()) {
                continue;
            }
            stack.push((node.clone(), true));
            let [a, b] = node.0.op.children();
            // Push in reverse so the first child is visited first.
            if let Some(b) = b {
                if !seen.contains(&b.id()) {
                    stack.push((b.clone(), false));
                }
            }
            if let Some(a) = a {
                if !seen.contains(&a.id()) {
                    stack.push((a.clone(), false));
                }
            }
        }
    }
    order
}

/// Memoizing evaluator. Values are computed once per node and may be
/// requested for several roots of the same graph.
pub struct Evaluator<'a> {
    bindings: &'a Bindings,
    memo: HashMap<u64, Tensor>,
}

impl<'a> Evaluator<'a> {
    pub fn new(bindings: &'a Bindings) -> Self {
        Evaluator { bindings, memo: HashMap::new() }
    }

    pub fn eval(&mut self, expr: &Expr) -> Result<Tensor> {
        if let Some(v) = self.memo.get(&expr.id()) {
            return Ok(v.clone());
        }
        for node in postorder(std::slice::from_ref(expr)) {
            if self.memo.contains_key(&node.id()) {
                continue;
            }
            let value = self.compute(&node)?;
            if !value.is_finite() {
                return Err(Error::NumericOverflow {
                    node: format!("{} #{}", node.kind(), node.id()),
                });
            }
            self.memo.insert(node.id(), value);
        }
        Ok(self.memo[&expr.id()].clone())
    }

    fn compute(&self, node: &Expr) -> Result<Tensor> {
        let val = |e: &Expr| self.memo[&e.id()].clone();
        Ok(match &node.0.op {
            Op::Input(name) => {
                let bound = self.bindings.get(name).ok_or_else(|| {
                    Error::InvalidArgument(format!("no binding for input '{name}'"))
                })?;
                if bound.shape() != node.shape() {
                    return Err(shape_err(
                        "input",
                        format!("'{name}' declared {:?}, bound {:?}", node.shape(), bound.shape()),
                    ));
                }
                bound.clone()
            }
            Op::Constant(v) => v.clone(),
            Op::MatMul(a, b) => val(a).matmul(&val(b)),
            Op::Add(a, b) => val(a).add(&val(b)),
            Op::Sub(a, b) => val(a).sub(&val(b)),
            Op::Mul(a, b) => val(a).mul(&val(b)),
            Op::Scale(a, c) => val(a).scale(*c),
            Op::Relu(a) => val(a).relu(),
            Op::ReluMask(a) => val(a).relu_mask(),
            Op::LogSoftmax(a) => val(a).log_softmax(),
            Op::Exp(a) => val(a).exp(),
            Op::Sqrt(a) => val(a).sqrt(),
            Op::Recip(a) => val(a).recip(),
            Op::Sum(a) => Tensor::scalar(val(a).sum()),
            Op::SumRows(a) => val(a).sum_rows(),
            Op::SumCols(a) => val(a).sum_cols(),
            Op::BroadcastRows(a, n) => val(a).broadcast_rows(*n),
            Op::BroadcastCols(a, k) => val(a).broadcast_cols(*k),
            Op::ScalarFill(a, shape) => Tensor::filled(shape.clone(), val(a).scalar_value()),
            Op::Transpose(a) => val(a).transpose(),
        })
    }
}

/// Evaluate one expression under the given input bindings.
///
/// Pure: identical bindings produce bit-identical tensors.
pub fn evaluate(expr: &Expr, bindings: &Bindings) -> Result<Tensor> {
    Evaluator::new(bindings).eval(expr)
}

pub fn evaluate_many(exprs: &[Expr], bindings: &Bindings) -> Result<Vec<Tensor>> {
    let mut ev = Evaluator::new(bindings);
    exprs.iter().map(|e| ev.eval(e)).collect()
}

/// Gradients of a scalar expression with respect to `wrt` nodes.
///
/// The results are expressions over the same graph, so they can be
/// differentiated again. A `wrt` node that does not appear in `root`'s
/// graph yields a zero constant of that node's shape; this is documented
/// behavior, not an error.
pub fn grad(root: &Expr, wrt: &[Expr]) -> Result<Vec<Expr>> {
    if !root.is_scalar() {
        return Err(shape_err("grad", format!("root has shape {:?}, want scalar", root.shape())));
    }
    let order = postorder(std::slice::from_ref(root));
    let mut adjoint: HashMap<u64, Expr> = HashMap::new();
    adjoint.insert(root.id(), Expr::scalar(1.0));

    for node in order.iter().rev() {
        let Some(u) = adjoint.get(&node.id()).cloned() else {
            continue;
        };
        let mut push = |child: &Expr, contrib: Expr| -> Result<()> {
            debug_assert_eq!(child.shape(), contrib.shape());
            let entry = match adjoint.remove(&child.id()) {
                Some(prev) => prev.add(&contrib)?,
                None => contrib,
            };
            adjoint.insert(child.id(), entry);
            Ok(())
        };
        match &node.0.op {
            Op::Input(_) | Op::Constant(_) => {}
            Op::MatMul(a, b) => {
                push(a, u.matmul(&b.transpose()?)?)?;
                push(b, a.transpose()?.matmul(&u)?)?;
            }
            Op::Add(a, b) => {
                push(a, u.clone())?;
                push(b, u.clone())?;
            }
            Op::Sub(a, b) => {
                push(a, u.clone())?;
                push(b, u.scale(-1.0))?;
            }
            Op::Mul(a, b) => {
                push(a, u.mul(b)?)?;
                push(b, u.mul(a)?)?;
            }
            Op::Scale(a, c) => push(a, u.scale(*c))?,
            Op::Relu(a) => push(a, u.mul(&a.relu_mask())?)?,
            // relu' is a step function; its derivative is taken as zero
            // everywhere, so the mask contributes nothing upstream.
            Op::ReluMask(_) => {}
            Op::LogSoftmax(a) => {
                let k = node.shape()[1];
                let softmax = node.exp();
                let row_totals = u.sum_cols()?.broadcast_cols(k)?;
                push(a, u.sub(&softmax.mul(&row_totals)?)?)?;
            }
            Op::Exp(a) => push(a, u.mul(node)?)?,
            Op::Sqrt(a) => push(a, u.mul(&node.recip().scale(0.5))?)?,
            Op::Recip(a) => push(a, u.mul(&node.mul(node)?)?.scale(-1.0))?,
            Op::Sum(a) => push(a, u.scalar_fill(a.shape().to_vec())?)?,
            Op::SumRows(a) => push(a, u.broadcast_rows(a.shape()[0])?)?,
            Op::SumCols(a) => push(a, u.broadcast_cols(a.shape()[1])?)?,
            Op::BroadcastRows(a, _) => push(a, u.sum_rows()?)?,
            Op::BroadcastCols(a, _) => push(a, u.sum_cols()?)?,
            Op::ScalarFill(a, _) => push(a, u.sum())?,
            Op::Transpose(a) => push(a, u.transpose()?)?,
        }
    }

    Ok(wrt
        .iter()
        .map(|w| {
            adjoint
                .get(&w.id())
                .cloned()
                .unwrap_or_else(|| Expr::constant(Tensor::zeros(w.shape().to_vec())))
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bind(pairs: &[(&str, Tensor)]) -> Bindings {
        pairs.iter().map(|(n, t)| (n.to_string(), t.clone())).collect()
    }

    #[test]
    fn doubling() {
        let x = Expr::input("x", vec![2]);
        let e = x.add(&x).unwrap();
        let out = evaluate(&e, &bind(&[("x", Tensor::vector(vec![1.0, 2.0]))])).unwrap();
        assert_eq!(out.data(), &[2.0, 4.0]);
    }

    #[test]
    fn relu_definition() {
        let x = Expr::input("x", vec![3]);
        let out = evaluate(&x.relu(), &bind(&[("x", Tensor::vector(vec![-1.0, 0.0, 3.0]))])).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 3.0]);
    }

    #[test]
    fn matmul_ones() {
        let a = Expr::constant(Tensor::filled(vec![2, 3], 1.0));
        let b = Expr::constant(Tensor::filled(vec![3, 2], 1.0));
        let out = evaluate(&a.matmul(&b).unwrap(), &Bindings::new()).unwrap();
        assert_eq!(out.shape(), &[2, 2]);
        assert!(out.data().iter().all(|&v| v == 3.0));
    }

    #[test]
    fn matmul_shape_mismatch_names_node() {
        let a = Expr::input("a", vec![2, 3]);
        let b = Expr::input("b", vec![4, 2]);
        let err = a.matmul(&b).unwrap_err();
        assert!(err.to_string().contains("matmul"), "{err}");
    }

    #[test]
    fn missing_binding_is_an_error() {
        let x = Expr::input("x", vec![1]);
        assert!(evaluate(&x, &Bindings::new()).is_err());
    }

    #[test]
    fn wrong_shape_binding_names_input() {
        let x = Expr::input("x", vec![2]);
        let err = evaluate(&x, &bind(&[("x", Tensor::vector(vec![1.0, 2.0, 3.0]))])).unwrap_err();
        assert!(err.to_string().contains("'x'"), "{err}");
    }

    #[test]
    fn overflow_names_node() {
        let x = Expr::input("x", vec![1]);
        let e = x.recip();
        let err = evaluate(&e, &bind(&[("x", Tensor::vector(vec![0.0]))])).unwrap_err();
        match err {
            Error::NumericOverflow { node } => assert!(node.contains("reciprocal")),
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn evaluate_is_pure() {
        let x = Expr::input("x", vec![4]);
        let e = x.mul(&x).unwrap().relu().sum().scale(0.3);
        let b = bind(&[("x", Tensor::vector(vec![0.1, -0.7, 0.33, 9.0]))]);
        let v1 = evaluate(&e, &b).unwrap();
        let v2 = evaluate(&e, &b).unwrap();
        assert_eq!(v1.data()[0].to_bits(), v2.data()[0].to_bits());
    }

    #[test]
    fn grad_of_square_sum() {
        // d/dx sum(x*x) = 2x
        let x = Expr::input("x", vec![1]);
        let loss = x.mul(&x).unwrap().sum();
        let g = grad(&loss, std::slice::from_ref(&x)).unwrap();
        let out = evaluate(&g[0], &bind(&[("x", Tensor::vector(vec![3.0]))])).unwrap();
        assert_eq!(out.data(), &[6.0]);
    }

    #[test]
    fn nested_grad_of_cube() {
        // f = sum(x^3); f'' at x=2 is 6*2 = 12
        let x = Expr::input("x", vec![1]);
        let f = x.mul(&x).unwrap().mul(&x).unwrap().sum();
        let g1 = grad(&f, std::slice::from_ref(&x)).unwrap().remove(0);
        let g2 = grad(&g1.sum(), std::slice::from_ref(&x)).unwrap().remove(0);
        let out = evaluate(&g2, &bind(&[("x", Tensor::vector(vec![2.0]))])).unwrap();
        assert_eq!(out.data(), &[12.0]);
    }

    #[test]
    fn grad_of_absent_input_is_zero_constant() {
        let x = Expr::input("x", vec![2]);
        let y = Expr::input("y", vec![3, 2]);
        let loss = x.sum();
        let g = grad(&loss, std::slice::from_ref(&y)).unwrap();
        let out = evaluate(&g[0], &Bindings::new()).unwrap();
        assert_eq!(out.shape(), &[3, 2]);
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_of_relu_at_zero_is_zero() {
        let x = Expr::input("x", vec![1]);
        let g = grad(&x.relu().sum(), std::slice::from_ref(&x)).unwrap();
        let out = evaluate(&g[0], &bind(&[("x", Tensor::vector(vec![0.0]))])).unwrap();
        assert_eq!(out.data(), &[0.0]);
    }

    #[test]
    fn grad_rejects_non_scalar_root() {
        let x = Expr::input("x", vec![2]);
        assert!(grad(&x.relu(), std::slice::from_ref(&x)).is_err());
    }

    #[test]
    fn log_softmax_grad_values() {
        // loss = -sum(t * log_softmax(z)) with one row; gradient = softmax(z) - t
        let z = Expr::input("z", vec![1, 3]);
        let t = Tensor::matrix(1, 3, vec![0.0, 1.0, 0.0]).unwrap();
        let loss = Expr::constant(t).mul(&z.log_softmax().unwrap()).unwrap().sum().scale(-1.0);
        let g = grad(&loss, std::slice::from_ref(&z)).unwrap();
        let zv = Tensor::matrix(1, 3, vec![0.2, -0.4, 1.1]).unwrap();
        let out = evaluate(&g[0], &bind(&[("z", zv.clone())])).unwrap();
        let sm = zv.log_softmax().exp();
        for j in 0..3 {
            let expect = sm.data()[j] - if j == 1 { 1.0 } else { 0.0 };
            assert!((out.data()[j] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn deep_chain_drops_without_overflow() {
        // Builds a graph far deeper than any stack could recurse through.
        let x = Expr::input("x", vec![4]);
        let mut e = x.clone();
        for _ in 0..200_000 {
            e = e.scale(1.0 + 1e-9);
        }
        drop(e);
    }

    #[test]
    fn shared_subgraph_evaluated_once_per_call() {
        // Diamond: both branches reuse `h`; evaluation must agree with the
        // hand-computed value (memoization correctness, not a perf test).
        let x = Expr::input("x", vec![2]);
        let h = x.scale(3.0);
        let e = h.mul(&h).unwrap().sum();
        let out = evaluate(&e, &bind(&[("x", Tensor::vector(vec![1.0, 2.0]))])).unwrap();
        assert_eq!(out.scalar_value(), 9.0 + 36.0);
    }
}
