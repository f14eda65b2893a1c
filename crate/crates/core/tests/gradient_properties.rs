//! Gradient correctness properties: every primitive against the
//! finite-difference oracle, nesting, thread safety, and the graph-size
//! bound for long unrolls on large models.

use std::collections::HashMap;

use dynafed_core::expr::{evaluate, grad, Bindings, Evaluator, Expr};
use dynafed_core::fdiff::{finite_difference, max_relative_error};
use dynafed_core::mlp::{self, MlpSpec};
use dynafed_core::rng::Rng;
use dynafed_core::tensor::Tensor;
use proptest::prelude::*;

fn grad_value(expr: &Expr, wrt: &Expr, at: &Tensor, name: &str) -> Tensor {
    let g = grad(expr, std::slice::from_ref(wrt)).unwrap().remove(0);
    let mut b = Bindings::new();
    b.insert(name.into(), at.clone());
    evaluate(&g, &b).unwrap()
}

fn fd_value(expr: &Expr, at: &Tensor, name: &str, h: f64) -> Tensor {
    finite_difference(
        |x| {
            let mut b = Bindings::new();
            b.insert(name.to_string(), x.clone());
            Ok(evaluate(expr, &b)?.scalar_value())
        },
        at,
        h,
    )
    .unwrap()
}

/// Builds one scalar expression per primitive op over input `x`.
fn primitive_cases(x: &Expr, rows: usize, cols: usize) -> Vec<(&'static str, Expr)> {
    let w = Expr::constant(Tensor::new(
        vec![cols, 2],
        (0..cols * 2).map(|i| 0.3 + 0.1 * i as f64).collect(),
    )
    .unwrap());
    vec![
        ("add", x.add(x).unwrap().sum()),
        ("subtract", x.sub(&x.scale(0.25)).unwrap().sum()),
        ("elementwise-mul", x.mul(x).unwrap().sum()),
        ("scale", x.scale(-1.7).sum()),
        ("matmul", x.matmul(&w).unwrap().sum()),
        ("relu", x.relu().sum()),
        ("log-softmax", x.log_softmax().unwrap().mul(x).unwrap().sum()),
        ("exp", x.scale(0.5).exp().sum()),
        ("sum", x.sum().scale(2.0)),
        ("sum-rows", x.sum_rows().unwrap().mul(&x.sum_rows().unwrap()).unwrap().sum()),
        ("sum-cols", x.sum_cols().unwrap().mul(&x.sum_cols().unwrap()).unwrap().sum()),
        ("transpose", x.transpose().unwrap().matmul(x).unwrap().sum()),
        (
            "broadcast-rows",
            x.sum_rows().unwrap().broadcast_rows(rows).unwrap().mul(x).unwrap().sum(),
        ),
        (
            "broadcast-cols",
            x.sum_cols().unwrap().broadcast_cols(cols).unwrap().mul(x).unwrap().sum(),
        ),
        ("scalar-fill", x.sum().scalar_fill(vec![rows, cols]).unwrap().mul(x).unwrap().sum()),
        ("sqrt", x.mul(x).unwrap().sum().sqrt()),
        ("recip", x.mul(x).unwrap().sum().scale(0.5).recip()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn every_primitive_matches_finite_differences(seed in 0u64..10_000) {
        let (rows, cols) = (3usize, 4usize);
        let mut rng = Rng::new(seed);
        let mut data: Vec<f64> = (0..rows * cols).map(|_| 2.0 * rng.uniform_f64() - 1.0).collect();
        // Keep relu inputs away from the kink and quadratic sums away from 0
        // so the finite-difference probe stays on one side.
        for v in &mut data {
            if v.abs() < 5e-3 {
                *v += if *v >= 0.0 { 5e-3 } else { -5e-3 };
            }
        }
        let at = Tensor::new(vec![rows, cols], data).unwrap();
        let x = Expr::input("x", vec![rows, cols]);
        for (name, expr) in primitive_cases(&x, rows, cols) {
            let got = grad_value(&expr, &x, &at, "x");
            let want = fd_value(&expr, &at, "x", 1e-6);
            let err = max_relative_error(&got, &want, 1e-6);
            prop_assert!(err < 1e-5, "{name}: rel err {err}");
        }
    }

    #[test]
    fn nested_gradient_matches_finite_differences_of_first(seed in 0u64..10_000) {
        // d/dx of sum(grad(f)) compared against finite differences of the
        // evaluated first gradient, for a composite with curvature.
        let mut rng = Rng::new(seed);
        let data: Vec<f64> = (0..6).map(|_| 0.2 + 0.6 * rng.uniform_f64()).collect();
        let at = Tensor::new(vec![2, 3], data).unwrap();
        let x = Expr::input("x", vec![2, 3]);
        let f = x
            .mul(&x)
            .unwrap()
            .mul(&x)
            .unwrap()
            .sum()
            .add(&x.log_softmax().unwrap().mul(&x).unwrap().sum())
            .unwrap();
        let g1 = grad(&f, std::slice::from_ref(&x)).unwrap().remove(0);
        let g2 = grad(&g1.sum(), std::slice::from_ref(&x)).unwrap().remove(0);

        let mut b = Bindings::new();
        b.insert("x".into(), at.clone());
        let got = evaluate(&g2, &b).unwrap();
        let want = finite_difference(
            |probe| {
                let mut pb = Bindings::new();
                pb.insert("x".to_string(), probe.clone());
                Ok(evaluate(&g1, &pb)?.sum())
            },
            &at,
            1e-6,
        )
        .unwrap();
        let err = max_relative_error(&got, &want, 1e-5);
        prop_assert!(err < 1e-4, "nested rel err {err}");
    }
}

#[test]
fn expressions_are_send_and_sync() {
    fn assert_send_sync<T: Send + Sync>() {}
    assert_send_sync::<Expr>();
}

#[test]
fn concurrent_evaluation_is_bit_identical() {
    let x = Expr::input("x", vec![8, 8]);
    let expr = x
        .matmul(&x.transpose().unwrap())
        .unwrap()
        .relu()
        .log_softmax()
        .unwrap()
        .sum();
    let mut rng = Rng::new(17);
    let at = Tensor::new(vec![8, 8], (0..64).map(|_| rng.normal()).collect::<Vec<_>>()).unwrap();
    let mut bindings = Bindings::new();
    bindings.insert("x".into(), at);
    let reference = evaluate(&expr, &bindings).unwrap().scalar_value();
    let results: Vec<u64> = std::thread::scope(|scope| {
        (0..8)
            .map(|_| {
                let e = expr.clone();
                let b = &bindings;
                scope.spawn(move || evaluate(&e, b).unwrap().scalar_value().to_bits())
            })
            .collect::<Vec<_>>()
            .into_iter()
            .map(|h| h.join().unwrap())
            .collect()
    });
    assert!(results.iter().all(|&bits| bits == reference.to_bits()));
}

/// The contract: 64 unrolled steps on a model with about 10^5 parameters
/// must evaluate and differentiate without recursion failures.
#[test]
fn long_unroll_on_large_mlp_survives() {
    let spec = MlpSpec::new(vec![300, 300, 10]).unwrap();
    assert!(spec.param_count() >= 90_000 && spec.param_count() <= 100_000);
    let params = mlp::init_params(&spec, &mut Rng::new(1));
    let mut rng = Rng::new(2);
    let n = 4;
    let x = Tensor::new(vec![n, 300], (0..n * 300).map(|_| rng.normal() * 0.1).collect::<Vec<_>>())
        .unwrap();
    let mut t = Tensor::zeros(vec![n, 10]);
    for i in 0..n {
        t.data_mut()[i * 10 + i % 10] = 1.0;
    }
    let x_in = Expr::input("x", vec![n, 300]);
    let t_in = Expr::input("t", vec![n, 10]);
    let steps =
        mlp::sgd_unroll_expr(&mlp::param_constants(&params), &x_in, &t_in, 1e-3, 64).unwrap();
    let final_layers = steps.last().unwrap();
    // A scalar readout of the final parameters, differentiated w.r.t. x.
    let mut readout: Option<Expr> = None;
    for (w, b) in final_layers {
        for e in [w, b] {
            let term = e.mul(e).unwrap().sum();
            readout = Some(match readout {
                Some(r) => r.add(&term).unwrap(),
                None => term,
            });
        }
    }
    let readout = readout.unwrap();
    let g = grad(&readout, std::slice::from_ref(&x_in)).unwrap().remove(0);
    let mut bindings = HashMap::new();
    bindings.insert("x".to_string(), x);
    bindings.insert("t".to_string(), t);
    let mut ev = Evaluator::new(&bindings);
    let value = ev.eval(&readout).unwrap();
    let gx = ev.eval(&g).unwrap();
    assert!(value.scalar_value().is_finite());
    assert_eq!(gx.shape(), &[n, 300]);
    assert!(gx.is_finite());
}
