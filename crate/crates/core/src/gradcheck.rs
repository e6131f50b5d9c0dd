//! Central finite-difference gradient oracle, independent of the backward
//! pass it checks. Lives in the library so integration tests and the
//! acceptance suite can drive it, but it is test support, not model code.

use crate::graph::{Element, Graph, Tensor};
use ndarray::ArrayD;

/// Numerically estimate d f / d x by central differences, rebuilding the
/// forward pass for every probe.
pub fn finite_diff_grad<F: Element>(
    f: &dyn Fn(&ArrayD<F>) -> F,
    x: &ArrayD<F>,
    step: F,
) -> ArrayD<F> {
    let mut grad = ArrayD::<F>::zeros(x.raw_dim());
    let two = F::one() + F::one();
    let mut probe = x.clone();
    for idx in 0..x.len() {
        let orig = probe.as_slice().expect("contiguous")[idx];
        probe.as_slice_mut().expect("contiguous")[idx] = orig + step;
        let hi = f(&probe);
        probe.as_slice_mut().expect("contiguous")[idx] = orig - step;
        let lo = f(&probe);
        probe.as_slice_mut().expect("contiguous")[idx] = orig;
        grad.as_slice_mut().expect("contiguous")[idx] = (hi - lo) / (two * step);
    }
    grad
}

/// Worst-case relative disagreement between two gradients, with an absolute
/// floor so near-zero entries do not blow the ratio up.
pub fn max_relative_error<F: Element>(analytic: &ArrayD<F>, numeric: &ArrayD<F>, floor: F) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    let mut worst = 0.0f64;
    for (&a, &n) in analytic.iter().zip(numeric.iter()) {
        let denom = (a.abs() + n.abs()).max(floor);
        let rel = ((a - n).abs() / denom).to_f64();
        if rel > worst {
            worst = rel;
        }
    }
    worst
}

/// Run a full check of `build` (a scalar-valued graph function of one input)
/// at `x`: analytic backward vs. central differences.
///
/// Returns the max relative error; panics if the analytic gradient is missing.
pub fn check_scalar_fn<F: Element>(
    build: &dyn Fn(&Graph<F>, &Tensor<F>) -> Tensor<F>,
    x: &ArrayD<F>,
    step: F,
    floor: F,
) -> f64 {
    let graph = Graph::<F>::new();
    let leaf = graph.leaf(x.clone(), true);
    let loss = build(&graph, &leaf);
    let grads = graph.backward(&loss);
    let analytic = grads.get(&leaf).expect("input unreachable from loss").clone();

    let numeric = finite_diff_grad(
        &|probe: &ArrayD<F>| {
            let g = Graph::<F>::new();
            let leaf = g.leaf(probe.clone(), false);
            build(&g, &leaf).item()
        },
        x,
        step,
    );
    max_relative_error(&analytic, &numeric, floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops;
    use ndarray::IxDyn;

    #[test]
    fn finite_diff_matches_quadratic() {
        let x = ArrayD::from_shape_vec(IxDyn(&[3]), vec![1.0f64, -2.0, 0.5]).unwrap();
        // f = sum(x^2) has gradient 2x.
        let g = finite_diff_grad(&|v: &ArrayD<f64>| v.iter().map(|a| a * a).sum(), &x, 1e-5);
        for (gv, xv) in g.iter().zip(x.iter()) {
            assert!((gv - 2.0 * xv).abs() < 1e-8);
        }
    }

    #[test]
    fn check_scalar_fn_on_composite() {
        let x = ArrayD::from_shape_vec(IxDyn(&[2, 3]), vec![0.3f64, -1.2, 0.7, 2.0, -0.4, 0.9])
            .unwrap();
        let err = check_scalar_fn(
            &|_, t| ops::mean_all(&ops::tanh(&ops::mul(t, t))),
            &x,
            1e-5,
            1e-8,
        );
        assert!(err < 1e-7, "relative error {err}");
    }
}
