//! Finite-difference checks for reverse-mode gradients in `f64`.

use super::graph::{Graph, Var};
use super::tensor::Tensor;

/// Analytic gradient of the scalar `f(x)` with respect to `x`.
pub fn analytic_grad(x: &Tensor<f64>, f: &dyn Fn(&mut Graph<f64>, Var) -> Var) -> Tensor<f64> {
    let mut g = Graph::new();
    let v = g.leaf(x.clone());
    let l = f(&mut g, v);
    g.backward(l)
        .get(v)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(x.shape()))
}

/// Central-difference gradient with step `h`.
pub fn numeric_grad(
    x: &Tensor<f64>,
    f: &dyn Fn(&mut Graph<f64>, Var) -> Var,
    h: f64,
) -> Tensor<f64> {
    let eval = |t: Tensor<f64>| {
        let mut g = Graph::inference();
        let v = g.constant(t);
        let l = f(&mut g, v);
        g.scalar(l)
    };
    let mut out = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += h;
        let mut xm = x.clone();
        xm.data_mut()[i] -= h;
        out.data_mut()[i] = (eval(xp) - eval(xm)) / (2.0 * h);
    }
    out
}

/// Normwise relative error `‖a − n‖∞ / max(‖a‖∞, ‖n‖∞)` between analytic and
/// central-difference gradients (0 when both vanish).
pub fn relative_error(x: &Tensor<f64>, f: &dyn Fn(&mut Graph<f64>, Var) -> Var) -> f64 {
    let a = analytic_grad(x, f);
    let n = numeric_grad(x, f, 1e-6);
    let diff = a
        .data()
        .iter()
        .zip(n.data())
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    let scale = a.max_abs().max(n.max_abs());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
