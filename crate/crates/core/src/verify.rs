//! Gradient-check suite over every layer and every model kind.

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::Serialize;

use crate::error::Result;
use crate::graph::{eigendecompose, laplacian, LaplacianKind, Spectrum, TrajectoryGraph};
use crate::loss::{loss, loss_value};
use crate::model::{CompSnnConfig, ModelInput, ModelKind, ModelParams};
use crate::nn::{
    conv1d_backward, conv1d_forward, grad_check, linear_backward, linear_forward, relu, relu_backward, sigmoid, sigmoid_backward, tanh,
    tanh_backward, Tensor,
};

/// Finite-difference step of every check.
pub const STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheck {
    pub name: String,
    pub parameters: usize,
    pub max_relative_error: f64,
}

fn random(rng: &mut SplitMix64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).expect("suite shapes are consistent")
}

fn record(out: &mut Vec<GradientCheck>, name: &str, point: &[f64], analytic: &[f64], f: impl FnMut(&[f64]) -> f64) {
    out.push(GradientCheck {
        name: name.to_string(),
        parameters: point.len(),
        max_relative_error: grad_check(point, analytic, STEP, f),
    });
}

/// Configuration with `|N| = nodes` and every width shrunk to a handful of units.
pub fn tiny_config(nodes: usize) -> CompSnnConfig {
    let mut c = CompSnnConfig::new(nodes, vec![0.2, 0.3, 0.25, 0.4, 0.5, 0.35, 0.3, 0.45]);
    c.mlp_hidden = 6;
    c.module_out = 4;
    c.cnn_channels = 3;
    c.cnn_kernel = 3;
    c.gcnn_filters = 2;
    c.gcnn_degree = 2;
    c.coeff_hidden = 3;
    c.aggregator_hidden = 5;
    c
}

fn path_spectrum(n: usize) -> Result<Spectrum> {
    let g = TrajectoryGraph::new(n, (0..n - 1).map(|i| (i, i + 1)), vec![(0.0, 0.0); n])?;
    eigendecompose(&laplacian(&g, LaplacianKind::Normalized))
}

fn layer_checks(rng: &mut SplitMix64, out: &mut Vec<GradientCheck>) -> Result<()> {
    let (b, i, o) = (3, 4, 2);
    let (x, w, bias, r) = (random(rng, b * i), random(rng, o * i), random(rng, o), random(rng, b * o));
    let lin = |x: &[f64], w: &[f64], bias: &[f64]| {
        dot(
            linear_forward(&t(&[b, i], x), &t(&[o, i], w), &t(&[o], bias))
                .expect("linear")
                .data(),
            &r,
        )
    };
    let (dx, dw, db) = linear_backward(&t(&[b, i], &x), &t(&[o, i], &w), &t(&[b, o], &r))?;
    record(out, "linear.input", &x, dx.data(), |p| lin(p, &w, &bias));
    record(out, "linear.weight", &w, dw.data(), |p| lin(&x, p, &bias));
    record(out, "linear.bias", &bias, db.data(), |p| lin(&x, &w, p));

    let (ci, co, k, n) = (2, 3, 3, 6);
    let (x, kern, bias, r) = (random(rng, ci * n), random(rng, co * ci * k), random(rng, co), random(rng, co * n));
    let conv = |x: &[f64], kern: &[f64], bias: &[f64]| {
        dot(
            conv1d_forward(&t(&[ci, n], x), &t(&[co, ci, k], kern), &t(&[co], bias))
                .expect("conv")
                .data(),
            &r,
        )
    };
    let (dx, dk, db) = conv1d_backward(&t(&[ci, n], &x), &t(&[co, ci, k], &kern), &t(&[co, n], &r))?;
    record(out, "conv1d.input", &x, dx.data(), |p| conv(p, &kern, &bias));
    record(out, "conv1d.kernel", &kern, dk.data(), |p| conv(&x, p, &bias));
    record(out, "conv1d.bias", &bias, db.data(), |p| conv(&x, &kern, p));

    let x: Vec<f64> = random(rng, 8).iter().map(|v| v * 3.0).collect();
    let r = random(rng, 8);
    record(out, "relu", &x, &relu_backward(&x, &r), |p| dot(&relu(p), &r));
    record(out, "sigmoid", &x, &sigmoid_backward(&sigmoid(&x), &r), |p| dot(&sigmoid(p), &r));
    record(out, "tanh", &x, &tanh_backward(&tanh(&x), &r), |p| dot(&tanh(p), &r));

    let (xs, us) = (random(rng, 8), random(rng, 8));
    let eps: Vec<f64> = (0..8).map(|d| 0.2 + 0.05 * d as f64).collect();
    let (_, g) = loss(&xs, &us, &eps)?;
    record(out, "loss", &xs, &g, |p| loss_value(p, &us, &eps).expect("loss"));
    Ok(())
}

fn model_check(kind: ModelKind, rng: &mut SplitMix64) -> Result<GradientCheck> {
    let (nodes, len) = (4, 6);
    let spectrum = path_spectrum(nodes)?;
    let input = ModelInput {
        node_signal: random(rng, nodes * 8),
        visits: random(rng, nodes).iter().map(|v| v.abs()).collect(),
        series: t(&[10, len], &random(rng, 10 * len)),
    };
    let target: [f64; 8] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
    let mut m = ModelParams::new(kind, tiny_config(nodes), rng.gen())?;
    for p in m.params_mut() {
        if p.name.ends_with("bias") {
            p.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
        }
    }
    m.zero_grad();
    m.accumulate_loss(&input, &spectrum, &target, 1.0)?;
    let analytic = m.flat_grads();
    let point = m.flat_values();
    let mut probe = m.clone();
    let err = grad_check(&point, &analytic, STEP, |v| {
        probe.set_flat_values(v).expect("same parameter count");
        let x = probe.forward(&input, &spectrum).expect("forward");
        loss_value(&x, &target, &probe.config.epsilon).expect("loss")
    });
    Ok(GradientCheck {
        name: format!("model.{kind}"),
        parameters: point.len(),
        max_relative_error: err,
    })
}

/// Runs every check with inputs drawn from `seed`.
pub fn gradient_suite(seed: u64) -> Result<Vec<GradientCheck>> {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut out = Vec::new();
    layer_checks(&mut rng, &mut out)?;
    for kind in ModelKind::ALL {
        out.push(model_check(kind, &mut rng)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        let checks = gradient_suite(3).unwrap();
        assert_eq!(checks.len(), 10 + ModelKind::ALL.len());
        for c in &checks {
            assert!(c.max_relative_error < 1e-4, "{}: {}", c.name, c.max_relative_error);
        }
    }
}
