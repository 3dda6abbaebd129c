//! Central finite-difference verification of every analytic gradient in the
//! crate. Used by the test suite and by the `grad-check` command.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::losses::{self, InstanceDenominator};
use crate::model::{softmax_rows, ModelParams, ParamGrads, TENSOR_NAMES};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error, so entries that are zero in both
/// gradients compare on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`, maximized over entries.
pub fn max_relative_error<'a>(
    analytic: impl IntoIterator<Item = &'a f64>,
    numeric: impl IntoIterator<Item = &'a f64>,
) -> f64 {
    analytic
        .into_iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR))
        .fold(0.0, f64::max)
}

/// Central differences of `f` at `x`, one entry at a time.
pub fn numeric_gradient(x: &Array2<f64>, step: f64, mut f: impl FnMut(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut probe = x.clone();
    let mut grad = Array2::zeros(x.raw_dim());
    for idx in 0..x.len() {
        let orig = probe.as_slice().unwrap()[idx];
        probe.as_slice_mut().unwrap()[idx] = orig + step;
        let up = f(&probe);
        probe.as_slice_mut().unwrap()[idx] = orig - step;
        let down = f(&probe);
        probe.as_slice_mut().unwrap()[idx] = orig;
        grad.as_slice_mut().unwrap()[idx] = (up - down) / (2.0 * step);
    }
    grad
}

/// Central differences of a scalar function of the model parameters.
pub fn numeric_param_gradient(
    params: &ModelParams,
    step: f64,
    mut f: impl FnMut(&ModelParams) -> f64,
) -> ParamGrads {
    let mut probe = params.clone();
    let mut grads = ParamGrads::zeros_like(params);
    for t in 0..TENSOR_NAMES.len() {
        for idx in 0..params.slices()[t].len() {
            let orig = params.slices()[t][idx];
            probe.slices_mut()[t][idx] = orig + step;
            let up = f(&probe);
            probe.slices_mut()[t][idx] = orig - step;
            let down = f(&probe);
            probe.slices_mut()[t][idx] = orig;
            grads.slices_mut()[t][idx] = (up - down) / (2.0 * step);
        }
    }
    grads
}

fn uniform(rng: &mut ChaCha8Rng, shape: (usize, usize), lo: f64, hi: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.random_range(lo..hi))
}

fn random_simplex_rows(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Array2<f64> {
    softmax_rows(&uniform(rng, (n, k), -2.0, 2.0))
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k)).collect()
}

fn two_input_check(
    a: &Array2<f64>,
    b: &Array2<f64>,
    analytic: &[Array2<f64>],
    step: f64,
    f: impl Fn(ArrayView2<f64>, ArrayView2<f64>) -> f64,
) -> f64 {
    let na = numeric_gradient(a, step, |x| f(x.view(), b.view()));
    let nb = numeric_gradient(b, step, |x| f(a.view(), x.view()));
    max_relative_error(&analytic[0], &na).max(max_relative_error(&analytic[1], &nb))
}

/// Center-aware contrastive loss on a random 4x3 instance with K = 3.
pub fn check_cacl(seed: u64, step: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z1 = uniform(&mut rng, (4, 3), -1.0, 1.0);
    let z2 = uniform(&mut rng, (4, 3), -1.0, 1.0);
    let mut centers = uniform(&mut rng, (3, 3), -1.0, 1.0);
    for mut row in centers.rows_mut() {
        let n = row.dot(&row).sqrt();
        row /= n;
    }
    let labels = random_labels(&mut rng, 4, 3);
    let t_p = rng.random_range(0.5..2.0);
    let out = losses::cacl_loss(z1.view(), z2.view(), centers.view(), &labels, t_p).unwrap();
    two_input_check(&z1, &z2, &out.grads, step, |a, b| {
        losses::cacl_loss(a, b, centers.view(), &labels, t_p).unwrap().value
    })
}

/// Instance-wise contrastive loss on random 3x4 views.
pub fn check_instance(seed: u64, step: f64, denominator: InstanceDenominator) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z1 = uniform(&mut rng, (3, 4), -1.0, 1.0);
    let z2 = uniform(&mut rng, (3, 4), -1.0, 1.0);
    let t_i = rng.random_range(0.5..2.0);
    let out = losses::instance_loss(z1.view(), z2.view(), t_i, denominator).unwrap();
    two_input_check(&z1, &z2, &out.grads, step, |a, b| {
        losses::instance_loss(a, b, t_i, denominator).unwrap().value
    })
}

/// Pseudo-label cross-entropy, 4 samples, K = 3.
pub fn check_pseudo_ce(seed: u64, step: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p1 = random_simplex_rows(&mut rng, 4, 3);
    let p2 = random_simplex_rows(&mut rng, 4, 3);
    let labels = random_labels(&mut rng, 4, 3);
    let out = losses::pseudo_ce_loss(p1.view(), p2.view(), &labels).unwrap();
    two_input_check(&p1, &p2, &out.grads, step, |a, b| {
        losses::pseudo_ce_loss(a, b, &labels).unwrap().value
    })
}

/// Supervised cross-entropy, 3 samples, K = 4.
pub fn check_supervised_ce(seed: u64, step: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p1 = random_simplex_rows(&mut rng, 3, 4);
    let p2 = random_simplex_rows(&mut rng, 3, 4);
    let labels = random_labels(&mut rng, 3, 4);
    let out = losses::supervised_ce_loss(p1.view(), p2.view(), &labels).unwrap();
    two_input_check(&p1, &p2, &out.grads, step, |a, b| {
        losses::supervised_ce_loss(a, b, &labels).unwrap().value
    })
}

fn tiny_head(rng: &mut ChaCha8Rng) -> ModelParams {
    let mut params = ModelParams::init(3, 4, 2, 3, rng);
    params.b1 = ndarray::Array1::from_shape_simple_fn(4, || rng.random_range(-0.3..0.3));
    params.bc = ndarray::Array1::from_shape_simple_fn(2, || rng.random_range(-0.3..0.3));
    params.bp = ndarray::Array1::from_shape_simple_fn(3, || rng.random_range(-0.3..0.3));
    params
}

fn param_error(analytic: &ParamGrads, numeric: &ParamGrads) -> f64 {
    analytic
        .slices()
        .iter()
        .zip(numeric.slices())
        .map(|(a, n)| max_relative_error(a.iter(), n.iter()))
        .fold(0.0, f64::max)
}

/// Model backward pass for a random linear functional of `P` and `Z` on a
/// tiny head (d = 3, hidden = 4, K = 2, D = 3).
pub fn check_model_backward(seed: u64, step: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = tiny_head(&mut rng);
    let x = uniform(&mut rng, (3, 3), -1.5, 1.5);
    let wp = uniform(&mut rng, (3, 2), -1.0, 1.0);
    let wz = uniform(&mut rng, (3, 3), -1.0, 1.0);
    let loss = |m: &ModelParams| {
        let f = m.forward(x.view()).unwrap();
        (&f.p * &wp).sum() + (&f.z * &wz).sum()
    };
    let fwd = params.forward(x.view()).unwrap();
    let analytic = params.backward_all(&[(&fwd.cache, Some(&wp), Some(&wz))]).unwrap();
    let numeric = numeric_param_gradient(&params, step, loss);
    param_error(&analytic, &numeric)
}

/// All four losses composed through the model on two views, the way a
/// stage-two training step combines them.
pub fn check_pipeline(seed: u64, step: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = tiny_head(&mut rng);
    let xl1 = uniform(&mut rng, (2, 3), -1.5, 1.5);
    let xl2 = uniform(&mut rng, (2, 3), -1.5, 1.5);
    let xu1 = uniform(&mut rng, (3, 3), -1.5, 1.5);
    let xu2 = uniform(&mut rng, (3, 3), -1.5, 1.5);
    let y = random_labels(&mut rng, 2, 2);
    let pseudo = random_labels(&mut rng, 3, 2);
    let mut centers = uniform(&mut rng, (2, 3), -1.0, 1.0);
    for mut row in centers.rows_mut() {
        let n = row.dot(&row).sqrt();
        row /= n;
    }
    let lambda = 5.0;
    let loss = |m: &ModelParams| {
        let l1 = m.forward(xl1.view()).unwrap();
        let l2 = m.forward(xl2.view()).unwrap();
        let u1 = m.forward(xu1.view()).unwrap();
        let u2 = m.forward(xu2.view()).unwrap();
        let lx = losses::supervised_ce_loss(l1.p.view(), l2.p.view(), &y).unwrap().value;
        let lc = losses::pseudo_ce_loss(u1.p.view(), u2.p.view(), &pseudo).unwrap().value;
        let li = losses::instance_loss(u1.z.view(), u2.z.view(), 1.0, InstanceDenominator::NegativesOnly)
            .unwrap()
            .value;
        let lp = losses::cacl_loss(u1.z.view(), u2.z.view(), centers.view(), &pseudo, 1.0).unwrap().value;
        lx + lc + li + lambda * lp
    };
    let l1 = params.forward(xl1.view()).unwrap();
    let l2 = params.forward(xl2.view()).unwrap();
    let u1 = params.forward(xu1.view()).unwrap();
    let u2 = params.forward(xu2.view()).unwrap();
    let lx = losses::supervised_ce_loss(l1.p.view(), l2.p.view(), &y).unwrap();
    let lc = losses::pseudo_ce_loss(u1.p.view(), u2.p.view(), &pseudo).unwrap();
    let li = losses::instance_loss(u1.z.view(), u2.z.view(), 1.0, InstanceDenominator::NegativesOnly).unwrap();
    let lp = losses::cacl_loss(u1.z.view(), u2.z.view(), centers.view(), &pseudo, 1.0).unwrap();
    let dz1 = &li.grads[0] + &(&lp.grads[0] * lambda);
    let dz2 = &li.grads[1] + &(&lp.grads[1] * lambda);
    let analytic = params
        .backward_all(&[
            (&l1.cache, Some(&lx.grads[0]), None),
            (&l2.cache, Some(&lx.grads[1]), None),
            (&u1.cache, Some(&lc.grads[0]), Some(&dz1)),
            (&u2.cache, Some(&lc.grads[1]), Some(&dz2)),
        ])
        .unwrap();
    let numeric = numeric_param_gradient(&params, step, loss);
    param_error(&analytic, &numeric)
}

/// Aggregated result for one gradient.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckRow {
    pub name: &'static str,
    pub instances: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

/// Runs every check on `instances` seeded random instances derived from
/// `seed`.
pub fn run_suite(seed: u64, instances: usize, tolerance: f64) -> Vec<CheckRow> {
    type Check = fn(u64, f64) -> f64;
    let checks: [(&'static str, Check); 7] = [
        ("cacl", check_cacl),
        ("instance", |s, h| check_instance(s, h, InstanceDenominator::NegativesOnly)),
        ("instance_ntxent", |s, h| check_instance(s, h, InstanceDenominator::WithPositive)),
        ("pseudo_ce", check_pseudo_ce),
        ("supervised_ce", check_supervised_ce),
        ("model_backward", check_model_backward),
        ("pipeline", check_pipeline),
    ];
    checks
        .iter()
        .map(|&(name, check)| {
            let worst = (0..instances as u64)
                .map(|i| check(seed.wrapping_mul(1_000_003).wrapping_add(i), DEFAULT_STEP))
                .fold(0.0, f64::max);
            CheckRow {
                name,
                instances,
                max_rel_error: worst,
                passed: worst <= tolerance,
            }
        })
        .collect()
}
