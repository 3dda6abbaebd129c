//! Training losses with analytic gradients.
//!
//! Every loss returns its value together with the gradient with respect to
//! each differentiable input. Cosine similarities are taken on the raw
//! projector outputs, so all projection-based losses are invariant to
//! positive rescaling of individual rows.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ieot::log_sum_exp;

/// Floor applied to every `-log` argument.
pub const LOG_FLOOR: f64 = 1e-12;

/// Scalar loss value and one gradient per tensor input, in argument order.
#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grads: Vec<Array2<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Temperatures {
    /// Center-aware contrastive temperature.
    pub t_p: f64,
    /// Instance-wise contrastive temperature.
    pub t_i: f64,
}

impl Default for Temperatures {
    fn default() -> Self {
        Self { t_p: 1.0, t_i: 1.0 }
    }
}

/// Which terms enter the instance-loss denominator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceDenominator {
    /// Only the `2(n-1)` views of other samples; the positive pair is left out.
    #[default]
    NegativesOnly,
    /// NT-Xent: every view except the anchor itself.
    WithPositive,
}

/// Row norms and unit rows of `z`. Zero rows keep a zero direction.
fn normalize_rows(z: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let norms = z.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    let mut unit = z.to_owned();
    for (mut row, &nrm) in unit.axis_iter_mut(Axis(0)).zip(norms.iter()) {
        if nrm > 0.0 {
            row /= nrm;
        }
    }
    (norms, unit)
}

/// Turns `dL/dC` for `C = U_a U_b^T` (unit rows) into gradients with respect
/// to the raw rows of `a`, given `dL/dU_a = G U_b`.
fn unit_backward(d_unit: &Array2<f64>, unit: &Array2<f64>, norms: &Array1<f64>) -> Array2<f64> {
    // d/dz (z/|z|) applied to v: (v - (v . u) u) / |z|
    let mut out = d_unit.clone();
    for ((mut row, u), &nrm) in out.axis_iter_mut(Axis(0)).zip(unit.axis_iter(Axis(0))).zip(norms) {
        if nrm > 0.0 {
            let proj = row.dot(&u);
            row.scaled_add(-proj, &u);
            row /= nrm;
        } else {
            row.fill(0.0);
        }
    }
    out
}

fn check_labels(labels: &[usize], k: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= k) {
        Some(&label) => Err(Error::Label { label, k }),
        None => Ok(()),
    }
}

/// Center-aware contrastive loss on two views of the unlabeled projections.
///
/// For each sample and view, `-log softmax_k(cos(z, c_k) / T_P)` at the
/// pseudo-label, averaged over samples and summed over views. The centers
/// are constants.
pub fn cacl_loss(
    z1: ArrayView2<f64>,
    z2: ArrayView2<f64>,
    centers: ArrayView2<f64>,
    labels: &[usize],
    t_p: f64,
) -> Result<LossOutput> {
    let n = z1.nrows();
    if z2.dim() != z1.dim() || labels.len() != n || centers.ncols() != z1.ncols() {
        return Err(Error::Shape(format!(
            "views {:?}/{:?}, {} labels, centers {:?}",
            z1.dim(),
            z2.dim(),
            labels.len(),
            centers.dim()
        )));
    }
    let k = centers.nrows();
    check_labels(labels, k)?;
    let (_, c_unit) = normalize_rows(centers);
    let scale = 1.0 / n as f64;
    let mut value = 0.0;
    let mut grads = Vec::with_capacity(2);
    for z in [z1, z2] {
        let (norms, unit) = normalize_rows(z);
        let logits = unit.dot(&c_unit.t()) / t_p;
        let mut d_logits = Array2::zeros((n, k));
        for i in 0..n {
            let row = logits.row(i);
            let lse = log_sum_exp(row.iter().copied());
            value += scale * (lse - row[labels[i]]);
            for j in 0..k {
                d_logits[[i, j]] = scale * (row[j] - lse).exp();
            }
            d_logits[[i, labels[i]]] -= scale;
        }
        let d_unit = d_logits.dot(&c_unit) / t_p;
        grads.push(unit_backward(&d_unit, &unit, &norms));
    }
    Ok(LossOutput { value, grads })
}

/// Instance-wise contrastive loss between two views.
///
/// Each of the `2n` projections is an anchor whose positive is the other
/// view of the same sample; the loss is `(1/n) sum_anchors
/// [-cos(anchor, positive)/T + log sum_{negatives} exp(cos/T)]`.
pub fn instance_loss(
    z1: ArrayView2<f64>,
    z2: ArrayView2<f64>,
    t_i: f64,
    denominator: InstanceDenominator,
) -> Result<LossOutput> {
    let n = z1.nrows();
    if z2.dim() != z1.dim() {
        return Err(Error::Shape(format!("views {:?} and {:?} differ", z1.dim(), z2.dim())));
    }
    if n < 2 {
        return Err(Error::Config(format!("instance loss needs at least 2 samples, got {n}")));
    }
    let all = ndarray::concatenate(Axis(0), &[z1, z2]).expect("same width");
    let (norms, unit) = normalize_rows(all.view());
    let cos = unit.dot(&unit.t());
    let m = 2 * n;
    let partner = |a: usize| if a < n { a + n } else { a - n };
    let scale = 1.0 / n as f64;

    // dL/dcos, row = anchor
    let mut d_cos = Array2::<f64>::zeros((m, m));
    let mut value = 0.0;
    for a in 0..m {
        let p = partner(a);
        let included = |b: usize| b != a && (b != p || denominator == InstanceDenominator::WithPositive);
        let row = cos.row(a);
        let lse = log_sum_exp((0..m).filter(|&b| included(b)).map(|b| row[b] / t_i));
        value += scale * (lse - row[p] / t_i);
        for b in (0..m).filter(|&b| included(b)) {
            d_cos[[a, b]] += scale * (row[b] / t_i - lse).exp() / t_i;
        }
        d_cos[[a, p]] -= scale / t_i;
    }
    // cos is symmetric in its arguments; both ends of every pair get gradient
    let sym = &d_cos + &d_cos.t();
    let d_unit = sym.dot(&unit);
    let grad = unit_backward(&d_unit, &unit, &norms);
    let g1 = grad.slice(ndarray::s![..n, ..]).to_owned();
    let g2 = grad.slice(ndarray::s![n.., ..]).to_owned();
    Ok(LossOutput {
        value,
        grads: vec![g1, g2],
    })
}

/// Single-view cross-entropy `(1/n) sum_i -log p_i[y_i]` and its gradient
/// with respect to `p`.
pub fn cross_entropy(p: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (n, k) = p.dim();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} predictions with {} labels", n, labels.len())));
    }
    check_labels(labels, k)?;
    let scale = 1.0 / n.max(1) as f64;
    let mut value = 0.0;
    let mut g = Array2::zeros((n, k));
    for (i, &y) in labels.iter().enumerate() {
        let v = p[[i, y]];
        if v > LOG_FLOOR {
            value -= v.ln();
            g[[i, y]] = -scale / v;
        } else {
            value -= LOG_FLOOR.ln();
        }
    }
    Ok((scale * value, g))
}

/// Two-view cross-entropy `(1/n) sum_i [-log p1_i[y_i] - log p2_i[y_i]]`
/// with gradients with respect to the probability matrices.
pub fn two_view_cross_entropy(p1: ArrayView2<f64>, p2: ArrayView2<f64>, labels: &[usize]) -> Result<LossOutput> {
    if p2.dim() != p1.dim() {
        return Err(Error::Shape(format!("predictions {:?} and {:?} differ", p1.dim(), p2.dim())));
    }
    let (v1, g1) = cross_entropy(p1, labels)?;
    let (v2, g2) = cross_entropy(p2, labels)?;
    Ok(LossOutput {
        value: v1 + v2,
        grads: vec![g1, g2],
    })
}

/// Cross-entropy of both unlabeled views against the pseudo-labels.
pub fn pseudo_ce_loss(p1: ArrayView2<f64>, p2: ArrayView2<f64>, pseudo: &[usize]) -> Result<LossOutput> {
    two_view_cross_entropy(p1, p2, pseudo)
}

/// Cross-entropy of both labeled views against the true labels.
pub fn supervised_ce_loss(p1: ArrayView2<f64>, p2: ArrayView2<f64>, y: &[usize]) -> Result<LossOutput> {
    two_view_cross_entropy(p1, p2, y)
}

/// Two-stage total: `L_X + L_C + L_I`, plus `lambda * L_P` from iteration
/// `e_first` on.
pub fn total_loss(iter: usize, e_first: usize, lambda: f64, l_x: f64, l_c: f64, l_i: f64, l_p: f64) -> f64 {
    let base = l_x + l_c + l_i;
    if iter >= e_first {
        base + lambda * l_p
    } else {
        base
    }
}
