//! Pseudo-center bank: one unit-norm projection per cluster, rebuilt every
//! iteration from labeled projections and confidently pseudo-labeled ones.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CenterBank {
    /// `K x D`, unit rows where `valid`.
    pub c: Array2<f64>,
    /// Whether the row has ever been populated.
    pub valid: Vec<bool>,
    /// Contributors to each row in the last update.
    pub count_last: Vec<usize>,
}

impl CenterBank {
    pub fn empty(k: usize, dim: usize) -> Self {
        Self {
            c: Array2::zeros((k, dim)),
            valid: vec![false; k],
            count_last: vec![0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.c.nrows()
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }

    /// Sets every cluster that has at least one labeled projection to the
    /// normalized mean of those projections.
    pub fn from_labeled(z: ArrayView2<f64>, y: &[usize], k: usize) -> Result<Self> {
        let prev = Self::empty(k, z.ncols());
        update_centers(z, y, Array2::zeros((0, z.ncols())).view(), &[], &[], &prev)
    }
}

/// `max_j P_ij >= tau` per row.
pub fn reliability_mask(p0: ArrayView2<f64>, tau: f64) -> Vec<bool> {
    p0.axis_iter(Axis(0))
        .map(|row| row.fold(f64::NEG_INFINITY, |m, &v| m.max(v)) >= tau)
        .collect()
}

/// Recomputes each center as the L2-normalized mean of the labeled
/// projections with that label and the masked unlabeled projections with that
/// pseudo-label. Clusters without contributors keep their previous row.
pub fn update_centers(
    z_labeled: ArrayView2<f64>,
    y: &[usize],
    z_unlabeled: ArrayView2<f64>,
    pseudo: &[usize],
    mask: &[bool],
    prev: &CenterBank,
) -> Result<CenterBank> {
    let (k, dim) = prev.c.dim();
    if z_labeled.nrows() != y.len()
        || z_unlabeled.nrows() != pseudo.len()
        || pseudo.len() != mask.len()
        || (z_labeled.nrows() > 0 && z_labeled.ncols() != dim)
        || (z_unlabeled.nrows() > 0 && z_unlabeled.ncols() != dim)
    {
        return Err(Error::Shape(format!(
            "labeled {:?} with {} labels, unlabeled {:?} with {} pseudo-labels and {} mask entries, bank {k}x{dim}",
            z_labeled.dim(),
            y.len(),
            z_unlabeled.dim(),
            pseudo.len(),
            mask.len()
        )));
    }
    let mut sums = Array2::<f64>::zeros((k, dim));
    let mut counts = vec![0usize; k];
    let labeled = z_labeled.axis_iter(Axis(0)).zip(y.iter().copied());
    let reliable = z_unlabeled
        .axis_iter(Axis(0))
        .zip(pseudo.iter().copied())
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(pair, _)| pair);
    for (z, label) in labeled.chain(reliable) {
        if label >= k {
            return Err(Error::Label { label, k });
        }
        sums.row_mut(label).scaled_add(1.0, &z);
        counts[label] += 1;
    }

    let mut next = prev.clone();
    for j in 0..k {
        next.count_last[j] = counts[j];
        if counts[j] == 0 {
            continue;
        }
        let mean: Array1<f64> = sums.row(j).mapv(|v| v / counts[j] as f64);
        let norm = mean.dot(&mean).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Numeric(format!("pseudo-center {j} has zero or non-finite norm")));
        }
        next.c.row_mut(j).assign(&(mean / norm));
        next.valid[j] = true;
    }
    Ok(next)
}

/// Blends a fresh update into the previous bank: `normalize(decay * prev +
/// (1 - decay) * fresh)` for rows valid in both, `fresh` otherwise.
pub fn ema_merge(prev: &CenterBank, fresh: &CenterBank, decay: f64) -> Result<CenterBank> {
    let mut out = fresh.clone();
    for j in 0..fresh.k() {
        if prev.valid[j] && fresh.valid[j] && fresh.count_last[j] > 0 {
            let mixed = &prev.c.row(j) * decay + &fresh.c.row(j) * (1.0 - decay);
            let norm = mixed.dot(&mixed).sqrt();
            if !(norm > 0.0) {
                return Err(Error::Numeric(format!("EMA center {j} collapsed to zero")));
            }
            out.c.row_mut(j).assign(&(mixed / norm));
        }
    }
    Ok(out)
}
