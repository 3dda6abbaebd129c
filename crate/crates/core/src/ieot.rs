//! Interaction-enhanced entropic optimal transport.
//!
//! Given row-stochastic classifier outputs `P0` (n samples x K clusters) the
//! solver minimizes
//!
//! ```text
//! F(Q, b) = <Q, M> + eps1 <Q, log Q - 1> + eps2 <b, log b> - eps3 <S, Q Q^T>
//! s.t.  Q 1 = a,  Q^T 1 = b,  Q >= 0,  b^T 1 = 1
//! ```
//!
//! with `M = -log P0`, `a = 1/n` and `S` the cosine similarity between rows
//! of `P0`. The quadratic interaction term is concave in `Q` (S is a Gram
//! matrix), so each outer majorization-minimization step replaces it by its
//! tangent plane at the previous plan. The resulting problem is an entropic
//! transport problem with a free, entropy-penalized column marginal, solved
//! in the log domain by dual coordinate updates on `(f, g, h)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// An IEOT instance built from one batch of classifier outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportProblem {
    pub p0: Array2<f64>,
    /// Sample marginal.
    pub a: Array1<f64>,
    /// Entropy weight on the plan.
    pub eps1: f64,
    /// Weight of the negative-entropy penalty on the cluster marginal; large
    /// values pin `b` to uniform.
    pub eps2: f64,
    /// Interaction weight.
    pub eps3: f64,
    /// Outer majorization-minimization iterations.
    pub outer_iters: usize,
    /// Nominal dual sweeps per outer iteration.
    pub inner_iters: usize,
}

impl TransportProblem {
    /// Problem with the uniform sample marginal `a = 1/n`.
    pub fn new(p0: Array2<f64>, eps1: f64, eps2: f64, eps3: f64, outer_iters: usize, inner_iters: usize) -> Result<Self> {
        let n = p0.nrows();
        let problem = Self {
            a: Array1::from_elem(n, 1.0 / n.max(1) as f64),
            p0,
            eps1,
            eps2,
            eps3,
            outer_iters,
            inner_iters,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = self.p0.dim();
        if n == 0 || k == 0 {
            return Err(Error::Shape(format!("empty probability matrix {n}x{k}")));
        }
        if self.a.len() != n {
            return Err(Error::Shape(format!("marginal a has {} entries for {n} rows", self.a.len())));
        }
        if (self.a.sum() - 1.0).abs() > 1e-9 || self.a.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Config("sample marginal must be positive and sum to 1".into()));
        }
        for (i, row) in self.p0.axis_iter(Axis(0)).enumerate() {
            if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::Config(format!("row {i} of P0 has a negative or non-finite entry")));
            }
            if (row.sum() - 1.0).abs() > 1e-6 {
                return Err(Error::Config(format!("row {i} of P0 sums to {}", row.sum())));
            }
        }
        if !(self.eps1 > 0.0) || !(self.eps2 > 0.0) || !(self.eps3 >= 0.0) {
            return Err(Error::Config(format!(
                "need eps1 > 0, eps2 > 0, eps3 >= 0 (got {}, {}, {})",
                self.eps1, self.eps2, self.eps3
            )));
        }
        if !self.eps1.is_finite() || !self.eps2.is_finite() || !self.eps3.is_finite() {
            return Err(Error::Config("regularization weights must be finite".into()));
        }
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return Err(Error::Config("T1 and T2 must be at least 1".into()));
        }
        Ok(())
    }
}

/// How the cluster marginal `b` is refreshed inside a dual sweep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalUpdate {
    /// Solve jointly for `(g, h, b)` given `f`: the column constraint and the
    /// stationarity of `b` hold simultaneously after every sweep. Converges
    /// for every `eps2 > 0`.
    #[default]
    Joint,
    /// Update `g` for the current `b`, then `b` from `g`. The map on `log b`
    /// contracts by `eps1 / eps2`, so it only converges when `eps2 > eps1`.
    Alternating,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    pub marginal_update: MarginalUpdate,
    /// Marginal residual (infinity norm) that ends the inner loop once the
    /// nominal sweep count has run.
    pub tolerance: f64,
    /// Hard cap on inner sweeps.
    pub max_inner_sweeps: usize,
    /// Stop the outer loop once the objective improves by less than this.
    pub early_stop: Option<f64>,
    /// Skip the kernel-space sweeps and always iterate on log-domain duals.
    pub log_domain_only: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            marginal_update: MarginalUpdate::Joint,
            tolerance: 1e-10,
            max_inner_sweeps: 20_000,
            early_stop: None,
            log_domain_only: false,
        }
    }
}

/// Solution of one inner (linearized) problem.
#[derive(Clone, Debug, PartialEq)]
pub struct InnerSolution {
    pub q: Array2<f64>,
    pub b: Array1<f64>,
    pub f: Array1<f64>,
    pub g: Array1<f64>,
    pub h: f64,
    pub sweeps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub q: Array2<f64>,
    pub b: Array1<f64>,
    pub f: Array1<f64>,
    pub g: Array1<f64>,
    pub h: f64,
    /// Objective after every outer iteration.
    pub objective_trace: Vec<f64>,
    /// Inner sweeps used by every outer iteration.
    pub inner_sweeps: Vec<usize>,
}

impl TransportPlan {
    pub fn row_residual(&self, a: ArrayView1<f64>) -> f64 {
        max_abs_diff(self.q.sum_axis(Axis(1)).view(), a)
    }

    pub fn col_residual(&self) -> f64 {
        max_abs_diff(self.q.sum_axis(Axis(0)).view(), self.b.view())
    }

    pub fn labels(&self) -> Vec<usize> {
        pseudo_labels(self.q.view())
    }
}

fn max_abs_diff(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    x.iter().zip(y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

/// `log(sum(exp(v)))` evaluated with the maximum shifted out.
pub(crate) fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Cosine similarity between every pair of rows.
pub fn similarity_matrix(p0: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = p0.nrows();
    let mut norms = Vec::with_capacity(n);
    for (i, row) in p0.axis_iter(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if !(norm > 0.0) {
            return Err(Error::Numeric(format!("row {i} of P0 has zero norm")));
        }
        norms.push(norm);
    }
    let mut s = Array2::zeros((n, n));
    for i in 0..n {
        s[[i, i]] = 1.0;
        for j in i + 1..n {
            let v = p0.row(i).dot(&p0.row(j)) / (norms[i] * norms[j]);
            s[[i, j]] = v;
            s[[j, i]] = v;
        }
    }
    Ok(s)
}

/// `-log(max(P0, floor))`
pub fn neg_log(p0: ArrayView2<f64>) -> Array2<f64> {
    p0.mapv(|p| -p.max(PROB_FLOOR).ln())
}

/// Linearized cost `-log P0 - eps3 (S + S^T) Q_prev` of one outer iteration.
pub fn surrogate_cost(p0: ArrayView2<f64>, s: ArrayView2<f64>, q_prev: ArrayView2<f64>, eps3: f64) -> Array2<f64> {
    let base = neg_log(p0);
    linearized_cost(base, s, q_prev, eps3)
}

fn linearized_cost(mut base: Array2<f64>, s: ArrayView2<f64>, q_prev: ArrayView2<f64>, eps3: f64) -> Array2<f64> {
    if eps3 != 0.0 {
        let sym = &s + &s.t();
        base.scaled_add(-eps3, &sym.dot(&q_prev));
    }
    base
}

/// `sum x log x` with `0 log 0 = 0`.
fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// Terms of the objective that do not involve the interaction matrix.
fn base_objective(q: ArrayView2<f64>, b: ArrayView1<f64>, p0: ArrayView2<f64>, eps1: f64, eps2: f64) -> f64 {
    let mut cost = 0.0;
    let mut neg_entropy = 0.0;
    for (&qv, &pv) in q.iter().zip(p0.iter()) {
        if qv != 0.0 {
            cost += qv * -pv.max(PROB_FLOOR).ln();
        }
        neg_entropy += xlogx(qv) - qv;
    }
    let b_pen: f64 = b.iter().map(|&v| xlogx(v)).sum();
    cost + eps1 * neg_entropy + eps2 * b_pen
}

/// `<S, Q Q^T>`
pub fn interaction(q: ArrayView2<f64>, s: ArrayView2<f64>) -> f64 {
    (&s.dot(&q) * &q).sum()
}

/// Entropy `H(Q) = -<Q, log Q - 1>`.
pub fn plan_entropy(q: ArrayView2<f64>) -> f64 {
    -q.iter().map(|&v| xlogx(v) - v).sum::<f64>()
}

/// Value of the IEOT objective at `(Q, b)`.
pub fn objective(
    q: ArrayView2<f64>,
    b: ArrayView1<f64>,
    p0: ArrayView2<f64>,
    s: ArrayView2<f64>,
    eps1: f64,
    eps2: f64,
    eps3: f64,
) -> f64 {
    let mut value = base_objective(q, b, p0, eps1, eps2);
    if eps3 != 0.0 {
        value -= eps3 * interaction(q, s);
    }
    value
}

/// The majorizer used at expansion point `q_prev`: the interaction term
/// replaced by its first-order expansion.
#[allow(clippy::too_many_arguments)]
pub fn surrogate_objective(
    q: ArrayView2<f64>,
    b: ArrayView1<f64>,
    q_prev: ArrayView2<f64>,
    p0: ArrayView2<f64>,
    s: ArrayView2<f64>,
    eps1: f64,
    eps2: f64,
    eps3: f64,
) -> f64 {
    let sym = &s + &s.t();
    let grad = sym.dot(&q_prev);
    let tangent = (&grad * &(&q - &q_prev)).sum() + interaction(q_prev, s);
    base_objective(q, b, p0, eps1, eps2) - eps3 * tangent
}

fn check_finite(what: &str, sweep: usize, values: impl IntoIterator<Item = f64>) -> Result<()> {
    if values.into_iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite dual variable {what} in inner sweep {sweep}"
        )));
    }
    Ok(())
}

fn plan_from_duals(m: ArrayView2<f64>, f: &Array1<f64>, g: &Array1<f64>, eps1: f64) -> Array2<f64> {
    let mut q = m.to_owned();
    for ((i, j), v) in q.indexed_iter_mut() {
        *v = ((f[i] + g[j] - *v) / eps1).exp();
    }
    q
}

/// Largest `(max_j M_ij - min_j M_ij) / eps1` for which the row-scaled
/// kernel stays far from underflow.
const KERNEL_RANGE_LIMIT: f64 = 600.0;

/// Minimizes `<Q, M> + eps1 <Q, log Q - 1> + eps2 <b, log b>` subject to the
/// marginal constraints by alternating dual updates.
///
/// Runs `nominal_sweeps` sweeps, then keeps sweeping while either marginal
/// residual exceeds `opts.tolerance`, up to `opts.max_inner_sweeps`. The
/// sweeps run on scalings of a row-stabilized kernel when its dynamic range
/// allows and on log-domain duals otherwise; both follow the same updates.
pub fn inner_solve(
    m: ArrayView2<f64>,
    a: ArrayView1<f64>,
    eps1: f64,
    eps2: f64,
    nominal_sweeps: usize,
    b_init: ArrayView1<f64>,
    opts: &SolverOptions,
) -> Result<InnerSolution> {
    inner_solve_warm(m, a, eps1, eps2, nominal_sweeps, b_init, None, opts)
}

/// [`inner_solve`] starting from column duals `g_init` instead of zero.
#[allow(clippy::too_many_arguments)]
pub fn inner_solve_warm(
    m: ArrayView2<f64>,
    a: ArrayView1<f64>,
    eps1: f64,
    eps2: f64,
    nominal_sweeps: usize,
    b_init: ArrayView1<f64>,
    g_init: Option<ArrayView1<f64>>,
    opts: &SolverOptions,
) -> Result<InnerSolution> {
    let (n, k) = m.dim();
    if a.len() != n || b_init.len() != k || g_init.is_some_and(|g| g.len() != k) {
        return Err(Error::Shape(format!(
            "cost is {n}x{k}, marginals have {} and {} entries",
            a.len(),
            b_init.len()
        )));
    }
    let g0 = g_init.map_or_else(|| Array1::zeros(k), |g| g.to_owned());
    if !opts.log_domain_only {
        if let Some(sol) = inner_solve_kernel(m, a, eps1, eps2, nominal_sweeps, b_init, &g0, opts) {
            return Ok(sol);
        }
    }
    inner_solve_log(m, a, eps1, eps2, nominal_sweeps, b_init, g0, opts)
}

/// Kernel-space sweeps. With `K_ij = exp(-(M_ij - min_j M_ij) / eps1)` the
/// duals are carried as `alpha_i = exp((f_i - min_j M_ij) / eps1)` and
/// `v_j = exp(g_j / eps1)`, so `Q = diag(alpha) K diag(v)`. Returns `None`
/// when the kernel range is too wide or a scaling leaves the finite
/// positive range.
fn inner_solve_kernel(
    m: ArrayView2<f64>,
    a: ArrayView1<f64>,
    eps1: f64,
    eps2: f64,
    nominal_sweeps: usize,
    b_init: ArrayView1<f64>,
    g_init: &Array1<f64>,
    opts: &SolverOptions,
) -> Option<InnerSolution> {
    let (n, k) = m.dim();
    let row_min: Vec<f64> = m
        .axis_iter(Axis(0))
        .map(|r| r.fold(f64::INFINITY, |x, &v| x.min(v)))
        .collect();
    let mut kernel = m.to_owned();
    for (i, mut row) in kernel.axis_iter_mut(Axis(0)).enumerate() {
        let range = row.fold(f64::NEG_INFINITY, |x, &v| x.max(v)) - row_min[i];
        if !(range / eps1 <= KERNEL_RANGE_LIMIT) {
            return None;
        }
        row.mapv_inplace(|v| (-(v - row_min[i]) / eps1).exp());
    }
    let kern = kernel.as_slice().expect("owned arrays are contiguous");
    let usable = |v: f64| v.is_finite() && v > 0.0;
    let joint_exponent = eps1 / (eps1 + eps2);
    let max_sweeps = opts.max_inner_sweeps.max(nominal_sweeps);

    let mut alpha = vec![0.0; n];
    let mut v: Vec<f64> = g_init.iter().map(|g| (g / eps1).exp()).collect();
    let mut col = vec![0.0; k];
    let mut b = b_init.to_owned();
    let mut g = g_init.clone();
    let mut h;
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        col.fill(0.0);
        for (i, row) in kern.chunks_exact(k).enumerate() {
            let s: f64 = row.iter().zip(&v).map(|(kv, vv)| kv * vv).sum();
            alpha[i] = a[i] / s;
            for (c, kv) in col.iter_mut().zip(row) {
                *c += alpha[i] * kv;
            }
        }
        if !alpha.iter().chain(&col).all(|&x| usable(x)) {
            return None;
        }
        let ln_col: Vec<f64> = col.iter().map(|c| c.ln()).collect();

        if opts.marginal_update == MarginalUpdate::Joint {
            let scaled: Vec<f64> = ln_col.iter().map(|u| joint_exponent * u).collect();
            let norm = log_sum_exp(scaled.iter().copied());
            for j in 0..k {
                g[j] = eps1 * ((scaled[j] - norm) - ln_col[j]);
            }
        } else {
            for j in 0..k {
                g[j] = eps1 * b[j].ln() - eps1 * ln_col[j];
            }
        }
        h = -eps2 * log_sum_exp(g.iter().map(|&gj| (-gj - eps2) / eps2));
        for j in 0..k {
            v[j] = (g[j] / eps1).exp();
            b[j] = ((h - g[j] - eps2) / eps2).exp();
        }
        if !h.is_finite() || !v.iter().chain(b.iter()).all(|&x| usable(x)) {
            return None;
        }

        if sweeps >= nominal_sweeps {
            if sweeps >= max_sweeps {
                break;
            }
            let mut row_res = 0.0f64;
            col.fill(0.0);
            for (i, row) in kern.chunks_exact(k).enumerate() {
                let mut s = 0.0;
                for j in 0..k {
                    let q = alpha[i] * row[j] * v[j];
                    s += q;
                    col[j] += q;
                }
                row_res = row_res.max((s - a[i]).abs());
            }
            let col_res = (0..k).fold(0.0f64, |x, j| x.max((col[j] - b[j]).abs()));
            if row_res <= opts.tolerance && col_res <= opts.tolerance {
                break;
            }
        }
    }
    let f = Array1::from_shape_fn(n, |i| row_min[i] + eps1 * alpha[i].ln());
    let q = plan_from_duals(m, &f, &g, eps1);
    Some(InnerSolution { q, b, f, g, h, sweeps })
}

#[allow(clippy::too_many_arguments)]
fn inner_solve_log(
    m: ArrayView2<f64>,
    a: ArrayView1<f64>,
    eps1: f64,
    eps2: f64,
    nominal_sweeps: usize,
    b_init: ArrayView1<f64>,
    g_init: Array1<f64>,
    opts: &SolverOptions,
) -> Result<InnerSolution> {
    let (n, k) = m.dim();
    let ln_a: Vec<f64> = a.iter().map(|v| v.ln()).collect();
    let mut f = Array1::<f64>::zeros(n);
    let mut g = g_init;
    let mut b = b_init.to_owned();
    let mut h;
    let joint_exponent = eps1 / (eps1 + eps2);
    let max_sweeps = opts.max_inner_sweeps.max(nominal_sweeps);

    let mut sweeps = 0;
    loop {
        sweeps += 1;
        for i in 0..n {
            let row = m.row(i);
            let lse = log_sum_exp((0..k).map(|j| (g[j] - row[j]) / eps1));
            f[i] = eps1 * ln_a[i] - eps1 * lse;
        }
        check_finite("f", sweeps, f.iter().copied())?;

        // log of the column sums of exp((f - M) / eps1)
        let col_lse: Vec<f64> = (0..k)
            .map(|j| log_sum_exp((0..n).map(|i| (f[i] - m[[i, j]]) / eps1)))
            .collect();

        if opts.marginal_update == MarginalUpdate::Joint {
            let scaled: Vec<f64> = col_lse.iter().map(|u| joint_exponent * u).collect();
            let norm = log_sum_exp(scaled.iter().copied());
            for j in 0..k {
                g[j] = eps1 * ((scaled[j] - norm) - col_lse[j]);
            }
        } else {
            for j in 0..k {
                g[j] = eps1 * b[j].ln() - eps1 * col_lse[j];
            }
        }
        check_finite("g", sweeps, g.iter().copied())?;

        h = -eps2 * log_sum_exp(g.iter().map(|&gj| (-gj - eps2) / eps2));
        for j in 0..k {
            b[j] = ((h - g[j] - eps2) / eps2).exp();
        }
        check_finite("h", sweeps, std::iter::once(h))?;
        if b.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Numeric(format!(
                "cluster marginal underflowed in inner sweep {sweeps}"
            )));
        }

        if sweeps >= nominal_sweeps {
            if sweeps >= max_sweeps {
                break;
            }
            let q = plan_from_duals(m, &f, &g, eps1);
            let row_res = max_abs_diff(q.sum_axis(Axis(1)).view(), a);
            let col_res = max_abs_diff(q.sum_axis(Axis(0)).view(), b.view());
            if row_res <= opts.tolerance && col_res <= opts.tolerance {
                break;
            }
        }
    }
    let q = plan_from_duals(m, &f, &g, eps1);
    Ok(InnerSolution { q, b, f, g, h, sweeps })
}

/// Majorization-minimization over the interaction term. `b0` is drawn
/// uniformly from `rng` and normalized; `Q0 = a b0^T`.
pub fn mm_solve<R: Rng + ?Sized>(problem: &TransportProblem, opts: &SolverOptions, rng: &mut R) -> Result<TransportPlan> {
    problem.validate()?;
    let k = problem.p0.ncols();
    let mut b0 = Array1::from_shape_simple_fn(k, || rng.random::<f64>() + f64::MIN_POSITIVE);
    b0 /= b0.sum();
    mm_solve_from(problem, opts, b0)
}

/// [`mm_solve`] with an explicit initial cluster marginal.
pub fn mm_solve_from(problem: &TransportProblem, opts: &SolverOptions, b0: Array1<f64>) -> Result<TransportPlan> {
    problem.validate()?;
    let p0 = problem.p0.view();
    let s = similarity_matrix(p0)?;
    let base_cost = neg_log(p0);
    let a = problem.a.view();
    let mut q = a
        .to_owned()
        .insert_axis(Axis(1))
        .dot(&b0.view().insert_axis(Axis(0)));
    let mut b = b0;
    let mut trace = Vec::with_capacity(problem.outer_iters);
    let mut sweeps = Vec::with_capacity(problem.outer_iters);
    let mut last = None;
    for _ in 0..problem.outer_iters {
        let m = linearized_cost(base_cost.clone(), s.view(), q.view(), problem.eps3);
        let warm = last.as_ref().map(|prev: &InnerSolution| prev.g.view());
        let sol = inner_solve_warm(
            m.view(),
            a,
            problem.eps1,
            problem.eps2,
            problem.inner_iters,
            b.view(),
            warm,
            opts,
        )?;
        q = sol.q.clone();
        b = sol.b.clone();
        let value = objective(q.view(), b.view(), p0, s.view(), problem.eps1, problem.eps2, problem.eps3);
        let prev = trace.last().copied();
        trace.push(value);
        sweeps.push(sol.sweeps);
        last = Some(sol);
        if let (Some(tol), Some(prev)) = (opts.early_stop, prev) {
            if prev - value < tol {
                break;
            }
        }
    }
    let sol = last.expect("at least one outer iteration");
    Ok(TransportPlan {
        q: sol.q,
        b: sol.b,
        f: sol.f,
        g: sol.g,
        h: sol.h,
        objective_trace: trace,
        inner_sweeps: sweeps,
    })
}

/// Row-wise argmax; ties go to the lowest column.
pub fn pseudo_labels(q: ArrayView2<f64>) -> Vec<usize> {
    q.axis_iter(Axis(0))
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Problem file accepted by the `solve-ot` command.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    #[serde(rename = "P0")]
    pub p0: ProbabilityRows,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    #[serde(rename = "T1")]
    pub t1: usize,
    #[serde(rename = "T2")]
    pub t2: usize,
    pub seed: u64,
    /// Cluster count, required when `P0` is given flat.
    #[serde(default, rename = "K", skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

/// `P0` as nested rows or as a flat row-major array.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProbabilityRows {
    Nested(Vec<Vec<f64>>),
    Flat(Vec<f64>),
}

impl ProblemFile {
    pub fn matrix(&self) -> Result<Array2<f64>> {
        match &self.p0 {
            ProbabilityRows::Nested(rows) => {
                let k = rows.first().map(Vec::len).unwrap_or(0);
                if let Some(bad) = rows.iter().position(|r| r.len() != k) {
                    return Err(Error::Shape(format!("row {bad} of P0 has length {}, expected {k}", rows[bad].len())));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Ok(Array2::from_shape_vec((rows.len(), k), flat).expect("checked"))
            }
            ProbabilityRows::Flat(vals) => {
                let k = self
                    .k
                    .ok_or_else(|| Error::Config("flat P0 needs the cluster count K".into()))?;
                if k == 0 || vals.len() % k != 0 {
                    return Err(Error::Shape(format!("{} values do not form rows of length {k}", vals.len())));
                }
                Ok(Array2::from_shape_vec((vals.len() / k, k), vals.clone()).expect("checked"))
            }
        }
    }

    pub fn problem(&self) -> Result<TransportProblem> {
        TransportProblem::new(self.matrix()?, self.eps1, self.eps2, self.eps3, self.t1, self.t2)
    }
}

/// Output written by the `solve-ot` command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanFile {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub objective_trace: Vec<f64>,
    pub labels: Vec<usize>,
}

impl From<&TransportPlan> for PlanFile {
    fn from(plan: &TransportPlan) -> Self {
        Self {
            q: plan.q.axis_iter(Axis(0)).map(|r| r.to_vec()).collect(),
            b: plan.b.to_vec(),
            objective_trace: plan.objective_trace.clone(),
            labels: plan.labels(),
        }
    }
}
