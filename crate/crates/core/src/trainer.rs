//! Two-stage training loop: supervised and pseudo-label cross-entropy plus
//! instance contrast for the first `E_first` iterations, then the
//! center-aware contrastive term on top.

use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::centers::{ema_merge, reliability_mask, update_centers, CenterBank};
use crate::data::{Batch, BatchSampler, EmbeddingDataset};
use crate::error::{Error, Result};
use crate::eval::{hungarian_accuracy, nmi, predicted_cluster_count, MetricsRecord};
use crate::ieot::{mm_solve, pseudo_labels, SolverOptions, TransportPlan, TransportProblem};
use crate::losses::{self, InstanceDenominator};
use crate::model::{adam_step, AdamState, ModelParams};

const EVAL_CHUNK: usize = 512;

/// How cluster assignments are read off at evaluation time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// `argmax_j P_ij` of the classifier.
    #[default]
    ClassifierArgmax,
    /// `argmax_j Q_ij` of a transport plan solved over the whole dataset.
    Transport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub lambda: f64,
    #[serde(rename = "T1")]
    pub t1: usize,
    #[serde(rename = "T2")]
    pub t2: usize,
    #[serde(rename = "B")]
    pub b: usize,
    #[serde(rename = "mu_B")]
    pub mu_b: usize,
    #[serde(rename = "D")]
    pub proj_dim: usize,
    pub hidden: usize,
    #[serde(rename = "T_P")]
    pub t_p: f64,
    #[serde(rename = "T_I")]
    pub t_i: f64,
    #[serde(rename = "E_total")]
    pub e_total: usize,
    #[serde(rename = "E_first")]
    pub e_first: usize,
    pub lr: f64,
    pub tau: f64,
    /// Defaults to 5% of the mean row norm of the dataset.
    pub sigma_aug: Option<f64>,
    pub seed: u64,
    pub eval_every: usize,
    pub instance_denominator: InstanceDenominator,
    /// Decay of an exponential moving average over center updates; `None`
    /// replaces the centers every iteration.
    pub center_ema: Option<f64>,
    pub solver: SolverOptions,
    pub eval_mode: EvalMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            eps1: 1.0,
            eps2: 1000.0,
            eps3: 25.0,
            lambda: 5.0,
            t1: 10,
            t2: 10,
            b: 15,
            mu_b: 200,
            proj_dim: 128,
            hidden: 128,
            t_p: 1.0,
            t_i: 1.0,
            e_total: 1500,
            e_first: 1000,
            lr: 5e-4,
            tau: 0.95,
            sigma_aug: None,
            seed: 0,
            eval_every: 100,
            instance_denominator: InstanceDenominator::default(),
            center_ema: None,
            solver: SolverOptions::default(),
            eval_mode: EvalMode::default(),
        }
    }
}

impl TrainConfig {
    /// Reads a JSON or TOML (by `.toml` extension) config file; missing
    /// fields take their defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(&text)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.eps1 > 0.0 && self.eps2 > 0.0) {
            return fail(format!("eps1 and eps2 must be positive, got {} and {}", self.eps1, self.eps2));
        }
        if !(self.eps3 >= 0.0 && self.lambda >= 0.0) {
            return fail(format!("eps3 and lambda must be non-negative, got {} and {}", self.eps3, self.lambda));
        }
        if self.t1 == 0 || self.t2 == 0 {
            return fail("T1 and T2 must be at least 1".into());
        }
        if self.b == 0 {
            return fail("B must be at least 1".into());
        }
        if self.mu_b < 2 {
            return fail(format!("mu_B must be at least 2, got {}", self.mu_b));
        }
        if self.proj_dim == 0 || self.hidden == 0 {
            return fail("D and hidden must be at least 1".into());
        }
        if !(self.t_p > 0.0 && self.t_i > 0.0) {
            return fail("temperatures must be positive".into());
        }
        if self.e_first > self.e_total {
            return fail(format!("E_first ({}) exceeds E_total ({})", self.e_first, self.e_total));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return fail(format!("lr must be finite and non-negative, got {}", self.lr));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return fail(format!("tau must lie in [0, 1], got {}", self.tau));
        }
        if let Some(s) = self.sigma_aug {
            if !(s >= 0.0 && s.is_finite()) {
                return fail(format!("sigma_aug must be finite and non-negative, got {s}"));
            }
        }
        if let Some(d) = self.center_ema {
            if !(0.0..1.0).contains(&d) {
                return fail(format!("center_ema must lie in [0, 1), got {d}"));
            }
        }
        if self.eval_every == 0 {
            return fail("eval_every must be at least 1".into());
        }
        if !(self.solver.tolerance > 0.0) || self.solver.max_inner_sweeps == 0 {
            return fail("solver tolerance and max_inner_sweeps must be positive".into());
        }
        Ok(())
    }

    /// Copy with `sigma_aug` filled in for `ds`.
    pub fn resolved(&self, ds: &EmbeddingDataset) -> Self {
        let mut out = self.clone();
        out.sigma_aug = Some(self.sigma_aug.unwrap_or(0.05 * ds.mean_row_norm()));
        out
    }
}

/// Loss values of one iteration; `l_p` is `None` in the first stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iter: usize,
    pub l_x: f64,
    pub l_c: f64,
    pub l_i: f64,
    pub l_p: Option<f64>,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct TrainState {
    pub params: ModelParams,
    pub adam: AdamState,
    pub bank: CenterBank,
    /// Number of completed iterations.
    pub iter: usize,
    pub rng: ChaCha8Rng,
    pub metrics_log: Vec<MetricsRecord>,
    pub loss_log: Vec<LossRecord>,
}

impl TrainState {
    /// Fresh parameters for `ds`, seeded from `config.seed`.
    pub fn new(config: &TrainConfig, ds: &EmbeddingDataset) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = ModelParams::init(ds.dim(), config.hidden, ds.k, config.proj_dim, &mut rng);
        let adam = AdamState::new(&params);
        Self {
            bank: CenterBank::empty(ds.k, config.proj_dim),
            params,
            adam,
            iter: 0,
            rng,
            metrics_log: Vec::new(),
            loss_log: Vec::new(),
        }
    }
}

fn check_finite(iter: usize, record: &LossRecord, plan: &TransportPlan) -> Result<()> {
    let values = [record.l_x, record.l_c, record.l_i, record.l_p.unwrap_or(0.0), record.total];
    if values.iter().all(|v| v.is_finite()) {
        return Ok(());
    }
    let inf_norm = |v: &ndarray::Array1<f64>| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Err(Error::Numeric(format!(
        "non-finite loss at iteration {iter}: L_X={} L_C={} L_I={} L_P={:?} total={}; \
         transport duals |f|={:.3e} |g|={:.3e} h={:.3e}, last objective {:?}",
        record.l_x,
        record.l_c,
        record.l_i,
        record.l_p,
        record.total,
        inf_norm(&plan.f),
        inf_norm(&plan.g),
        plan.h,
        plan.objective_trace.last()
    )))
}

/// Resets every center to the normalized mean projection of the labeled
/// samples of `ds` under the current parameters.
pub fn init_bank_from_labeled(state: &mut TrainState, ds: &EmbeddingDataset) -> Result<()> {
    let y = ds
        .y_true
        .as_ref()
        .ok_or_else(|| Error::Config("dataset has no labels".into()))?;
    let x = ds.x.select(Axis(0), &ds.labeled_idx);
    let labels: Vec<usize> = ds.labeled_idx.iter().map(|&i| y[i]).collect();
    let (z, _) = state.params.projector_forward(x.view())?;
    state.bank = CenterBank::from_labeled(z.view(), &labels, ds.k)?;
    Ok(())
}

/// One optimization step on `batch`. Iterations from `e_first` on add the
/// center-aware term and need a fully populated center bank.
pub fn train_iteration(state: &mut TrainState, batch: &Batch, config: &TrainConfig) -> Result<LossRecord> {
    let iter = state.iter;
    let second_stage = iter >= config.e_first;
    let params = &state.params;
    let lab = &batch.labeled;
    let unl = &batch.unlabeled;

    let (pl1, cl1) = params.classifier_forward(lab.view1.view())?;
    let (pl2, cl2) = params.classifier_forward(lab.view2.view())?;
    let l_x = losses::supervised_ce_loss(pl1.view(), pl2.view(), &lab.labels)?;

    let u0 = params.forward(unl.x0.view())?;
    let problem = TransportProblem::new(u0.p.clone(), config.eps1, config.eps2, config.eps3, config.t1, config.t2)?;
    let plan = mm_solve(&problem, &config.solver, &mut state.rng)?;
    let pseudo = pseudo_labels(plan.q.view());

    let u1 = params.forward(unl.view1.view())?;
    let u2 = params.forward(unl.view2.view())?;
    let l_c = losses::pseudo_ce_loss(u1.p.view(), u2.p.view(), &pseudo)?;
    let l_i = losses::instance_loss(u1.z.view(), u2.z.view(), config.t_i, config.instance_denominator)?;

    let mut dz1 = l_i.grads[0].clone();
    let mut dz2 = l_i.grads[1].clone();
    let l_p = if second_stage {
        if !state.bank.all_valid() {
            return Err(Error::Config(format!(
                "center bank is not initialized at iteration {iter}"
            )));
        }
        let out = losses::cacl_loss(u1.z.view(), u2.z.view(), state.bank.c.view(), &pseudo, config.t_p)?;
        dz1.scaled_add(config.lambda, &out.grads[0]);
        dz2.scaled_add(config.lambda, &out.grads[1]);
        Some(out.value)
    } else {
        None
    };

    let record = LossRecord {
        iter,
        l_x: l_x.value,
        l_c: l_c.value,
        l_i: l_i.value,
        l_p,
        total: losses::total_loss(iter, config.e_first, config.lambda, l_x.value, l_c.value, l_i.value, l_p.unwrap_or(0.0)),
    };
    check_finite(iter, &record, &plan)?;

    let grads = params.backward_all(&[
        (&cl1, Some(&l_x.grads[0]), None),
        (&cl2, Some(&l_x.grads[1]), None),
        (&u1.cache, Some(&l_c.grads[0]), Some(&dz1)),
        (&u2.cache, Some(&l_c.grads[1]), Some(&dz2)),
    ])?;
    if !grads.max_abs().is_finite() {
        return Err(Error::Numeric(format!("non-finite gradient at iteration {iter}")));
    }

    let (zl, _) = params.projector_forward(lab.x0.view())?;
    let mask = reliability_mask(u0.p.view(), config.tau);
    let fresh = update_centers(zl.view(), &lab.labels, u0.z.view(), &pseudo, &mask, &state.bank)?;
    state.bank = match config.center_ema {
        Some(decay) => ema_merge(&state.bank, &fresh, decay)?,
        None => fresh,
    };

    adam_step(&mut state.params, &grads, &mut state.adam, config.lr)?;
    state.iter += 1;
    state.loss_log.push(record.clone());
    Ok(record)
}

/// Classifier probabilities for every row of `x`, computed in parallel
/// chunks.
pub fn predict_proba(params: &ModelParams, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let starts: Vec<usize> = (0..x.nrows()).step_by(EVAL_CHUNK).collect();
    let parts = starts
        .par_iter()
        .map(|&s| {
            let end = (s + EVAL_CHUNK).min(x.nrows());
            params.classifier_forward(x.slice(ndarray::s![s..end, ..])).map(|(p, _)| p)
        })
        .collect::<Result<Vec<_>>>()?;
    if parts.is_empty() {
        return Ok(Array2::zeros((0, params.num_clusters())));
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))
}

/// Cluster assignment for every sample of `ds`.
pub fn predict(params: &ModelParams, ds: &EmbeddingDataset, config: &TrainConfig) -> Result<Vec<usize>> {
    let p = predict_proba(params, ds.x.view())?;
    match config.eval_mode {
        EvalMode::ClassifierArgmax => Ok(pseudo_labels(p.view())),
        EvalMode::Transport => {
            let problem = TransportProblem::new(p, config.eps1, config.eps2, config.eps3, config.t1, config.t2)?;
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_e7a1);
            Ok(mm_solve(&problem, &config.solver, &mut rng)?.labels())
        }
    }
}

/// Metrics of the current parameters on all of `ds`; accuracy and NMI are
/// present only when the dataset carries ground truth.
pub fn evaluate(params: &ModelParams, ds: &EmbeddingDataset, config: &TrainConfig, iter: usize) -> Result<MetricsRecord> {
    let yhat = predict(params, ds, config)?;
    let (acc, nmi_value) = match &ds.y_true {
        Some(y) => (Some(hungarian_accuracy(y, &yhat, ds.k)?), Some(nmi(y, &yhat)?)),
        None => (None, None),
    };
    Ok(MetricsRecord {
        iter,
        acc,
        nmi: nmi_value,
        predicted_clusters: predicted_cluster_count(&yhat),
    })
}

fn check_dataset(config: &TrainConfig, ds: &EmbeddingDataset) -> Result<()> {
    ds.validate()?;
    let y = ds
        .y_true
        .as_ref()
        .ok_or_else(|| Error::Config("training needs labels for the labeled pool".into()))?;
    let mut seen = vec![false; ds.k];
    for &i in &ds.labeled_idx {
        seen[y[i]] = true;
    }
    if config.e_first < config.e_total {
        if let Some(j) = seen.iter().position(|&s| !s) {
            return Err(Error::Config(format!("cluster {j} has no labeled sample")));
        }
    }
    Ok(())
}

/// Runs the full schedule, calling `hook` once before the first iteration
/// and after every iteration.
pub fn train_with_hook(
    config: &TrainConfig,
    ds: &EmbeddingDataset,
    mut hook: impl FnMut(&TrainState) -> Result<()>,
) -> Result<TrainState> {
    config.validate()?;
    check_dataset(config, ds)?;
    let config = config.resolved(ds);
    let sigma_aug = config.sigma_aug.expect("resolved");
    let sampler = BatchSampler::new(ds)?;
    let mut state = TrainState::new(&config, ds);
    state.metrics_log.push(evaluate(&state.params, ds, &config, 0)?);
    hook(&state)?;
    while state.iter < config.e_total {
        if state.iter == config.e_first {
            init_bank_from_labeled(&mut state, ds)?;
        }
        let batch = sampler.sample(ds, config.b, config.mu_b, sigma_aug, &mut state.rng);
        train_iteration(&mut state, &batch, &config)?;
        if state.iter.is_multiple_of(config.eval_every) || state.iter == config.e_total {
            let record = evaluate(&state.params, ds, &config, state.iter)?;
            state.metrics_log.push(record);
        }
        hook(&state)?;
    }
    Ok(state)
}

pub fn train(config: &TrainConfig, ds: &EmbeddingDataset) -> Result<TrainState> {
    train_with_hook(config, ds, |_| Ok(()))
}
