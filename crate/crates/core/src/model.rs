//! Trainable head: a shared first affine layer followed by a classifier
//! output (softmax over K clusters) and a projector output (D-dimensional
//! representation), with hand-written backward passes and Adam.
//!
//! Both heads are two-layer MLPs `d -> hidden -> out` with a ReLU between
//! the layers; the first layer is shared and plays the role of the encoder,
//! so projector-side losses also shape the classifier's input features.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::binio::{write_f64s, write_u64, SectionReader};
use crate::centers::CenterBank;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"IOCCCK01";

/// Hidden-layer nonlinearity. `Identity` exists for linearity tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    /// Shared input layer, `d x hidden`.
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    /// Classifier output layer, `hidden x K`.
    pub wc: Array2<f64>,
    pub bc: Array1<f64>,
    /// Projector output layer, `hidden x D`.
    pub wp: Array2<f64>,
    pub bp: Array1<f64>,
    pub activation: Activation,
}

/// Gradients (or optimizer moments) shaped exactly like [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub wc: Array2<f64>,
    pub bc: Array1<f64>,
    pub wp: Array2<f64>,
    pub bp: Array1<f64>,
}

pub const TENSOR_NAMES: [&str; 6] = ["w1", "b1", "wc", "bc", "wp", "bp"];

/// Activations retained by a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    x: Array2<f64>,
    pre: Array2<f64>,
    hidden: Array2<f64>,
    p: Option<Array2<f64>>,
}

impl ForwardCache {
    pub fn rows(&self) -> usize {
        self.x.nrows()
    }
}

/// A forward cache with the upstream gradients for `P` and `Z`.
pub type BackwardItem<'a> = (&'a ForwardCache, Option<&'a Array2<f64>>, Option<&'a Array2<f64>>);

/// Output of a combined forward pass through both heads.
#[derive(Clone, Debug)]
pub struct Forward {
    pub p: Array2<f64>,
    pub z: Array2<f64>,
    pub cache: ForwardCache,
}

/// Numerically stable row-wise softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Array2<f64> {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
    Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(rng))
}

impl ModelParams {
    /// Glorot-uniform weights and zero biases.
    pub fn init<R: Rng + ?Sized>(d: usize, hidden: usize, k: usize, proj_dim: usize, rng: &mut R) -> Self {
        Self {
            w1: glorot(d, hidden, rng),
            b1: Array1::zeros(hidden),
            wc: glorot(hidden, k, rng),
            bc: Array1::zeros(k),
            wp: glorot(hidden, proj_dim, rng),
            bp: Array1::zeros(proj_dim),
            activation: Activation::Relu,
        }
    }

    pub fn zeros(d: usize, hidden: usize, k: usize, proj_dim: usize) -> Self {
        Self {
            w1: Array2::zeros((d, hidden)),
            b1: Array1::zeros(hidden),
            wc: Array2::zeros((hidden, k)),
            bc: Array1::zeros(k),
            wp: Array2::zeros((hidden, proj_dim)),
            bp: Array1::zeros(proj_dim),
            activation: Activation::Relu,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn num_clusters(&self) -> usize {
        self.wc.ncols()
    }

    pub fn proj_dim(&self) -> usize {
        self.wp.ncols()
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn trunk(&self, x: ArrayView2<f64>) -> (Array2<f64>, Array2<f64>) {
        let pre = x.dot(&self.w1) + &self.b1;
        let hidden = match self.activation {
            Activation::Relu => pre.mapv(|v| v.max(0.0)),
            Activation::Identity => pre.clone(),
        };
        (pre, hidden)
    }

    /// Runs both heads on `x`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Forward> {
        self.check_input(x)?;
        let (pre, hidden) = self.trunk(x);
        let p = softmax_rows(&(hidden.dot(&self.wc) + &self.bc));
        let z = hidden.dot(&self.wp) + &self.bp;
        Ok(Forward {
            cache: ForwardCache {
                x: x.to_owned(),
                pre,
                hidden,
                p: Some(p.clone()),
            },
            p,
            z,
        })
    }

    /// Row-stochastic classifier output `P`.
    pub fn classifier_forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(x)?;
        let (pre, hidden) = self.trunk(x);
        let p = softmax_rows(&(hidden.dot(&self.wc) + &self.bc));
        let cache = ForwardCache {
            x: x.to_owned(),
            pre,
            hidden,
            p: Some(p.clone()),
        };
        Ok((p, cache))
    }

    /// Unnormalized projector output `Z`.
    pub fn projector_forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(x)?;
        let (pre, hidden) = self.trunk(x);
        let z = hidden.dot(&self.wp) + &self.bp;
        let cache = ForwardCache {
            x: x.to_owned(),
            pre,
            hidden,
            p: None,
        };
        Ok((z, cache))
    }

    /// Accumulates the parameter gradients of a scalar loss into `grads`,
    /// given the loss gradients with respect to `P` and/or `Z` of the
    /// forward pass that produced `cache`.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_p: Option<&Array2<f64>>,
        d_z: Option<&Array2<f64>>,
        grads: &mut ParamGrads,
    ) -> Result<()> {
        let n = cache.rows();
        let mut d_hidden = Array2::<f64>::zeros((n, self.hidden_dim()));
        if let Some(d_p) = d_p {
            let p = cache
                .p
                .as_ref()
                .ok_or_else(|| Error::Shape("cache has no classifier output".into()))?;
            if d_p.dim() != p.dim() {
                return Err(Error::Shape(format!(
                    "dP is {:?}, classifier output is {:?}",
                    d_p.dim(),
                    p.dim()
                )));
            }
            // softmax Jacobian-vector product: p * (dp - <dp, p>)
            let inner = (d_p * p).sum_axis(Axis(1)).insert_axis(Axis(1));
            let d_logits = p * &(d_p - &inner);
            grads.wc += &cache.hidden.t().dot(&d_logits);
            grads.bc += &d_logits.sum_axis(Axis(0));
            d_hidden += &d_logits.dot(&self.wc.t());
        }
        if let Some(d_z) = d_z {
            if d_z.dim() != (n, self.proj_dim()) {
                return Err(Error::Shape(format!(
                    "dZ is {:?}, projector output is {:?}",
                    d_z.dim(),
                    (n, self.proj_dim())
                )));
            }
            grads.wp += &cache.hidden.t().dot(d_z);
            grads.bp += &d_z.sum_axis(Axis(0));
            d_hidden += &d_z.dot(&self.wp.t());
        }
        if self.activation == Activation::Relu {
            Zip::from(&mut d_hidden)
                .and(&cache.pre)
                .for_each(|g, &pre| {
                    if pre <= 0.0 {
                        *g = 0.0;
                    }
                });
        }
        grads.w1 += &cache.x.t().dot(&d_hidden);
        grads.b1 += &d_hidden.sum_axis(Axis(0));
        Ok(())
    }

    /// Gradients of several forward passes, summed.
    pub fn backward_all(
        &self,
        items: &[BackwardItem<'_>],
    ) -> Result<ParamGrads> {
        let mut grads = ParamGrads::zeros_like(self);
        for (cache, d_p, d_z) in items {
            self.backward(cache, *d_p, *d_z, &mut grads)?;
        }
        Ok(grads)
    }

    pub fn slices(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.wc.as_slice().expect("standard layout"),
            self.bc.as_slice().expect("standard layout"),
            self.wp.as_slice().expect("standard layout"),
            self.bp.as_slice().expect("standard layout"),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.wc.as_slice_mut().expect("standard layout"),
            self.bc.as_slice_mut().expect("standard layout"),
            self.wp.as_slice_mut().expect("standard layout"),
            self.bp.as_slice_mut().expect("standard layout"),
        ]
    }
}

impl ParamGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            w1: Array2::zeros(params.w1.raw_dim()),
            b1: Array1::zeros(params.b1.raw_dim()),
            wc: Array2::zeros(params.wc.raw_dim()),
            bc: Array1::zeros(params.bc.raw_dim()),
            wp: Array2::zeros(params.wp.raw_dim()),
            bp: Array1::zeros(params.bp.raw_dim()),
        }
    }

    pub fn slices(&self) -> [&[f64]; 6] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.wc.as_slice().expect("standard layout"),
            self.bc.as_slice().expect("standard layout"),
            self.wp.as_slice().expect("standard layout"),
            self.bp.as_slice().expect("standard layout"),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.wc.as_slice_mut().expect("standard layout"),
            self.bc.as_slice_mut().expect("standard layout"),
            self.wp.as_slice_mut().expect("standard layout"),
            self.bp.as_slice_mut().expect("standard layout"),
        ]
    }

    fn congruent(&self, params: &ModelParams) -> bool {
        self.w1.dim() == params.w1.dim()
            && self.b1.dim() == params.b1.dim()
            && self.wc.dim() == params.wc.dim()
            && self.bc.dim() == params.bc.dim()
            && self.wp.dim() == params.wp.dim()
            && self.bp.dim() == params.bp.dim()
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &ParamGrads, scale: f64) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += scale * b;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: ParamGrads,
    pub v: ParamGrads,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self::with_constants(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_constants(params: &ModelParams, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            m: ParamGrads::zeros_like(params),
            v: ParamGrads::zeros_like(params),
            t: 0,
            beta1,
            beta2,
            eps,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut ModelParams, grads: &ParamGrads, state: &mut AdamState, lr: f64) -> Result<()> {
    if !grads.congruent(params) || !state.m.congruent(params) || !state.v.congruent(params) {
        return Err(Error::Shape("gradient or optimizer state does not match parameters".into()));
    }
    state.t += 1;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    let AdamState { m, v, .. } = state;
    for (((w, g), m), v) in params
        .slices_mut()
        .into_iter()
        .zip(grads.slices())
        .zip(m.slices_mut())
        .zip(v.slices_mut())
    {
        for i in 0..w.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * g[i];
            v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Contents of a checkpoint file.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub adam: AdamState,
    pub bank: Option<CenterBank>,
}

pub fn write_checkpoint<W: Write>(
    w: &mut W,
    params: &ModelParams,
    adam: &AdamState,
    bank: Option<&CenterBank>,
) -> Result<()> {
    w.write_all(&CHECKPOINT_MAGIC)?;
    for dim in [
        params.input_dim(),
        params.hidden_dim(),
        params.num_clusters(),
        params.proj_dim(),
    ] {
        write_u64(w, dim as u64)?;
    }
    write_u64(w, matches!(params.activation, Activation::Identity) as u64)?;
    for s in params.slices() {
        write_f64s(w, s)?;
    }
    write_u64(w, adam.t)?;
    write_f64s(w, &[adam.beta1, adam.beta2, adam.eps])?;
    for s in adam.m.slices().into_iter().chain(adam.v.slices()) {
        write_f64s(w, s)?;
    }
    match bank {
        None => write_u64(w, 0)?,
        Some(bank) => {
            write_u64(w, 1)?;
            write_u64(w, bank.c.nrows() as u64)?;
            write_u64(w, bank.c.ncols() as u64)?;
            write_f64s(w, bank.c.iter())?;
            for &v in &bank.valid {
                write_u64(w, v as u64)?;
            }
            for &c in &bank.count_last {
                write_u64(w, c as u64)?;
            }
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Checkpoint> {
    let mut r = SectionReader::new(r);
    if r.bytes::<8>("magic")? != CHECKPOINT_MAGIC {
        return Err(Error::parse("magic", 0, "not an IOCCCK01 checkpoint"));
    }
    let d = r.usize("shape")?;
    let hidden = r.usize("shape")?;
    let k = r.usize("shape")?;
    let proj = r.usize("shape")?;
    let activation = match r.u64("shape")? {
        0 => Activation::Relu,
        1 => Activation::Identity,
        other => return Err(Error::parse("shape", 32, format!("unknown activation {other}"))),
    };
    let mut params = ModelParams::zeros(d, hidden, k, proj);
    params.activation = activation;
    for s in params.slices_mut() {
        let vals = r.f64_vec(s.len(), "weights")?;
        s.copy_from_slice(&vals);
    }
    let mut adam = AdamState::new(&params);
    adam.t = r.u64("adam")?;
    adam.beta1 = r.f64("adam")?;
    adam.beta2 = r.f64("adam")?;
    adam.eps = r.f64("adam")?;
    for s in adam.m.slices_mut().into_iter() {
        let vals = r.f64_vec(s.len(), "adam")?;
        s.copy_from_slice(&vals);
    }
    for s in adam.v.slices_mut().into_iter() {
        let vals = r.f64_vec(s.len(), "adam")?;
        s.copy_from_slice(&vals);
    }
    let bank = match r.u64("centers")? {
        0 => None,
        1 => {
            let bk = r.usize("centers")?;
            let bd = r.usize("centers")?;
            if bk != k || bd != proj {
                return Err(Error::parse(
                    "centers",
                    r.offset(),
                    format!("center bank {bk}x{bd} does not match model {k}x{proj}"),
                ));
            }
            let c = Array2::from_shape_vec((bk, bd), r.f64_vec(bk * bd, "centers")?)
                .expect("length checked");
            let mut valid = Vec::with_capacity(bk);
            for _ in 0..bk {
                valid.push(r.u64("centers")? != 0);
            }
            let mut count_last = Vec::with_capacity(bk);
            for _ in 0..bk {
                count_last.push(r.usize("centers")?);
            }
            Some(CenterBank {
                c,
                valid,
                count_last,
            })
        }
        other => return Err(Error::parse("centers", r.offset(), format!("bad flag {other}"))),
    };
    r.expect_eof("centers")?;
    Ok(Checkpoint { params, adam, bank })
}
