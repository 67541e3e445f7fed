//! Fourier neural operator mapping a coarse state to its subgrid correction.
//!
//! ```text
//! v_0     = P x + b_P
//! v_{i+1} = relu(W_i v_i + b_{W,i} + IDFT(R_i . DFT(v_i)))
//! out     = Q v_{n_d} + b_Q
//! ```
//!
//! `P`, `W_i`, `Q` act pointwise on the channel axis; `R_i` mixes channels
//! independently for each retained Fourier mode. Nothing depends on the grid
//! size, so weights trained at one resolution evaluate at any other with
//! `k_max <= n/2 + 1`.

use std::path::Path;

use num_complex::Complex;
use rand::RngExt;
use thiserror::Error;

use crate::container::{Block, Container, ContainerError, DType};
use crate::dataset::Dataset;
use crate::optim::{Adam, AdamConfig, LossPoint, StepLr};
use crate::rng::{derive_seed, rng_from_seed, shuffle, Stream};
use crate::scalar::{from_f64_slice, to_f64_vec, Scalar};
use crate::tensor::{
    complex_as_real, matmul_nt_bias, max_modes, ComplexTensor, RealTensor, SpectralPlan,
    SpectralScratch, Tape, TensorError, Value, Var,
};

#[derive(Debug, Error)]
pub enum FnoError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{k_max} retained modes do not fit a grid of {n} points")]
    Modes { k_max: usize, n: usize },
    #[error("input of length {got} does not match grid size {expected}")]
    Shape { expected: usize, got: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: u64 },
    #[error(transparent)]
    Container(#[from] ContainerError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FnoConfig {
    /// Hidden channel count.
    pub n_v: usize,
    /// Retained Fourier modes per layer.
    pub k_max: usize,
    /// Number of Fourier layers.
    pub n_d: usize,
    pub d_in: usize,
    pub d_out: usize,
    /// Appends the normalized grid coordinate `x / n` as an input channel.
    /// Breaks exact shift equivariance.
    pub coord_channel: bool,
}

impl Default for FnoConfig {
    fn default() -> Self {
        Self {
            n_v: 64,
            k_max: 3,
            n_d: 3,
            d_in: 1,
            d_out: 1,
            coord_channel: false,
        }
    }
}

impl FnoConfig {
    pub fn validate(&self) -> Result<(), FnoError> {
        if self.n_v == 0 || self.n_d == 0 || self.k_max == 0 {
            return Err(FnoError::Config(
                "n_v, n_d and k_max must be at least 1".into(),
            ));
        }
        if self.d_in != 1 || self.d_out != 1 {
            return Err(FnoError::Config(
                "only scalar per-point input and output are supported".into(),
            ));
        }
        Ok(())
    }

    /// Channels fed to the lifting map.
    pub fn in_channels(&self) -> usize {
        self.d_in + self.coord_channel as usize
    }

    pub fn check_grid(&self, n: usize) -> Result<(), FnoError> {
        if n == 0 || self.k_max > max_modes(n) {
            return Err(FnoError::Modes {
                k_max: self.k_max,
                n,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FnoLayer<T> {
    /// `k_max x n_v x n_v`, indexed `[mode, out, in]`.
    pub r: ComplexTensor<T>,
    /// `n_v x n_v`, indexed `[out, in]`.
    pub w: RealTensor<T>,
    pub b_w: RealTensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FnoParams<T> {
    pub cfg: FnoConfig,
    /// `n_v x in_channels`.
    pub p: RealTensor<T>,
    pub b_p: RealTensor<T>,
    pub layers: Vec<FnoLayer<T>>,
    /// `d_out x n_v`.
    pub q: RealTensor<T>,
    pub b_q: RealTensor<T>,
}

impl<T: Scalar> FnoParams<T> {
    pub fn zeros(cfg: FnoConfig) -> Self {
        let nv = cfg.n_v;
        Self {
            cfg,
            p: RealTensor::zeros(&[nv, cfg.in_channels()]),
            b_p: RealTensor::zeros(&[nv]),
            layers: (0..cfg.n_d)
                .map(|_| FnoLayer {
                    r: ComplexTensor::zeros(&[cfg.k_max, nv, nv]),
                    w: RealTensor::zeros(&[nv, nv]),
                    b_w: RealTensor::zeros(&[nv]),
                })
                .collect(),
            q: RealTensor::zeros(&[cfg.d_out, nv]),
            b_q: RealTensor::zeros(&[cfg.d_out]),
        }
    }

    /// Every trainable scalar, group by group, in the fixed order
    /// `P, b_P, (R_i, W_i, b_W_i)..., Q, b_Q`. Complex groups are interleaved.
    pub fn groups_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = vec![self.p.data_mut(), self.b_p.data_mut()];
        for l in &mut self.layers {
            out.push(l.r.as_real_mut());
            out.push(l.w.data_mut());
            out.push(l.b_w.data_mut());
        }
        out.push(self.q.data_mut());
        out.push(self.b_q.data_mut());
        out
    }

    pub fn num_scalars(&self) -> usize {
        let mut s = self.clone();
        s.groups_mut().iter().map(|g| g.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite()
            && self.b_p.is_finite()
            && self.q.is_finite()
            && self.b_q.is_finite()
            && self
                .layers
                .iter()
                .all(|l| l.r.is_finite() && l.w.is_finite() && l.b_w.is_finite())
    }

    pub fn to_container(&self) -> Container {
        let c = &self.cfg;
        let mut out = Container::new("fno")
            .with_meta("n_v", c.n_v)
            .with_meta("k_max", c.k_max)
            .with_meta("n_d", c.n_d)
            .with_meta("d_in", c.d_in)
            .with_meta("d_out", c.d_out)
            .with_meta("coord_channel", c.coord_channel);
        let real =
            |name: &str, t: &RealTensor<T>| Block::real(name, t.shape(), to_f64_vec(t.data()));
        out.push(real("P", &self.p));
        out.push(real("b_P", &self.b_p));
        for (i, l) in self.layers.iter().enumerate() {
            out.push(Block::complex(
                &format!("R_{i}"),
                l.r.shape(),
                to_f64_vec(l.r.as_real()),
            ));
            out.push(real(&format!("W_{i}"), &l.w));
            out.push(real(&format!("b_W_{i}"), &l.b_w));
        }
        out.push(real("Q", &self.q));
        out.push(real("b_Q", &self.b_q));
        out
    }

    pub fn from_container(c: &Container) -> Result<Self, FnoError> {
        if c.kind != "fno" {
            return Err(ContainerError::Format(format!(
                "expected fno weights, found {:?}",
                c.kind
            ))
            .into());
        }
        let cfg = FnoConfig {
            n_v: c.meta_parse("n_v")?,
            k_max: c.meta_parse("k_max")?,
            n_d: c.meta_parse("n_d")?,
            d_in: c.meta_parse("d_in")?,
            d_out: c.meta_parse("d_out")?,
            coord_channel: c.meta_parse("coord_channel")?,
        };
        cfg.validate()?;
        let mut params = Self::zeros(cfg);
        let FnoParams {
            p,
            b_p,
            layers,
            q,
            b_q,
            ..
        } = &mut params;
        fill_real(c, "P", p)?;
        fill_real(c, "b_P", b_p)?;
        for (i, l) in layers.iter_mut().enumerate() {
            let b = checked_block(c, &format!("R_{i}"), DType::Complex, l.r.shape())?;
            l.r.as_real_mut()
                .copy_from_slice(&from_f64_slice::<T>(&b.data));
            fill_real(c, &format!("W_{i}"), &mut l.w)?;
            fill_real(c, &format!("b_W_{i}"), &mut l.b_w)?;
        }
        fill_real(c, "Q", q)?;
        fill_real(c, "b_Q", b_q)?;
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FnoError> {
        Ok(self.to_container().save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, FnoError> {
        Self::from_container(&Container::load(path)?)
    }
}

fn checked_block<'a>(
    c: &'a Container,
    name: &str,
    dtype: DType,
    shape: &[usize],
) -> Result<&'a Block, FnoError> {
    let b = c.block(name)?;
    if b.dtype != dtype || b.shape != shape {
        return Err(ContainerError::Format(format!(
            "block {name} has shape {:?}, expected {shape:?}",
            b.shape
        ))
        .into());
    }
    Ok(b)
}

fn fill_real<T: Scalar>(c: &Container, name: &str, t: &mut RealTensor<T>) -> Result<(), FnoError> {
    let b = checked_block(c, name, DType::Real, t.shape())?;
    t.data_mut().copy_from_slice(&from_f64_slice::<T>(&b.data));
    Ok(())
}

/// Seeded initialization: `P`, `W_i`, `Q` and all biases uniform on
/// `(-1/n_v, 1/n_v)`; `R_i = (u + i u') / n_v` with `u, u'` uniform on `[0, 1)`.
pub fn init_params<T: Scalar>(cfg: FnoConfig, seed: u64) -> Result<FnoParams<T>, FnoError> {
    cfg.validate()?;
    let mut rng = rng_from_seed(seed);
    let a = 1.0 / cfg.n_v as f64;
    let mut params = FnoParams::zeros(cfg);
    let mut sym = |xs: &mut [T]| {
        xs.iter_mut()
            .for_each(|v| *v = T::lit(rng.random_range(-a..a)))
    };
    sym(params.p.data_mut());
    sym(params.b_p.data_mut());
    for l in &mut params.layers {
        sym(l.w.data_mut());
        sym(l.b_w.data_mut());
    }
    sym(params.q.data_mut());
    sym(params.b_q.data_mut());
    for l in &mut params.layers {
        for v in l.r.as_real_mut() {
            *v = T::lit(a * rng.random::<f64>());
        }
    }
    Ok(params)
}

/// Preallocated buffers and transform plan for inference at one grid size.
/// Reusing a workspace makes [`forward_into`] allocation-free.
#[derive(Clone, Debug)]
pub struct FnoWorkspace<T> {
    n: usize,
    plan: SpectralPlan<T>,
    scratch: SpectralScratch<T>,
    input: Vec<T>,
    v: Vec<T>,
    next: Vec<T>,
    spectral: Vec<T>,
    modes: Vec<Complex<T>>,
    mixed: Vec<Complex<T>>,
}

impl<T: Scalar> FnoWorkspace<T> {
    pub fn new(cfg: &FnoConfig, n: usize) -> Result<Self, FnoError> {
        cfg.validate()?;
        cfg.check_grid(n)?;
        let zc = Complex::new(T::zero(), T::zero());
        let mut scratch = SpectralScratch::new();
        let plan = SpectralPlan::new(n, cfg.k_max)?;
        // Size the scratch once so later calls never grow it.
        let mut probe = vec![zc; cfg.k_max * cfg.n_v];
        let mut sig = vec![T::zero(); n * cfg.n_v];
        plan.forward(&sig, cfg.n_v, &mut probe, &mut scratch);
        plan.inverse(&probe, cfg.n_v, &mut sig, &mut scratch);
        Ok(Self {
            n,
            plan,
            scratch,
            input: vec![T::zero(); n * cfg.in_channels()],
            v: vec![T::zero(); n * cfg.n_v],
            next: vec![T::zero(); n * cfg.n_v],
            spectral: vec![T::zero(); n * cfg.n_v],
            modes: vec![zc; cfg.k_max * cfg.n_v],
            mixed: vec![zc; cfg.k_max * cfg.n_v],
        })
    }

    pub fn grid_size(&self) -> usize {
        self.n
    }
}

/// Evaluates the operator on one coarse state `x` (length `n`) into `out`.
pub fn forward_into<T: Scalar>(
    params: &FnoParams<T>,
    ws: &mut FnoWorkspace<T>,
    x: &[T],
    out: &mut [T],
) -> Result<(), FnoError> {
    let cfg = &params.cfg;
    let n = ws.n;
    if x.len() != n || out.len() != n * cfg.d_out {
        return Err(FnoError::Shape {
            expected: n,
            got: x.len(),
        });
    }
    let nv = cfg.n_v;
    let cin = cfg.in_channels();
    for (i, &xi) in x.iter().enumerate() {
        ws.input[i * cin] = xi;
        if cfg.coord_channel {
            ws.input[i * cin + 1] = T::lit(i as f64 / n as f64);
        }
    }
    matmul_nt_bias(
        &ws.input,
        cin,
        params.p.data(),
        params.b_p.data(),
        &mut ws.v,
    );
    let km = cfg.k_max;
    for layer in &params.layers {
        ws.plan.forward(&ws.v, nv, &mut ws.modes, &mut ws.scratch);
        let r = layer.r.data();
        for m in 0..km {
            let h = &ws.modes[m * nv..(m + 1) * nv];
            for o in 0..nv {
                let row = &r[(m * nv + o) * nv..(m * nv + o + 1) * nv];
                let mut acc = Complex::new(T::zero(), T::zero());
                for (rc, hc) in row.iter().zip(h) {
                    acc += *rc * *hc;
                }
                ws.mixed[m * nv + o] = acc;
            }
        }
        ws.plan
            .inverse(&ws.mixed, nv, &mut ws.spectral, &mut ws.scratch);
        matmul_nt_bias(&ws.v, nv, layer.w.data(), layer.b_w.data(), &mut ws.next);
        for (a, &s) in ws.next.iter_mut().zip(&ws.spectral) {
            let z = *a + s;
            *a = if z > T::zero() { z } else { T::zero() };
        }
        std::mem::swap(&mut ws.v, &mut ws.next);
    }
    matmul_nt_bias(&ws.v, nv, params.q.data(), params.b_q.data(), out);
    Ok(())
}

/// Allocating convenience wrapper around [`forward_into`].
pub fn fno_forward<T: Scalar>(params: &FnoParams<T>, x: &[T]) -> Result<Vec<T>, FnoError> {
    let mut ws = FnoWorkspace::new(&params.cfg, x.len())?;
    let mut out = vec![T::zero(); x.len() * params.cfg.d_out];
    forward_into(params, &mut ws, x, &mut out)?;
    Ok(out)
}

/// Tape handles for every parameter group, in [`FnoParams::groups_mut`] order.
#[derive(Clone, Debug)]
pub struct FnoVars {
    vars: Vec<Var>,
}

impl FnoVars {
    pub fn register<T: Scalar>(tape: &mut Tape<T>, params: &FnoParams<T>) -> Self {
        let mut vars = vec![
            tape.param(params.p.clone().into()),
            tape.param(params.b_p.clone().into()),
        ];
        for l in &params.layers {
            vars.push(tape.param(l.r.clone().into()));
            vars.push(tape.param(l.w.clone().into()));
            vars.push(tape.param(l.b_w.clone().into()));
        }
        vars.push(tape.param(params.q.clone().into()));
        vars.push(tape.param(params.b_q.clone().into()));
        Self { vars }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Records the batched forward pass. `x` is `[B, n, in_channels]`; the
/// result is `[B, n, d_out]`.
pub fn forward_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &FnoVars,
    cfg: &FnoConfig,
    x: Var,
) -> Result<Var, FnoError> {
    let shape = tape.value(x).shape().to_vec();
    if shape.len() != 3 || shape[2] != cfg.in_channels() {
        return Err(TensorError::Shape(format!("operator input {shape:?}")).into());
    }
    let n = shape[1];
    cfg.check_grid(n)?;
    let v = &vars.vars;
    let lifted = tape.matmul(x, v[0])?;
    let mut h = tape.bias_add(lifted, v[1])?;
    for i in 0..cfg.n_d {
        let (r, w, bw) = (v[2 + 3 * i], v[3 + 3 * i], v[4 + 3 * i]);
        let modes = tape.dft_forward(h, cfg.k_max)?;
        let mixed = tape.mode_mul(r, modes)?;
        let spectral = tape.dft_inverse(mixed, n)?;
        let local = tape.matmul(h, w)?;
        let local = tape.bias_add(local, bw)?;
        let sum = tape.add(local, spectral)?;
        h = tape.relu(sum)?;
    }
    let k = v.len();
    let projected = tape.matmul(h, v[k - 2])?;
    Ok(tape.bias_add(projected, v[k - 1])?)
}

/// Packs `rows` coarse states of length `n` into a `[B, n, in_channels]` tensor.
pub fn batch_input<T: Scalar>(cfg: &FnoConfig, rows: &[&[f64]], n: usize) -> RealTensor<T> {
    let cin = cfg.in_channels();
    let mut data = Vec::with_capacity(rows.len() * n * cin);
    for row in rows {
        for (i, &x) in row.iter().enumerate() {
            data.push(T::lit(x));
            if cfg.coord_channel {
                data.push(T::lit(i as f64 / n as f64));
            }
        }
    }
    RealTensor::from_vec(&[rows.len(), n, cin], data).expect("row lengths match n")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    /// Learning-rate decays per epoch: the rate is multiplied by `lr_gamma`
    /// every `steps_per_epoch / lr_step` optimizer steps.
    pub lr_step: u64,
    pub lr_gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            lr_step: 20,
            lr_gamma: 0.9,
            epochs: 2,
            batch_size: 64,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), FnoError> {
        let ok = self.lr > 0.0
            && self.lr.is_finite()
            && self.lr_gamma > 0.0
            && self.lr_gamma <= 1.0
            && self.batch_size > 0
            && self.lr_step > 0;
        if ok {
            Ok(())
        } else {
            Err(FnoError::Config(
                "need lr > 0, 0 < lr_gamma <= 1, batch_size > 0, lr_step > 0".into(),
            ))
        }
    }

    pub fn steps_per_epoch(&self, n_samples: usize) -> u64 {
        n_samples.div_ceil(self.batch_size) as u64
    }

    pub fn schedule(&self, n_samples: usize) -> StepLr {
        StepLr {
            base: self.lr,
            step_size: (self.steps_per_epoch(n_samples) / self.lr_step).max(1),
            gamma: self.lr_gamma,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Fits the operator to every `(snippet, t)` pair of `train` by minibatch
/// Adam on the mean squared error. Initialization and shuffling draw from
/// streams derived from `tcfg.seed`.
pub fn train_fno<T: Scalar>(
    train: &Dataset,
    cfg: &FnoConfig,
    tcfg: &TrainConfig,
) -> Result<(FnoParams<T>, Vec<LossPoint>), FnoError> {
    cfg.validate()?;
    tcfg.validate()?;
    let n = train.k();
    cfg.check_grid(n)?;
    let mut params = init_params::<T>(*cfg, derive_seed(tcfg.seed, Stream::FnoInit))?;
    let mut rng = rng_from_seed(derive_seed(tcfg.seed, Stream::FnoShuffle));
    let n_pairs = train.n_pairs();
    let sched = tcfg.schedule(n_pairs);
    let mut adam = Adam::new(tcfg.adam());
    let mut tape = Tape::new();
    let mut order: Vec<usize> = (0..n_pairs).collect();
    let mut losses = Vec::new();
    let mut step = 0u64;
    for _ in 0..tcfg.epochs {
        shuffle(&mut order, &mut rng);
        for chunk in order.chunks(tcfg.batch_size) {
            let (xs, hs): (Vec<&[f64]>, Vec<&[f64]>) = chunk.iter().map(|&i| train.pair(i)).unzip();
            let input = batch_input::<T>(cfg, &xs, n);
            let target = RealTensor::from_vec(
                &[chunk.len(), n, 1],
                hs.iter()
                    .flat_map(|h| h.iter().map(|&v| T::lit(v)))
                    .collect(),
            )?;
            tape.clear();
            let vars = FnoVars::register(&mut tape, &params);
            let x = tape.input(input.into());
            let pred = forward_on_tape(&mut tape, &vars, cfg, x)?;
            let loss = tape.mse(pred, &target)?;
            let mse = scalar_of(tape.value(loss)).as_f64();
            if !mse.is_finite() {
                return Err(FnoError::Diverged { step });
            }
            let grads = tape.backward(loss)?;
            let lr = sched.lr(step);
            let g: Vec<&[T]> = vars
                .vars()
                .iter()
                .map(|&v| flat(grads.get(v).expect("parameter gradient")))
                .collect();
            adam.step(lr, &mut params.groups_mut(), &g);
            losses.push(LossPoint { step, lr, mse });
            step += 1;
        }
    }
    if !params.is_finite() {
        return Err(FnoError::Diverged { step });
    }
    Ok((params, losses))
}

fn scalar_of<T: Scalar>(v: &Value<T>) -> T {
    v.as_real().expect("real loss").data()[0]
}

fn flat<T: Scalar>(v: &Value<T>) -> &[T] {
    match v {
        Value::Real(t) => t.data(),
        Value::Complex(t) => complex_as_real(t.data()),
    }
}

/// One-step mean squared error over every `stride`-th pair of `data`.
pub fn dataset_mse<T: Scalar>(
    params: &FnoParams<T>,
    data: &Dataset,
    stride: usize,
) -> Result<f64, FnoError> {
    let n = data.k();
    let mut ws = FnoWorkspace::new(&params.cfg, n)?;
    let mut x = vec![T::zero(); n];
    let mut out = vec![T::zero(); n];
    let (mut acc, mut count) = (0.0, 0usize);
    for i in (0..data.n_pairs()).step_by(stride.max(1)) {
        let (xs, hs) = data.pair(i);
        for (d, &s) in x.iter_mut().zip(xs) {
            *d = T::lit(s);
        }
        forward_into(params, &mut ws, &x, &mut out)?;
        for (p, &h) in out.iter().zip(hs) {
            let d = p.as_f64() - h;
            acc += d * d;
        }
        count += n;
    }
    Ok(acc / count.max(1) as f64)
}
