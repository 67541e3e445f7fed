//! Reference parametrizations: a local affine fit, a local residual network,
//! and the constant climatology forecast.
//!
//! The affine and residual maps are local: each grid point's correction
//! depends only on that point's coarse value.

use std::path::Path;

use rand::RngExt;
use thiserror::Error;

use crate::container::{Block, Container, ContainerError, DType};
use crate::dataset::{Climatology, Dataset};
use crate::optim::{Adam, AdamConfig, LossPoint};
use crate::rng::{derive_seed, rng_from_seed, shuffle, Stream};
use crate::scalar::{from_f64_slice, to_f64_vec, Scalar};
use crate::tensor::{dot, RealTensor, Tape, TensorError, Var};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("normal equations are singular: {0}")]
    Singular(String),
    #[error("empty training set")]
    Empty,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("training diverged at step {step}: loss is not finite")]
    Diverged { step: u64 },
    #[error(transparent)]
    Container(#[from] ContainerError),
}

/// `h_k = a X_k + b0` at every grid point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearParam {
    pub a: f64,
    pub b0: f64,
}

impl LinearParam {
    pub fn predict(&self, x: &[f64], out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(x) {
            *o = self.a * v + self.b0;
        }
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new("linear");
        c.push(Block::real("coef", &[2], vec![self.a, self.b0]));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self, BaselineError> {
        expect_kind(c, "linear")?;
        let b = checked_block(c, "coef", &[2])?;
        Ok(Self {
            a: b.data[0],
            b0: b.data[1],
        })
    }
}

fn expect_kind(c: &Container, kind: &str) -> Result<(), BaselineError> {
    if c.kind != kind {
        return Err(
            ContainerError::Format(format!("expected {kind} weights, found {:?}", c.kind)).into(),
        );
    }
    Ok(())
}

fn checked_block<'a>(
    c: &'a Container,
    name: &str,
    shape: &[usize],
) -> Result<&'a Block, BaselineError> {
    let b = c.block(name)?;
    if b.dtype != DType::Real || b.shape != shape {
        return Err(ContainerError::Format(format!(
            "block {name} has shape {:?}, expected {shape:?}",
            b.shape
        ))
        .into());
    }
    Ok(b)
}

/// Least-squares fit of `h = a X + b0` over every `(snippet, t, k)` scalar
/// pair, from the 2x2 normal equations. Sums are centered for conditioning.
pub fn fit_linear(train: &Dataset) -> Result<LinearParam, BaselineError> {
    let pairs = || {
        train
            .snippets
            .iter()
            .flat_map(|s| s.coarse_states.iter().zip(&s.targets))
    };
    fit_linear_pairs(pairs())
}

/// As [`fit_linear`] but over explicit `(x, h)` pairs.
pub fn fit_linear_pairs<'a>(
    pairs: impl Iterator<Item = (&'a f64, &'a f64)> + Clone,
) -> Result<LinearParam, BaselineError> {
    let (mut n, mut sx, mut sh) = (0usize, 0.0, 0.0);
    for (&x, &h) in pairs.clone() {
        n += 1;
        sx += x;
        sh += h;
    }
    if n == 0 {
        return Err(BaselineError::Empty);
    }
    let (mx, mh) = (sx / n as f64, sh / n as f64);
    let (mut sxx, mut sxh) = (0.0, 0.0);
    for (&x, &h) in pairs {
        let dx = x - mx;
        sxx += dx * dx;
        sxh += dx * (h - mh);
    }
    // Centered Gram determinant is n * sxx; zero spread in X leaves the slope
    // undetermined.
    if !(sxx > 1e-12 * n as f64 * (1.0 + mx * mx)) {
        return Err(BaselineError::Singular(
            "all inputs are (numerically) identical".into(),
        ));
    }
    let a = sxh / sxx;
    Ok(LinearParam { a, b0: mh - a * mx })
}

/// Intercept-only fallback for degenerate designs: `a = 0`, `b0 = mean(h)`.
pub fn fit_linear_or_intercept(train: &Dataset) -> Result<LinearParam, BaselineError> {
    match fit_linear(train) {
        Err(BaselineError::Singular(_)) => {
            let (n, s) = train
                .snippets
                .iter()
                .flat_map(|s| &s.targets)
                .fold((0usize, 0.0), |(n, s), &h| (n + 1, s + h));
            Ok(LinearParam {
                a: 0.0,
                b0: s / n as f64,
            })
        }
        other => other,
    }
}

/// Non-local affine map `h = A^T [X_0, .., X_{K-1}, 1]`, with `A` of shape
/// `(K+1) x K`, from the full normal equations `A = (Z^T Z)^{-1} Z^T H`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMatrix {
    pub k: usize,
    pub a: Vec<f64>,
}

impl LinearMatrix {
    pub fn predict(&self, x: &[f64], out: &mut [f64]) {
        let k = self.k;
        for (o, out_o) in out.iter_mut().enumerate().take(k) {
            let mut acc = self.a[k * k + o];
            for (i, &xi) in x.iter().enumerate() {
                acc += self.a[i * k + o] * xi;
            }
            *out_o = acc;
        }
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new("linear_concat");
        c.push(Block::real("A", &[self.k + 1, self.k], self.a.clone()));
        c
    }

    pub fn from_container(c: &Container) -> Result<Self, BaselineError> {
        expect_kind(c, "linear_concat")?;
        let b = c.block("A")?;
        if b.shape.len() != 2 || b.shape[0] != b.shape[1] + 1 {
            return Err(ContainerError::Format("bad A block".into()).into());
        }
        Ok(Self {
            k: b.shape[1],
            a: b.data.clone(),
        })
    }
}

pub fn fit_linear_concat(train: &Dataset) -> Result<LinearMatrix, BaselineError> {
    let k = train.k();
    let d = k + 1;
    let mut gram = vec![0.0; d * d];
    let mut rhs = vec![0.0; d * k];
    let mut z = vec![1.0; d];
    for i in 0..train.n_pairs() {
        let (x, h) = train.pair(i);
        z[..k].copy_from_slice(x);
        for r in 0..d {
            for c in 0..d {
                gram[r * d + c] += z[r] * z[c];
            }
            for o in 0..k {
                rhs[r * k + o] += z[r] * h[o];
            }
        }
    }
    if train.n_pairs() == 0 {
        return Err(BaselineError::Empty);
    }
    let l = cholesky(&gram, d)
        .ok_or_else(|| BaselineError::Singular("Gram matrix is not positive definite".into()))?;
    let mut a = vec![0.0; d * k];
    let mut col = vec![0.0; d];
    for o in 0..k {
        for r in 0..d {
            col[r] = rhs[r * k + o];
        }
        cholesky_solve(&l, d, &mut col);
        for r in 0..d {
            a[r * k + o] = col[r];
        }
    }
    Ok(LinearMatrix { k, a })
}

/// Lower Cholesky factor of a symmetric `n x n` matrix, or `None` if a pivot
/// is not safely positive.
fn cholesky(m: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    let scale = (0..n).map(|i| m[i * n + i].abs()).fold(0.0, f64::max);
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = m[i * n + j] - (0..j).map(|p| l[i * n + p] * l[j * n + p]).sum::<f64>();
            if i == j {
                if !(s > 1e-12 * scale) {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let s: f64 = (0..i).map(|p| l[i * n + p] * b[p]).sum();
        b[i] = (b[i] - s) / l[i * n + i];
    }
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|p| l[p * n + i] * b[p]).sum();
        b[i] = (b[i] - s) / l[i * n + i];
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ResNetConfig {
    pub width: usize,
    pub blocks: usize,
}

impl Default for ResNetConfig {
    fn default() -> Self {
        Self {
            width: 32,
            blocks: 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResNetTrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for ResNetTrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            epochs: 20,
            batch_size: 1024,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

/// Pointwise network `x -> lift -> (v + relu(W_i v + b_i))* -> project`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResNetParams<T> {
    pub cfg: ResNetConfig,
    /// `width x 1`.
    pub lift_w: RealTensor<T>,
    pub lift_b: RealTensor<T>,
    /// `(width x width, width)` per block.
    pub blocks: Vec<(RealTensor<T>, RealTensor<T>)>,
    /// `1 x width`.
    pub proj_w: RealTensor<T>,
    pub proj_b: RealTensor<T>,
}

impl<T: Scalar> ResNetParams<T> {
    pub fn zeros(cfg: ResNetConfig) -> Self {
        let w = cfg.width;
        Self {
            cfg,
            lift_w: RealTensor::zeros(&[w, 1]),
            lift_b: RealTensor::zeros(&[w]),
            blocks: (0..cfg.blocks)
                .map(|_| (RealTensor::zeros(&[w, w]), RealTensor::zeros(&[w])))
                .collect(),
            proj_w: RealTensor::zeros(&[1, w]),
            proj_b: RealTensor::zeros(&[1]),
        }
    }

    /// Parameter groups in the fixed order `lift_w, lift_b, (W_i, b_i)..., proj_w, proj_b`.
    pub fn groups_mut(&mut self) -> Vec<&mut RealTensor<T>> {
        let mut out = vec![&mut self.lift_w, &mut self.lift_b];
        for (w, b) in &mut self.blocks {
            out.push(w);
            out.push(b);
        }
        out.push(&mut self.proj_w);
        out.push(&mut self.proj_b);
        out
    }

    fn tensors(&self) -> Vec<&RealTensor<T>> {
        let mut out = vec![&self.lift_w, &self.lift_b];
        for (w, b) in &self.blocks {
            out.push(w);
            out.push(b);
        }
        out.push(&self.proj_w);
        out.push(&self.proj_b);
        out
    }

    /// Weight-file block names, in parameter-group order.
    fn group_names(cfg: ResNetConfig) -> Vec<String> {
        let mut names = vec!["lift_w".to_string(), "lift_b".to_string()];
        for i in 0..cfg.blocks {
            names.push(format!("block_w_{i}"));
            names.push(format!("block_b_{i}"));
        }
        names.push("proj_w".into());
        names.push("proj_b".into());
        names
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Seeded init: each dense map uniform on `(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// for both weight and bias.
    pub fn init(cfg: ResNetConfig, seed: u64) -> Self {
        let mut p = Self::zeros(cfg);
        let mut rng = rng_from_seed(seed);
        let mut fill = |t: &mut RealTensor<T>, fan_in: usize| {
            let a = 1.0 / (fan_in as f64).sqrt();
            t.data_mut()
                .iter_mut()
                .for_each(|v| *v = T::lit(rng.random_range(-a..a)));
        };
        let w = cfg.width;
        fill(&mut p.lift_w, 1);
        fill(&mut p.lift_b, 1);
        for (bw, bb) in &mut p.blocks {
            fill(bw, w);
            fill(bb, w);
        }
        fill(&mut p.proj_w, w);
        fill(&mut p.proj_b, w);
        p
    }

    /// Evaluates the map at one scalar using `hidden` and `tmp` (length
    /// `width`) as scratch.
    #[inline]
    pub fn eval_point(&self, x: T, hidden: &mut [T], tmp: &mut [T]) -> T {
        for ((h, &w), &b) in hidden
            .iter_mut()
            .zip(self.lift_w.data())
            .zip(self.lift_b.data())
        {
            *h = w * x + b;
        }
        let width = self.cfg.width;
        for (bw, bb) in &self.blocks {
            for (o, t) in tmp.iter_mut().enumerate() {
                let z = bb.data()[o] + dot(&bw.data()[o * width..(o + 1) * width], hidden);
                *t = if z > T::zero() { z } else { T::zero() };
            }
            for (h, &t) in hidden.iter_mut().zip(tmp.iter()) {
                *h += t;
            }
        }
        self.proj_b.data()[0] + dot(self.proj_w.data(), hidden)
    }

    pub fn predict(&self, x: &[T], out: &mut [T]) {
        let mut hidden = vec![T::zero(); self.cfg.width];
        let mut tmp = hidden.clone();
        for (o, &v) in out.iter_mut().zip(x) {
            *o = self.eval_point(v, &mut hidden, &mut tmp);
        }
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new("resnet")
            .with_meta("width", self.cfg.width)
            .with_meta("blocks", self.cfg.blocks);
        for (name, t) in Self::group_names(self.cfg).iter().zip(self.tensors()) {
            c.push(Block::real(name, t.shape(), to_f64_vec(t.data())));
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self, BaselineError> {
        expect_kind(c, "resnet")?;
        let cfg = ResNetConfig {
            width: c.meta_parse("width")?,
            blocks: c.meta_parse("blocks")?,
        };
        let mut p = Self::zeros(cfg);
        for (t, name) in p.groups_mut().into_iter().zip(&Self::group_names(cfg)) {
            let b = checked_block(c, name, t.shape())?;
            t.data_mut().copy_from_slice(&from_f64_slice::<T>(&b.data));
        }
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), BaselineError> {
        Ok(self.to_container().save(path)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BaselineError> {
        Self::from_container(&Container::load(path)?)
    }
}

/// Records the batched forward pass for `x` of shape `[B, 1]`.
pub fn resnet_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    vars: &[Var],
    n_blocks: usize,
    x: Var,
) -> Result<Var, TensorError> {
    let lifted = tape.matmul(x, vars[0])?;
    let mut v = tape.bias_add(lifted, vars[1])?;
    for i in 0..n_blocks {
        let z = tape.matmul(v, vars[2 + 2 * i])?;
        let z = tape.bias_add(z, vars[3 + 2 * i])?;
        let r = tape.relu(z)?;
        v = tape.add(v, r)?;
    }
    let n = vars.len();
    let out = tape.matmul(v, vars[n - 2])?;
    tape.bias_add(out, vars[n - 1])
}

pub fn register_resnet<T: Scalar>(tape: &mut Tape<T>, params: &ResNetParams<T>) -> Vec<Var> {
    params
        .tensors()
        .into_iter()
        .map(|t| tape.param(t.clone().into()))
        .collect()
}

/// Fits the local residual network to every `(snippet, t, k)` scalar pair by
/// minibatch Adam at a constant learning rate.
pub fn fit_resnet<T: Scalar>(
    train: &Dataset,
    cfg: ResNetConfig,
    tcfg: &ResNetTrainConfig,
) -> Result<(ResNetParams<T>, Vec<LossPoint>), BaselineError> {
    if cfg.width == 0 || tcfg.batch_size == 0 || !(tcfg.lr > 0.0) {
        return Err(BaselineError::Config(
            "need width > 0, batch_size > 0, lr > 0".into(),
        ));
    }
    let xs: Vec<f64> = train
        .snippets
        .iter()
        .flat_map(|s| s.coarse_states.iter().copied())
        .collect();
    let hs: Vec<f64> = train
        .snippets
        .iter()
        .flat_map(|s| s.targets.iter().copied())
        .collect();
    if xs.is_empty() {
        return Err(BaselineError::Empty);
    }
    let mut params = ResNetParams::<T>::init(cfg, derive_seed(tcfg.seed, Stream::ResNetInit));
    let mut rng = rng_from_seed(derive_seed(tcfg.seed, Stream::ResNetShuffle));
    let mut adam = Adam::new(AdamConfig {
        lr: tcfg.lr,
        beta1: tcfg.beta1,
        beta2: tcfg.beta2,
        eps: tcfg.eps,
    });
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut tape = Tape::new();
    let mut losses = Vec::new();
    let mut step = 0u64;
    for _ in 0..tcfg.epochs {
        shuffle(&mut order, &mut rng);
        for chunk in order.chunks(tcfg.batch_size) {
            let b = chunk.len();
            let input =
                RealTensor::from_vec(&[b, 1], chunk.iter().map(|&i| T::lit(xs[i])).collect())?;
            let target =
                RealTensor::from_vec(&[b, 1], chunk.iter().map(|&i| T::lit(hs[i])).collect())?;
            tape.clear();
            let vars = register_resnet(&mut tape, &params);
            let x = tape.input(input.into());
            let pred = resnet_on_tape(&mut tape, &vars, cfg.blocks, x)?;
            let loss = tape.mse(pred, &target)?;
            let mse = tape.value(loss).as_real().expect("real loss").data()[0].as_f64();
            if !mse.is_finite() {
                return Err(BaselineError::Diverged { step });
            }
            let grads = tape.backward(loss)?;
            let g: Vec<&[T]> = vars
                .iter()
                .map(|&v| grads.real(v).expect("parameter gradient").data())
                .collect();
            let mut groups: Vec<&mut [T]> = params
                .groups_mut()
                .into_iter()
                .map(|t| t.data_mut())
                .collect();
            adam.step(tcfg.lr, &mut groups, &g);
            losses.push(LossPoint {
                step,
                lr: tcfg.lr,
                mse,
            });
            step += 1;
        }
    }
    if !params.is_finite() {
        return Err(BaselineError::Diverged { step });
    }
    Ok((params, losses))
}

/// Constant forecast of the global training mean, `t_steps x k` row-major.
pub fn climatology_forecast(clim: &Climatology, t_steps: usize, k: usize) -> Vec<f64> {
    vec![clim.mean; t_steps * k]
}

/// One-step mean squared error of a pointwise-or-rowwise predictor over every
/// `stride`-th pair of `data`.
pub fn one_step_mse(
    data: &Dataset,
    stride: usize,
    mut predict: impl FnMut(&[f64], &mut [f64]),
) -> f64 {
    let k = data.k();
    let mut out = vec![0.0; k];
    let (mut acc, mut count) = (0.0, 0usize);
    for i in (0..data.n_pairs()).step_by(stride.max(1)) {
        let (x, h) = data.pair(i);
        predict(x, &mut out);
        for (p, t) in out.iter().zip(h) {
            acc += (p - t) * (p - t);
        }
        count += k;
    }
    acc / count.max(1) as f64
}
