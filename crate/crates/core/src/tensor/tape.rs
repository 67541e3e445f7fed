use std::collections::HashMap;
use std::sync::Arc;

use crate::scalar::{gemm, MatMut, MatRef, Scalar};

use super::dense::{complex_as_real, complex_as_real_mut, ComplexTensor, RealTensor};
use super::spectral::{SpectralPlan, SpectralScratch};
use super::TensorError;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Value<T> {
    Real(RealTensor<T>),
    Complex(ComplexTensor<T>),
}

impl<T: Scalar> Value<T> {
    pub fn shape(&self) -> &[usize] {
        match self {
            Value::Real(t) => t.shape(),
            Value::Complex(t) => t.shape(),
        }
    }

    pub fn as_real(&self) -> Option<&RealTensor<T>> {
        match self {
            Value::Real(t) => Some(t),
            Value::Complex(_) => None,
        }
    }

    pub fn as_complex(&self) -> Option<&ComplexTensor<T>> {
        match self {
            Value::Complex(t) => Some(t),
            Value::Real(_) => None,
        }
    }

    /// Scalars in storage order; complex values are interleaved `(re, im)`.
    fn flat(&self) -> &[T] {
        match self {
            Value::Real(t) => t.data(),
            Value::Complex(t) => t.as_real(),
        }
    }

    fn flat_mut(&mut self) -> &mut [T] {
        match self {
            Value::Real(t) => t.data_mut(),
            Value::Complex(t) => t.as_real_mut(),
        }
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMulT { x: Var, w: Var },
    BiasAdd { x: Var, b: Var },
    Add { a: Var, b: Var },
    Relu { x: Var },
    DftForward { x: Var, plan: Arc<SpectralPlan<T>> },
    ModeMul { r: Var, h: Var },
    DftInverse { h: Var, plan: Arc<SpectralPlan<T>> },
    Reshape { x: Var },
    Mse { pred: Var, target: RealTensor<T> },
}

#[derive(Debug)]
struct Node<T> {
    value: Value<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Records a forward computation so gradients can be pulled back through it.
///
/// Backward visits nodes in exact reverse order of recording and accumulates
/// cotangents additively. Complex cotangents use the convention
/// `dL/dRe + i dL/dIm`. Transform plans survive [`clear`](Self::clear).
#[derive(Debug, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    plans: HashMap<(usize, usize), Arc<SpectralPlan<T>>>,
    scratch: SpectralScratch<T>,
}

/// Cotangents of every node that needed one.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Value<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Value<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn real(&self, v: Var) -> Option<&RealTensor<T>> {
        self.get(v).and_then(Value::as_real)
    }

    pub fn complex(&self, v: Var) -> Option<&ComplexTensor<T>> {
        self.get(v).and_then(Value::as_complex)
    }
}

fn shape_err<R>(msg: String) -> Result<R, TensorError> {
    Err(TensorError::Shape(msg))
}

/// `(rows, cols)` of a tensor viewed as a matrix over its last axis.
fn as_matrix(shape: &[usize]) -> (usize, usize) {
    let cols = shape.last().copied().unwrap_or(1);
    let n: usize = shape.iter().product();
    (n.checked_div(cols).unwrap_or(0), cols)
}

/// `(batch, n, channels)` of a channels-last tensor.
fn grid_dims(shape: &[usize]) -> Result<(usize, usize, usize), TensorError> {
    if shape.len() < 2 {
        return shape_err(format!("expected [.., n, C], got {shape:?}"));
    }
    let c = shape[shape.len() - 1];
    let n = shape[shape.len() - 2];
    Ok((shape[..shape.len() - 2].iter().product(), n, c))
}

fn accumulate<T: Scalar>(slot: &mut Option<Value<T>>, add: Value<T>) {
    match slot {
        None => *slot = Some(add),
        Some(acc) => {
            for (a, b) in acc.flat_mut().iter_mut().zip(add.flat()) {
                *a += *b;
            }
        }
    }
}

/// Strided complex matrix view into interleaved storage: element `(i, j)`
/// lives at `2 * (offset + i * rs + j * cs)` (+1 for the imaginary part).
#[derive(Clone, Copy)]
struct CView {
    offset: usize,
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl CView {
    fn part<'a, T>(&self, data: &'a [T], imag: bool) -> MatRef<'a, T> {
        MatRef {
            data,
            offset: 2 * self.offset + imag as usize,
            rows: self.rows,
            cols: self.cols,
            row_stride: 2 * self.rs as isize,
            col_stride: 2 * self.cs as isize,
        }
    }

    fn part_mut<'a, T>(&self, data: &'a mut [T], imag: bool) -> MatMut<'a, T> {
        MatMut {
            data,
            offset: 2 * self.offset + imag as usize,
            rows: self.rows,
            cols: self.cols,
            row_stride: 2 * self.rs as isize,
            col_stride: 2 * self.cs as isize,
        }
    }

    fn t(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }
}

/// `c = beta c + op(a) op(b)` for complex strided views, where `conj_b`
/// conjugates `b`. Four real products over the interleaved parts.
fn cgemm<T: Scalar>(
    a: (&[T], CView),
    b: (&[T], CView),
    conj_b: bool,
    beta: T,
    c: (&mut [T], CView),
) {
    let (ad, av) = a;
    let (bd, bv) = b;
    let (cd, cv) = c;
    let one = T::one();
    let s = if conj_b { one } else { -one };
    // b = Br + i s' Bi with s' = -1 when conjugated.
    gemm(
        one,
        av.part(ad, false),
        bv.part(bd, false),
        beta,
        cv.part_mut(cd, false),
    );
    gemm(
        s,
        av.part(ad, true),
        bv.part(bd, true),
        one,
        cv.part_mut(cd, false),
    );
    gemm(
        -s,
        av.part(ad, false),
        bv.part(bd, true),
        beta,
        cv.part_mut(cd, true),
    );
    gemm(
        one,
        av.part(ad, true),
        bv.part(bd, false),
        one,
        cv.part_mut(cd, true),
    );
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            plans: HashMap::new(),
            scratch: SpectralScratch::new(),
        }
    }

    /// Drops all recorded nodes; cached transform plans are kept.
    pub fn clear(&mut self) {
        self.nodes.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Value<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// A trainable leaf; its gradient is reported by [`backward`](Self::backward).
    pub fn param(&mut self, value: Value<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A constant leaf.
    pub fn input(&mut self, value: Value<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Value<T> {
        &self.nodes[v.0].value
    }

    fn real(&self, v: Var) -> Result<&RealTensor<T>, TensorError> {
        self.value(v)
            .as_real()
            .ok_or_else(|| TensorError::Shape("expected a real tensor".into()))
    }

    fn complex(&self, v: Var) -> Result<&ComplexTensor<T>, TensorError> {
        self.value(v)
            .as_complex()
            .ok_or_else(|| TensorError::Shape("expected a complex tensor".into()))
    }

    fn plan(&mut self, n: usize, k_max: usize) -> Result<Arc<SpectralPlan<T>>, TensorError> {
        if let Some(p) = self.plans.get(&(n, k_max)) {
            return Ok(p.clone());
        }
        let p = Arc::new(SpectralPlan::new(n, k_max)?);
        self.plans.insert((n, k_max), p.clone());
        Ok(p)
    }

    /// `x w^T` over the last axis: `x` is `[.., in]`, `w` is `[out, in]`.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var, TensorError> {
        let xt = self.real(x)?;
        let wt = self.real(w)?;
        let (rows, inner) = as_matrix(xt.shape());
        if wt.shape().len() != 2 || wt.shape()[1] != inner {
            return shape_err(format!("matmul {:?} by {:?}^T", xt.shape(), wt.shape()));
        }
        let out_dim = wt.shape()[0];
        let mut shape = xt.shape().to_vec();
        *shape.last_mut().unwrap() = out_dim;
        let mut out = RealTensor::zeros(&shape);
        gemm(
            T::one(),
            MatRef::row_major(xt.data(), rows, inner),
            MatRef::row_major(wt.data(), out_dim, inner).t(),
            T::zero(),
            MatMut::row_major(out.data_mut(), rows, out_dim),
        );
        let rg = self.needs(&[x, w]);
        Ok(self.push(Value::Real(out), Op::MatMulT { x, w }, rg))
    }

    /// Adds `b` (`[C]`) to every row of `x` (`[.., C]`).
    pub fn bias_add(&mut self, x: Var, b: Var) -> Result<Var, TensorError> {
        let xt = self.real(x)?;
        let bt = self.real(b)?;
        let c = xt.last_dim();
        if bt.len() != c {
            return shape_err(format!("bias of {} for {} channels", bt.len(), c));
        }
        let mut out = xt.clone();
        for row in out.data_mut().chunks_exact_mut(c.max(1)) {
            for (v, &bv) in row.iter_mut().zip(bt.data()) {
                *v += bv;
            }
        }
        let rg = self.needs(&[x, b]);
        Ok(self.push(Value::Real(out), Op::BiasAdd { x, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let at = self.real(a)?;
        let bt = self.real(b)?;
        if at.shape() != bt.shape() {
            return shape_err(format!("add {:?} and {:?}", at.shape(), bt.shape()));
        }
        let mut out = at.clone();
        for (v, &w) in out.data_mut().iter_mut().zip(bt.data()) {
            *v += w;
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(Value::Real(out), Op::Add { a, b }, rg))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        let mut out = self.real(x)?.clone();
        for v in out.data_mut() {
            if !(*v > T::zero()) {
                *v = T::zero();
            }
        }
        let rg = self.needs(&[x]);
        Ok(self.push(Value::Real(out), Op::Relu { x }, rg))
    }

    /// Retained Fourier modes along the grid axis of `x` (`[.., n, C]`).
    pub fn dft_forward(&mut self, x: Var, k_max: usize) -> Result<Var, TensorError> {
        let (b, n, c) = grid_dims(self.real(x)?.shape())?;
        let plan = self.plan(n, k_max)?;
        let mut scratch = std::mem::take(&mut self.scratch);
        let xt = self.real(x)?;
        let mut shape = xt.shape().to_vec();
        let at = shape.len() - 2;
        shape[at] = k_max;
        let mut out = ComplexTensor::zeros(&shape);
        for i in 0..b {
            plan.forward(
                &xt.data()[i * n * c..(i + 1) * n * c],
                c,
                &mut out.data_mut()[i * k_max * c..(i + 1) * k_max * c],
                &mut scratch,
            );
        }
        self.scratch = scratch;
        let rg = self.needs(&[x]);
        Ok(self.push(Value::Complex(out), Op::DftForward { x, plan }, rg))
    }

    /// Real signal of length `n` from retained modes `h` (`[.., k_max, C]`).
    pub fn dft_inverse(&mut self, h: Var, n: usize) -> Result<Var, TensorError> {
        let (b, k_max, c) = grid_dims(self.complex(h)?.shape())?;
        let plan = self.plan(n, k_max)?;
        let mut scratch = std::mem::take(&mut self.scratch);
        let ht = self.complex(h)?;
        let mut shape = ht.shape().to_vec();
        let at = shape.len() - 2;
        shape[at] = n;
        let mut out = RealTensor::zeros(&shape);
        for i in 0..b {
            plan.inverse(
                &ht.data()[i * k_max * c..(i + 1) * k_max * c],
                c,
                &mut out.data_mut()[i * n * c..(i + 1) * n * c],
                &mut scratch,
            );
        }
        self.scratch = scratch;
        let rg = self.needs(&[h]);
        Ok(self.push(Value::Real(out), Op::DftInverse { h, plan }, rg))
    }

    /// Per-mode channel mixing: `out[.., m, o] = sum_c r[m, o, c] h[.., m, c]`.
    pub fn mode_mul(&mut self, r: Var, h: Var) -> Result<Var, TensorError> {
        let rt = self.complex(r)?;
        let ht = self.complex(h)?;
        let (b, km, c) = grid_dims(ht.shape())?;
        if rt.shape().len() != 3 || rt.shape()[0] != km || rt.shape()[2] != c {
            return shape_err(format!(
                "mode weights {:?} for modes {:?}",
                rt.shape(),
                ht.shape()
            ));
        }
        let o = rt.shape()[1];
        let mut shape = ht.shape().to_vec();
        *shape.last_mut().unwrap() = o;
        let mut out = ComplexTensor::zeros(&shape);
        for m in 0..km {
            let hv = CView {
                offset: m * c,
                rows: b,
                cols: c,
                rs: km * c,
                cs: 1,
            };
            let rv = CView {
                offset: m * o * c,
                rows: o,
                cols: c,
                rs: c,
                cs: 1,
            };
            let ov = CView {
                offset: m * o,
                rows: b,
                cols: o,
                rs: km * o,
                cs: 1,
            };
            cgemm(
                (ht.as_real(), hv),
                (rt.as_real(), rv.t()),
                false,
                T::zero(),
                (out.as_real_mut(), ov),
            );
        }
        let rg = self.needs(&[r, h]);
        Ok(self.push(Value::Complex(out), Op::ModeMul { r, h }, rg))
    }

    /// Same data under a new shape.
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let value = match self.value(x).clone() {
            Value::Real(t) => Value::Real(t.reshape(shape)?),
            Value::Complex(t) => Value::Complex(t.reshape(shape)?),
        };
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    /// Mean squared error against a constant target; a one-element tensor.
    pub fn mse(&mut self, pred: Var, target: &RealTensor<T>) -> Result<Var, TensorError> {
        let pt = self.real(pred)?;
        if pt.len() != target.len() || pt.is_empty() {
            return shape_err(format!(
                "mse of {:?} against {:?}",
                pt.shape(),
                target.shape()
            ));
        }
        let mut acc = T::zero();
        for (&p, &t) in pt.data().iter().zip(target.data()) {
            let d = p - t;
            acc += d * d;
        }
        let loss = acc / T::lit(pt.len() as f64);
        let rg = self.needs(&[pred]);
        Ok(self.push(
            Value::Real(RealTensor::scalar(loss)),
            Op::Mse {
                pred,
                target: target.clone(),
            },
            rg,
        ))
    }

    /// Reverse pass from a one-element output, seeded with cotangent 1.
    pub fn backward(&mut self, out: Var) -> Result<Gradients<T>, TensorError> {
        let seed = match self.value(out) {
            Value::Real(t) if t.len() == 1 => Value::Real(RealTensor::scalar(T::one())),
            _ => return shape_err("backward needs a one-element real output".into()),
        };
        let mut grads: Vec<Option<Value<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        let mut scratch = std::mem::take(&mut self.scratch);
        for i in (0..=out.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.pull_back(i, &g, &mut grads, &mut scratch);
            grads[i] = Some(g);
        }
        self.scratch = scratch;
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn pull_back(
        &self,
        i: usize,
        g: &Value<T>,
        grads: &mut [Option<Value<T>>],
        scratch: &mut SpectralScratch<T>,
    ) {
        let node = &self.nodes[i];
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        let real = |v: Var| self.nodes[v.0].value.as_real().expect("real operand");
        let cplx = |v: Var| self.nodes[v.0].value.as_complex().expect("complex operand");
        match &node.op {
            Op::Leaf => {}
            Op::MatMulT { x, w } => {
                let g = g.as_real().expect("real cotangent");
                let (xt, wt) = (real(*x), real(*w));
                let (rows, inner) = as_matrix(xt.shape());
                let out_dim = wt.shape()[0];
                let gm = MatRef::row_major(g.data(), rows, out_dim);
                if wants(*x) {
                    let mut dx = RealTensor::zeros(xt.shape());
                    gemm(
                        T::one(),
                        gm,
                        MatRef::row_major(wt.data(), out_dim, inner),
                        T::zero(),
                        MatMut::row_major(dx.data_mut(), rows, inner),
                    );
                    accumulate(&mut grads[x.0], Value::Real(dx));
                }
                if wants(*w) {
                    let mut dw = RealTensor::zeros(wt.shape());
                    gemm(
                        T::one(),
                        gm.t(),
                        MatRef::row_major(xt.data(), rows, inner),
                        T::zero(),
                        MatMut::row_major(dw.data_mut(), out_dim, inner),
                    );
                    accumulate(&mut grads[w.0], Value::Real(dw));
                }
            }
            Op::BiasAdd { x, b } => {
                let g = g.as_real().expect("real cotangent");
                if wants(*x) {
                    accumulate(&mut grads[x.0], Value::Real(g.clone()));
                }
                if wants(*b) {
                    let c = g.last_dim().max(1);
                    let mut db = RealTensor::zeros(real(*b).shape());
                    for row in g.data().chunks_exact(c) {
                        for (d, &v) in db.data_mut().iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads[b.0], Value::Real(db));
                }
            }
            Op::Add { a, b } => {
                for v in [a, b] {
                    if wants(*v) {
                        accumulate(&mut grads[v.0], g.clone());
                    }
                }
            }
            Op::Relu { x } => {
                if wants(*x) {
                    let g = g.as_real().expect("real cotangent");
                    let mut dx = g.clone();
                    for (d, &v) in dx.data_mut().iter_mut().zip(real(*x).data()) {
                        if !(v > T::zero()) {
                            *d = T::zero();
                        }
                    }
                    accumulate(&mut grads[x.0], Value::Real(dx));
                }
            }
            Op::DftForward { x, plan } => {
                if wants(*x) {
                    let g = g.as_complex().expect("complex cotangent");
                    let (b, n, c) = grid_dims(real(*x).shape()).expect("checked on record");
                    let km = plan.k_max();
                    let mut dx = RealTensor::zeros(real(*x).shape());
                    for bi in 0..b {
                        plan.forward_adjoint(
                            &g.data()[bi * km * c..(bi + 1) * km * c],
                            c,
                            &mut dx.data_mut()[bi * n * c..(bi + 1) * n * c],
                            scratch,
                        );
                    }
                    accumulate(&mut grads[x.0], Value::Real(dx));
                }
            }
            Op::DftInverse { h, plan } => {
                if wants(*h) {
                    let g = g.as_real().expect("real cotangent");
                    let (b, km, c) = grid_dims(cplx(*h).shape()).expect("checked on record");
                    let n = plan.n();
                    let mut dh = ComplexTensor::zeros(cplx(*h).shape());
                    for bi in 0..b {
                        plan.inverse_adjoint(
                            &g.data()[bi * n * c..(bi + 1) * n * c],
                            c,
                            &mut dh.data_mut()[bi * km * c..(bi + 1) * km * c],
                            scratch,
                        );
                    }
                    accumulate(&mut grads[h.0], Value::Complex(dh));
                }
            }
            Op::ModeMul { r, h } => {
                let g = g.as_complex().expect("complex cotangent");
                let (rt, ht) = (cplx(*r), cplx(*h));
                let (b, km, c) = grid_dims(ht.shape()).expect("checked on record");
                let o = rt.shape()[1];
                let gd = complex_as_real(g.data());
                if wants(*h) {
                    // dh[.., m, c] = sum_o g[.., m, o] conj(r[m, o, c])
                    let mut dh = ComplexTensor::zeros(ht.shape());
                    for m in 0..km {
                        let gv = CView {
                            offset: m * o,
                            rows: b,
                            cols: o,
                            rs: km * o,
                            cs: 1,
                        };
                        let rv = CView {
                            offset: m * o * c,
                            rows: o,
                            cols: c,
                            rs: c,
                            cs: 1,
                        };
                        let hv = CView {
                            offset: m * c,
                            rows: b,
                            cols: c,
                            rs: km * c,
                            cs: 1,
                        };
                        cgemm(
                            (gd, gv),
                            (rt.as_real(), rv),
                            true,
                            T::zero(),
                            (complex_as_real_mut(dh.data_mut()), hv),
                        );
                    }
                    accumulate(&mut grads[h.0], Value::Complex(dh));
                }
                if wants(*r) {
                    // dr[m, o, c] = sum_b g[b, m, o] conj(h[b, m, c])
                    let mut dr = ComplexTensor::zeros(rt.shape());
                    for m in 0..km {
                        let gv = CView {
                            offset: m * o,
                            rows: b,
                            cols: o,
                            rs: km * o,
                            cs: 1,
                        };
                        let hv = CView {
                            offset: m * c,
                            rows: b,
                            cols: c,
                            rs: km * c,
                            cs: 1,
                        };
                        let rv = CView {
                            offset: m * o * c,
                            rows: o,
                            cols: c,
                            rs: c,
                            cs: 1,
                        };
                        cgemm(
                            (gd, gv.t()),
                            (ht.as_real(), hv),
                            true,
                            T::zero(),
                            (dr.as_real_mut(), rv),
                        );
                    }
                    accumulate(&mut grads[r.0], Value::Complex(dr));
                }
            }
            Op::Reshape { x } => {
                if wants(*x) {
                    let shape = self.nodes[x.0].value.shape().to_vec();
                    let dx = match g.clone() {
                        Value::Real(t) => Value::Real(t.reshape(&shape).expect("same size")),
                        Value::Complex(t) => Value::Complex(t.reshape(&shape).expect("same size")),
                    };
                    accumulate(&mut grads[x.0], dx);
                }
            }
            Op::Mse { pred, target } => {
                if wants(*pred) {
                    let g0 = g.as_real().expect("real cotangent").data()[0];
                    let pt = real(*pred);
                    let scale = g0 * T::lit(2.0) / T::lit(pt.len() as f64);
                    let mut dp = RealTensor::zeros(pt.shape());
                    for ((d, &p), &t) in dp.data_mut().iter_mut().zip(pt.data()).zip(target.data())
                    {
                        *d = scale * (p - t);
                    }
                    accumulate(&mut grads[pred.0], Value::Real(dp));
                }
            }
        }
    }
}

impl<T: Scalar> From<RealTensor<T>> for Value<T> {
    fn from(t: RealTensor<T>) -> Self {
        Value::Real(t)
    }
}

impl<T: Scalar> From<ComplexTensor<T>> for Value<T> {
    fn from(t: ComplexTensor<T>) -> Self {
        Value::Complex(t)
    }
}
