//! Truncated discrete Fourier transform along the grid axis.
//!
//! Convention: `h_m = sum_x v_x exp(-2 pi i m x / n)` for the retained modes
//! `m < k_max`, and the inverse zero-fills the dropped modes, mirrors the
//! retained ones into a Hermitian spectrum, and scales by `1/n`. The imaginary
//! parts of the DC and Nyquist coefficients do not reach a real signal and are
//! ignored by the inverse.
//!
//! Data layout is channels-last: a signal is `n x C` row-major, a spectrum is
//! `k_max x C`. Power-of-two lengths go through a radix-2 FFT (two real
//! channels packed into one complex transform); other lengths use direct
//! summation.

use std::f64::consts::PI;

use num_complex::Complex;

use crate::scalar::Scalar;

use super::dense::{ComplexTensor, RealTensor};
use super::TensorError;

/// Largest admissible number of retained modes for a length-`n` signal.
pub fn max_modes(n: usize) -> usize {
    n / 2 + 1
}

pub fn check_modes(n: usize, k_max: usize) -> Result<(), TensorError> {
    if n == 0 || k_max == 0 || k_max > max_modes(n) {
        return Err(TensorError::Modes { k_max, n });
    }
    Ok(())
}

/// `exp(-2 pi i r / n)` for `r = (m x) mod n`, evaluated in f64.
fn twiddle(r: usize, n: usize) -> (f64, f64) {
    let theta = 2.0 * PI * (r % n) as f64 / n as f64;
    (theta.cos(), -theta.sin())
}

/// In-place iterative radix-2 complex FFT.
#[derive(Clone, Debug)]
pub struct Fft<T> {
    n: usize,
    /// Stage twiddles: entries `h - 1 .. 2h - 1` hold `exp(-pi i j / h)`
    /// for the stage with half-length `h`, so every stage reads contiguously.
    twiddles: Vec<Complex<T>>,
    bitrev: Vec<u32>,
}

impl<T: Scalar> Fft<T> {
    pub fn new(n: usize) -> Result<Self, TensorError> {
        if n == 0 || !n.is_power_of_two() || n > u32::MAX as usize {
            return Err(TensorError::Shape(format!(
                "FFT length {n} is not a power of two"
            )));
        }
        let bits = n.trailing_zeros();
        let bitrev = (0..n as u32)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (32 - bits)
                }
            })
            .collect();
        let mut twiddles = Vec::with_capacity(n.saturating_sub(1));
        let mut half = 1;
        while half < n {
            for j in 0..half {
                let (c, s) = twiddle(j * (n / (2 * half)), n);
                twiddles.push(Complex::new(T::lit(c), T::lit(s)));
            }
            half <<= 1;
        }
        Ok(Self {
            n,
            twiddles,
            bitrev,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unnormalized transform with kernel `exp(-2 pi i m x / n)`.
    pub fn forward(&self, buf: &mut [Complex<T>]) {
        self.run::<false>(buf);
    }

    /// Unnormalized transform with kernel `exp(+2 pi i m x / n)`.
    pub fn backward(&self, buf: &mut [Complex<T>]) {
        self.run::<true>(buf);
    }

    fn run<const CONJ: bool>(&self, buf: &mut [Complex<T>]) {
        let n = self.n;
        assert_eq!(buf.len(), n);
        for i in 0..n {
            let j = self.bitrev[i] as usize;
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut half = 1;
        while half < n {
            let tw = &self.twiddles[half - 1..2 * half - 1];
            for block in buf.chunks_exact_mut(2 * half) {
                let (lo, hi) = block.split_at_mut(half);
                for ((a, b), w) in lo.iter_mut().zip(hi.iter_mut()).zip(tw) {
                    let w = if CONJ { w.conj() } else { *w };
                    let t = w * *b;
                    let u = *a;
                    *a = u + t;
                    *b = u - t;
                }
            }
            half <<= 1;
        }
    }
}

#[derive(Clone, Debug)]
enum Kind<T> {
    Fft(Fft<T>),
    /// `k_max x n` tables of `cos` and `-sin` of the mode angles.
    Direct {
        cos: Vec<T>,
        nsin: Vec<T>,
    },
}

/// Reusable transform plan for a fixed `(n, k_max)`.
#[derive(Clone, Debug)]
pub struct SpectralPlan<T> {
    n: usize,
    k_max: usize,
    kind: Kind<T>,
    /// Inverse weights: 1 for DC and Nyquist, 2 for interior modes.
    weights: Vec<T>,
}

/// Channel pairs transformed per strided pass over a channels-last signal.
const PAIRS: usize = 4;

/// Caller-owned scratch so a shared plan stays reentrant.
#[derive(Clone, Debug, Default)]
pub struct SpectralScratch<T> {
    buf: Vec<Complex<T>>,
}

impl<T: Scalar> SpectralPlan<T> {
    pub fn new(n: usize, k_max: usize) -> Result<Self, TensorError> {
        check_modes(n, k_max)?;
        let kind = if n.is_power_of_two() {
            Kind::Fft(Fft::new(n)?)
        } else {
            Self::direct_tables(n, k_max)
        };
        Ok(Self::with_kind(n, k_max, kind))
    }

    /// Plan that always uses direct summation.
    pub fn new_direct(n: usize, k_max: usize) -> Result<Self, TensorError> {
        check_modes(n, k_max)?;
        Ok(Self::with_kind(n, k_max, Self::direct_tables(n, k_max)))
    }

    fn with_kind(n: usize, k_max: usize, kind: Kind<T>) -> Self {
        let weights = (0..k_max).map(|m| T::lit(mode_weight(m, n))).collect();
        Self {
            n,
            k_max,
            kind,
            weights,
        }
    }

    fn direct_tables(n: usize, k_max: usize) -> Kind<T> {
        let mut cos = Vec::with_capacity(k_max * n);
        let mut nsin = Vec::with_capacity(k_max * n);
        for m in 0..k_max {
            for x in 0..n {
                let (c, s) = twiddle(m * x, n);
                cos.push(T::lit(c));
                nsin.push(T::lit(if is_self_conjugate(m, n) { 0.0 } else { s }));
            }
        }
        Kind::Direct { cos, nsin }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn uses_fft(&self) -> bool {
        matches!(self.kind, Kind::Fft(_))
    }

    /// Retained spectrum of one `n x C` signal into `out` (`k_max x C`).
    pub fn forward(
        &self,
        v: &[T],
        channels: usize,
        out: &mut [Complex<T>],
        scratch: &mut SpectralScratch<T>,
    ) {
        let (n, km) = (self.n, self.k_max);
        assert_eq!(v.len(), n * channels);
        assert_eq!(out.len(), km * channels);
        match &self.kind {
            Kind::Direct { cos, nsin } => {
                // Plain loops: the product is k_max x n and must not allocate.
                for m in 0..km {
                    let row = &mut out[m * channels..(m + 1) * channels];
                    row.iter_mut()
                        .for_each(|z| *z = Complex::new(T::zero(), T::zero()));
                    for x in 0..n {
                        let (cm, sm) = (cos[m * n + x], nsin[m * n + x]);
                        for (z, &vx) in row.iter_mut().zip(&v[x * channels..(x + 1) * channels]) {
                            z.re += cm * vx;
                            z.im += sm * vx;
                        }
                    }
                }
            }
            Kind::Fft(fft) => {
                let bufs = scratch.sized(n * PAIRS);
                let half = T::lit(0.5);
                // Channel pairs are packed as re/im of one complex signal;
                // PAIRS of them share each strided pass over `v`.
                for c0 in (0..channels).step_by(2 * PAIRS) {
                    let width = (channels - c0).min(2 * PAIRS);
                    let n_pairs = width.div_ceil(2);
                    for x in 0..n {
                        let row = &v[x * channels + c0..x * channels + c0 + width];
                        for p in 0..n_pairs {
                            let im = row.get(2 * p + 1).copied().unwrap_or(T::zero());
                            bufs[p * n + x] = Complex::new(row[2 * p], im);
                        }
                    }
                    for p in 0..n_pairs {
                        let buf = &mut bufs[p * n..(p + 1) * n];
                        fft.forward(buf);
                        let c = c0 + 2 * p;
                        let pair = c + 1 < channels;
                        for m in 0..km {
                            let z = buf[m];
                            let zc = buf[(n - m) % n].conj();
                            // Spectra of the two packed real channels.
                            out[m * channels + c] = (z + zc) * half;
                            if pair {
                                let d = (z - zc) * half;
                                out[m * channels + c + 1] = Complex::new(d.im, -d.re);
                            }
                        }
                    }
                }
                for m in 0..km {
                    if is_self_conjugate(m, n) {
                        for ch in 0..channels {
                            out[m * channels + ch].im = T::zero();
                        }
                    }
                }
            }
        }
    }

    /// Real signal (`n x C`) from a retained spectrum (`k_max x C`).
    pub fn inverse(
        &self,
        h: &[Complex<T>],
        channels: usize,
        out: &mut [T],
        scratch: &mut SpectralScratch<T>,
    ) {
        let (n, km) = (self.n, self.k_max);
        assert_eq!(h.len(), km * channels);
        assert_eq!(out.len(), n * channels);
        let inv_n = T::one() / T::lit(n as f64);
        match &self.kind {
            Kind::Direct { cos, nsin } => {
                // out = (1/n) sum_m w_m (re cos + im (-sin))
                out.iter_mut().for_each(|o| *o = T::zero());
                for m in 0..km {
                    let w = self.weights[m] * inv_n;
                    let hm = &h[m * channels..(m + 1) * channels];
                    for x in 0..n {
                        let (cm, sm) = (cos[m * n + x] * w, nsin[m * n + x] * w);
                        for (o, z) in out[x * channels..(x + 1) * channels].iter_mut().zip(hm) {
                            *o += cm * z.re + sm * z.im;
                        }
                    }
                }
            }
            Kind::Fft(fft) => {
                let bufs = scratch.sized(n * PAIRS);
                for c0 in (0..channels).step_by(2 * PAIRS) {
                    let width = (channels - c0).min(2 * PAIRS);
                    let n_pairs = width.div_ceil(2);
                    for p in 0..n_pairs {
                        let buf = &mut bufs[p * n..(p + 1) * n];
                        let c = c0 + 2 * p;
                        let pair = c + 1 < channels;
                        buf.iter_mut()
                            .for_each(|z| *z = Complex::new(T::zero(), T::zero()));
                        for m in 0..km {
                            let mut a = h[m * channels + c];
                            let mut b = if pair {
                                h[m * channels + c + 1]
                            } else {
                                Complex::new(T::zero(), T::zero())
                            };
                            if is_self_conjugate(m, n) {
                                a.im = T::zero();
                                b.im = T::zero();
                            }
                            // a + i b
                            buf[m] = Complex::new(a.re - b.im, a.im + b.re);
                            if !is_self_conjugate(m, n) {
                                // conj(a) + i conj(b)
                                buf[n - m] = Complex::new(a.re + b.im, b.re - a.im);
                            }
                        }
                        fft.backward(buf);
                    }
                    for x in 0..n {
                        let row = &mut out[x * channels + c0..x * channels + c0 + width];
                        for p in 0..n_pairs {
                            let z = bufs[p * n + x];
                            row[2 * p] = z.re * inv_n;
                            if let Some(o) = row.get_mut(2 * p + 1) {
                                *o = z.im * inv_n;
                            }
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`forward`](Self::forward): maps a spectrum cotangent to a
    /// signal cotangent, `dv_x = sum_m Re(g_m exp(2 pi i m x / n))`.
    pub fn forward_adjoint(
        &self,
        g: &[Complex<T>],
        channels: usize,
        out: &mut [T],
        scratch: &mut SpectralScratch<T>,
    ) {
        let n_t = T::lit(self.n as f64);
        let mut scaled: Vec<Complex<T>> = g.to_vec();
        for m in 0..self.k_max {
            let f = n_t / self.weights[m];
            for ch in 0..channels {
                scaled[m * channels + ch] *= f;
            }
        }
        self.inverse(&scaled, channels, out, scratch);
    }

    /// Adjoint of [`inverse`](Self::inverse).
    pub fn inverse_adjoint(
        &self,
        g: &[T],
        channels: usize,
        out: &mut [Complex<T>],
        scratch: &mut SpectralScratch<T>,
    ) {
        self.forward(g, channels, out, scratch);
        let inv_n = T::one() / T::lit(self.n as f64);
        for m in 0..self.k_max {
            let f = self.weights[m] * inv_n;
            for ch in 0..channels {
                let z = &mut out[m * channels + ch];
                *z *= f;
                if is_self_conjugate(m, self.n) {
                    z.im = T::zero();
                }
            }
        }
    }
}

impl<T: Scalar> SpectralScratch<T> {
    pub fn new() -> Self {
        Self { buf: Vec::new() }
    }

    fn sized(&mut self, n: usize) -> &mut [Complex<T>] {
        if self.buf.len() != n {
            self.buf.resize(n, Complex::new(T::zero(), T::zero()));
        }
        &mut self.buf
    }
}

/// DC and (for even `n`) Nyquist modes equal their own conjugate partner.
#[inline]
fn is_self_conjugate(m: usize, n: usize) -> bool {
    m == 0 || 2 * m == n
}

fn mode_weight(m: usize, n: usize) -> f64 {
    if is_self_conjugate(m, n) {
        1.0
    } else {
        2.0
    }
}

/// Splits a channels-last tensor `[.., n, C]` into `(batch, n, C)`.
fn batch_dims(shape: &[usize]) -> Result<(usize, usize, usize), TensorError> {
    match shape.len() {
        0 => Err(TensorError::Shape("scalar has no grid axis".into())),
        1 => Ok((1, shape[0], 1)),
        _ => {
            let c = shape[shape.len() - 1];
            let n = shape[shape.len() - 2];
            Ok((shape[..shape.len() - 2].iter().product(), n, c))
        }
    }
}

/// Retained Fourier modes of `v` (`[.., n, C]` or `[n]`) along the grid axis.
pub fn dft_forward<T: Scalar>(
    v: &RealTensor<T>,
    k_max: usize,
) -> Result<ComplexTensor<T>, TensorError> {
    let (b, n, c) = batch_dims(v.shape())?;
    let plan = SpectralPlan::new(n, k_max)?;
    let mut out_shape = v.shape().to_vec();
    if out_shape.len() == 1 {
        out_shape[0] = k_max;
    } else {
        let at = out_shape.len() - 2;
        out_shape[at] = k_max;
    }
    let mut out = ComplexTensor::zeros(&out_shape);
    let mut scratch = SpectralScratch::new();
    for i in 0..b {
        plan.forward(
            &v.data()[i * n * c..(i + 1) * n * c],
            c,
            &mut out.data_mut()[i * k_max * c..(i + 1) * k_max * c],
            &mut scratch,
        );
    }
    Ok(out)
}

/// Real length-`n` signal from retained modes (`[.., k_max, C]` or `[k_max]`).
pub fn dft_inverse<T: Scalar>(
    h: &ComplexTensor<T>,
    n: usize,
) -> Result<RealTensor<T>, TensorError> {
    let (b, k_max, c) = batch_dims(h.shape())?;
    let plan = SpectralPlan::new(n, k_max)?;
    let mut out_shape = h.shape().to_vec();
    if out_shape.len() == 1 {
        out_shape[0] = n;
    } else {
        let at = out_shape.len() - 2;
        out_shape[at] = n;
    }
    let mut out = RealTensor::zeros(&out_shape);
    let mut scratch = SpectralScratch::new();
    for i in 0..b {
        plan.inverse(
            &h.data()[i * k_max * c..(i + 1) * k_max * c],
            c,
            &mut out.data_mut()[i * n * c..(i + 1) * n * c],
            &mut scratch,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_xoshiro::Xoshiro256StarStar;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Direct O(n^2) summation, independent of the plan code.
    fn naive(v: &[f64], k_max: usize) -> Vec<(f64, f64)> {
        let n = v.len();
        (0..k_max)
            .map(|m| {
                let mut acc = (0.0, 0.0);
                for (x, &vx) in v.iter().enumerate() {
                    let a = -2.0 * PI * (m * x) as f64 / n as f64;
                    acc.0 += vx * a.cos();
                    acc.1 += vx * a.sin();
                }
                acc
            })
            .collect()
    }

    #[test]
    fn constant_signal() {
        let v = RealTensor::from_vec(&[8], vec![2.5; 8]).unwrap();
        let h = dft_forward(&v, 3).unwrap();
        assert!((h.data()[0].re - 20.0_f64).abs() < 1e-12);
        for z in &h.data()[1..] {
            assert!(z.norm() < 1e-12);
        }
    }

    #[test]
    fn cosine_hits_mode_one() {
        let n = 8;
        let v: Vec<f64> = (0..n)
            .map(|x| (2.0 * PI * x as f64 / n as f64).cos())
            .collect();
        let h = dft_forward(&RealTensor::from_vec(&[n], v).unwrap(), 5).unwrap();
        for (m, z) in h.data().iter().enumerate() {
            let expect = if m == 1 { 4.0 } else { 0.0 };
            assert!(
                (z.re - expect).abs() < 1e-12 && z.im.abs() < 1e-12,
                "mode {m}: {z}"
            );
        }
    }

    #[test]
    fn matches_naive_summation() {
        for &n in &[16usize, 12, 5, 4, 1] {
            let km = max_modes(n);
            let v = random(n * 3, n as u64);
            let t = RealTensor::from_vec(&[n, 3], v.clone()).unwrap();
            let h = dft_forward(&t, km).unwrap();
            for ch in 0..3 {
                let col: Vec<f64> = (0..n).map(|x| v[x * 3 + ch]).collect();
                for (m, (re, im)) in naive(&col, km).into_iter().enumerate() {
                    let z = h.data()[m * 3 + ch];
                    assert!((z.re - re).abs() < 1e-10 && (z.im - im).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn fft_and_direct_plans_agree() {
        let n = 32;
        let v = random(n * 5, 9);
        let fft = SpectralPlan::<f64>::new(n, 7).unwrap();
        let direct = SpectralPlan::<f64>::new_direct(n, 7).unwrap();
        assert!(fft.uses_fft() && !direct.uses_fft());
        let mut s = SpectralScratch::new();
        let mut a = vec![Complex::new(0.0, 0.0); 35];
        let mut b = a.clone();
        fft.forward(&v, 5, &mut a, &mut s);
        direct.forward(&v, 5, &mut b, &mut s);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-12);
        }
        let mut ia = vec![0.0; n * 5];
        let mut ib = ia.clone();
        fft.inverse(&a, 5, &mut ia, &mut s);
        direct.inverse(&a, 5, &mut ib, &mut s);
        for (x, y) in ia.iter().zip(&ib) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn full_round_trip_is_identity() {
        for &n in &[4usize, 7, 16, 64] {
            let v = random(n * 2, 3 + n as u64);
            let t = RealTensor::from_vec(&[n, 2], v.clone()).unwrap();
            let back = dft_inverse(&dft_forward(&t, max_modes(n)).unwrap(), n).unwrap();
            for (a, b) in back.data().iter().zip(&v) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn truncated_round_trip_is_low_pass_projection() {
        let n = 16;
        let km = 4;
        let v = random(n, 17);
        // Oracle: full naive spectrum, zero modes >= km (and their mirrors),
        // then naive inverse summation.
        let full: Vec<(f64, f64)> = naive(&v, n);
        let kept = |m: usize| m < km || n - m < km;
        let expect: Vec<f64> = (0..n)
            .map(|x| {
                let mut acc = 0.0;
                for (m, &(re, im)) in full.iter().enumerate() {
                    if kept(m) {
                        let a = 2.0 * PI * (m * x) as f64 / n as f64;
                        acc += re * a.cos() - im * a.sin();
                    }
                }
                acc / n as f64
            })
            .collect();
        let got = dft_inverse(
            &dft_forward(&RealTensor::from_vec(&[n], v).unwrap(), km).unwrap(),
            n,
        )
        .unwrap();
        for (a, b) in got.data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_modes_give_zero_signal() {
        let h = ComplexTensor::<f64>::zeros(&[3, 2]);
        assert!(dft_inverse(&h, 8).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_out_of_range_modes() {
        let v = RealTensor::<f64>::zeros(&[8, 1]);
        assert!(matches!(dft_forward(&v, 6), Err(TensorError::Modes { .. })));
        assert!(matches!(dft_forward(&v, 0), Err(TensorError::Modes { .. })));
        assert!(dft_forward(&v, 5).is_ok());
    }

    #[test]
    fn adjoints_satisfy_inner_product_identity() {
        for &n in &[8usize, 6] {
            let km = max_modes(n);
            let plan = SpectralPlan::<f64>::new(n, km).unwrap();
            let mut s = SpectralScratch::new();
            let v = random(n * 2, 1);
            let gr = random(km * 4, 2);
            let g: Vec<Complex<f64>> = gr.chunks(2).map(|p| Complex::new(p[0], p[1])).collect();
            // <F v, g>_R = <v, F* g>
            let mut fv = vec![Complex::new(0.0, 0.0); km * 2];
            plan.forward(&v, 2, &mut fv, &mut s);
            let lhs: f64 = fv
                .iter()
                .zip(&g)
                .map(|(a, b)| a.re * b.re + a.im * b.im)
                .sum();
            let mut adj = vec![0.0; n * 2];
            plan.forward_adjoint(&g, 2, &mut adj, &mut s);
            let rhs: f64 = v.iter().zip(&adj).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10, "n={n}: {lhs} vs {rhs}");

            let mut iv = vec![0.0; n * 2];
            plan.inverse(&g, 2, &mut iv, &mut s);
            let lhs: f64 = iv.iter().zip(&v).map(|(a, b)| a * b).sum();
            let mut iadj = vec![Complex::new(0.0, 0.0); km * 2];
            plan.inverse_adjoint(&v, 2, &mut iadj, &mut s);
            let rhs: f64 = iadj
                .iter()
                .zip(&g)
                .map(|(a, b)| a.re * b.re + a.im * b.im)
                .sum();
            assert!((lhs - rhs).abs() < 1e-10, "n={n}: {lhs} vs {rhs}");
        }
    }

    proptest! {
        #[test]
        fn parseval_and_linearity(seed in 0u64..500, log_n in 1u32..7) {
            let n = 1usize << log_n;
            let v = random(n, seed);
            let w = random(n, seed + 1000);
            let km = max_modes(n);
            let fv = dft_forward(&RealTensor::from_vec(&[n], v.clone()).unwrap(), km).unwrap();
            let energy: f64 = v.iter().map(|x| x * x).sum();
            let spec: f64 = fv.data().iter().enumerate()
                .map(|(m, z)| mode_weight(m, n) * z.norm_sqr()).sum::<f64>() / n as f64;
            prop_assert!((energy - spec).abs() < 1e-10 * (1.0 + energy));

            let sum: Vec<f64> = v.iter().zip(&w).map(|(a, b)| 2.0 * a - b).collect();
            let fs = dft_forward(&RealTensor::from_vec(&[n], sum).unwrap(), km).unwrap();
            let fw = dft_forward(&RealTensor::from_vec(&[n], w).unwrap(), km).unwrap();
            for m in 0..km {
                let expect = fv.data()[m] * 2.0 - fw.data()[m];
                prop_assert!((fs.data()[m] - expect).norm() < 1e-10);
            }
        }
    }
}
