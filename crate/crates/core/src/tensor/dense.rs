use num_complex::Complex;

use crate::scalar::Scalar;

use super::TensorError;

/// Dense row-major real tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct RealTensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

/// Dense row-major complex tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor<T> {
    shape: Vec<usize>,
    data: Vec<Complex<T>>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

macro_rules! tensor_common {
    ($ty:ident, $elem:ty) => {
        impl<T: Scalar> $ty<T> {
            pub fn zeros(shape: &[usize]) -> Self {
                Self {
                    shape: shape.to_vec(),
                    data: vec![<$elem>::default(); numel(shape)],
                }
            }

            pub fn from_vec(shape: &[usize], data: Vec<$elem>) -> Result<Self, TensorError> {
                if numel(shape) != data.len() {
                    return Err(TensorError::Shape(format!(
                        "shape {:?} needs {} values, got {}",
                        shape,
                        numel(shape),
                        data.len()
                    )));
                }
                Ok(Self {
                    shape: shape.to_vec(),
                    data,
                })
            }

            pub fn shape(&self) -> &[usize] {
                &self.shape
            }

            pub fn data(&self) -> &[$elem] {
                &self.data
            }

            pub fn data_mut(&mut self) -> &mut [$elem] {
                &mut self.data
            }

            pub fn into_data(self) -> Vec<$elem> {
                self.data
            }

            pub fn len(&self) -> usize {
                self.data.len()
            }

            pub fn is_empty(&self) -> bool {
                self.data.is_empty()
            }

            /// Size of the trailing dimension.
            pub fn last_dim(&self) -> usize {
                self.shape.last().copied().unwrap_or(1)
            }

            pub fn reshape(mut self, shape: &[usize]) -> Result<Self, TensorError> {
                if numel(shape) != self.data.len() {
                    return Err(TensorError::Shape(format!(
                        "cannot reshape {:?} to {:?}",
                        self.shape, shape
                    )));
                }
                self.shape = shape.to_vec();
                Ok(self)
            }
        }
    };
}

tensor_common!(RealTensor, T);
tensor_common!(ComplexTensor, Complex<T>);

impl<T: Scalar> RealTensor<T> {
    pub fn scalar(v: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T: Scalar> ComplexTensor<T> {
    pub fn is_finite(&self) -> bool {
        self.data
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    /// Interleaved `(re, im)` view.
    pub fn as_real(&self) -> &[T] {
        complex_as_real(&self.data)
    }

    pub fn as_real_mut(&mut self) -> &mut [T] {
        complex_as_real_mut(&mut self.data)
    }
}

/// Reinterprets complex values as interleaved `(re, im)` scalars.
pub fn complex_as_real<T>(xs: &[Complex<T>]) -> &[T] {
    // SAFETY: `Complex<T>` is `#[repr(C)]` with fields `re, im` of type `T`,
    // so a slice of n complex values has the layout of 2n scalars.
    unsafe { std::slice::from_raw_parts(xs.as_ptr() as *const T, xs.len() * 2) }
}

pub fn complex_as_real_mut<T>(xs: &mut [Complex<T>]) -> &mut [T] {
    // SAFETY: see `complex_as_real`.
    unsafe { std::slice::from_raw_parts_mut(xs.as_mut_ptr() as *mut T, xs.len() * 2) }
}

/// `out[i, o] = bias[o] + sum_c x[i, c] w[o, c]` for row-major `x` (`rows x
/// inner`) and `w` (`out_dim x inner`). Never allocates.
pub fn matmul_nt_bias<T: Scalar>(x: &[T], inner: usize, w: &[T], bias: &[T], out: &mut [T]) {
    let out_dim = bias.len();
    assert_eq!(w.len(), out_dim * inner);
    assert_eq!(x.len() / inner.max(1), out.len() / out_dim.max(1));
    // Four rows share each weight-row load; every element keeps the
    // summation order of `dot`, so results match the unblocked product.
    let xs = x.chunks_exact(4 * inner);
    let tail = xs.remainder();
    for (xb, ob) in xs.zip(out.chunks_exact_mut(4 * out_dim)) {
        for (o, (wr, &b)) in w.chunks_exact(inner).zip(bias).enumerate() {
            let d = dot4(xb, inner, wr);
            for (r, dr) in d.into_iter().enumerate() {
                ob[r * out_dim + o] = b + dr;
            }
        }
    }
    let done = out.len() - tail.len() / inner.max(1) * out_dim;
    for (xr, or) in tail
        .chunks_exact(inner)
        .zip(out[done..].chunks_exact_mut(out_dim))
    {
        for ((o, wr), &b) in or.iter_mut().zip(w.chunks_exact(inner)).zip(bias) {
            *o = b + dot(xr, wr);
        }
    }
}

/// [`dot`] of four consecutive rows of `x` against one `w` row.
#[inline]
fn dot4<T: Scalar>(x: &[T], inner: usize, w: &[T]) -> [T; 4] {
    let mut acc = [[T::zero(); 4]; 4];
    let body = inner / 4 * 4;
    for i in (0..body).step_by(4) {
        let wc = &w[i..i + 4];
        for (r, a) in acc.iter_mut().enumerate() {
            let xc = &x[r * inner + i..r * inner + i + 4];
            a[0] += xc[0] * wc[0];
            a[1] += xc[1] * wc[1];
            a[2] += xc[2] * wc[2];
            a[3] += xc[3] * wc[3];
        }
    }
    let mut out = [T::zero(); 4];
    for (r, (o, a)) in out.iter_mut().zip(&acc).enumerate() {
        let mut s = (a[0] + a[1]) + (a[2] + a[3]);
        for i in body..inner {
            s += x[r * inner + i] * w[i];
        }
        *o = s;
    }
    out
}

/// Dot product with four independent partial sums.
#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let (ac, ar) = a.split_at(a.len() / 4 * 4);
    let (bc, br) = b.split_at(ac.len());
    for (x, y) in ac.chunks_exact(4).zip(bc.chunks_exact(4)) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ar.iter().zip(br) {
        s += *x * *y;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_checks() {
        assert!(RealTensor::<f64>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
        let t = RealTensor::<f64>::from_vec(&[2, 3], vec![1.0; 6]).unwrap();
        assert_eq!(t.last_dim(), 3);
        let t = t.reshape(&[3, 2]).unwrap();
        assert_eq!(t.shape(), &[3, 2]);
        assert!(t.reshape(&[4]).is_err());
    }

    #[test]
    fn matmul_kernel_matches_loops() {
        let x: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37).sin()).collect();
        let w: Vec<f64> = (0..10).map(|i| (i as f64 * 0.11).cos()).collect();
        let b = [0.5, -1.0];
        let mut out = [0.0; 6];
        matmul_nt_bias(&x, 5, &w, &b, &mut out);
        for i in 0..3 {
            for o in 0..2 {
                let e: f64 = b[o] + (0..5).map(|c| x[i * 5 + c] * w[o * 5 + c]).sum::<f64>();
                assert!((out[i * 2 + o] - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn blocked_rows_match_row_dots_bitwise() {
        for inner in [1, 3, 4, 7, 64] {
            for rows in [1, 4, 5, 11] {
                let out_dim = 3;
                let x: Vec<f64> = (0..rows * inner)
                    .map(|i| (i as f64 * 0.713).sin())
                    .collect();
                let w: Vec<f64> = (0..out_dim * inner)
                    .map(|i| (i as f64 * 0.291).cos())
                    .collect();
                let b = [0.25, -0.5, 2.0];
                let mut out = vec![0.0; rows * out_dim];
                matmul_nt_bias(&x, inner, &w, &b, &mut out);
                for r in 0..rows {
                    for o in 0..out_dim {
                        let e = b[o]
                            + dot(
                                &x[r * inner..(r + 1) * inner],
                                &w[o * inner..(o + 1) * inner],
                            );
                        assert_eq!(
                            out[r * out_dim + o].to_bits(),
                            e.to_bits(),
                            "inner {inner} rows {rows}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn interleaved_view() {
        let mut c = ComplexTensor::<f64>::from_vec(
            &[2],
            vec![Complex::new(1.0, 2.0), Complex::new(3.0, 4.0)],
        )
        .unwrap();
        assert_eq!(c.as_real(), &[1.0, 2.0, 3.0, 4.0]);
        c.as_real_mut()[3] = -1.0;
        assert_eq!(c.data()[1], Complex::new(3.0, -1.0));
    }
}
