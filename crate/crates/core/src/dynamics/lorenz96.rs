use crate::scalar::Scalar;

use super::rk4::OdeState;
use super::DynamicsError;

/// Physical and discretization constants of the two-scale Lorenz96 system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleParams<T> {
    /// Number of large-scale variables `X_k`.
    pub k: usize,
    /// Number of small-scale variables per large-scale box.
    pub j: usize,
    pub forcing: T,
    /// Coupling strength `h_s`.
    pub coupling: T,
    /// Relative magnitude of the scales.
    pub b: T,
    /// Evolution speed of the small scale.
    pub c: T,
    /// RK4 step in model time units.
    pub dt: T,
}

impl<T: Scalar> Default for ScaleParams<T> {
    fn default() -> Self {
        Self {
            k: 4,
            j: 4,
            forcing: T::lit(20.0),
            coupling: T::lit(0.5),
            b: T::lit(10.0),
            c: T::lit(8.0),
            dt: T::lit(0.005),
        }
    }
}

impl<T: Scalar> ScaleParams<T> {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let bad = |m: &str| Err(DynamicsError::InvalidParams(m.to_string()));
        if self.k < 4 || self.j < 4 {
            return bad("K and J must both be at least 4");
        }
        if !(self.dt > T::zero() && self.dt.is_finite()) {
            return bad("dt must be positive and finite");
        }
        if ![self.forcing, self.coupling, self.b, self.c]
            .iter()
            .all(|v| v.is_finite())
        {
            return bad("F, h_s, b, c must be finite");
        }
        if self.b == T::zero() {
            return bad("b must be nonzero");
        }
        Ok(())
    }

    /// `h_s * c / b`, the prefactor of both coupling terms.
    #[inline]
    pub fn coupling_coeff(&self) -> T {
        self.coupling * self.c / self.b
    }

    /// Same parameters at a different grid size.
    pub fn with_sizes(mut self, k: usize, j: usize) -> Self {
        self.k = k;
        self.j = j;
        self
    }
}

/// Full high-resolution state: `X` (length K) followed by `Y` stored box-major,
/// i.e. `Y_{j,k}` lives at `y[k * J + j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FullState<T> {
    k: usize,
    j: usize,
    data: Vec<T>,
}

impl<T: Scalar> FullState<T> {
    pub fn zeros(k: usize, j: usize) -> Self {
        Self {
            k,
            j,
            data: vec![T::zero(); k * (j + 1)],
        }
    }

    /// Builds a state from `X` and box-major `Y`.
    pub fn from_parts(x: &[T], y: &[T], j: usize) -> Result<Self, DynamicsError> {
        let k = x.len();
        if y.len() != k * j {
            return Err(DynamicsError::Shape {
                expected: k * j,
                got: y.len(),
            });
        }
        let mut data = Vec::with_capacity(k * (j + 1));
        data.extend_from_slice(x);
        data.extend_from_slice(y);
        Ok(Self { k, j, data })
    }

    /// Builds a state from the interleaved vector
    /// `u = [X_0, Y_{0,0}, .., Y_{J-1,0}, X_1, Y_{0,1}, ..]`.
    pub fn from_flat(u: &[T], k: usize, j: usize) -> Result<Self, DynamicsError> {
        if u.len() != k * (j + 1) {
            return Err(DynamicsError::Shape {
                expected: k * (j + 1),
                got: u.len(),
            });
        }
        let mut s = Self::zeros(k, j);
        for kk in 0..k {
            let base = kk * (j + 1);
            s.data[kk] = u[base];
            s.data[k + kk * j..k + (kk + 1) * j].copy_from_slice(&u[base + 1..base + 1 + j]);
        }
        Ok(s)
    }

    /// Interleaved vector with `X_k` at position `k (J + 1)`.
    pub fn to_flat(&self) -> Vec<T> {
        let mut u = Vec::with_capacity(self.data.len());
        for kk in 0..self.k {
            u.push(self.data[kk]);
            u.extend_from_slice(self.y_box(kk));
        }
        u
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn j(&self) -> usize {
        self.j
    }

    pub fn x(&self) -> &[T] {
        &self.data[..self.k]
    }

    pub fn x_mut(&mut self) -> &mut [T] {
        &mut self.data[..self.k]
    }

    /// Box-major small-scale field.
    pub fn y(&self) -> &[T] {
        &self.data[self.k..]
    }

    pub fn y_mut(&mut self) -> &mut [T] {
        let k = self.k;
        &mut self.data[k..]
    }

    #[inline]
    pub fn y_at(&self, j: usize, k: usize) -> T {
        self.data[self.k + k * self.j + j]
    }

    /// The `J` small-scale values of box `k`.
    pub fn y_box(&self, k: usize) -> &[T] {
        let start = self.k + k * self.j;
        &self.data[start..start + self.j]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rotates both scales by `shift` boxes: `X'_k = X_{k-shift}`, `Y'_{j,k} = Y_{j,k-shift}`.
    pub fn roll(&self, shift: usize) -> Self {
        let mut out = Self::zeros(self.k, self.j);
        for kk in 0..self.k {
            let dst = (kk + shift) % self.k;
            out.data[dst] = self.data[kk];
            let (s, d) = (self.k + kk * self.j, self.k + dst * self.j);
            out.data[d..d + self.j].copy_from_slice(&self.data[s..s + self.j]);
        }
        out
    }
}

impl<T: Scalar> OdeState<T> for FullState<T> {
    fn values(&self) -> &[T] {
        &self.data
    }

    fn values_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

/// Filtered large-scale state `X`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoarseState<T> {
    pub x: Vec<T>,
}

impl<T: Scalar> CoarseState<T> {
    pub fn new(x: Vec<T>) -> Self {
        Self { x }
    }

    pub fn k(&self) -> usize {
        self.x.len()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite())
    }
}

impl<T: Scalar> OdeState<T> for CoarseState<T> {
    fn values(&self) -> &[T] {
        &self.x
    }

    fn values_mut(&mut self) -> &mut [T] {
        &mut self.x
    }
}

#[inline]
fn wrap_back(i: usize, by: usize, n: usize) -> usize {
    (i + n - by) % n
}

/// Large-scale advection, damping and forcing for box `k`:
/// `X_{k-1}(X_{k+1} - X_{k-2}) - X_k + F`.
#[inline(always)]
fn resolved_x<T: Scalar>(x: &[T], k: usize, forcing: T) -> T {
    let n = x.len();
    let km1 = wrap_back(k, 1, n);
    let km2 = wrap_back(k, 2, n);
    let kp1 = (k + 1) % n;
    x[km1] * (x[kp1] - x[km2]) - x[k] + forcing
}

/// Small-scale tendency of one box, written into `out`.
#[inline(always)]
fn box_tendency<T: Scalar>(yb: &[T], out: &mut [T], cb: T, c: T, drive: T) {
    let n = yb.len();
    let f = |jm1: usize, j: usize, jp1: usize, jp2: usize| {
        -cb * yb[jp1] * (yb[jp2] - yb[jm1]) - c * yb[j] + drive
    };
    out[0] = f(n - 1, 0, 1, 2);
    for j in 1..n - 2 {
        out[j] = f(j - 1, j, j + 1, j + 2);
    }
    out[n - 2] = f(n - 3, n - 2, n - 1, 0);
    out[n - 1] = f(n - 2, n - 1, 0, 1);
}

/// Full two-scale tendency written into `out` (same layout as the state).
///
/// Boxes are visited in order of `k`; within a box the `Y` sum and tendencies
/// run over `j` in order, so results are bit-reproducible.
pub fn full_tendency_into<T: Scalar>(s: &FullState<T>, p: &ScaleParams<T>, out: &mut FullState<T>) {
    debug_assert_eq!(s.data.len(), out.data.len());
    let (k_n, j_n) = (s.k, s.j);
    let hcb = p.coupling_coeff();
    let cb = p.c * p.b;
    let x = s.x();
    let (out_x, out_y) = out.data.split_at_mut(k_n);
    for k in 0..k_n {
        let yb = s.y_box(k);
        let mut sum = T::zero();
        for &v in yb {
            sum += v;
        }
        out_x[k] = resolved_x(x, k, p.forcing) - hcb * sum;
        box_tendency(yb, &mut out_y[k * j_n..(k + 1) * j_n], cb, p.c, hcb * x[k]);
    }
}

pub fn full_tendency<T: Scalar>(s: &FullState<T>, p: &ScaleParams<T>) -> FullState<T> {
    let mut out = FullState::zeros(s.k, s.j);
    full_tendency_into(s, p, &mut out);
    out
}

/// Known large-scale tendency without any coupling term.
pub fn coarse_tendency_into<T: Scalar>(x: &[T], forcing: T, out: &mut [T]) {
    debug_assert_eq!(x.len(), out.len());
    for (k, o) in out.iter_mut().enumerate() {
        *o = resolved_x(x, k, forcing);
    }
}

pub fn coarse_tendency<T: Scalar>(s: &CoarseState<T>, p: &ScaleParams<T>) -> CoarseState<T> {
    let mut out = vec![T::zero(); s.x.len()];
    coarse_tendency_into(&s.x, p.forcing, &mut out);
    CoarseState::new(out)
}

/// Large-scale projection: the kernel selects the `X` entries.
pub fn filter<T: Scalar>(s: &FullState<T>) -> CoarseState<T> {
    CoarseState::new(s.x().to_vec())
}

/// Commutation error `filter(N(u)) - N(filter(u))` on the large-scale grid.
pub fn subgrid_target<T: Scalar>(s: &FullState<T>, p: &ScaleParams<T>) -> Vec<T> {
    let filtered_full = filter(&full_tendency(s, p));
    let coarse = coarse_tendency(&filter(s), p);
    filtered_full
        .x
        .iter()
        .zip(&coarse.x)
        .map(|(&a, &b)| a - b)
        .collect()
}

/// `-(h_s c / b) * sum_j Y_{j,k}`, the closed form the commutation error reduces to.
pub fn subgrid_target_closed_form<T: Scalar>(s: &FullState<T>, p: &ScaleParams<T>) -> Vec<T> {
    let hcb = p.coupling_coeff();
    (0..s.k)
        .map(|k| {
            let mut sum = T::zero();
            for &v in s.y_box(k) {
                sum += v;
            }
            -hcb * sum
        })
        .collect()
}
