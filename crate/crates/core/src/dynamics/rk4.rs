use crate::scalar::Scalar;

use super::DynamicsError;

/// A state that can be advanced by an explicit integrator: a fixed-length
/// vector of scalars.
pub trait OdeState<T>: Clone {
    fn values(&self) -> &[T];
    fn values_mut(&mut self) -> &mut [T];
}

impl<T: Scalar> OdeState<T> for Vec<T> {
    fn values(&self) -> &[T] {
        self
    }

    fn values_mut(&mut self) -> &mut [T] {
        self
    }
}

/// Classical fourth-order Runge-Kutta with preallocated stage buffers.
///
/// `k1 = f(s)`, `k2 = f(s + dt/2 k1)`, `k3 = f(s + dt/2 k2)`, `k4 = f(s + dt k3)`,
/// `s' = s + dt/6 (k1 + 2 k2 + 2 k3 + k4)`. Stages are folded into a running
/// accumulator, so a step never allocates.
#[derive(Clone, Debug)]
pub struct Rk4<S> {
    stage: S,
    deriv: S,
    acc: S,
}

impl<S> Rk4<S> {
    pub fn new(template: &S) -> Self
    where
        S: Clone,
    {
        Self {
            stage: template.clone(),
            deriv: template.clone(),
            acc: template.clone(),
        }
    }

    /// Advances `state` in place by one step of size `dt`.
    ///
    /// `tendency(s, out)` must overwrite every entry of `out`. Returns
    /// [`DynamicsError::NonFinite`] if the new state contains NaN or infinity;
    /// the state is still updated so callers can inspect it.
    pub fn step<T, F>(&mut self, state: &mut S, dt: T, mut tendency: F) -> Result<(), DynamicsError>
    where
        T: Scalar,
        S: OdeState<T>,
        F: FnMut(&S, &mut S),
    {
        let two = T::lit(2.0);
        let half = dt / two;
        let sixth = dt / T::lit(6.0);
        let third = dt / T::lit(3.0);

        self.acc.values_mut().copy_from_slice(state.values());

        tendency(state, &mut self.deriv);
        self.advance(state.values(), sixth, half);
        tendency(&self.stage, &mut self.deriv);
        self.advance(state.values(), third, half);
        tendency(&self.stage, &mut self.deriv);
        self.advance(state.values(), third, dt);
        tendency(&self.stage, &mut self.deriv);

        let mut finite = true;
        for ((s, a), d) in state
            .values_mut()
            .iter_mut()
            .zip(self.acc.values())
            .zip(self.deriv.values())
        {
            *s = *a + sixth * *d;
            finite &= s.is_finite();
        }
        if finite {
            Ok(())
        } else {
            Err(DynamicsError::NonFinite)
        }
    }

    /// `acc += w * deriv; stage = base + a * deriv`.
    #[inline]
    fn advance<T>(&mut self, base: &[T], w: T, a: T)
    where
        T: Scalar,
        S: OdeState<T>,
    {
        let d = self.deriv.values();
        for (acc, &dv) in self.acc.values_mut().iter_mut().zip(d) {
            *acc += w * dv;
        }
        for ((st, &b), &dv) in self.stage.values_mut().iter_mut().zip(base).zip(d) {
            *st = b + a * dv;
        }
    }
}

/// One allocating RK4 step: returns the advanced state.
pub fn rk4_step<T, S, F>(s: &S, dt: T, tendency: F) -> Result<S, DynamicsError>
where
    T: Scalar,
    S: OdeState<T>,
    F: FnMut(&S, &mut S),
{
    if !(dt > T::zero()) {
        return Err(DynamicsError::InvalidParams("dt must be positive".into()));
    }
    let mut out = s.clone();
    Rk4::new(s).step(&mut out, dt, tendency)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(s: &Vec<f64>, o: &mut Vec<f64>) {
        o[0] = -s[0];
    }

    fn oscillator(s: &Vec<f64>, o: &mut Vec<f64>) {
        o[0] = s[1];
        o[1] = -s[0];
    }

    #[test]
    fn exponential_decay_truncated_series() {
        let u1 = rk4_step(&vec![1.0], 0.1, decay).unwrap();
        let expect = 1.0 - 0.1 + 0.01 / 2.0 - 0.001 / 6.0 + 0.0001 / 24.0;
        assert!((u1[0] - expect).abs() < 1e-15);
        assert!((u1[0] - 0.904_837_5).abs() < 1e-15);
    }

    #[test]
    fn zero_tendency_is_identity() {
        let s = vec![1.5, -2.25, 3.0];
        let out = rk4_step(&s, 0.3, |_, o: &mut Vec<f64>| {
            o.iter_mut().for_each(|v| *v = 0.0)
        })
        .unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn rejects_nonpositive_dt() {
        assert!(rk4_step(&vec![1.0], 0.0, decay).is_err());
    }

    #[test]
    fn reports_blow_up() {
        let r = rk4_step(&vec![1e300], 1.0, |s: &Vec<f64>, o: &mut Vec<f64>| {
            o[0] = s[0] * s[0]
        });
        assert_eq!(r.unwrap_err(), DynamicsError::NonFinite);
    }

    fn period_error(n: usize) -> f64 {
        let dt = 2.0 * std::f64::consts::PI / n as f64;
        let mut s = vec![1.0, 0.0];
        let mut rk = Rk4::new(&s);
        for _ in 0..n {
            rk.step(&mut s, dt, oscillator).unwrap();
        }
        ((s[0] - 1.0).powi(2) + s[1].powi(2)).sqrt()
    }

    #[test]
    fn fourth_order_convergence() {
        let ratio = period_error(64) / period_error(128);
        let order = ratio.log2();
        assert!((3.9..=4.1).contains(&order), "order {order}");
    }

    #[test]
    fn works_in_single_precision() {
        let u1 = rk4_step(&vec![1.0f32], 0.1, |s: &Vec<f32>, o: &mut Vec<f32>| {
            o[0] = -s[0]
        })
        .unwrap();
        assert!((u1[0] - 0.904_837_4).abs() < 1e-6);
    }
}
