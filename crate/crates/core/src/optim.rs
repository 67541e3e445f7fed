//! Adam and a stepwise exponential learning-rate schedule.

use std::io::{self, Write};

use crate::scalar::Scalar;

/// One optimizer step of a training run: the learning rate used and the
/// minibatch loss before the update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossPoint {
    pub step: u64,
    pub lr: f64,
    pub mse: f64,
}

/// `step,lr,mse` CSV with one row per optimizer step.
pub fn write_loss_csv<W: Write>(w: &mut W, losses: &[LossPoint]) -> io::Result<()> {
    writeln!(w, "step,lr,mse")?;
    for l in losses {
        writeln!(w, "{},{:e},{:e}", l.step, l.lr, l.mse)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments. Parameter groups are flat scalar slices
/// whose count and lengths must stay fixed across steps.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub cfg: AdamConfig,
    t: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update with learning rate `lr`.
    pub fn step(&mut self, lr: f64, params: &mut [&mut [T]], grads: &[&[T]]) {
        assert_eq!(
            params.len(),
            grads.len(),
            "one gradient per parameter group"
        );
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![T::zero(); p.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(
            self.m.len(),
            params.len(),
            "parameter groups changed between steps"
        );
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let step = T::lit(lr / bc1);
        let inv_bc2 = T::lit(1.0 / bc2);
        let eps = T::lit(self.cfg.eps);
        let (b1t, b2t) = (T::lit(b1), T::lit(b2));
        let (c1, c2) = (T::lit(1.0 - b1), T::lit(1.0 - b2));
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            assert_eq!(p.len(), g.len());
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1t * m[i] + c1 * gi;
                v[i] = b2t * v[i] + c2 * gi * gi;
                p[i] -= step * m[i] / ((v[i] * inv_bc2).sqrt() + eps);
            }
        }
    }
}

/// `lr(s) = base * gamma^floor(s / step_size)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepLr {
    pub base: f64,
    pub step_size: u64,
    pub gamma: f64,
}

impl StepLr {
    pub fn lr(&self, step: u64) -> f64 {
        self.base * self.gamma.powi((step / self.step_size.max(1)) as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        // With bias correction the first update is lr * sign(g) (up to eps).
        let mut p = vec![1.0f64, -1.0];
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(0.1, &mut [&mut p], &[&[3.0, -0.5]]);
        assert!((p[0] - 0.9).abs() < 1e-7 && (p[1] + 0.9).abs() < 1e-7);
    }

    #[test]
    fn matches_reference_recurrence() {
        let cfg = AdamConfig {
            lr: 0.01,
            ..Default::default()
        };
        let mut adam = Adam::new(cfg);
        let mut p = vec![0.5f64];
        let (mut m, mut v, mut q) = (0.0f64, 0.0f64, 0.5f64);
        for t in 1..=5 {
            let g = 2.0 * q - 0.3;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            q -= 0.01 * mh / (vh.sqrt() + 1e-8);
            let gp = 2.0 * p[0] - 0.3;
            adam.step(0.01, &mut [&mut p], &[&[gp]]);
            assert!((p[0] - q).abs() < 1e-12);
        }
    }

    #[test]
    fn minimizes_quadratic() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut p = vec![5.0f64, -3.0];
        for _ in 0..5000 {
            let g = [2.0 * (p[0] - 1.0), 2.0 * (p[1] + 2.0)];
            adam.step(0.05, &mut [&mut p], &[&g]);
        }
        assert!((p[0] - 1.0).abs() < 1e-3 && (p[1] + 2.0).abs() < 1e-3);
    }

    #[test]
    fn step_schedule() {
        let s = StepLr {
            base: 1e-3,
            step_size: 20,
            gamma: 0.9,
        };
        assert_eq!(s.lr(0), 1e-3);
        assert_eq!(s.lr(19), 1e-3);
        assert!((s.lr(20) - 9e-4).abs() < 1e-18);
        assert!((s.lr(45) - 8.1e-4).abs() < 1e-15);
    }
}
