//! Autoregressive coupled integration and forecast-skill metrics.
//!
//! A rollout advances the coarse dynamics with a learned or fixed correction
//! added to the tendency. Trajectories are `T x K` row-major with row 0 the
//! initial state; ensembles are `N x T x K`.

use std::io::{self, Write};

use thiserror::Error;

use crate::baselines::{LinearMatrix, LinearParam, ResNetParams};
use crate::dataset::{Climatology, Dataset};
use crate::dynamics::{coarse_tendency_into, Rk4, ScaleParams};
use crate::fno::{forward_into, FnoError, FnoParams, FnoWorkspace};

#[derive(Debug, Error)]
pub enum RolloutError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Fno(#[from] FnoError),
}

/// A correction term `h(X)` added to the coarse tendency.
///
/// `sample` and `step` identify the rollout position; only replay oracles use
/// them. `out` must be fully overwritten.
pub trait Parametrization {
    fn predict(&mut self, sample: usize, step: usize, x: &[f64], out: &mut [f64]);
}

/// No correction.
#[derive(Clone, Copy, Debug, Default)]
pub struct Zero;

impl Parametrization for Zero {
    fn predict(&mut self, _: usize, _: usize, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// The same value at every grid point.
#[derive(Clone, Copy, Debug)]
pub struct Constant(pub f64);

impl Parametrization for Constant {
    fn predict(&mut self, _: usize, _: usize, _: &[f64], out: &mut [f64]) {
        out.fill(self.0);
    }
}

/// Replays stored targets: `targets[sample]` is `T x K`. With targets taken
/// from the resolved simulation this is the exact correction along the true
/// trajectory.
#[derive(Clone, Debug)]
pub struct TargetReplay {
    pub k: usize,
    pub targets: Vec<Vec<f64>>,
}

impl TargetReplay {
    pub fn from_dataset(ds: &Dataset) -> Self {
        Self {
            k: ds.k(),
            targets: ds.snippets.iter().map(|s| s.targets.clone()).collect(),
        }
    }
}

impl Parametrization for TargetReplay {
    fn predict(&mut self, sample: usize, step: usize, _: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.targets[sample][step * self.k..(step + 1) * self.k]);
    }
}

impl Parametrization for LinearParam {
    fn predict(&mut self, _: usize, _: usize, x: &[f64], out: &mut [f64]) {
        LinearParam::predict(self, x, out);
    }
}

impl Parametrization for LinearMatrix {
    fn predict(&mut self, _: usize, _: usize, x: &[f64], out: &mut [f64]) {
        LinearMatrix::predict(self, x, out);
    }
}

/// Residual-network correction with reusable scratch.
#[derive(Clone, Debug)]
pub struct ResNetModel {
    params: ResNetParams<f64>,
    hidden: Vec<f64>,
    tmp: Vec<f64>,
}

impl ResNetModel {
    pub fn new(params: ResNetParams<f64>) -> Self {
        let w = params.cfg.width;
        Self {
            params,
            hidden: vec![0.0; w],
            tmp: vec![0.0; w],
        }
    }
}

impl Parametrization for ResNetModel {
    fn predict(&mut self, _: usize, _: usize, x: &[f64], out: &mut [f64]) {
        for (o, &v) in out.iter_mut().zip(x) {
            *o = self.params.eval_point(v, &mut self.hidden, &mut self.tmp);
        }
    }
}

/// Neural-operator correction at a fixed grid size.
#[derive(Clone, Debug)]
pub struct FnoModel {
    params: FnoParams<f64>,
    ws: FnoWorkspace<f64>,
}

impl FnoModel {
    pub fn new(params: FnoParams<f64>, k: usize) -> Result<Self, FnoError> {
        let ws = FnoWorkspace::new(&params.cfg, k)?;
        Ok(Self { params, ws })
    }
}

impl Parametrization for FnoModel {
    fn predict(&mut self, _: usize, _: usize, x: &[f64], out: &mut [f64]) {
        forward_into(&self.params, &mut self.ws, x, out).expect("workspace sized for this grid");
    }
}

/// One autoregressive run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub k: usize,
    /// `T x K`; rows after a blow-up hold NaN.
    pub data: Vec<f64>,
    /// First step whose state was non-finite.
    pub blow_up: Option<usize>,
}

impl Trajectory {
    pub fn t_steps(&self) -> usize {
        self.data.len() / self.k
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.k..(t + 1) * self.k]
    }
}

/// Integrates `dX/dt = coarse(X) + h(X)` for `t_steps - 1` RK4 steps from
/// `x0`. By default `h` is evaluated once per step at the step's starting
/// state and held fixed across the four stages; `per_stage` re-evaluates it at
/// every stage instead.
pub fn rollout(
    x0: &[f64],
    param: &mut dyn Parametrization,
    sample: usize,
    p: &ScaleParams<f64>,
    t_steps: usize,
    per_stage: bool,
) -> Trajectory {
    let k = x0.len();
    let mut data = vec![f64::NAN; t_steps * k];
    if t_steps == 0 {
        return Trajectory {
            k,
            data,
            blow_up: None,
        };
    }
    data[..k].copy_from_slice(x0);
    let mut x = x0.to_vec();
    let mut h = vec![0.0; k];
    let mut rk = Rk4::new(&x);
    let mut blow_up = None;
    for t in 1..t_steps {
        let step = t - 1;
        param.predict(sample, step, &x, &mut h);
        let res = rk.step(&mut x, p.dt, |s: &Vec<f64>, out: &mut Vec<f64>| {
            if per_stage {
                param.predict(sample, step, s, &mut h);
            }
            coarse_tendency_into(s, p.forcing, out);
            for (o, &c) in out.iter_mut().zip(&h) {
                *o += c;
            }
        });
        if res.is_err() {
            blow_up = Some(t);
            break;
        }
        data[t * k..(t + 1) * k].copy_from_slice(&x);
    }
    Trajectory { k, data, blow_up }
}

/// `RMSE(t) = (1/K) sum_k sqrt((1/N) sum_i (pred - truth)^2)` for ensembles
/// stored `N x T x K`.
pub fn rmse_over_time(
    pred: &[f64],
    truth: &[f64],
    n: usize,
    t_steps: usize,
    k: usize,
) -> Result<Vec<f64>, RolloutError> {
    let len = n * t_steps * k;
    if pred.len() != len || truth.len() != len || n == 0 || k == 0 {
        return Err(RolloutError::Shape(format!(
            "expected {n} x {t_steps} x {k} ensembles, got {} and {} values",
            pred.len(),
            truth.len()
        )));
    }
    let mut sq = vec![0.0; t_steps * k];
    for i in 0..n {
        let base = i * t_steps * k;
        for (j, s) in sq.iter_mut().enumerate() {
            let d = pred[base + j] - truth[base + j];
            *s += d * d;
        }
    }
    Ok(sq
        .chunks_exact(k)
        .map(|row| row.iter().map(|s| (s / n as f64).sqrt()).sum::<f64>() / k as f64)
        .collect())
}

/// How a method produces its forecast ensemble.
pub enum Method {
    /// Coupled rollout from each sample's initial state.
    Rollout(Box<dyn Parametrization>),
    /// Constant training mean.
    Climatology,
    /// The reference trajectories themselves.
    Truth,
}

pub struct NamedMethod {
    pub name: String,
    pub method: Method,
}

impl NamedMethod {
    pub fn new(name: &str, method: Method) -> Self {
        Self {
            name: name.into(),
            method,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    /// Steps averaged into the scalar RMSE.
    pub t_eval: usize,
    /// Rollout length for stability and horizon.
    pub t_rollout: usize,
    /// `|X|` bound for the boundedness statistic.
    pub bound: f64,
    pub per_stage: bool,
    /// Number of sample trajectories kept in the report.
    pub keep_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            t_eval: 200,
            t_rollout: 400,
            bound: 50.0,
            per_stage: false,
            keep_samples: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MethodReport {
    pub name: String,
    pub rmse_t: Vec<f64>,
    /// Mean of `rmse_t` over the first `t_eval` steps.
    pub rmse: f64,
    /// First step where `rmse_t` reaches the climatology curve, or the
    /// rollout length if it never does.
    pub horizon: usize,
    /// Share of samples whose rollout stayed finite with `|X| <= bound`.
    pub bounded_fraction: f64,
    pub blow_ups: usize,
    /// Ensemble mean and standard deviation over samples and grid points, per step.
    pub mean_t: Vec<f64>,
    pub std_t: Vec<f64>,
    /// First `keep_samples` trajectories, each `T x K`.
    pub samples: Vec<Vec<f64>>,
}

/// Everything [`evaluate_all`] produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub t_steps: usize,
    pub k: usize,
    pub climatology_rmse_t: Vec<f64>,
    pub truth_mean_t: Vec<f64>,
    pub truth_std_t: Vec<f64>,
    pub truth_samples: Vec<Vec<f64>>,
    pub reports: Vec<MethodReport>,
}

impl Evaluation {
    pub fn report(&self, name: &str) -> Option<&MethodReport> {
        self.reports.iter().find(|r| r.name == name)
    }
}

fn mean_std_per_step(ens: &[f64], n: usize, t_steps: usize, k: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; t_steps];
    let mut std = vec![0.0; t_steps];
    let m = (n * k) as f64;
    for t in 0..t_steps {
        let vals =
            (0..n).flat_map(|i| ens[(i * t_steps + t) * k..(i * t_steps + t + 1) * k].iter());
        let mu = vals.clone().sum::<f64>() / m;
        let var = vals.map(|v| (v - mu) * (v - mu)).sum::<f64>() / m;
        mean[t] = mu;
        std[t] = var.sqrt();
    }
    (mean, std)
}

/// Runs every method against the test trajectories. Each test snippet's first
/// coarse state seeds its rollout; the snippet's recorded coarse states are
/// the truth.
pub fn evaluate_all(
    test: &Dataset,
    methods: &mut [NamedMethod],
    clim: &Climatology,
    p: &ScaleParams<f64>,
    cfg: &EvalConfig,
) -> Result<Evaluation, RolloutError> {
    let k = test.k();
    let t_steps = cfg.t_rollout.min(test.t_steps());
    let n = test.len();
    if n == 0 || t_steps == 0 {
        return Err(RolloutError::Shape("empty test set".into()));
    }
    let t_eval = cfg.t_eval.min(t_steps);
    let mut truth = Vec::with_capacity(n * t_steps * k);
    for s in &test.snippets {
        truth.extend_from_slice(&s.coarse_states[..t_steps * k]);
    }
    let clim_ens = vec![clim.mean; truth.len()];
    let climatology_rmse_t = rmse_over_time(&clim_ens, &truth, n, t_steps, k)?;
    let (truth_mean_t, truth_std_t) = mean_std_per_step(&truth, n, t_steps, k);
    let keep = cfg.keep_samples.min(n);
    let truth_samples = (0..keep)
        .map(|i| truth[i * t_steps * k..(i + 1) * t_steps * k].to_vec())
        .collect();

    let mut reports = Vec::new();
    for m in methods.iter_mut() {
        let mut blow_ups = 0;
        let ens = match &mut m.method {
            Method::Truth => truth.clone(),
            Method::Climatology => clim_ens.clone(),
            Method::Rollout(param) => {
                let mut ens = Vec::with_capacity(truth.len());
                for (i, s) in test.snippets.iter().enumerate() {
                    let traj = rollout(
                        &s.coarse_states[..k],
                        param.as_mut(),
                        i,
                        p,
                        t_steps,
                        cfg.per_stage,
                    );
                    blow_ups += traj.blow_up.is_some() as usize;
                    ens.extend_from_slice(&traj.data);
                }
                ens
            }
        };
        let rmse_t = rmse_over_time(&ens, &truth, n, t_steps, k)?;
        let rmse = rmse_t[..t_eval].iter().sum::<f64>() / t_eval as f64;
        let horizon = rmse_t
            .iter()
            .zip(&climatology_rmse_t)
            .position(|(r, c)| !(r < c))
            .unwrap_or(t_steps);
        let bounded = ens
            .chunks_exact(t_steps * k)
            .filter(|traj| traj.iter().all(|v| v.is_finite() && v.abs() <= cfg.bound))
            .count();
        let (mean_t, std_t) = mean_std_per_step(&ens, n, t_steps, k);
        let samples = (0..keep)
            .map(|i| ens[i * t_steps * k..(i + 1) * t_steps * k].to_vec())
            .collect();
        reports.push(MethodReport {
            name: m.name.clone(),
            rmse_t,
            rmse,
            horizon,
            bounded_fraction: bounded as f64 / n as f64,
            blow_ups,
            mean_t,
            std_t,
            samples,
        });
    }
    Ok(Evaluation {
        t_steps,
        k,
        climatology_rmse_t,
        truth_mean_t,
        truth_std_t,
        truth_samples,
        reports,
    })
}

/// `method,rmse,horizon,bounded_fraction` with one row per method.
pub fn write_summary_csv<W: Write>(w: &mut W, eval: &Evaluation) -> io::Result<()> {
    writeln!(w, "method,rmse,horizon,bounded_fraction")?;
    for r in &eval.reports {
        writeln!(
            w,
            "{},{:.10e},{},{:.6}",
            r.name, r.rmse, r.horizon, r.bounded_fraction
        )?;
    }
    Ok(())
}

/// Reports whose columns would repeat a reference column already written.
fn distinct<'a>(
    eval: &'a Evaluation,
    reference: &'a str,
) -> impl Iterator<Item = &'a MethodReport> + 'a {
    eval.reports.iter().filter(move |r| r.name != reference)
}

/// `t,climatology,<method>...` with one row per step; a method named
/// `climatology` is the reference column itself and is not repeated.
pub fn write_rmse_csv<W: Write>(w: &mut W, eval: &Evaluation) -> io::Result<()> {
    write!(w, "t,climatology")?;
    for r in distinct(eval, "climatology") {
        write!(w, ",{}", r.name)?;
    }
    writeln!(w)?;
    for t in 0..eval.t_steps {
        write!(w, "{t},{:.10e}", eval.climatology_rmse_t[t])?;
        for r in distinct(eval, "climatology") {
            write!(w, ",{:.10e}", r.rmse_t[t])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// `t,truth_mean,truth_std,<method>_mean,<method>_std...` per step; a
/// method named `truth` is not repeated.
pub fn write_mean_std_csv<W: Write>(w: &mut W, eval: &Evaluation) -> io::Result<()> {
    write!(w, "t,truth_mean,truth_std")?;
    for r in distinct(eval, "truth") {
        write!(w, ",{0}_mean,{0}_std", r.name)?;
    }
    writeln!(w)?;
    for t in 0..eval.t_steps {
        write!(
            w,
            "{t},{:.10e},{:.10e}",
            eval.truth_mean_t[t], eval.truth_std_t[t]
        )?;
        for r in distinct(eval, "truth") {
            write!(w, ",{:.10e},{:.10e}", r.mean_t[t], r.std_t[t])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// `t,truth,<method>...` for grid point 0 of sample `i`.
pub fn write_sample_csv<W: Write>(w: &mut W, eval: &Evaluation, i: usize) -> io::Result<()> {
    let k = eval.k;
    write!(w, "t,truth")?;
    for r in distinct(eval, "truth") {
        write!(w, ",{}", r.name)?;
    }
    writeln!(w)?;
    for t in 0..eval.t_steps {
        write!(w, "{t},{:.10e}", eval.truth_samples[i][t * k])?;
        for r in distinct(eval, "truth") {
            write!(w, ",{:.10e}", r.samples[i][t * k])?;
        }
        writeln!(w)?;
    }
    Ok(())
}
