//! One-step runtime of the resolved two-scale solver against the coarse
//! solver coupled to the neural operator, swept over grid sizes.
//!
//! Timed regions run on the calling thread and touch only preallocated
//! buffers: no allocation, I/O or RNG between the clock reads.

use std::io::{self, Write};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::dataset::sample_initial;
use crate::dynamics::{
    coarse_tendency_into, full_tendency_into, FullState, OdeState, Rk4, ScaleParams,
};
use crate::fno::{forward_into, init_params, FnoConfig, FnoError, FnoParams, FnoWorkspace};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("insufficient data for {method}: {have} records with K >= {knee}, need {need}")]
    InsufficientData {
        method: String,
        have: usize,
        knee: usize,
        need: usize,
    },
    #[error("invalid bench config: {0}")]
    Config(String),
    #[error(transparent)]
    Fno(#[from] FnoError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BenchMethod {
    Dns,
    Mno,
}

impl BenchMethod {
    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Dns => "dns",
            BenchMethod::Mno => "mno",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub method: BenchMethod,
    pub k: usize,
    /// Small-scale count per box; resolved runs only.
    pub j: Option<usize>,
    pub reps: u64,
    /// Minimum wall time over repetitions.
    pub best_ns: u64,
}

/// A grid size that was not measured.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchSkip {
    pub method: BenchMethod,
    pub k: usize,
    pub reason: String,
}

/// Geometric repetition schedule: 100k at `K <= 2^8` down to 1 at `K >= 2^22`.
pub fn reps_for(k: usize) -> u64 {
    let e = (k.max(1) as f64).log2();
    if e <= 8.0 {
        100_000
    } else if e >= 22.0 {
        1
    } else {
        10f64.powf(5.0 * (22.0 - e) / 14.0).round().max(1.0) as u64
    }
}

/// Bytes held by a resolved stepper at `K x J`: state, three integrator
/// buffers, with `K(J + 1)` values each.
pub fn dns_bytes(k: usize, j: usize) -> usize {
    4 * k * (j + 1) * std::mem::size_of::<f64>()
}

/// Approximate bytes held by an operator stepper at grid size `k`.
pub fn mno_bytes(cfg: &FnoConfig, k: usize) -> usize {
    (6 * cfg.n_v + 8) * k * std::mem::size_of::<f64>()
}

/// `MemAvailable` from `/proc/meminfo`, if readable.
pub fn mem_available_bytes() -> Option<usize> {
    let text = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = text.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: usize = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

/// A resolved-system stepper with reusable buffers.
pub struct DnsStepper {
    p: ScaleParams<f64>,
    init: FullState<f64>,
    state: FullState<f64>,
    rk: Rk4<FullState<f64>>,
}

impl DnsStepper {
    /// Random state at `K = J = k`, advanced by `warmup` steps.
    pub fn new(k: usize, base: &ScaleParams<f64>, seed: u64, warmup: usize) -> Self {
        let p = base.with_sizes(k, k);
        let init = sample_initial(seed, &p);
        let state = init.clone();
        let rk = Rk4::new(&state);
        let mut s = Self { p, init, state, rk };
        for _ in 0..warmup {
            s.step();
        }
        s
    }

    /// One RK4 step. A non-finite state restarts from the initial sample.
    pub fn step(&mut self) {
        let p = &self.p;
        if self
            .rk
            .step(&mut self.state, p.dt, |u, o| full_tendency_into(u, p, o))
            .is_err()
        {
            self.state.values_mut().copy_from_slice(self.init.values());
        }
    }

    pub fn state(&self) -> &FullState<f64> {
        &self.state
    }
}

/// A coarse-solver stepper with the operator correction held fixed over
/// the step, as in the coupled rollout.
pub struct MnoStepper<'a> {
    params: &'a FnoParams<f64>,
    ws: FnoWorkspace<f64>,
    forcing: f64,
    dt: f64,
    init: Vec<f64>,
    x: Vec<f64>,
    h: Vec<f64>,
    rk: Rk4<Vec<f64>>,
}

impl<'a> MnoStepper<'a> {
    pub fn new(
        k: usize,
        params: &'a FnoParams<f64>,
        base: &ScaleParams<f64>,
        seed: u64,
    ) -> Result<Self, FnoError> {
        let ws = FnoWorkspace::new(&params.cfg, k)?;
        let p = base.with_sizes(k, base.j);
        let init = sample_initial(seed, &p).x().to_vec();
        let x = init.clone();
        let rk = Rk4::new(&x);
        Ok(Self {
            params,
            ws,
            forcing: base.forcing,
            dt: base.dt,
            init,
            h: vec![0.0; k],
            x,
            rk,
        })
    }

    pub fn step(&mut self) {
        forward_into(self.params, &mut self.ws, &self.x, &mut self.h)
            .expect("workspace sized for this grid");
        let (h, forcing) = (&self.h, self.forcing);
        let res = self
            .rk
            .step(&mut self.x, self.dt, |s: &Vec<f64>, out: &mut Vec<f64>| {
                coarse_tendency_into(s, forcing, out);
                for (o, &c) in out.iter_mut().zip(h) {
                    *o += c;
                }
            });
        if res.is_err() {
            self.x.copy_from_slice(&self.init);
        }
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }
}

/// Best-of-`reps` wall time of `f`, stopping early once `budget` is spent
/// (after at least one repetition). Returns `(reps_done, best_ns)`.
pub fn time_best<F: FnMut()>(reps: u64, budget: Duration, mut f: F) -> (u64, u64) {
    let start = Instant::now();
    let mut best = u64::MAX;
    let mut done = 0;
    while done < reps.max(1) {
        let t0 = Instant::now();
        f();
        let ns = t0.elapsed().as_nanos() as u64;
        best = best.min(ns.max(1));
        done += 1;
        if start.elapsed() >= budget {
            break;
        }
    }
    (done, best)
}

pub fn bench_dns_step(
    k: usize,
    base: &ScaleParams<f64>,
    reps: u64,
    budget: Duration,
    seed: u64,
) -> BenchRecord {
    let mut s = DnsStepper::new(k, base, seed, 2);
    let (reps, best_ns) = time_best(reps, budget, || s.step());
    BenchRecord {
        method: BenchMethod::Dns,
        k,
        j: Some(k),
        reps,
        best_ns,
    }
}

pub fn bench_mno_step(
    k: usize,
    params: &FnoParams<f64>,
    base: &ScaleParams<f64>,
    reps: u64,
    budget: Duration,
    seed: u64,
) -> Result<BenchRecord, FnoError> {
    let mut s = MnoStepper::new(k, params, base, seed)?;
    s.step();
    let (reps, best_ns) = time_best(reps, budget, || s.step());
    Ok(BenchRecord {
        method: BenchMethod::Mno,
        k,
        j: None,
        reps,
        best_ns,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    /// Sweep `K = 2^e` for `e` in `[k_min_exp, k_max_exp]`.
    pub k_min_exp: u32,
    pub k_max_exp: u32,
    /// Resolved runs above this `K` are skipped.
    pub dns_max_k: usize,
    /// Operator runs above this `K` are skipped.
    pub mno_max_k: usize,
    /// Wall-time budget per grid size and method.
    pub budget: Duration,
    /// Share of `MemAvailable` a single point may claim.
    pub mem_fraction: f64,
    /// Lower `K` bound of the scaling fit.
    pub knee: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            k_min_exp: 4,
            k_max_exp: 18,
            dns_max_k: 1 << 15,
            mno_max_k: 1 << 18,
            budget: Duration::from_secs(10),
            mem_fraction: 0.7,
            knee: 1 << 12,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.k_min_exp < 2 || self.k_min_exp > self.k_max_exp || self.k_max_exp > 30 {
            return Err(BenchError::Config(format!(
                "need 2 <= k_min_exp <= k_max_exp <= 30, got {}..{}",
                self.k_min_exp, self.k_max_exp
            )));
        }
        if !(self.mem_fraction > 0.0 && self.mem_fraction <= 1.0) {
            return Err(BenchError::Config("mem_fraction must be in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Runs the sweep in increasing `K`. `progress` sees every record and skip
/// as it is produced.
pub fn run_sweep(
    cfg: &BenchConfig,
    params: &FnoParams<f64>,
    base: &ScaleParams<f64>,
    mut progress: impl FnMut(Result<&BenchRecord, &BenchSkip>),
) -> Result<(Vec<BenchRecord>, Vec<BenchSkip>), BenchError> {
    cfg.validate()?;
    let mut records = Vec::new();
    let mut skips = Vec::new();
    for e in cfg.k_min_exp..=cfg.k_max_exp {
        let k = 1usize << e;
        let reps = reps_for(k);
        let avail = mem_available_bytes().map(|b| (b as f64 * cfg.mem_fraction) as usize);
        for method in [BenchMethod::Dns, BenchMethod::Mno] {
            let (max_k, need) = match method {
                BenchMethod::Dns => (cfg.dns_max_k, dns_bytes(k, k)),
                BenchMethod::Mno => (cfg.mno_max_k, mno_bytes(&params.cfg, k)),
            };
            let reason = if k > max_k {
                Some(format!("K above {}_max_k={max_k}", method.name()))
            } else {
                avail
                    .filter(|&a| need > a)
                    .map(|a| format!("needs {need} bytes, {a} available"))
            };
            if let Some(reason) = reason {
                let s = BenchSkip { method, k, reason };
                progress(Err(&s));
                skips.push(s);
                continue;
            }
            let r = match method {
                BenchMethod::Dns => bench_dns_step(k, base, reps, cfg.budget, cfg.seed),
                BenchMethod::Mno => bench_mno_step(k, params, base, reps, cfg.budget, cfg.seed)?,
            };
            progress(Ok(&r));
            records.push(r);
        }
    }
    Ok((records, skips))
}

/// Randomly initialized operator weights for timing; runtime does not
/// depend on parameter values.
pub fn timing_params(cfg: &FnoConfig, seed: u64) -> Result<FnoParams<f64>, FnoError> {
    init_params(*cfg, seed)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scaling {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

/// Least squares of `log2 best_ns` on `log2 K` over records with `K >= knee`.
pub fn fit_scaling(
    records: &[BenchRecord],
    method: BenchMethod,
    knee: usize,
) -> Result<Scaling, BenchError> {
    const NEED: usize = 4;
    let pts: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| r.method == method && r.k >= knee)
        .map(|r| ((r.k as f64).log2(), (r.best_ns as f64).log2()))
        .collect();
    if pts.len() < NEED {
        return Err(BenchError::InsufficientData {
            method: method.name().into(),
            have: pts.len(),
            knee,
            need: NEED,
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    Ok(Scaling {
        slope,
        intercept,
        r2,
        n: pts.len(),
    })
}

/// `best_ns(dns) / best_ns(mno)` at grid size `k`, if both were measured.
pub fn speedup_at(records: &[BenchRecord], k: usize) -> Option<f64> {
    let find = |m| {
        records
            .iter()
            .find(|r| r.method == m && r.k == k)
            .map(|r| r.best_ns as f64)
    };
    Some(find(BenchMethod::Dns)? / find(BenchMethod::Mno)?)
}

/// Whether `best_ns` never decreases with `K` for `method` above `knee`.
pub fn is_monotone(records: &[BenchRecord], method: BenchMethod, knee: usize) -> bool {
    let mut pts: Vec<_> = records
        .iter()
        .filter(|r| r.method == method && r.k >= knee)
        .collect();
    pts.sort_by_key(|r| r.k);
    pts.windows(2).all(|w| w[1].best_ns >= w[0].best_ns)
}

/// `method,K,J,reps,best_ns`; `J` is empty for operator runs.
pub fn write_csv<W: Write>(w: &mut W, records: &[BenchRecord]) -> io::Result<()> {
    writeln!(w, "method,K,J,reps,best_ns")?;
    for r in records {
        let j = r.j.map(|j| j.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{}",
            r.method.name(),
            r.k,
            j,
            r.reps,
            r.best_ns
        )?;
    }
    Ok(())
}

/// Host description for the sidecar file, one `key=value` per line.
pub fn environment() -> String {
    let read = |p: &str| {
        std::fs::read_to_string(p)
            .ok()
            .map(|s| s.trim().to_string())
    };
    let cpu = read("/proc/cpuinfo")
        .and_then(|t| {
            t.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown".into());
    let governor = read("/sys/devices/system/cpu/cpu0/cpufreq/scaling_governor")
        .unwrap_or_else(|| "unknown".into());
    let freq = read("/sys/devices/system/cpu/cpu0/cpufreq/scaling_cur_freq")
        .unwrap_or_else(|| "unknown".into());
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    let mem = mem_available_bytes()
        .map(|b| b.to_string())
        .unwrap_or_else(|| "unknown".into());
    format!(
        "cpu_model={cpu}\nfrequency_governor={governor}\ncur_freq_khz={freq}\navailable_parallelism={threads}\nmem_available_bytes={mem}\nos={}\narch={}\n",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}
