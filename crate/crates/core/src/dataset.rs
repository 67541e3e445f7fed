//! Training and test data: seeded initial conditions, warmed-up DNS snippets,
//! the binary dataset file, CSV export, and climatology statistics.
//!
//! # File layout
//!
//! All values little-endian.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "MNOD"
//!      4     4  version (u32) = 1
//!      8     4  K (u32)
//!     12     4  J (u32)
//!     16     4  T, rows per snippet (u32)
//!     20     4  n_snippets (u32)
//!     24     8  F (f64)
//!     32     8  h_s (f64)
//!     40     8  b (f64)
//!     48     8  c (f64)
//!     56     8  dt (f64)
//!     64     4  split tag (u32): 0 = train, 1 = test
//!     68     4  flags (u32): bit 0 set when small-scale fields are retained
//!     72     8  master seed (u64)
//!     80     8  warmup steps (u64)
//!     88        n_snippets records:
//!                 seed (u64), t0_offset (u64),
//!                 coarse states, T*K f64 row-major,
//!                 targets,       T*K f64 row-major,
//!                 [small-scale,  T*K*J f64, box-major per row, only if flag bit 0]
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::RngExt;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::container::{ContainerError, ReadLe, WriteLe};
use crate::dynamics::{
    filter, full_tendency_into, subgrid_target, subgrid_target_closed_form, DynamicsError,
    FullState, Rk4, ScaleParams,
};
use crate::rng::{rng_from_seed, split_mix};

pub const DATASET_MAGIC: [u8; 4] = *b"MNOD";
pub const DATASET_VERSION: u32 = 1;
const FLAG_SMALL_SCALE: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("state blew up (seed {seed}, step {step})")]
    BlowUp { seed: u64, step: usize },
    #[error("snippet {index} blew up on all {attempts} attempts")]
    RetriesExhausted { index: usize, attempts: usize },
    #[error("invalid request: {0}")]
    Invalid(String),
}

impl From<ContainerError> for DatasetError {
    fn from(e: ContainerError) -> Self {
        match e {
            ContainerError::Io(e) => Self::Io(e),
            other => Self::Format(other.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn tag(self) -> u32 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
        }
    }

    fn from_tag(tag: u32) -> Result<Self, DatasetError> {
        match tag {
            0 => Ok(Split::Train),
            1 => Ok(Split::Test),
            t => Err(DatasetError::Format(format!("unknown split tag {t}"))),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?} (expected train or test)")),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetHeader {
    pub version: u32,
    pub k: u32,
    pub j: u32,
    pub t_steps: u32,
    pub n_snippets: u32,
    pub forcing: f64,
    pub coupling: f64,
    pub b: f64,
    pub c: f64,
    pub dt: f64,
    pub split: Split,
    pub retains_small_scale: bool,
    pub master_seed: u64,
    pub warmup_steps: u64,
}

impl DatasetHeader {
    pub fn params(&self) -> ScaleParams<f64> {
        ScaleParams {
            k: self.k as usize,
            j: self.j as usize,
            forcing: self.forcing,
            coupling: self.coupling,
            b: self.b,
            c: self.c,
            dt: self.dt,
        }
    }

    fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&DATASET_MAGIC)?;
        w.put_u32(self.version)?;
        w.put_u32(self.k)?;
        w.put_u32(self.j)?;
        w.put_u32(self.t_steps)?;
        w.put_u32(self.n_snippets)?;
        for v in [self.forcing, self.coupling, self.b, self.c, self.dt] {
            w.put_f64(v)?;
        }
        w.put_u32(self.split.tag())?;
        w.put_u32(if self.retains_small_scale {
            FLAG_SMALL_SCALE
        } else {
            0
        })?;
        w.put_u64(self.master_seed)?;
        w.put_u64(self.warmup_steps)
    }

    fn read_from<R: Read>(r: &mut R) -> Result<Self, DatasetError> {
        if r.get_array::<4>()? != DATASET_MAGIC {
            return Err(DatasetError::Format("bad magic".into()));
        }
        let version = r.get_u32()?;
        if version != DATASET_VERSION {
            return Err(DatasetError::Format(format!(
                "unsupported version {version}"
            )));
        }
        let (k, j, t_steps, n_snippets) = (r.get_u32()?, r.get_u32()?, r.get_u32()?, r.get_u32()?);
        let mut f = [0.0; 5];
        for v in &mut f {
            *v = r.get_f64()?;
        }
        let split = Split::from_tag(r.get_u32()?)?;
        let flags = r.get_u32()?;
        let header = Self {
            version,
            k,
            j,
            t_steps,
            n_snippets,
            forcing: f[0],
            coupling: f[1],
            b: f[2],
            c: f[3],
            dt: f[4],
            split,
            retains_small_scale: flags & FLAG_SMALL_SCALE != 0,
            master_seed: r.get_u64()?,
            warmup_steps: r.get_u64()?,
        };
        if k == 0 || j == 0 || t_steps == 0 || n_snippets == 0 {
            return Err(DatasetError::Format("all counts must be positive".into()));
        }
        Ok(header)
    }
}

/// One warmed-up trajectory: coarse inputs paired with subgrid targets.
#[derive(Clone, Debug, PartialEq)]
pub struct Snippet {
    pub seed: u64,
    /// Integration step at which recording began.
    pub t0_offset: u64,
    /// `T x K` row-major large-scale states.
    pub coarse_states: Vec<f64>,
    /// `T x K` row-major subgrid targets computed from the same full states.
    pub targets: Vec<f64>,
    /// `T x (K J)` box-major small-scale fields, kept only for debugging.
    pub small_scale: Option<Vec<f64>>,
}

impl Snippet {
    pub fn rows(&self, k: usize) -> usize {
        self.coarse_states.len() / k
    }

    pub fn state(&self, t: usize, k: usize) -> &[f64] {
        &self.coarse_states[t * k..(t + 1) * k]
    }

    pub fn target(&self, t: usize, k: usize) -> &[f64] {
        &self.targets[t * k..(t + 1) * k]
    }
}

/// A loaded or freshly generated dataset. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub snippets: Vec<Snippet>,
}

/// Draws `X_k` uniformly from the integers `-5..=6` and `Y_{j,k}` i.i.d.
/// standard normal, in that order (`Y` box-major).
pub fn sample_initial(seed: u64, p: &ScaleParams<f64>) -> FullState<f64> {
    let mut rng = rng_from_seed(seed);
    let x: Vec<f64> = (0..p.k)
        .map(|_| rng.random_range(-5i32..=6) as f64)
        .collect();
    let y: Vec<f64> = (0..p.k * p.j)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    FullState::from_parts(&x, &y, p.j).expect("sizes agree by construction")
}

/// Integrates one sample through the warmup and records `t_steps` rows.
pub fn generate_snippet(
    seed: u64,
    p: &ScaleParams<f64>,
    warmup_mtu: f64,
    t_steps: usize,
    retain_small_scale: bool,
) -> Result<Snippet, DatasetError> {
    p.validate()?;
    if !(warmup_mtu >= 0.0) || t_steps == 0 {
        return Err(DatasetError::Invalid(
            "warmup must be >= 0 and T >= 1".into(),
        ));
    }
    let warmup = warmup_steps(warmup_mtu, p.dt);
    let mut state = sample_initial(seed, p);
    let mut rk = Rk4::new(&state);
    let mut advance = |state: &mut FullState<f64>, step: usize| {
        rk.step(state, p.dt, |s, o| full_tendency_into(s, p, o))
            .map_err(|_| DatasetError::BlowUp { seed, step })
    };
    for step in 0..warmup {
        advance(&mut state, step)?;
    }
    let k = p.k;
    let mut coarse = Vec::with_capacity(t_steps * k);
    let mut targets = Vec::with_capacity(t_steps * k);
    let mut small = retain_small_scale.then(|| Vec::with_capacity(t_steps * k * p.j));
    for t in 0..t_steps {
        if t > 0 {
            advance(&mut state, warmup + t - 1)?;
        }
        coarse.extend_from_slice(&filter(&state).x);
        targets.extend_from_slice(&subgrid_target(&state, p));
        if let Some(s) = small.as_mut() {
            s.extend_from_slice(state.y());
        }
    }
    Ok(Snippet {
        seed,
        t0_offset: warmup as u64,
        coarse_states: coarse,
        targets,
        small_scale: small,
    })
}

pub fn warmup_steps(warmup_mtu: f64, dt: f64) -> usize {
    (warmup_mtu / dt).round() as usize
}

#[derive(Clone, Debug)]
pub struct GenerateOptions {
    pub split: Split,
    pub n_snippets: usize,
    pub t_steps: usize,
    pub warmup_mtu: f64,
    pub retain_small_scale: bool,
    /// Worker threads; the payload does not depend on this.
    pub threads: usize,
    /// Attempts per snippet before giving up on blow-ups.
    pub max_attempts: usize,
}

impl GenerateOptions {
    pub fn train() -> Self {
        Self {
            split: Split::Train,
            n_snippets: 4000,
            t_steps: 400,
            warmup_mtu: 10.0,
            retain_small_scale: false,
            threads: 1,
            max_attempts: 16,
        }
    }

    pub fn test() -> Self {
        Self {
            split: Split::Test,
            n_snippets: 1000,
            ..Self::train()
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GenerationStats {
    /// Snippets that had to be regenerated from a retry seed.
    pub retries: usize,
}

/// Seed of the `attempt`-th try at snippet `index`.
pub fn snippet_seed(master_seed: u64, index: usize, attempt: usize) -> u64 {
    let base = split_mix(master_seed, index as u64);
    if attempt == 0 {
        base
    } else {
        split_mix(base, attempt as u64)
    }
}

/// Generates every snippet; snippet `i` depends only on `(master_seed, i)`.
pub fn generate(
    master_seed: u64,
    p: &ScaleParams<f64>,
    opts: &GenerateOptions,
) -> Result<(Dataset, GenerationStats), DatasetError> {
    p.validate()?;
    if opts.n_snippets == 0 || opts.t_steps == 0 {
        return Err(DatasetError::Invalid(
            "snippet count and length must be positive".into(),
        ));
    }
    let one = |i: usize| -> Result<(Snippet, usize), DatasetError> {
        for attempt in 0..opts.max_attempts.max(1) {
            let seed = snippet_seed(master_seed, i, attempt);
            match generate_snippet(
                seed,
                p,
                opts.warmup_mtu,
                opts.t_steps,
                opts.retain_small_scale,
            ) {
                Ok(s) => return Ok((s, attempt)),
                Err(DatasetError::BlowUp { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(DatasetError::RetriesExhausted {
            index: i,
            attempts: opts.max_attempts,
        })
    };
    let results: Result<Vec<_>, _> = if opts.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| DatasetError::Invalid(e.to_string()))?;
        pool.install(|| (0..opts.n_snippets).into_par_iter().map(one).collect())
    } else {
        (0..opts.n_snippets).map(one).collect()
    };
    let results = results?;
    let retries = results.iter().filter(|(_, a)| *a > 0).count();
    let header = DatasetHeader {
        version: DATASET_VERSION,
        k: p.k as u32,
        j: p.j as u32,
        t_steps: opts.t_steps as u32,
        n_snippets: opts.n_snippets as u32,
        forcing: p.forcing,
        coupling: p.coupling,
        b: p.b,
        c: p.c,
        dt: p.dt,
        split: opts.split,
        retains_small_scale: opts.retain_small_scale,
        master_seed,
        warmup_steps: warmup_steps(opts.warmup_mtu, p.dt) as u64,
    };
    let snippets = results.into_iter().map(|(s, _)| s).collect();
    Ok((Dataset { header, snippets }, GenerationStats { retries }))
}

/// Generates and writes a dataset, returning its header.
pub fn generate_dataset(
    master_seed: u64,
    p: &ScaleParams<f64>,
    opts: &GenerateOptions,
    path: impl AsRef<Path>,
) -> Result<(DatasetHeader, GenerationStats), DatasetError> {
    let (ds, stats) = generate(master_seed, p, opts)?;
    ds.save(path)?;
    Ok((ds.header, stats))
}

impl Dataset {
    pub fn k(&self) -> usize {
        self.header.k as usize
    }

    pub fn t_steps(&self) -> usize {
        self.header.t_steps as usize
    }

    pub fn len(&self) -> usize {
        self.snippets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snippets.is_empty()
    }

    /// Total number of `(snippet, t)` training pairs.
    pub fn n_pairs(&self) -> usize {
        self.len() * self.t_steps()
    }

    /// The `idx`-th `(snippet, t)` pair in snippet-major order.
    pub fn pair(&self, idx: usize) -> (&[f64], &[f64]) {
        let t_n = self.t_steps();
        let s = &self.snippets[idx / t_n];
        let t = idx % t_n;
        (s.state(t, self.k()), s.target(t, self.k()))
    }

    /// Builds an in-memory dataset from explicit rows; used for synthetic
    /// fixtures. All snippets must have the same number of rows.
    pub fn from_rows(
        p: &ScaleParams<f64>,
        split: Split,
        snippets: Vec<(Vec<f64>, Vec<f64>)>,
    ) -> Result<Self, DatasetError> {
        let k = p.k;
        let first = snippets
            .first()
            .ok_or_else(|| DatasetError::Invalid("no snippets".into()))?;
        let rows = first.0.len() / k;
        if rows == 0 {
            return Err(DatasetError::Invalid("empty snippet".into()));
        }
        for (x, h) in &snippets {
            if x.len() != rows * k || h.len() != rows * k {
                return Err(DatasetError::Invalid("inconsistent snippet shapes".into()));
            }
        }
        let header = DatasetHeader {
            version: DATASET_VERSION,
            k: k as u32,
            j: p.j as u32,
            t_steps: rows as u32,
            n_snippets: snippets.len() as u32,
            forcing: p.forcing,
            coupling: p.coupling,
            b: p.b,
            c: p.c,
            dt: p.dt,
            split,
            retains_small_scale: false,
            master_seed: 0,
            warmup_steps: 0,
        };
        let snippets = snippets
            .into_iter()
            .enumerate()
            .map(|(i, (x, h))| Snippet {
                seed: i as u64,
                t0_offset: 0,
                coarse_states: x,
                targets: h,
                small_scale: None,
            })
            .collect();
        Ok(Self { header, snippets })
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), DatasetError> {
        self.header.write_to(w)?;
        for s in &self.snippets {
            w.put_u64(s.seed)?;
            w.put_u64(s.t0_offset)?;
            w.put_f64s(&s.coarse_states)?;
            w.put_f64s(&s.targets)?;
            if self.header.retains_small_scale {
                let y = s.small_scale.as_ref().ok_or_else(|| {
                    DatasetError::Invalid("small-scale flag set but field missing".into())
                })?;
                w.put_f64s(y)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, DatasetError> {
        let header = DatasetHeader::read_from(r)?;
        let rows = header.t_steps as usize * header.k as usize;
        let mut snippets = Vec::with_capacity(header.n_snippets as usize);
        for _ in 0..header.n_snippets {
            let seed = r.get_u64()?;
            let t0_offset = r.get_u64()?;
            let coarse_states = r.get_f64s(rows)?;
            let targets = r.get_f64s(rows)?;
            let small_scale = if header.retains_small_scale {
                Some(r.get_f64s(rows * header.j as usize)?)
            } else {
                None
            };
            snippets.push(Snippet {
                seed,
                t0_offset,
                coarse_states,
                targets,
                small_scale,
            });
        }
        let mut probe = [0u8; 1];
        if r.read(&mut probe)? != 0 {
            return Err(DatasetError::Format(
                "trailing bytes after last snippet".into(),
            ));
        }
        Ok(Self { header, snippets })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }

    /// One row per `(snippet, t)`: `snippet_id,t,X_0..X_{K-1},h_0..h_{K-1}`.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        let k = self.k();
        let mut header = String::from("snippet_id,t");
        for i in 0..k {
            header.push_str(&format!(",X_{i}"));
        }
        for i in 0..k {
            header.push_str(&format!(",h_{i}"));
        }
        writeln!(w, "{header}")?;
        for (sid, s) in self.snippets.iter().enumerate() {
            for t in 0..self.t_steps() {
                write!(w, "{sid},{t}")?;
                for v in s.state(t, k).iter().chain(s.target(t, k)) {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    /// Recomputes stored targets from retained small-scale fields for every
    /// `stride`-th row and returns the largest deviation from the closed form.
    pub fn verify_targets(&self, stride: usize) -> Result<f64, DatasetError> {
        if !self.header.retains_small_scale {
            return Err(DatasetError::Invalid(
                "dataset does not retain small-scale fields".into(),
            ));
        }
        let p = self.header.params();
        let (k, j) = (p.k, p.j);
        let mut worst = 0.0f64;
        for s in &self.snippets {
            let y = s.small_scale.as_ref().expect("flag checked above");
            for t in (0..self.t_steps()).step_by(stride.max(1)) {
                let full = FullState::from_parts(s.state(t, k), &y[t * k * j..(t + 1) * k * j], j)?;
                let closed = subgrid_target_closed_form(&full, &p);
                for (a, b) in closed.iter().zip(s.target(t, k)) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        Ok(worst)
    }
}

/// Mean statistics of the large-scale state over a training set.
#[derive(Clone, Debug, PartialEq)]
pub struct Climatology {
    /// Global mean over all snippets, steps, and grid points.
    pub mean: f64,
    pub per_k_mean: Vec<f64>,
    /// Global standard deviation around `mean`.
    pub std: f64,
}

pub fn compute_climatology(train: &Dataset) -> Result<Climatology, DatasetError> {
    if train.is_empty() {
        return Err(DatasetError::Invalid("empty dataset".into()));
    }
    let k = train.k();
    let mut per_k = vec![0.0; k];
    let mut total = 0.0;
    let mut count = 0usize;
    for s in &train.snippets {
        for row in s.coarse_states.chunks_exact(k) {
            for (acc, &v) in per_k.iter_mut().zip(row) {
                *acc += v;
                total += v;
            }
            count += k;
        }
    }
    let mean = total / count as f64;
    let rows = (count / k) as f64;
    let per_k_mean = per_k.into_iter().map(|s| s / rows).collect();
    let mut sq = 0.0;
    for s in &train.snippets {
        for &v in &s.coarse_states {
            sq += (v - mean) * (v - mean);
        }
    }
    Ok(Climatology {
        mean,
        per_k_mean,
        std: (sq / count as f64).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_opts(n: usize, t: usize) -> GenerateOptions {
        GenerateOptions {
            n_snippets: n,
            t_steps: t,
            warmup_mtu: 0.5,
            ..GenerateOptions::train()
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let p = ScaleParams::default();
        assert_eq!(sample_initial(42, &p), sample_initial(42, &p));
        assert_ne!(sample_initial(42, &p), sample_initial(43, &p));
    }

    #[test]
    fn sampler_distribution() {
        let p = ScaleParams::default();
        let mut counts = [0usize; 12];
        let (mut sum, mut sq, mut n) = (0.0, 0.0, 0usize);
        for seed in 0..100_000u64 {
            let s = sample_initial(seed, &p);
            let v = s.x()[0] as i64;
            assert!((-5..=6).contains(&v));
            counts[(v + 5) as usize] += 1;
            let y = s.y()[0];
            sum += y;
            sq += y * y;
            n += 1;
        }
        for c in counts {
            assert!((c as f64 / 1e5 - 1.0 / 12.0).abs() < 0.01);
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(
            mean.abs() < 0.02 && (var - 1.0).abs() < 0.02,
            "mean {mean} var {var}"
        );
    }

    #[test]
    fn first_row_is_filtered_initial_state() {
        let p = ScaleParams::default();
        let s = generate_snippet(9, &p, 0.0, 1, false).unwrap();
        assert_eq!(s.coarse_states, sample_initial(9, &p).x().to_vec());
        assert_eq!(s.t0_offset, 0);
    }

    #[test]
    fn snippets_are_reproducible_and_bounded() {
        let p = ScaleParams::default();
        let a = generate_snippet(3, &p, 10.0, 50, false).unwrap();
        let b = generate_snippet(3, &p, 10.0, 50, false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.t0_offset, 2000);
        assert!(a.coarse_states.iter().all(|v| v.abs() <= 25.0));
    }

    #[test]
    fn blow_up_is_reported() {
        let p = ScaleParams {
            dt: 0.5,
            ..ScaleParams::default()
        };
        match generate_snippet(1, &p, 50.0, 2, false) {
            Err(DatasetError::BlowUp { seed: 1, .. }) => {}
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = ScaleParams::default();
        let (ds, _) = generate(5, &p, &small_opts(2, 3)).unwrap();
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 88 + 2 * (16 + 2 * 3 * 4 * 8));
        let back = Dataset::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, ds);
        for (a, b) in back.snippets[0]
            .coarse_states
            .iter()
            .zip(&ds.snippets[0].coarse_states)
        {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn rejects_corrupt_files() {
        let p = ScaleParams::default();
        let (ds, _) = generate(5, &p, &small_opts(1, 2)).unwrap();
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(Dataset::read_from(&mut bad.as_slice()).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(Dataset::read_from(&mut long.as_slice()).is_err());
        buf.truncate(buf.len() - 1);
        assert!(Dataset::read_from(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn thread_count_does_not_change_payload() {
        let p = ScaleParams::default();
        let (a, _) = generate(11, &p, &small_opts(6, 4)).unwrap();
        let (b, _) = generate(
            11,
            &p,
            &GenerateOptions {
                threads: 4,
                ..small_opts(6, 4)
            },
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn debug_fields_satisfy_target_identity() {
        let p = ScaleParams::default();
        let opts = GenerateOptions {
            retain_small_scale: true,
            ..small_opts(3, 20)
        };
        let (ds, _) = generate(2, &p, &opts).unwrap();
        let mut buf = Vec::new();
        ds.write_to(&mut buf).unwrap();
        let back = Dataset::read_from(&mut buf.as_slice()).unwrap();
        assert!(back.verify_targets(3).unwrap() <= 1e-12);
    }

    #[test]
    fn csv_export_layout() {
        let p = ScaleParams::default();
        let (ds, _) = generate(5, &p, &small_opts(2, 3)).unwrap();
        let mut out = Vec::new();
        ds.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "snippet_id,t,X_0,X_1,X_2,X_3,h_0,h_1,h_2,h_3");
        assert_eq!(lines.len(), 1 + 6);
        let fields: Vec<f64> = lines[4].split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields[0], 1.0);
        assert_eq!(fields[2], ds.snippets[1].coarse_states[0]);
    }

    #[test]
    fn climatology_of_toy_sets() {
        let p = ScaleParams::default();
        let zeros =
            Dataset::from_rows(&p, Split::Train, vec![(vec![0.0; 8], vec![0.0; 8])]).unwrap();
        assert_eq!(compute_climatology(&zeros).unwrap().mean, 0.0);

        let a = (vec![1.0, 2.0, 3.0, 4.0], vec![0.0; 4]);
        let b = (vec![5.0, 6.0, 7.0, 8.0], vec![0.0; 4]);
        let ds = Dataset::from_rows(&p, Split::Train, vec![a, b]).unwrap();
        let c = compute_climatology(&ds).unwrap();
        assert_eq!(c.mean, 4.5);
        assert_eq!(c.per_k_mean, vec![3.0, 4.0, 5.0, 6.0]);
        assert!((c.std - (5.25f64).sqrt()).abs() < 1e-12);
    }
}
