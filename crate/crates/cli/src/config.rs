//! Plain-text `key = value` run configuration.

use std::fmt;
use std::time::Duration;

use mno_core::baselines::{ResNetConfig, ResNetTrainConfig};
use mno_core::bench::BenchConfig;
use mno_core::dataset::{GenerateOptions, Split};
use mno_core::dynamics::ScaleParams;
use mno_core::fno::{FnoConfig, TrainConfig};
use mno_core::rollout::EvalConfig;

/// A configuration or command-line mistake; maps to exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

macro_rules! run_config {
    ($( $(#[doc = $doc:expr])* $key:ident : $ty:ty = $default:expr, )*) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct RunConfig {
            $( $(#[doc = $doc])* pub $key: $ty, )*
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $( $key: $default, )* }
            }
        }

        impl RunConfig {
            pub fn set(&mut self, key: &str, value: &str) -> Result<(), UsageError> {
                match key {
                    $( stringify!($key) => {
                        self.$key = value.parse().map_err(|_| {
                            UsageError(format!("invalid value '{value}' for key '{key}'"))
                        })?;
                    } )*
                    _ => return Err(UsageError(format!("unknown config key '{key}'"))),
                }
                Ok(())
            }

            /// Every key in declaration order; parses back to `self`.
            pub fn to_text(&self) -> String {
                let mut s = String::new();
                $( s.push_str(&format!("{} = {}\n", stringify!($key), self.$key)); )*
                s
            }
        }
    };
}

run_config! {
    /// Master seed; every random stream derives from it.
    seed: u64 = 0,
    k: usize = 4,
    j: usize = 4,
    forcing: f64 = 20.0,
    coupling: f64 = 0.5,
    b: f64 = 10.0,
    c: f64 = 8.0,
    dt: f64 = 0.005,
    train_snippets: usize = 4000,
    test_snippets: usize = 1000,
    t_steps: usize = 400,
    warmup_mtu: f64 = 10.0,
    /// Generation threads; 0 uses every available core. Output is independent of it.
    threads: usize = 0,
    max_attempts: usize = 16,
    retain_small_scale: bool = false,
    n_v: usize = 64,
    k_max: usize = 3,
    n_d: usize = 3,
    coord_channel: bool = false,
    fno_lr: f64 = 1e-3,
    /// Learning-rate decays per epoch.
    fno_lr_step: u64 = 20,
    fno_lr_gamma: f64 = 0.9,
    fno_epochs: usize = 2,
    fno_batch_size: usize = 64,
    adam_beta1: f64 = 0.9,
    adam_beta2: f64 = 0.999,
    adam_eps: f64 = 1e-8,
    resnet_width: usize = 32,
    resnet_blocks: usize = 2,
    resnet_lr: f64 = 0.01,
    resnet_epochs: usize = 20,
    resnet_batch_size: usize = 1024,
    t_eval: usize = 200,
    t_rollout: usize = 400,
    bound: f64 = 50.0,
    per_stage: bool = false,
    keep_samples: usize = 4,
    bench_k_min_exp: u32 = 4,
    bench_k_max_exp: u32 = 18,
    bench_dns_max_k: usize = 1 << 15,
    bench_mno_max_k: usize = 1 << 18,
    bench_budget_s: f64 = 10.0,
    bench_mem_fraction: f64 = 0.7,
    bench_knee: usize = 1 << 12,
}

impl RunConfig {
    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), UsageError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                UsageError(format!("config line {}: expected key = value", i + 1))
            })?;
            self.set(key.trim(), value.trim())
                .map_err(|e| UsageError(format!("config line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn apply_override(&mut self, kv: &str) -> Result<(), UsageError> {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| UsageError(format!("override '{kv}' is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn scale_params(&self) -> ScaleParams<f64> {
        ScaleParams {
            k: self.k,
            j: self.j,
            forcing: self.forcing,
            coupling: self.coupling,
            b: self.b,
            c: self.c,
            dt: self.dt,
        }
    }

    pub fn generate_options(&self, split: Split) -> GenerateOptions {
        let threads = if self.threads == 0 {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        } else {
            self.threads
        };
        GenerateOptions {
            split,
            n_snippets: match split {
                Split::Train => self.train_snippets,
                Split::Test => self.test_snippets,
            },
            t_steps: self.t_steps,
            warmup_mtu: self.warmup_mtu,
            retain_small_scale: self.retain_small_scale,
            threads,
            max_attempts: self.max_attempts,
        }
    }

    pub fn fno_config(&self) -> FnoConfig {
        FnoConfig {
            n_v: self.n_v,
            k_max: self.k_max,
            n_d: self.n_d,
            coord_channel: self.coord_channel,
            ..FnoConfig::default()
        }
    }

    pub fn fno_train(&self) -> TrainConfig {
        TrainConfig {
            lr: self.fno_lr,
            lr_step: self.fno_lr_step,
            lr_gamma: self.fno_lr_gamma,
            epochs: self.fno_epochs,
            batch_size: self.fno_batch_size,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            seed: self.seed,
        }
    }

    pub fn resnet_config(&self) -> ResNetConfig {
        ResNetConfig {
            width: self.resnet_width,
            blocks: self.resnet_blocks,
        }
    }

    pub fn resnet_train(&self) -> ResNetTrainConfig {
        ResNetTrainConfig {
            lr: self.resnet_lr,
            epochs: self.resnet_epochs,
            batch_size: self.resnet_batch_size,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            seed: self.seed,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            t_eval: self.t_eval,
            t_rollout: self.t_rollout,
            bound: self.bound,
            per_stage: self.per_stage,
            keep_samples: self.keep_samples,
        }
    }

    pub fn bench_config(&self) -> Result<BenchConfig, UsageError> {
        if !(self.bench_budget_s > 0.0 && self.bench_budget_s.is_finite()) {
            return Err(UsageError("bench_budget_s must be positive".into()));
        }
        Ok(BenchConfig {
            k_min_exp: self.bench_k_min_exp,
            k_max_exp: self.bench_k_max_exp,
            dns_max_k: self.bench_dns_max_k,
            mno_max_k: self.bench_mno_max_k,
            budget: Duration::from_secs_f64(self.bench_budget_s),
            mem_fraction: self.bench_mem_fraction,
            knee: self.bench_knee,
            seed: self.seed,
        })
    }
}
