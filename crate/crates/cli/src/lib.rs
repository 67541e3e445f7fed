//! `mno`: data generation, training, evaluation, benchmarking and plotting.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

mod config;

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use config::{RunConfig, UsageError};
use mno_core::baselines::{
    fit_linear_concat, fit_linear_or_intercept, fit_resnet, one_step_mse, LinearMatrix,
    LinearParam, ResNetParams,
};
use mno_core::bench::{self, BenchMethod};
use mno_core::container::Container;
use mno_core::dataset::{compute_climatology, generate, Dataset, Split};
use mno_core::fno::{dataset_mse, train_fno, FnoParams};
use mno_core::optim::write_loss_csv;
use mno_core::plot::{plot_from_csv, LinePlot};
use mno_core::rng::{derive_seed, Stream};
use mno_core::rollout::{self, evaluate_all, FnoModel, Method, NamedMethod, ResNetModel, Zero};

const SCHEMAS: &str = "\
CSV schemas:
  <split>.csv         snippet_id,t,X_0..X_{K-1},h_0..h_{K-1}
  summary.csv         method,rmse,horizon,bounded_fraction
  rmse_t.csv          t,climatology,<method>...
  mean_std.csv        t,truth_mean,truth_std,<method>_mean,<method>_std...
  sample_<i>.csv      t,truth,<method>...   (grid point 0 of test sample i)
  <method>_loss.csv   step,lr,mse
  linear_fit.csv      a,b0,train_mse
  bench.csv           method,K,J,reps,best_ns
  skipped.csv         method,K,reason
Config files hold `key = value` lines with `#` comments; every run writes the
fully resolved configuration next to its outputs.";

#[derive(Parser, Debug)]
#[command(name = "mno", version, about = "Multiscale neural operator workbench", after_help = SCHEMAS)]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Fno,
    Linear,
    LinearConcat,
    Resnet,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate the resolved system and write a dataset with CSV export.
    Generate {
        #[arg(long, value_enum)]
        split: SplitArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a parametrization to a training dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Roll out every model on the test set and write metrics and figures.
    Evaluate {
        /// Test dataset.
        #[arg(long)]
        data: PathBuf,
        /// Training dataset, for climatology.
        #[arg(long)]
        train: PathBuf,
        /// Weight files written by `train`.
        #[arg(long, num_args = 0..)]
        models: Vec<PathBuf>,
        /// Add the uncorrected coarse solver.
        #[arg(long)]
        zero: bool,
        /// Add the reference trajectories as a method (debug).
        #[arg(long)]
        truth: bool,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Time one solver step across grid sizes.
    Bench {
        /// Weights for timing; random weights if absent.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a CSV table as an SVG line plot.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        title: Option<String>,
    },
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit code.
pub fn run_cli<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                1
            } else {
                2
            }
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_text(&text)?;
    }
    for kv in &cli.overrides {
        cfg.apply_override(kv)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn write_file(
    path: &Path,
    f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    f(&mut w)
        .and_then(|_| w.flush())
        .with_context(|| format!("writing {}", path.display()))
}

fn write_resolved(out: &Path, name: &str, cfg: &RunConfig) -> Result<()> {
    let path = out.join(format!("{name}.config"));
    fs::write(&path, cfg.to_text()).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    match cli.command {
        Command::Generate { split, out } => cmd_generate(&cfg, split, &out),
        Command::Train { data, method, out } => cmd_train(&cfg, &data, method, &out),
        Command::Evaluate {
            data,
            train,
            models,
            zero,
            truth,
            out,
        } => cmd_evaluate(&cfg, &data, &train, &models, zero, truth, &out),
        Command::Bench { model, out } => cmd_bench(&cfg, model.as_deref(), &out),
        Command::Plot { input, out, title } => cmd_plot(&input, &out, title.as_deref()),
    }
}

fn cmd_generate(cfg: &RunConfig, split: SplitArg, out: &Path) -> Result<()> {
    let (split, name, stream) = match split {
        SplitArg::Train => (Split::Train, "train", Stream::TrainData),
        SplitArg::Test => (Split::Test, "test", Stream::TestData),
    };
    let p = cfg.scale_params();
    p.validate().map_err(|e| UsageError(e.to_string()))?;
    create_dir(out)?;
    write_resolved(out, &format!("generate_{name}"), cfg)?;
    let (ds, stats) = generate(
        derive_seed(cfg.seed, stream),
        &p,
        &cfg.generate_options(split),
    )?;
    let path = out.join(format!("{name}.mnod"));
    ds.save(&path)?;
    write_file(&out.join(format!("{name}.csv")), |w| ds.write_csv(w))?;
    let h = &ds.header;
    println!(
        "{}: split={name} K={} J={} T={} n={} F={} h_s={} b={} c={} dt={} warmup_steps={} retries={}",
        path.display(),
        h.k,
        h.j,
        h.t_steps,
        h.n_snippets,
        h.forcing,
        h.coupling,
        h.b,
        h.c,
        h.dt,
        h.warmup_steps,
        stats.retries
    );
    Ok(())
}

fn cmd_train(cfg: &RunConfig, data: &Path, method: MethodArg, out: &Path) -> Result<()> {
    let train = Dataset::load(data).with_context(|| format!("loading {}", data.display()))?;
    create_dir(out)?;
    let stride = (train.n_pairs() / 20_000).max(1);
    match method {
        MethodArg::Fno => {
            write_resolved(out, "fno", cfg)?;
            let (params, losses) = train_fno::<f64>(&train, &cfg.fno_config(), &cfg.fno_train())?;
            params.save(out.join("fno.mnow"))?;
            write_file(&out.join("fno_loss.csv"), |w| write_loss_csv(w, &losses))?;
            println!(
                "fno: {} steps, train mse {:.6e}",
                losses.len(),
                dataset_mse(&params, &train, stride)?
            );
        }
        MethodArg::Linear => {
            write_resolved(out, "linear", cfg)?;
            let fit = fit_linear_or_intercept(&train)?;
            fit.to_container().save(out.join("linear.mnow"))?;
            let mse = one_step_mse(&train, 1, |x, o| fit.predict(x, o));
            write_file(&out.join("linear_fit.csv"), |w| {
                writeln!(w, "a,b0,train_mse\n{:e},{:e},{:e}", fit.a, fit.b0, mse)
            })?;
            println!(
                "linear: a={:.6} b0={:.6} train mse {mse:.6e}",
                fit.a, fit.b0
            );
        }
        MethodArg::LinearConcat => {
            write_resolved(out, "linear_concat", cfg)?;
            let fit = fit_linear_concat(&train)?;
            fit.to_container().save(out.join("linear_concat.mnow"))?;
            let mse = one_step_mse(&train, 1, |x, o| fit.predict(x, o));
            println!("linear_concat: train mse {mse:.6e}");
        }
        MethodArg::Resnet => {
            write_resolved(out, "resnet", cfg)?;
            let (params, losses) =
                fit_resnet::<f64>(&train, cfg.resnet_config(), &cfg.resnet_train())?;
            params.save(out.join("resnet.mnow"))?;
            write_file(&out.join("resnet_loss.csv"), |w| write_loss_csv(w, &losses))?;
            let mse = one_step_mse(&train, stride, |x, o| params.predict(x, o));
            println!("resnet: {} steps, train mse {mse:.6e}", losses.len());
        }
    }
    Ok(())
}

/// Loads any weight file written by `train` as a rollout method.
fn load_model(path: &Path, k: usize) -> Result<NamedMethod> {
    let c = Container::load(path).with_context(|| format!("loading {}", path.display()))?;
    let method = match c.kind.as_str() {
        "fno" => NamedMethod::new(
            "mno",
            Method::Rollout(Box::new(FnoModel::new(FnoParams::from_container(&c)?, k)?)),
        ),
        "linear" => NamedMethod::new(
            "linear",
            Method::Rollout(Box::new(LinearParam::from_container(&c)?)),
        ),
        "linear_concat" => NamedMethod::new(
            "linear_concat",
            Method::Rollout(Box::new(LinearMatrix::from_container(&c)?)),
        ),
        "resnet" => NamedMethod::new(
            "resnet",
            Method::Rollout(Box::new(ResNetModel::new(ResNetParams::from_container(
                &c,
            )?))),
        ),
        other => bail!("{}: unknown model kind '{other}'", path.display()),
    };
    Ok(method)
}

fn cmd_evaluate(
    cfg: &RunConfig,
    data: &Path,
    train: &Path,
    models: &[PathBuf],
    zero: bool,
    truth: bool,
    out: &Path,
) -> Result<()> {
    let test = Dataset::load(data).with_context(|| format!("loading {}", data.display()))?;
    let train = Dataset::load(train).with_context(|| format!("loading {}", train.display()))?;
    let clim = compute_climatology(&train)?;
    let mut methods = vec![NamedMethod::new("climatology", Method::Climatology)];
    for m in models {
        methods.push(load_model(m, test.k())?);
    }
    if zero {
        methods.push(NamedMethod::new("zero", Method::Rollout(Box::new(Zero))));
    }
    if truth {
        methods.push(NamedMethod::new("truth", Method::Truth));
    }
    create_dir(out)?;
    write_resolved(out, "evaluate", cfg)?;
    let p = test.header.params();
    let mut ev = evaluate_all(&test, &mut methods, &clim, &p, &cfg.eval_config())?;
    ev.reports.sort_by(|a, b| a.rmse.total_cmp(&b.rmse));

    write_file(&out.join("summary.csv"), |w| {
        rollout::write_summary_csv(w, &ev)
    })?;
    write_file(&out.join("rmse_t.csv"), |w| rollout::write_rmse_csv(w, &ev))?;
    write_file(&out.join("mean_std.csv"), |w| {
        rollout::write_mean_std_csv(w, &ev)
    })?;
    for i in 0..ev.truth_samples.len() {
        write_file(&out.join(format!("sample_{i}.csv")), |w| {
            rollout::write_sample_csv(w, &ev, i)
        })?;
    }

    let steps = |v: &[f64]| {
        v.iter()
            .enumerate()
            .map(|(t, &y)| (t as f64, y))
            .collect::<Vec<_>>()
    };
    let mut rmse = LinePlot::new("RMSE over time", "step", "RMSE");
    for r in ev.reports.iter().filter(|r| r.name != "climatology") {
        rmse = rmse.with_series(&r.name, steps(&r.rmse_t));
    }
    rmse = rmse.with_series("climatology", steps(&ev.climatology_rmse_t));
    fs::write(out.join("rmse_t.svg"), rmse.to_svg()?)?;
    let mut ms = LinePlot::new("Ensemble mean and std", "step", "X")
        .with_series("truth mean", steps(&ev.truth_mean_t));
    ms = ms.with_series("truth std", steps(&ev.truth_std_t));
    for r in ev.reports.iter().filter(|r| r.name != "truth") {
        ms = ms.with_series(&format!("{} mean", r.name), steps(&r.mean_t));
        ms = ms.with_series(&format!("{} std", r.name), steps(&r.std_t));
    }
    fs::write(out.join("mean_std.svg"), ms.to_svg()?)?;
    if !ev.truth_samples.is_empty() {
        let k = ev.k;
        let first = |v: &[f64]| {
            v.iter()
                .step_by(k)
                .enumerate()
                .map(|(t, &y)| (t as f64, y))
                .collect::<Vec<_>>()
        };
        let mut sample = LinePlot::new("Sample trajectory, grid point 0", "step", "X")
            .with_series("truth", first(&ev.truth_samples[0]));
        for r in ev.reports.iter().filter(|r| r.name != "truth") {
            sample = sample.with_series(&r.name, first(&r.samples[0]));
        }
        fs::write(out.join("sample_0.svg"), sample.to_svg()?)?;
    }

    println!(
        "{:<14} {:>12} {:>8} {:>9}",
        "method", "rmse", "horizon", "bounded"
    );
    for r in &ev.reports {
        println!(
            "{:<14} {:>12.6} {:>8} {:>9.4}",
            r.name, r.rmse, r.horizon, r.bounded_fraction
        );
    }
    Ok(())
}

fn cmd_bench(cfg: &RunConfig, model: Option<&Path>, out: &Path) -> Result<()> {
    let bcfg = cfg.bench_config()?;
    bcfg.validate().map_err(|e| UsageError(e.to_string()))?;
    let params = match model {
        Some(path) => {
            FnoParams::load(path).with_context(|| format!("loading {}", path.display()))?
        }
        None => bench::timing_params(&cfg.fno_config(), derive_seed(cfg.seed, Stream::BenchState))?,
    };
    create_dir(out)?;
    write_resolved(out, "bench", cfg)?;
    fs::write(out.join("environment.txt"), bench::environment())?;
    let (records, skips) = bench::run_sweep(&bcfg, &params, &cfg.scale_params(), |r| match r {
        Ok(r) => eprintln!(
            "{} K={} reps={} best_ns={}",
            r.method.name(),
            r.k,
            r.reps,
            r.best_ns
        ),
        Err(s) => eprintln!("{} K={} skipped: {}", s.method.name(), s.k, s.reason),
    })?;
    write_file(&out.join("bench.csv"), |w| bench::write_csv(w, &records))?;
    write_file(&out.join("skipped.csv"), |w| {
        writeln!(w, "method,K,reason")?;
        for s in &skips {
            writeln!(
                w,
                "{},{},{}",
                s.method.name(),
                s.k,
                s.reason.replace(',', ";")
            )?;
        }
        Ok(())
    })?;
    let mut scaling = String::new();
    for m in [BenchMethod::Dns, BenchMethod::Mno] {
        match bench::fit_scaling(&records, m, bcfg.knee) {
            Ok(s) => scaling.push_str(&format!(
                "{}_slope={:.4}\n{}_r2={:.4}\n{}_points={}\n",
                m.name(),
                s.slope,
                m.name(),
                s.r2,
                m.name(),
                s.n
            )),
            Err(e) => scaling.push_str(&format!("{}_slope=unavailable ({e})\n", m.name())),
        }
    }
    for e in [12, 13, 15] {
        let ratio = bench::speedup_at(&records, 1 << e)
            .map(|r| format!("{r:.2}"))
            .unwrap_or_else(|| "unavailable".into());
        scaling.push_str(&format!("speedup_2^{e}={ratio}\n"));
    }
    fs::write(out.join("scaling.txt"), &scaling)?;
    print!("{scaling}");
    if !records.is_empty() {
        let text = fs::read_to_string(out.join("bench.csv"))?;
        fs::write(
            out.join("bench.svg"),
            plot_from_csv(&text, "One-step runtime")?.to_svg()?,
        )?;
    }
    Ok(())
}

fn cmd_plot(input: &Path, out: &Path, title: Option<&str>) -> Result<()> {
    let text = fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let title = title.map(str::to_string).unwrap_or_else(|| {
        input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let svg = plot_from_csv(&text, &title)
        .with_context(|| input.display().to_string())?
        .to_svg()?;
    fs::write(out, svg).with_context(|| format!("writing {}", out.display()))
}
