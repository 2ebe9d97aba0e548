//! Command-line harness.
//!
//! Parameters come from a flat `key = value` file, `AMPRLAB_<KEY>`
//! environment variables and trailing `key=value` arguments, in increasing
//! order of precedence; `--seed` overrides everything. Every command is a
//! pure function of its configuration and writes its artifacts under
//! `--out`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::ampr::{run_ampr, unbiased_estimate, SolverOptions};
use crate::data::{sample_bootstrap_weights, sample_instance, ProblemInstance, SignalPrior};
use crate::diagnostics::{ks_statistic, linear_fit, qq_against_normal};
use crate::error::{Error, LastState, Result};
use crate::experiments::{bootstrap_mean, realization_seed, residual_sample};
use crate::gamp::{gamp_unbiased_estimate, run_gamp, Weights};
use crate::hyperopt::{minimize_variance, sweep_phase_diagram, GammaMode, HyperoptOptions, OptDomain, SweepRecord};
use crate::kernels::{BootstrapSize, DenoiserParams};
use crate::optim::NelderMeadOptions;
use crate::se::{run_se_traced, se_variance, Expectation, SeInit, SeModel, SeOptions};

pub const SCHEMA_VERSION: u32 = 1;
const ENV_PREFIX: &str = "AMPRLAB_";

const EXIT_USAGE: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

/// Keys accepted in config files, the environment and overrides.
pub const KNOWN_KEYS: &[&str] = &[
    "n",
    "alpha",
    "delta",
    "rho",
    "lambda",
    "gamma",
    "mu_b",
    "seed",
    "instance",
    "coords",
    "tol",
    "max_iters",
    "damping",
    "init_qhat",
    "init_vhat",
    "se_tol",
    "se_max_iters",
    "se_damping",
    "se_method",
    "se_nodes",
    "se_init",
    "k",
    "restarts",
    "rho_grid",
    "alpha_grid",
    "mu_b_min",
    "mu_b_max",
    "lambda_max",
    "gamma_mode",
    "nm_max_iters",
    "nm_tol",
];

#[derive(Debug, Parser)]
#[command(
    name = "amprlab",
    version,
    about = "Bootstrap analysis of the elastic net by AMP with resampling"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for the synthetic instance; bootstrap seeds derive from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,

    /// Worker threads for batched solves and sweeps.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run AMPR and write the fixed-point summary.
    RunAmpr(Overrides),
    /// Run GAMP with uniform weights, or one bootstrap realization when `mu_b` is set.
    RunGamp(Overrides),
    /// Iterate the state evolution and write its trajectory.
    RunSe(Overrides),
    /// Residual Q-Q table and bootstrap-mean scatter against GAMP realizations.
    Qq(Overrides),
    /// Minimize the predicted variance for one (rho, alpha) cell.
    Optimize(Overrides),
    /// Phase-diagram sweep over a (rho, alpha) grid.
    Sweep(Overrides),
}

#[derive(Debug, clap::Args)]
pub struct Overrides {
    /// `key=value` settings applied on top of the config file and environment.
    #[arg(value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

/// Merged key/value configuration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Config {
    fn insert(&mut self, key: &str, value: &str, origin: &str) -> Result<()> {
        let key = key.trim().to_ascii_lowercase();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(config_err(format!("unknown key `{key}` ({origin})")));
        }
        self.values.insert(key, value.trim().to_string());
        Ok(())
    }

    /// Parse `key = value` lines; `#` starts a comment.
    pub fn parse_file_contents(&mut self, text: &str, origin: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("{origin}:{}: expected key = value", no + 1)))?;
            self.insert(k, v, origin)?;
        }
        Ok(())
    }

    pub fn load(
        file: Option<&Path>,
        env: impl IntoIterator<Item = (String, String)>,
        overrides: &[String],
    ) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            cfg.parse_file_contents(&text, &path.display().to_string())?;
        }
        let mut env: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
        env.sort();
        for (k, v) in env {
            cfg.insert(&k[ENV_PREFIX.len()..], &v, &format!("environment {k}"))?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| config_err(format!("override `{o}` is not key=value")))?;
            cfg.insert(k, v, "command line")?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> Result<()> {
        self.insert(key, &value.to_string(), "flag")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.values
            .get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| config_err(format!("key `{key}`: cannot parse {v:?}: {e}")))
            })
            .transpose()
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)?
            .ok_or_else(|| config_err(format!("missing required key `{key}`")))
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    fn grid(&self, key: &str) -> Result<Vec<f64>> {
        let raw: String = self.require(key)?;
        parse_grid(&raw).map_err(|e| config_err(format!("key `{key}`: {e}")))
    }
}

/// `a,b,c` or `lo:hi:count` (inclusive, evenly spaced).
pub fn parse_grid(raw: &str) -> std::result::Result<Vec<f64>, String> {
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
    if let [lo, hi, count] = raw.split(':').collect::<Vec<_>>()[..] {
        let (lo, hi) = (parse(lo)?, parse(hi)?);
        let count: usize = count.trim().parse().map_err(|e| format!("{count:?}: {e}"))?;
        return match count {
            0 => Err("grid count must be >= 1".into()),
            1 => Ok(vec![lo]),
            _ => Ok((0..count)
                .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
                .collect()),
        };
    }
    let values = raw
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(parse)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if values.is_empty() {
        return Err("grid is empty".into());
    }
    Ok(values)
}

/// Round-trip float text: 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct RoundTripFormatter;

impl serde_json::ser::Formatter for RoundTripFormatter {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(fmt_f64(value).as_bytes())
    }
}

/// Compact JSON with every float written by [`fmt_f64`].
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, RoundTripFormatter);
    value.serialize(&mut ser).map_err(|e| Error::Io(io::Error::other(e)))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("serde_json writes UTF-8"))
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<()> {
    fs::write(dir.join(name), to_json_string(value)?)?;
    Ok(())
}

fn write_csv(dir: &Path, name: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut out = io::BufWriter::new(fs::File::create(dir.join(name))?);
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    out.flush()?;
    Ok(())
}

fn num_row(values: &[f64]) -> Vec<String> {
    values.iter().map(|&v| fmt_f64(v)).collect()
}

fn mu_b_json(mu: BootstrapSize) -> Value {
    if mu.is_infinite() {
        json!("inf")
    } else {
        json!(mu.value())
    }
}

fn f64_or_inf_json(v: f64) -> Value {
    if v.is_infinite() {
        json!("inf")
    } else {
        json!(v)
    }
}

struct Model {
    instance_seed: u64,
    params: DenoiserParams,
    prior: SignalPrior,
}

fn model_from(cfg: &Config) -> Result<Model> {
    Ok(Model {
        instance_seed: cfg.get_or("seed", 0)?,
        params: DenoiserParams::new(cfg.require("lambda")?, cfg.require("gamma")?)?,
        prior: SignalPrior::new(cfg.require("rho")?)?,
    })
}

fn instance_from(cfg: &Config, model: &Model) -> Result<ProblemInstance> {
    if let Some(path) = cfg.get::<String>("instance")? {
        return ProblemInstance::load(Path::new(&path));
    }
    sample_instance(
        cfg.require("n")?,
        cfg.require("alpha")?,
        cfg.require("delta")?,
        model.prior,
        model.instance_seed,
    )
}

fn solver_options(cfg: &Config) -> Result<SolverOptions> {
    let d = SolverOptions::default();
    Ok(SolverOptions {
        max_iters: cfg.get_or("max_iters", d.max_iters)?,
        tol: cfg.get_or("tol", d.tol)?,
        damping: cfg.get_or("damping", d.damping)?,
        init_qhat: cfg.get_or("init_qhat", d.init_qhat)?,
        init_vhat: cfg.get_or("init_vhat", d.init_vhat)?,
        init_h: None,
    })
}

fn se_options(cfg: &Config) -> Result<SeOptions> {
    let d = SeOptions::default();
    let expectation = match cfg.get_or("se_method", "closed_form".to_string())?.as_str() {
        "closed_form" => Expectation::ClosedForm,
        "quadrature" => Expectation::Quadrature {
            nodes: cfg.get_or("se_nodes", 20)?,
        },
        other => {
            return Err(config_err(format!(
                "se_method must be closed_form or quadrature, got {other:?}"
            )))
        }
    };
    Ok(SeOptions {
        max_iters: cfg.get_or("se_max_iters", d.max_iters)?,
        tol: cfg.get_or("se_tol", d.tol)?,
        damping: cfg.get_or("se_damping", d.damping)?,
        expectation,
    })
}

fn hyperopt_options(cfg: &Config) -> Result<(OptDomain, HyperoptOptions)> {
    let dd = OptDomain::default();
    let gamma_mode = match cfg.get_or("gamma_mode", "fixed".to_string())?.as_str() {
        "fixed" => GammaMode::Fixed(cfg.get_or("gamma", 1.0)?),
        "free" => GammaMode::Free,
        other => return Err(config_err(format!("gamma_mode must be fixed or free, got {other:?}"))),
    };
    let mu_hi: BootstrapSize = cfg.get_or("mu_b_max", BootstrapSize::INFINITE)?;
    let domain = OptDomain {
        mu_b_range: (cfg.get_or("mu_b_min", dd.mu_b_range.0)?, mu_hi.value()),
        lambda_max: cfg.get_or("lambda_max", dd.lambda_max)?,
        gamma_mode,
    };
    domain.validate()?;
    let dh = HyperoptOptions::default();
    let opts = HyperoptOptions {
        restarts: cfg.get_or("restarts", dh.restarts)?,
        se: se_options(cfg)?,
        nm: NelderMeadOptions {
            max_iters: cfg.get_or("nm_max_iters", dh.nm.max_iters)?,
            diameter_tol: cfg.get_or("nm_tol", dh.nm.diameter_tol)?,
            ..dh.nm
        },
    };
    Ok((domain, opts))
}

fn cmd_run_ampr(cfg: &Config, out: &Path) -> Result<()> {
    let model = model_from(cfg)?;
    let mu_b: BootstrapSize = cfg.require("mu_b")?;
    let opts = solver_options(cfg)?;
    let inst = instance_from(cfg, &model)?;
    let state = run_ampr(&inst, &model.params, mu_b, &opts)?;
    let est = unbiased_estimate(&state, inst.alpha())?;
    let mse = (&state.w_hat - &inst.w0).mapv(|v| v * v).mean().unwrap_or(0.0);
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "run-ampr",
        "n": inst.n(),
        "m": inst.m(),
        "alpha": inst.alpha(),
        "delta": inst.delta,
        "rho": model.prior.rho,
        "lambda": model.params.lambda,
        "gamma": model.params.gamma,
        "mu_b": mu_b_json(mu_b),
        "seed": model.instance_seed,
        "qhat": state.qhat,
        "vhat": state.vhat,
        "chi": state.chi,
        "v": state.v,
        "sigma2": est.sigma2,
        "vhat_over_qhat2": est.vhat_over_qhat2,
        "mse": mse,
        "iterations": state.iter,
        "converged": state.converged,
    });
    write_json(out, "summary.json", &summary)?;
    if cfg.get_or("coords", true)? {
        let rows = (0..inst.n()).map(|i| num_row(&[inst.w0[i], est.r_hat[i], state.w_hat[i]]));
        write_csv(out, "coords.csv", &["w0", "r_hat", "w_hat"], rows)?;
    }
    Ok(())
}

fn cmd_run_gamp(cfg: &Config, out: &Path) -> Result<()> {
    let model = model_from(cfg)?;
    let mu_b: Option<BootstrapSize> = cfg.get("mu_b")?;
    let opts = solver_options(cfg)?;
    let inst = instance_from(cfg, &model)?;
    let weights = match mu_b {
        Some(mu) if !mu.is_infinite() => Weights::Explicit(
            sample_bootstrap_weights(inst.m(), mu, realization_seed(model.instance_seed, 0))?.ratios(),
        ),
        _ => Weights::Uniform,
    };
    let state = run_gamp(&inst, &model.params, &weights, &opts)?;
    let est = gamp_unbiased_estimate(&state)?;
    let mse = (&state.w_hat - &inst.w0).mapv(|v| v * v).mean().unwrap_or(0.0);
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "run-gamp",
        "n": inst.n(),
        "m": inst.m(),
        "alpha": inst.alpha(),
        "delta": inst.delta,
        "rho": model.prior.rho,
        "lambda": model.params.lambda,
        "gamma": model.params.gamma,
        "weights": if matches!(weights, Weights::Uniform) { "uniform" } else { "bootstrap" },
        "mu_b": mu_b.map_or(json!("inf"), mu_b_json),
        "seed": model.instance_seed,
        "qhat": state.qhat,
        "chi": state.chi,
        "sigma2": est.sigma2,
        "mse": mse,
        "iterations": state.iter,
        "converged": state.converged,
    });
    write_json(out, "summary.json", &summary)?;
    if cfg.get_or("coords", true)? {
        let rows = (0..inst.n()).map(|i| num_row(&[inst.w0[i], est.r_hat[i], state.w_hat[i]]));
        write_csv(out, "coords.csv", &["w0", "r_hat", "w_hat"], rows)?;
    }
    Ok(())
}

fn cmd_run_se(cfg: &Config, out: &Path) -> Result<()> {
    let model = SeModel {
        alpha: cfg.require("alpha")?,
        delta: cfg.require("delta")?,
        prior: SignalPrior::new(cfg.require("rho")?)?,
        params: DenoiserParams::new(cfg.require("lambda")?, cfg.require("gamma")?)?,
        mu_b: cfg.require("mu_b")?,
    };
    let opts = se_options(cfg)?;
    let init = match cfg.get_or("se_init", "standard".to_string())?.as_str() {
        "standard" => SeInit::standard(&model.prior),
        "matched" => SeInit::matched_to_ampr(&model, &solver_options(cfg)?),
        other => {
            return Err(config_err(format!(
                "se_init must be standard or matched, got {other:?}"
            )))
        }
    };
    let mut rows = Vec::new();
    let state = run_se_traced(&model, &init, &opts, |s| {
        rows.push(num_row(&[
            s.t as f64,
            s.mse,
            s.chi,
            s.v,
            s.qhat,
            s.chihat,
            s.vhat,
            s.sigma2(),
        ]));
    })?;
    write_csv(
        out,
        "trajectory.csv",
        &["t", "E", "chi", "v", "qhat", "chihat", "vhat", "sigma2"],
        rows,
    )?;
    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "command": "run-se",
        "alpha": model.alpha,
        "delta": model.delta,
        "rho": model.prior.rho,
        "lambda": model.params.lambda,
        "gamma": model.params.gamma,
        "mu_b": mu_b_json(model.mu_b),
        "E": state.mse,
        "chi": state.chi,
        "v": state.v,
        "qhat": state.qhat,
        "chihat": state.chihat,
        "vhat": state.vhat,
        "sigma2": se_variance(&state),
        "iterations": state.iter,
        "converged": state.converged,
    });
    write_json(out, "summary.json", &summary)
}

fn cmd_qq(cfg: &Config, out: &Path) -> Result<()> {
    let model = model_from(cfg)?;
    let mu_b: BootstrapSize = cfg.require("mu_b")?;
    let k: usize = cfg.get_or("k", 2048)?;
    let opts = solver_options(cfg)?;
    let inst = instance_from(cfg, &model)?;
    let state = run_ampr(&inst, &model.params, mu_b, &opts)?;
    let variance = state.vhat / (state.qhat * state.qhat);

    // realization 0 doubles as the single draw for the residual Q-Q table
    let residual = residual_sample(&inst, &state, realization_seed(model.instance_seed, 0), &opts)?;
    let qq = qq_against_normal(&residual, variance)?;
    write_csv(
        out,
        "qq.csv",
        &["theoretical", "sample"],
        qq.theoretical.iter().zip(&qq.sample).map(|(&t, &s)| num_row(&[t, s])),
    )?;
    let emp_var = residual.iter().map(|r| r * r).sum::<f64>() / residual.len() as f64;
    write_json(
        out,
        "qq.json",
        &json!({
            "schema_version": SCHEMA_VERSION,
            "command": "qq",
            "variance": variance,
            "empirical_variance": emp_var,
            "slope": qq.slope,
            "intercept": qq.intercept,
            "ks": ks_statistic(&residual, variance)?,
            "ampr_converged": state.converged,
        }),
    )?;

    if k > 0 {
        let boot = bootstrap_mean(&inst, &state, k, model.instance_seed, &opts)?;
        let (mean, converged) = (boot.r_hat, boot.converged);
        let r_hat = &state.h / state.qhat;
        let fit = linear_fit(
            mean.as_slice().expect("contiguous"),
            r_hat.as_slice().expect("contiguous"),
        )?;
        write_csv(
            out,
            "scatter.csv",
            &["r_hat", "mean_r_gamp"],
            r_hat.iter().zip(mean.iter()).map(|(&a, &b)| num_row(&[a, b])),
        )?;
        write_json(
            out,
            "scatter.json",
            &json!({
                "schema_version": SCHEMA_VERSION,
                "command": "qq",
                "k": k,
                "gamp_converged": converged,
                "slope": fit.slope,
                "intercept": fit.intercept,
            }),
        )?;
    }
    Ok(())
}

fn record_json(r: &SweepRecord) -> Value {
    json!({
        "rho": r.rho,
        "alpha": r.alpha,
        "mu_b_star": f64_or_inf_json(r.mu_b_star),
        "lambda_star": r.lambda_star,
        "gamma_star": r.gamma_star,
        "sigma2_star": r.sigma2_star,
        "s2_star": r.s2_star,
        "ratio": r.ratio,
        "unique_frac": r.unique_frac,
        "phase_label": r.phase_label.to_string(),
        "converged": r.converged,
    })
}

fn cmd_optimize(cfg: &Config, out: &Path) -> Result<()> {
    let alpha: f64 = cfg.require("alpha")?;
    let delta: f64 = cfg.require("delta")?;
    let rho: f64 = cfg.require("rho")?;
    let prior = SignalPrior::new(rho)?;
    let (domain, opts) = hyperopt_options(cfg)?;
    let cell = minimize_variance(alpha, delta, prior, &domain, &opts)?;
    let rec = SweepRecord::from_cell(rho, alpha, &cell);
    let mut v = record_json(&rec);
    v["schema_version"] = json!(SCHEMA_VERSION);
    v["command"] = json!("optimize");
    v["delta"] = json!(delta);
    write_json(out, "optimum.json", &v)
}

pub const SWEEP_HEADER: [&str; 11] = [
    "rho",
    "alpha",
    "mu_b_star",
    "lambda_star",
    "gamma_star",
    "sigma2_star",
    "s2_star",
    "ratio",
    "unique_frac",
    "phase_label",
    "converged",
];

fn cmd_sweep(cfg: &Config, out: &Path) -> Result<()> {
    let rho_grid = cfg.grid("rho_grid")?;
    let alpha_grid = cfg.grid("alpha_grid")?;
    let delta: f64 = cfg.require("delta")?;
    let (domain, opts) = hyperopt_options(cfg)?;
    let records = sweep_phase_diagram(&rho_grid, &alpha_grid, delta, &domain, &opts)?;
    for r in records.iter().filter_map(|r| r.error.as_ref().map(|e| (r, e))) {
        eprintln!("cell rho={} alpha={} failed: {}", r.0.rho, r.0.alpha, r.1);
    }
    let rows = records.iter().map(|r| {
        let mut row = num_row(&[
            r.rho,
            r.alpha,
            r.mu_b_star,
            r.lambda_star,
            r.gamma_star,
            r.sigma2_star,
            r.s2_star,
            r.ratio,
            r.unique_frac,
        ]);
        row.push(r.phase_label.to_string());
        row.push(r.converged.to_string());
        row
    });
    write_csv(out, "sweep.csv", &SWEEP_HEADER, rows)
}

fn diverged_json(iteration: usize, last: &LastState) -> Value {
    let state = match last {
        LastState::Ampr(s) => {
            json!({"solver": "ampr", "qhat": s.qhat, "vhat": s.vhat, "chi": s.chi, "v": s.v})
        }
        LastState::Gamp(s) => json!({"solver": "gamp", "qhat": s.qhat, "chi": s.chi}),
        LastState::Se(s) => {
            json!({"solver": "se", "E": s.mse, "chi": s.chi, "v": s.v, "qhat": s.qhat, "vhat": s.vhat})
        }
    };
    json!({"schema_version": SCHEMA_VERSION, "error": "diverged", "iteration": iteration, "last_state": state})
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Diverged { .. } | Error::InfeasibleDomain(_) => EXIT_DIVERGED,
        Error::InvalidArgument(_) | Error::Config(_) => EXIT_USAGE,
        _ => 1,
    }
}

/// Execute a parsed command line with the given environment.
pub fn run(cli: Cli, env: impl IntoIterator<Item = (String, String)>) -> Result<()> {
    let (Command::RunAmpr(o)
    | Command::RunGamp(o)
    | Command::RunSe(o)
    | Command::Qq(o)
    | Command::Optimize(o)
    | Command::Sweep(o)) = &cli.command;
    let mut cfg = Config::load(cli.config.as_deref(), env, &o.set)?;
    if let Some(seed) = cli.seed {
        cfg.set("seed", seed)?;
    }
    if let Some(t) = cli.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    fs::create_dir_all(&cli.out)?;
    let out = cli.out.as_path();
    let result = match &cli.command {
        Command::RunAmpr(_) => cmd_run_ampr(&cfg, out),
        Command::RunGamp(_) => cmd_run_gamp(&cfg, out),
        Command::RunSe(_) => cmd_run_se(&cfg, out),
        Command::Qq(_) => cmd_qq(&cfg, out),
        Command::Optimize(_) => cmd_optimize(&cfg, out),
        Command::Sweep(_) => cmd_sweep(&cfg, out),
    };
    if let Err(Error::Diverged { iteration, last }) = &result {
        write_json(out, "diverged.json", &diverged_json(*iteration, last))?;
    }
    result
}

/// Binary entry point.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli, std::env::vars()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
