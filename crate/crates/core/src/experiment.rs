//! Monte Carlo comparison of loading estimators.
//!
//! Every replication draws one dataset per `(T, lambda)` point and runs every
//! requested method on it, for every lag count, so methods are compared on
//! identical data. Methods that share an initializer also share the initial
//! estimate itself. Replications run in parallel; records are sorted afterwards,
//! so the output does not depend on scheduling.
//!
//! # Config file
//!
//! Plain `key = value` lines; `#` starts a comment; lists are comma-separated.
//!
//! | key                 | meaning                                            | default            |
//! |---------------------|----------------------------------------------------|--------------------|
//! | `setting`           | `I`, `II` or `III`; fills dims, ranks and phis     | none               |
//! | `dims`, `ranks`     | tensor dimensions and factor ranks                 | from `setting`     |
//! | `phis`              | AR(1) coefficient(s), one or one per factor entry  | from `setting`     |
//! | `lambda`            | list of signal strengths                           | required           |
//! | `rho`               | noise equicorrelation, one or one per mode         | `0.2`              |
//! | `noise_scale`       | noise standard deviation                           | `1`                |
//! | `T`                 | list of series lengths                             | required           |
//! | `h0`                | list of lag counts                                 | `1`                |
//! | `methods`           | list of method names (`iTOPUP`, `TIPUP-1TOPUP`...) | required           |
//! | `nrep`              | replications                                       | `100`              |
//! | `seed`              | master seed                                        | `0`                |
//! | `epsilon`           | convergence tolerance of iterated methods          | `1e-4`             |
//! | `max_iter`          | sweep cap of iterated methods                      | `max(10, ln d)`    |
//! | `burn_in`           | AR warm-up steps                                   | `200`              |
//! | `record_trajectory` | emit `sweep1` rows for iterative methods           | `true`             |
//! | `timing`            | fill `wall_time_ms`; otherwise it is written as 0  | `false`            |

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::iterative::{default_max_iter, initialize, run_from_init, LoadingSet, Method, DEFAULT_EPSILON};
use crate::moments::{Flavor, Normalization};
use crate::simulate::{generate_replication, preset, ModelSpec, Setting, DEFAULT_BURN_IN, DEFAULT_RHO};

/// Floor applied to losses before taking logs.
pub const LOG_FLOOR: f64 = 1e-16;

pub const RECORD_HEADER: &str =
    "rep,setting,T,lambda,h0,method,mode,stage,loss,iters,lambda_hat_sq,lambda_star_hat_sq,wall_time_ms";

pub const SUMMARY_HEADER: &str =
    "setting,T,lambda,h0,method,mode,stage,n,median_log_loss,q1_log_loss,q3_log_loss,median_iters";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub setting: Option<Setting>,
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    pub phis: Vec<f64>,
    pub rho: Vec<f64>,
    pub noise_scale: f64,
    pub burn_in: usize,
    pub t_list: Vec<usize>,
    pub lambda_list: Vec<f64>,
    pub h0_list: Vec<usize>,
    pub methods: Vec<String>,
    pub nrep: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub max_iter: Option<usize>,
    pub record_trajectory: bool,
    pub timing: bool,
}

impl ExperimentConfig {
    /// A config for one of the study settings; lists still need filling in.
    pub fn for_setting(setting: Setting) -> Self {
        let spec = preset(setting, 1.0, 0);
        Self {
            setting: Some(setting),
            dims: spec.dims,
            ranks: spec.ranks,
            phis: spec.ar_coeffs,
            rho: vec![DEFAULT_RHO],
            noise_scale: 1.0,
            burn_in: DEFAULT_BURN_IN,
            t_list: Vec::new(),
            lambda_list: Vec::new(),
            h0_list: vec![1],
            methods: Vec::new(),
            nrep: 100,
            seed: 0,
            epsilon: DEFAULT_EPSILON,
            max_iter: None,
            record_trajectory: true,
            timing: false,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            entries.push((key.trim().to_string(), value.trim().to_string()));
        }

        let setting = entries
            .iter()
            .find(|(k, _)| k == "setting")
            .map(|(_, v)| v.parse::<Setting>())
            .transpose()?;
        let mut cfg = match setting {
            Some(s) => Self::for_setting(s),
            None => Self {
                setting: None,
                dims: Vec::new(),
                ranks: Vec::new(),
                phis: Vec::new(),
                ..Self::for_setting(Setting::I)
            },
        };

        for (key, value) in &entries {
            match key.as_str() {
                "setting" => {}
                "dims" => cfg.dims = parse_list(key, value)?,
                "ranks" => cfg.ranks = parse_list(key, value)?,
                "phis" => cfg.phis = parse_list(key, value)?,
                "rho" => cfg.rho = parse_list(key, value)?,
                "noise_scale" => cfg.noise_scale = parse_one(key, value)?,
                "burn_in" => cfg.burn_in = parse_one(key, value)?,
                "T" => cfg.t_list = parse_list(key, value)?,
                "lambda" => cfg.lambda_list = parse_list(key, value)?,
                "h0" => cfg.h0_list = parse_list(key, value)?,
                "methods" => {
                    cfg.methods = value
                        .split(',')
                        .map(|m| m.trim().to_string())
                        .filter(|m| !m.is_empty())
                        .collect()
                }
                "nrep" => cfg.nrep = parse_one(key, value)?,
                "seed" => cfg.seed = parse_one(key, value)?,
                "epsilon" => cfg.epsilon = parse_one(key, value)?,
                "max_iter" => cfg.max_iter = Some(parse_one(key, value)?),
                "record_trajectory" => cfg.record_trajectory = parse_one(key, value)?,
                "timing" => cfg.timing = parse_one(key, value)?,
                other => return Err(Error::Config(format!("unknown config key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nrep == 0 {
            return Err(Error::Config("nrep must be at least 1".into()));
        }
        for (name, empty) in [
            ("T", self.t_list.is_empty()),
            ("lambda", self.lambda_list.is_empty()),
            ("h0", self.h0_list.is_empty()),
            ("methods", self.methods.is_empty()),
        ] {
            if empty {
                return Err(Error::Config(format!("`{name}` must list at least one value")));
            }
        }
        for m in &self.methods {
            Method::parse(m)?;
        }
        if let Some(&t) = self.t_list.iter().find(|&&t| t < 2) {
            return Err(Error::Config(format!("series length {t} < 2")));
        }
        for &t in &self.t_list {
            if let Some(&h) = self.h0_list.iter().find(|&&h| h == 0 || h >= t) {
                return Err(Error::Config(format!("h0 = {h} invalid for T = {t}")));
            }
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config("epsilon must be nonnegative".into()));
        }
        for &lambda in &self.lambda_list {
            self.model_spec(lambda)?;
        }
        Ok(())
    }

    pub fn model_spec(&self, lambda: f64) -> Result<ModelSpec> {
        let mut spec = ModelSpec::new(
            self.dims.clone(),
            self.ranks.clone(),
            lambda,
            self.phis.clone(),
            self.seed,
        )?;
        spec.noise_rho = if self.rho.len() == 1 {
            vec![self.rho[0]; self.dims.len()]
        } else {
            self.rho.clone()
        };
        spec.noise_scale = self.noise_scale;
        spec.burn_in = self.burn_in;
        spec.validate()?;
        Ok(spec)
    }

    pub fn setting_label(&self) -> String {
        self.setting.map_or_else(|| "custom".to_string(), |s| s.to_string())
    }

    fn sweep_cap(&self) -> usize {
        self.max_iter.unwrap_or_else(|| default_max_iter(&self.dims))
    }
}

fn parse_one<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    value.split(',').map(|v| parse_one(key, v)).collect()
}

/// Which point of an estimation run a loss refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Init,
    Sweep1,
    Final,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Init => "init",
            Stage::Sweep1 => "sweep1",
            Stage::Final => "final",
        })
    }
}

/// One loss observation: replication, design point, method, mode and stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub rep: usize,
    pub setting: String,
    pub t_len: usize,
    pub lambda: f64,
    pub h0: usize,
    pub method: String,
    /// One-based mode index.
    pub mode: usize,
    pub stage: Stage,
    pub loss: f64,
    pub iters: usize,
    pub lambda_hat_sq: f64,
    pub lambda_star_hat_sq: f64,
    pub wall_time_ms: f64,
}

impl RunRecord {
    /// Whether this row holds the method's final estimate (the `init` row for
    /// non-iterative methods).
    pub fn is_terminal(&self) -> bool {
        match self.stage {
            Stage::Final => true,
            Stage::Sweep1 => false,
            Stage::Init => Method::parse(&self.method).is_ok_and(|m| !m.is_iterative()),
        }
    }

    fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.rep,
            self.setting,
            self.t_len,
            self.lambda,
            self.h0,
            self.method,
            self.mode,
            self.stage,
            self.loss,
            self.iters,
            self.lambda_hat_sq,
            self.lambda_star_hat_sq,
            self.wall_time_ms
        )
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

struct Job {
    point: usize,
    t_len: usize,
    lambda: f64,
    rep: usize,
}

/// Runs the full design and returns its records in canonical order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    let methods = cfg
        .methods
        .iter()
        .map(|m| Method::parse(m))
        .collect::<Result<Vec<_>>>()?;
    let label = cfg.setting_label();
    let cap = cfg.sweep_cap();

    let mut jobs = Vec::new();
    for &t_len in &cfg.t_list {
        for &lambda in &cfg.lambda_list {
            let point = jobs.len() / cfg.nrep;
            jobs.extend((0..cfg.nrep).map(|rep| Job { point, t_len, lambda, rep }));
        }
    }

    let run_job = |job: &Job| -> Result<Vec<(usize, usize, usize, RunRecord)>> {
        let spec = cfg.model_spec(job.lambda)?;
        let truth = generate_replication(&spec, job.t_len, job.rep as u64)?;
        let series = &truth.observed_series;
        let mut out = Vec::new();
        for (hi, &h0) in cfg.h0_list.iter().enumerate() {
            let mut inits: HashMap<Flavor, (LoadingSet, f64)> = HashMap::new();
            for (mi, method) in methods.iter().enumerate() {
                let mut mcfg = method.config(cfg.ranks.clone(), h0, cfg.epsilon, cap);
                mcfg.record_trajectory = true;
                let (init, init_ms) = match inits.get(&method.uinit) {
                    Some(cached) => cached.clone(),
                    None => {
                        let start = Instant::now();
                        let init = initialize(series, &mcfg)?;
                        let entry = (init, elapsed_ms(start));
                        inits.insert(method.uinit, entry.clone());
                        entry
                    }
                };
                let start = Instant::now();
                let result = run_from_init(series, &mcfg, init)?;
                let wall = if cfg.timing { init_ms + elapsed_ms(start) } else { 0.0 };
                let snapshots = result.snapshots.as_ref().expect("trajectory was requested");

                let mut stages = vec![(Stage::Init, &snapshots[0])];
                if method.is_iterative() {
                    if let (true, Some(first)) = (cfg.record_trajectory, snapshots.get(1)) {
                        stages.push((Stage::Sweep1, first));
                    }
                    stages.push((Stage::Final, &result.loadings));
                }
                for (stage, bases) in stages {
                    let losses = bases.distances(&truth.loadings)?;
                    for (k, loss) in losses.into_iter().enumerate() {
                        let rec = RunRecord {
                            rep: job.rep,
                            setting: label.clone(),
                            t_len: job.t_len,
                            lambda: job.lambda,
                            h0,
                            method: cfg.methods[mi].clone(),
                            mode: k + 1,
                            stage,
                            loss,
                            iters: result.iterations_used,
                            lambda_hat_sq: result.diagnostics.lambda_sq[k],
                            lambda_star_hat_sq: result.diagnostics.lambda_star_sq[k],
                            wall_time_ms: wall,
                        };
                        out.push((job.point, hi, mi, rec));
                    }
                }
            }
        }
        Ok(out)
    };

    let mut keyed: Vec<(usize, usize, usize, RunRecord)> = jobs
        .par_iter()
        .map(run_job)
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    keyed.sort_by(|a, b| {
        (a.0, a.1, a.3.rep, a.2, a.3.mode, a.3.stage).cmp(&(b.0, b.1, b.3.rep, b.2, b.3.mode, b.3.stage))
    });
    Ok(keyed.into_iter().map(|(_, _, _, r)| r).collect())
}

/// Medians over `nrep` replications of the estimated signal strengths per mode.
///
/// `lambda_sq` comes from iTOPUP fits and `lambda_star_sq` from iTIPUP fits, each
/// measured on the series projected onto the fitted bases of the other modes.
pub fn estimated_signal(
    spec: &ModelSpec,
    t_len: usize,
    h0: usize,
    nrep: usize,
    normalization: Normalization,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if nrep == 0 {
        return Err(Error::Config("nrep must be at least 1".into()));
    }
    let cap = default_max_iter(&spec.dims);
    let fit = |name: &str, series: &crate::tensor::TensorSeries| -> Result<crate::moments::SignalDiagnostics> {
        let mut cfg = Method::parse(name)?.config(spec.ranks.clone(), h0, DEFAULT_EPSILON, cap);
        cfg.record_trajectory = false;
        cfg.normalization = normalization;
        Ok(crate::iterative::run(series, &cfg)?.diagnostics)
    };
    let per_rep = (0..nrep)
        .into_par_iter()
        .map(|rep| {
            let truth = generate_replication(spec, t_len, rep as u64)?;
            let top = fit("iTOPUP", &truth.observed_series)?;
            let tip = fit("iTIPUP", &truth.observed_series)?;
            Ok((top.lambda_sq, tip.lambda_star_sq))
        })
        .collect::<Result<Vec<_>>>()?;
    let modes = spec.dims.len();
    let column = |pick: &dyn Fn(&(Vec<f64>, Vec<f64>)) -> f64| -> f64 {
        median(&per_rep.iter().map(pick).collect::<Vec<_>>())
    };
    Ok((
        (0..modes).map(|k| column(&|r| r.0[k])).collect(),
        (0..modes).map(|k| column(&|r| r.1[k])).collect(),
    ))
}

pub fn write_records_csv(out: &mut impl Write, records: &[RunRecord]) -> Result<()> {
    writeln!(out, "{RECORD_HEADER}")?;
    for r in records {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

/// Linear-interpolation quantile of sorted data (the default of R and NumPy).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// Natural log of a loss, floored at [`LOG_FLOOR`].
pub fn log_loss(loss: f64) -> f64 {
    loss.max(LOG_FLOOR).ln()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub setting: String,
    pub t_len: usize,
    pub lambda: f64,
    pub h0: usize,
    pub method: String,
    pub mode: usize,
    pub stage: Stage,
    pub n: usize,
    pub median_log_loss: f64,
    pub q1_log_loss: f64,
    pub q3_log_loss: f64,
    pub median_iters: f64,
}

/// Median and quartiles of the log-loss per (point, method, mode, stage) cell,
/// in order of first appearance.
pub fn summarize(records: &[RunRecord]) -> Result<Vec<SummaryRow>> {
    if records.is_empty() {
        return Err(Error::Config("cannot summarize an empty record set".into()));
    }
    type Key = (String, usize, u64, usize, String, usize, Stage);
    let mut order: Vec<Key> = Vec::new();
    let mut cells: HashMap<Key, (Vec<f64>, Vec<f64>)> = HashMap::new();
    for r in records {
        let key = (
            r.setting.clone(),
            r.t_len,
            r.lambda.to_bits(),
            r.h0,
            r.method.clone(),
            r.mode,
            r.stage,
        );
        let cell = cells.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            (Vec::new(), Vec::new())
        });
        cell.0.push(log_loss(r.loss));
        cell.1.push(r.iters as f64);
    }
    Ok(order
        .into_iter()
        .map(|key| {
            let (mut logs, iters) = cells.remove(&key).expect("every key has a cell");
            logs.sort_by(f64::total_cmp);
            let (setting, t_len, lambda, h0, method, mode, stage) = key;
            SummaryRow {
                setting,
                t_len,
                lambda: f64::from_bits(lambda),
                h0,
                method,
                mode,
                stage,
                n: logs.len(),
                median_log_loss: quantile_sorted(&logs, 0.5),
                q1_log_loss: quantile_sorted(&logs, 0.25),
                q3_log_loss: quantile_sorted(&logs, 0.75),
                median_iters: median(&iters),
            }
        })
        .collect())
}

pub fn write_summary_csv(out: &mut impl Write, rows: &[SummaryRow]) -> Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.setting,
            r.t_len,
            r.lambda,
            r.h0,
            r.method,
            r.mode,
            r.stage,
            r.n,
            r.median_log_loss,
            r.q1_log_loss,
            r.q3_log_loss,
            r.median_iters
        )?;
    }
    Ok(())
}
