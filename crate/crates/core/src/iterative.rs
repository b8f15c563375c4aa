//! Iterative projection estimation of all loading spaces.
//!
//! Initialization applies the `uinit` operator to the raw series for every mode.
//! Sweep `j` then visits modes in ascending order; mode `k` is re-estimated by
//! applying `uiter` to
//!
//! ```text
//! Z_t = X_t x_1 U_1^(j)T ... x_{k-1} U_{k-1}^(j)T x_{k+1} U_{k+1}^(j-1)T ... x_K U_K^(j-1)T
//! ```
//!
//! so already-updated modes enter with their current-sweep bases. Sweeping stops
//! after `max_iter` sweeps or once no basis moved by more than `epsilon` in
//! subspace distance. Hitting the sweep cap is reported, not raised.

use std::fmt;
use std::ops::Index;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::moments::{
    estimate_loading, mode_signal, Flavor, MomentConfig, Normalization, SignalDiagnostics,
};
use crate::spectral::{subspace_distance, OrthoBasis};
use crate::tensor::TensorSeries;

pub const DEFAULT_EPSILON: f64 = 1e-4;

/// One orthonormal basis per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingSet(Vec<OrthoBasis>);

impl LoadingSet {
    pub fn new(bases: Vec<OrthoBasis>) -> Self {
        Self(bases)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bases(&self) -> &[OrthoBasis] {
        &self.0
    }

    pub fn into_bases(self) -> Vec<OrthoBasis> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, OrthoBasis> {
        self.0.iter()
    }

    /// Per-mode subspace distances to `other`.
    pub fn distances(&self, other: &LoadingSet) -> Result<Vec<f64>> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} vs {} modes",
                self.len(),
                other.len()
            )));
        }
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| subspace_distance(a, b))
            .collect()
    }
}

impl Index<usize> for LoadingSet {
    type Output = OrthoBasis;

    fn index(&self, k: usize) -> &OrthoBasis {
        &self.0[k]
    }
}

/// Default sweep cap `max(10, ceil(ln d))` for a total dimension `d`.
pub fn default_max_iter(dims: &[usize]) -> usize {
    let d: f64 = dims.iter().map(|&v| v as f64).product();
    10.max(d.ln().ceil() as usize)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterConfig {
    pub ranks: Vec<usize>,
    pub h0_init: usize,
    pub h0_iter: usize,
    pub uinit: Flavor,
    pub uiter: Flavor,
    /// Stop once every basis moved by at most this much in one sweep.
    pub epsilon: f64,
    /// Number of sweeps `J`; zero means initialization only.
    pub max_iter: usize,
    pub record_trajectory: bool,
    pub normalization: Normalization,
}

impl IterConfig {
    /// iTOPUP-style defaults for the given ranks and series shape.
    pub fn new(ranks: Vec<usize>, dims: &[usize]) -> Self {
        Self {
            ranks,
            h0_init: 1,
            h0_iter: 1,
            uinit: Flavor::Topup,
            uiter: Flavor::Topup,
            epsilon: DEFAULT_EPSILON,
            max_iter: default_max_iter(dims),
            record_trajectory: false,
            normalization: Normalization::default(),
        }
    }

    pub fn validate(&self, series: &TensorSeries) -> Result<()> {
        let shape = series.shape();
        if self.ranks.len() != shape.len() {
            return Err(Error::Config(format!(
                "{} ranks given for an order-{} series",
                self.ranks.len(),
                shape.len()
            )));
        }
        for (k, (&r, &d)) in self.ranks.iter().zip(shape).enumerate() {
            if r == 0 || r > d {
                return Err(Error::Config(format!(
                    "rank {r} for mode {k} must lie in 1..={d}"
                )));
            }
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::Config(format!(
                "tolerance must be nonnegative, got {}",
                self.epsilon
            )));
        }
        MomentConfig::new(self.uinit, self.h0_init).validate(series.len())?;
        MomentConfig::new(self.uiter, self.h0_iter).validate(series.len())?;
        // diagnostics always use the iteration lag
        MomentConfig::new(Flavor::Topup, self.h0_iter).validate(series.len())
    }
}

/// How many sweeps a named method performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Schedule {
    /// Initial estimate only.
    InitOnly,
    /// Exactly one sweep.
    OneStep,
    /// Sweep until the tolerance is met or the cap is reached.
    Iterate,
}

/// A named combination of initializer, iterator and sweep schedule,
/// e.g. `iTOPUP`, `1TIPUP` or `TIPUP-iTOPUP`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Method {
    pub uinit: Flavor,
    pub uiter: Flavor,
    pub schedule: Schedule,
}

impl Method {
    pub fn parse(name: &str) -> Result<Self> {
        let unknown = || Error::UnknownPreset(name.to_string());
        let (init, rest) = match name.split_once('-') {
            Some((init, rest)) => (Some(init.parse::<Flavor>().map_err(|_| unknown())?), rest),
            None => (None, name),
        };
        let (schedule, flavor) = if let Some(f) = rest.strip_prefix('1') {
            (Schedule::OneStep, f)
        } else if let Some(f) = rest.strip_prefix('i') {
            (Schedule::Iterate, f)
        } else {
            (Schedule::InitOnly, rest)
        };
        let uiter = flavor.parse::<Flavor>().map_err(|_| unknown())?;
        if init.is_some() && schedule == Schedule::InitOnly {
            return Err(unknown());
        }
        Ok(Self {
            uinit: init.unwrap_or(uiter),
            uiter,
            schedule,
        })
    }

    pub fn is_iterative(&self) -> bool {
        self.schedule != Schedule::InitOnly
    }

    /// Full configuration for this method; `epsilon` and `max_iter` only apply to `Iterate`.
    pub fn config(&self, ranks: Vec<usize>, h0: usize, epsilon: f64, max_iter: usize) -> IterConfig {
        let (epsilon, max_iter) = match self.schedule {
            Schedule::InitOnly => (0.0, 0),
            Schedule::OneStep => (0.0, 1),
            Schedule::Iterate => (epsilon, max_iter),
        };
        IterConfig {
            ranks,
            h0_init: h0,
            h0_iter: h0,
            uinit: self.uinit,
            uiter: self.uiter,
            epsilon,
            max_iter,
            record_trajectory: true,
            normalization: Normalization::default(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let marker = match self.schedule {
            Schedule::InitOnly => "",
            Schedule::OneStep => "1",
            Schedule::Iterate => "i",
        };
        if self.uinit != self.uiter {
            write!(f, "{}-", self.uinit)?;
        }
        write!(f, "{marker}{}", self.uiter)
    }
}

/// Looks up a method by name (`UP`, `1TOPUP`, `iTIPUP`, `TIPUP-iTOPUP`, ...).
pub fn method_preset(name: &str) -> Result<Method> {
    Method::parse(name)
}

/// The thirteen methods compared in the simulation study.
pub const METHOD_NAMES: [&str; 13] = [
    "UP",
    "1UP",
    "iUP",
    "TIPUP",
    "1TIPUP",
    "iTIPUP",
    "TOPUP",
    "1TOPUP",
    "iTOPUP",
    "TIPUP-1TOPUP",
    "TIPUP-iTOPUP",
    "TOPUP-1TIPUP",
    "TOPUP-iTIPUP",
];

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub loadings: LoadingSet,
    pub projectors: Vec<DMatrix<f64>>,
    /// `F_t = X_t x_1 U_1^T ... x_K U_K^T`.
    pub factors: TensorSeries,
    /// `E_t = X_t - X_t x_1 P_1 ... x_K P_K`.
    pub residuals: TensorSeries,
    pub iterations_used: usize,
    pub converged: bool,
    /// Per sweep, per mode: distance of the new basis to the previous one.
    pub trajectory: Option<Vec<Vec<f64>>>,
    /// Bases after initialization (index 0) and after every sweep.
    pub snapshots: Option<Vec<LoadingSet>>,
    /// Signal strengths of each mode's series projected on the final bases of the other modes.
    pub diagnostics: SignalDiagnostics,
}

/// Projects every `X_t` onto the given bases on all modes except `skip`.
pub fn project_series(
    series: &TensorSeries,
    loadings: &[Option<&OrthoBasis>],
    skip: usize,
) -> Result<TensorSeries> {
    series.check_mode(skip)?;
    if loadings.len() != series.order() {
        return Err(Error::DimensionMismatch(format!(
            "{} loadings for an order-{} series",
            loadings.len(),
            series.order()
        )));
    }
    let mut transposed = Vec::with_capacity(series.order());
    for (j, basis) in loadings.iter().enumerate() {
        if j == skip {
            continue;
        }
        let basis = basis.ok_or_else(|| {
            Error::Config(format!("missing loading basis for mode {j}"))
        })?;
        if basis.dim() != series.shape()[j] {
            return Err(Error::DimensionMismatch(format!(
                "basis for mode {j} has {} rows, series has d_{j} = {}",
                basis.dim(),
                series.shape()[j]
            )));
        }
        transposed.push((j, basis.matrix().transpose()));
    }
    series.try_map(|x| x.multi_mode_product(transposed.iter().map(|(j, m)| (*j, m))))
}

fn project_except(series: &TensorSeries, bases: &[OrthoBasis], skip: usize) -> Result<TensorSeries> {
    let refs: Vec<Option<&OrthoBasis>> = bases.iter().map(Some).collect();
    project_series(series, &refs, skip)
}

/// Initial estimates `U_k^(0) = UINIT_k(X, r_k)` for every mode.
pub fn initialize(series: &TensorSeries, cfg: &IterConfig) -> Result<LoadingSet> {
    cfg.validate(series)?;
    let moment = MomentConfig::new(cfg.uinit, cfg.h0_init);
    let bases = (0..series.order())
        .map(|k| estimate_loading(series, k, cfg.ranks[k], moment))
        .collect::<Result<Vec<_>>>()?;
    Ok(LoadingSet::new(bases))
}

/// Runs the full iterative procedure.
pub fn run(series: &TensorSeries, cfg: &IterConfig) -> Result<EstimationResult> {
    let init = initialize(series, cfg)?;
    run_from_init(series, cfg, init)
}

/// Continues from precomputed initial bases, e.g. to share one initialization
/// between methods that differ only in their sweeps.
pub fn run_from_init(
    series: &TensorSeries,
    cfg: &IterConfig,
    init: LoadingSet,
) -> Result<EstimationResult> {
    cfg.validate(series)?;
    if init.len() != series.order()
        || init
            .iter()
            .enumerate()
            .any(|(k, b)| b.dim() != series.shape()[k] || b.rank() != cfg.ranks[k])
    {
        return Err(Error::DimensionMismatch(
            "initial bases do not match the series shape and ranks".into(),
        ));
    }
    let moment = MomentConfig::new(cfg.uiter, cfg.h0_iter);
    let mut bases = init.into_bases();
    let mut snapshots = cfg.record_trajectory.then(|| vec![LoadingSet::new(bases.clone())]);
    let mut trajectory = cfg.record_trajectory.then(Vec::new);
    let mut iterations_used = 0;
    let mut converged = cfg.max_iter == 0;

    for sweep in 1..=cfg.max_iter {
        let mut moves = Vec::with_capacity(bases.len());
        for k in 0..bases.len() {
            let z = project_except(series, &bases, k)?;
            let updated = estimate_loading(&z, k, cfg.ranks[k], moment)?;
            moves.push(subspace_distance(&updated, &bases[k])?);
            bases[k] = updated;
        }
        iterations_used = sweep;
        let max_move = moves.iter().copied().fold(0.0, f64::max);
        if let Some(t) = trajectory.as_mut() {
            t.push(moves);
        }
        if let Some(s) = snapshots.as_mut() {
            s.push(LoadingSet::new(bases.clone()));
        }
        if max_move <= cfg.epsilon {
            converged = true;
            break;
        }
    }

    finish(series, cfg, bases, iterations_used, converged, trajectory, snapshots)
}

fn finish(
    series: &TensorSeries,
    cfg: &IterConfig,
    bases: Vec<OrthoBasis>,
    iterations_used: usize,
    converged: bool,
    trajectory: Option<Vec<Vec<f64>>>,
    snapshots: Option<Vec<LoadingSet>>,
) -> Result<EstimationResult> {
    let projectors: Vec<DMatrix<f64>> = bases.iter().map(OrthoBasis::projector).collect();
    let transposed: Vec<DMatrix<f64>> = bases.iter().map(|b| b.matrix().transpose()).collect();
    let factors = series.try_map(|x| x.multi_mode_product(transposed.iter().enumerate()))?;
    let residuals = series.try_map(|x| {
        let fitted = x.multi_mode_product(projectors.iter().enumerate())?;
        x.sub(&fitted)
    })?;

    let order = series.order();
    let mut diagnostics = SignalDiagnostics {
        lambda_sq: Vec::with_capacity(order),
        lambda_star_sq: Vec::with_capacity(order),
        topup_spectrum: Vec::with_capacity(order),
        tipup_spectrum: Vec::with_capacity(order),
        h0: cfg.h0_iter,
        normalization: cfg.normalization,
    };
    for k in 0..order {
        let z = project_except(series, &bases, k)?;
        let (lam, lam_star, top, tip) =
            mode_signal(&z, k, cfg.ranks[k], cfg.h0_iter, cfg.normalization)?;
        diagnostics.lambda_sq.push(lam);
        diagnostics.lambda_star_sq.push(lam_star);
        diagnostics.topup_spectrum.push(top);
        diagnostics.tipup_spectrum.push(tip);
    }

    Ok(EstimationResult {
        loadings: LoadingSet::new(bases),
        projectors,
        factors,
        residuals,
        iterations_used,
        converged,
        trajectory,
        snapshots,
        diagnostics,
    })
}
