//! Lagged moment operators mapping a tensor series to a mode-k loading estimate.
//!
//! * TOPUP stacks the lagged outer-product moments
//!   `sum_t mat_k(X_{t-h}) (x) mat_k(X_t) / (T - h)` for `h = 1..h0` and takes the
//!   left singular vectors of the mode-1 unfolding of that order-5 tensor.
//! * TIPUP replaces the outer product by the inner product over the non-k modes,
//!   giving the `d_k x (d_k h0)` matrix of blocks `sum_t mat_k(X_{t-h}) mat_k(X_t)^T / (T - h)`.
//! * UP ignores the time structure and takes the SVD of the mode-k unfolding of
//!   the time-stacked series.
//!
//! The lag-0 term never enters: it carries the contemporaneous noise covariance.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spectral::{gram_lsvd_with_spectrum, lsvd_with_spectrum, OrthoBasis};
use crate::tensor::TensorSeries;

/// Leading singular values below this make a moment matrix degenerate.
pub const DEGENERATE_SIGMA: f64 = 1e-14;

/// Which moment operator a loading estimate is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Flavor {
    Topup,
    Tipup,
    Up,
}

impl fmt::Display for Flavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Flavor::Topup => "TOPUP",
            Flavor::Tipup => "TIPUP",
            Flavor::Up => "UP",
        })
    }
}

impl FromStr for Flavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TOPUP" => Ok(Flavor::Topup),
            "TIPUP" => Ok(Flavor::Tipup),
            "UP" => Ok(Flavor::Up),
            _ => Err(Error::Config(format!("unknown moment flavor `{s}`"))),
        }
    }
}

/// How a singular value `tau` of a stacked moment unfolding is turned into a
/// reported signal strength `lambda^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Normalization {
    /// `tau / sqrt(h0)`.
    PaperEq,
    /// `tau / h0`, the scale of the published population values.
    #[default]
    Figure,
}

impl Normalization {
    pub fn apply(self, tau: f64, h0: usize) -> f64 {
        match self {
            Normalization::PaperEq => tau / (h0 as f64).sqrt(),
            Normalization::Figure => tau / h0 as f64,
        }
    }
}

impl fmt::Display for Normalization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Normalization::PaperEq => "paper_eq",
            Normalization::Figure => "figure",
        })
    }
}

impl FromStr for Normalization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper_eq" => Ok(Normalization::PaperEq),
            "figure" => Ok(Normalization::Figure),
            _ => Err(Error::Config(format!("unknown normalization `{s}`"))),
        }
    }
}

/// Lag count and operator for a single loading estimate. `h0` is ignored by UP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MomentConfig {
    pub h0: usize,
    pub flavor: Flavor,
}

impl MomentConfig {
    pub fn new(flavor: Flavor, h0: usize) -> Self {
        Self { h0, flavor }
    }

    pub fn validate(&self, t_len: usize) -> Result<()> {
        if self.flavor != Flavor::Up {
            check_lag(self.h0, t_len)?;
        }
        Ok(())
    }
}

fn check_lag(h0: usize, t_len: usize) -> Result<()> {
    if h0 == 0 || h0 >= t_len {
        return Err(Error::Config(format!(
            "lag count h0 = {h0} must satisfy 1 <= h0 < T = {t_len}"
        )));
    }
    Ok(())
}

/// Empirical signal strengths per mode.
///
/// `lambda_sq[k]` is the normalized `r_k`-th singular value of the TOPUP unfolding,
/// `lambda_star_sq[k]` the same for the TIPUP matrix. The spectra hold every
/// singular value of the respective moment matrices, descending.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalDiagnostics {
    pub lambda_sq: Vec<f64>,
    pub lambda_star_sq: Vec<f64>,
    pub topup_spectrum: Vec<Vec<f64>>,
    pub tipup_spectrum: Vec<Vec<f64>>,
    pub h0: usize,
    pub normalization: Normalization,
}

/// `mat_1(TOPUP_k) mat_1(TOPUP_k)^T`, computed without the order-5 tensor:
///
/// ```text
/// sum_h (T-h)^-2 sum_{t,s>h} <X_t, X_s> mat_k(X_{t-h}) mat_k(X_{s-h})^T
/// ```
pub fn topup_gram(series: &TensorSeries, k: usize, h0: usize) -> Result<DMatrix<f64>> {
    series.check_mode(k)?;
    let t_len = series.len();
    check_lag(h0, t_len)?;
    let x = series.vec_matrix();
    let inner = x.transpose() * &x;
    topup_gram_from_parts(series.shape(), &x, &inner, k, h0)
}

/// Shares the `T x T` inner-product matrix between modes.
pub(crate) fn topup_gram_from_parts(
    shape: &[usize],
    x: &DMatrix<f64>,
    inner: &DMatrix<f64>,
    k: usize,
    h0: usize,
) -> Result<DMatrix<f64>> {
    let t_len = x.ncols();
    let dk = shape[k];
    let mut gram = DMatrix::zeros(dk, dk);
    for h in 1..=h0 {
        let n = t_len - h;
        let lagged = x.columns(0, n).into_owned();
        // column i: sum_s <X_{h+i}, X_s> X_{s-h}
        let weighted = &lagged * inner.view((h, h), (n, n));
        let a = TensorSeries::unfold_columns(shape, k, &lagged);
        let b = TensorSeries::unfold_columns(shape, k, &weighted);
        gram += (a * b.transpose()) / ((n * n) as f64);
    }
    let sym = (&gram + gram.transpose()) * 0.5;
    Ok(sym)
}

/// The `d_k x (d_k h0)` TIPUP matrix; block `h` is the lag-h inner-product moment.
pub fn tipup_matrix(series: &TensorSeries, k: usize, h0: usize) -> Result<DMatrix<f64>> {
    series.check_mode(k)?;
    let t_len = series.len();
    check_lag(h0, t_len)?;
    let dk = series.shape()[k];
    let mut out = DMatrix::zeros(dk, dk * h0);
    for h in 1..=h0 {
        let n = t_len - h;
        let early = series.unfold_stack(k, 0..n)?;
        let late = series.unfold_stack(k, h..t_len)?;
        let block = (early * late.transpose()) / n as f64;
        out.columns_mut((h - 1) * dk, dk).copy_from(&block);
    }
    Ok(out)
}

/// Mode-k unfolding of the order-(K+1) stack `(X_1, ..., X_T)`, time as the extra mode.
///
/// Columns are grouped by time point; the grouping does not change the left
/// singular space.
pub fn up_matrix(series: &TensorSeries, k: usize) -> Result<DMatrix<f64>> {
    series.check_mode(k)?;
    series.unfold_stack(k, 0..series.len())
}

/// Loading estimate plus the singular spectrum of the moment matrix it came from.
pub(crate) fn estimate_with_spectrum(
    series: &TensorSeries,
    k: usize,
    rank: usize,
    cfg: MomentConfig,
) -> Result<(OrthoBasis, Vec<f64>)> {
    series.check_mode(k)?;
    cfg.validate(series.len())?;
    let dk = series.shape()[k];
    if rank == 0 || rank > dk {
        return Err(Error::RankTooLarge { rank, max: dk });
    }
    let (basis, spectrum) = match cfg.flavor {
        Flavor::Topup => {
            let (basis, eig) = gram_lsvd_with_spectrum(&topup_gram(series, k, cfg.h0)?, rank)?;
            (basis, eig.iter().map(|v| v.max(0.0).sqrt()).collect::<Vec<_>>())
        }
        Flavor::Tipup => lsvd_with_spectrum(&tipup_matrix(series, k, cfg.h0)?, rank)?,
        Flavor::Up => lsvd_with_spectrum(&up_matrix(series, k)?, rank)?,
    };
    let lead = spectrum.first().copied().unwrap_or(0.0);
    if lead < DEGENERATE_SIGMA {
        return Err(Error::DegenerateMoment {
            mode: k,
            sigma: lead,
        });
    }
    Ok((basis, spectrum))
}

/// `UTOPUP_k`, `UTIPUP_k` or the UP estimate of the mode-k loading space.
pub fn estimate_loading(
    series: &TensorSeries,
    k: usize,
    rank: usize,
    cfg: MomentConfig,
) -> Result<OrthoBasis> {
    estimate_with_spectrum(series, k, rank, cfg).map(|(basis, _)| basis)
}

/// Per-mode signal strength for one mode: `(lambda^2, lambda*^2, topup spectrum, tipup spectrum)`.
pub(crate) fn mode_signal(
    series: &TensorSeries,
    k: usize,
    rank: usize,
    h0: usize,
    normalization: Normalization,
) -> Result<(f64, f64, Vec<f64>, Vec<f64>)> {
    let dk = series.shape()[k];
    if rank == 0 || rank > dk {
        return Err(Error::RankTooLarge { rank, max: dk });
    }
    let (_, eig) = gram_lsvd_with_spectrum(&topup_gram(series, k, h0)?, rank)?;
    let topup: Vec<f64> = eig.iter().map(|v| v.max(0.0).sqrt()).collect();
    let (_, tipup) = lsvd_with_spectrum(&tipup_matrix(series, k, h0)?, rank)?;
    Ok((
        normalization.apply(topup[rank - 1], h0),
        normalization.apply(tipup[rank - 1], h0),
        topup,
        tipup,
    ))
}

/// Sample analogues of the TOPUP and TIPUP signal strengths for every mode.
pub fn signal_strength(
    series: &TensorSeries,
    ranks: &[usize],
    h0: usize,
    normalization: Normalization,
) -> Result<SignalDiagnostics> {
    if ranks.len() != series.order() {
        return Err(Error::DimensionMismatch(format!(
            "{} ranks for an order-{} series",
            ranks.len(),
            series.order()
        )));
    }
    check_lag(h0, series.len())?;
    let mut diag = SignalDiagnostics {
        lambda_sq: Vec::with_capacity(ranks.len()),
        lambda_star_sq: Vec::with_capacity(ranks.len()),
        topup_spectrum: Vec::with_capacity(ranks.len()),
        tipup_spectrum: Vec::with_capacity(ranks.len()),
        h0,
        normalization,
    };
    for (k, &r) in ranks.iter().enumerate() {
        let (lam, lam_star, top, tip) = mode_signal(series, k, r, h0, normalization)?;
        diag.lambda_sq.push(lam);
        diag.lambda_star_sq.push(lam_star);
        diag.topup_spectrum.push(top);
        diag.tipup_spectrum.push(tip);
    }
    Ok(diag)
}
