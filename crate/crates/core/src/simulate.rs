//! Ground-truth tensor factor data.
//!
//! `X_t = lambda * F_t x_1 U_1 ... x_K U_K + E_t` where
//!
//! * `U_k` is the QR-orthonormalization of a `d_k x r_k` standard normal draw;
//! * every entry of `F_t` is an independent AR(1) with unit-variance Gaussian
//!   innovations, started from its stationary law and then burned in;
//! * `E_t = sigma * Z_t x_1 Psi_1^{1/2} ... x_K Psi_K^{1/2}` with `Z_t` iid standard
//!   normal and `Psi_k` the equicorrelation matrix with off-diagonal `rho_k`.
//!
//! For `K = 2` the noise is `Psi_1^{1/2} Z_t Psi_2^{1/2}`. Orders above 2 use the
//! same mode-wise separable construction.
//!
//! # Random streams
//!
//! All draws come from ChaCha20 seeded with `spec.seed`. Replication `rep` uses
//! stream `3 * rep + role`, with role 0 for loadings, 1 for factors and 2 for
//! noise, so replications and roles never share random numbers.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::iterative::LoadingSet;
use crate::moments::{Flavor, Normalization};
use crate::spectral::OrthoBasis;
use crate::tensor::{DenseTensor, TensorSeries};

pub const DEFAULT_RHO: f64 = 0.2;
pub const DEFAULT_BURN_IN: usize = 200;

/// The three matrix-factor configurations of the simulation study (`d = (16, 16)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Setting {
    /// `r = (1, 1)`, `phi = 0.8`.
    I,
    /// `r = (1, 2)`, `phi = (0.8, 0.6)`.
    II,
    /// `r = (1, 2)`, `phi = (0.8, -0.8)`: lag-1 TIPUP signal cancels.
    III,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::I => "I",
            Setting::II => "II",
            Setting::III => "III",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "1" => Ok(Setting::I),
            "II" | "2" => Ok(Setting::II),
            "III" | "3" => Ok(Setting::III),
            _ => Err(Error::Config(format!("unknown setting `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    /// Signal scale multiplying the factor term.
    pub lambda: f64,
    /// One AR(1) coefficient per factor entry, in tensor storage order.
    pub ar_coeffs: Vec<f64>,
    /// Equicorrelation of the noise along each mode.
    pub noise_rho: Vec<f64>,
    /// Noise standard deviation `sigma`; zero gives noiseless data.
    pub noise_scale: f64,
    pub seed: u64,
    pub burn_in: usize,
}

impl ModelSpec {
    /// A matrix or tensor model with default noise (`rho = 0.2`, `sigma = 1`).
    ///
    /// A single AR coefficient is broadcast to every factor entry.
    pub fn new(dims: Vec<usize>, ranks: Vec<usize>, lambda: f64, ar_coeffs: Vec<f64>, seed: u64) -> Result<Self> {
        let entries: usize = ranks.iter().product();
        let ar_coeffs = if ar_coeffs.len() == 1 {
            vec![ar_coeffs[0]; entries]
        } else {
            ar_coeffs
        };
        let spec = Self {
            noise_rho: vec![DEFAULT_RHO; dims.len()],
            dims,
            ranks,
            lambda,
            ar_coeffs,
            noise_scale: 1.0,
            seed,
            burn_in: DEFAULT_BURN_IN,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.dims.is_empty() || self.dims.len() != self.ranks.len() {
            return bad(format!("dims {:?} and ranks {:?} disagree", self.dims, self.ranks));
        }
        if self.dims.iter().zip(&self.ranks).any(|(&d, &r)| r == 0 || r > d) {
            return bad(format!("ranks {:?} must lie in 1..=dims {:?}", self.ranks, self.dims));
        }
        let entries: usize = self.ranks.iter().product();
        if self.ar_coeffs.len() != entries {
            return bad(format!(
                "{} AR coefficients for {entries} factor entries",
                self.ar_coeffs.len()
            ));
        }
        if let Some(phi) = self.ar_coeffs.iter().find(|p| !(p.abs() < 1.0)) {
            return bad(format!("AR coefficient {phi} is not stationary"));
        }
        if self.noise_rho.len() != self.dims.len() {
            return bad(format!("{} noise correlations for {} modes", self.noise_rho.len(), self.dims.len()));
        }
        if let Some(rho) = self.noise_rho.iter().find(|r| !(**r >= 0.0 && **r < 1.0)) {
            return bad(format!("noise correlation {rho} outside [0, 1)"));
        }
        if !(self.lambda.is_finite() && self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return bad("lambda and noise scale must be finite, noise scale nonnegative".into());
        }
        Ok(())
    }
}

/// The data and all of its hidden components.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub loadings: LoadingSet,
    pub factor_series: TensorSeries,
    pub noise_series: TensorSeries,
    pub signal_series: TensorSeries,
    pub observed_series: TensorSeries,
}

/// Model specification of one of the three study settings.
pub fn preset(setting: Setting, lambda: f64, seed: u64) -> ModelSpec {
    let (ranks, phis) = match setting {
        Setting::I => (vec![1, 1], vec![0.8]),
        Setting::II => (vec![1, 2], vec![0.8, 0.6]),
        Setting::III => (vec![1, 2], vec![0.8, -0.8]),
    };
    ModelSpec::new(vec![16, 16], ranks, lambda, phis, seed).expect("study presets are valid")
}

/// Symmetric square root of `(1 - rho) I + rho 1 1^T`, i.e. `a I + b 1 1^T` with
/// `a = sqrt(1 - rho)` and `b = (sqrt(1 - rho + d rho) - sqrt(1 - rho)) / d`.
pub fn equicorrelation_sqrt(d: usize, rho: f64) -> DMatrix<f64> {
    let a = (1.0 - rho).sqrt();
    let b = ((1.0 - rho + d as f64 * rho).sqrt() - a) / d as f64;
    DMatrix::from_fn(d, d, |i, j| if i == j { a + b } else { b })
}

fn substream(seed: u64, rep: u64, role: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(3 * rep + role);
    rng
}

/// Replication 0 of [`generate_replication`].
pub fn generate(spec: &ModelSpec, t_len: usize) -> Result<GroundTruth> {
    generate_replication(spec, t_len, 0)
}

fn normal(rng: &mut ChaCha20Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws one independent dataset of length `t_len` for replication `rep`.
pub fn generate_replication(spec: &ModelSpec, t_len: usize, rep: u64) -> Result<GroundTruth> {
    spec.validate()?;
    if t_len < 2 {
        return Err(Error::Config(format!("series length {t_len} < 2")));
    }

    let mut rng = substream(spec.seed, rep, 0);
    let bases = spec
        .dims
        .iter()
        .zip(&spec.ranks)
        .map(|(&d, &r)| {
            let draw = DMatrix::from_fn(d, r, |_, _| normal(&mut rng));
            OrthoBasis::from_qr(draw)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = substream(spec.seed, rep, 1);
    let paths: Vec<Vec<f64>> = spec
        .ar_coeffs
        .iter()
        .map(|&phi| {
            let sd = (1.0 / (1.0 - phi * phi)).sqrt();
            let mut f = sd * normal(&mut rng);
            for _ in 0..spec.burn_in {
                f = phi * f + normal(&mut rng);
            }
            (0..t_len)
                .map(|_| {
                    f = phi * f + normal(&mut rng);
                    f
                })
                .collect()
        })
        .collect();
    let factors = (0..t_len)
        .map(|t| DenseTensor::new(spec.ranks.clone(), paths.iter().map(|p| p[t]).collect()))
        .collect::<Result<Vec<_>>>()?;
    let factor_series = TensorSeries::new(factors)?;

    let signal_series = factor_series.try_map(|f| {
        let m = f.multi_mode_product(bases.iter().map(OrthoBasis::matrix).enumerate())?;
        Ok(m.scale(spec.lambda))
    })?;

    let mut rng = substream(spec.seed, rep, 2);
    let roots: Vec<DMatrix<f64>> = spec
        .dims
        .iter()
        .zip(&spec.noise_rho)
        .map(|(&d, &rho)| equicorrelation_sqrt(d, rho))
        .collect();
    let noise = (0..t_len)
        .map(|_| {
            if spec.noise_scale == 0.0 {
                return DenseTensor::zeros(spec.dims.clone());
            }
            let z = DenseTensor::from_fn(spec.dims.clone(), |_| normal(&mut rng))?;
            let e = z.multi_mode_product(roots.iter().enumerate())?;
            Ok(if spec.noise_scale == 1.0 { e } else { e.scale(spec.noise_scale) })
        })
        .collect::<Result<Vec<_>>>()?;
    let noise_series = TensorSeries::new(noise)?;

    let observed = signal_series
        .items()
        .iter()
        .zip(noise_series.items())
        .map(|(m, e)| m.add(e))
        .collect::<Result<Vec<_>>>()?;

    Ok(GroundTruth {
        loadings: LoadingSet::new(bases),
        factor_series,
        noise_series,
        signal_series,
        observed_series: TensorSeries::new(observed)?,
    })
}

/// Lag-h autocovariance `phi^h / (1 - phi^2)` of a unit-innovation AR(1).
pub fn ar1_autocov(phi: f64, h: usize) -> f64 {
    phi.powi(h as i32) / (1.0 - phi * phi)
}

/// Population signal strengths per mode.
///
/// The lag-h factor moment `E[F_{t-h} (x) F_t]` of independent AR(1) entries is
/// diagonal with entries `lambda^2 gamma_a(h)`. The loadings are orthonormal, so
/// the singular values of the population TOPUP unfolding and TIPUP matrix equal
/// those of their factor-space counterparts, which are formed here directly.
pub fn population_signal(
    spec: &ModelSpec,
    h0: usize,
    flavor: Flavor,
    normalization: Normalization,
) -> Result<Vec<f64>> {
    spec.validate()?;
    if h0 == 0 {
        return Err(Error::Config("h0 must be positive".into()));
    }
    let ranks = &spec.ranks;
    let lam2 = spec.lambda * spec.lambda;
    let entries = spec.ar_coeffs.len();
    // multi-index of each factor entry along mode k (first index fastest)
    let coord = |a: usize, k: usize| -> usize {
        let stride: usize = ranks[..k].iter().product();
        (a / stride) % ranks[k]
    };

    (0..ranks.len())
        .map(|k| {
            let rk = ranks[k];
            let m = match flavor {
                Flavor::Topup => {
                    // column per (entry, lag): the only nonzero of E[F_{t-h} (x) F_t] in it
                    let mut m = DMatrix::zeros(rk, entries * h0);
                    for h in 1..=h0 {
                        for (a, &phi) in spec.ar_coeffs.iter().enumerate() {
                            m[(coord(a, k), (h - 1) * entries + a)] = lam2 * ar1_autocov(phi, h);
                        }
                    }
                    m
                }
                Flavor::Tipup => {
                    let mut m = DMatrix::zeros(rk, rk * h0);
                    for h in 1..=h0 {
                        for (a, &phi) in spec.ar_coeffs.iter().enumerate() {
                            let i = coord(a, k);
                            m[(i, (h - 1) * rk + i)] += lam2 * ar1_autocov(phi, h);
                        }
                    }
                    m
                }
                Flavor::Up => {
                    return Err(Error::Config(
                        "population signal is defined for TOPUP and TIPUP only".into(),
                    ))
                }
            };
            let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
            sv.sort_by(|a, b| b.total_cmp(a));
            Ok(normalization.apply(sv[rk - 1], h0))
        })
        .collect()
}
