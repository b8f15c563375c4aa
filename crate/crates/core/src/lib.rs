//! Factor loading estimation for tensor time series.
//!
//! A series `X_t = lambda * F_t x_1 A_1 ... x_K A_K + E_t` is observed and the
//! column spaces of the loadings `A_k` are recovered from lagged
//! cross-moments. Three moment families are provided:
//!
//! * **TOPUP**: outer products of lagged pairs, unfolded along mode `k`;
//! * **TIPUP**: inner products, i.e. the lagged cross-covariance of `mat_k(X_t)`;
//! * **UP**: the plain (non-lagged) second moment.
//!
//! Each initial estimate can be refined by alternating projection
//! ([`iterative::run`]), which re-estimates one mode at a time from the series
//! projected onto the current estimates of the others.
//!
//! ```
//! use tenfac::{generate, method_preset, preset, Setting};
//!
//! let spec = preset(Setting::I, 2.0, 7);
//! let truth = generate(&spec, 128).unwrap();
//! let cfg = method_preset("iTOPUP").unwrap().config(spec.ranks.clone(), 1, 1e-4, 10);
//! let fit = tenfac::run(&truth.observed_series, &cfg).unwrap();
//! let loss = fit.loadings.distances(&truth.loadings).unwrap();
//! assert!(loss.iter().all(|&l| l < 0.5));
//! ```

pub mod error;
pub mod experiment;
pub mod io;
pub mod iterative;
pub mod moments;
pub mod simulate;
pub mod spectral;
pub mod tensor;

pub use error::{Error, Result};
pub use experiment::{
    estimated_signal, run_experiment, summarize, write_records_csv, write_summary_csv, ExperimentConfig, RunRecord,
    Stage, SummaryRow,
};
pub use iterative::{
    default_max_iter, initialize, method_preset, project_series, run, run_from_init,
    EstimationResult, IterConfig, LoadingSet, Method, Schedule, DEFAULT_EPSILON, METHOD_NAMES,
};
pub use moments::{
    estimate_loading, signal_strength, tipup_matrix, topup_gram, up_matrix, Flavor,
    MomentConfig, Normalization, SignalDiagnostics,
};
pub use simulate::{
    generate, generate_replication, population_signal, preset, GroundTruth, ModelSpec, Setting,
};
pub use spectral::{gram_lsvd, lsvd, lsvd_with_spectrum, projector, subspace_distance, OrthoBasis};
pub use tensor::{refold, DenseTensor, TensorSeries};
pub use nalgebra::DMatrix;
