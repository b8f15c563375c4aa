//! Truncated singular vectors, projectors and the subspace distance.
//!
//! Returned bases follow a fixed sign convention: each column is flipped so that
//! its largest-magnitude entry is positive. Column spaces are unaffected, but it
//! makes written loadings reproducible. When the spectrum is degenerate at the
//! truncation point, any leading invariant subspace may come back; compare
//! projectors, not raw bases.

use nalgebra::{DMatrix, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Orthonormality tolerance enforced by [`OrthoBasis::new`].
pub const ORTHO_TOL: f64 = 1e-10;

/// The Gram route is used by [`lsvd`] once the matrix is this many times wider than tall.
pub const GRAM_ROUTE_RATIO: usize = 4;

const SYMMETRY_TOL: f64 = 1e-9;
const NEG_EIG_TOL: f64 = 1e-8;
const SVD_RECOMPOSE_TOL: f64 = 1e-10;

/// A `d x m` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoBasis {
    cols: DMatrix<f64>,
}

impl OrthoBasis {
    pub fn new(cols: DMatrix<f64>) -> Result<Self> {
        if cols.ncols() == 0 || cols.ncols() > cols.nrows() {
            return Err(Error::Shape(format!(
                "a basis needs 1 <= m <= d, got {}x{}",
                cols.nrows(),
                cols.ncols()
            )));
        }
        let gram = cols.transpose() * &cols;
        let err = (gram - DMatrix::identity(cols.ncols(), cols.ncols())).amax();
        if !(err <= ORTHO_TOL) {
            return Err(Error::Shape(format!(
                "columns are not orthonormal (max deviation {err:e})"
            )));
        }
        Ok(Self { cols })
    }

    pub(crate) fn new_unchecked(cols: DMatrix<f64>) -> Self {
        Self { cols }
    }

    /// The first `m` standard basis vectors of `R^d`.
    pub fn identity(d: usize, m: usize) -> Self {
        Self {
            cols: DMatrix::identity(d, m),
        }
    }

    /// Orthonormalizes the columns of `m` by a thin QR decomposition.
    pub fn from_qr(m: DMatrix<f64>) -> Result<Self> {
        if m.ncols() == 0 || m.ncols() > m.nrows() {
            return Err(Error::Shape(format!(
                "cannot orthonormalize a {}x{} matrix",
                m.nrows(),
                m.ncols()
            )));
        }
        let q = m.qr().q();
        Self::new(q)
    }

    pub fn dim(&self) -> usize {
        self.cols.nrows()
    }

    pub fn rank(&self) -> usize {
        self.cols.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.cols
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.cols
    }

    /// `U U^T`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.cols * self.cols.transpose()
    }
}

/// Projection matrix `U U^T` onto the span of `u`.
pub fn projector(u: &OrthoBasis) -> DMatrix<f64> {
    u.projector()
}

/// Flips each column so that its largest-magnitude entry is positive.
fn apply_sign_convention(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mut best = 0.0f64;
        let mut sign = 1.0;
        for &v in col.iter() {
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
        if sign < 0.0 {
            col.neg_mut();
        }
    }
}

fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Leading `rank` eigenpairs of a symmetric matrix, eigenvalues in descending order.
fn top_eigen(sym: DMatrix<f64>, rank: usize) -> (DMatrix<f64>, Vec<f64>) {
    let n = sym.nrows();
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(n, rank);
    for (j, &i) in order.iter().take(rank).enumerate() {
        vecs.set_column(j, &eig.eigenvectors.column(i));
    }
    apply_sign_convention(&mut vecs);
    (vecs, values)
}

/// Leading left singular vectors of `m` together with its full singular spectrum
/// (descending, length `min(rows, cols)`).
pub fn lsvd_with_spectrum(m: &DMatrix<f64>, rank: usize) -> Result<(OrthoBasis, Vec<f64>)> {
    check_finite(m)?;
    let max_rank = m.nrows().min(m.ncols());
    if rank == 0 || rank > max_rank {
        return Err(Error::RankTooLarge {
            rank,
            max: max_rank,
        });
    }
    if m.ncols() > GRAM_ROUTE_RATIO * m.nrows() {
        return Ok(gram_route(m, rank));
    }
    let svd = SVD::new(m.clone(), true, true);
    // The bidiagonal SVD occasionally returns a factorization that does not
    // reproduce `m` when the matrix is exactly rank deficient.
    match svd.clone().recompose() {
        Ok(back) if (&back - m).norm() <= SVD_RECOMPOSE_TOL * m.norm().max(f64::MIN_POSITIVE) => {}
        _ => return Ok(gram_route(m, rank)),
    }
    let u = svd.u.expect("left singular vectors were requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut vecs = DMatrix::zeros(m.nrows(), rank);
    for (j, &i) in order.iter().take(rank).enumerate() {
        vecs.set_column(j, &u.column(i));
    }
    apply_sign_convention(&mut vecs);
    let spectrum = order.iter().map(|&i| svd.singular_values[i]).collect();
    Ok((OrthoBasis::new_unchecked(vecs), spectrum))
}

fn gram_route(m: &DMatrix<f64>, rank: usize) -> (OrthoBasis, Vec<f64>) {
    let mut gram = m * m.transpose();
    symmetrize(&mut gram);
    let (vecs, values) = top_eigen(gram, rank);
    let mut spectrum: Vec<f64> = values.iter().map(|&v| v.max(0.0).sqrt()).collect();
    spectrum.truncate(m.nrows().min(m.ncols()));
    (OrthoBasis::new_unchecked(vecs), spectrum)
}

/// `LSVD_rank(m)`: the leading `rank` left singular vectors of `m`.
pub fn lsvd(m: &DMatrix<f64>, rank: usize) -> Result<OrthoBasis> {
    lsvd_with_spectrum(m, rank).map(|(basis, _)| basis)
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Leading eigenvectors of a symmetric PSD matrix, with all eigenvalues (descending).
pub fn gram_lsvd_with_spectrum(gram: &DMatrix<f64>, rank: usize) -> Result<(OrthoBasis, Vec<f64>)> {
    check_finite(gram)?;
    if !gram.is_square() {
        return Err(Error::Shape(format!(
            "Gram matrix must be square, got {}x{}",
            gram.nrows(),
            gram.ncols()
        )));
    }
    let n = gram.nrows();
    if rank == 0 || rank > n {
        return Err(Error::RankTooLarge { rank, max: n });
    }
    let scale = gram.amax().max(1.0);
    let asym = (gram - gram.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let mut sym = gram.clone();
    symmetrize(&mut sym);
    let (vecs, values) = top_eigen(sym, rank);
    let lowest = values.last().copied().unwrap_or(0.0);
    if lowest < -NEG_EIG_TOL * scale {
        return Err(Error::NotPsd(lowest));
    }
    Ok((OrthoBasis::new_unchecked(vecs), values))
}

/// Leading `rank` eigenvectors of `gram = M M^T`, i.e. `LSVD_rank(M)` without forming `M`.
pub fn gram_lsvd(gram: &DMatrix<f64>, rank: usize) -> Result<OrthoBasis> {
    gram_lsvd_with_spectrum(gram, rank).map(|(basis, _)| basis)
}

/// Sine of the largest principal angle between two equal-rank subspaces,
/// `|U1 U1^T - U2 U2^T|_S = sqrt(1 - sigma_min(U1^T U2)^2)`.
///
/// Evaluated as the spectral norm of `(I - U1 U1^T) U2`, which is the same
/// quantity but does not lose half the digits near zero.
pub fn subspace_distance(u1: &OrthoBasis, u2: &OrthoBasis) -> Result<f64> {
    if u1.dim() != u2.dim() || u1.rank() != u2.rank() {
        return Err(Error::DimensionMismatch(format!(
            "subspace distance between {}x{} and {}x{} bases",
            u1.dim(),
            u1.rank(),
            u2.dim(),
            u2.rank()
        )));
    }
    let a = u1.matrix();
    let b = u2.matrix();
    let residual = b - a * (a.transpose() * b);
    let s = residual.singular_values().max();
    Ok(s.clamp(0.0, 1.0))
}
