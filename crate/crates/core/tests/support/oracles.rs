//! Naive reference implementations used to check the library.
//!
//! Nothing here calls the library's algorithms: tensors are read entry by entry
//! through `DenseTensor::get`, moments are built by explicit loops, and
//! eigenvectors come from a cyclic Jacobi solver.

#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use tenfac::{DenseTensor, TensorSeries};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha20Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_tensor(rng: &mut ChaCha20Rng, dims: &[usize]) -> DenseTensor {
    DenseTensor::from_fn(dims.to_vec(), |_| normal(rng)).unwrap()
}

pub fn random_series(rng: &mut ChaCha20Rng, dims: &[usize], t_len: usize) -> TensorSeries {
    TensorSeries::new((0..t_len).map(|_| random_tensor(rng, dims)).collect()).unwrap()
}

pub fn random_matrix(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| normal(rng))
}

/// Orthonormal columns by modified Gram-Schmidt.
pub fn random_orthonormal(rng: &mut ChaCha20Rng, d: usize, r: usize) -> DMatrix<f64> {
    loop {
        let mut m = random_matrix(rng, d, r);
        let mut ok = true;
        for j in 0..r {
            for i in 0..j {
                let proj = m.column(i).dot(&m.column(j));
                let ci = m.column(i).clone_owned();
                let mut cj = m.column_mut(j);
                cj -= ci * proj;
            }
            let n = m.column(j).norm();
            if n < 1e-6 {
                ok = false;
                break;
            }
            m.column_mut(j).unscale_mut(n);
        }
        if ok {
            return m;
        }
    }
}

/// All multi-indices of `dims`, first index fastest.
pub fn indices(dims: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = dims.iter().product();
    (0..total)
        .map(|mut lin| {
            dims.iter()
                .map(|&d| {
                    let i = lin % d;
                    lin /= d;
                    i
                })
                .collect()
        })
        .collect()
}

/// Column index of a multi-index in the mode-k unfolding: modes k+1, ..., K-1,
/// 0, ..., k-1, first listed fastest.
pub fn unfold_col(dims: &[usize], k: usize, idx: &[usize]) -> usize {
    let order = dims.len();
    let mut col = 0;
    let mut stride = 1;
    for step in 1..order {
        let m = (k + step) % order;
        col += idx[m] * stride;
        stride *= dims[m];
    }
    col
}

pub fn naive_unfold(x: &DenseTensor, k: usize) -> DMatrix<f64> {
    let dims = x.dims();
    let cols: usize = dims.iter().product::<usize>() / dims[k];
    let mut m = DMatrix::zeros(dims[k], cols);
    for idx in indices(dims) {
        m[(idx[k], unfold_col(dims, k, &idx))] = x.get(&idx);
    }
    m
}

/// Mode-1 unfolding of the TOPUP tensor: rows `i_k`, columns every
/// (non-k index of `X_{t-h}`, full index of `X_t`, lag) triple, with entries
/// `sum_t X_{t-h}[i_k, j] X_t[l] / (T - h)`.
pub fn naive_topup_unfolding(series: &TensorSeries, k: usize, h0: usize) -> DMatrix<f64> {
    naive_topup_unfolding_permuted(series, k, h0, None)
}

/// As [`naive_topup_unfolding`], with the columns of each lag block reordered
/// by `perm`.
pub fn naive_topup_unfolding_permuted(
    series: &TensorSeries,
    k: usize,
    h0: usize,
    perm: Option<&[usize]>,
) -> DMatrix<f64> {
    let dims = series.shape();
    let t_len = series.len();
    let d: usize = dims.iter().product();
    let dk = dims[k];
    let rest = d / dk;
    let block = rest * d;
    let mut m = DMatrix::zeros(dk, block * h0);
    for h in 1..=h0 {
        let scale = 1.0 / (t_len - h) as f64;
        for t in h..t_len {
            let lagged = series.get(t - h);
            let current = series.get(t);
            for a in indices(dims) {
                let j = unfold_col(dims, k, &a);
                let xa = lagged.get(&a);
                for (l, b) in indices(dims).iter().enumerate() {
                    let c = j + rest * l;
                    let c = perm.map_or(c, |p| p[c]);
                    m[(a[k], (h - 1) * block + c)] += scale * xa * current.get(b);
                }
            }
        }
    }
    m
}

/// Lag-h moment of the mode-k unfoldings as an order-4 array
/// `S[i, j, i', j'] = sum_t mat_k(X_{t-h})[i, j] mat_k(X_t)[i', j'] / (T - h)`,
/// contracted over `j = j'`.
pub fn naive_tipup_block(series: &TensorSeries, k: usize, h: usize) -> DMatrix<f64> {
    let dims = series.shape();
    let t_len = series.len();
    let dk = dims[k];
    let rest: usize = dims.iter().product::<usize>() / dk;
    let mut s = vec![0.0; dk * rest * dk * rest];
    let at = |i: usize, j: usize, i2: usize, j2: usize| ((i * rest + j) * dk + i2) * rest + j2;
    for t in h..t_len {
        let lagged = series.get(t - h);
        let current = series.get(t);
        for a in indices(dims) {
            let xa = lagged.get(&a);
            for b in indices(dims) {
                s[at(a[k], unfold_col(dims, k, &a), b[k], unfold_col(dims, k, &b))] +=
                    xa * current.get(&b) / (t_len - h) as f64;
            }
        }
    }
    DMatrix::from_fn(dk, dk, |i, i2| (0..rest).map(|j| s[at(i, j, i2, j)]).sum())
}

pub fn naive_tipup(series: &TensorSeries, k: usize, h0: usize) -> DMatrix<f64> {
    let dk = series.shape()[k];
    let mut m = DMatrix::zeros(dk, dk * h0);
    for h in 1..=h0 {
        m.view_mut((0, (h - 1) * dk), (dk, dk))
            .copy_from(&naive_tipup_block(series, k, h));
    }
    m
}

/// `Z_t[a] = sum_i X_t[i] prod_{j != skip} U_j[i_j, a_j]` with `a_skip = i_skip`.
pub fn naive_project(
    series: &TensorSeries,
    bases: &[DMatrix<f64>],
    skip: usize,
) -> TensorSeries {
    let dims = series.shape();
    let out_dims: Vec<usize> = (0..dims.len())
        .map(|j| if j == skip { dims[j] } else { bases[j].ncols() })
        .collect();
    let items = series
        .items()
        .iter()
        .map(|x| {
            let mut z = DenseTensor::zeros(out_dims.clone()).unwrap();
            for a in indices(&out_dims) {
                let mut acc = 0.0;
                for i in indices(dims) {
                    if i[skip] != a[skip] {
                        continue;
                    }
                    let mut w = x.get(&i);
                    for j in 0..dims.len() {
                        if j != skip {
                            w *= bases[j][(i[j], a[j])];
                        }
                    }
                    acc += w;
                }
                z.set(&a, acc);
            }
            z
        })
        .collect();
    TensorSeries::new(items).unwrap()
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations,
/// eigenvalues descending.
pub fn jacobi_eigen(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut a = a.clone();
    let mut v = DMatrix::identity(n, n);
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[(p, q)].abs() < f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    (values, vectors)
}

/// Projector onto the leading `rank` eigenvectors of a symmetric matrix, and
/// the relative eigengap `(l_r - l_{r+1}) / l_1` that makes it well defined.
pub fn leading_projector(sym: &DMatrix<f64>, rank: usize) -> (DMatrix<f64>, f64) {
    let (values, vectors) = jacobi_eigen(sym);
    let u = vectors.columns(0, rank).clone_owned();
    let next = values.get(rank).copied().unwrap_or(0.0);
    let gap = (values[rank - 1] - next) / values[0].abs().max(f64::MIN_POSITIVE);
    (&u * u.transpose(), gap)
}

/// Leading left singular subspace of `m` as a projector, with its relative gap
/// in squared singular values.
pub fn lsvd_projector(m: &DMatrix<f64>, rank: usize) -> (DMatrix<f64>, f64) {
    leading_projector(&(m * m.transpose()), rank)
}

/// One iTOPUP sweep: each mode in turn is replaced by the leading left
/// singular space of the TOPUP unfolding of the series projected on the
/// current bases of the other modes.
pub fn naive_topup_sweep(
    series: &TensorSeries,
    bases: &[DMatrix<f64>],
    ranks: &[usize],
    h0: usize,
) -> Option<Vec<DMatrix<f64>>> {
    let mut bases = bases.to_vec();
    for k in 0..bases.len() {
        let z = naive_project(series, &bases, k);
        let (values, vectors) = jacobi_eigen(&{
            let m = naive_topup_unfolding(&z, k, h0);
            &m * m.transpose()
        });
        let r = ranks[k];
        let next = values.get(r).copied().unwrap_or(0.0);
        if (values[r - 1] - next) < 1e-3 * values[0] {
            return None;
        }
        bases[k] = vectors.columns(0, r).clone_owned();
    }
    Some(bases)
}

/// Mode-0 update of HOOI on the lagged sample moments of an order-2 series:
/// contract `Sigma_h = sum_t X_{t-h} (x) X_t / (T - h)` with `U_2` on both of its
/// mode-2 indices, unfold along the first index and take the leading left
/// singular space.
pub fn hooi_mode0_update(
    series: &TensorSeries,
    u2: &DMatrix<f64>,
    rank: usize,
    h0: usize,
) -> (DMatrix<f64>, f64) {
    let dims = series.shape();
    let (d1, d2) = (dims[0], dims[1]);
    let r2 = u2.ncols();
    let t_len = series.len();
    let block = r2 * d1 * r2;
    let mut m = DMatrix::zeros(d1, block * h0);
    for h in 1..=h0 {
        for i in 0..d1 {
            for a in 0..r2 {
                for i2 in 0..d1 {
                    for a2 in 0..r2 {
                        let mut acc = 0.0;
                        for j in 0..d2 {
                            for j2 in 0..d2 {
                                let mut sigma = 0.0;
                                for t in h..t_len {
                                    sigma += series.get(t - h).get(&[i, j]) * series.get(t).get(&[i2, j2]);
                                }
                                acc += sigma / (t_len - h) as f64 * u2[(j, a)] * u2[(j2, a2)];
                            }
                        }
                        let col = (h - 1) * block + a + r2 * (i2 + d1 * a2);
                        m[(i, col)] = acc;
                    }
                }
            }
        }
    }
    lsvd_projector(&m, rank)
}

pub fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn series_from_parts(
    loadings: &[DMatrix<f64>],
    factors: &[DenseTensor],
    noise: Option<&[DenseTensor]>,
) -> TensorSeries {
    let items = factors
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let mut x = f.clone();
            for (k, a) in loadings.iter().enumerate() {
                x = x.mode_product(a, k).unwrap();
            }
            match noise {
                Some(e) => x.add(&e[t]).unwrap(),
                None => x,
            }
        })
        .collect();
    TensorSeries::new(items).unwrap()
}

/// Worst relative error per operation over a batch of random instances.
#[derive(Debug, Default)]
pub struct OracleReport {
    pub cases: usize,
    pub topup_gram: f64,
    pub tipup: f64,
    pub project: f64,
    pub topup_update: f64,
}

impl OracleReport {
    pub fn worst(&self) -> f64 {
        self.topup_gram.max(self.tipup).max(self.project).max(self.topup_update)
    }
}

/// Compares `topup_gram`, `tipup_matrix`, `project_series` and one iTOPUP sweep
/// with the naive oracles on `per_op` random instances each
/// (K <= 3, d_k <= 5, T <= 10). Instances whose leading subspace is not
/// separated by an eigengap are redrawn and not counted.
pub fn oracle_equivalence(per_op: usize, seed: u64) -> OracleReport {
    use tenfac::{method_preset, project_series, run_from_init, tipup_matrix, topup_gram, LoadingSet, OrthoBasis};

    let mut rng = rng(seed);
    let mut report = OracleReport::default();
    let shape = |rng: &mut ChaCha20Rng| -> (Vec<usize>, usize) {
        let order = rng.random_range(1..=3);
        let cap = if order == 3 { 4 } else { 5 };
        let dims = (0..order).map(|_| rng.random_range(1..=cap)).collect();
        (dims, rng.random_range(2..=10))
    };

    for _ in 0..per_op {
        let (dims, t_len) = shape(&mut rng);
        let x = random_series(&mut rng, &dims, t_len);
        let k = rng.random_range(0..dims.len());
        let h0 = rng.random_range(1..t_len.min(4));
        let naive = naive_topup_unfolding(&x, k, h0);
        let got = topup_gram(&x, k, h0).unwrap();
        report.topup_gram = report.topup_gram.max(rel_err(&got, &(&naive * naive.transpose())));
        let got = tipup_matrix(&x, k, h0).unwrap();
        report.tipup = report.tipup.max(rel_err(&got, &naive_tipup(&x, k, h0)));
        report.cases += 2;
    }

    for _ in 0..per_op {
        let (dims, t_len) = shape(&mut rng);
        let x = random_series(&mut rng, &dims, t_len);
        let skip = rng.random_range(0..dims.len());
        let bases: Vec<DMatrix<f64>> = dims
            .iter()
            .map(|&d| {
                let r = rng.random_range(1..=d);
                random_orthonormal(&mut rng, d, r)
            })
            .collect();
        let wrapped: Vec<OrthoBasis> = bases.iter().map(|b| OrthoBasis::new(b.clone()).unwrap()).collect();
        let refs: Vec<Option<&OrthoBasis>> = wrapped
            .iter()
            .enumerate()
            .map(|(j, b)| (j != skip).then_some(b))
            .collect();
        let got = project_series(&x, &refs, skip).unwrap();
        let want = naive_project(&x, &bases, skip);
        let got = DMatrix::from_column_slice(got.item_len(), got.len(), &flat(&got));
        let want = DMatrix::from_column_slice(want.item_len(), want.len(), &flat(&want));
        report.project = report.project.max(rel_err(&got, &want));
        report.cases += 1;
    }

    let mut done = 0;
    while done < per_op {
        let (mut dims, t_len) = shape(&mut rng);
        if dims.len() == 1 {
            dims.push(rng.random_range(2..=5));
        }
        let t_len = t_len.max(4);
        let x = random_series(&mut rng, &dims, t_len);
        let h0 = rng.random_range(1..=2);
        let ranks: Vec<usize> = dims.iter().map(|&d| rng.random_range(1..=d.min(2))).collect();
        let init: Vec<DMatrix<f64>> = dims
            .iter()
            .zip(&ranks)
            .map(|(&d, &r)| random_orthonormal(&mut rng, d, r))
            .collect();
        let Some(want) = naive_topup_sweep(&x, &init, &ranks, h0) else {
            continue;
        };
        let cfg = method_preset("1TOPUP").unwrap().config(ranks.clone(), h0, 0.0, 1);
        let start = LoadingSet::new(init.iter().map(|b| OrthoBasis::new(b.clone()).unwrap()).collect());
        let fit = run_from_init(&x, &cfg, start).unwrap();
        for (got, want) in fit.loadings.iter().zip(&want) {
            let err = rel_err(&got.projector(), &(want * want.transpose()));
            report.topup_update = report.topup_update.max(err);
        }
        report.cases += 1;
        done += 1;
    }
    report
}

fn flat(series: &TensorSeries) -> Vec<f64> {
    series.items().iter().flat_map(|x| x.data().to_vec()).collect()
}
