#[path = "support/oracles.rs"]
mod oracles;

use nalgebra::DMatrix;
use oracles::*;
use rand::seq::SliceRandom;
use tenfac::{
    gram_lsvd, lsvd, method_preset, project_series, run_from_init, subspace_distance,
    tipup_matrix, topup_gram, LoadingSet, OrthoBasis,
};

#[test]
fn unfold_matches_index_enumeration() {
    let mut rng = rng(1);
    for dims in [vec![3], vec![2, 5], vec![3, 4, 5], vec![2, 3, 2, 3]] {
        let x = random_tensor(&mut rng, &dims);
        for k in 0..dims.len() {
            assert_eq!(x.unfold(k).unwrap(), naive_unfold(&x, k), "{dims:?} mode {k}");
        }
    }
}

#[test]
fn unfold_follows_the_cyclic_display_for_order_three() {
    // (mat_1)_{i, j + m2 k} = (mat_2)_{j, k + m3 i} = (mat_3)_{k, i + m1 j}, 0-based
    let mut rng = rng(2);
    let (m1, m2, m3) = (2, 3, 4);
    let x = random_tensor(&mut rng, &[m1, m2, m3]);
    let (u1, u2, u3) = (x.unfold(0).unwrap(), x.unfold(1).unwrap(), x.unfold(2).unwrap());
    for i in 0..m1 {
        for j in 0..m2 {
            for k in 0..m3 {
                let v = x.get(&[i, j, k]);
                assert_eq!(u1[(i, j + m2 * k)], v);
                assert_eq!(u2[(j, k + m3 * i)], v);
                assert_eq!(u3[(k, i + m1 * j)], v);
            }
        }
    }
}

#[test]
fn topup_gram_matches_order_five_construction() {
    let mut rng = rng(3);
    let x = random_series(&mut rng, &[3, 3], 6);
    for k in 0..2 {
        for h0 in 1..=3 {
            let m = naive_topup_unfolding(&x, k, h0);
            let want = &m * m.transpose();
            let got = topup_gram(&x, k, h0).unwrap();
            assert!(rel_err(&got, &want) < 1e-8, "k={k} h0={h0}");
        }
    }
}

#[test]
fn topup_gram_ignores_column_order() {
    let mut rng = rng(4);
    let x = random_series(&mut rng, &[2, 3, 2], 5);
    let k = 1;
    let d: usize = 12;
    let mut perm: Vec<usize> = (0..(d / 3) * d).collect();
    perm.shuffle(&mut rng);
    let m = naive_topup_unfolding_permuted(&x, k, 1, Some(&perm));
    assert!(rel_err(&topup_gram(&x, k, 1).unwrap(), &(&m * m.transpose())) < 1e-10);
}

#[test]
fn tipup_blocks_are_contractions_of_the_lagged_moment() {
    let mut rng = rng(5);
    for t_len in 2..=8 {
        let x = random_series(&mut rng, &[2, 3], t_len);
        for k in 0..2 {
            let h0 = (t_len - 1).min(3);
            let got = tipup_matrix(&x, k, h0).unwrap();
            assert!(rel_err(&got, &naive_tipup(&x, k, h0)) < 1e-10);
        }
    }
}

#[test]
fn projection_matches_naive_contraction() {
    let mut rng = rng(6);
    let dims = [4, 5, 6];
    let x = random_series(&mut rng, &dims, 3);
    let bases: Vec<DMatrix<f64>> = [2, 3, 2]
        .iter()
        .zip(&dims)
        .map(|(&r, &d)| random_orthonormal(&mut rng, d, r))
        .collect();
    let wrapped: Vec<OrthoBasis> = bases.iter().map(|b| OrthoBasis::new(b.clone()).unwrap()).collect();
    for skip in 0..3 {
        let refs: Vec<Option<&OrthoBasis>> =
            (0..3).map(|j| (j != skip).then_some(&wrapped[j])).collect();
        let got = project_series(&x, &refs, skip).unwrap();
        let want = naive_project(&x, &bases, skip);
        for (g, w) in got.items().iter().zip(want.items()) {
            assert_eq!(g.dims(), w.dims());
            let err = g.sub(w).unwrap().hs_norm() / w.hs_norm();
            assert!(err < 1e-12, "skip {skip}: {err}");
        }
    }
}

#[test]
fn lsvd_matches_jacobi_oracle() {
    let mut rng = rng(7);
    let m = random_matrix(&mut rng, 6, 9);
    let (want, gap) = lsvd_projector(&m, 3);
    assert!(gap > 1e-3);
    assert!(rel_err(&lsvd(&m, 3).unwrap().projector(), &want) < 1e-9);

    let wide = random_matrix(&mut rng, 5, 40);
    let gram = &wide * wide.transpose();
    let a = gram_lsvd(&gram, 2).unwrap().projector();
    let b = lsvd(&wide, 2).unwrap().projector();
    assert!(rel_err(&a, &b) < 1e-8);
}

#[test]
fn distance_is_spectral_norm_of_projector_difference() {
    let mut rng = rng(8);
    for _ in 0..50 {
        let u1 = random_orthonormal(&mut rng, 6, 2);
        let u2 = random_orthonormal(&mut rng, 6, 2);
        let diff = &u1 * u1.transpose() - &u2 * u2.transpose();
        let (values, _) = jacobi_eigen(&diff);
        let spectral = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let d = subspace_distance(&OrthoBasis::new(u1).unwrap(), &OrthoBasis::new(u2).unwrap()).unwrap();
        assert!((d - spectral).abs() < 1e-9, "{d} vs {spectral}");
    }
}

#[test]
fn itopup_update_equals_hooi_on_lagged_moments() {
    let mut rng = rng(9);
    let mut checked = 0;
    while checked < 20 {
        let x = random_series(&mut rng, &[3, 4], 8);
        let h0 = 1 + checked % 2;
        let (r1, r2) = (1 + checked % 2, 2);
        let u1 = random_orthonormal(&mut rng, 3, r1);
        let u2 = random_orthonormal(&mut rng, 4, r2);
        let (want, gap) = hooi_mode0_update(&x, &u2, r1, h0);
        if gap < 1e-3 {
            continue;
        }
        let cfg = method_preset("1TOPUP").unwrap().config(vec![r1, r2], h0, 0.0, 1);
        let init = LoadingSet::new(vec![OrthoBasis::new(u1).unwrap(), OrthoBasis::new(u2).unwrap()]);
        let fit = run_from_init(&x, &cfg, init).unwrap();
        let first = &fit.snapshots.as_ref().unwrap()[1][0];
        assert!(rel_err(&first.projector(), &want) < 1e-9);
        checked += 1;
    }
}

#[test]
fn randomized_oracle_equivalence() {
    let report = oracle_equivalence(60, 10);
    eprintln!("{report:?}");
    assert!(report.cases >= 200, "{report:?}");
    assert!(report.worst() <= 1e-8, "{report:?}");
}
