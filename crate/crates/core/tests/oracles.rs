use nalgebra::{DMatrix, DVector};
use sparse_imager::collector::{
    build_greedy_frame, build_random_collector, certify_coherence, Field, GreedyFrameOptions,
};
use sparse_imager::forward::{build_sensing_matrix, PlanarSetup};
use sparse_imager::linalg::{norm1, norm_inf, sub, CMatrix, C64};
use sparse_imager::rng::rng_from_seed;
use sparse_imager::solver::Gelma;
use sparse_imager::Error;

use rand::Rng;

/// Minimal l1 norm solution of a real system by enumerating every basis.
fn basis_pursuit_by_enumeration(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let (m, n) = a.shape();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        let sub_a = a.select_columns(&idx);
        if let Some(x) = sub_a.clone().lu().solve(b) {
            if (&sub_a * &x - b).norm() <= 1e-10 {
                let l1 = x.iter().map(|v| v.abs()).sum::<f64>();
                if best.as_ref().is_none_or(|(v, _)| l1 < *v) {
                    let mut full = DVector::zeros(n);
                    for (&k, &v) in idx.iter().zip(x.iter()) {
                        full[k] = v;
                    }
                    best = Some((l1, full));
                }
            }
        }
        // next m-subset in lexicographic order
        let Some(i) = (0..m).rev().find(|&i| idx[i] < n - m + i) else { break };
        idx[i] += 1;
        for j in i + 1..m {
            idx[j] = idx[j - 1] + 1;
        }
    }
    best.unwrap().1
}

#[test]
fn six_by_twelve_matches_enumeration_oracle() {
    let mut rng = rng_from_seed(612);
    let mut a = DMatrix::<f64>::from_fn(6, 12, |_, _| rng.random_range(-1.0..1.0));
    for mut col in a.column_iter_mut() {
        let n = col.norm();
        col /= n;
    }
    let mut rho = DVector::<f64>::zeros(12);
    rho[2] = 1.3;
    rho[9] = -0.7;
    let b = &a * &rho;
    let oracle = basis_pursuit_by_enumeration(&a, &b);

    let ac = CMatrix::from_col_major(6, 12, a.iter().map(|&x| C64::new(x, 0.0)).collect()).unwrap();
    let bc: Vec<C64> = b.iter().map(|&x| C64::new(x, 0.0)).collect();
    let gelma = Gelma::new(&ac);
    let settings = gelma.settings_for(&bc, 1.0).unwrap().noiseless(b.norm()).max_iters(200_000);
    let r = gelma.solve(&bc, &settings).unwrap();
    assert!(r.converged);
    let expect: Vec<C64> = oracle.iter().map(|&x| C64::new(x, 0.0)).collect();
    assert!(norm_inf(&sub(&r.solution, &expect)) <= 1e-6, "{:?} vs {:?}", r.solution, oracle);
    assert!(norm1(&r.solution) <= oracle.iter().map(|x| x.abs()).sum::<f64>() + 1e-8);
}

#[test]
fn enumeration_oracle_finds_sparse_solution_of_identity_block() {
    let a = DMatrix::<f64>::from_fn(2, 3, |i, j| if j == 2 || i == j { 1.0 } else { 0.0 });
    let b = DVector::from_vec(vec![1.0, 1.0]);
    let x = basis_pursuit_by_enumeration(&a, &b);
    assert_eq!(x.as_slice(), &[0.0, 0.0, 1.0]);
}

#[test]
fn full_scale_screened_collector_is_infeasible() {
    let cfg = PlanarSetup {
        receivers: 25,
        frequencies: 25,
        aperture_ratio: 0.5,
        bandwidth_ratio: 0.5,
        range: 60.0,
        rows: 61,
        cols: 61,
        spacing: 0.5,
    }
    .build()
    .unwrap();
    let a = build_sensing_matrix(&cfg).unwrap().matrix;
    assert_eq!((a.rows(), a.cols()), (625, 3721));
    match build_random_collector(&a, 12000, 4, 7, 200) {
        Err(Error::CollectorInfeasible {
            accepted,
            requested,
            value,
            ..
        }) => {
            assert_eq!(requested, 12000);
            assert!(accepted < 5, "accepted {accepted}");
            assert!(value >= 1.0 / 12.0);
        }
        other => panic!("expected infeasibility, got {other:?}"),
    }
}

#[test]
fn real_plane_frame_for_one_source_has_two_lines() {
    let empty = CMatrix::zeros(2, 0);
    let options = GreedyFrameOptions {
        field: Field::Real,
        ..GreedyFrameOptions::default()
    };
    for seed in 0..10 {
        let frame = build_greedy_frame(&empty, 1, seed, &options).unwrap();
        assert_eq!(frame.len(), 2, "seed {seed}");
        assert!(frame.len() <= 5);
        let cert = certify_coherence(&empty, &frame.columns, 1).unwrap();
        assert!(cert.ok);
        assert_eq!(Some(cert.worst_value), frame.certified_bound);
    }
}

#[test]
fn greedy_frame_in_six_complex_dimensions_covers_the_sphere() {
    let empty = CMatrix::zeros(6, 0);
    let frame = build_greedy_frame(&empty, 2, 6, &GreedyFrameOptions::default()).unwrap();
    let check = frame.stopping_check.clone().unwrap();
    assert_eq!(check.samples, 1000);
    assert!(check.holds, "{check:?}");
    assert!(certify_coherence(&empty, &frame.columns, 2).unwrap().worst_value < 1.0 / 6.0);
}
