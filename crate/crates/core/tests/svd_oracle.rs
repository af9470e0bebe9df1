//! The hand-written Jacobi SVD and the closed-form factors, checked against
//! nalgebra's SVD.

use nalgebra::DMatrix;
use ndarray::Array2;

use ufm_core::sel::{build_step_onehot, center_labels, StepConfig};
use ufm_core::spectral::{closed_form_factors, numeric_svd, projector_distance};

fn to_nalgebra(a: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn sorted_singular_values(a: &Array2<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = to_nalgebra(a).singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Orthogonal projector onto the left singular vectors whose singular values
/// lie within `tol` of `value`.
fn level_projector(a: &Array2<f64>, value: f64, tol: f64) -> Array2<f64> {
    let svd = to_nalgebra(a).svd(true, false);
    let u = svd.u.unwrap();
    let mut p = Array2::zeros((a.nrows(), a.nrows()));
    for (j, &s) in svd.singular_values.iter().enumerate() {
        if (s - value).abs() < tol {
            for r in 0..a.nrows() {
                for c in 0..a.nrows() {
                    p[[r, c]] += u[(r, j)] * u[(c, j)];
                }
            }
        }
    }
    p
}

#[test]
fn sel_spectrum_against_nalgebra() {
    for k in [4, 6, 8] {
        for r in [1.0, 2.0, 7.0, 30.0, 100.0] {
            let cfg = StepConfig::with_defaults(k, r).unwrap();
            let z = center_labels(&build_step_onehot(&cfg).unwrap()).unwrap();
            let oracle = sorted_singular_values(&z.entries);
            assert!(oracle[k - 1].abs() < 1e-10, "Z has rank k − 1");
            let closed = closed_form_factors(&cfg).unwrap();
            let jacobi = numeric_svd(z.entries.view()).unwrap();
            for (i, &o) in oracle.iter().take(k - 1).enumerate() {
                assert!((closed.sigma[i] - o).abs() < 1e-10, "k={k} R={r} i={i}");
                assert!((jacobi.sigma[i] - o).abs() < 1e-10, "k={k} R={r} i={i}");
            }
        }
    }
}

#[test]
fn closed_form_level_subspaces_against_nalgebra() {
    let cfg = StepConfig::with_defaults(6, 10.0).unwrap();
    let z = center_labels(&build_step_onehot(&cfg).unwrap()).unwrap();
    let f = closed_form_factors(&cfg).unwrap();
    // maj-maj (2 modes), maj-min (1), min-min (2)
    for cols in [0..2, 2..3, 3..5] {
        let value = f.sigma[cols.start];
        let oracle = level_projector(&z.entries, value, 1e-8);
        let u = f.u.slice(ndarray::s![.., cols]).to_owned();
        let ours = u.dot(&u.t());
        assert!(projector_distance(ours.view(), oracle.view()) < 1e-10);
    }
}

#[test]
fn jacobi_on_generic_matrices() {
    use rand::{RngExt, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for (m, n) in [(3, 3), (5, 2), (2, 7), (6, 9)] {
        let a = Array2::from_shape_fn((m, n), |_| rng.random_range(-1.0..1.0));
        let oracle = sorted_singular_values(&a);
        let ours = numeric_svd(a.view()).unwrap();
        for (x, y) in ours.sigma.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-12, "{m}x{n}: {x} vs {y}");
        }
        let back = (&ours.u * &ours.sigma).dot(&ours.v.t());
        let err = (&back - &a).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(err < 1e-12);
    }
}
