//! Spectral factors of the SEL matrix.
//!
//! Under STEP imbalance with one example per minority class, `Z = U Σ Vᵀ` has
//! a closed form with three singular-value levels:
//!
//! | modes            | σ             | feature  |
//! |------------------|---------------|----------|
//! | `0 .. k/2-1`     | `√R`          | maj-maj  |
//! | `k/2-1`          | `√((R+1)/2)`  | maj-min  |
//! | `k/2 .. k-1`     | `1`           | min-min  |
//!
//! A one-sided Jacobi SVD is provided for everything else (logit tracking,
//! `n_min > 1`, cross-checks of the closed form).

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sel::{SelMatrix, StepConfig};

/// Singular values below this fraction of the largest are treated as zero.
pub const RANK_TOL: f64 = 1e-10;

const JACOBI_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 80;

/// Which pair of class groups a spectral mode distinguishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureLevel {
    MajMaj,
    MajMin,
    MinMin,
}

impl FeatureLevel {
    pub const ALL: [FeatureLevel; 3] = [
        FeatureLevel::MajMaj,
        FeatureLevel::MajMin,
        FeatureLevel::MinMin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureLevel::MajMaj => "maj-maj",
            FeatureLevel::MajMin => "maj-min",
            FeatureLevel::MinMin => "min-min",
        }
    }
}

/// Level of each of the `k − 1` modes in canonical order.
pub fn mode_levels(k: usize) -> Vec<FeatureLevel> {
    let h = k / 2;
    (0..k - 1)
        .map(|i| match i {
            i if i + 1 < h => FeatureLevel::MajMaj,
            i if i + 1 == h => FeatureLevel::MajMin,
            _ => FeatureLevel::MinMin,
        })
        .collect()
}

/// Orthonormal basis of the complement of the all-ones vector in `ℝ^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalBasis {
    pub columns: Array2<f64>,
}

/// Columns `2..m` of the Householder reflector that maps `e₁` to `1/√m`.
pub fn complement_basis(m: usize) -> Result<OrthonormalBasis> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "complement basis needs m ≥ 2 (got {m})"
        )));
    }
    let inv_sqrt = 1.0 / (m as f64).sqrt();
    // v = e₁ − 1/√m; reflector I − 2 v vᵀ / (vᵀv)
    let mut v = Array1::from_elem(m, -inv_sqrt);
    v[0] += 1.0;
    let vv = v.dot(&v);
    let columns = Array2::from_shape_fn((m, m - 1), |(i, j)| {
        let col = j + 1;
        let delta = if i == col { 1.0 } else { 0.0 };
        delta - 2.0 * v[i] * v[col] / vv
    });
    Ok(OrthonormalBasis { columns })
}

/// Thin SVD factors `U` (k × r), `σ` (r), `V` (n × r) of a SEL matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFactors {
    pub u: Array2<f64>,
    pub sigma: Array1<f64>,
    pub v: Array2<f64>,
}

impl SpectralFactors {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> Array2<f64> {
        let us = &self.u * &self.sigma;
        us.dot(&self.v.t())
    }
}

/// Closed-form factors for `n_min = 1`.
pub fn closed_form_factors(cfg: &StepConfig) -> Result<SpectralFactors> {
    cfg.validate()?;
    if cfg.n_min != 1 {
        return Err(Error::UnsupportedClosedForm { n_min: cfg.n_min });
    }
    let k = cfg.k;
    let h = cfg.half();
    let r = cfg.majority_size();
    let rf = cfg.ratio;
    let n = cfg.n();
    let f = complement_basis(h)?.columns;

    let mut sigma = Array1::zeros(k - 1);
    sigma.slice_mut(s![..h - 1]).fill(rf.sqrt());
    sigma[h - 1] = ((rf + 1.0) / 2.0).sqrt();
    sigma.slice_mut(s![h..]).fill(1.0);

    let mut u = Array2::zeros((k, k - 1));
    u.slice_mut(s![..h, ..h - 1]).assign(&f);
    u.slice_mut(s![h.., h..]).assign(&f);
    let c = (1.0 / k as f64).sqrt();
    u.slice_mut(s![..h, h - 1]).fill(-c);
    u.slice_mut(s![h.., h - 1]).fill(c);

    let mut v = Array2::zeros((n, k - 1));
    let maj_scale = 1.0 / rf.sqrt();
    for class in 0..h {
        let rows = s![class * r..(class + 1) * r, ..h - 1];
        let block = f.row(class).to_owned() * maj_scale;
        v.slice_mut(rows).assign(&block.broadcast((r, h - 1)).unwrap());
    }
    let mid = (2.0 / ((rf + 1.0) * k as f64)).sqrt();
    v.slice_mut(s![..h * r, h - 1]).fill(-mid);
    v.slice_mut(s![h * r.., h - 1]).fill(mid);
    v.slice_mut(s![h * r.., h..]).assign(&f);

    Ok(SpectralFactors { u, sigma, v })
}

/// Factors for any valid configuration: the closed form when `n_min = 1`,
/// otherwise the leading `k − 1` numeric singular triples of `Z`.
pub fn factors_for(cfg: &StepConfig, z: &SelMatrix) -> Result<SpectralFactors> {
    if cfg.n_min == 1 {
        return closed_form_factors(cfg);
    }
    let svd = numeric_svd(z.entries.view())?;
    let r = cfg.k - 1;
    if svd.rank < r {
        return Err(Error::ShapeMismatch(format!(
            "SEL matrix has numerical rank {} < k − 1 = {r}",
            svd.rank
        )));
    }
    Ok(SpectralFactors {
        u: svd.u.slice(s![.., ..r]).to_owned(),
        sigma: svd.sigma.slice(s![..r]).to_owned(),
        v: svd.v.slice(s![.., ..r]).to_owned(),
    })
}

/// Rank-revealing thin SVD of an arbitrary dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    pub u: Array2<f64>,
    pub sigma: Array1<f64>,
    pub v: Array2<f64>,
    pub rank: usize,
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Rotations are applied to the columns of the taller orientation of `m` in a
/// fixed cyclic order, so results are deterministic. Singular values below
/// `RANK_TOL * σ_max` are dropped.
pub fn numeric_svd(m: ArrayView2<f64>) -> Result<SvdResult> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let (p, q) = m.dim();
    let transposed = p < q;
    let a = if transposed { m.t() } else { m };
    let (rows, cols) = a.dim();

    // column-major working copy
    let mut work: Vec<Vec<f64>> = (0..cols).map(|j| a.column(j).to_vec()).collect();
    let mut rot: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            let mut e = vec![0.0; cols];
            e[j] = 1.0;
            e
        })
        .collect();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..cols {
            for j in i + 1..cols {
                let (alpha, beta, gamma) = column_grams(&work[i], &work[j]);
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut work, i, j, c, s);
                rotate_pair(&mut rot, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = work
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]).then(x.cmp(&y)));
    let sigma_max = norms.get(order[0]).copied().unwrap_or(0.0);
    let rank = order
        .iter()
        .take_while(|&&j| sigma_max > 0.0 && norms[j] > RANK_TOL * sigma_max)
        .count();

    let mut left = Array2::zeros((rows, rank));
    let mut right = Array2::zeros((cols, rank));
    let mut sigma = Array1::zeros(rank);
    for (out, &j) in order.iter().take(rank).enumerate() {
        sigma[out] = norms[j];
        for r in 0..rows {
            left[[r, out]] = work[j][r] / norms[j];
        }
        // rot[j] is the j-th column of the accumulated rotation
        for r in 0..cols {
            right[[r, out]] = rot[j][r];
        }
    }
    let (u, v) = if transposed {
        (right, left)
    } else {
        (left, right)
    };
    Ok(SvdResult { u, sigma, v, rank })
}

fn column_grams(a: &[f64], b: &[f64]) -> (f64, f64, f64) {
    a.iter()
        .zip(b)
        .fold((0.0, 0.0, 0.0), |(aa, bb, ab), (&x, &y)| {
            (aa + x * x, bb + y * y, ab + x * y)
        })
}

fn rotate_pair(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(j);
    let (ci, cj) = (&mut head[i], &mut tail[0]);
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

/// Relative reconstruction residual `‖Z − U diag(σ) Vᵀ‖_F / ‖Z‖_F`.
pub fn verify_factorization(z: &SelMatrix, f: &SpectralFactors) -> Result<f64> {
    let (k, n) = z.entries.dim();
    let r = f.sigma.len();
    if f.u.dim() != (k, r) || f.v.dim() != (n, r) {
        return Err(Error::ShapeMismatch(format!(
            "Z is {k}×{n} but factors are U {:?}, σ {r}, V {:?}",
            f.u.dim(),
            f.v.dim()
        )));
    }
    let diff = &z.entries - &f.reconstruct();
    Ok(frobenius(diff.view()) / frobenius(z.entries.view()))
}

pub fn frobenius(m: ArrayView2<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖A Aᵀ − B Bᵀ‖_F` for matrices with orthonormal columns.
pub fn projector_distance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let pa = a.dot(&a.t());
    let pb = b.dot(&b.t());
    frobenius((&pa - &pb).view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sel::{build_step_onehot, center_labels};

    fn z_for(cfg: &StepConfig) -> SelMatrix {
        center_labels(&build_step_onehot(cfg).unwrap()).unwrap()
    }

    fn assert_orthonormal(m: &Array2<f64>, tol: f64) {
        let g = m.t().dot(m);
        let err = frobenius((&g - &Array2::<f64>::eye(g.nrows())).view());
        assert!(err <= tol, "orthonormality error {err:e}");
    }

    #[test]
    fn complement_basis_m2() {
        let b = complement_basis(2).unwrap().columns;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((b[[0, 0]] - h).abs() < 1e-15);
        assert!((b[[1, 0]] + h).abs() < 1e-15);
    }

    #[test]
    fn complement_basis_properties() {
        for m in 2..=12 {
            let b = complement_basis(m).unwrap().columns;
            assert_eq!(b.dim(), (m, m - 1));
            assert_orthonormal(&b, 1e-12);
            for col in b.columns() {
                assert!(col.sum().abs() < 1e-12);
            }
        }
        assert_eq!(complement_basis(5).unwrap(), complement_basis(5).unwrap());
        assert!(complement_basis(1).is_err());
    }

    #[test]
    fn closed_form_k4_r10() {
        let cfg = StepConfig::with_defaults(4, 10.0).unwrap();
        let f = closed_form_factors(&cfg).unwrap();
        let expect = [3.16228, 2.34521, 1.0];
        for (s, e) in f.sigma.iter().zip(expect) {
            assert!((s - e).abs() < 5e-6, "{s} vs {e}");
        }
        assert_eq!(f.u.column(1).to_vec(), vec![-0.5, -0.5, 0.5, 0.5]);
        assert_orthonormal(&f.u, 1e-10);
        assert_orthonormal(&f.v, 1e-10);
        let z = z_for(&cfg);
        assert!(verify_factorization(&z, &f).unwrap() <= 1e-12);
    }

    #[test]
    fn closed_form_balanced_is_flat() {
        let cfg = StepConfig::with_defaults(4, 1.0).unwrap();
        let f = closed_form_factors(&cfg).unwrap();
        assert!(f.sigma.iter().all(|&s| (s - 1.0).abs() < 1e-15));
    }

    #[test]
    fn closed_form_rejects_nmin() {
        let cfg = StepConfig::new(4, 2.0, 3, 8).unwrap();
        assert!(matches!(
            closed_form_factors(&cfg),
            Err(Error::UnsupportedClosedForm { n_min: 3 })
        ));
    }

    #[test]
    fn hand_expanded_first_column() {
        // u₁·√10·(1/√20) − u₂·√(11/2)·√(1/22) for the first majority column
        let cfg = StepConfig::with_defaults(4, 10.0).unwrap();
        let f = closed_form_factors(&cfg).unwrap();
        let a = 10f64.sqrt() * (1.0 / 20f64).sqrt();
        let b = (11.0f64 / 2.0).sqrt() * (1.0f64 / 22.0).sqrt();
        let col: Vec<f64> = (0..4).map(|i| f.u[[i, 0]] * a - f.u[[i, 1]] * b).collect();
        for (x, e) in col.iter().zip([0.75, -0.25, -0.25, -0.25]) {
            assert!((x - e).abs() < 1e-14, "{col:?}");
        }
        // and the factorization itself agrees on that column
        let rec = f.reconstruct();
        for i in 0..4 {
            assert!((rec[[i, 0]] - col[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn zeroed_sigma_gives_unit_residual() {
        let cfg = StepConfig::with_defaults(4, 10.0).unwrap();
        let mut f = closed_form_factors(&cfg).unwrap();
        f.sigma.fill(0.0);
        assert_eq!(verify_factorization(&z_for(&cfg), &f).unwrap(), 1.0);
    }

    #[test]
    fn verify_rejects_shape_mismatch() {
        let f = closed_form_factors(&StepConfig::with_defaults(4, 10.0).unwrap()).unwrap();
        let z = z_for(&StepConfig::with_defaults(4, 2.0).unwrap());
        assert!(matches!(
            verify_factorization(&z, &f),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn svd_identity() {
        let r = numeric_svd(Array2::<f64>::eye(3).view()).unwrap();
        assert_eq!(r.rank, 3);
        for s in r.sigma.iter() {
            assert!((s - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn svd_truncates_rank() {
        let mut m = Array2::zeros((2, 5));
        m[[0, 0]] = 3.0;
        let r = numeric_svd(m.view()).unwrap();
        assert_eq!(r.rank, 1);
        assert_eq!(r.sigma.to_vec(), vec![3.0]);
        assert_eq!(r.u.dim(), (2, 1));
        assert_eq!(r.v.dim(), (5, 1));
    }

    #[test]
    fn svd_zero_matrix() {
        let r = numeric_svd(Array2::<f64>::zeros((3, 4)).view()).unwrap();
        assert_eq!(r.rank, 0);
    }

    #[test]
    fn svd_rejects_nan() {
        let mut m = Array2::<f64>::eye(2);
        m[[0, 1]] = f64::NAN;
        assert!(matches!(numeric_svd(m.view()), Err(Error::NonFinite)));
    }

    #[test]
    fn svd_matches_closed_form() {
        for &(k, r) in &[(4, 10.0), (4, 2.0), (6, 5.0), (8, 3.0), (8, 100.0)] {
            let cfg = StepConfig::with_defaults(k, r).unwrap();
            let z = z_for(&cfg);
            let f = closed_form_factors(&cfg).unwrap();
            let svd = numeric_svd(z.entries.view()).unwrap();
            assert_eq!(svd.rank, k - 1);
            for (a, b) in svd.sigma.iter().zip(f.sigma.iter()) {
                assert!((a - b).abs() < 1e-9, "k={k} R={r}: {a} vs {b}");
            }
            // compare subspaces level by level, never vector by vector
            let h = k / 2;
            for range in [0..h - 1, h - 1..h, h..k - 1] {
                let du = projector_distance(
                    svd.u.slice(s![.., range.clone()]),
                    f.u.slice(s![.., range.clone()]),
                );
                let dv = projector_distance(
                    svd.v.slice(s![.., range.clone()]),
                    f.v.slice(s![.., range]),
                );
                assert!(du < 1e-8 && dv < 1e-8, "k={k} R={r}: {du:e} {dv:e}");
            }
        }
    }

    #[test]
    fn factors_for_nmin_uses_numeric_path() {
        let cfg = StepConfig::new(6, 3.0, 2, 12).unwrap();
        let z = z_for(&cfg);
        let f = factors_for(&cfg, &z).unwrap();
        assert_eq!(f.rank(), 5);
        assert!(verify_factorization(&z, &f).unwrap() < 1e-12);
        // every level scales by √n_min
        let expect = [3f64.sqrt(), 3f64.sqrt(), 2f64.sqrt(), 1.0, 1.0].map(|s| s * 2f64.sqrt());
        for (a, e) in f.sigma.iter().zip(expect) {
            assert!((a - e).abs() < 1e-10, "{a} vs {e}");
        }
    }

    #[test]
    fn three_level_sign_pattern() {
        let cfg = StepConfig::with_defaults(8, 7.0).unwrap();
        let f = closed_form_factors(&cfg).unwrap();
        let levels = mode_levels(8);
        for (j, level) in levels.iter().enumerate() {
            let col = f.u.column(j);
            match level {
                FeatureLevel::MajMaj => assert!(col.slice(s![4..]).iter().all(|&x| x == 0.0)),
                FeatureLevel::MinMin => assert!(col.slice(s![..4]).iter().all(|&x| x == 0.0)),
                FeatureLevel::MajMin => {
                    assert!(col.slice(s![..4]).iter().all(|&x| x < 0.0));
                    assert!(col.slice(s![4..]).iter().all(|&x| x > 0.0));
                }
            }
        }
    }
}
