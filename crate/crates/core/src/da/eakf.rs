//! Dense ensemble adjustment update in a joint state/observation space.
//!
//! The joint vector of one member stacks the variables to update followed by
//! the predicted observations, so the observation operator is a selection of
//! the trailing rows. Means move with the Kalman gain in observation space;
//! deviations are mapped with `A = S B^{1/2} S^+`, where `S = Σ^{1/2}` and
//! `B = I - S Hᵀ (H Σ Hᵀ + R)⁻¹ H S`. Then `A Σ Aᵀ` is the posterior
//! covariance, and both the zero-spread and the exact-observation limits
//! are well defined.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Relative cutoff below which eigenvalues count as zero.
const EIG_TOL: f64 = 1e-13;

fn eigen(m: &DMatrix<f64>) -> SymmetricEigen<f64, nalgebra::Dyn> {
    // symmetrize against round-off before decomposing
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym)
}

fn recompose(e: &SymmetricEigen<f64, nalgebra::Dyn>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let vals = e.eigenvalues.map(f);
    &e.eigenvectors * DMatrix::from_diagonal(&vals) * e.eigenvectors.transpose()
}

fn cutoff(e: &SymmetricEigen<f64, nalgebra::Dyn>) -> f64 {
    EIG_TOL * e.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()))
}

/// Square root and pseudo-inverse square root of a symmetric PSD matrix.
pub(crate) fn sym_sqrt_pair(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let e = eigen(m);
    let tol = cutoff(&e);
    let sqrt = recompose(&e, |v| if v > tol { v.sqrt() } else { 0.0 });
    let inv = recompose(&e, |v| if v > tol && v > 0.0 { 1.0 / v.sqrt() } else { 0.0 });
    (sqrt, inv)
}

pub(crate) fn sym_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let e = eigen(m);
    let tol = cutoff(&e);
    recompose(&e, |v| if v > tol && v > 0.0 { 1.0 / v } else { 0.0 })
}

/// Sample covariance of the columns of `z`, with the column mean.
pub fn sample_covariance(z: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let m = z.ncols();
    let mean = z.column_mean();
    let mut dev = z.clone();
    for mut c in dev.column_iter_mut() {
        c -= &mean;
    }
    let denom = (m.max(2) - 1) as f64;
    let cov = &dev * dev.transpose() / denom;
    (mean, cov)
}

/// Amount `max(δ (Λ_max - Λ_min), δ_min)` for the rows flagged in `mask`,
/// with Λ the eigenvalues of that block of `cov`.
pub fn regularization_amount(cov: &DMatrix<f64>, mask: &[bool], delta: f64, delta_min: f64) -> f64 {
    let rows: Vec<usize> = (0..cov.nrows()).filter(|&k| mask[k]).collect();
    if rows.is_empty() {
        return 0.0;
    }
    let block = DMatrix::from_fn(rows.len(), rows.len(), |a, b| cov[(rows[a], rows[b])]);
    let e = eigen(&block);
    let max = e.eigenvalues.max();
    let min = e.eigenvalues.min();
    (delta * (max - min)).max(delta_min)
}

/// Covariance of `z` with the regularization added on the flagged diagonal.
/// Returns the matrix and the amount added.
pub fn regularized_covariance(z: &DMatrix<f64>, mask: &[bool], delta: f64, delta_min: f64) -> (DMatrix<f64>, f64) {
    let (_, mut cov) = sample_covariance(z);
    let alpha = regularization_amount(&cov, mask, delta, delta_min);
    for (k, &on) in mask.iter().enumerate() {
        if on {
            cov[(k, k)] += alpha;
        }
    }
    (cov, alpha)
}

/// Sparse loadings `(row, weight)` of one independent perturbation.
pub type Direction = Vec<(usize, f64)>;

/// Covariance of `z` plus `α v vᵀ` for each direction `v`. The amount is
/// computed on the rows flagged in `mask`.
pub fn coupled_covariance(
    z: &DMatrix<f64>,
    mask: &[bool],
    directions: &[Direction],
    delta: f64,
    delta_min: f64,
) -> (DMatrix<f64>, f64) {
    let (_, mut cov) = sample_covariance(z);
    let alpha = regularization_amount(&cov, mask, delta, delta_min);
    if alpha > 0.0 {
        for dir in directions {
            for &(a, wa) in dir {
                for &(b, wb) in dir {
                    cov[(a, b)] += alpha * wa * wb;
                }
            }
        }
    }
    (cov, alpha)
}

/// Update the joint ensemble `z` (rows = variables, columns = members) in
/// place. The last `y.len()` rows are predicted observations with error
/// variances `r`. Returns the regularization amount used.
pub fn eakf_joint(z: &mut DMatrix<f64>, y: &[f64], r: &[f64], mask: &[bool], delta: f64, delta_min: f64) -> f64 {
    let directions: Vec<Direction> = (0..mask.len()).filter(|&k| mask[k]).map(|k| vec![(k, 1.0)]).collect();
    eakf_joint_coupled(z, y, r, mask, &directions, delta, delta_min)
}

/// As [`eakf_joint`], but the regularization is added along `directions`,
/// so a perturbation of a state also moves the predicted observations that
/// depend on it. Without this coupling a collapsed ensemble cannot respond
/// to data at all.
pub fn eakf_joint_coupled(
    z: &mut DMatrix<f64>,
    y: &[f64],
    r: &[f64],
    mask: &[bool],
    directions: &[Direction],
    delta: f64,
    delta_min: f64,
) -> f64 {
    let (d, members) = z.shape();
    let p = y.len();
    assert!(p <= d && r.len() == p && mask.len() == d);
    if p == 0 || members < 2 {
        return 0.0;
    }
    let q = d - p;
    let mean = z.column_mean();
    let mut dev = z.clone();
    for mut c in dev.column_iter_mut() {
        c -= &mean;
    }
    let (sigma, alpha) = coupled_covariance(z, mask, directions, delta, delta_min);

    let mut syy = sigma.view((q, q), (p, p)).clone_owned();
    for k in 0..p {
        syy[(k, k)] += r[k];
    }
    let syy_inv = sym_pinv(&syy);
    let innovation = DVector::from_fn(p, |k, _| y[k] - mean[q + k]);
    let gain_term = &syy_inv * innovation;
    let mean_a = &mean + sigma.columns(q, p) * gain_term;

    let (s, s_pinv) = sym_sqrt_pair(&sigma);
    let s_obs = s.rows(q, p).clone_owned();
    let b = DMatrix::identity(d, d) - s_obs.transpose() * &syy_inv * &s_obs;
    let (b_half, _) = sym_sqrt_pair(&b);
    let adjust = s * b_half * s_pinv;
    let dev_a = adjust * dev;
    for (j, mut col) in z.column_iter_mut().enumerate() {
        col.copy_from(&(&mean_a + dev_a.column(j)));
    }
    alpha
}
