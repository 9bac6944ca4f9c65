//! Small dense helpers shared by the solvers: sign-fixed QR, sorted SVD and
//! seeded orthonormal bases.

use nalgebra::SVD;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Mat, Vector};

/// Thin QR factorization `a = Q R` with `diag(R) >= 0`.
///
/// `Q` has `min(rows, cols)` orthonormal columns. Rank-deficient input still
/// yields an orthonormal `Q`; the Householder reflectors fill the missing
/// directions.
pub fn qr_positive(a: &Mat) -> (Mat, Mat) {
    let qr = a.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for i in 0..r.nrows().min(q.ncols()) {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
            r.row_mut(i).neg_mut();
        }
    }
    (q, r)
}

/// Singular value decomposition `a = U diag(sigma) Vᵀ` with descending singular values.
pub struct SortedSvd {
    pub u: Mat,
    pub sigma: Vec<f64>,
    pub v: Mat,
}

pub fn sorted_svd(a: &Mat) -> SortedSvd {
    let svd = SVD::new(a.clone(), true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma = order.iter().map(|&i| svd.singular_values[i]).collect();
    let u = Mat::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v = Mat::from_fn(v_t.ncols(), order.len(), |r, c| v_t[(order[c], r)]);
    SortedSvd { u, sigma, v }
}

/// `‖QᵀQ − I‖_F`.
pub fn orthonormality_error(q: &Mat) -> f64 {
    let gram = q.transpose() * q;
    (gram - Mat::identity(q.ncols(), q.ncols())).norm()
}

/// Matrix with i.i.d. standard normal entries.
pub fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Orthonormal `rows × cols` basis whose first column is `first / ‖first‖`;
/// the remaining columns are a seeded random completion.
pub fn orthonormal_completion<R: Rng + ?Sized>(first: &Vector, cols: usize, rng: &mut R) -> Mat {
    let rows = first.len();
    let mut seed = gaussian_matrix(rows, cols, rng);
    seed.set_column(0, &(first / first.norm()));
    let (q, _) = qr_positive(&seed);
    q
}

/// Horizontal concatenation `[a, b]`.
pub fn hstack(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.nrows(), b.nrows(), "hstack row mismatch");
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn qr_positive_reconstructs_with_nonnegative_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = gaussian_matrix(7, 4, &mut rng);
        let (q, r) = qr_positive(&a);
        assert!(orthonormality_error(&q) < 1e-13);
        assert!((0..4).all(|i| r[(i, i)] >= 0.0));
        assert!((&q * &r - &a).norm() < 1e-12);
    }

    #[test]
    fn qr_of_rank_deficient_input_is_still_orthonormal() {
        let mut a = Mat::zeros(5, 3);
        a[(0, 0)] = 2.0;
        a[(1, 0)] = 1.0;
        let (q, r) = qr_positive(&a);
        assert!(orthonormality_error(&q) < 1e-13);
        assert!((&q * &r - &a).norm() < 1e-13);
    }

    #[test]
    fn sorted_svd_is_descending_and_reconstructs() {
        let a = Mat::from_row_slice(3, 3, &[0.1, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 1.0]);
        let svd = sorted_svd(&a);
        assert_eq!(svd.sigma, vec![3.0, 1.0, 0.1]);
        let rec = &svd.u * Mat::from_diagonal(&Vector::from_vec(svd.sigma.clone())) * svd.v.transpose();
        assert!((rec - a).norm() < 1e-14);
    }

    #[test]
    fn completion_keeps_first_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let first = Vector::from_element(6, 1.0);
        let q = orthonormal_completion(&first, 3, &mut rng);
        assert!(orthonormality_error(&q) < 1e-13);
        let expected = &first / first.norm();
        assert!((q.column(0) - expected).norm() < 1e-14);
    }
}
