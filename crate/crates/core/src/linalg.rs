//! Small dense linear algebra on top of `nalgebra`.
//!
//! Every solve goes through a Cholesky factorization; nothing in the crate
//! forms an explicit inverse except where a matrix-valued inverse is the
//! object of study (the backward `B_k` recursion), and even there it is
//! obtained by solving against the identity.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Smallest eigenvalue accepted by [`spd_solve`] callers that need a
/// well-conditioned system.
pub const MIN_EIGENVALUE: f64 = 1e-10;

pub fn outer(u: &DVector<f64>) -> DMatrix<f64> {
    u * u.transpose()
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    let mut values: alloc::vec::Vec<f64> = SymmetricEigen::new(a.clone())
        .eigenvalues
        .iter()
        .copied()
        .collect();
    values.sort_by(|x, y| x.total_cmp(y));
    DVector::from_vec(values)
}

pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(a)[0]
}

pub fn max_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let ev = symmetric_eigenvalues(a);
    ev[ev.len() - 1]
}

/// Operator (spectral) norm of a symmetric matrix.
pub fn symmetric_op_norm(a: &DMatrix<f64>) -> f64 {
    symmetric_eigenvalues(a)
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Operator norm of an arbitrary square matrix, via the eigenvalues of `AᵀA`.
pub fn op_norm(a: &DMatrix<f64>) -> f64 {
    libm::sqrt(max_eigenvalue(&(a.transpose() * a)).max(0.0))
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

fn cholesky(a: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    Cholesky::new(a.clone()).ok_or_else(|| Error::NotPositiveDefinite {
        min_eigenvalue: min_eigenvalue(a),
    })
}

/// Solves `A x = b` for symmetric `A` whose smallest eigenvalue is at least
/// `min_eig`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>, min_eig: f64) -> Result<DVector<f64>> {
    let lo = min_eigenvalue(a);
    if !(lo >= min_eig) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: lo });
    }
    Ok(cholesky(a)?.solve(b))
}

/// Matrix-valued solve `A X = B`.
pub fn spd_solve_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>, min_eig: f64) -> Result<DMatrix<f64>> {
    let lo = min_eigenvalue(a);
    if !(lo >= min_eig) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: lo });
    }
    Ok(cholesky(a)?.solve(b))
}

/// Symmetric square root of an SPD matrix.
pub fn spd_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(symmetrize(a));
    let lo = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    if !(lo > 0.0) {
        return Err(Error::NotPositiveDefinite { min_eigenvalue: lo });
    }
    let roots = DMatrix::from_diagonal(&eig.eigenvalues.map(libm::sqrt));
    Ok(&eig.eigenvectors * roots * eig.eigenvectors.transpose())
}

/// Largest generalized eigenvalue `ρ` of the pencil `(M, A)`, i.e. the
/// smallest `ρ` with `M ⪯ ρ A`, for symmetric `M` and SPD `A`.
pub fn max_generalized_eigenvalue(m: &DMatrix<f64>, a: &DMatrix<f64>) -> Result<f64> {
    let chol = cholesky(a)?;
    let l = chol.l();
    // L⁻¹ M L⁻ᵀ by two triangular solves.
    let left = l
        .solve_lower_triangular(m)
        .ok_or(Error::NotPositiveDefinite {
            min_eigenvalue: 0.0,
        })?;
    let both = l
        .solve_lower_triangular(&left.transpose())
        .ok_or(Error::NotPositiveDefinite {
            min_eigenvalue: 0.0,
        })?;
    Ok(max_eigenvalue(&symmetrize(&both)))
}

pub fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};

    #[test]
    fn solve_matches_known_system() {
        let a = dmatrix![4.0, 1.0; 1.0, 3.0];
        let b = dvector![1.0, 2.0];
        let x = spd_solve(&a, &b, MIN_EIGENVALUE).unwrap();
        assert!((&a * &x - b).norm() < 1e-14);
    }

    #[test]
    fn solve_rejects_indefinite_and_singular() {
        let a = dmatrix![1.0, 0.0; 0.0, -1.0];
        assert!(matches!(
            spd_solve(&a, &dvector![1.0, 1.0], MIN_EIGENVALUE),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let s = dmatrix![1.0, 1.0; 1.0, 1.0];
        assert!(spd_solve(&s, &dvector![1.0, 1.0], MIN_EIGENVALUE).is_err());
    }

    #[test]
    fn sqrt_squares_back() {
        let a = dmatrix![2.0, 0.5; 0.5, 1.0];
        let r = spd_sqrt(&a).unwrap();
        assert!((&r * &r - &a).norm() < 1e-13);
        assert!(max_asymmetry(&r) < 1e-14);
    }

    #[test]
    fn generalized_eigenvalue_of_scaled_pencil() {
        let a = dmatrix![2.0, 0.3; 0.3, 1.0];
        let m = &a * 3.5;
        assert!((max_generalized_eigenvalue(&m, &a).unwrap() - 3.5).abs() < 1e-12);
        let d = dmatrix![1.0, 0.0; 0.0, 2.0];
        let md = dmatrix![13.0, 0.0; 0.0, 70.0];
        assert!((max_generalized_eigenvalue(&md, &d).unwrap() - 35.0).abs() < 1e-12);
    }

    #[test]
    fn op_norms() {
        let a = dmatrix![0.0, 2.0; 0.0, 0.0];
        assert!((op_norm(&a) - 2.0).abs() < 1e-12);
        let s = dmatrix![-3.0, 0.0; 0.0, 1.0];
        assert!((symmetric_op_norm(&s) - 3.0).abs() < 1e-12);
    }
}
