//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest eigenvalue modulus of a square real matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order; eigenvector `k` is column `k` of the returned basis.
pub fn symmetric_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `‖a − b‖_F / max(‖b‖_F, f64::MIN_POSITIVE)`.
pub fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Lower Cholesky factor `L` with `m = L·Lᵀ`. Falls back to the symmetric
/// square root when `m` is only positive semi-definite.
pub fn covariance_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = symmetrize(m);
    if let Some(chol) = Cholesky::new(sym.clone()) {
        return Ok(chol.l());
    }
    let (vals, vecs) = symmetric_eigen_desc(&sym);
    let scale = vals.first().copied().unwrap_or(0.0).abs().max(1.0);
    if vals.iter().any(|&v| v < -1e-10 * scale) {
        return Err(Error::Factorization(
            "covariance matrix is not positive semi-definite".into(),
        ));
    }
    let root = DMatrix::from_fn(vals.len(), vals.len(), |i, j| {
        if i == j {
            vals[i].max(0.0).sqrt()
        } else {
            0.0
        }
    });
    Ok(&vecs * root * vecs.transpose())
}

/// Solves `m·x = rhs` for symmetric positive-definite `m`.
pub fn spd_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = Cholesky::new(symmetrize(m))
        .ok_or_else(|| Error::Factorization("Cholesky of a matrix expected to be SPD".into()))?;
    Ok(chol.solve(rhs))
}

/// `Tr(Bᵀ·S·B)`.
pub fn trace_quadratic(b: &DMatrix<f64>, s: &DMatrix<f64>) -> f64 {
    (s * b).component_mul(b).sum()
}

pub fn identity(n: usize) -> DMatrix<f64> {
    DMatrix::identity(n, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_radius_of_rotation_scaled() {
        // 0.5·rotation has complex eigenvalues of modulus 0.5
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&m) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn eigen_desc_sorted_and_reconstructs() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 1.0]);
        let (vals, vecs) = symmetric_eigen_desc(&m);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vals));
        let rebuilt = &vecs * d * vecs.transpose();
        assert!(rel_frobenius(&rebuilt, &m) < 1e-12);
    }

    #[test]
    fn covariance_factor_handles_singular_psd() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let l = covariance_factor(&m).unwrap();
        assert!(rel_frobenius(&(&l * l.transpose()), &m) < 1e-12);
    }

    #[test]
    fn trace_quadratic_matches_definition() {
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.5]);
        assert!((trace_quadratic(&b, &s) - 2.5).abs() < 1e-15);
    }
}

/// Serde adapter writing a matrix as row-major nested arrays.
pub mod rows_serde {
    use nalgebra::DMatrix;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
        m.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".into());
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }
}
