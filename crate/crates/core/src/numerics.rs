//! Dense linear-algebra contracts used throughout the crate.
//!
//! The factorisation itself is delegated to `nalgebra`'s bidiagonal SVD; this
//! module pins the conventions other modules rely on: singular values sorted
//! nonincreasing, *full* orthogonal bases on both sides, and a relative
//! truncation rule for the pseudoinverse.

use crate::{Error, Matrix, Result};

/// Default relative truncation for [`pseudo_inverse`].
pub const DEFAULT_PINV_REL_TOL: f64 = 1e-10;

/// `matrix = left_basis * diag(singulars) * right_basis_t`, with the diagonal
/// padded to the rectangular shape of `matrix`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// rows × rows, orthogonal.
    pub left_basis: Matrix,
    /// min(rows, cols) values, nonincreasing, nonnegative.
    pub singulars: Vec<f64>,
    /// cols × cols, orthogonal.
    pub right_basis_t: Matrix,
}

impl SvdFactors {
    pub fn max_singular(&self) -> f64 {
        self.singulars.first().copied().unwrap_or(0.0)
    }

    /// Number of singular values strictly above `rel_tol * σ_max`.
    pub fn rank(&self, rel_tol: f64) -> usize {
        let cutoff = rel_tol * self.max_singular();
        self.singulars.iter().take_while(|&&s| s > cutoff && s > 0.0).count()
    }

    /// Rectangular diagonal matrix of singular values.
    pub fn sigma_matrix(&self) -> Matrix {
        let rows = self.left_basis.nrows();
        let cols = self.right_basis_t.nrows();
        let mut s = Matrix::zeros(rows, cols);
        for (i, &v) in self.singulars.iter().enumerate() {
            s[(i, i)] = v;
        }
        s
    }

    pub fn reconstruct(&self) -> Matrix {
        &self.left_basis * self.sigma_matrix() * &self.right_basis_t
    }
}

pub(crate) fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

/// Full singular value decomposition.
pub fn svd(matrix: &Matrix) -> Result<SvdFactors> {
    ensure_finite(matrix, "svd input")?;
    let (rows, cols) = matrix.shape();
    if rows == 0 || cols == 0 {
        return Ok(SvdFactors {
            left_basis: Matrix::identity(rows, rows),
            singulars: Vec::new(),
            right_basis_t: Matrix::identity(cols, cols),
        });
    }

    let decomposition = matrix.clone().svd(true, true);
    let u = decomposition.u.expect("u requested");
    let v_t = decomposition.v_t.expect("v_t requested");
    let raw = decomposition.singular_values;

    let k = raw.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]).then(a.cmp(&b)));

    let mut u_thin = Matrix::zeros(rows, k);
    let mut v_thin = Matrix::zeros(cols, k);
    let mut singulars = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut s = raw[src];
        let mut ucol = u.column(src).into_owned();
        if s < 0.0 {
            s = -s;
            ucol = -ucol;
        }
        singulars.push(s);
        u_thin.set_column(dst, &ucol);
        v_thin.set_column(dst, &v_t.row(src).transpose());
    }

    Ok(SvdFactors {
        left_basis: complete_orthonormal(&u_thin),
        singulars,
        right_basis_t: complete_orthonormal(&v_thin).transpose(),
    })
}

/// Extends the orthonormal columns of `thin` to a square orthogonal matrix by
/// Gram–Schmidt against the canonical basis, in index order.
pub fn complete_orthonormal(thin: &Matrix) -> Matrix {
    let (n, k) = thin.shape();
    let mut basis: Vec<nalgebra::DVector<f64>> = (0..k).map(|j| thin.column(j).into_owned()).collect();
    let mut candidate = 0;
    while basis.len() < n && candidate < n {
        let mut v = nalgebra::DVector::zeros(n);
        v[candidate] = 1.0;
        candidate += 1;
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v.axpy(-proj, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-8 {
            basis.push(v / norm);
        }
    }
    Matrix::from_columns(&basis)
}

/// Moore–Penrose pseudoinverse; singular values at or below `rel_tol * σ_max`
/// are treated as zero.
pub fn pseudo_inverse(matrix: &Matrix, rel_tol: f64) -> Result<Matrix> {
    if !(rel_tol > 0.0) {
        return Err(Error::param("rel_tol", format!("must be > 0, got {rel_tol}")));
    }
    let f = svd(matrix)?;
    let (rows, cols) = matrix.shape();
    let rank = f.rank(rel_tol);
    let mut out = Matrix::zeros(cols, rows);
    for i in 0..rank {
        let v = f.right_basis_t.row(i).transpose();
        let u = f.left_basis.column(i);
        out += (v * u.transpose()) / f.singulars[i];
    }
    Ok(out)
}

/// Largest singular value.
pub fn spectral_norm(matrix: &Matrix) -> Result<f64> {
    ensure_finite(matrix, "spectral_norm input")?;
    if matrix.is_empty() {
        return Ok(0.0);
    }
    let s = matrix.singular_values();
    Ok(s.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs())))
}
