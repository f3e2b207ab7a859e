//! Small dense helpers shared by the fixed-point solvers.

use nalgebra::{DMatrix, DVector};

/// Failure modes of [`eigenvector_with_normalization`].
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum FixedPointError {
    /// Null space of `A - eigenvalue I` has this dimension (not 1).
    Multiplicity(usize),
    /// The normalization functional vanishes on the null vector.
    Unnormalizable,
    /// Residual of the solved vector exceeds the acceptance threshold.
    Residual(f64),
}

/// Solve `A x = eigenvalue x` subject to `normal . x = target`.
///
/// The null vector of `A - eigenvalue I` is taken from an SVD, rejected
/// unless the null space is exactly one-dimensional, then rescaled to satisfy
/// the normalization and refined with a bordered least-squares correction.
pub(crate) fn eigenvector_with_normalization(
    a: &DMatrix<f64>,
    eigenvalue: f64,
    normal: &DVector<f64>,
    target: f64,
) -> Result<DVector<f64>, FixedPointError> {
    let n = a.nrows();
    let mut b = a.clone();
    for i in 0..n {
        b[(i, i)] -= eigenvalue;
    }
    let svd = b.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sigma = &svd.singular_values;
    let scale = sigma.max().max(1.0);

    let null_dim = sigma.iter().filter(|&&s| s < 1e-9 * scale).count();
    if null_dim != 1 {
        return Err(FixedPointError::Multiplicity(null_dim));
    }
    let idx = sigma.imin();
    let null = v_t.row(idx).transpose();
    let proj = normal.dot(&null);
    if proj.abs() < 1e-12 * normal.norm() * null.norm() {
        return Err(FixedPointError::Unnormalizable);
    }
    let mut x = null * (target / proj);

    // Bordered correction: minimize |B dx + B x|^2 + |normal.dx - (target - normal.x)|^2.
    let mut bordered = DMatrix::<f64>::zeros(n + 1, n);
    bordered.view_mut((0, 0), (n, n)).copy_from(&b);
    bordered.row_mut(n).copy_from(&normal.transpose());
    for _ in 0..2 {
        let mut rhs = DVector::<f64>::zeros(n + 1);
        rhs.rows_mut(0, n).copy_from(&(-(&b * &x)));
        rhs[n] = target - normal.dot(&x);
        let dx = bordered
            .clone()
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .expect("SVD solve");
        x += dx;
    }

    let residual = (&b * &x).amax() / x.amax().max(f64::MIN_POSITIVE);
    if residual > 1e-10 {
        return Err(FixedPointError::Residual(residual));
    }
    Ok(x)
}

/// Sorted eigenvalues of a real symmetric matrix.
pub fn symmetric_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_simple_eigenvector() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let normal = DVector::from_vec(vec![1.0, 1.0]);
        let x = eigenvector_with_normalization(&a, 1.0, &normal, 3.0).unwrap();
        assert!(x[0].abs() < 1e-14);
        assert!((x[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_degenerate_eigenspace() {
        let a = DMatrix::<f64>::identity(3, 3);
        let normal = DVector::from_element(3, 1.0);
        assert_eq!(
            eigenvector_with_normalization(&a, 1.0, &normal, 1.0),
            Err(FixedPointError::Multiplicity(3))
        );
    }

    #[test]
    fn rejects_missing_eigenvalue() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let normal = DVector::from_element(2, 1.0);
        assert_eq!(
            eigenvector_with_normalization(&a, 1.0, &normal, 1.0),
            Err(FixedPointError::Multiplicity(0))
        );
    }
}
