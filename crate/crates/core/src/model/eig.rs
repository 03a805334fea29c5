use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues sorted by descending real part; ties (conjugate pairs) are
/// broken by descending imaginary part.
pub fn sorted_eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    let mut eigs: Vec<Complex<f64>> = a.complex_eigenvalues().iter().copied().collect();
    eigs.sort_by(|x, y| {
        y.re.partial_cmp(&x.re)
            .unwrap()
            .then(y.im.partial_cmp(&x.im).unwrap())
    });
    eigs
}

/// Largest eigenvalue real part. Negative iff the matrix is stable.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .fold(f64::NEG_INFINITY, |acc, ev| acc.max(ev.re))
}

/// Relative error of the `rank`-th largest eigenvalue real part (0-based):
/// `|Re l_rank(A) - Re l_rank(A_true)| / |Re l_rank(A_true)|`.
pub fn eig_rel_error(a_opt: &DMatrix<f64>, a_true: &DMatrix<f64>, rank: usize) -> Result<f64> {
    let opt = sorted_eigenvalues(a_opt);
    let truth = sorted_eigenvalues(a_true);
    if rank >= truth.len() || rank >= opt.len() {
        return Err(Error::InvalidConfig(format!(
            "eigenvalue rank {rank} out of range for n = {}",
            truth.len()
        )));
    }
    let denom = truth[rank].re.abs();
    if denom == 0.0 {
        return Err(Error::Numeric(format!(
            "true eigenvalue {rank} has zero real part"
        )));
    }
    Ok((opt[rank].re - truth[rank].re).abs() / denom)
}

/// Eigenvalues of an identified system next to their per-rank relative
/// errors against the true system.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EigReport {
    /// `(re, im)` pairs sorted by descending real part.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Relative real-part error per rank.
    pub rel_errors: Vec<f64>,
}

impl EigReport {
    pub fn new(a_opt: &DMatrix<f64>, a_true: &DMatrix<f64>) -> Result<Self> {
        let eigenvalues = sorted_eigenvalues(a_opt)
            .iter()
            .map(|ev| (ev.re, ev.im))
            .collect();
        let rel_errors = (0..a_true.nrows())
            .map(|rank| eig_rel_error(a_opt, a_true, rank))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            eigenvalues,
            rel_errors,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    #[test]
    fn identical_matrices_have_zero_error() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.5, -2.0]);
        assert_eq!(eig_rel_error(&a, &a, 0).unwrap(), 0.0);
        assert_eq!(eig_rel_error(&a, &a, 1).unwrap(), 0.0);
    }

    #[test]
    fn diagonal_case() {
        let truth = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        let opt = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.1, -2.0]));
        assert_relative_eq!(eig_rel_error(&opt, &truth, 0).unwrap(), 0.1, epsilon = 1e-12);
        assert_relative_eq!(eig_rel_error(&opt, &truth, 1).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn conjugate_pairs_ordered_by_descending_imag() {
        // rotation-like block: eigenvalues -0.5 +- 2i
        let a = DMatrix::from_row_slice(2, 2, &[-0.5, 2.0, -2.0, -0.5]);
        let eigs = sorted_eigenvalues(&a);
        assert!(eigs[0].im > 0.0 && eigs[1].im < 0.0);
        assert_relative_eq!(eigs[0].re, eigs[1].re);
    }

    #[test]
    fn zero_denominator_is_an_error() {
        let truth = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]); // +-i
        let opt = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        assert!(eig_rel_error(&opt, &truth, 0).is_err());
    }

    #[test]
    fn report_has_one_row_per_eigenvalue() {
        let truth = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0, -3.0]));
        let opt = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.5, -2.0, -2.5]));
        let report = EigReport::new(&opt, &truth).unwrap();
        assert_eq!(report.eigenvalues.len(), 3);
        assert_eq!(report.rel_errors.len(), 3);
        assert_relative_eq!(report.rel_errors[0], 0.5, epsilon = 1e-12);
        assert!(report.rel_errors.iter().all(|&e| e >= 0.0));
    }

    #[test]
    fn spectral_abscissa_detects_instability() {
        let stable = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -0.1]));
        let unstable = DMatrix::from_diagonal(&DVector::from_vec(vec![0.2, -1.0]));
        assert!(spectral_abscissa(&stable) < 0.0);
        assert!(spectral_abscissa(&unstable) > 0.0);
    }
}
