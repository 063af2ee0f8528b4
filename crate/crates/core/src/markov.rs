//! Small Markov-chain utilities shared by training and evaluation.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

pub const STATIONARY_TOL: f64 = 1e-12;
pub const STATIONARY_MAX_ITERS: usize = 200_000;

/// Stationary distribution `pi = pi P` of a row-stochastic matrix, by power
/// iteration from the uniform vector until `|pi P - pi|_1 <= tol`.
pub fn stationary_distribution(trans: &Array2<f64>, tol: f64, max_iters: usize) -> Result<Array1<f64>> {
    let k = trans.nrows();
    if k == 0 || trans.ncols() != k {
        return Err(Error::Dimension(format!("transition matrix must be square, got {:?}", trans.dim())));
    }
    if trans.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidStats("transition matrix has a negative or non-finite entry".into()));
    }
    for (i, row) in trans.rows().into_iter().enumerate() {
        let s = row.sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidStats(format!("transition row {i} sums to {s}")));
        }
    }

    let mut pi = Array1::from_elem(k, 1.0 / k as f64);
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let mut next = pi.dot(trans);
        next /= next.sum();
        residual = next.iter().zip(pi.iter()).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if residual <= tol {
            return Ok(pi);
        }
    }
    Err(Error::Convergence {
        iterations: max_iters,
        residual,
    })
}

/// [`stationary_distribution`] with the default tolerance and iteration cap.
pub fn stationary(trans: &Array2<f64>) -> Result<Array1<f64>> {
    stationary_distribution(trans, STATIONARY_TOL, STATIONARY_MAX_ITERS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn symmetric_chain() {
        let pi = stationary(&array![[0.9, 0.1], [0.1, 0.9]]).unwrap();
        assert_abs_diff_eq!(pi[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(pi[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn asymmetric_chain_solves_balance() {
        // pi0 * 0.5 = pi1 * 0.2 and pi0 + pi1 = 1
        let pi = stationary(&array![[0.5, 0.5], [0.2, 0.8]]).unwrap();
        assert_abs_diff_eq!(pi[0], 2.0 / 7.0, epsilon = 1e-11);
        assert_abs_diff_eq!(pi[1], 5.0 / 7.0, epsilon = 1e-11);
    }

    #[test]
    fn uniform_matrix() {
        let p = Array2::from_elem((4, 4), 0.25);
        let pi = stationary(&p).unwrap();
        for v in pi.iter() {
            assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-15);
        }
    }

    #[test]
    fn residual_bound_holds() {
        let p = array![[0.7, 0.2, 0.1], [0.05, 0.9, 0.05], [0.3, 0.3, 0.4]];
        let tol = 1e-10;
        let pi = stationary_distribution(&p, tol, 10_000).unwrap();
        let moved = pi.dot(&p);
        let r: f64 = moved.iter().zip(pi.iter()).map(|(a, b)| (a - b).abs()).sum();
        assert!(r <= tol);
    }

    #[test]
    fn iteration_cap_is_reported() {
        // uniform start is already stationary for a cyclic permutation
        let p = array![[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]];
        assert!(stationary_distribution(&p, 1e-12, 10).is_ok());
        let p = array![[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.5, 0.0, 0.5]];
        assert!(matches!(
            stationary_distribution(&p, 1e-14, 3),
            Err(Error::Convergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn rejects_non_stochastic() {
        assert!(stationary(&array![[0.5, 0.4], [0.5, 0.5]]).is_err());
        assert!(stationary(&array![[0.5, 0.5, 0.0]]).is_err());
    }
}
