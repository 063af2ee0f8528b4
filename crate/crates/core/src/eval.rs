//! Point estimates of the HMM parameters and held-out predictive likelihood.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::markov;
use crate::model::{predictive_phi, GlobalStats, ModelConfig};

/// Row-stochastic transition and emission matrices plus the distribution used
/// to start evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct PointParams {
    pub theta: Array2<f64>,
    pub phi: Array2<f64>,
    pub init: Array1<f64>,
}

impl PointParams {
    /// Builds point parameters, taking `init` as the stationary distribution
    /// of `theta`.
    pub fn with_stationary_init(theta: Array2<f64>, phi: Array2<f64>) -> Result<Self> {
        let init = markov::stationary(&theta)?;
        let params = PointParams { theta, phi, init };
        params.validate()?;
        Ok(params)
    }

    pub fn num_states(&self) -> usize {
        self.theta.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.phi.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.theta.nrows();
        if self.theta.ncols() != k || self.phi.nrows() != k || self.init.len() != k {
            return Err(Error::Dimension(format!(
                "theta {:?}, phi {:?}, init {} are inconsistent",
                self.theta.dim(),
                self.phi.dim(),
                self.init.len()
            )));
        }
        let rows = self.theta.rows().into_iter().chain(self.phi.rows());
        for row in rows {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) || (row.sum() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidStats("parameter row is not a probability vector".into()));
            }
        }
        if (self.init.sum() - 1.0).abs() > 1e-9 || self.init.iter().any(|p| *p < 0.0) {
            return Err(Error::InvalidStats("initial distribution is not a simplex".into()));
        }
        Ok(())
    }
}

/// Variational M-step: posterior-mean transition and emission probabilities
/// from the global expected counts.
pub fn point_estimates(stats: &GlobalStats, config: &ModelConfig) -> Result<PointParams> {
    config.validate()?;
    stats.check_dims(config)?;
    stats.validate()?;
    PointParams::with_stationary_init(transition_means(stats, config.alpha), predictive_phi(stats, config))
}

pub(crate) fn transition_means(stats: &GlobalStats, alpha: f64) -> Array2<f64> {
    let k_alpha = stats.num_states() as f64 * alpha;
    let mut theta = stats.trans.mapv(|c| c + alpha);
    for (mut row, total) in theta.rows_mut().into_iter().zip(stats.trans_row_sums()) {
        row /= total + k_alpha;
    }
    theta
}

/// Held-out log likelihood in nats per token, by the scaled forward algorithm.
pub fn predictive_log_likelihood(params: &PointParams, test: &[u32]) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyData("held-out sequence is empty".into()));
    }
    let k = params.num_states();
    let w = params.vocab_size();
    if let Some(&bad) = test.iter().find(|&&x| x as usize >= w) {
        return Err(Error::Vocabulary {
            token: bad as usize,
            vocab_size: w,
        });
    }

    let theta = &params.theta;
    let phi = &params.phi;
    let mut alpha: Vec<f64> = (0..k).map(|z| params.init[z] * phi[[z, test[0] as usize]]).collect();
    let mut next = vec![0.0; k];
    // Neumaier-compensated sum of the per-step log normalizers
    let (mut total_log, mut carry) = (0.0f64, 0.0f64);
    let mut scale: f64 = alpha.iter().sum();
    for (t, &x) in test.iter().enumerate() {
        if t > 0 {
            let x = x as usize;
            for (z, n) in next.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (zp, a) in alpha.iter().enumerate() {
                    acc += a * theta[[zp, z]];
                }
                *n = acc;
            }
            // theta rows sum to one only up to rounding
            let mass: f64 = next.iter().sum();
            for (z, n) in next.iter_mut().enumerate() {
                *n = *n / mass * phi[[z, x]];
            }
            std::mem::swap(&mut alpha, &mut next);
            scale = alpha.iter().sum();
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::DegenerateMessage { position: t });
        }
        let term = scale.ln();
        let sum = total_log + term;
        carry += if total_log.abs() >= term.abs() {
            (total_log - sum) + term
        } else {
            (term - sum) + total_log
        };
        total_log = sum;
        alpha.iter_mut().for_each(|a| *a /= scale);
    }
    let total_log = total_log + carry;
    Ok(total_log / test.len() as f64)
}
