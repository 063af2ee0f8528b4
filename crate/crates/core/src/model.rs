//! Model configuration, global expected statistics, and the zeroth-order
//! collapsed surrogate parameters used inside subchain inference.
//!
//! Emissions are categorical with a symmetric Dirichlet prior, so the
//! expected emission statistic of state `k` for word `w` is simply the
//! expected number of times `w` was emitted from `k`.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when checking that a belief vector is a simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Number of hidden states `K`.
    pub num_states: usize,
    /// Vocabulary size `W`.
    pub vocab_size: usize,
    /// Symmetric Dirichlet concentration on transition rows.
    pub alpha: f64,
    /// Symmetric Dirichlet concentration on emission rows.
    pub beta: f64,
    /// Divide the inner transition weights by `E[C_k.] + K*alpha`. On by
    /// default; `false` gives the unnormalized `E[C_kk'] + alpha` form.
    #[serde(default = "default_true")]
    pub normalize_inner_rows: bool,
}

fn default_true() -> bool {
    true
}

impl ModelConfig {
    pub fn new(num_states: usize, vocab_size: usize, alpha: f64, beta: f64) -> Result<Self> {
        let config = ModelConfig {
            num_states,
            vocab_size,
            alpha,
            beta,
            normalize_inner_rows: true,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_normalized_inner_rows(mut self, on: bool) -> Self {
        self.normalize_inner_rows = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_states < 2 {
            return Err(Error::InvalidConfig(format!(
                "need at least 2 hidden states, got {}",
                self.num_states
            )));
        }
        if self.vocab_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "need a vocabulary of at least 2 symbols, got {}",
                self.vocab_size
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be > 0, got {}", self.beta)));
        }
        Ok(())
    }
}

/// Expected transition counts `E[C_kk']` and expected emission counts
/// `E[t_kw]` summarizing the posterior over the whole hidden chain.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalStats {
    pub trans: Array2<f64>,
    pub emit: Array2<f64>,
}

impl GlobalStats {
    pub fn zeros(config: &ModelConfig) -> Self {
        GlobalStats {
            trans: Array2::zeros((config.num_states, config.num_states)),
            emit: Array2::zeros((config.num_states, config.vocab_size)),
        }
    }

    pub fn from_parts(trans: Array2<f64>, emit: Array2<f64>) -> Result<Self> {
        let stats = GlobalStats { trans, emit };
        stats.validate()?;
        Ok(stats)
    }

    pub fn num_states(&self) -> usize {
        self.trans.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.emit.ncols()
    }

    /// Checks shape consistency and that every entry is finite and nonnegative.
    pub fn validate(&self) -> Result<()> {
        let k = self.trans.nrows();
        if self.trans.ncols() != k || self.emit.nrows() != k {
            return Err(Error::Dimension(format!(
                "transition stats {:?} and emission stats {:?} disagree",
                self.trans.dim(),
                self.emit.dim()
            )));
        }
        for (name, m) in [("transition", &self.trans), ("emission", &self.emit)] {
            if let Some(bad) = m.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::InvalidStats(format!("{name} statistic {bad} is not a finite nonnegative value")));
            }
        }
        Ok(())
    }

    pub fn check_dims(&self, config: &ModelConfig) -> Result<()> {
        if self.trans.dim() != (config.num_states, config.num_states)
            || self.emit.dim() != (config.num_states, config.vocab_size)
        {
            return Err(Error::Dimension(format!(
                "stats are {:?}/{:?} but the model has K={} W={}",
                self.trans.dim(),
                self.emit.dim(),
                config.num_states,
                config.vocab_size
            )));
        }
        Ok(())
    }

    /// `E[C_k.]`
    pub fn trans_row_sums(&self) -> Array1<f64> {
        self.trans.sum_axis(Axis(1))
    }

    /// `E[C_.k']`
    pub fn trans_col_sums(&self) -> Array1<f64> {
        self.trans.sum_axis(Axis(0))
    }

    /// Expected occupancy of each state as seen by the emission statistics.
    pub fn emit_row_sums(&self) -> Array1<f64> {
        self.emit.sum_axis(Axis(1))
    }

    pub fn trans_mass(&self) -> f64 {
        self.trans.sum()
    }

    pub fn emit_mass(&self) -> f64 {
        self.emit.sum()
    }
}

fn validated(stats: &GlobalStats, config: &ModelConfig) -> Result<()> {
    config.validate()?;
    stats.check_dims(config)?;
    stats.validate()
}

/// Inner transition factor weights `E[C_kk'] + alpha`.
///
/// With `normalize_inner_rows` (the default) each row is divided by
/// `E[C_k.] + K*alpha`, the same denominator the outgoing edge factor carries.
pub fn surrogate_theta_inner(stats: &GlobalStats, config: &ModelConfig) -> Result<Array2<f64>> {
    validated(stats, config)?;
    let mut theta = stats.trans.mapv(|c| c + config.alpha);
    if config.normalize_inner_rows {
        let k_alpha = config.num_states as f64 * config.alpha;
        for (mut row, total) in theta.rows_mut().into_iter().zip(stats.trans_row_sums()) {
            row /= total + k_alpha;
        }
    }
    Ok(theta)
}

/// Collapsed categorical predictive `(E[t_kw] + beta) / (n_k + W*beta)`, where
/// `n_k` is the expected number of emissions from state `k`.
pub fn surrogate_phi(stats: &GlobalStats, config: &ModelConfig) -> Result<Array2<f64>> {
    validated(stats, config)?;
    Ok(predictive_phi(stats, config))
}

pub(crate) fn predictive_phi(stats: &GlobalStats, config: &ModelConfig) -> Array2<f64> {
    let w_beta = config.vocab_size as f64 * config.beta;
    let mut phi = stats.emit.mapv(|t| t + config.beta);
    for (mut row, total) in phi.rows_mut().into_iter().zip(stats.emit_row_sums()) {
        row /= total + w_beta;
    }
    phi
}

pub(crate) fn check_simplex(belief: &[f64], k: usize, what: &str) -> Result<()> {
    if belief.len() != k {
        return Err(Error::InvalidBelief(format!(
            "{what} has {} entries, expected {k}",
            belief.len()
        )));
    }
    if belief.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidBelief(format!("{what} has a negative or non-finite entry")));
    }
    let total: f64 = belief.iter().sum();
    if (total - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidBelief(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

/// Weight of entering each first-position state from the left guard:
/// `sum_z0 q(z0) E[C_{z0,z1}] + alpha`.
///
/// The `alpha / (K q(z0))` terms of the guarded factor, once multiplied by
/// `q(z0)` and summed over `z0`, contribute exactly `alpha`, so no division by
/// a guard probability ever happens. With `normalize_inner_rows` each `z0`
/// term is divided by `E[C_{z0,.}] + K alpha` and contributes `alpha / K`.
pub fn edge_in_weight(stats: &GlobalStats, left_belief: &[f64], config: &ModelConfig) -> Result<Array1<f64>> {
    validated(stats, config)?;
    check_simplex(left_belief, config.num_states, "left guard belief")?;
    Ok(edge_in_unchecked(stats, left_belief, config))
}

pub(crate) fn edge_in_unchecked(stats: &GlobalStats, left: &[f64], config: &ModelConfig) -> Array1<f64> {
    let k = stats.num_states();
    let alpha = config.alpha;
    let mut out = Array1::from_elem(k, 0.0);
    if !config.normalize_inner_rows {
        for (z0, &q) in left.iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            for (o, &c) in out.iter_mut().zip(stats.trans.row(z0)) {
                *o += q * c;
            }
        }
        out += alpha;
        return out;
    }
    let k_alpha = k as f64 * alpha;
    let share = alpha / k as f64;
    for (z0, (&q, total)) in left.iter().zip(stats.trans_row_sums()).enumerate() {
        let denom = total + k_alpha;
        for (o, &c) in out.iter_mut().zip(stats.trans.row(z0)) {
            *o += (q * c + share) / denom;
        }
    }
    out
}

/// Weight of leaving each last-position state towards the right guard:
/// `(sum_z' q(z') E[C_{zL,z'}] + alpha) / (E[C_{zL,.}] + K alpha)`.
pub fn edge_out_weight(stats: &GlobalStats, right_belief: &[f64], config: &ModelConfig) -> Result<Array1<f64>> {
    validated(stats, config)?;
    check_simplex(right_belief, config.num_states, "right guard belief")?;
    Ok(edge_out_unchecked(stats, right_belief, config.alpha))
}

pub(crate) fn edge_out_unchecked(stats: &GlobalStats, right: &[f64], alpha: f64) -> Array1<f64> {
    let k_alpha = stats.num_states() as f64 * alpha;
    stats
        .trans
        .rows()
        .into_iter()
        .map(|row| {
            let num: f64 = row.iter().zip(right).map(|(c, q)| c * q).sum::<f64>() + alpha;
            num / (row.sum() + k_alpha)
        })
        .collect()
}

/// Surrogate parameters computed once per global-statistics snapshot and
/// shared by every subchain inferred against it.
#[derive(Debug, Clone)]
pub struct SurrogateParams {
    pub theta_hat: Array2<f64>,
    pub phi: Array2<f64>,
}

impl SurrogateParams {
    pub fn new(stats: &GlobalStats, config: &ModelConfig) -> Result<Self> {
        let theta_hat = surrogate_theta_inner(stats, config)?;
        Ok(SurrogateParams {
            theta_hat,
            phi: predictive_phi(stats, config),
        })
    }

    pub fn num_states(&self) -> usize {
        self.theta_hat.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.phi.ncols()
    }
}
