//! Stochastic variational inference baseline with observation buffering.
//!
//! The variational posterior keeps Dirichlet parameters for every transition
//! and emission row. A minibatch step runs scaled forward-backward over each
//! sampled subchain widened by `b` tokens on both sides, using the
//! sub-normalized geometric-mean parameters `exp(E[log theta])`, and
//! harvests expected counts from the unbuffered center only.

use ndarray::{Array1, Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::digamma;

use crate::checkpoint::{matrix_from_rows, rows_of, Algorithm, Checkpoint, RngState};
use crate::checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
use crate::error::{Error, Result};
use crate::eval::PointParams;
use crate::markov;
use crate::model::ModelConfig;
use crate::trainer::{
    build_pool, check_training_tokens, init_global_stats_with_mass, map_batch, sample_minibatch, step_size,
    StochasticTrainer, TrainConfig,
};

/// Buffer length used in the reference experiments.
pub const DEFAULT_BUFFER: usize = 20;

/// Variational Dirichlet parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SviState {
    pub trans: Array2<f64>,
    pub emit: Array2<f64>,
}

impl SviState {
    /// Prior plus exponential noise of total mass `mass` in each table.
    pub fn init(config: &ModelConfig, mass: f64, seed: u64) -> Self {
        let noise = init_global_stats_with_mass(config, mass, seed);
        SviState {
            trans: noise.trans + config.alpha,
            emit: noise.emit + config.beta,
        }
    }

    pub fn num_states(&self) -> usize {
        self.trans.nrows()
    }

    pub fn vocab_size(&self) -> usize {
        self.emit.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.trans.nrows();
        if k == 0 || self.trans.ncols() != k || self.emit.nrows() != k {
            return Err(Error::Dimension(format!(
                "SVI state has shapes {:?} and {:?}",
                self.trans.dim(),
                self.emit.dim()
            )));
        }
        if self.trans.iter().chain(self.emit.iter()).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidState("Dirichlet parameters must be finite and > 0".into()));
        }
        Ok(())
    }

    /// Posterior-mean transition probabilities.
    pub fn mean_trans(&self) -> Array2<f64> {
        row_normalized(&self.trans)
    }

    /// Posterior means of both tables, started from the stationary
    /// distribution of the transition mean.
    pub fn point_params(&self) -> Result<PointParams> {
        self.validate()?;
        PointParams::with_stationary_init(row_normalized(&self.trans), row_normalized(&self.emit))
    }
}

fn row_normalized(m: &Array2<f64>) -> Array2<f64> {
    let sums = m.sum_axis(Axis(1)).insert_axis(Axis(1));
    m / &sums
}

fn digamma_rows(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.mapv(digamma);
    for (mut row, total) in out.rows_mut().into_iter().zip(m.sum_axis(Axis(1))) {
        row -= digamma(total);
    }
    out
}

/// `E[log theta]` and `E[log phi]` under the Dirichlet posteriors.
pub fn expected_natural_params(state: &SviState) -> Result<(Array2<f64>, Array2<f64>)> {
    state.validate()?;
    Ok((digamma_rows(&state.trans), digamma_rows(&state.emit)))
}

/// A subchain widened by a buffer on both sides.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BufferedWindow<'a> {
    /// Stream offset of the first window token.
    pub start: usize,
    pub tokens: &'a [u32],
    /// Center span, as offsets into `tokens`.
    pub center: std::ops::Range<usize>,
}

/// Window of subchain `n` of length `len` with `buffer` extra tokens on each
/// side, clipped to the stream.
pub fn buffered_subchain(tokens: &[u32], n: usize, len: usize, buffer: usize) -> Result<BufferedWindow<'_>> {
    let lo = n * len;
    let hi = lo + len;
    if len == 0 || hi > tokens.len() {
        return Err(Error::InvalidSubchain(format!(
            "subchain {n} of length {len} does not fit in {} tokens",
            tokens.len()
        )));
    }
    let start = lo.saturating_sub(buffer);
    let end = (hi + buffer).min(tokens.len());
    Ok(BufferedWindow {
        start,
        tokens: &tokens[start..end],
        center: lo - start..hi - start,
    })
}

/// Expected counts harvested from one window's center.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterCounts {
    pub trans: Array2<f64>,
    pub emit: Vec<(u32, Array1<f64>)>,
}

/// Scaled forward-backward over `window` with transition weights `a`,
/// emission weights `b` and initial distribution `init`. Returns counts for
/// transitions with both ends in the center and for center emissions.
pub fn window_counts(window: &BufferedWindow<'_>, a: &Array2<f64>, b: &Array2<f64>, init: &Array1<f64>) -> Result<CenterCounts> {
    let k = a.nrows();
    let len = window.tokens.len();
    let emit_col = |t: usize| b.column(window.tokens[t] as usize);

    let mut alpha = Array2::<f64>::zeros((len, k));
    let mut scale = vec![0.0; len];
    for (t, s) in scale.iter_mut().enumerate() {
        let mut v = if t == 0 {
            init * &emit_col(0)
        } else {
            alpha.row(t - 1).dot(a) * emit_col(t)
        };
        let c = v.sum();
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::DegenerateMessage { position: window.start + t });
        }
        v /= c;
        *s = c;
        alpha.row_mut(t).assign(&v);
    }

    let mut beta = Array2::<f64>::zeros((len, k));
    beta.row_mut(len - 1).fill(1.0);
    for t in (0..len - 1).rev() {
        let v = a.dot(&(&beta.row(t + 1) * &emit_col(t + 1))) / scale[t + 1];
        beta.row_mut(t).assign(&v);
    }

    let normalized = |v: Array1<f64>, t: usize| -> Result<Array1<f64>> {
        let s = v.sum();
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::DegeneratePosterior { position: window.start + t });
        }
        Ok(v / s)
    };

    let mut trans = Array2::<f64>::zeros((k, k));
    let mut emit = Vec::with_capacity(window.center.len());
    for t in window.center.clone() {
        let gamma = normalized(&alpha.row(t) * &beta.row(t), t)?;
        emit.push((window.tokens[t], gamma));
        if t > window.center.start {
            let right = &emit_col(t) * &beta.row(t);
            let mut xi = a.clone();
            for (i, mut row) in xi.rows_mut().into_iter().enumerate() {
                row *= alpha[[t - 1, i]];
                row *= &right;
            }
            let s = xi.sum();
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::DegeneratePosterior { position: window.start + t });
            }
            trans.scaled_add(1.0 / s, &xi);
        }
    }
    Ok(CenterCounts { trans, emit })
}

/// One SVI update from the subchains in `minibatch`.
#[allow(clippy::too_many_arguments)]
pub fn svi_step(
    state: &SviState,
    tokens: &[u32],
    minibatch: &[usize],
    rho: f64,
    len: usize,
    buffer: usize,
    config: &ModelConfig,
) -> Result<SviState> {
    svi_step_in(None, state, tokens, minibatch, rho, len, buffer, config)
}

#[allow(clippy::too_many_arguments)]
fn svi_step_in(
    pool: Option<&rayon::ThreadPool>,
    state: &SviState,
    tokens: &[u32],
    minibatch: &[usize],
    rho: f64,
    len: usize,
    buffer: usize,
    config: &ModelConfig,
) -> Result<SviState> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidConfig(format!("step size {rho} is not in (0, 1]")));
    }
    if minibatch.is_empty() {
        return Err(Error::EmptyData("minibatch is empty".into()));
    }
    if len < 2 {
        return Err(Error::InvalidConfig("subchain length must be at least 2".into()));
    }
    let k = config.num_states;
    if state.num_states() != k || state.vocab_size() != config.vocab_size {
        return Err(Error::Dimension("SVI state does not match the model configuration".into()));
    }
    let (elog_a, elog_b) = expected_natural_params(state)?;
    let a = elog_a.mapv(f64::exp);
    let b = elog_b.mapv(f64::exp);
    let init = markov::stationary(&state.mean_trans())?;

    let counts = map_batch(pool, minibatch, |n| {
        let window = buffered_subchain(tokens, n, len, buffer)?;
        window_counts(&window, &a, &b, &init)
    })?;

    let m = minibatch.len() as f64;
    let num_subchains = tokens.len() / len;
    let trans_scale = tokens.len() as f64 / (len - 1) as f64 / m;
    let emit_scale = num_subchains as f64 / m;

    let mut trans_target = Array2::from_elem((k, k), config.alpha);
    let mut emit_target = Array2::from_elem((k, config.vocab_size), config.beta);
    for c in &counts {
        trans_target.scaled_add(trans_scale, &c.trans);
        for (x, gamma) in &c.emit {
            emit_target.column_mut(*x as usize).scaled_add(emit_scale, gamma);
        }
    }

    let next = SviState {
        trans: &state.trans * (1.0 - rho) + trans_target * rho,
        emit: &state.emit * (1.0 - rho) + emit_target * rho,
    };
    next.validate()?;
    Ok(next)
}

/// SVI over one training stream, stepped through [`StochasticTrainer`].
pub struct SviTrainer<'a> {
    model: ModelConfig,
    train: TrainConfig,
    buffer: usize,
    tokens: &'a [u32],
    num_subchains: usize,
    state: SviState,
    rng: ChaCha8Rng,
    iteration: u64,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> SviTrainer<'a> {
    pub fn new(tokens: &'a [u32], model: ModelConfig, train: TrainConfig, buffer: usize) -> Result<Self> {
        let num_subchains = check_training_tokens(tokens, &model, &train)?;
        let state = SviState::init(&model, train.init_scale * tokens.len() as f64, train.seed);
        Ok(SviTrainer {
            rng: ChaCha8Rng::seed_from_u64(train.seed),
            model,
            train,
            buffer,
            tokens,
            num_subchains,
            state,
            iteration: 0,
            pool: None,
        })
    }

    pub fn from_checkpoint(tokens: &'a [u32], ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.algorithm != Algorithm::Svi {
            return Err(Error::InvalidConfig(format!("checkpoint holds a {} run", ckpt.algorithm)));
        }
        ckpt.check_train_len(tokens.len())?;
        let buffer = ckpt.svi_buffer.unwrap_or(DEFAULT_BUFFER);
        let mut trainer = SviTrainer::new(tokens, ckpt.model, ckpt.train.clone(), buffer)?;
        trainer.state = SviState {
            trans: matrix_from_rows(&ckpt.trans, ckpt.model.num_states, "trans")?,
            emit: matrix_from_rows(&ckpt.emit, ckpt.model.vocab_size, "emit")?,
        };
        trainer.state.validate()?;
        trainer.iteration = ckpt.iteration;
        trainer.rng = ckpt.rng.restore();
        Ok(trainer)
    }

    pub fn with_threads(mut self, threads: usize) -> Result<Self> {
        self.pool = build_pool(threads)?;
        Ok(self)
    }

    pub fn state(&self) -> &SviState {
        &self.state
    }

    pub fn buffer(&self) -> usize {
        self.buffer
    }

    pub fn set_iterations(&mut self, iterations: u64) {
        self.train.iterations = iterations;
    }

    pub fn num_subchains(&self) -> usize {
        self.num_subchains
    }

    pub fn step(&mut self) -> Result<f64> {
        let rho = step_size(self.iteration, self.train.kappa);
        let batch = sample_minibatch(&mut self.rng, self.num_subchains, self.train.minibatch_size)?;
        self.state = svi_step_in(
            self.pool.as_ref(),
            &self.state,
            self.tokens,
            &batch,
            rho,
            self.train.subchain_len,
            self.buffer,
            &self.model,
        )
        .map_err(|e| match e {
            Error::InvalidState(_) => Error::NonFinite {
                what: "SVI Dirichlet parameters",
                iteration: self.iteration,
                subchain: None,
            },
            other => other,
        })?;
        self.iteration += 1;
        Ok(rho)
    }
}

impl StochasticTrainer for SviTrainer<'_> {
    fn iteration(&self) -> u64 {
        self.iteration
    }

    fn step(&mut self) -> Result<f64> {
        SviTrainer::step(self)
    }

    fn point_params(&self) -> Result<PointParams> {
        self.state.point_params()
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            magic: CHECKPOINT_MAGIC.into(),
            version: CHECKPOINT_VERSION,
            algorithm: Algorithm::Svi,
            model: self.model,
            train: self.train.clone(),
            svi_buffer: Some(self.buffer),
            iteration: self.iteration,
            train_len: self.tokens.len() as u64,
            trans: rows_of(&self.state.trans),
            emit: rows_of(&self.state.emit),
            guards: None,
            rng: RngState::capture(&self.rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn digamma_examples() {
        let state = SviState {
            trans: array![[1.0, 1.0], [3.0, 3.0]],
            emit: array![[1.0, 1.0], [1.0, 1.0]],
        };
        let (a, _) = expected_natural_params(&state).unwrap();
        // psi(1) - psi(2) = -1
        assert_abs_diff_eq!(a[[0, 0]].exp(), (-1.0f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(a[[1, 0]], a[[1, 1]], epsilon = 1e-15);
        let mean = state.mean_trans();
        for (g, m) in a.iter().zip(mean.iter()) {
            assert!(g.exp() <= *m);
        }
        let bad = SviState {
            trans: array![[0.0, 1.0], [1.0, 1.0]],
            ..state
        };
        assert!(matches!(expected_natural_params(&bad), Err(Error::InvalidState(_))));
    }

    #[test]
    fn window_clipping() {
        let tokens: Vec<u32> = (0..100).collect();
        let w = buffered_subchain(&tokens, 3, 10, 0).unwrap();
        assert_eq!(w.tokens, &tokens[30..40]);
        assert_eq!(w.center, 0..10);
        let w = buffered_subchain(&tokens, 0, 10, 20).unwrap();
        assert_eq!(w.start, 0);
        assert_eq!(w.tokens.len(), 30);
        assert_eq!(w.center, 0..10);
        let w = buffered_subchain(&tokens, 9, 10, 20).unwrap();
        assert_eq!(w.start, 70);
        assert_eq!(w.center, 20..30);
        assert!(buffered_subchain(&tokens, 10, 10, 0).is_err());
    }

    #[test]
    fn center_counts_have_center_mass() {
        let tokens: Vec<u32> = (0..60).map(|i| (i * 7 % 5) as u32).collect();
        let config = ModelConfig::new(3, 5, 0.1, 0.1).unwrap();
        let state = SviState::init(&config, 60.0, 4);
        let (ea, eb) = expected_natural_params(&state).unwrap();
        let init = markov::stationary(&state.mean_trans()).unwrap();
        let w = buffered_subchain(&tokens, 2, 10, 5).unwrap();
        let c = window_counts(&w, &ea.mapv(f64::exp), &eb.mapv(f64::exp), &init).unwrap();
        assert_abs_diff_eq!(c.trans.sum(), 9.0, epsilon = 1e-10);
        assert_eq!(c.emit.len(), 10);
        for (_, g) in &c.emit {
            assert_abs_diff_eq!(g.sum(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn identical_tokens_concentrate_emissions() {
        let tokens = vec![2u32; 40];
        let config = ModelConfig::new(2, 4, 0.1, 0.1).unwrap();
        let state = SviState::init(&config, 40.0, 1);
        let next = svi_step(&state, &tokens, &[0, 1, 2, 3], 1.0, 10, 3, &config).unwrap();
        for row in next.emit.rows() {
            assert!(row[2] > 10.0 * row[0]);
            assert_abs_diff_eq!(row[0], 0.1, epsilon = 1e-12);
        }
    }

    #[test]
    fn parameters_stay_above_prior() {
        let tokens: Vec<u32> = (0..200u64).map(|i| ((i * 2654435761) >> 5) as u32 % 7).collect();
        let config = ModelConfig::new(3, 7, 0.1, 0.1).unwrap();
        let mut state = SviState::init(&config, 200.0, 2);
        for (n, rho) in [1.0, 0.5, 0.3, 1e-3].into_iter().enumerate() {
            state = svi_step(&state, &tokens, &[n, 2 * n + 1, 19], rho, 10, 20, &config).unwrap();
            assert!(state.trans.iter().all(|&v| v >= 0.1));
            assert!(state.emit.iter().all(|&v| v >= 0.1));
        }
    }

    #[test]
    fn trainer_resume_and_threads() {
        let tokens: Vec<u32> = (0..300u64).map(|i| ((i * 40503) >> 3) as u32 % 6).collect();
        let model = ModelConfig::new(3, 6, 0.1, 0.1).unwrap();
        let tc = TrainConfig {
            subchain_len: 5,
            minibatch_size: 8,
            ..TrainConfig::default()
        };
        let mut full = SviTrainer::new(&tokens, model, tc.clone(), 4).unwrap().with_threads(3).unwrap();
        for _ in 0..15 {
            full.step().unwrap();
        }
        let mut part = SviTrainer::new(&tokens, model, tc, 4).unwrap();
        for _ in 0..6 {
            part.step().unwrap();
        }
        let ckpt = Checkpoint::from_json(&part.checkpoint().to_json()).unwrap();
        let mut resumed = SviTrainer::from_checkpoint(&tokens, &ckpt).unwrap();
        for _ in 0..9 {
            resumed.step().unwrap();
        }
        assert_eq!(resumed.checkpoint(), full.checkpoint());
        let p = resumed.point_params().unwrap();
        p.validate().unwrap();
    }
}
