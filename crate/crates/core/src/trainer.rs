//! The stochastic collapsed variational inference loop.
//!
//! Each iteration samples `M` subchains uniformly, infers them against a
//! snapshot of the global statistics, averages their local statistics, and
//! folds the average into the global statistics with step size
//! `rho_n = (1 + n)^(-kappa)`:
//!
//! ```text
//! E[C] <- (1 - rho) E[C] + rho * T / (L - 1) * mean(E[C^n])
//! E[t] <- (1 - rho) E[t] + rho * N * mean(E[t^n])
//! ```
//!
//! Guard beliefs for the subchain edges come from one of three policies; see
//! [`GuardPolicy`].

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{rows_of, Algorithm, Checkpoint, GuardSnapshot, RngState};
use crate::checkpoint::{CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
use crate::data::TokenStream;
use crate::error::{Error, Result};
use crate::eval::{point_estimates, predictive_log_likelihood, transition_means, PointParams};
use crate::markov;
use crate::model::{GlobalStats, ModelConfig, SurrogateParams};
use crate::report::{MetricsRow, MetricsTrace};
use crate::sumproduct::{infer_subchain_with, LocalStats, Subchain, SubchainPosterior};

/// Where the beliefs of a subchain's guarding variables come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GuardPolicy {
    /// Every guard is the uniform distribution.
    Uniform,
    /// Every guard is the stationary distribution of the current transition
    /// point estimate (no buffering).
    Stationary,
    /// Guards are the latest edge marginals of the neighbouring subchains.
    Stored,
}

impl fmt::Display for GuardPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GuardPolicy::Uniform => "uniform",
            GuardPolicy::Stationary => "stationary",
            GuardPolicy::Stored => "stored",
        })
    }
}

impl FromStr for GuardPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(GuardPolicy::Uniform),
            "stationary" => Ok(GuardPolicy::Stationary),
            "stored" => Ok(GuardPolicy::Stored),
            other => Err(Error::InvalidConfig(format!(
                "unknown guard policy `{other}` (expected uniform, stationary or stored)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Subchain length `L`.
    pub subchain_len: usize,
    /// Subchains per minibatch `M`.
    pub minibatch_size: usize,
    /// Forgetting rate.
    pub kappa: f64,
    /// Total number of minibatch updates.
    pub iterations: u64,
    pub seed: u64,
    pub guard_policy: GuardPolicy,
    /// Initial statistics are rescaled to `init_scale * T` total mass.
    pub init_scale: f64,
    /// Held-out evaluation cadence, in iterations.
    pub eval_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            subchain_len: 10,
            minibatch_size: 100,
            kappa: 0.5,
            iterations: 5000,
            seed: 0,
            guard_policy: GuardPolicy::Stored,
            init_scale: 1.0,
            eval_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subchain_len < 2 {
            return Err(Error::InvalidConfig(format!(
                "subchain length must be at least 2, got {}",
                self.subchain_len
            )));
        }
        if self.minibatch_size == 0 {
            return Err(Error::InvalidConfig("minibatch size must be at least 1".into()));
        }
        if !(self.kappa >= 0.5 && self.kappa <= 1.0) {
            return Err(Error::InvalidConfig(format!("kappa must lie in (0.5, 1], got {}", self.kappa)));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!("init_scale must be > 0, got {}", self.init_scale)));
        }
        if self.eval_every == 0 {
            return Err(Error::InvalidConfig("eval_every must be at least 1".into()));
        }
        Ok(())
    }

    fn warn_on_boundary_kappa(&self) {
        if self.kappa == 0.5 {
            log::warn!("kappa = 0.5 is outside (0.5, 1]; the step sizes are not square summable");
        }
    }
}

/// Step size `(1 + n)^(-kappa)`.
pub fn step_size(n: u64, kappa: f64) -> f64 {
    (1.0 + n as f64).powf(-kappa)
}

/// Exponentially distributed initial statistics with total mass `T` in each
/// of the transition and emission tables.
pub fn init_global_stats(config: &ModelConfig, total_len: usize, seed: u64) -> GlobalStats {
    init_global_stats_with_mass(config, total_len as f64, seed)
}

pub fn init_global_stats_with_mass(config: &ModelConfig, mass: f64, seed: u64) -> GlobalStats {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // keep initialization off the stream used for minibatch sampling
    rng.set_stream(1);
    let mut draw = |rows, cols| {
        let mut m = Array2::from_shape_simple_fn((rows, cols), || rng.sample::<f64, _>(Exp1));
        let total = m.sum();
        m *= mass / total;
        m
    };
    let trans = draw(config.num_states, config.num_states);
    let emit = draw(config.num_states, config.vocab_size);
    GlobalStats { trans, emit }
}

/// `m` subchain indices drawn uniformly with replacement from `0..n`.
pub fn sample_minibatch<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::EmptyData("no subchains to sample from".into()));
    }
    Ok((0..m).map(|_| rng.random_range(0..n)).collect())
}

/// Folds the mean of a minibatch of local statistics into the global
/// statistics with weight `rho`.
pub fn update_global(
    stats: &mut GlobalStats,
    batch: &[LocalStats],
    rho: f64,
    total_len: usize,
    subchain_len: usize,
    num_subchains: usize,
) -> Result<()> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidConfig(format!("step size {rho} is not in (0, 1]")));
    }
    if batch.is_empty() {
        return Err(Error::EmptyData("minibatch is empty".into()));
    }
    if subchain_len < 2 {
        return Err(Error::InvalidConfig("subchain length must be at least 2".into()));
    }
    let k = stats.num_states();
    let w = stats.vocab_size();
    for local in batch {
        if local.trans.dim() != (k, k) || local.emit.iter().any(|(&x, v)| x as usize >= w || v.len() != k) {
            return Err(Error::Dimension("local statistics do not match the global statistics".into()));
        }
    }

    let m = batch.len() as f64;
    let trans_weight = rho * total_len as f64 / (subchain_len - 1) as f64 / m;
    let emit_weight = rho * num_subchains as f64 / m;

    let mut trans_sum = Array2::<f64>::zeros((k, k));
    for local in batch {
        trans_sum += &local.trans;
    }
    stats.trans *= 1.0 - rho;
    stats.trans.scaled_add(trans_weight, &trans_sum);

    stats.emit *= 1.0 - rho;
    for local in batch {
        for (&x, v) in &local.emit {
            let mut col = stats.emit.column_mut(x as usize);
            col.scaled_add(emit_weight, v);
        }
    }
    Ok(())
}

/// Edge marginals of every subchain, read as guard beliefs by its neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryBeliefStore {
    k: usize,
    first: Vec<f64>,
    last: Vec<f64>,
    uniform: Vec<f64>,
}

impl BoundaryBeliefStore {
    pub fn new(num_subchains: usize, k: usize) -> Self {
        let u = 1.0 / k as f64;
        BoundaryBeliefStore {
            k,
            first: vec![u; num_subchains * k],
            last: vec![u; num_subchains * k],
            uniform: vec![u; k],
        }
    }

    pub fn len(&self) -> usize {
        self.first.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn first(&self, n: usize) -> &[f64] {
        &self.first[n * self.k..(n + 1) * self.k]
    }

    pub fn last(&self, n: usize) -> &[f64] {
        &self.last[n * self.k..(n + 1) * self.k]
    }

    /// Belief of the variable before subchain `n`: the last marginal of
    /// subchain `n - 1`, uniform at the start of the chain.
    pub fn left_guard(&self, n: usize) -> &[f64] {
        if n == 0 {
            &self.uniform
        } else {
            self.last(n - 1)
        }
    }

    /// Belief of the variable after subchain `n`, uniform at the end.
    pub fn right_guard(&self, n: usize) -> &[f64] {
        if n + 1 >= self.len() {
            &self.uniform
        } else {
            self.first(n + 1)
        }
    }

    pub fn set(&mut self, n: usize, first: &[f64], last: &[f64]) -> Result<()> {
        if n >= self.len() {
            return Err(Error::InvalidSubchain(format!(
                "subchain {n} is out of range for {} subchains",
                self.len()
            )));
        }
        if first.len() != self.k || last.len() != self.k {
            return Err(Error::Dimension(format!("guard beliefs must have {} entries", self.k)));
        }
        let k = self.k;
        self.first[n * k..(n + 1) * k].copy_from_slice(first);
        self.last[n * k..(n + 1) * k].copy_from_slice(last);
        Ok(())
    }

    /// Heap bytes held by the store.
    pub fn heap_bytes(&self) -> usize {
        (self.first.capacity() + self.last.capacity() + self.uniform.capacity()) * std::mem::size_of::<f64>()
    }

    fn snapshot(&self) -> GuardSnapshot {
        let rows = |v: &[f64]| v.chunks(self.k).map(<[f64]>::to_vec).collect();
        GuardSnapshot {
            first: rows(&self.first),
            last: rows(&self.last),
        }
    }

    fn from_snapshot(snap: &GuardSnapshot, k: usize) -> Result<Self> {
        let mut store = BoundaryBeliefStore::new(snap.first.len(), k);
        for (n, (f, l)) in snap.first.iter().zip(&snap.last).enumerate() {
            store.set(n, f, l)?;
        }
        Ok(store)
    }
}

/// Records the first and last unary marginals of subchain `n`.
pub fn update_boundary_beliefs(store: &mut BoundaryBeliefStore, n: usize, post: &SubchainPosterior) -> Result<()> {
    let len = post.unary.nrows();
    if len == 0 {
        return Err(Error::InvalidSubchain("posterior has no positions".into()));
    }
    let first = post.unary.row(0).to_vec();
    let last = post.unary.row(len - 1).to_vec();
    store.set(n, &first, &last)
}

/// A training algorithm that advances one minibatch at a time.
pub trait StochasticTrainer {
    /// Completed minibatch updates.
    fn iteration(&self) -> u64;
    /// Runs one minibatch update and returns the step size used.
    fn step(&mut self) -> Result<f64>;
    /// Parameters used for held-out evaluation.
    fn point_params(&self) -> Result<PointParams>;
    fn checkpoint(&self) -> Checkpoint;
}

/// Steps `trainer` until it has completed `until` updates, evaluating on
/// `test` every `eval_every` iterations and at the end.
pub fn run_until<T: StochasticTrainer + ?Sized>(
    trainer: &mut T,
    until: u64,
    eval_every: u64,
    test: &[u32],
    trace: &mut MetricsTrace,
    on_eval: &mut dyn FnMut(&MetricsRow),
) -> Result<()> {
    let eval_every = eval_every.max(1);
    let offset = trace.last().map_or(0.0, |r| r.wall_seconds);
    let start = Instant::now();
    while trainer.iteration() < until {
        let rho = trainer.step()?;
        let n = trainer.iteration();
        if !test.is_empty() && (n.is_multiple_of(eval_every) || n == until) {
            let ll = predictive_log_likelihood(&trainer.point_params()?, test)?;
            if !ll.is_finite() {
                return Err(Error::NonFinite {
                    what: "held-out log likelihood",
                    iteration: n,
                    subchain: None,
                });
            }
            let row = MetricsRow {
                iteration: n,
                wall_seconds: offset + start.elapsed().as_secs_f64(),
                rho,
                heldout_ll_per_token: ll,
            };
            trace.push(row)?;
            on_eval(&row);
        }
    }
    Ok(())
}

pub(crate) fn build_pool(threads: usize) -> Result<Option<rayon::ThreadPool>> {
    if threads <= 1 {
        return Ok(None);
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map(Some)
        .map_err(|e| Error::InvalidConfig(format!("cannot start {threads} workers: {e}")))
}

/// Runs `work` over the batch, in parallel when a pool is present. Results
/// come back in batch order either way.
pub(crate) fn map_batch<T, F>(pool: Option<&rayon::ThreadPool>, batch: &[usize], work: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    match pool {
        Some(pool) => pool.install(|| batch.par_iter().map(|&n| work(n)).collect()),
        None => batch.iter().map(|&n| work(n)).collect(),
    }
}

struct Inferred {
    index: usize,
    first: Vec<f64>,
    last: Vec<f64>,
    local: LocalStats,
}

/// SCVI over one training stream.
pub struct ScviTrainer<'a> {
    model: ModelConfig,
    train: TrainConfig,
    tokens: &'a [u32],
    num_subchains: usize,
    stats: GlobalStats,
    store: Option<BoundaryBeliefStore>,
    uniform: Vec<f64>,
    rng: ChaCha8Rng,
    iteration: u64,
    pool: Option<rayon::ThreadPool>,
}

pub(crate) fn check_training_tokens(tokens: &[u32], model: &ModelConfig, train: &TrainConfig) -> Result<usize> {
    model.validate()?;
    train.validate()?;
    let n = tokens.len() / train.subchain_len;
    if n == 0 {
        return Err(Error::EmptyData(format!(
            "{} training tokens cannot hold a subchain of length {}",
            tokens.len(),
            train.subchain_len
        )));
    }
    if let Some(&bad) = tokens.iter().find(|&&x| x as usize >= model.vocab_size) {
        return Err(Error::Vocabulary {
            token: bad as usize,
            vocab_size: model.vocab_size,
        });
    }
    Ok(n)
}

impl<'a> ScviTrainer<'a> {
    pub fn new(tokens: &'a [u32], model: ModelConfig, train: TrainConfig) -> Result<Self> {
        let num_subchains = check_training_tokens(tokens, &model, &train)?;
        train.warn_on_boundary_kappa();
        let stats = init_global_stats_with_mass(&model, train.init_scale * tokens.len() as f64, train.seed);
        let store = (train.guard_policy == GuardPolicy::Stored)
            .then(|| BoundaryBeliefStore::new(num_subchains, model.num_states));
        Ok(ScviTrainer {
            uniform: vec![1.0 / model.num_states as f64; model.num_states],
            rng: ChaCha8Rng::seed_from_u64(train.seed),
            model,
            train,
            tokens,
            num_subchains,
            stats,
            store,
            iteration: 0,
            pool: None,
        })
    }

    /// Restores a trainer from a checkpoint written by [`StochasticTrainer::checkpoint`].
    pub fn from_checkpoint(tokens: &'a [u32], ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.algorithm != Algorithm::Scvi {
            return Err(Error::InvalidConfig(format!("checkpoint holds a {} run", ckpt.algorithm)));
        }
        ckpt.check_train_len(tokens.len())?;
        let mut trainer = ScviTrainer::new(tokens, ckpt.model, ckpt.train.clone())?;
        trainer.stats = ckpt.global_stats()?;
        trainer.iteration = ckpt.iteration;
        trainer.rng = ckpt.rng.restore();
        if trainer.train.guard_policy == GuardPolicy::Stored {
            let snap = ckpt
                .guards
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("checkpoint lacks stored guard beliefs".into()))?;
            if snap.first.len() != trainer.num_subchains {
                return Err(Error::Dimension(format!(
                    "checkpoint has guards for {} subchains, stream has {}",
                    snap.first.len(),
                    trainer.num_subchains
                )));
            }
            trainer.store = Some(BoundaryBeliefStore::from_snapshot(snap, trainer.model.num_states)?);
        }
        Ok(trainer)
    }

    /// Number of worker threads used for subchain inference within a
    /// minibatch. Results do not depend on it.
    pub fn with_threads(mut self, threads: usize) -> Result<Self> {
        self.pool = build_pool(threads)?;
        Ok(self)
    }

    pub fn stats(&self) -> &GlobalStats {
        &self.stats
    }

    pub fn into_stats(self) -> GlobalStats {
        self.stats
    }

    pub fn set_stats(&mut self, stats: GlobalStats) -> Result<()> {
        stats.check_dims(&self.model)?;
        stats.validate()?;
        self.stats = stats;
        Ok(())
    }

    pub fn boundary_store(&self) -> Option<&BoundaryBeliefStore> {
        self.store.as_ref()
    }

    pub fn model(&self) -> &ModelConfig {
        &self.model
    }

    pub fn train_config(&self) -> &TrainConfig {
        &self.train
    }

    /// Sets the target iteration count recorded in checkpoints.
    pub fn set_iterations(&mut self, iterations: u64) {
        self.train.iterations = iterations;
    }

    pub fn num_subchains(&self) -> usize {
        self.num_subchains
    }

    /// Bytes of trainer-owned state that persists across iterations: global
    /// statistics, guard beliefs and bookkeeping. The token stream is
    /// borrowed and not counted.
    pub fn state_bytes(&self) -> usize {
        let f = std::mem::size_of::<f64>();
        std::mem::size_of::<Self>()
            + (self.stats.trans.len() + self.stats.emit.len() + self.uniform.capacity()) * f
            + self.store.as_ref().map_or(0, BoundaryBeliefStore::heap_bytes)
    }

    fn guards_for_batch(&self) -> Result<Option<Vec<f64>>> {
        match self.train.guard_policy {
            GuardPolicy::Stationary => {
                let pi: Array1<f64> = markov::stationary(&transition_means(&self.stats, self.model.alpha))?;
                // renormalize away rounding so the guard passes the simplex check
                let total = pi.sum();
                Ok(Some(pi.iter().map(|p| p / total).collect()))
            }
            _ => Ok(None),
        }
    }

    /// Runs one minibatch update against the current snapshot.
    pub fn step(&mut self) -> Result<f64> {
        let n = self.iteration;
        let rho = step_size(n, self.train.kappa);
        let batch = sample_minibatch(&mut self.rng, self.num_subchains, self.train.minibatch_size)?;
        let surr = SurrogateParams::new(&self.stats, &self.model)?;
        let stationary = self.guards_for_batch()?;

        let len = self.train.subchain_len;
        let (tokens, stats, model, store) = (self.tokens, &self.stats, &self.model, self.store.as_ref());
        let uniform = self.uniform.as_slice();
        let work = |idx: usize| -> Result<Inferred> {
            let (left, right) = match (&stationary, store) {
                (Some(pi), _) => (pi.as_slice(), pi.as_slice()),
                (None, Some(store)) => (store.left_guard(idx), store.right_guard(idx)),
                (None, None) => (uniform, uniform),
            };
            let sub = Subchain {
                index: idx,
                tokens: &tokens[idx * len..(idx + 1) * len],
                left_guard: left,
                right_guard: right,
            };
            let (post, local) = infer_subchain_with(&sub, &surr, stats, model).inspect_err(|e| {
                log::error!("iteration {n}, subchain {idx}: {e}");
            })?;
            if !local.is_finite() {
                return Err(Error::NonFinite {
                    what: "local statistics",
                    iteration: n,
                    subchain: Some(idx),
                });
            }
            Ok(Inferred {
                index: idx,
                first: post.unary.row(0).to_vec(),
                last: post.unary.row(len - 1).to_vec(),
                local,
            })
        };
        let results = map_batch(self.pool.as_ref(), &batch, work)?;

        let mut locals = Vec::with_capacity(results.len());
        let mut edges = Vec::with_capacity(results.len());
        for r in results {
            locals.push(r.local);
            edges.push((r.index, r.first, r.last));
        }
        update_global(&mut self.stats, &locals, rho, self.tokens.len(), len, self.num_subchains)?;
        if self.stats.trans.iter().chain(self.stats.emit.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "global statistics",
                iteration: n,
                subchain: None,
            });
        }
        if let Some(store) = self.store.as_mut() {
            for (idx, first, last) in &edges {
                store.set(*idx, first, last)?;
            }
        }
        self.iteration += 1;
        Ok(rho)
    }
}

impl StochasticTrainer for ScviTrainer<'_> {
    fn iteration(&self) -> u64 {
        self.iteration
    }

    fn step(&mut self) -> Result<f64> {
        ScviTrainer::step(self)
    }

    fn point_params(&self) -> Result<PointParams> {
        point_estimates(&self.stats, &self.model)
    }

    fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            magic: CHECKPOINT_MAGIC.into(),
            version: CHECKPOINT_VERSION,
            algorithm: Algorithm::Scvi,
            model: self.model,
            train: self.train.clone(),
            svi_buffer: None,
            iteration: self.iteration,
            train_len: self.tokens.len() as u64,
            trans: rows_of(&self.stats.trans),
            emit: rows_of(&self.stats.emit),
            guards: self.store.as_ref().map(BoundaryBeliefStore::snapshot),
            rng: RngState::capture(&self.rng),
        }
    }
}

/// Trains SCVI on the stream's training prefix for `tconf.iterations`
/// updates, evaluating on its held-out suffix. Every evaluation is passed to
/// `on_eval` as it happens.
pub fn train(
    data: &TokenStream,
    mconf: &ModelConfig,
    tconf: &TrainConfig,
    mut on_eval: impl FnMut(&MetricsRow),
) -> Result<(GlobalStats, MetricsTrace)> {
    let mut trainer = ScviTrainer::new(data.train_tokens(), *mconf, tconf.clone())?;
    let mut trace = MetricsTrace::new();
    run_until(
        &mut trainer,
        tconf.iterations,
        tconf.eval_every,
        data.test_tokens(),
        &mut trace,
        &mut on_eval,
    )?;
    Ok((trainer.into_stats(), trace))
}
