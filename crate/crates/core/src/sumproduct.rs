//! Sum-product inference on one subchain buffered by two guarding variables.
//!
//! The factor graph is a chain `z_0 - z_1 - ... - z_L - z_{L+1}` where `z_0`
//! and `z_{L+1}` are the guards. Their beliefs enter as unary factors, the
//! first and last pairwise factors carry the guarded edge transitions, and
//! the emission weights are absorbed into the pairwise factors. Variable to
//! factor messages are eliminated, so each direction is a single recursion.
//!
//! Messages are rescaled to sum to one at every step; the removed log
//! normalizers are kept so that the partition function of the guarded joint
//! can be recovered exactly.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayViewMut1};

use crate::error::{Error, Result};
use crate::model::{check_simplex, edge_in_unchecked, edge_out_unchecked, GlobalStats, ModelConfig, SurrogateParams};

/// A length-`L` window of the observation stream together with the beliefs of
/// its two guarding variables.
#[derive(Debug, Clone, Copy)]
pub struct Subchain<'a> {
    pub index: usize,
    pub tokens: &'a [u32],
    /// Belief over the hidden state just before the window.
    pub left_guard: &'a [f64],
    /// Belief over the hidden state just after the window.
    pub right_guard: &'a [f64],
}

impl<'a> Subchain<'a> {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(Error::InvalidSubchain(format!("subchain {} has no tokens", self.index)));
        }
        if let Some(&bad) = self.tokens.iter().find(|&&x| x as usize >= config.vocab_size) {
            return Err(Error::Vocabulary {
                token: bad as usize,
                vocab_size: config.vocab_size,
            });
        }
        check_simplex(self.left_guard, config.num_states, "left guard belief")?;
        check_simplex(self.right_guard, config.num_states, "right guard belief")
    }
}

/// Messages of one direction, rescaled to sum to one.
#[derive(Debug, Clone)]
pub struct Messages {
    /// One row per message.
    pub vectors: Array2<f64>,
    /// Natural log of the normalizer removed from each row.
    pub log_scale: Vec<f64>,
}

impl Messages {
    /// Log partition function of the guarded joint.
    pub fn log_evidence(&self) -> f64 {
        self.log_scale.iter().sum()
    }
}

/// Both recursions for one subchain.
///
/// `forward` row `i` holds the message from factor `f_{i+1}` into `z_{i+1}`
/// for `i = 0..L`; `backward` row `i` holds the message from `f_{i+1}` into
/// `z_i` for `i = 0..=L`. The two boundary rows (forward into `z_{L+1}`,
/// backward into `z_0`) are stored multiplied by the guard belief, which keeps
/// them finite when a guard state has zero probability.
#[derive(Debug, Clone)]
pub struct MessageSet {
    pub forward: Messages,
    pub backward: Messages,
}

impl MessageSet {
    pub fn subchain_len(&self) -> usize {
        self.forward.vectors.nrows() - 1
    }

    /// Normalized message into `z_l`, `l` in `1..=L+1`.
    pub fn forward_at(&self, l: usize) -> ArrayView1<'_, f64> {
        self.forward.vectors.row(l - 1)
    }

    /// Normalized message from `f_{l+1}` into `z_l`, `l` in `0..=L`.
    pub fn backward_at(&self, l: usize) -> ArrayView1<'_, f64> {
        self.backward.vectors.row(l)
    }

    /// Log of the true (unscaled) forward message into `z_l` divided by the
    /// stored vector.
    pub fn forward_log_magnitude(&self, l: usize) -> f64 {
        self.forward.log_scale[..l].iter().sum()
    }

    /// Same as [`forward_log_magnitude`](Self::forward_log_magnitude) for the
    /// backward message into `z_l`.
    pub fn backward_log_magnitude(&self, l: usize) -> f64 {
        self.backward.log_scale[l..].iter().sum()
    }

    /// Log partition function read off the normalizer of `q(z_l)`.
    pub fn log_evidence_at(&self, l: usize) -> f64 {
        let dot: f64 = self
            .forward_at(l)
            .iter()
            .zip(self.backward_at(l))
            .map(|(f, b)| f * b)
            .sum();
        dot.ln() + self.forward_log_magnitude(l) + self.backward_log_magnitude(l)
    }
}

/// Variational marginals of one subchain.
#[derive(Debug, Clone)]
pub struct SubchainPosterior {
    /// Row `l-1` is `q(z_l)` for `l = 1..=L`.
    pub unary: Array2<f64>,
    /// Entry `l-2` is `q(z_{l-1}, z_l)` for `l = 2..=L`.
    pub pairwise: Vec<Array2<f64>>,
    /// Log normalizer of the guarded joint.
    pub log_evidence: f64,
}

/// Expected statistics contributed by a single subchain.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalStats {
    /// Expected inner transition counts (the `L - 1` edges within the subchain).
    pub trans: Array2<f64>,
    /// Expected emission counts, keyed by the observed word.
    pub emit: BTreeMap<u32, Array1<f64>>,
}

impl LocalStats {
    pub fn trans_mass(&self) -> f64 {
        self.trans.sum()
    }

    pub fn emit_mass(&self) -> f64 {
        self.emit.values().map(|v| v.sum()).sum()
    }

    pub fn emit_dense(&self, vocab_size: usize) -> Array2<f64> {
        let mut dense = Array2::zeros((self.trans.nrows(), vocab_size));
        for (&w, v) in &self.emit {
            dense.column_mut(w as usize).assign(v);
        }
        dense
    }

    pub fn is_finite(&self) -> bool {
        self.trans.iter().all(|v| v.is_finite()) && self.emit.values().all(|v| v.iter().all(|x| x.is_finite()))
    }
}

fn rescale(mut v: ArrayViewMut1<'_, f64>, position: usize, log_scale: &mut Vec<f64>) -> Result<()> {
    let total = v.sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegenerateMessage { position });
    }
    v /= total;
    log_scale.push(total.ln());
    Ok(())
}

fn check_inputs(sub: &Subchain<'_>, surr: &SurrogateParams, stats: &GlobalStats, config: &ModelConfig) -> Result<()> {
    stats.check_dims(config)?;
    if surr.theta_hat.dim() != (config.num_states, config.num_states)
        || surr.phi.dim() != (config.num_states, config.vocab_size)
    {
        return Err(Error::Dimension("surrogate parameters do not match the model".into()));
    }
    sub.validate(config)
}

/// Forward recursion from the left guard to the right guard.
pub fn forward_pass(
    sub: &Subchain<'_>,
    surr: &SurrogateParams,
    stats: &GlobalStats,
    config: &ModelConfig,
) -> Result<Messages> {
    check_inputs(sub, surr, stats, config)?;
    forward_unchecked(sub, surr, stats, config)
}

fn forward_unchecked(
    sub: &Subchain<'_>,
    surr: &SurrogateParams,
    stats: &GlobalStats,
    config: &ModelConfig,
) -> Result<Messages> {
    let k = config.num_states;
    let len = sub.len();
    let theta = &surr.theta_hat;
    let phi = &surr.phi;
    let mut vectors = Array2::zeros((len + 1, k));
    let mut log_scale = Vec::with_capacity(len + 1);

    let edge = edge_in_unchecked(stats, sub.left_guard, config);
    let x1 = sub.tokens[0] as usize;
    for z in 0..k {
        vectors[[0, z]] = edge[z] * phi[[z, x1]];
    }
    rescale(vectors.row_mut(0), 1, &mut log_scale)?;

    for l in 2..=len {
        let x = sub.tokens[l - 1] as usize;
        for z in 0..k {
            let mut acc = 0.0;
            for zp in 0..k {
                acc += vectors[[l - 2, zp]] * theta[[zp, z]];
            }
            vectors[[l - 1, z]] = acc * phi[[z, x]];
        }
        rescale(vectors.row_mut(l - 1), l, &mut log_scale)?;
    }

    // Into the right guard, multiplied by its belief: product form of
    // f_{L+1} * f_{L+2}, so zero-probability guard states stay finite.
    let alpha_k = config.alpha / k as f64;
    let k_alpha = k as f64 * config.alpha;
    let row_totals = stats.trans_row_sums();
    for zr in 0..k {
        let q = sub.right_guard[zr];
        let mut acc = 0.0;
        for zl in 0..k {
            acc += vectors[[len - 1, zl]] * (stats.trans[[zl, zr]] * q + alpha_k) / (row_totals[zl] + k_alpha);
        }
        vectors[[len, zr]] = acc;
    }
    rescale(vectors.row_mut(len), len + 1, &mut log_scale)?;

    Ok(Messages { vectors, log_scale })
}

/// Backward recursion from the right guard to the left guard.
pub fn backward_pass(
    sub: &Subchain<'_>,
    surr: &SurrogateParams,
    stats: &GlobalStats,
    config: &ModelConfig,
) -> Result<Messages> {
    check_inputs(sub, surr, stats, config)?;
    backward_unchecked(sub, surr, stats, config)
}

fn backward_unchecked(
    sub: &Subchain<'_>,
    surr: &SurrogateParams,
    stats: &GlobalStats,
    config: &ModelConfig,
) -> Result<Messages> {
    let k = config.num_states;
    let len = sub.len();
    let theta = &surr.theta_hat;
    let phi = &surr.phi;
    let mut vectors = Array2::zeros((len + 1, k));
    // filled from the right, reversed at the end
    let mut scales = Vec::with_capacity(len + 1);

    let edge = edge_out_unchecked(stats, sub.right_guard, config.alpha);
    vectors.row_mut(len).assign(&edge);
    rescale(vectors.row_mut(len), len, &mut scales)?;

    for l in (1..len).rev() {
        let x = sub.tokens[l] as usize;
        for z in 0..k {
            let mut acc = 0.0;
            for zn in 0..k {
                acc += theta[[z, zn]] * phi[[zn, x]] * vectors[[l + 1, zn]];
            }
            vectors[[l, z]] = acc;
        }
        rescale(vectors.row_mut(l), l, &mut scales)?;
    }

    // Into the left guard, multiplied by its belief.
    let alpha_k = config.alpha / k as f64;
    let k_alpha = k as f64 * config.alpha;
    let row_totals = stats.trans_row_sums();
    let x1 = sub.tokens[0] as usize;
    for z0 in 0..k {
        let q = sub.left_guard[z0];
        let denom = if config.normalize_inner_rows { row_totals[z0] + k_alpha } else { 1.0 };
        let mut acc = 0.0;
        for z1 in 0..k {
            acc += (q * stats.trans[[z0, z1]] + alpha_k) * phi[[z1, x1]] * vectors[[1, z1]];
        }
        vectors[[0, z0]] = acc / denom;
    }
    rescale(vectors.row_mut(0), 0, &mut scales)?;

    scales.reverse();
    Ok(Messages {
        vectors,
        log_scale: scales,
    })
}

fn normalize_in_place(mut v: ArrayViewMut1<'_, f64>, position: usize) -> Result<()> {
    let total = v.sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::DegeneratePosterior { position });
    }
    v /= total;
    Ok(())
}

/// `q(z_l)` for `l = 1..=L`, one row each.
pub fn unary_marginals(msgs: &MessageSet) -> Result<Array2<f64>> {
    let len = msgs.subchain_len();
    let k = msgs.forward.vectors.ncols();
    let mut unary = Array2::zeros((len, k));
    for l in 1..=len {
        let mut row = unary.row_mut(l - 1);
        row.assign(&(&msgs.forward_at(l) * &msgs.backward_at(l)));
        normalize_in_place(row, l)?;
    }
    Ok(unary)
}

/// `q(z_{l-1}, z_l)` over the inner edges `l = 2..=L`.
pub fn pairwise_marginals(msgs: &MessageSet, sub: &Subchain<'_>, surr: &SurrogateParams) -> Result<Vec<Array2<f64>>> {
    let len = msgs.subchain_len();
    if sub.len() != len {
        return Err(Error::Dimension(format!(
            "messages cover {len} positions but the subchain has {}",
            sub.len()
        )));
    }
    let k = surr.num_states();
    let mut tables = Vec::with_capacity(len.saturating_sub(1));
    for l in 2..=len {
        let x = sub.tokens[l - 1] as usize;
        let fwd = msgs.forward_at(l - 1);
        let bwd = msgs.backward_at(l);
        let mut table = Array2::zeros((k, k));
        for a in 0..k {
            for b in 0..k {
                table[[a, b]] = fwd[a] * surr.theta_hat[[a, b]] * surr.phi[[b, x]] * bwd[b];
            }
        }
        let total = table.sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::DegeneratePosterior { position: l });
        }
        table /= total;
        tables.push(table);
    }
    Ok(tables)
}

/// Joint beliefs over the two guarded edges: `q(z_0, z_1)` and `q(z_L, z_{L+1})`.
///
/// These are not accumulated into [`LocalStats`]; they exist for inspection
/// and for checking the message passing against enumeration.
pub fn edge_marginals(
    msgs: &MessageSet,
    sub: &Subchain<'_>,
    surr: &SurrogateParams,
    stats: &GlobalStats,
    config: &ModelConfig,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let k = config.num_states;
    let len = msgs.subchain_len();
    let alpha_k = config.alpha / k as f64;
    let k_alpha = k as f64 * config.alpha;

    let x1 = sub.tokens[0] as usize;
    let bwd1 = msgs.backward_at(1);
    let mut left = Array2::zeros((k, k));
    for z0 in 0..k {
        for z1 in 0..k {
            left[[z0, z1]] = (sub.left_guard[z0] * stats.trans[[z0, z1]] + alpha_k) * surr.phi[[z1, x1]] * bwd1[z1];
        }
    }

    let fwd = msgs.forward_at(len);
    let totals = stats.trans_row_sums();
    let mut right = Array2::zeros((k, k));
    for zl in 0..k {
        for zr in 0..k {
            right[[zl, zr]] =
                fwd[zl] * (stats.trans[[zl, zr]] * sub.right_guard[zr] + alpha_k) / (totals[zl] + k_alpha);
        }
    }

    for (table, position) in [(&mut left, 0), (&mut right, len + 1)] {
        let total = table.sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::DegeneratePosterior { position });
        }
        *table /= total;
    }
    Ok((left, right))
}

/// Collects inner transition counts and emission counts from a posterior.
pub fn local_stats(post: &SubchainPosterior, sub: &Subchain<'_>) -> Result<LocalStats> {
    let (len, k) = post.unary.dim();
    if sub.len() != len || post.pairwise.len() + 1 != len {
        return Err(Error::Dimension(format!(
            "posterior over {len} positions does not match subchain of length {}",
            sub.len()
        )));
    }
    let mut trans = Array2::zeros((k, k));
    for table in &post.pairwise {
        trans += table;
    }
    let mut emit: BTreeMap<u32, Array1<f64>> = BTreeMap::new();
    for (&x, q) in sub.tokens.iter().zip(post.unary.rows()) {
        *emit.entry(x).or_insert_with(|| Array1::zeros(k)) += &q;
    }
    Ok(LocalStats { trans, emit })
}

/// Runs both passes and returns the calibrated posterior with the messages.
pub fn run_messages(
    sub: &Subchain<'_>,
    surr: &SurrogateParams,
    stats: &GlobalStats,
    config: &ModelConfig,
) -> Result<MessageSet> {
    check_inputs(sub, surr, stats, config)?;
    Ok(MessageSet {
        forward: forward_unchecked(sub, surr, stats, config)?,
        backward: backward_unchecked(sub, surr, stats, config)?,
    })
}

/// Infers one subchain against precomputed surrogate parameters.
pub fn infer_subchain_with(
    sub: &Subchain<'_>,
    surr: &SurrogateParams,
    stats: &GlobalStats,
    config: &ModelConfig,
) -> Result<(SubchainPosterior, LocalStats)> {
    let msgs = run_messages(sub, surr, stats, config)?;
    let unary = unary_marginals(&msgs)?;
    let pairwise = pairwise_marginals(&msgs, sub, surr)?;
    let post = SubchainPosterior {
        unary,
        pairwise,
        log_evidence: msgs.log_evidence_at(1),
    };
    let stats = local_stats(&post, sub)?;
    Ok((post, stats))
}

/// Computes the surrogate parameters and infers one subchain.
pub fn infer_subchain(
    sub: &Subchain<'_>,
    stats: &GlobalStats,
    config: &ModelConfig,
) -> Result<(SubchainPosterior, LocalStats)> {
    let surr = SurrogateParams::new(stats, config)?;
    infer_subchain_with(sub, &surr, stats, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn uniform(k: usize) -> Vec<f64> {
        vec![1.0 / k as f64; k]
    }

    #[test]
    fn zero_counts_single_token_follows_emission() {
        let config = ModelConfig::new(2, 3, 0.1, 0.1).unwrap();
        let stats = GlobalStats::from_parts(Array2::zeros((2, 2)), array![[5.0, 1.0, 0.0], [1.0, 1.0, 4.0]]).unwrap();
        let g = uniform(2);
        let sub = Subchain {
            index: 0,
            tokens: &[0],
            left_guard: &g,
            right_guard: &g,
        };
        let surr = SurrogateParams::new(&stats, &config).unwrap();
        let fwd = forward_pass(&sub, &surr, &stats, &config).unwrap();
        let col = surr.phi.column(0).to_owned();
        let expected = &col / col.sum();
        for z in 0..2 {
            assert_abs_diff_eq!(fwd.vectors[[0, z]], expected[z], epsilon = 1e-15);
        }
        let bwd = backward_pass(&sub, &surr, &stats, &config).unwrap();
        assert_abs_diff_eq!(bwd.vectors[[1, 0]], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(bwd.vectors[[1, 1]], 0.5, epsilon = 1e-15);

        let (post, local) = infer_subchain(&sub, &stats, &config).unwrap();
        for z in 0..2 {
            assert_abs_diff_eq!(post.unary[[0, z]], expected[z], epsilon = 1e-14);
        }
        assert!(post.pairwise.is_empty());
        assert_eq!(local.trans_mass(), 0.0);
        assert_abs_diff_eq!(local.emit_mass(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn full_symmetry_gives_uniform_marginals() {
        let config = ModelConfig::new(3, 2, 0.5, 0.5).unwrap();
        let stats = GlobalStats::from_parts(Array2::from_elem((3, 3), 2.0), Array2::from_elem((3, 2), 1.0)).unwrap();
        let g = uniform(3);
        let sub = Subchain {
            index: 4,
            tokens: &[0, 1, 1, 0],
            left_guard: &g,
            right_guard: &g,
        };
        let (post, local) = infer_subchain(&sub, &stats, &config).unwrap();
        for v in post.unary.iter() {
            assert_abs_diff_eq!(*v, 1.0 / 3.0, epsilon = 1e-14);
        }
        for t in &post.pairwise {
            for v in t.iter() {
                assert_abs_diff_eq!(*v, 1.0 / 9.0, epsilon = 1e-14);
            }
        }
        assert_abs_diff_eq!(local.trans_mass(), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_posterior_local_trans() {
        let config = ModelConfig::new(2, 2, 1.0, 1.0).unwrap();
        let stats = GlobalStats::zeros(&config);
        let g = uniform(2);
        let sub = Subchain {
            index: 0,
            tokens: &[0, 1, 0],
            left_guard: &g,
            right_guard: &g,
        };
        let (_, local) = infer_subchain(&sub, &stats, &config).unwrap();
        for v in local.trans.iter() {
            assert_abs_diff_eq!(*v, 0.5, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(local.trans_mass(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn rank_one_theta_gives_independent_pairs() {
        // Row-identical transition counts make theta_hat rank one.
        let config = ModelConfig::new(2, 3, 0.2, 0.3).unwrap();
        let stats =
            GlobalStats::from_parts(array![[1.0, 3.0], [1.0, 3.0]], array![[4.0, 1.0, 0.5], [0.2, 2.0, 3.0]]).unwrap();
        let left = [0.3, 0.7];
        let right = [0.9, 0.1];
        let sub = Subchain {
            index: 0,
            tokens: &[0, 2, 1],
            left_guard: &left,
            right_guard: &right,
        };
        let (post, _) = infer_subchain(&sub, &stats, &config).unwrap();
        for (i, t) in post.pairwise.iter().enumerate() {
            for a in 0..2 {
                for b in 0..2 {
                    assert_abs_diff_eq!(t[[a, b]], post.unary[[i, a]] * post.unary[[i + 1, b]], epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn palindrome_mirrors_messages() {
        let config = ModelConfig::new(2, 2, 0.3, 0.3).unwrap();
        let stats = GlobalStats::from_parts(array![[4.0, 1.5], [1.5, 4.0]], array![[3.0, 1.0], [1.0, 2.0]]).unwrap();
        let g = uniform(2);
        let sub = Subchain {
            index: 0,
            tokens: &[0, 1, 1, 0],
            left_guard: &g,
            right_guard: &g,
        };
        let surr = SurrogateParams::new(&stats, &config).unwrap();
        let msgs = run_messages(&sub, &surr, &stats, &config).unwrap();
        let unary = unary_marginals(&msgs).unwrap();
        for l in 0..4 {
            for z in 0..2 {
                assert_abs_diff_eq!(unary[[l, z]], unary[[3 - l, z]], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn both_directions_agree_on_evidence() {
        let config = ModelConfig::new(3, 4, 0.1, 0.1).unwrap();
        let stats = GlobalStats::from_parts(
            array![[5.0, 1.0, 0.0], [2.0, 0.5, 3.0], [0.0, 0.0, 7.0]],
            array![[1.0, 2.0, 0.0, 4.0], [0.0, 0.0, 3.0, 1.0], [2.0, 2.0, 2.0, 0.0]],
        )
        .unwrap();
        let left = [1.0, 0.0, 0.0];
        let right = [0.0, 0.25, 0.75];
        let tokens = [3, 2, 0, 1, 1];
        let sub = Subchain {
            index: 2,
            tokens: &tokens,
            left_guard: &left,
            right_guard: &right,
        };
        let surr = SurrogateParams::new(&stats, &config).unwrap();
        let msgs = run_messages(&sub, &surr, &stats, &config).unwrap();
        let z = msgs.forward.log_evidence();
        assert_abs_diff_eq!(msgs.backward.log_evidence(), z, epsilon = 1e-12);
        for l in 1..=tokens.len() {
            assert_abs_diff_eq!(msgs.log_evidence_at(l), z, epsilon = 1e-12);
        }
    }

    #[test]
    fn long_subchain_stays_finite() {
        let config = ModelConfig::new(4, 50, 0.1, 0.1).unwrap();
        let stats = GlobalStats::from_parts(Array2::from_elem((4, 4), 10.0), Array2::from_elem((4, 50), 3.0)).unwrap();
        let tokens: Vec<u32> = (0..10_000u32).map(|i| (i * 7919) % 50).collect();
        let g = uniform(4);
        let sub = Subchain {
            index: 0,
            tokens: &tokens,
            left_guard: &g,
            right_guard: &g,
        };
        let surr = SurrogateParams::new(&stats, &config).unwrap();
        let msgs = run_messages(&sub, &surr, &stats, &config).unwrap();
        assert!(msgs.forward.log_scale.iter().all(|v| v.is_finite()));
        let z = msgs.forward.log_evidence();
        assert!(z.is_finite() && z < -1_000.0);
        let (post, local) = infer_subchain_with(&sub, &surr, &stats, &config).unwrap();
        assert!(post.unary.iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!(local.trans_mass(), 9_999.0, epsilon = 1e-8);
        assert_abs_diff_eq!(local.emit_mass(), 10_000.0, epsilon = 1e-8);
    }

    #[test]
    fn invalid_subchains_rejected() {
        let config = ModelConfig::new(2, 3, 0.1, 0.1).unwrap();
        let stats = GlobalStats::zeros(&config);
        let g = uniform(2);
        let empty = Subchain {
            index: 0,
            tokens: &[],
            left_guard: &g,
            right_guard: &g,
        };
        assert!(matches!(infer_subchain(&empty, &stats, &config), Err(Error::InvalidSubchain(_))));
        let oov = Subchain {
            tokens: &[0, 3],
            ..empty
        };
        assert!(matches!(infer_subchain(&oov, &stats, &config), Err(Error::Vocabulary { token: 3, .. })));
        let bad_guard = [0.2, 0.2];
        let bad = Subchain {
            tokens: &[0, 1],
            left_guard: &bad_guard,
            ..empty
        };
        assert!(matches!(infer_subchain(&bad, &stats, &config), Err(Error::InvalidBelief(_))));
    }
}
