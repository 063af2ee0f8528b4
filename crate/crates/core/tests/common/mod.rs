//! Brute-force references shared by the integration and acceptance tests.
//! Nothing here calls into the library's inference code.
#![allow(dead_code)]

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use scvi_hmm::{GlobalStats, ModelConfig};

/// A random guarded subchain problem.
pub struct Instance {
    pub config: ModelConfig,
    pub stats: GlobalStats,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub tokens: Vec<u32>,
}

pub fn random_simplex(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

pub fn random_instance(k: usize, len: usize, w: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alpha = rng.random_range(0.05..1.0);
    let beta = rng.random_range(0.05..1.0);
    let config = ModelConfig::new(k, w, alpha, beta).unwrap();
    let trans = Array2::from_shape_simple_fn((k, k), || rng.random_range(0.01..20.0));
    let emit = Array2::from_shape_simple_fn((k, w), || rng.random_range(0.01..20.0));
    let stats = GlobalStats::from_parts(trans, emit).unwrap();
    let left = random_simplex(&mut rng, k);
    let right = random_simplex(&mut rng, k);
    let tokens = (0..len).map(|_| rng.random_range(0..w as u32)).collect();
    Instance {
        config,
        stats,
        left,
        right,
        tokens,
    }
}

/// `E[C_kk'] + alpha`, optionally divided by the row total plus `K alpha`.
pub fn theta_hat(inst: &Instance) -> Array2<f64> {
    let k = inst.config.num_states;
    let a = inst.config.alpha;
    let mut out = Array2::zeros((k, k));
    for i in 0..k {
        let row: f64 = (0..k).map(|j| inst.stats.trans[[i, j]]).sum();
        for j in 0..k {
            out[[i, j]] = inst.stats.trans[[i, j]] + a;
            if inst.config.normalize_inner_rows {
                out[[i, j]] /= row + k as f64 * a;
            }
        }
    }
    out
}

/// `(E[t_kw] + beta) / (sum_w E[t_kw] + W beta)`.
pub fn phi_hat(inst: &Instance) -> Array2<f64> {
    let (k, w) = (inst.config.num_states, inst.config.vocab_size);
    let b = inst.config.beta;
    let mut out = Array2::zeros((k, w));
    for i in 0..k {
        let row: f64 = (0..w).map(|x| inst.stats.emit[[i, x]]).sum();
        for x in 0..w {
            out[[i, x]] = (inst.stats.emit[[i, x]] + b) / (row + w as f64 * b);
        }
    }
    out
}

/// Calls `f` with every assignment in `0..k` of length `n`.
pub fn for_each_path(k: usize, n: usize, mut f: impl FnMut(&[usize])) {
    let mut z = vec![0usize; n];
    loop {
        f(&z);
        let mut i = 0;
        loop {
            if i == n {
                return;
            }
            z[i] += 1;
            if z[i] < k {
                break;
            }
            z[i] = 0;
            i += 1;
        }
    }
}

/// Marginals of the guarded joint over `(z_0, z_1..z_L, z_{L+1})`, with the
/// edge factors in product form `q(z0) E[C] + alpha/K`. With normalized rows
/// the entering factor is also divided by the `z0` row total plus `K alpha`.
pub struct Enumerated {
    pub unary: Array2<f64>,
    pub pairwise: Vec<Array2<f64>>,
    pub log_z: f64,
    /// Trans and emission counts accumulated over the enumerated marginals.
    pub trans: Array2<f64>,
    pub emit: Array2<f64>,
}

pub fn guarded_joint_weight(inst: &Instance, th: &Array2<f64>, ph: &Array2<f64>, z: &[usize]) -> f64 {
    let k = inst.config.num_states;
    let a = inst.config.alpha;
    let len = inst.tokens.len();
    let c = &inst.stats.trans;
    let (z0, zr) = (z[0], z[len + 1]);
    let mut w = inst.left[z0] * c[[z0, z[1]]] + a / k as f64;
    if inst.config.normalize_inner_rows {
        w /= (0..k).map(|j| c[[z0, j]]).sum::<f64>() + k as f64 * a;
    }
    for l in 1..=len {
        w *= ph[[z[l], inst.tokens[l - 1] as usize]];
        if l > 1 {
            w *= th[[z[l - 1], z[l]]];
        }
    }
    let zl = z[len];
    let row: f64 = (0..k).map(|j| c[[zl, j]]).sum();
    w * (inst.right[zr] * c[[zl, zr]] + a / k as f64) / (row + k as f64 * a)
}

pub fn enumerate_guarded(inst: &Instance) -> Enumerated {
    let k = inst.config.num_states;
    let len = inst.tokens.len();
    let th = theta_hat(inst);
    let ph = phi_hat(inst);
    let mut unary = Array2::<f64>::zeros((len, k));
    let mut pairwise = vec![Array2::<f64>::zeros((k, k)); len.saturating_sub(1)];
    let mut total = 0.0;
    for_each_path(k, len + 2, |z| {
        let w = guarded_joint_weight(inst, &th, &ph, z);
        total += w;
        for l in 1..=len {
            unary[[l - 1, z[l]]] += w;
            if l > 1 {
                pairwise[l - 2][[z[l - 1], z[l]]] += w;
            }
        }
    });
    unary /= total;
    for p in &mut pairwise {
        *p /= total;
    }
    let mut trans = Array2::zeros((k, k));
    for p in &pairwise {
        trans += p;
    }
    let mut emit = Array2::zeros((k, inst.config.vocab_size));
    for l in 0..len {
        for s in 0..k {
            emit[[s, inst.tokens[l] as usize]] += unary[[l, s]];
        }
    }
    Enumerated {
        unary,
        pairwise,
        log_z: total.ln(),
        trans,
        emit,
    }
}

/// Unnormalized collapsed posterior of the subchain alone, with the guard
/// sums written as `sum_z0 q(z0) (E[C] + alpha / (K q(z0)))`. Guards must be
/// strictly positive.
pub fn collapsed_subchain_weight(inst: &Instance, th: &Array2<f64>, ph: &Array2<f64>, z: &[usize]) -> f64 {
    let k = inst.config.num_states;
    let a = inst.config.alpha;
    let c = &inst.stats.trans;
    let kf = k as f64;
    let len = z.len();
    let enter: f64 = (0..k)
        .map(|z0| {
            let denom = if inst.config.normalize_inner_rows {
                (0..k).map(|j| c[[z0, j]]).sum::<f64>() + kf * a
            } else {
                1.0
            };
            inst.left[z0] * (c[[z0, z[0]]] + a / (kf * inst.left[z0])) / denom
        })
        .sum();
    let zl = z[len - 1];
    let row: f64 = (0..k).map(|j| c[[zl, j]]).sum();
    let leave: f64 = (0..k)
        .map(|zr| inst.right[zr] * (c[[zl, zr]] + a / (kf * inst.right[zr])) / (row + kf * a))
        .sum();
    let mut w = enter * leave;
    for l in 0..len {
        w *= ph[[z[l], inst.tokens[l] as usize]];
        if l > 0 {
            w *= th[[z[l - 1], z[l]]];
        }
    }
    w
}

/// `log p(x)` by summing over every hidden path.
pub fn path_log_likelihood(init: &Array1<f64>, theta: &Array2<f64>, phi: &Array2<f64>, x: &[u32]) -> f64 {
    let k = init.len();
    let mut total = 0.0;
    for_each_path(k, x.len(), |z| {
        let mut p = init[z[0]] * phi[[z[0], x[0] as usize]];
        for t in 1..x.len() {
            p *= theta[[z[t - 1], z[t]]] * phi[[z[t], x[t] as usize]];
        }
        total += p;
    });
    total.ln()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-space forward-backward with arbitrary positive weights. Returns the
/// unary marginals and the pairwise marginals between `t-1` and `t`.
pub fn log_forward_backward(init: &Array1<f64>, a: &Array2<f64>, b: &Array2<f64>, x: &[u32]) -> (Array2<f64>, Vec<Array2<f64>>) {
    let k = init.len();
    let n = x.len();
    let la = a.mapv(f64::ln);
    let lb = b.mapv(f64::ln);
    let mut f = Array2::<f64>::zeros((n, k));
    for s in 0..k {
        f[[0, s]] = init[s].ln() + lb[[s, x[0] as usize]];
    }
    for t in 1..n {
        for s in 0..k {
            let terms: Vec<f64> = (0..k).map(|r| f[[t - 1, r]] + la[[r, s]]).collect();
            f[[t, s]] = log_sum_exp(&terms) + lb[[s, x[t] as usize]];
        }
    }
    let mut g = Array2::<f64>::zeros((n, k));
    for t in (0..n - 1).rev() {
        for r in 0..k {
            let terms: Vec<f64> = (0..k).map(|s| la[[r, s]] + lb[[s, x[t + 1] as usize]] + g[[t + 1, s]]).collect();
            g[[t, r]] = log_sum_exp(&terms);
        }
    }
    let log_z = log_sum_exp(&f.row(n - 1).to_vec());
    let unary = Array2::from_shape_fn((n, k), |(t, s)| (f[[t, s]] + g[[t, s]] - log_z).exp());
    let pairs = (1..n)
        .map(|t| {
            Array2::from_shape_fn((k, k), |(r, s)| {
                (f[[t - 1, r]] + la[[r, s]] + lb[[s, x[t] as usize]] + g[[t, s]] - log_z).exp()
            })
        })
        .collect();
    (unary, pairs)
}

/// Stationary distribution of a 2-state chain in closed form.
pub fn stationary_two_state(p: &Array2<f64>) -> Array1<f64> {
    let (a, b) = (p[[0, 1]], p[[1, 0]]);
    Array1::from(vec![b / (a + b), a / (a + b)])
}

pub fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    assert_eq!(a.dim(), b.dim());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Resident set size of this process in kilobytes, from /proc.
pub fn resident_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find(|l| l.starts_with("VmRSS:"))
        .and_then(|l| l.split_whitespace().nth(1))
        .and_then(|v| v.parse().ok())
}
