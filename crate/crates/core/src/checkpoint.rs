//! Versioned JSON checkpoint shared by the SCVI trainer and the SVI baseline.
//!
//! ```text
//! {
//!   "magic": "scvi-hmm-checkpoint",
//!   "version": 1,
//!   "algorithm": "scvi" | "svi",
//!   "model": { "num_states", "vocab_size", "alpha", "beta", "normalize_inner_rows" },
//!   "train": { "subchain_len", "minibatch_size", "kappa", "iterations", "seed",
//!              "guard_policy", "init_scale", "eval_every" },
//!   "svi_buffer": 20,                      // svi only
//!   "iteration": 500,                      // completed minibatch updates
//!   "train_len": 95000,                    // training tokens the run was started on
//!   "trans": [[...K...], ...K rows],       // scvi: E[C]; svi: Dirichlet parameters
//!   "emit":  [[...W...], ...K rows],       // scvi: E[t]; svi: Dirichlet parameters
//!   "guards": { "first": [[..K..]; N], "last": [[..K..]; N] },   // scvi, stored policy only
//!   "rng": { "seed": [32 bytes], "stream": 0, "word_pos": 1234 }
//! }
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{point_estimates, PointParams};
use crate::model::{GlobalStats, ModelConfig};
use crate::report::write_atomic;
use crate::svi::SviState;
use crate::trainer::TrainConfig;

pub const CHECKPOINT_MAGIC: &str = "scvi-hmm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Scvi,
    Svi,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Scvi => "scvi",
            Algorithm::Svi => "svi",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardSnapshot {
    pub first: Vec<Vec<f64>>,
    pub last: Vec<Vec<f64>>,
}

/// Position of a ChaCha8 generator in its keystream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub magic: String,
    pub version: u32,
    pub algorithm: Algorithm,
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svi_buffer: Option<usize>,
    pub iteration: u64,
    pub train_len: u64,
    pub trans: Vec<Vec<f64>>,
    pub emit: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub guards: Option<GuardSnapshot>,
    pub rng: RngState,
}

pub(crate) fn rows_of(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<Array2<f64>> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{what} rows must have {ncols} entries")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), ncols), flat).map_err(|e| Error::Dimension(format!("{what}: {e}")))
}

impl Checkpoint {
    /// Serializes to compact JSON.
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes).map_err(|e| match e {
            Error::Corrupt { reason, .. } => Error::corrupt(path, reason),
            other => Error::corrupt(path, other.to_string()),
        })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::corrupt("<checkpoint>", e.to_string()))?;
        if value.get("magic").and_then(|m| m.as_str()) != Some(CHECKPOINT_MAGIC) {
            return Err(Error::corrupt("<checkpoint>", "bad checkpoint magic"));
        }
        let ckpt: Checkpoint =
            serde_json::from_value(value).map_err(|e| Error::corrupt("<checkpoint>", e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::corrupt(
                "<checkpoint>",
                format!("unsupported checkpoint version {}", ckpt.version),
            ));
        }
        ckpt.validate()?;
        Ok(ckpt)
    }

    fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        let k = self.model.num_states;
        if self.trans.len() != k || self.emit.len() != k {
            return Err(Error::Dimension(format!("expected {k} rows of statistics")));
        }
        matrix_from_rows(&self.trans, k, "trans")?;
        matrix_from_rows(&self.emit, self.model.vocab_size, "emit")?;
        if let Some(g) = &self.guards {
            if g.first.len() != g.last.len() || g.first.iter().chain(&g.last).any(|r| r.len() != k) {
                return Err(Error::Dimension("guard beliefs have inconsistent shape".into()));
            }
        }
        Ok(())
    }

    /// Fails unless the run was started on `len` training tokens.
    pub fn check_train_len(&self, len: usize) -> Result<()> {
        if self.train_len != len as u64 {
            return Err(Error::Dimension(format!(
                "checkpoint was trained on {} tokens, the training stream has {len}",
                self.train_len
            )));
        }
        Ok(())
    }

    /// SCVI global statistics stored in the checkpoint.
    pub fn global_stats(&self) -> Result<GlobalStats> {
        GlobalStats::from_parts(
            matrix_from_rows(&self.trans, self.model.num_states, "trans")?,
            matrix_from_rows(&self.emit, self.model.vocab_size, "emit")?,
        )
    }

    /// SVI variational Dirichlet parameters stored in the checkpoint.
    pub fn svi_state(&self) -> Result<SviState> {
        let state = SviState {
            trans: matrix_from_rows(&self.trans, self.model.num_states, "trans")?,
            emit: matrix_from_rows(&self.emit, self.model.vocab_size, "emit")?,
        };
        state.validate()?;
        Ok(state)
    }

    /// Point parameters used for held-out evaluation.
    pub fn point_params(&self) -> Result<PointParams> {
        match self.algorithm {
            Algorithm::Scvi => point_estimates(&self.global_stats()?, &self.model),
            Algorithm::Svi => self.svi_state()?.point_params(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let _: u64 = rng.random();
        Checkpoint {
            magic: CHECKPOINT_MAGIC.into(),
            version: CHECKPOINT_VERSION,
            algorithm: Algorithm::Scvi,
            model: ModelConfig::new(2, 3, 0.1, 0.1).unwrap(),
            train: TrainConfig::default(),
            svi_buffer: None,
            iteration: 7,
            train_len: 20,
            trans: vec![vec![1.0 / 3.0, 2.5], vec![0.1, 1e-300]],
            emit: vec![vec![0.0, 1.0, 2.0], vec![3.0, 4.0, 5.0]],
            guards: Some(GuardSnapshot {
                first: vec![vec![0.5, 0.5]],
                last: vec![vec![0.25, 0.75]],
            }),
            rng: RngState::capture(&rng),
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let c = sample();
        let back = Checkpoint::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let mut a = back.rng.restore();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let _: u64 = rng.random();
        assert_eq!(a.random::<u64>(), rng.random::<u64>());
    }

    #[test]
    fn bad_magic_is_corrupt() {
        let mut v: serde_json::Value = serde_json::from_slice(&sample().to_json()).unwrap();
        v["magic"] = "something-else".into();
        let err = Checkpoint::from_json(&serde_json::to_vec(&v).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Corrupt { .. }));
        assert!(matches!(Checkpoint::from_json(b"not json"), Err(Error::Corrupt { .. })));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut c = sample();
        c.emit[1].pop();
        assert!(Checkpoint::from_json(&c.to_json()).is_err());
    }

    #[test]
    fn load_missing_is_io_error() {
        let err = Checkpoint::load(Path::new("/nonexistent/ckpt.json")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
