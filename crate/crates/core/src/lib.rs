//! Stochastic collapsed variational inference (SCVI) for hidden Markov models
//! trained on one long discrete sequence.
//!
//! The sequence is cut into length-`L` subchains. Each minibatch step infers
//! a few subchains by sum-product message passing against surrogate
//! parameters derived from the global expected counts, with the two
//! variables just outside each subchain ("guards") buffering its edges, and
//! folds the local counts back with a decaying step size. A standard SVI
//! baseline with flanking-observation buffering is included for comparison.
//!
//! ## Examples
//!
//! ```text
//! examples/
//! ├── subchain_inference.rs   # guarded message passing on one subchain
//! ├── synthetic_recovery.rs   # train on a synthetic stream, compare with the truth
//! ├── buffering_ablation.rs   # stored vs uniform vs stationary guards at L = 2
//! ├── scvi_vs_svi.rs          # matched SCVI/SVI runs, CSV traces and an SVG chart
//! ├── corpus_pipeline.rs      # text corpus -> vocab, stream cache, train/test split
//! └── checkpoint_resume.rs    # interrupt a run, resume it, compare bit for bit
//! ```
//!
//! ```bash
//! cargo run --release -p scvi-hmm --example subchain_inference
//! cargo run --release -p scvi-hmm --example synthetic_recovery
//! cargo run --release -p scvi-hmm --example scvi_vs_svi -- /tmp/compare
//! ```
//!
//! The `scvi-hmm` binary exposes the same pipeline as `prepare`, `train`,
//! `eval` and `plot` subcommands; see [`cli`].
//!
//! ## Minimal use
//!
//! ```
//! use scvi_hmm::{data, trainer, ModelConfig, TrainConfig};
//!
//! let (_truth, stream) = data::generate_synthetic(3, 12, 5_000, 1.0, 7).unwrap();
//! let stream = stream.with_holdout(0.05).unwrap();
//! let model = ModelConfig::new(3, 12, 0.1, 0.1).unwrap();
//! let tconf = TrainConfig { subchain_len: 10, minibatch_size: 20, iterations: 50, ..TrainConfig::default() };
//! let (_stats, trace) = trainer::train(&stream, &model, &tconf, |_| {}).unwrap();
//! assert!(trace.last().unwrap().heldout_ll_per_token < 0.0);
//! ```

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod markov;
pub mod model;
pub mod report;
pub mod sumproduct;
pub mod svi;
pub mod trainer;

pub use checkpoint::{Algorithm, Checkpoint};
pub use data::{TokenStream, Vocab};
pub use error::{Error, Result};
pub use eval::{point_estimates, predictive_log_likelihood, PointParams};
pub use model::{GlobalStats, ModelConfig, SurrogateParams};
pub use report::{MetricsRow, MetricsTrace};
pub use sumproduct::{infer_subchain, LocalStats, Subchain, SubchainPosterior};
pub use svi::{SviState, SviTrainer};
pub use trainer::{GuardPolicy, ScviTrainer, StochasticTrainer, TrainConfig};
