//! Train SCVI on a synthetic stream and compare with the generating model.
//!
//! ```bash
//! cargo run --release --example synthetic_recovery -- [iterations] [train-seed] [data-seed]
//! ```

use scvi_hmm::data::generate_synthetic;
use scvi_hmm::{predictive_log_likelihood, trainer, ModelConfig, TrainConfig};

fn main() -> scvi_hmm::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations: u64 = args.next().map_or(2000, |s| s.parse().expect("iterations"));
    let seed: u64 = args.next().map_or(7, |s| s.parse().expect("train seed"));
    let data_seed: u64 = args.next().map_or(2024, |s| s.parse().expect("data seed"));

    let (truth, stream) = generate_synthetic(3, 20, 100_000, 0.5, data_seed)?;
    let data = stream.with_holdout(0.05)?;
    let baseline = predictive_log_likelihood(&truth, data.test_tokens())?;
    println!(
        "{} training tokens, {} held out; generating model scores {baseline:.4} nats/token",
        data.train_tokens().len(),
        data.test_tokens().len()
    );

    let model = ModelConfig::new(3, 20, 0.1, 0.1)?;
    let tconf = TrainConfig {
        subchain_len: 10,
        minibatch_size: 100,
        kappa: 0.5,
        iterations,
        seed,
        eval_every: 100,
        ..TrainConfig::default()
    };
    let (stats, trace) = trainer::train(&data, &model, &tconf, |row| {
        println!(
            "iter {:>5}  rho {:.4}  held-out {:.4}  ({:.1}s)",
            row.iteration, row.rho, row.heldout_ll_per_token, row.wall_seconds
        );
    })?;

    let fit = scvi_hmm::point_estimates(&stats, &model)?;
    let last = trace.last().expect("at least one evaluation").heldout_ll_per_token;
    println!("gap to the generating model: {:.4} nats/token", baseline - last);
    // states are only identified up to relabelling
    println!("true transitions\n{:.3}\nlearned transitions\n{:.3}", truth.theta, fit.theta);
    Ok(())
}
