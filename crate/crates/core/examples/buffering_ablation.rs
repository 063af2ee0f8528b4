//! Guard policies at a short subchain length.
//!
//! At `L = 2` every subchain has one inner edge and two edges to its guards,
//! so what the guards believe matters most here. Runs the same stream and
//! seed with stored, stationary and uniform guards.
//!
//! ```bash
//! cargo run --release --example buffering_ablation -- [iterations] [seeds]
//! ```

use scvi_hmm::data::generate_synthetic;
use scvi_hmm::trainer::run_until;
use scvi_hmm::{predictive_log_likelihood, GuardPolicy, MetricsTrace, ModelConfig, ScviTrainer, TrainConfig};

fn main() -> scvi_hmm::Result<()> {
    let mut args = std::env::args().skip(1);
    let iterations: u64 = args.next().map_or(2000, |s| s.parse().expect("iterations"));
    let seeds: u64 = args.next().map_or(3, |s| s.parse().expect("seeds"));
    let model = ModelConfig::new(3, 20, 0.1, 0.1)?;

    println!("seed  truth     stored    stationary uniform");
    for seed in 1..=seeds {
        let (truth, stream) = generate_synthetic(3, 20, 100_000, 0.5, seed)?;
        let data = stream.with_holdout(0.05)?;
        let mut line = format!("{seed:<5} {:.4}", predictive_log_likelihood(&truth, data.test_tokens())?);
        for policy in [GuardPolicy::Stored, GuardPolicy::Stationary, GuardPolicy::Uniform] {
            let tconf = TrainConfig {
                subchain_len: 2,
                minibatch_size: 500,
                kappa: 0.5,
                iterations,
                seed,
                guard_policy: policy,
                eval_every: 10,
                ..TrainConfig::default()
            };
            let mut trainer = ScviTrainer::new(data.train_tokens(), model, tconf)?;
            let mut trace = MetricsTrace::new();
            run_until(&mut trainer, iterations, 10, data.test_tokens(), &mut trace, &mut |_| {})?;
            // mean over the last 100 iterations
            line += &format!("   {:.4}", trace.trailing_mean(100).unwrap_or(f64::NAN));
        }
        println!("{line}");
    }
    Ok(())
}
