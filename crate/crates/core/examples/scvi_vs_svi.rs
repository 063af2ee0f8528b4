//! SCVI against the buffered SVI baseline under matched settings.
//!
//! Both see `L * M = 1000` tokens per update. Writes one metrics CSV per run
//! and an SVG chart of held-out log likelihood against iteration.
//!
//! ```bash
//! cargo run --release --example scvi_vs_svi -- /tmp/compare [iterations]
//! ```

use std::path::PathBuf;

use scvi_hmm::data::generate_synthetic;
use scvi_hmm::report::{emit_metrics, emit_plot};
use scvi_hmm::trainer::run_until;
use scvi_hmm::{MetricsTrace, ModelConfig, ScviTrainer, StochasticTrainer, SviTrainer, TrainConfig};

fn run(trainer: &mut dyn StochasticTrainer, iterations: u64, test: &[u32]) -> scvi_hmm::Result<MetricsTrace> {
    let mut trace = MetricsTrace::new();
    run_until(trainer, iterations, 10, test, &mut trace, &mut |_| {})?;
    Ok(trace)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "scvi-vs-svi".into()));
    let iterations: u64 = args.next().map_or(2000, |s| s.parse().expect("iterations"));
    std::fs::create_dir_all(&out)?;

    let (_, stream) = generate_synthetic(3, 20, 100_000, 0.5, 101)?;
    let data = stream.with_holdout(0.05)?;
    let model = ModelConfig::new(3, 20, 0.1, 0.1)?;
    let tconf = TrainConfig {
        subchain_len: 10,
        minibatch_size: 100,
        kappa: 0.5,
        iterations,
        seed: 1,
        eval_every: 10,
        ..TrainConfig::default()
    };

    let mut scvi = ScviTrainer::new(data.train_tokens(), model, tconf.clone())?;
    let scvi_trace = run(&mut scvi, iterations, data.test_tokens())?;
    let mut svi = SviTrainer::new(data.train_tokens(), model, tconf, scvi_hmm::svi::DEFAULT_BUFFER)?;
    let svi_trace = run(&mut svi, iterations, data.test_tokens())?;

    for (name, trace) in [("scvi", &scvi_trace), ("svi", &svi_trace)] {
        println!(
            "{name:<5} final {:.4}  trailing-100 mean {:.4}  {:.1}s",
            trace.last().map_or(f64::NAN, |r| r.heldout_ll_per_token),
            trace.trailing_mean(100).unwrap_or(f64::NAN),
            trace.last().map_or(0.0, |r| r.wall_seconds),
        );
        emit_metrics(trace, &out.join(format!("{name}.csv")))?;
    }
    let chart = out.join("comparison.svg");
    emit_plot(&[("scvi".into(), scvi_trace), ("svi".into(), svi_trace)], &chart)?;
    println!("wrote {}", chart.display());
    Ok(())
}
