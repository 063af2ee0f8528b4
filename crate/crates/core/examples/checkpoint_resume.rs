//! Interrupt a run, resume from its checkpoint, and compare with a run that
//! was never interrupted. Works the same for both algorithms.

use scvi_hmm::data::generate_synthetic;
use scvi_hmm::{Checkpoint, ScviTrainer, StochasticTrainer, SviTrainer, TrainConfig, ModelConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (_, stream) = generate_synthetic(3, 10, 20_000, 0.5, 5)?;
    let tokens = &stream.tokens;
    let model = ModelConfig::new(3, 10, 0.1, 0.1)?;
    let tconf = TrainConfig {
        subchain_len: 8,
        minibatch_size: 16,
        seed: 9,
        iterations: 200,
        ..TrainConfig::default()
    };
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("checkpoint.json");

    // straight through
    let mut full = ScviTrainer::new(tokens, model, tconf.clone())?;
    for _ in 0..200 {
        full.step()?;
    }

    // stop at 80, save, reload, finish
    let mut part = ScviTrainer::new(tokens, model, tconf.clone())?;
    for _ in 0..80 {
        part.step()?;
    }
    part.checkpoint().save(&path)?;
    let ckpt = Checkpoint::load(&path)?;
    println!("saved at iteration {} ({} bytes)", ckpt.iteration, std::fs::metadata(&path)?.len());
    let mut resumed = ScviTrainer::from_checkpoint(tokens, &ckpt)?;
    while resumed.iteration() < 200 {
        resumed.step()?;
    }
    let same = full.checkpoint().to_json() == resumed.checkpoint().to_json();
    println!("scvi: resumed run identical to uninterrupted run: {same}");

    let mut full = SviTrainer::new(tokens, model, tconf.clone(), 20)?;
    let mut part = SviTrainer::new(tokens, model, tconf, 20)?;
    for _ in 0..200 {
        full.step()?;
    }
    for _ in 0..80 {
        part.step()?;
    }
    let ckpt = Checkpoint::from_json(&part.checkpoint().to_json())?;
    let mut resumed = SviTrainer::from_checkpoint(tokens, &ckpt)?;
    while resumed.iteration() < 200 {
        resumed.step()?;
    }
    let same = full.checkpoint().to_json() == resumed.checkpoint().to_json();
    println!("svi:  resumed run identical to uninterrupted run: {same}");
    Ok(())
}
