//! Text corpus to token stream, and back.
//!
//! Reads a whitespace-tokenized corpus (one sentence per line), builds the
//! vocabulary, writes the vocab and stream cache, reloads them, holds out the
//! tail and trains a small model. Without an argument a tiny built-in corpus
//! is used.
//!
//! ```bash
//! cargo run --release --example corpus_pipeline -- corpus.txt
//! ```

use scvi_hmm::data::{build_vocab, prepare_stream, read_corpus, read_stream_cache, read_vocab, write_stream_cache, write_vocab};
use scvi_hmm::{trainer, ModelConfig, TokenStream, TrainConfig};

const BUILTIN: &str = "\
the cat sat on the mat
a dog ran in the park
the dog sat on a log
a cat ran to the mat
the bird sang in a tree
a bird sat on the log
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let corpus = match std::env::args().nth(1) {
        Some(path) => path.into(),
        None => {
            let path = dir.path().join("corpus.txt");
            std::fs::write(&path, BUILTIN.repeat(40))?;
            path
        }
    };

    let sentences = read_corpus(&corpus)?;
    let vocab = build_vocab(&sentences, 1, None)?;
    let stream = prepare_stream(&sentences, &vocab, 0)?;
    println!("{} sentences, {} word types, stream length {}", sentences.len(), vocab.len(), stream.len());

    let (vocab_path, cache_path) = (dir.path().join("vocab.tsv"), dir.path().join("stream.bin"));
    write_vocab(&vocab, &vocab_path)?;
    write_stream_cache(&stream.tokens, &cache_path)?;
    let reloaded = TokenStream::new(read_stream_cache(&cache_path)?, read_vocab(&vocab_path)?)?;
    assert_eq!(reloaded.tokens, stream.tokens);
    println!("first tokens: {}", reloaded.decode(&reloaded.tokens[..12]).join(" "));

    let data = reloaded.with_holdout(0.05)?;
    let model = ModelConfig::new(4, data.vocab_size(), 0.1, 0.1)?;
    let tconf = TrainConfig {
        subchain_len: 5,
        minibatch_size: 20,
        iterations: 300,
        eval_every: 100,
        ..TrainConfig::default()
    };
    let (stats, _) = trainer::train(&data, &model, &tconf, |row| {
        println!("iter {:>4}  held-out {:.4} nats/token", row.iteration, row.heldout_ll_per_token);
    })?;

    // the most likely words under each hidden state
    let params = scvi_hmm::point_estimates(&stats, &model)?;
    for (k, row) in params.phi.rows().into_iter().enumerate() {
        let mut ids: Vec<u32> = (0..row.len() as u32).collect();
        ids.sort_by(|a, b| row[*b as usize].total_cmp(&row[*a as usize]));
        println!("state {k}: {}", data.decode(&ids[..4]).join(" "));
    }
    Ok(())
}
