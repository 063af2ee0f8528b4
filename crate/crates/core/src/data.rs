//! Corpus handling: vocabulary, the single concatenated token stream, the
//! held-out split, on-disk caches, and a synthetic HMM generator.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::eval::PointParams;
use crate::markov;
use crate::report::write_atomic;

/// End-of-sentence symbol, always index 0.
pub const EOS: &str = "</s>";
/// Replacement for rare or unseen words, index 1 when present.
pub const UNK: &str = "<unk>";

/// Magic bytes opening a stream cache file.
pub const STREAM_MAGIC: [u8; 8] = *b"SCVISTRM";

#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, u32>,
    unk: Option<u32>,
}

impl Vocab {
    /// Builds a vocabulary from words listed in index order. The first word
    /// must be [`EOS`].
    pub fn from_words(words: Vec<String>) -> Result<Self> {
        if words.first().map(String::as_str) != Some(EOS) {
            return Err(Error::InvalidConfig(format!("vocabulary must start with `{EOS}`")));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i as u32).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate vocabulary entry `{w}`")));
            }
        }
        let unk = index.get(UNK).copied();
        Ok(Vocab { words, index, unk })
    }

    /// `EOS` followed by `w1 .. w{size-1}`; used for synthetic streams.
    pub fn numbered(size: usize) -> Self {
        let words = std::iter::once(EOS.to_string())
            .chain((1..size).map(|i| format!("w{i}")))
            .collect();
        Vocab::from_words(words).expect("numbered vocabulary is well formed")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, id: u32) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Option<u32> {
        self.index.get(word).copied()
    }

    pub fn unk_id(&self) -> Option<u32> {
        self.unk
    }

    /// Index of `word`, falling back to the unknown symbol.
    pub fn encode(&self, word: &str) -> Option<u32> {
        self.id(word).or(self.unk)
    }
}

/// Frequency-ranked vocabulary; ties are broken by first appearance.
///
/// Words seen fewer than `min_count` times, or pushed out by `max_size`
/// (which counts the reserved symbols), are mapped to [`UNK`].
pub fn build_vocab(sentences: &[Vec<String>], min_count: usize, max_size: Option<usize>) -> Result<Vocab> {
    if sentences.iter().all(|s| s.is_empty()) {
        return Err(Error::EmptyData("corpus has no tokens".into()));
    }
    if let Some(m) = max_size {
        if m < 2 {
            return Err(Error::InvalidConfig(format!("max vocabulary size {m} leaves no room for words")));
        }
    }
    let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
    let mut order = 0usize;
    for word in sentences.iter().flatten() {
        if word == EOS || word == UNK {
            continue;
        }
        let entry = counts.entry(word.as_str()).or_insert_with(|| {
            order += 1;
            (0, order)
        });
        entry.0 += 1;
    }
    let mut ranked: Vec<(&str, usize, usize)> = counts.into_iter().map(|(w, (c, o))| (w, c, o)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));

    let total = ranked.len();
    ranked.retain(|&(_, c, _)| c >= min_count);
    let mut need_unk = ranked.len() < total || sentences.iter().flatten().any(|w| w == UNK);
    if let Some(m) = max_size {
        if ranked.len() + 1 > m {
            need_unk = true;
        }
        let room = if need_unk { m - 2 } else { m - 1 };
        ranked.truncate(room);
    }

    let mut words = vec![EOS.to_string()];
    if need_unk {
        words.push(UNK.to_string());
    }
    words.extend(ranked.into_iter().map(|(w, _, _)| w.to_string()));
    Vocab::from_words(words)
}

/// The single long observation sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenStream {
    pub tokens: Vec<u32>,
    pub vocab: Vocab,
    /// First index of the held-out segment; equals `tokens.len()` when
    /// nothing is held out.
    pub holdout_start: usize,
}

impl TokenStream {
    pub fn new(tokens: Vec<u32>, vocab: Vocab) -> Result<Self> {
        if let Some(&bad) = tokens.iter().find(|&&x| x as usize >= vocab.len()) {
            return Err(Error::Vocabulary {
                token: bad as usize,
                vocab_size: vocab.len(),
            });
        }
        let holdout_start = tokens.len();
        Ok(TokenStream {
            tokens,
            vocab,
            holdout_start,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Marks the final `ceil(frac * T)` tokens as held out.
    pub fn with_holdout(mut self, frac: f64) -> Result<Self> {
        self.holdout_start = self.len() - holdout_len(self.len(), frac)?;
        Ok(self)
    }

    pub fn train_tokens(&self) -> &[u32] {
        &self.tokens[..self.holdout_start]
    }

    pub fn test_tokens(&self) -> &[u32] {
        &self.tokens[self.holdout_start..]
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter().map(|&i| self.vocab.word(i).unwrap_or(UNK)).collect()
    }
}

fn holdout_len(total: usize, frac: f64) -> Result<usize> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::InvalidSplit(format!("holdout fraction {frac} is not in (0, 1)")));
    }
    let raw = frac * total as f64;
    // absorb representation error such as 0.07 * 100 = 7.000000000000001
    let test = (raw - raw * 1e-12).ceil() as usize;
    if test == 0 || test >= total {
        return Err(Error::InvalidSplit(format!(
            "holding out {test} of {total} tokens leaves an empty side"
        )));
    }
    Ok(test)
}

/// Splits the stream into a training prefix and a contiguous held-out suffix
/// of `ceil(frac * T)` tokens.
pub fn train_test_split(stream: &TokenStream, frac: f64) -> Result<(&[u32], &[u32])> {
    split_tokens(&stream.tokens, frac)
}

pub fn split_tokens(tokens: &[u32], frac: f64) -> Result<(&[u32], &[u32])> {
    let test = holdout_len(tokens.len(), frac)?;
    Ok(tokens.split_at(tokens.len() - test))
}

/// Shuffles sentences with a seeded permutation, appends [`EOS`] after each,
/// and concatenates them.
pub fn prepare_stream(sentences: &[Vec<String>], vocab: &Vocab, seed: u64) -> Result<TokenStream> {
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let total: usize = sentences.iter().map(|s| s.len() + 1).sum();
    let mut tokens = Vec::with_capacity(total);
    for i in order {
        for word in &sentences[i] {
            let id = vocab.encode(word).ok_or_else(|| {
                Error::InvalidConfig(format!("word `{word}` is not in the vocabulary and there is no `{UNK}`"))
            })?;
            tokens.push(id);
        }
        tokens.push(0);
    }
    TokenStream::new(tokens, vocab.clone())
}

fn sample_dirichlet(rng: &mut ChaCha8Rng, gamma: &Gamma<f64>, dim: usize) -> Array1<f64> {
    loop {
        let draw: Array1<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
        let total = draw.sum();
        if total > 0.0 && total.is_finite() {
            return draw / total;
        }
    }
}

fn cumulative(row: ndarray::ArrayView1<'_, f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut out: Vec<f64> = row
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    if let Some(last) = out.last_mut() {
        *last = f64::INFINITY;
    }
    out
}

fn draw(rng: &mut ChaCha8Rng, cdf: &[f64]) -> usize {
    let u: f64 = rng.random();
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Draws HMM parameters with Dirichlet(`concentration`) rows and simulates
/// `len` observations, starting from the stationary distribution.
pub fn generate_synthetic(
    num_states: usize,
    vocab_size: usize,
    len: usize,
    concentration: f64,
    seed: u64,
) -> Result<(PointParams, TokenStream)> {
    synthesize(num_states, vocab_size, len, concentration, seed, None)
}

/// [`generate_synthetic`] that also returns the hidden state sequence.
pub fn generate_synthetic_with_states(
    num_states: usize,
    vocab_size: usize,
    len: usize,
    concentration: f64,
    seed: u64,
) -> Result<(PointParams, TokenStream, Vec<u32>)> {
    let mut states = Vec::with_capacity(len);
    let (params, stream) = synthesize(num_states, vocab_size, len, concentration, seed, Some(&mut states))?;
    Ok((params, stream, states))
}

fn synthesize(
    num_states: usize,
    vocab_size: usize,
    len: usize,
    concentration: f64,
    seed: u64,
    mut states: Option<&mut Vec<u32>>,
) -> Result<(PointParams, TokenStream)> {
    if num_states < 2 || vocab_size < 2 || len == 0 {
        return Err(Error::InvalidConfig(format!(
            "synthetic data needs K >= 2, W >= 2, T >= 1 (got {num_states}, {vocab_size}, {len})"
        )));
    }
    let gamma = Gamma::new(concentration, 1.0)
        .map_err(|e| Error::InvalidConfig(format!("concentration {concentration}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut theta = Array2::zeros((num_states, num_states));
    for mut row in theta.rows_mut() {
        row.assign(&sample_dirichlet(&mut rng, &gamma, num_states));
    }
    let mut phi = Array2::zeros((num_states, vocab_size));
    for mut row in phi.rows_mut() {
        row.assign(&sample_dirichlet(&mut rng, &gamma, vocab_size));
    }
    let init = markov::stationary(&theta)?;
    let params = PointParams { theta, phi, init };

    let trans_cdf: Vec<Vec<f64>> = params.theta.rows().into_iter().map(cumulative).collect();
    let emit_cdf: Vec<Vec<f64>> = params.phi.rows().into_iter().map(cumulative).collect();
    let mut state = draw(&mut rng, &cumulative(params.init.view()));
    let mut tokens = Vec::with_capacity(len);
    for t in 0..len {
        if t > 0 {
            state = draw(&mut rng, &trans_cdf[state]);
        }
        if let Some(out) = states.as_deref_mut() {
            out.push(state as u32);
        }
        tokens.push(draw(&mut rng, &emit_cdf[state]) as u32);
    }
    let stream = TokenStream::new(tokens, Vocab::numbered(vocab_size))?;
    Ok((params, stream))
}

/// Reads a whitespace-tokenized corpus, one sentence per line. Blank lines
/// are skipped.
pub fn read_corpus(path: &Path) -> Result<Vec<Vec<String>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut sentences = Vec::new();
    for (i, line) in bytes.split(|&b| b == b'\n').enumerate() {
        let line = std::str::from_utf8(line).map_err(|e| Error::Parse {
            path: path.into(),
            line: i + 1,
            reason: format!("invalid UTF-8: {e}"),
        })?;
        let words: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if !words.is_empty() {
            sentences.push(words);
        }
    }
    Ok(sentences)
}

/// Writes `token<TAB>index` lines sorted by index.
pub fn write_vocab(vocab: &Vocab, path: &Path) -> Result<()> {
    let mut text = String::new();
    for (i, w) in vocab.words().iter().enumerate() {
        text.push_str(w);
        text.push('\t');
        text.push_str(&i.to_string());
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

pub fn read_vocab(path: &Path) -> Result<Vocab> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut words = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let bad = |reason: String| Error::Parse {
            path: path.into(),
            line: i + 1,
            reason,
        };
        let (word, index) = line
            .split_once('\t')
            .ok_or_else(|| bad("expected `token<TAB>index`".into()))?;
        let index: usize = index.trim().parse().map_err(|e| bad(format!("bad index: {e}")))?;
        if index != words.len() {
            return Err(bad(format!("index {index} out of order, expected {}", words.len())));
        }
        words.push(word.to_string());
    }
    Vocab::from_words(words).map_err(|e| Error::corrupt(path, e.to_string()))
}

/// Writes the stream cache: magic, `T` as little-endian u64, then `T`
/// little-endian u32 token indices.
pub fn write_stream_cache(tokens: &[u32], path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(16 + 4 * tokens.len());
    bytes.extend_from_slice(&STREAM_MAGIC);
    bytes.extend_from_slice(&(tokens.len() as u64).to_le_bytes());
    for t in tokens {
        bytes.extend_from_slice(&t.to_le_bytes());
    }
    write_atomic(path, &bytes)
}

pub fn read_stream_cache(path: &Path) -> Result<Vec<u32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 || bytes[..8] != STREAM_MAGIC {
        return Err(Error::corrupt(path, "missing stream cache magic"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() != len.saturating_mul(4) {
        return Err(Error::corrupt(
            path,
            format!("header declares {len} tokens but the body holds {} bytes", body.len()),
        ));
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sentences(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn vocab_ranks_by_frequency() {
        let v = build_vocab(&sentences(&["a b a"]), 1, None).unwrap();
        assert_eq!(v.words(), &["</s>", "a", "b"]);
        assert_eq!(v.unk_id(), None);
    }

    #[test]
    fn vocab_ties_break_by_first_seen() {
        let v = build_vocab(&sentences(&["c b", "a b c a"]), 1, None).unwrap();
        assert_eq!(v.words(), &["</s>", "c", "b", "a"]);
    }

    #[test]
    fn rare_words_map_to_unk() {
        let v = build_vocab(&sentences(&["a b a"]), 2, None).unwrap();
        assert_eq!(v.words(), &["</s>", "<unk>", "a"]);
        assert_eq!(v.encode("b"), Some(1));
        assert_eq!(v.encode("zzz"), Some(1));
    }

    #[test]
    fn max_size_counts_reserved_symbols() {
        let v = build_vocab(&sentences(&["a a a b b c"]), 1, Some(3)).unwrap();
        assert_eq!(v.words(), &["</s>", "<unk>", "a"]);
        let v = build_vocab(&sentences(&["a a a b b c"]), 1, Some(4)).unwrap();
        assert_eq!(v.words(), &["</s>", "a", "b", "c"]);
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(build_vocab(&[], 1, None), Err(Error::EmptyData(_))));
        assert!(matches!(build_vocab(&[vec![]], 1, None), Err(Error::EmptyData(_))));
    }

    #[test]
    fn stream_appends_eos_per_sentence() {
        let corpus = sentences(&["the cat sat", "a dog", "x"]);
        let v = build_vocab(&corpus, 1, None).unwrap();
        let s = prepare_stream(&corpus, &v, 3).unwrap();
        assert_eq!(s.len(), 3 + 2 + 1 + 3);
        assert_eq!(s.tokens.iter().filter(|&&t| t == 0).count(), 3);
        assert_eq!(*s.tokens.last().unwrap(), 0);

        let one = sentences(&["p q r"]);
        let v = build_vocab(&one, 1, None).unwrap();
        let s = prepare_stream(&one, &v, 0).unwrap();
        assert_eq!(s.decode(&s.tokens), vec!["p", "q", "r", "</s>"]);
    }

    #[test]
    fn shuffles_whole_sentences() {
        let corpus = sentences(&["a b", "c", "d e f", "g", "h i"]);
        let v = build_vocab(&corpus, 1, None).unwrap();
        let decode_sentences = |seed| {
            let s = prepare_stream(&corpus, &v, seed).unwrap();
            let text = s.decode(&s.tokens).join(" ");
            let mut parts: Vec<String> = text
                .split(" </s>")
                .map(|p| p.trim().to_string())
                .filter(|p| !p.is_empty())
                .collect();
            parts.sort();
            parts
        };
        let mut expected: Vec<String> = corpus.iter().map(|s| s.join(" ")).collect();
        expected.sort();
        assert_eq!(decode_sentences(1), expected);
        assert_eq!(decode_sentences(2), expected);
        assert_eq!(
            prepare_stream(&corpus, &v, 9).unwrap(),
            prepare_stream(&corpus, &v, 9).unwrap()
        );
    }

    #[test]
    fn split_takes_contiguous_suffix() {
        let s = TokenStream::new((0..100).map(|i| i % 5).collect(), Vocab::numbered(5)).unwrap();
        let (train, test) = train_test_split(&s, 0.05).unwrap();
        assert_eq!(test.len(), 5);
        assert_eq!(train.len() + test.len(), 100);
        assert_eq!(test, &s.tokens[95..]);
        let (_, test) = split_tokens(&s.tokens, 0.07).unwrap();
        assert_eq!(test.len(), 7);
        let s = s.with_holdout(0.1).unwrap();
        assert_eq!(s.train_tokens().len(), 90);
    }

    #[test]
    fn degenerate_splits_rejected() {
        let tokens = vec![0u32; 10];
        for frac in [0.0, 1.0, -0.5, 0.99, f64::NAN] {
            assert!(matches!(split_tokens(&tokens, frac), Err(Error::InvalidSplit(_))), "{frac}");
        }
    }

    #[test]
    fn synthetic_is_deterministic_and_in_range() {
        let (p1, s1) = generate_synthetic(3, 7, 5_000, 0.5, 11).unwrap();
        let (p2, s2) = generate_synthetic(3, 7, 5_000, 0.5, 11).unwrap();
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
        assert!(s1.tokens.iter().all(|&t| t < 7));
        p1.validate().unwrap();
        assert!(generate_synthetic(1, 7, 10, 0.5, 0).is_err());
        assert!(generate_synthetic(2, 7, 0, 0.5, 0).is_err());
    }

    #[test]
    fn stream_cache_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stream.bin");
        let tokens = vec![0u32, 5, 7, u32::MAX, 3];
        write_stream_cache(&tokens, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], b"SCVISTRM");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 5);
        assert_eq!(bytes.len(), 16 + 20);
        assert_eq!(read_stream_cache(&path).unwrap(), tokens);

        fs::write(&path, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(read_stream_cache(&path), Err(Error::Corrupt { .. })));
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        fs::write(&path, wrong).unwrap();
        assert!(matches!(read_stream_cache(&path), Err(Error::Corrupt { .. })));
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.tsv");
        let v = build_vocab(&sentences(&["x y x z"]), 2, None).unwrap();
        write_vocab(&v, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "</s>\t0\n<unk>\t1\nx\t2\n");
        assert_eq!(read_vocab(&path).unwrap(), v);
        fs::write(&path, "</s>\t0\nx\t5\n").unwrap();
        assert!(matches!(read_vocab(&path), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn corpus_reader_reports_bad_utf8_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.txt");
        fs::write(&path, b"a b\n\nc d\n\xff\xfe\n").unwrap();
        match read_corpus(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        fs::write(&path, "a b\n\nc  d\n").unwrap();
        assert_eq!(read_corpus(&path).unwrap(), sentences(&["a b", "c d"]));
    }
}
