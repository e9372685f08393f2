//! Add-k smoothed bigram language model.
//!
//! Sentences are scored as `<s> w1 .. wn </s>`. With `V` the predictable
//! vocabulary (every known token except `<s>`, always including `<unk>` and
//! `</s>`), the conditional is
//!
//! ```text
//! P(w | h) = (count(h, w) + k) / (count(h) + k * |V|)
//! ```
//!
//! so every history, seen or not, defines a proper distribution over `V`.
//! All logarithms are natural.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::{Error, Result, BOS, EOS, UNK};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub smoothing_k: f64,
    pub min_count: u64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            smoothing_k: 1.0,
            min_count: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BigramLM {
    vocab: BTreeSet<String>,
    unigram_counts: BTreeMap<String, u64>,
    /// history -> (word -> count)
    bigram_counts: BTreeMap<String, BTreeMap<String, u64>>,
    smoothing_k: f64,
    min_count: u64,
}

impl Artifact for BigramLM {
    const FORMAT: &'static str = "stylebot/bigram-lm";
    const VERSION: u32 = 1;
}

/// Trains a bigram model over `sentences`. Tokens seen fewer than
/// `min_count` times are replaced by `<unk>` before counting.
pub fn train_lm<S: AsRef<str>>(sentences: &[Vec<S>], config: LmConfig) -> Result<BigramLM> {
    if sentences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if !(config.smoothing_k > 0.0 && config.smoothing_k.is_finite()) {
        return Err(Error::Config(format!(
            "smoothing_k must be > 0, got {}",
            config.smoothing_k
        )));
    }
    if config.min_count == 0 {
        return Err(Error::Config("min_count must be >= 1".into()));
    }

    let mut freq: BTreeMap<&str, u64> = BTreeMap::new();
    for tok in sentences.iter().flatten() {
        *freq.entry(tok.as_ref()).or_default() += 1;
    }

    let mut vocab: BTreeSet<String> = [BOS, EOS, UNK].iter().map(|s| s.to_string()).collect();
    let mut unigram_counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut bigram_counts: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();

    for sentence in sentences {
        let mut prev = BOS.to_owned();
        *unigram_counts.entry(prev.clone()).or_default() += 1;
        let words = sentence.iter().map(|t| {
            let t = t.as_ref();
            if freq[t] < config.min_count || t == BOS || t == EOS {
                UNK.to_owned()
            } else {
                t.to_owned()
            }
        });
        for word in words.chain(std::iter::once(EOS.to_owned())) {
            vocab.insert(word.clone());
            *unigram_counts.entry(word.clone()).or_default() += 1;
            *bigram_counts.entry(prev).or_default().entry(word.clone()).or_default() += 1;
            prev = word;
        }
    }

    Ok(BigramLM {
        vocab,
        unigram_counts,
        bigram_counts,
        smoothing_k: config.smoothing_k,
        min_count: config.min_count,
    })
}

impl BigramLM {
    pub fn vocab(&self) -> &BTreeSet<String> {
        &self.vocab
    }

    pub fn smoothing_k(&self) -> f64 {
        self.smoothing_k
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn unigram_count(&self, token: &str) -> u64 {
        self.unigram_counts.get(token).copied().unwrap_or(0)
    }

    pub fn bigram_count(&self, history: &str, word: &str) -> u64 {
        self.bigram_counts
            .get(history)
            .and_then(|m| m.get(word))
            .copied()
            .unwrap_or(0)
    }

    /// Number of times `history` was followed by anything.
    pub fn history_count(&self, history: &str) -> u64 {
        self.bigram_counts.get(history).map(|m| m.values().sum()).unwrap_or(0)
    }

    /// Tokens that can be predicted: the vocabulary minus `<s>`.
    pub fn predictable(&self) -> impl Iterator<Item = &str> {
        self.vocab.iter().map(String::as_str).filter(|t| *t != BOS)
    }

    /// `|V|` in the smoothing denominator.
    pub fn predictable_size(&self) -> usize {
        self.vocab.len() - 1
    }

    /// Maps a token to its in-vocabulary form.
    pub fn normalize<'a>(&'a self, token: &'a str) -> &'a str {
        if token == BOS || token == EOS || !self.vocab.contains(token) {
            UNK
        } else {
            token
        }
    }

    /// `P(word | history)` after mapping both through the vocabulary.
    /// `history` may be `<s>`; `word` may be `</s>`.
    pub fn prob(&self, history: &str, word: &str) -> f64 {
        let h = if history == BOS { BOS } else { self.normalize(history) };
        let w = if word == EOS { EOS } else { self.normalize(word) };
        let k = self.smoothing_k;
        (self.bigram_count(h, w) as f64 + k) / (self.history_count(h) as f64 + k * self.predictable_size() as f64)
    }

    /// Sum of `ln P(w_i | w_{i-1})` over the wrapped sentence. The empty
    /// sentence scores the single `<s> </s>` bigram.
    pub fn log_prob<S: AsRef<str>>(&self, sentence: &[S]) -> f64 {
        let mut prev = BOS;
        let mut total = 0.0;
        for tok in sentence {
            let w = self.normalize(tok.as_ref());
            total += self.prob(prev, w).ln();
            prev = w;
        }
        total + self.prob(prev, EOS).ln()
    }

    /// `exp(-log_prob / (n + 1))`.
    pub fn perplexity<S: AsRef<str>>(&self, sentence: &[S]) -> Result<f64> {
        if sentence.is_empty() {
            return Err(Error::EmptySentence);
        }
        Ok((-self.log_prob(sentence) / (sentence.len() + 1) as f64).exp())
    }

    /// Token-weighted perplexity over a collection: total negative log-prob
    /// divided by the total number of predicted tokens.
    pub fn corpus_perplexity<S: AsRef<str>>(&self, sentences: &[Vec<S>]) -> Result<f64> {
        if sentences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut nll = 0.0;
        let mut predicted = 0usize;
        for s in sentences {
            if s.is_empty() {
                return Err(Error::EmptySentence);
            }
            nll -= self.log_prob(s);
            predicted += s.len() + 1;
        }
        Ok((nll / predicted as f64).exp())
    }

    /// Arithmetic mean of per-sentence perplexities.
    pub fn mean_sentence_perplexity<S: AsRef<str>>(&self, sentences: &[Vec<S>]) -> Result<f64> {
        if sentences.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let mut sum = 0.0;
        for s in sentences {
            sum += self.perplexity(s)?;
        }
        Ok(sum / sentences.len() as f64)
    }
}
