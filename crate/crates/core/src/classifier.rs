//! TF-IDF features and a binary logistic-regression router.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::textproc::{is_punctuation, is_stopword};
use crate::{Error, Result};

pub const DEFAULT_MAX_FEATURES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVocabulary {
    /// feature string -> column; bigrams are joined by a single space
    pub features: BTreeMap<String, usize>,
    /// indexed by column
    pub idf: Vec<f64>,
    pub max_features: usize,
    pub use_bigrams: bool,
}

/// Sparse vector with strictly increasing indices and non-zero values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector(pub Vec<(usize, f64)>);

impl SparseVector {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|(_, v)| v * v).sum::<f64>().sqrt()
    }

    pub fn dot_dense(&self, dense: &[f64]) -> f64 {
        self.0.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].0.cmp(&other.0[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.0[i].1 * other.0[j].1;
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }
}

fn candidate_terms<S: AsRef<str>>(doc: &[S], use_bigrams: bool) -> Vec<String> {
    let mut terms: Vec<String> = doc.iter().map(|t| t.as_ref().to_owned()).collect();
    if use_bigrams {
        terms.extend(doc.windows(2).map(|w| format!("{} {}", w[0].as_ref(), w[1].as_ref())));
    }
    terms
}

/// Fits idf weights and keeps the `max_features` terms with the largest
/// summed tf-idf mass (ties broken lexicographically). Columns are assigned
/// in lexicographic order of the kept terms.
pub fn fit_tfidf<S: AsRef<str>>(
    documents: &[Vec<S>],
    max_features: usize,
    use_bigrams: bool,
) -> Result<TfidfVocabulary> {
    if documents.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let n = documents.len() as f64;
    // term -> (document frequency, collection frequency)
    let mut stats: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    for doc in documents {
        let terms = candidate_terms(doc, use_bigrams);
        let distinct: BTreeSet<&String> = terms.iter().collect();
        for t in &terms {
            stats.entry(t.clone()).or_default().1 += 1;
        }
        for t in distinct {
            stats.get_mut(t).expect("counted above").0 += 1;
        }
    }
    let mut scored: Vec<(String, f64, f64)> = stats
        .into_iter()
        .map(|(term, (df, cf))| {
            let idf = (n / df as f64).ln();
            (term, idf, cf as f64 * idf)
        })
        .collect();
    scored.sort_by(|a, b| b.2.total_cmp(&a.2).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(max_features);
    scored.sort_by(|a, b| a.0.cmp(&b.0));

    let mut features = BTreeMap::new();
    let mut idf = Vec::with_capacity(scored.len());
    for (i, (term, w, _)) in scored.into_iter().enumerate() {
        features.insert(term, i);
        idf.push(w);
    }
    Ok(TfidfVocabulary {
        features,
        idf,
        max_features,
        use_bigrams,
    })
}

impl TfidfVocabulary {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index(&self, feature: &str) -> Option<usize> {
        self.features.get(feature).copied()
    }

    /// Raw-count tf times idf, L2-normalized when non-zero. Out-of-vocabulary
    /// terms and zero-weight terms are dropped.
    pub fn transform<S: AsRef<str>>(&self, document: &[S]) -> SparseVector {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for term in candidate_terms(document, self.use_bigrams) {
            if let Some(&i) = self.features.get(&term) {
                *tf.entry(i).or_default() += 1.0;
            }
        }
        let mut entries: Vec<(usize, f64)> = tf
            .into_iter()
            .map(|(i, c)| (i, c * self.idf[i]))
            .filter(|&(_, v)| v != 0.0)
            .collect();
        let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in &mut entries {
                *v /= norm;
            }
        }
        SparseVector(entries)
    }
}

/// Router preprocessing: stop words and bare punctuation are removed.
pub fn router_tokens<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| !is_stopword(t) && !is_punctuation(t))
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RouterConfig {
    pub max_features: usize,
    pub use_bigrams: bool,
    /// L2 penalty
    pub l2: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self {
            max_features: DEFAULT_MAX_FEATURES,
            use_bigrams: true,
            l2: 1e-4,
            learning_rate: 0.5,
            epochs: 200,
            test_fraction: 0.2,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfRouter {
    pub vocabulary: TfidfVocabulary,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub positive_label: String,
    pub negative_label: String,
    pub config: RouterConfig,
}

impl Artifact for TfidfRouter {
    const FORMAT: &'static str = "stylebot/tfidf-router";
    const VERSION: u32 = 1;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub train_size: usize,
    pub test_size: usize,
    pub heldout_accuracy: f64,
    /// Objective before the first step, then after each epoch.
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route {
    pub label: String,
    pub probability: f64,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Mean logistic cross-entropy plus `l2 / 2 * |w|^2`, with its gradient
/// with respect to the weights and the bias.
pub fn logistic_loss_and_grad(
    weights: &[f64],
    bias: f64,
    xs: &[SparseVector],
    ys: &[f64],
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = xs.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z = x.dot_dense(weights) + bias;
        // -[y ln s(z) + (1-y) ln(1 - s(z))]
        loss += y * softplus(-z) + (1.0 - y) * softplus(z);
        let err = sigmoid(z) - y;
        for &(i, v) in &x.0 {
            grad_w[i] += err * v / n;
        }
        grad_b += err / n;
    }
    loss /= n;
    loss += 0.5 * l2 * weights.iter().map(|w| w * w).sum::<f64>();
    for (g, w) in grad_w.iter_mut().zip(weights) {
        *g += l2 * w;
    }
    (loss, grad_w, grad_b)
}

/// Splits, fits TF-IDF on the training part, and trains by full-batch
/// gradient descent. Documents are raw tokens; [`router_tokens`] is applied.
pub fn train_router<S: AsRef<str>>(
    positive: &[Vec<S>],
    negative: &[Vec<S>],
    positive_label: &str,
    negative_label: &str,
    config: &RouterConfig,
) -> Result<(TfidfRouter, TrainingReport)> {
    if positive.is_empty() {
        return Err(Error::EmptyClass(positive_label.to_owned()));
    }
    if negative.is_empty() {
        return Err(Error::EmptyClass(negative_label.to_owned()));
    }
    if !(0.0..1.0).contains(&config.test_fraction) {
        return Err(Error::Config(format!(
            "test_fraction must be in [0, 1), got {}",
            config.test_fraction
        )));
    }
    let mut labelled: Vec<(Vec<String>, f64)> = positive
        .iter()
        .map(|d| (router_tokens(d), 1.0))
        .chain(negative.iter().map(|d| (router_tokens(d), 0.0)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    labelled.shuffle(&mut rng);

    let test_size = ((labelled.len() as f64) * config.test_fraction).round() as usize;
    let test_size = test_size.min(labelled.len() - 1);
    let train = &labelled[..labelled.len() - test_size];
    let test = &labelled[labelled.len() - test_size..];

    let train_docs: Vec<&Vec<String>> = train.iter().map(|(d, _)| d).collect();
    let train_docs: Vec<Vec<&str>> = train_docs
        .iter()
        .map(|d| d.iter().map(String::as_str).collect())
        .collect();
    let vocabulary = fit_tfidf(&train_docs, config.max_features, config.use_bigrams)?;

    let xs: Vec<SparseVector> = train.iter().map(|(d, _)| vocabulary.transform(d)).collect();
    let ys: Vec<f64> = train.iter().map(|(_, y)| *y).collect();

    let mut weights = vec![0.0; vocabulary.len()];
    let mut bias = 0.0;
    let mut loss_history = Vec::with_capacity(config.epochs + 1);
    for _ in 0..config.epochs {
        let (loss, gw, gb) = logistic_loss_and_grad(&weights, bias, &xs, &ys, config.l2);
        loss_history.push(loss);
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w -= config.learning_rate * g;
        }
        bias -= config.learning_rate * gb;
    }
    loss_history.push(logistic_loss_and_grad(&weights, bias, &xs, &ys, config.l2).0);

    let router = TfidfRouter {
        vocabulary,
        weights,
        bias,
        positive_label: positive_label.to_owned(),
        negative_label: negative_label.to_owned(),
        config: config.clone(),
    };
    let heldout_accuracy = if test.is_empty() {
        f64::NAN
    } else {
        let correct = test
            .iter()
            .filter(|(d, y)| (router.probability(d) >= 0.5) == (*y == 1.0))
            .count();
        correct as f64 / test.len() as f64
    };
    let report = TrainingReport {
        train_size: train.len(),
        test_size: test.len(),
        heldout_accuracy,
        loss_history,
    };
    Ok((router, report))
}

impl TfidfRouter {
    /// Probability of the positive label for an utterance's tokens.
    pub fn probability<S: AsRef<str>>(&self, utterance: &[S]) -> f64 {
        let x = self.vocabulary.transform(&router_tokens(utterance));
        sigmoid(x.dot_dense(&self.weights) + self.bias)
    }

    /// Positive label when the probability is at least 0.5.
    pub fn route<S: AsRef<str>>(&self, utterance: &[S]) -> Route {
        let probability = self.probability(utterance);
        let label = if probability >= 0.5 {
            &self.positive_label
        } else {
            &self.negative_label
        };
        Route {
            label: label.clone(),
            probability,
        }
    }
}
