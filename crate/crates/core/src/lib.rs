//! Persona style-shifting dialog engine.
//!
//! A user utterance is routed by a TF-IDF logistic classifier to either an
//! in-style generator or a general generator. General responses are pushed
//! toward the target style by inserting words proposed by a POS-tagged word
//! graph and re-ranked with a bigram language model. Every candidate then
//! passes a confidence check and a perplexity window before it is returned;
//! anything rejected is replaced by a canned standard response.

pub mod artifact;
pub mod classifier;
pub mod corpus;
pub mod error;
pub mod evalharness;
pub mod generator;
pub mod ngram_lm;
pub mod pipeline;
pub mod textproc;
pub mod wordgraph;

pub use error::{Error, Result};

/// Reserved sentence-start token.
pub const BOS: &str = "<s>";
/// Reserved sentence-end token.
pub const EOS: &str = "</s>";
/// Reserved unknown-word token.
pub const UNK: &str = "<unk>";
/// Reserved separator placed between concatenated context utterances.
pub const SEP: &str = "<sep>";
/// Reserved padding token (generator vocabularies only).
pub const PAD: &str = "<pad>";
