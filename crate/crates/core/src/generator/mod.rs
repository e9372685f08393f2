//! Response generators and the standard-response fallback set.
//!
//! A generator maps a post to a response plus a confidence, the mean
//! natural-log probability per emitted token (always `<= 0`).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::Result;

pub mod fallback;
pub mod retrieval;
pub mod seq2seq;

pub use fallback::{StandardResponse, StandardResponseSet};
pub use retrieval::RetrievalGenerator;
pub use seq2seq::{DecodeConfig, Seq2SeqConfig, Seq2SeqModel, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorOutput {
    pub tokens: Vec<String>,
    pub confidence: f64,
}

pub trait ResponseGenerator: Send + Sync {
    fn generate(&self, post: &[String]) -> Result<GeneratorOutput>;

    fn kind(&self) -> &'static str;
}

/// A trained encoder-decoder paired with its decoding settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seq2SeqGenerator {
    pub model: Seq2SeqModel,
    pub decode: DecodeConfig,
}

impl ResponseGenerator for Seq2SeqGenerator {
    fn generate(&self, post: &[String]) -> Result<GeneratorOutput> {
        self.model.generate(post, &self.decode)
    }

    fn kind(&self) -> &'static str {
        "seq2seq"
    }
}

/// Fixed outputs keyed by the space-joined post, with a default for
/// anything unscripted. Used for exact pipeline tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedGenerator {
    pub default: GeneratorOutput,
    #[serde(default)]
    pub script: BTreeMap<String, GeneratorOutput>,
}

impl ScriptedGenerator {
    pub fn constant(tokens: &[&str], confidence: f64) -> Self {
        Self {
            default: GeneratorOutput {
                tokens: tokens.iter().map(|s| s.to_string()).collect(),
                confidence,
            },
            script: BTreeMap::new(),
        }
    }
}

impl ResponseGenerator for ScriptedGenerator {
    fn generate(&self, post: &[String]) -> Result<GeneratorOutput> {
        Ok(self.script.get(&post.join(" ")).unwrap_or(&self.default).clone())
    }

    fn kind(&self) -> &'static str {
        "scripted"
    }
}

/// Persisted generator of any kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorArtifact {
    Seq2seq(Seq2SeqGenerator),
    Retrieval(RetrievalGenerator),
    Scripted(ScriptedGenerator),
}

impl Artifact for GeneratorArtifact {
    const FORMAT: &'static str = "stylebot/generator";
    const VERSION: u32 = 1;
}

impl GeneratorArtifact {
    pub fn into_generator(self) -> Box<dyn ResponseGenerator> {
        match self {
            GeneratorArtifact::Seq2seq(g) => Box::new(g),
            GeneratorArtifact::Retrieval(g) => Box::new(g),
            GeneratorArtifact::Scripted(g) => Box::new(g),
        }
    }
}
