//! One dialog turn end to end: route, generate, style-shift, gate.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::artifact::{read_text, Artifact};
use crate::classifier::{Route, TfidfRouter};
use crate::generator::{GeneratorArtifact, GeneratorOutput, ResponseGenerator, StandardResponseSet};
use crate::ngram_lm::BigramLM;
use crate::textproc::{detokenize, TaggerModel};
use crate::wordgraph::{style_shift, ScoredCandidate, ShiftConfig, WordGraph};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Token-weighted perplexity of the style corpus under the style LM.
    pub reference_perplexity: f64,
    /// Lower window multiplier.
    pub gate_low: f64,
    /// Upper window multiplier.
    pub gate_high: f64,
    /// Minimum generator confidence, nats per token.
    pub confidence_floor: f64,
    /// Insertion passes for the general path.
    #[serde(default = "one")]
    pub shift_passes: usize,
    /// Seed for standard-response selection.
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            reference_perplexity: 1.0,
            gate_low: 0.3,
            gate_high: 2.0,
            confidence_floor: -3.5,
            shift_passes: 1,
            seed: 7,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.reference_perplexity > 0.0 && self.reference_perplexity.is_finite()) {
            return Err(Error::Config("reference_perplexity must be > 0".into()));
        }
        if !(0.0 < self.gate_low && self.gate_low < 1.0 && 1.0 < self.gate_high) {
            return Err(Error::Config(format!(
                "gate multipliers must satisfy 0 < low < 1 < high (got {} and {})",
                self.gate_low, self.gate_high
            )));
        }
        if self.confidence_floor > 0.0 {
            return Err(Error::Config("confidence_floor must be <= 0".into()));
        }
        Ok(())
    }

    pub fn window(&self) -> (f64, f64) {
        (
            self.gate_low * self.reference_perplexity,
            self.gate_high * self.reference_perplexity,
        )
    }
}

/// Token-weighted perplexity of the style corpus under its own LM.
pub fn compute_reference_perplexity<S: AsRef<str>>(style_corpus: &[Vec<S>], style_lm: &BigramLM) -> Result<f64> {
    style_lm.corpus_perplexity(style_corpus)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    FallbackLowConfidence,
    FallbackPerplexity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub confidence: f64,
    pub confidence_floor: f64,
    /// Absent when the confidence check already rejected the candidate.
    pub perplexity: Option<f64>,
    pub window_low: f64,
    pub window_high: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallbackRecord {
    pub index: usize,
    pub klingon: bool,
}

/// Wall-clock time per stage in microseconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageDurations {
    pub route_us: u64,
    pub generate_us: u64,
    pub shift_us: Option<u64>,
    pub gate_us: u64,
    pub total_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub turn_id: u64,
    pub input: Vec<String>,
    pub route: Route,
    /// `true` when the in-style generator answered.
    pub style_path: bool,
    pub generator: String,
    pub raw: GeneratorOutput,
    /// Ranked shift candidates; general path only.
    pub candidates: Option<Vec<ScoredCandidate>>,
    /// What the gate judged.
    pub candidate: Vec<String>,
    pub gate: GateRecord,
    pub fallback: Option<FallbackRecord>,
    pub final_tokens: Vec<String>,
    pub final_text: String,
    pub durations: StageDurations,
}

pub struct Engine {
    pub router: TfidfRouter,
    pub style_generator: Box<dyn ResponseGenerator>,
    pub general_generator: Box<dyn ResponseGenerator>,
    pub graph: WordGraph,
    pub style_lm: BigramLM,
    pub tagger: TaggerModel,
    pub keywords: BTreeSet<String>,
    pub fallbacks: StandardResponseSet,
    pub config: PipelineConfig,
}

/// Collects components; [`build`](EngineBuilder::build) names whatever is missing.
#[derive(Default)]
pub struct EngineBuilder {
    pub router: Option<TfidfRouter>,
    pub style_generator: Option<Box<dyn ResponseGenerator>>,
    pub general_generator: Option<Box<dyn ResponseGenerator>>,
    pub graph: Option<WordGraph>,
    pub style_lm: Option<BigramLM>,
    pub tagger: Option<TaggerModel>,
    pub keywords: BTreeSet<String>,
    pub fallbacks: Option<StandardResponseSet>,
    pub config: Option<PipelineConfig>,
}

impl EngineBuilder {
    pub fn build(self) -> Result<Engine> {
        let config = self.config.ok_or(Error::ComponentMissing("pipeline config"))?;
        config.validate()?;
        Ok(Engine {
            router: self.router.ok_or(Error::ComponentMissing("router"))?,
            style_generator: self.style_generator.ok_or(Error::ComponentMissing("style generator"))?,
            general_generator: self
                .general_generator
                .ok_or(Error::ComponentMissing("general generator"))?,
            graph: self.graph.ok_or(Error::ComponentMissing("word graph"))?,
            style_lm: self.style_lm.ok_or(Error::ComponentMissing("style language model"))?,
            tagger: self.tagger.ok_or(Error::ComponentMissing("tagger"))?,
            keywords: self.keywords,
            fallbacks: self.fallbacks.ok_or(Error::ComponentMissing("standard responses"))?,
            config,
        })
    }
}

fn micros(start: Instant) -> u64 {
    start.elapsed().as_micros() as u64
}

impl Engine {
    /// Runs one stateless turn.
    pub fn respond(&self, utterance: &[String], turn_id: u64) -> Result<(Vec<String>, PipelineTrace)> {
        if utterance.is_empty() {
            return Err(Error::EmptyInput);
        }
        let started = Instant::now();
        let mut durations = StageDurations::default();

        let t = Instant::now();
        let route = self.router.route(utterance);
        let style_path = route.label == self.router.positive_label;
        durations.route_us = micros(t);

        let t = Instant::now();
        let generator = if style_path {
            &self.style_generator
        } else {
            &self.general_generator
        };
        let raw = generator.generate(utterance)?;
        durations.generate_us = micros(t);

        let (candidate, candidates) = if style_path || raw.tokens.is_empty() {
            (raw.tokens.clone(), None)
        } else {
            let t = Instant::now();
            let shifted = style_shift(
                &self.graph,
                &self.style_lm,
                &self.keywords,
                &raw.tokens,
                &self.tagger,
                ShiftConfig {
                    passes: self.config.shift_passes,
                },
            );
            durations.shift_us = Some(micros(t));
            (shifted.best, Some(shifted.ranked))
        };

        let t = Instant::now();
        let (window_low, window_high) = self.config.window();
        let mut perplexity = None;
        // an empty decode counts as no confidence at all
        let verdict = if candidate.is_empty() || raw.confidence < self.config.confidence_floor {
            Verdict::FallbackLowConfidence
        } else {
            let ppl = self.style_lm.perplexity(&candidate)?;
            perplexity = Some(ppl);
            if ppl < window_low || ppl > window_high {
                Verdict::FallbackPerplexity
            } else {
                Verdict::Accept
            }
        };
        let (final_tokens, fallback) = match verdict {
            Verdict::Accept => (candidate.clone(), None),
            _ => {
                let index = self.fallbacks.index_for(turn_id);
                let chosen = &self.fallbacks.responses()[index];
                (
                    chosen.tokens.clone(),
                    Some(FallbackRecord {
                        index,
                        klingon: chosen.klingon,
                    }),
                )
            }
        };
        durations.gate_us = micros(t);
        durations.total_us = micros(started);

        let trace = PipelineTrace {
            turn_id,
            input: utterance.to_vec(),
            route,
            style_path,
            generator: generator.kind().to_owned(),
            raw: raw.clone(),
            candidates,
            candidate,
            gate: GateRecord {
                confidence: raw.confidence,
                confidence_floor: self.config.confidence_floor,
                perplexity,
                window_low,
                window_high,
                verdict,
            },
            fallback,
            final_text: detokenize(&final_tokens),
            final_tokens: final_tokens.clone(),
            durations,
        };
        Ok((final_tokens, trace))
    }

    /// Component summary for health reporting.
    pub fn component_summary(&self) -> Vec<(&'static str, String)> {
        vec![
            ("router", format!("{} features", self.router.vocabulary.len())),
            ("style_generator", self.style_generator.kind().to_owned()),
            ("general_generator", self.general_generator.kind().to_owned()),
            ("graph", format!("{} nodes", self.graph.nodes().len())),
            ("style_lm", format!("{} types", self.style_lm.vocab().len())),
            ("tagger", format!("{} words", self.tagger.lexicon.len())),
            ("fallbacks", format!("{} responses", self.fallbacks.len())),
        ]
    }
}

/// Parses a keyword file: one word per line, `#` comments, lower-cased.
pub fn parse_keywords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// Engine manifest: artifact paths (relative to the manifest's directory)
/// plus the pipeline settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub router: PathBuf,
    pub style_generator: PathBuf,
    pub general_generator: PathBuf,
    pub graph: PathBuf,
    pub lm: PathBuf,
    pub tagger: PathBuf,
    pub keywords: PathBuf,
    pub fallbacks: PathBuf,
    /// One token per line; used for vocabulary overlap.
    pub style_vocab: PathBuf,
    pub pipeline: PipelineConfig,
}

impl Artifact for Manifest {
    const FORMAT: &'static str = "stylebot/manifest";
    const VERSION: u32 = 1;
}

/// A loaded engine plus the style vocabulary named by its manifest.
pub struct LoadedEngine {
    pub engine: Engine,
    pub style_vocab: BTreeSet<String>,
}

impl Manifest {
    pub fn load_engine(manifest_path: &Path, seed_override: Option<u64>) -> Result<LoadedEngine> {
        let manifest = Manifest::load(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let at = |p: &Path| base.join(p);
        let mut config = manifest.pipeline.clone();
        if let Some(seed) = seed_override {
            config.seed = seed;
        }
        let fallbacks = StandardResponseSet::parse(&read_text(&at(&manifest.fallbacks))?, config.seed)?;
        let style_vocab = read_text(&at(&manifest.style_vocab))?
            .lines()
            .filter(|l| !l.is_empty())
            .map(str::to_owned)
            .collect();
        let engine = EngineBuilder {
            router: Some(TfidfRouter::load(&at(&manifest.router))?),
            style_generator: Some(GeneratorArtifact::load(&at(&manifest.style_generator))?.into_generator()),
            general_generator: Some(GeneratorArtifact::load(&at(&manifest.general_generator))?.into_generator()),
            graph: Some(WordGraph::load(&at(&manifest.graph))?),
            style_lm: Some(BigramLM::load(&at(&manifest.lm))?),
            tagger: Some(TaggerModel::load(&at(&manifest.tagger))?),
            keywords: parse_keywords(&read_text(&at(&manifest.keywords))?),
            fallbacks: Some(fallbacks),
            config: Some(config),
        }
        .build()?;
        Ok(LoadedEngine { engine, style_vocab })
    }
}
