//! `train-all`: every artifact the engine needs, from the configured corpora.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use stylebot_core::artifact::Artifact;
use stylebot_core::classifier::{train_router, RouterConfig};
use stylebot_core::corpus::{parse_transcript, Corpus, DialogPair};
use stylebot_core::generator::seq2seq::train_seq2seq;
use stylebot_core::generator::{GeneratorArtifact, RetrievalGenerator, Seq2SeqGenerator, StandardResponseSet};
use stylebot_core::ngram_lm::train_lm;
use stylebot_core::pipeline::{compute_reference_perplexity, parse_keywords, Manifest, PipelineConfig};
use stylebot_core::textproc::{default_suffix_rules, parse_suffix_rules, parse_tagged_corpus, train_tagger_with_rules};
use stylebot_core::wordgraph::build_graph;
use stylebot_core::{BOS, EOS, PAD, SEP, UNK};

use crate::config::{GeneratorKind, GeneratorSection, LoadedConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Every file `train-all` writes, in write order.
pub const ARTIFACT_FILES: [&str; 10] = [
    "router.json",
    "tagger.json",
    "lm.json",
    "graph.json",
    "style_generator.json",
    "general_generator.json",
    "keywords.txt",
    "fallbacks.txt",
    "style_vocab.txt",
    MANIFEST_FILE,
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub style_pairs: usize,
    pub general_pairs: usize,
    pub style_mean_utterance_length: f64,
    pub router_features: usize,
    pub router_train_size: usize,
    pub router_test_size: usize,
    pub router_heldout_accuracy: f64,
    pub tagger_words: usize,
    pub lm_vocab: usize,
    pub lm_sentences: usize,
    pub reference_perplexity: f64,
    pub graph_nodes: usize,
    pub style_generator: String,
    pub style_generator_final_loss: Option<f64>,
    pub general_generator: String,
    pub general_generator_final_loss: Option<f64>,
    pub fallback_responses: usize,
    pub keywords: usize,
}

impl TrainSummary {
    pub fn render(&self) -> String {
        let loss = |l: Option<f64>| l.map(|l| format!(", final loss {l:.4}")).unwrap_or_default();
        format!(
            "artifacts: {}\n\
             seed: {}\n\
             pairs: {} style, {} general (mean style utterance {:.2} tokens)\n\
             router: {} features, held-out accuracy {:.4} ({} train / {} test)\n\
             tagger: {} lexicon words\n\
             language model: {} types over {} sentences, reference perplexity {:.4}\n\
             word graph: {} nodes\n\
             style generator: {}{}\n\
             general generator: {}{}\n\
             standard responses: {}, keywords: {}\n",
            self.output_dir.display(),
            self.seed,
            self.style_pairs,
            self.general_pairs,
            self.style_mean_utterance_length,
            self.router_features,
            self.router_heldout_accuracy,
            self.router_train_size,
            self.router_test_size,
            self.tagger_words,
            self.lm_vocab,
            self.lm_sentences,
            self.reference_perplexity,
            self.graph_nodes,
            self.style_generator,
            loss(self.style_generator_final_loss),
            self.general_generator,
            loss(self.general_generator_final_loss),
            self.fallback_responses,
            self.keywords,
        )
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

/// Token sequences of every cleaned utterance in a transcript.
fn utterances(text: &str) -> Vec<Vec<String>> {
    parse_transcript(text).into_iter().flatten().map(|u| u.tokens).collect()
}

struct Inputs {
    style: Corpus,
    style_utterances: Vec<Vec<String>>,
    general: Corpus,
    general_utterances: Vec<Vec<String>>,
    lm_sentences: Vec<Vec<String>>,
    tagged: String,
    suffix_rules: Option<String>,
    keywords: String,
    fallbacks: String,
}

fn read_inputs(cfg: &LoadedConfig) -> Result<Inputs> {
    let c = &cfg.config;
    let max_context = c.corpus.max_context;
    let style_text = read(&cfg.inputs.style_transcript)?;
    let style = Corpus::from_transcript(&style_text, max_context, &c.corpora.style_domain);
    anyhow::ensure!(
        !style.pairs().is_empty(),
        "{} yields no dialog pairs",
        cfg.inputs.style_transcript.display()
    );
    let mut general_pairs: Vec<DialogPair> = Vec::new();
    let mut general_utterances = Vec::new();
    for path in &cfg.inputs.general_transcripts {
        let text = read(path)?;
        general_pairs.extend(
            Corpus::from_transcript(&text, max_context, &c.corpora.general_domain)
                .pairs()
                .iter()
                .cloned(),
        );
        general_utterances.extend(utterances(&text));
    }
    let general = Corpus::new(general_pairs);
    anyhow::ensure!(!general.pairs().is_empty(), "general transcripts yield no dialog pairs");
    let lm_sentences = utterances(&read(&cfg.inputs.lm_corpus)?);
    anyhow::ensure!(
        !lm_sentences.is_empty(),
        "{} has no utterances",
        cfg.inputs.lm_corpus.display()
    );
    Ok(Inputs {
        style,
        style_utterances: utterances(&style_text),
        general,
        general_utterances,
        lm_sentences,
        tagged: read(&cfg.inputs.tagged_corpus)?,
        suffix_rules: cfg.inputs.suffix_rules.as_deref().map(read).transpose()?,
        keywords: read(&cfg.inputs.keywords)?,
        fallbacks: read(&cfg.inputs.fallbacks)?,
    })
}

/// Reads and checks every input without training or writing anything.
pub fn dry_run(cfg: &LoadedConfig) -> Result<String> {
    let inputs = read_inputs(cfg)?;
    parse_tagged_corpus(&inputs.tagged)?;
    if let Some(rules) = &inputs.suffix_rules {
        parse_suffix_rules(rules)?;
    }
    StandardResponseSet::parse(&inputs.fallbacks, cfg.seed)?;
    Ok(format!(
        "config ok: {} style pairs, {} general pairs, {} LM sentences; would write {} files to {}\n",
        inputs.style.pairs().len(),
        inputs.general.pairs().len(),
        inputs.lm_sentences.len(),
        ARTIFACT_FILES.len(),
        cfg.output_dir.display()
    ))
}

fn train_generator(
    section: &GeneratorSection,
    pairs: &[DialogPair],
    seed: u64,
) -> Result<(GeneratorArtifact, Option<f64>)> {
    Ok(match section.kind {
        GeneratorKind::Seq2seq => {
            let mut train = section.train.clone();
            train.seed = seed;
            let (model, report) = train_seq2seq(section.model.clone(), pairs, &train)?;
            (
                GeneratorArtifact::Seq2seq(Seq2SeqGenerator {
                    model,
                    decode: section.decode,
                }),
                Some(report.final_loss),
            )
        }
        GeneratorKind::Retrieval => (
            GeneratorArtifact::Retrieval(RetrievalGenerator::build(pairs.to_vec())?),
            None,
        ),
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn kind_name(kind: GeneratorKind) -> String {
    match kind {
        GeneratorKind::Seq2seq => "seq2seq".into(),
        GeneratorKind::Retrieval => "retrieval".into(),
    }
}

/// Trains every component and writes the artifacts plus `manifest.json`.
/// Output is byte-identical for identical inputs and seed.
pub fn train_all(cfg: &LoadedConfig) -> Result<TrainSummary> {
    let c = &cfg.config;
    let inputs = read_inputs(cfg)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let router_config = RouterConfig {
        seed: cfg.seed,
        ..c.router.clone()
    };
    let (router, router_report) = train_router(
        &inputs.style_utterances,
        &inputs.general_utterances,
        &c.corpora.style_domain,
        &c.corpora.general_domain,
        &router_config,
    )?;
    router.save(&out.join("router.json"))?;

    let rules = match &inputs.suffix_rules {
        Some(text) => parse_suffix_rules(text)?,
        None => default_suffix_rules(),
    };
    let tagger = train_tagger_with_rules(&parse_tagged_corpus(&inputs.tagged)?, rules)?;
    tagger.save(&out.join("tagger.json"))?;

    let lm = train_lm(&inputs.lm_sentences, c.lm)?;
    let reference_perplexity = compute_reference_perplexity(&inputs.lm_sentences, &lm)?;
    lm.save(&out.join("lm.json"))?;

    let tagged_style: Vec<_> = inputs.style_utterances.iter().map(|u| tagger.pos_tag(u)).collect();
    let graph = build_graph(&tagged_style)?;
    graph.save(&out.join("graph.json"))?;

    let (style_gen, style_loss) = train_generator(&c.style_generator, inputs.style.pairs(), cfg.seed)?;
    style_gen.save(&out.join("style_generator.json"))?;
    let (general_gen, general_loss) = train_generator(&c.general_generator, inputs.general.pairs(), cfg.seed)?;
    general_gen.save(&out.join("general_generator.json"))?;

    let keywords = parse_keywords(&inputs.keywords);
    let mut keyword_text: String = keywords.iter().map(|k| format!("{k}\n")).collect();
    if keyword_text.is_empty() {
        keyword_text.push('\n');
    }
    write(out, "keywords.txt", &keyword_text)?;
    let fallbacks = StandardResponseSet::parse(&inputs.fallbacks, cfg.seed)?;
    write(out, "fallbacks.txt", &inputs.fallbacks)?;

    let reserved: BTreeSet<&str> = [BOS, EOS, UNK, SEP, PAD].into();
    let vocab: String = inputs
        .style
        .vocabulary()
        .iter()
        .filter(|w| !reserved.contains(w.as_str()))
        .map(|w| format!("{w}\n"))
        .collect();
    write(out, "style_vocab.txt", &vocab)?;

    let manifest = Manifest {
        router: "router.json".into(),
        style_generator: "style_generator.json".into(),
        general_generator: "general_generator.json".into(),
        graph: "graph.json".into(),
        lm: "lm.json".into(),
        tagger: "tagger.json".into(),
        keywords: "keywords.txt".into(),
        fallbacks: "fallbacks.txt".into(),
        style_vocab: "style_vocab.txt".into(),
        pipeline: PipelineConfig {
            reference_perplexity,
            gate_low: c.pipeline.gate_low,
            gate_high: c.pipeline.gate_high,
            confidence_floor: c.pipeline.confidence_floor,
            shift_passes: c.pipeline.shift_passes,
            seed: cfg.seed,
        },
    };
    manifest.pipeline.validate()?;
    manifest.save(&out.join(MANIFEST_FILE))?;

    Ok(TrainSummary {
        output_dir: out.clone(),
        seed: cfg.seed,
        style_pairs: inputs.style.pairs().len(),
        general_pairs: inputs.general.pairs().len(),
        style_mean_utterance_length: inputs.style.stats().mean_utterance_length,
        router_features: router.vocabulary.len(),
        router_train_size: router_report.train_size,
        router_test_size: router_report.test_size,
        router_heldout_accuracy: router_report.heldout_accuracy,
        tagger_words: tagger.lexicon.len(),
        lm_vocab: lm.vocab().len(),
        lm_sentences: inputs.lm_sentences.len(),
        reference_perplexity,
        graph_nodes: graph.nodes().len(),
        style_generator: kind_name(c.style_generator.kind),
        style_generator_final_loss: style_loss,
        general_generator: kind_name(c.general_generator.kind),
        general_generator_final_loss: general_loss,
        fallback_responses: fallbacks.len(),
        keywords: keywords.len(),
    })
}
