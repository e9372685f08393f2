//! Fixed-set evaluation: response perplexity, vocabulary overlap, and
//! aggregation of binary human annotations.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::classifier::TfidfRouter;
use crate::ngram_lm::BigramLM;
use crate::pipeline::{Engine, Verdict};
use crate::textproc::{detokenize, tokenize};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub utterance: String,
    pub expected_domain: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSet {
    pub items: Vec<EvalItem>,
}

impl EvalSet {
    /// `utterance \t expected_domain` per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut items = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((utterance, domain)) = line.split_once('\t') else {
                return Err(Error::parse(
                    format!("eval set line {}", i + 1),
                    "expected `utterance<TAB>domain`",
                ));
            };
            items.push(EvalItem {
                utterance: utterance.trim().to_owned(),
                expected_domain: domain.trim().to_owned(),
            });
        }
        Ok(Self { items })
    }

    /// Item count per expected domain.
    pub fn composition(&self) -> BTreeMap<String, usize> {
        let mut out = BTreeMap::new();
        for item in &self.items {
            *out.entry(item.expected_domain.clone()).or_default() += 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverlapMode {
    /// Every response token counts (micro-average).
    #[default]
    Token,
    /// Distinct response tokens.
    Type,
}

/// Percentage of response tokens that occur in `style_vocab`.
pub fn vocabulary_overlap<S: AsRef<str>>(
    responses: &[Vec<S>],
    style_vocab: &BTreeSet<String>,
    mode: OverlapMode,
) -> Result<f64> {
    let tokens: Vec<&str> = match mode {
        OverlapMode::Token => responses.iter().flatten().map(AsRef::as_ref).collect(),
        OverlapMode::Type => responses
            .iter()
            .flatten()
            .map(AsRef::as_ref)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    if tokens.is_empty() {
        return Err(Error::EmptySentence);
    }
    let hits = tokens.iter().filter(|t| style_vocab.contains(**t)).count();
    Ok(100.0 * hits as f64 / tokens.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub index: usize,
    pub input: String,
    pub expected_domain: String,
    pub route: Option<String>,
    pub route_probability: Option<f64>,
    pub verdict: Option<Verdict>,
    pub response: Option<String>,
    pub perplexity: Option<f64>,
    pub overlap: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSummary {
    pub annotators: usize,
    pub items: usize,
    pub grammar: f64,
    pub coherence: f64,
    pub style: f64,
    pub average: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub item_count: usize,
    pub composition: BTreeMap<String, usize>,
    /// Token-weighted perplexity of all responses under the style LM.
    pub average_perplexity: Option<f64>,
    pub vocabulary_overlap: Option<f64>,
    pub overlap_mode: OverlapMode,
    pub rows: Vec<EvalRow>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub annotation: Option<AnnotationSummary>,
}

struct Answer {
    route: String,
    probability: f64,
    verdict: Verdict,
    tokens: Vec<String>,
}

fn answer(engine: &Engine, turn: u64, item: &EvalItem) -> Result<Answer> {
    let tokens = tokenize(&item.utterance);
    let (final_tokens, trace) = engine.respond(&tokens, turn)?;
    Ok(Answer {
        route: trace.route.label,
        probability: trace.route.probability,
        verdict: trace.gate.verdict,
        tokens: final_tokens,
    })
}

/// Answers every item (in parallel) and reduces the results in item order.
pub fn run_eval(
    engine: &Engine,
    eval_set: &EvalSet,
    style_lm: &BigramLM,
    style_vocab: &BTreeSet<String>,
    mode: OverlapMode,
) -> Result<EvalReport> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(8);
    let chunk = eval_set.items.len().div_ceil(workers).max(1);
    let answers: Vec<Result<Answer>> = std::thread::scope(|scope| {
        let handles: Vec<_> = eval_set
            .items
            .chunks(chunk)
            .enumerate()
            .map(|(c, items)| {
                scope.spawn(move || {
                    items
                        .iter()
                        .enumerate()
                        .map(|(i, item)| answer(engine, (c * chunk + i) as u64, item))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("eval worker panicked"))
            .collect()
    });

    let mut rows = Vec::with_capacity(answers.len());
    let mut responses = Vec::new();
    for (index, (item, answer)) in eval_set.items.iter().zip(answers).enumerate() {
        let mut row = EvalRow {
            index,
            input: item.utterance.clone(),
            expected_domain: item.expected_domain.clone(),
            route: None,
            route_probability: None,
            verdict: None,
            response: None,
            perplexity: None,
            overlap: None,
            error: None,
        };
        match answer {
            Ok(a) => {
                row.route = Some(a.route);
                row.route_probability = Some(a.probability);
                row.verdict = Some(a.verdict);
                row.response = Some(detokenize(&a.tokens));
                match style_lm.perplexity(&a.tokens) {
                    Ok(p) => row.perplexity = Some(p),
                    Err(e) => row.error = Some(e.to_string()),
                }
                row.overlap = vocabulary_overlap(std::slice::from_ref(&a.tokens), style_vocab, mode).ok();
                if !a.tokens.is_empty() {
                    responses.push(a.tokens);
                }
            }
            Err(e) => row.error = Some(e.to_string()),
        }
        rows.push(row);
    }
    let (average_perplexity, overlap) = if responses.is_empty() {
        (None, None)
    } else {
        (
            Some(style_lm.corpus_perplexity(&responses)?),
            Some(vocabulary_overlap(&responses, style_vocab, mode)?),
        )
    };
    Ok(EvalReport {
        item_count: eval_set.items.len(),
        composition: eval_set.composition(),
        average_perplexity,
        vocabulary_overlap: overlap,
        overlap_mode: mode,
        rows,
        annotation: None,
    })
}

/// Routing accuracy against the eval set's expected domains.
pub fn routing_accuracy(router: &TfidfRouter, eval_set: &EvalSet) -> f64 {
    if eval_set.items.is_empty() {
        return f64::NAN;
    }
    let correct = eval_set
        .items
        .iter()
        .filter(|i| router.route(&tokenize(&i.utterance)).label == i.expected_domain)
        .count();
    correct as f64 / eval_set.items.len() as f64
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn render_table(&self) -> String {
        let fmt = |v: Option<f64>, prec: usize| v.map_or("-".to_owned(), |x| format!("{x:.prec$}"));
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>3}  {:<10} {:<24} {:>9} {:>8}  {:<32} response",
            "#", "route", "verdict", "ppl", "overlap", "input"
        );
        for r in &self.rows {
            let verdict = r
                .verdict
                .map(|v| {
                    serde_json::to_value(v)
                        .ok()
                        .and_then(|v| v.as_str().map(str::to_owned))
                        .unwrap_or_default()
                })
                .unwrap_or_else(|| "error".into());
            let _ = writeln!(
                out,
                "{:>3}  {:<10} {:<24} {:>9} {:>8}  {:<32} {}",
                r.index,
                r.route.as_deref().unwrap_or("-"),
                verdict,
                fmt(r.perplexity, 2),
                fmt(r.overlap, 2),
                r.input,
                r.response.as_deref().or(r.error.as_deref()).unwrap_or("")
            );
        }
        let _ = writeln!(out, "items: {}", self.item_count);
        let _ = writeln!(out, "average perplexity: {}", fmt(self.average_perplexity, 4));
        let _ = writeln!(out, "vocabulary overlap: {}%", fmt(self.vocabulary_overlap, 2));
        if let Some(a) = &self.annotation {
            let _ = writeln!(
                out,
                "annotations ({} annotators x {} items): grammar {:.2}%  coherence {:.2}%  style {:.2}%  average {:.2}%",
                a.annotators, a.items, a.grammar, a.coherence, a.style, a.average
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scores {
    pub grammar: u8,
    pub coherence: u8,
    pub style: u8,
}

/// Binary scores per (annotator, item).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSheet {
    pub cells: BTreeMap<(String, String), Scores>,
}

pub const ANNOTATION_HEADER: [&str; 5] = ["annotator", "item", "grammar", "coherence", "style"];

impl AnnotationSheet {
    pub fn insert(&mut self, annotator: impl Into<String>, item: impl Into<String>, scores: Scores) {
        self.cells.insert((annotator.into(), item.into()), scores);
    }

    /// Reads a CSV with at least the columns in [`ANNOTATION_HEADER`]
    /// (extra columns are ignored). Blank cells are reported together as
    /// one [`Error::MissingCells`].
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader.headers()?.clone();
        let mut columns = [0usize; 5];
        for (slot, name) in columns.iter_mut().zip(ANNOTATION_HEADER) {
            *slot = headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::parse("annotation header", format!("missing column `{name}`")))?;
        }
        let mut sheet = Self::default();
        let mut missing = Vec::new();
        for (row_no, record) in reader.records().enumerate() {
            let record = record?;
            let line = row_no + 2;
            let field = |c: usize| record.get(columns[c]).unwrap_or("");
            let mut blank = Vec::new();
            for (c, name) in ANNOTATION_HEADER.iter().enumerate() {
                if field(c).is_empty() {
                    blank.push(*name);
                }
            }
            if !blank.is_empty() {
                missing.push(format!("line {line}: {}", blank.join(",")));
                continue;
            }
            let bit = |c: usize| -> Result<u8> {
                match field(c) {
                    "0" => Ok(0),
                    "1" => Ok(1),
                    other => Err(Error::parse(
                        format!("annotation line {line}"),
                        format!("{} must be 0 or 1, got `{other}`", ANNOTATION_HEADER[c]),
                    )),
                }
            };
            let scores = Scores {
                grammar: bit(2)?,
                coherence: bit(3)?,
                style: bit(4)?,
            };
            sheet.insert(field(0), field(1), scores);
        }
        if !missing.is_empty() {
            return Err(Error::MissingCells(missing));
        }
        Ok(sheet)
    }

    pub fn to_csv(&self) -> String {
        let mut out = ANNOTATION_HEADER.join(",");
        out.push('\n');
        for ((a, i), s) in &self.cells {
            let _ = writeln!(out, "{a},{i},{},{},{}", s.grammar, s.coherence, s.style);
        }
        out
    }
}

/// Percent of cells scored 1 per metric, and the mean of the three. Every
/// annotator must have scored every item.
pub fn aggregate_annotations(sheet: &AnnotationSheet) -> Result<AnnotationSummary> {
    let annotators: BTreeSet<&str> = sheet.cells.keys().map(|(a, _)| a.as_str()).collect();
    let items: BTreeSet<&str> = sheet.cells.keys().map(|(_, i)| i.as_str()).collect();
    if sheet.cells.is_empty() {
        return Err(Error::MissingCells(vec!["sheet has no cells".into()]));
    }
    let mut missing = Vec::new();
    for a in &annotators {
        for i in &items {
            if !sheet.cells.contains_key(&(a.to_string(), i.to_string())) {
                missing.push(format!("annotator {a}, item {i}"));
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::MissingCells(missing));
    }
    let cells = (annotators.len() * items.len()) as f64;
    let pct = |f: fn(&Scores) -> u8| 100.0 * sheet.cells.values().map(|s| f(s) as f64).sum::<f64>() / cells;
    let grammar = pct(|s| s.grammar);
    let coherence = pct(|s| s.coherence);
    let style = pct(|s| s.style);
    Ok(AnnotationSummary {
        annotators: annotators.len(),
        items: items.len(),
        grammar,
        coherence,
        style,
        average: (grammar + coherence + style) / 3.0,
    })
}

/// One blank-score row per eval item, ready for an annotator to fill in.
pub fn emit_annotation_template(report: &EvalReport) -> String {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<&str> = ANNOTATION_HEADER.to_vec();
    header.extend(["input", "response"]);
    writer.write_record(&header).expect("in-memory write");
    for row in &report.rows {
        let index = row.index.to_string();
        let response = row.response.as_deref().unwrap_or("");
        writer
            .write_record(["", index.as_str(), "", "", "", row.input.as_str(), response])
            .expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
}
