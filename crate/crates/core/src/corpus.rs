//! Transcript cleaning and post/response pair construction.
//!
//! Transcripts are plain text with one `NAME: text` utterance per line. A
//! blank line or a scene-marker line ends a scene; pairs never cross scenes.
//! Scene markers are lines starting with `#`, or made only of `=`, `-` or `*`
//! (at least three characters).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::textproc::tokenize;
use crate::{Error, Result, SEP};

static STAGE_DIRECTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\([^()]*\)|\[[^\[\]]*\]").unwrap());
static SPEAKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\s*([A-Za-z][A-Za-z0-9 .'\-]{0,39}?)\s*:\s*(.*)$").unwrap());
static SCENE_MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*(#.*|[=*\-]{3,})\s*$").unwrap());

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Option<String>,
    pub tokens: Vec<String>,
    /// utterance text after cleaning, speaker label removed
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogPair {
    pub post: Vec<String>,
    pub response: Vec<String>,
    pub domain: String,
    pub context_depth: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub pair_count: usize,
    pub mean_utterance_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pairs: Vec<DialogPair>,
    vocabulary: BTreeSet<String>,
}

/// Strips nested parenthesised and bracketed spans, then any stray bracket.
fn strip_stage_directions(text: &str) -> String {
    let mut current = text.to_owned();
    loop {
        let next = STAGE_DIRECTION.replace_all(&current, " ").into_owned();
        if next == current {
            break;
        }
        current = next;
    }
    current.retain(|c| !matches!(c, '(' | ')' | '[' | ']'));
    current
}

/// Cleans a single transcript line. Returns `None` when nothing is left.
pub fn clean_line(line: &str) -> Option<Utterance> {
    // Stage directions may contain colons ("(to Kirk: quietly)"), so they go first.
    let stripped = strip_stage_directions(line);
    let (speaker, text) = match SPEAKER.captures(&stripped) {
        Some(c) => (Some(c[1].trim().to_uppercase()), c[2].to_owned()),
        None => (None, stripped.clone()),
    };
    let tokens = tokenize(&text);
    if tokens.is_empty() {
        return None;
    }
    Some(Utterance {
        speaker,
        tokens,
        text: text.split_whitespace().collect::<Vec<_>>().join(" "),
    })
}

/// Cleans every line, dropping lines that are empty after cleaning.
pub fn clean_transcript<S: AsRef<str>>(raw_lines: &[S]) -> Vec<Utterance> {
    raw_lines.iter().filter_map(|l| clean_line(l.as_ref())).collect()
}

pub fn is_scene_break(line: &str) -> bool {
    line.trim().is_empty() || SCENE_MARKER.is_match(line)
}

/// Splits a transcript into cleaned scenes. Empty scenes are omitted.
pub fn parse_transcript(text: &str) -> Vec<Vec<Utterance>> {
    let mut scenes = Vec::new();
    let mut current = Vec::new();
    for line in text.lines() {
        if is_scene_break(line) {
            if !current.is_empty() {
                scenes.push(std::mem::take(&mut current));
            }
        } else if let Some(u) = clean_line(line) {
            current.push(u);
        }
    }
    if !current.is_empty() {
        scenes.push(current);
    }
    scenes
}

fn join_context(utterances: &[Utterance]) -> Vec<String> {
    let mut post = Vec::new();
    for (i, u) in utterances.iter().enumerate() {
        if i > 0 {
            post.push(SEP.to_owned());
        }
        post.extend(u.tokens.iter().cloned());
    }
    post
}

/// Builds adjacency pairs `(u[i-1], u[i])` followed by context pairs whose
/// post concatenates `c` consecutive utterances (2 <= c <= max_context).
///
/// Pairs are grouped by depth, depth 1 first, and in scene order within a
/// depth, so the output for `max_context = k - 1` is a prefix of the output
/// for `k`.
pub fn build_pairs(scene: &[Utterance], max_context: usize, domain: &str) -> Vec<DialogPair> {
    let n = scene.len();
    let mut pairs = Vec::new();
    if n < 2 {
        return pairs;
    }
    for depth in 1..=max_context.min(n - 1) {
        for last in depth..n {
            pairs.push(DialogPair {
                post: join_context(&scene[last - depth..last]),
                response: scene[last].tokens.clone(),
                domain: domain.to_owned(),
                context_depth: depth,
            });
        }
    }
    pairs
}

fn word_count(tokens: &[String]) -> usize {
    tokens.iter().filter(|t| t.as_str() != SEP).count()
}

impl Corpus {
    pub fn new(pairs: Vec<DialogPair>) -> Self {
        let vocabulary = pairs
            .iter()
            .flat_map(|p| p.post.iter().chain(&p.response))
            .cloned()
            .collect();
        Self { pairs, vocabulary }
    }

    /// Parses a transcript and builds context-augmented pairs for every scene.
    pub fn from_transcript(text: &str, max_context: usize, domain: &str) -> Self {
        let pairs = parse_transcript(text)
            .iter()
            .flat_map(|scene| build_pairs(scene, max_context, domain))
            .collect();
        Self::new(pairs)
    }

    pub fn pairs(&self) -> &[DialogPair] {
        &self.pairs
    }

    pub fn vocabulary(&self) -> &BTreeSet<String> {
        &self.vocabulary
    }

    pub fn stats(&self) -> CorpusStats {
        corpus_stats(self)
    }

    /// Every post and response as a sentence, with context posts split back
    /// into their utterances at the separator token.
    pub fn sentences(&self) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        for pair in &self.pairs {
            for chunk in pair.post.split(|t| t == SEP) {
                if !chunk.is_empty() {
                    out.push(chunk.to_vec());
                }
            }
            out.push(pair.response.clone());
        }
        out
    }

    /// Writes `post \t response \t domain \t context_depth` lines.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for p in &self.pairs {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                p.post.join(" "),
                p.response.join(" "),
                p.domain,
                p.context_depth
            );
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let loc = || format!("pair file line {}", i + 1);
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::parse(loc(), "expected 4 tab-separated columns"));
            }
            let post: Vec<String> = cols[0].split_whitespace().map(str::to_owned).collect();
            let response: Vec<String> = cols[1].split_whitespace().map(str::to_owned).collect();
            let context_depth: usize = cols[3]
                .trim()
                .parse()
                .map_err(|_| Error::parse(loc(), "context_depth is not an integer"))?;
            if post.is_empty() || response.is_empty() || context_depth == 0 {
                return Err(Error::parse(loc(), "empty post/response or zero context depth"));
            }
            pairs.push(DialogPair {
                post,
                response,
                domain: cols[2].to_owned(),
                context_depth,
            });
        }
        Ok(Self::new(pairs))
    }
}

/// Pair count and mean token length over all posts and responses. Separator
/// tokens are not counted as words.
pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let pair_count = corpus.pairs.len();
    if pair_count == 0 {
        return CorpusStats {
            pair_count: 0,
            mean_utterance_length: 0.0,
        };
    }
    let total: usize = corpus
        .pairs
        .iter()
        .map(|p| word_count(&p.post) + word_count(&p.response))
        .sum();
    CorpusStats {
        pair_count,
        mean_utterance_length: total as f64 / (2 * pair_count) as f64,
    }
}
