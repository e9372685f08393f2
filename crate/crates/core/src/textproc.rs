//! Tokenization, stop-word filtering and a lexicon + suffix POS tagger.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::{Error, Result};

/// Characters split off as standalone tokens.
pub const PUNCTUATION: [char; 8] = ['.', ',', '!', '?', ';', ':', '\'', '"'];

/// The 36 Penn Treebank word tags followed by the punctuation tags.
pub const TAG_SET: [&str; 45] = [
    "CC", "CD", "DT", "EX", "FW", "IN", "JJ", "JJR", "JJS", "LS", "MD", "NN", "NNS", "NNP", "NNPS", "PDT", "POS",
    "PRP", "PRP$", "RB", "RBR", "RBS", "RP", "SYM", "TO", "UH", "VB", "VBD", "VBG", "VBN", "VBP", "VBZ", "WDT", "WP",
    "WP$", "WRB", ".", ",", ":", "``", "''", "(", ")", "#", "$",
];

pub fn is_valid_tag(tag: &str) -> bool {
    TAG_SET.contains(&tag)
}

const STOPWORDS_EN: &str = include_str!("../data/stopwords_en.txt");
const SUFFIX_RULES: &str = include_str!("../data/suffix_rules.tsv");

static STOPWORDS: LazyLock<BTreeSet<&'static str>> =
    LazyLock::new(|| STOPWORDS_EN.lines().map(str::trim).filter(|l| !l.is_empty()).collect());

/// Lower-cases `text`, splits on whitespace and splits every punctuation
/// character in [`PUNCTUATION`] into its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.chars() {
            if PUNCTUATION.contains(&ch) {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(ch.to_string());
            } else {
                word.extend(ch.to_lowercase());
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    tokens
}

pub fn is_punctuation(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| PUNCTUATION.contains(&c))
}

/// Joins tokens back into display text: punctuation attaches to the
/// preceding word and an apostrophe glues its neighbours (`what ' s` -> `what's`).
pub fn detokenize<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut glue_next = false;
    for tok in tokens {
        let tok = tok.as_ref();
        let attach = glue_next || (is_punctuation(tok) && tok != "\"");
        if !out.is_empty() && !attach {
            out.push(' ');
        }
        out.push_str(tok);
        glue_next = tok == "'";
    }
    out
}

/// The shipped English stop-word list.
pub fn stopwords() -> &'static BTreeSet<&'static str> {
    &STOPWORDS
}

pub fn is_stopword(token: &str) -> bool {
    STOPWORDS.contains(token)
}

/// Drops every token found in the shipped stop-word list, preserving order.
pub fn remove_stopwords<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| !is_stopword(t))
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaggedToken {
    pub word: String,
    pub pos: String,
}

impl TaggedToken {
    pub fn new(word: impl Into<String>, pos: impl Into<String>) -> Self {
        Self {
            word: word.into(),
            pos: pos.into(),
        }
    }
}

/// Anything able to assign one tag per token.
pub trait PosTagger: Send + Sync {
    fn tag(&self, tokens: &[String]) -> Vec<TaggedToken>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub tag: String,
    pub counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuffixRule {
    pub suffix: String,
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggerModel {
    pub lexicon: BTreeMap<String, LexiconEntry>,
    pub suffix_rules: Vec<SuffixRule>,
    pub default_tag: String,
}

impl Artifact for TaggerModel {
    const FORMAT: &'static str = "stylebot/tagger";
    const VERSION: u32 = 1;
}

/// The shipped suffix table, in match order.
pub fn default_suffix_rules() -> Vec<SuffixRule> {
    parse_suffix_rules(SUFFIX_RULES).expect("shipped suffix table is valid")
}

/// Parses `suffix<TAB>TAG` lines; `#` starts a comment line.
pub fn parse_suffix_rules(text: &str) -> Result<Vec<SuffixRule>> {
    let mut rules = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split_whitespace();
        let (Some(suffix), Some(tag), None) = (cols.next(), cols.next(), cols.next()) else {
            return Err(Error::parse(
                format!("suffix table line {}", i + 1),
                "expected `suffix TAG`",
            ));
        };
        if !is_valid_tag(tag) {
            return Err(Error::parse(
                format!("suffix table line {}", i + 1),
                format!("unknown tag `{tag}`"),
            ));
        }
        rules.push(SuffixRule {
            suffix: suffix.to_owned(),
            tag: tag.to_owned(),
        });
    }
    Ok(rules)
}

/// Parses a tagged corpus: one sentence per line, tokens written `word_TAG`.
/// The tag is everything after the last underscore. Words are lower-cased.
pub fn parse_tagged_corpus(text: &str) -> Result<Vec<Vec<TaggedToken>>> {
    let mut sentences = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut sentence = Vec::new();
        for item in line.split_whitespace() {
            let Some((word, tag)) = item.rsplit_once('_') else {
                return Err(Error::parse(
                    format!("tagged corpus line {}", i + 1),
                    format!("token `{item}` has no _TAG"),
                ));
            };
            if word.is_empty() || !is_valid_tag(tag) {
                return Err(Error::parse(
                    format!("tagged corpus line {}", i + 1),
                    format!("bad token `{item}`"),
                ));
            }
            sentence.push(TaggedToken::new(word.to_lowercase(), tag));
        }
        sentences.push(sentence);
    }
    Ok(sentences)
}

fn majority_tag(counts: &BTreeMap<String, u64>) -> String {
    // BTreeMap iterates tags in ascending order, so keeping the first maximum
    // breaks ties toward the lexicographically smallest tag.
    let mut best: Option<(&String, u64)> = None;
    for (tag, &n) in counts {
        if best.is_none_or(|(_, b)| n > b) {
            best = Some((tag, n));
        }
    }
    best.map(|(t, _)| t.clone()).unwrap_or_default()
}

/// Trains a lexicon tagger with the shipped suffix table.
pub fn train_tagger(corpus: &[Vec<TaggedToken>]) -> Result<TaggerModel> {
    train_tagger_with_rules(corpus, default_suffix_rules())
}

pub fn train_tagger_with_rules(corpus: &[Vec<TaggedToken>], suffix_rules: Vec<SuffixRule>) -> Result<TaggerModel> {
    let mut per_word: BTreeMap<String, BTreeMap<String, u64>> = BTreeMap::new();
    let mut overall: BTreeMap<String, u64> = BTreeMap::new();
    for tok in corpus.iter().flatten() {
        if !is_valid_tag(&tok.pos) {
            return Err(Error::parse("tagger corpus", format!("unknown tag `{}`", tok.pos)));
        }
        *per_word
            .entry(tok.word.clone())
            .or_default()
            .entry(tok.pos.clone())
            .or_default() += 1;
        *overall.entry(tok.pos.clone()).or_default() += 1;
    }
    if overall.is_empty() {
        return Err(Error::EmptyTaggerCorpus);
    }
    let lexicon = per_word
        .into_iter()
        .map(|(word, counts)| {
            let tag = majority_tag(&counts);
            (word, LexiconEntry { tag, counts })
        })
        .collect();
    Ok(TaggerModel {
        lexicon,
        suffix_rules,
        default_tag: majority_tag(&overall),
    })
}

impl TaggerModel {
    pub fn tag_word(&self, word: &str) -> &str {
        if let Some(entry) = self.lexicon.get(word) {
            return &entry.tag;
        }
        self.suffix_rules
            .iter()
            .find(|r| word.len() > r.suffix.len() && word.ends_with(&r.suffix))
            .map(|r| r.tag.as_str())
            .unwrap_or(&self.default_tag)
    }

    pub fn pos_tag<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TaggedToken> {
        tokens
            .iter()
            .map(|t| {
                let t = t.as_ref();
                TaggedToken::new(t, self.tag_word(t))
            })
            .collect()
    }
}

impl PosTagger for TaggerModel {
    fn tag(&self, tokens: &[String]) -> Vec<TaggedToken> {
        self.pos_tag(tokens)
    }
}
