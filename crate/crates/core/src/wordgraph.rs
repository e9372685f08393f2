//! Word graph over `(word, POS)` nodes and single-word insertion.
//!
//! The graph records which tagged tokens follow each other in the style
//! corpus, with sentence boundaries as two reserved nodes. A word `c` can be
//! inserted into a gap of an input sentence when the graph has both an edge
//! from the gap's left neighbour to `c` and an edge from `c` to the right
//! neighbour. Candidates are ranked with a bigram LM.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::ngram_lm::BigramLM;
use crate::textproc::{PosTagger, TaggedToken};
use crate::{Error, Result, BOS, EOS};

pub type GraphNode = TaggedToken;

/// Scores closer than this are treated as tied.
pub const SCORE_TIE_EPSILON: f64 = 1e-12;

pub fn start_node() -> GraphNode {
    GraphNode::new(BOS, BOS)
}

pub fn end_node() -> GraphNode {
    GraphNode::new(EOS, EOS)
}

fn is_boundary(node: &GraphNode) -> bool {
    node.pos == BOS || node.pos == EOS
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordGraph {
    nodes: BTreeSet<GraphNode>,
    outgoing: BTreeMap<GraphNode, BTreeMap<GraphNode, u64>>,
    by_word: BTreeMap<String, BTreeSet<GraphNode>>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct InsertionCandidate {
    pub tokens: Vec<String>,
    pub inserted_word: String,
    /// 0 = before the first word, n = after the last
    pub position: usize,
    pub source_pos: String,
}

/// Persisted form: nodes plus `(from, to, count)` edges.
#[derive(Serialize, Deserialize)]
struct GraphFile {
    nodes: Vec<GraphNode>,
    edges: Vec<(GraphNode, GraphNode, u64)>,
}

impl Serialize for WordGraph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        GraphFile {
            nodes: self.nodes.iter().cloned().collect(),
            edges: self.edges().map(|(a, b, c)| (a.clone(), b.clone(), c)).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for WordGraph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let file = GraphFile::deserialize(deserializer)?;
        let mut graph = WordGraph::default();
        for node in file.nodes {
            graph.add_node(node);
        }
        for (from, to, count) in file.edges {
            for n in [&from, &to] {
                if !is_boundary(n) && !graph.nodes.contains(n) {
                    return Err(serde::de::Error::custom(format!(
                        "edge endpoint {}/{} is not a node",
                        n.word, n.pos
                    )));
                }
            }
            if count == 0 {
                return Err(serde::de::Error::custom("edge count must be >= 1"));
            }
            *graph.outgoing.entry(from).or_default().entry(to).or_default() += count;
        }
        Ok(graph)
    }
}

impl Artifact for WordGraph {
    const FORMAT: &'static str = "stylebot/word-graph";
    const VERSION: u32 = 1;
}

/// Adds every tagged token as a node and every adjacent pair of the wrapped
/// sentence `<s> t1 .. tn </s>` as a counted edge.
pub fn build_graph(tagged_sentences: &[Vec<TaggedToken>]) -> Result<WordGraph> {
    let mut graph = WordGraph::default();
    for sentence in tagged_sentences.iter().filter(|s| !s.is_empty()) {
        let mut prev = start_node();
        for tok in sentence {
            graph.add_node(tok.clone());
            graph.add_edge(prev, tok.clone());
            prev = tok.clone();
        }
        graph.add_edge(prev, end_node());
    }
    if graph.nodes.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(graph)
}

impl WordGraph {
    fn add_node(&mut self, node: GraphNode) {
        self.by_word.entry(node.word.clone()).or_default().insert(node.clone());
        self.nodes.insert(node);
    }

    fn add_edge(&mut self, from: GraphNode, to: GraphNode) {
        *self.outgoing.entry(from).or_default().entry(to).or_default() += 1;
    }

    pub fn nodes(&self) -> &BTreeSet<GraphNode> {
        &self.nodes
    }

    pub fn edges(&self) -> impl Iterator<Item = (&GraphNode, &GraphNode, u64)> {
        self.outgoing
            .iter()
            .flat_map(|(a, m)| m.iter().map(move |(b, &c)| (a, b, c)))
    }

    pub fn edge_count(&self, from: &GraphNode, to: &GraphNode) -> u64 {
        self.outgoing.get(from).and_then(|m| m.get(to)).copied().unwrap_or(0)
    }

    pub fn contains(&self, node: &GraphNode) -> bool {
        self.nodes.contains(node)
    }

    /// Graph nodes standing for an input token: the exact `(word, pos)` node
    /// if present, otherwise every node with the same word.
    pub fn resolve(&self, token: &TaggedToken) -> Vec<GraphNode> {
        if self.nodes.contains(token) {
            return vec![token.clone()];
        }
        self.by_word
            .get(&token.word)
            .map(|s| s.iter().cloned().collect())
            .unwrap_or_default()
    }

    /// Every single-word insertion witnessed by two graph edges. One
    /// candidate per (position, word); when a word is reachable under
    /// several tags, the tag with the largest combined witness count wins,
    /// ties going to the smaller tag. Ordered by position, then word.
    pub fn insertion_candidates(&self, tagged_input: &[TaggedToken]) -> Vec<InsertionCandidate> {
        let n = tagged_input.len();
        let words: Vec<String> = tagged_input.iter().map(|t| t.word.clone()).collect();
        let mut out = Vec::new();
        for position in 0..=n {
            let left = if position == 0 {
                vec![start_node()]
            } else {
                self.resolve(&tagged_input[position - 1])
            };
            let right = if position == n {
                vec![end_node()]
            } else {
                self.resolve(&tagged_input[position])
            };
            if left.is_empty() || right.is_empty() {
                continue;
            }
            // word -> (support, pos)
            let mut best: BTreeMap<&str, (u64, &str)> = BTreeMap::new();
            for l in &left {
                let Some(next) = self.outgoing.get(l) else { continue };
                for (c, &in_count) in next {
                    if is_boundary(c) {
                        continue;
                    }
                    let out_count: u64 = right.iter().map(|r| self.edge_count(c, r)).sum();
                    if out_count == 0 {
                        continue;
                    }
                    let support = in_count + out_count;
                    let slot = best.entry(c.word.as_str()).or_insert((0, c.pos.as_str()));
                    if support > slot.0 || (support == slot.0 && c.pos.as_str() < slot.1) {
                        *slot = (support, c.pos.as_str());
                    }
                }
            }
            for (word, (_, pos)) in best {
                let mut tokens = words.clone();
                tokens.insert(position, word.to_owned());
                out.push(InsertionCandidate {
                    tokens,
                    inserted_word: word.to_owned(),
                    position,
                    source_pos: pos.to_owned(),
                });
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub tokens: Vec<String>,
    /// length-normalized log-probability: `log_prob / (len + 1)`
    pub score: f64,
    pub has_keyword: bool,
    /// `None` for the unmodified input
    pub insertion: Option<InsertionCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftResult {
    pub best: Vec<String>,
    pub ranked: Vec<ScoredCandidate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftConfig {
    /// Number of insertion rounds; each round starts from the previous best.
    pub passes: usize,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        Self { passes: 1 }
    }
}

pub fn normalized_score(lm: &BigramLM, tokens: &[String]) -> f64 {
    lm.log_prob(tokens) / (tokens.len() + 1) as f64
}

/// Orders candidates by score (descending). Runs of scores within
/// [`SCORE_TIE_EPSILON`] of the run's leader are tied: keyword-bearing
/// candidates come first, then the joined sentence in lexicographic order.
pub fn rank_candidates(mut scored: Vec<ScoredCandidate>) -> Vec<ScoredCandidate> {
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens)));
    let mut ranked = Vec::with_capacity(scored.len());
    let mut rest = scored.into_iter().peekable();
    while let Some(leader) = rest.next() {
        let mut group = vec![leader];
        while let Some(next) = rest.peek() {
            if (group[0].score - next.score).abs() <= SCORE_TIE_EPSILON {
                group.push(rest.next().expect("peeked"));
            } else {
                break;
            }
        }
        group.sort_by(|a, b| {
            b.has_keyword
                .cmp(&a.has_keyword)
                .then_with(|| a.tokens.join(" ").cmp(&b.tokens.join(" ")))
        });
        ranked.extend(group);
    }
    ranked
}

fn shift_once(
    graph: &WordGraph,
    lm: &BigramLM,
    keywords: &BTreeSet<String>,
    input: &[String],
    tagger: &dyn PosTagger,
) -> Vec<ScoredCandidate> {
    let score = |tokens: Vec<String>, insertion: Option<InsertionCandidate>| ScoredCandidate {
        score: normalized_score(lm, &tokens),
        has_keyword: tokens.iter().any(|t| keywords.contains(t)),
        tokens,
        insertion,
    };
    let tagged = tagger.tag(input);
    let mut all = vec![score(input.to_vec(), None)];
    for cand in graph.insertion_candidates(&tagged) {
        all.push(score(cand.tokens.clone(), Some(cand)));
    }
    rank_candidates(all)
}

/// Picks the best of the input and all its single insertions. With more
/// than one pass, the winner of each pass is shifted again; the ranking of
/// the last pass is returned.
pub fn style_shift(
    graph: &WordGraph,
    lm: &BigramLM,
    keywords: &BTreeSet<String>,
    input: &[String],
    tagger: &dyn PosTagger,
    config: ShiftConfig,
) -> ShiftResult {
    let mut current = input.to_vec();
    let mut ranked = Vec::new();
    for _ in 0..config.passes.max(1) {
        ranked = shift_once(graph, lm, keywords, &current, tagger);
        let winner = ranked[0].tokens.clone();
        if winner == current {
            break;
        }
        current = winner;
    }
    ShiftResult {
        best: ranked[0].tokens.clone(),
        ranked,
    }
}
