//! Nearest-post retrieval over TF-IDF vectors.

use serde::{Deserialize, Serialize};

use crate::classifier::{fit_tfidf, SparseVector, TfidfVocabulary};
use crate::corpus::DialogPair;
use crate::{Error, Result};

use super::{GeneratorOutput, ResponseGenerator};

/// Similarity floor before taking the log for the confidence.
pub const SIMILARITY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "RetrievalParts", into = "RetrievalParts")]
pub struct RetrievalGenerator {
    vocabulary: TfidfVocabulary,
    pairs: Vec<DialogPair>,
    vectors: Vec<SparseVector>,
}

#[derive(Serialize, Deserialize)]
struct RetrievalParts {
    vocabulary: TfidfVocabulary,
    pairs: Vec<DialogPair>,
}

impl From<RetrievalParts> for RetrievalGenerator {
    fn from(parts: RetrievalParts) -> Self {
        Self::with_vocabulary(parts.vocabulary, parts.pairs)
    }
}

impl From<RetrievalGenerator> for RetrievalParts {
    fn from(g: RetrievalGenerator) -> Self {
        Self {
            vocabulary: g.vocabulary,
            pairs: g.pairs,
        }
    }
}

impl RetrievalGenerator {
    /// Indexes every pair's post with unigram + bigram TF-IDF over raw tokens.
    pub fn build(pairs: Vec<DialogPair>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let posts: Vec<Vec<String>> = pairs.iter().map(|p| p.post.clone()).collect();
        let vocabulary = fit_tfidf(&posts, usize::MAX, true)?;
        Ok(Self::with_vocabulary(vocabulary, pairs))
    }

    fn with_vocabulary(vocabulary: TfidfVocabulary, pairs: Vec<DialogPair>) -> Self {
        let vectors = pairs.iter().map(|p| vocabulary.transform(&p.post)).collect();
        Self {
            vocabulary,
            pairs,
            vectors,
        }
    }

    pub fn pairs(&self) -> &[DialogPair] {
        &self.pairs
    }

    /// Index of the most similar post and its cosine similarity. Ties go to
    /// the lowest index.
    pub fn nearest<S: AsRef<str>>(&self, post: &[S]) -> Result<(usize, f64)> {
        if self.pairs.is_empty() {
            return Err(Error::EmptyIndex);
        }
        let query = self.vocabulary.transform(post);
        let mut best = (0, f64::NEG_INFINITY);
        for (i, v) in self.vectors.iter().enumerate() {
            // both sides are unit vectors (or empty), so the dot is the cosine
            let sim = query.dot(v);
            if sim > best.1 {
                best = (i, sim);
            }
        }
        Ok((best.0, best.1.clamp(0.0, 1.0)))
    }

    pub fn retrieve<S: AsRef<str>>(&self, post: &[S]) -> Result<GeneratorOutput> {
        let (i, sim) = self.nearest(post)?;
        Ok(GeneratorOutput {
            tokens: self.pairs[i].response.clone(),
            confidence: sim.max(SIMILARITY_FLOOR).ln().min(0.0),
        })
    }
}

impl ResponseGenerator for RetrievalGenerator {
    fn generate(&self, post: &[String]) -> Result<GeneratorOutput> {
        self.retrieve(post)
    }

    fn kind(&self) -> &'static str {
        "retrieval"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(post: &str, response: &str) -> DialogPair {
        DialogPair {
            post: post.split_whitespace().map(str::to_owned).collect(),
            response: response.split_whitespace().map(str::to_owned).collect(),
            domain: "t".into(),
            context_depth: 1,
        }
    }

    #[test]
    fn exact_post_has_full_confidence() {
        let g =
            RetrievalGenerator::build(vec![pair("red alert", "shields up"), pair("warp speed", "aye sir")]).unwrap();
        let out = g.retrieve(&["warp", "speed"]).unwrap();
        assert_eq!(out.tokens, ["aye", "sir"]);
        assert!(out.confidence.abs() < 1e-12);
    }

    #[test]
    fn all_oov_query_falls_to_first_pair() {
        let g =
            RetrievalGenerator::build(vec![pair("red alert", "shields up"), pair("warp speed", "aye sir")]).unwrap();
        let out = g.retrieve(&["xyzzy"]).unwrap();
        assert_eq!(out.tokens, ["shields", "up"]);
        assert_eq!(out.confidence, SIMILARITY_FLOOR.ln());
    }

    #[test]
    fn empty_index_is_error() {
        assert!(matches!(RetrievalGenerator::build(vec![]), Err(Error::EmptyIndex)));
    }

    #[test]
    fn hand_computed_cosines() {
        // posts: "a b", "b c", "c d"; unigrams only matter for the query
        // "a c". df: a=1 b=2 c=2 d=1, bigrams df 1 each. N=3.
        let g = RetrievalGenerator::build(vec![pair("a b", "r0"), pair("b c", "r1"), pair("c d", "r2")]).unwrap();
        let (ia, ib) = ((3f64).ln(), (1.5f64).ln());
        // post vectors: [a,b,"a b"] = [ia, ib, ia]; [b,c,"b c"] = [ib, ib, ia]; [c,d,"c d"] = [ib, ia, ia]
        let n0 = (2.0 * ia * ia + ib * ib).sqrt();
        let n1 = (2.0 * ib * ib + ia * ia).sqrt();
        let nq = (ia * ia + ib * ib).sqrt();
        let cos0 = ia * ia / (n0 * nq);
        let cos1 = ib * ib / (n1 * nq);
        let cos2 = ib * ib / (n0 * nq);
        assert!(cos0 > cos1 && cos0 > cos2);
        let (i, sim) = g.nearest(&["a", "c"]).unwrap();
        assert_eq!(i, 0);
        assert!((sim - cos0).abs() < 1e-12);
    }

    #[test]
    fn survives_serialization() {
        let g = RetrievalGenerator::build(vec![pair("red alert", "shields up")]).unwrap();
        let back: RetrievalGenerator = serde_json::from_str(&serde_json::to_string(&g).unwrap()).unwrap();
        assert_eq!(back, g);
    }
}
