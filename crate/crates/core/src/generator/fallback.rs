//! Canned standard responses, including Klingon lines.

use serde::{Deserialize, Serialize};

use crate::textproc::tokenize;
use crate::{Error, Result};

pub const KLINGON_PREFIX: &str = "klingon:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardResponse {
    pub text: String,
    pub tokens: Vec<String>,
    pub klingon: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardResponseSet {
    responses: Vec<StandardResponse>,
    pub selection_seed: u64,
}

/// SplitMix64 finalizer.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl StandardResponseSet {
    pub fn new(responses: Vec<StandardResponse>, selection_seed: u64) -> Result<Self> {
        if responses.is_empty() || responses.iter().any(|r| r.tokens.is_empty()) {
            return Err(Error::EmptyResponseSet);
        }
        Ok(Self {
            responses,
            selection_seed,
        })
    }

    /// One response per line; lines starting with `klingon:` are Klingon.
    /// Blank lines and `#` comments are skipped.
    pub fn parse(text: &str, selection_seed: u64) -> Result<Self> {
        let mut responses = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (klingon, body) = match line.strip_prefix(KLINGON_PREFIX) {
                Some(rest) => (true, rest.trim()),
                None => (false, line),
            };
            let tokens = tokenize(body);
            if tokens.is_empty() {
                continue;
            }
            responses.push(StandardResponse {
                text: body.to_owned(),
                tokens,
                klingon,
            });
        }
        Self::new(responses, selection_seed)
    }

    pub fn responses(&self) -> &[StandardResponse] {
        &self.responses
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn contains(&self, tokens: &[String]) -> bool {
        self.responses.iter().any(|r| r.tokens == tokens)
    }

    pub fn index_for(&self, turn_counter: u64) -> usize {
        (mix(self.selection_seed ^ mix(turn_counter)) % self.responses.len() as u64) as usize
    }

    /// Deterministic choice driven by a seeded hash of the turn counter.
    pub fn fallback(&self, turn_counter: u64) -> &StandardResponse {
        &self.responses[self.index_for(turn_counter)]
    }
}
