//! Versioned JSON envelopes for persisted models.
//!
//! Every artifact is written as
//! `{"format": "<kind>", "version": <n>, "payload": {...}}` so that loaders
//! can reject files produced for a different component or schema revision.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    format: &'a str,
    version: u32,
    payload: &'a T,
}

#[derive(Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    payload: T,
}

/// A model type that can be persisted in a versioned envelope.
pub trait Artifact: Serialize + DeserializeOwned {
    const FORMAT: &'static str;
    const VERSION: u32;

    fn to_json(&self) -> Result<String> {
        let env = EnvelopeRef {
            format: Self::FORMAT,
            version: Self::VERSION,
            payload: self,
        };
        let mut s = serde_json::to_string_pretty(&env)?;
        s.push('\n');
        Ok(s)
    }

    fn from_json(text: &str) -> Result<Self> {
        let env: Envelope<serde_json::Value> = serde_json::from_str(text)?;
        if env.format != Self::FORMAT || env.version != Self::VERSION {
            return Err(Error::ArtifactFormat {
                expected: Self::FORMAT,
                version: Self::VERSION,
                found: format!("{} v{}", env.format, env.version),
            });
        }
        Ok(serde_json::from_value(env.payload)?)
    }

    fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
