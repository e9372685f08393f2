//! `train-all` configuration file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use stylebot_core::classifier::RouterConfig;
use stylebot_core::generator::seq2seq::{DecodeConfig, Seq2SeqConfig, TrainConfig};
use stylebot_core::ngram_lm::LmConfig;

/// A problem with the configuration itself; the binary exits with code 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainAllConfig {
    pub seed: Option<u64>,
    /// Where artifacts are written, relative to the config file.
    pub output_dir: Option<PathBuf>,
    pub corpora: Corpora,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub router: RouterConfig,
    #[serde(default)]
    pub lm: LmConfig,
    #[serde(default)]
    pub style_generator: GeneratorSection,
    #[serde(default = "GeneratorSection::retrieval")]
    pub general_generator: GeneratorSection,
    #[serde(default)]
    pub pipeline: PipelineSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corpora {
    pub style_transcript: Option<PathBuf>,
    pub general_transcripts: Option<Vec<PathBuf>>,
    pub lm_corpus: Option<PathBuf>,
    pub tagged_corpus: Option<PathBuf>,
    pub keywords: Option<PathBuf>,
    pub fallbacks: Option<PathBuf>,
    pub suffix_rules: Option<PathBuf>,
    #[serde(default = "default_style_domain")]
    pub style_domain: String,
    #[serde(default = "default_general_domain")]
    pub general_domain: String,
}

fn default_style_domain() -> String {
    "startrek".into()
}

fn default_general_domain() -> String {
    "general".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub max_context: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self { max_context: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    #[default]
    Seq2seq,
    Retrieval,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorSection {
    pub kind: GeneratorKind,
    pub model: Seq2SeqConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
}

impl GeneratorSection {
    fn retrieval() -> Self {
        Self {
            kind: GeneratorKind::Retrieval,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub gate_low: f64,
    pub gate_high: f64,
    pub confidence_floor: f64,
    pub shift_passes: usize,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            gate_low: 0.3,
            gate_high: 2.0,
            confidence_floor: -3.5,
            shift_passes: 1,
        }
    }
}

/// Every input path resolved against the config file's directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolvedInputs {
    pub style_transcript: PathBuf,
    pub general_transcripts: Vec<PathBuf>,
    pub lm_corpus: PathBuf,
    pub tagged_corpus: PathBuf,
    pub keywords: PathBuf,
    pub fallbacks: PathBuf,
    pub suffix_rules: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: TrainAllConfig,
    pub inputs: ResolvedInputs,
    pub output_dir: PathBuf,
    pub seed: u64,
}

fn required<'a, T>(value: &'a Option<T>, field: &str) -> Result<&'a T, ConfigError> {
    value
        .as_ref()
        .ok_or_else(|| ConfigError(format!("missing required field `{field}`")))
}

fn existing(base: &Path, path: &Path, field: &str) -> Result<PathBuf, ConfigError> {
    let full = base.join(path);
    if !full.is_file() {
        return Err(ConfigError(format!("`{field}`: cannot read {}", full.display())));
    }
    Ok(full)
}

impl LoadedConfig {
    /// Reads and validates a config file. `seed` and `output_dir` override
    /// the file's values.
    pub fn load(path: &Path, seed: Option<u64>, output_dir: Option<&Path>) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let config: TrainAllConfig =
            toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));

        let c = &config.corpora;
        let general = required(&c.general_transcripts, "corpora.general_transcripts")?;
        if general.is_empty() {
            return Err(ConfigError("`corpora.general_transcripts` is empty".into()));
        }
        let inputs = ResolvedInputs {
            style_transcript: existing(
                base,
                required(&c.style_transcript, "corpora.style_transcript")?,
                "corpora.style_transcript",
            )?,
            general_transcripts: general
                .iter()
                .map(|p| existing(base, p, "corpora.general_transcripts"))
                .collect::<Result<_, _>>()?,
            lm_corpus: existing(base, required(&c.lm_corpus, "corpora.lm_corpus")?, "corpora.lm_corpus")?,
            tagged_corpus: existing(
                base,
                required(&c.tagged_corpus, "corpora.tagged_corpus")?,
                "corpora.tagged_corpus",
            )?,
            keywords: existing(base, required(&c.keywords, "corpora.keywords")?, "corpora.keywords")?,
            fallbacks: existing(base, required(&c.fallbacks, "corpora.fallbacks")?, "corpora.fallbacks")?,
            suffix_rules: c
                .suffix_rules
                .as_ref()
                .map(|p| existing(base, p, "corpora.suffix_rules"))
                .transpose()?,
        };
        if config.corpus.max_context == 0 {
            return Err(ConfigError("`corpus.max_context` must be >= 1".into()));
        }
        for (name, section) in [
            ("style_generator", &config.style_generator),
            ("general_generator", &config.general_generator),
        ] {
            if section.kind == GeneratorKind::Seq2seq {
                section
                    .model
                    .validate()
                    .map_err(|e| ConfigError(format!("`{name}.model`: {e}")))?;
                if section.train.batch_size == 0 {
                    return Err(ConfigError(format!("`{name}.train.batch_size` must be >= 1")));
                }
            }
            if section.decode.beam_width == 0 || section.decode.max_len == 0 {
                return Err(ConfigError(format!(
                    "`{name}.decode` needs beam_width >= 1 and max_len >= 1"
                )));
            }
        }
        let output_dir = match output_dir {
            Some(dir) => dir.to_path_buf(),
            None => base.join(config.output_dir.clone().unwrap_or_else(|| PathBuf::from("artifacts"))),
        };
        let seed = seed.or(config.seed).unwrap_or(7);
        Ok(Self {
            config,
            inputs,
            output_dir,
            seed,
        })
    }
}
