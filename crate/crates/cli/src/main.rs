use std::collections::BTreeSet;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use stylebot::config::{ConfigError, LoadedConfig};
use stylebot::{chat, server, train};
use stylebot_core::artifact::Artifact;
use stylebot_core::classifier::TfidfRouter;
use stylebot_core::evalharness::{
    aggregate_annotations, emit_annotation_template, run_eval, AnnotationSheet, EvalSet, OverlapMode,
};
use stylebot_core::ngram_lm::BigramLM;
use stylebot_core::pipeline::{parse_keywords, Manifest};
use stylebot_core::textproc::{detokenize, tokenize, TaggerModel};
use stylebot_core::wordgraph::{style_shift, ShiftConfig, WordGraph};

const DEFAULT_MANIFEST: &str = "artifacts/manifest.json";

#[derive(Parser)]
#[command(name = "stylebot", version, about = "Persona style-shifting dialog engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ManifestArg {
    /// Engine manifest written by `train-all`.
    #[arg(long, env = "STYLEBOT_MANIFEST", default_value = DEFAULT_MANIFEST)]
    manifest: PathBuf,
    /// Overrides the standard-response selection seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OverlapArg {
    Token,
    Type,
}

#[derive(Subcommand)]
enum Command {
    /// Train every component from a TOML config and write the artifacts.
    TrainAll {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output_dir` in the config).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Validate the config and inputs, write nothing.
        #[arg(long)]
        dry_run: bool,
        #[arg(long)]
        json: bool,
    },
    /// Interactive chat on stdin. `:trace` toggles traces, `:quit` exits.
    Chat {
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Serve the chat API and static UI.
    Serve {
        #[command(flatten)]
        manifest: ManifestArg,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Directory of built UI assets served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
    },
    /// Run the fixed evaluation set through the engine.
    Eval {
        #[command(flatten)]
        manifest: ManifestArg,
        /// `utterance<TAB>expected_domain` file.
        #[arg(long)]
        set: PathBuf,
        #[arg(long)]
        json: bool,
        #[arg(long, value_enum, default_value = "token")]
        overlap_mode: OverlapArg,
        /// Write a blank annotation sheet for the responses to this path.
        #[arg(long)]
        annotation_template: Option<PathBuf>,
        /// Filled annotation sheet to aggregate into the report.
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
    /// Rank single-word insertions for a sentence.
    Shift {
        sentence: String,
        /// Take graph, LM, tagger and keywords from a manifest.
        #[arg(long, conflicts_with_all = ["graph", "lm", "tagger"])]
        manifest: Option<PathBuf>,
        #[arg(long, requires_all = ["lm", "tagger"])]
        graph: Option<PathBuf>,
        #[arg(long)]
        lm: Option<PathBuf>,
        #[arg(long)]
        tagger: Option<PathBuf>,
        /// Keyword file; overrides the manifest's.
        #[arg(long)]
        keywords: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        passes: usize,
        #[arg(long)]
        json: bool,
    },
    /// Route an utterance with a trained router.
    Classify {
        text: String,
        #[arg(long, conflicts_with = "manifest")]
        router: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Perplexity of a text file (one sentence per line) under a bigram LM.
    Perplexity {
        model: PathBuf,
        textfile: PathBuf,
        /// Mean of per-sentence perplexities instead of token-weighted.
        #[arg(long)]
        sentence_average: bool,
    },
}

fn manifest_part(manifest: &Path, pick: impl FnOnce(&Manifest) -> &Path) -> Result<PathBuf> {
    let m = Manifest::load(manifest)?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    Ok(base.join(pick(&m)))
}

fn run(cli: Cli) -> Result<()> {
    let mut out = io::stdout();
    match cli.command {
        Command::TrainAll {
            config,
            out: out_dir,
            seed,
            dry_run,
            json,
        } => {
            let loaded = LoadedConfig::load(&config, seed, out_dir.as_deref())?;
            if dry_run {
                write!(out, "{}", train::dry_run(&loaded)?)?;
            } else {
                let summary = train::train_all(&loaded)?;
                if json {
                    writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
                } else {
                    write!(out, "{}", summary.render())?;
                }
            }
        }
        Command::Chat { manifest } => {
            let loaded = Manifest::load_engine(&manifest.manifest, manifest.seed)?;
            let stdin = io::stdin();
            chat::run_chat(&loaded.engine, stdin.lock(), out.lock())?;
        }
        Command::Serve {
            manifest,
            bind,
            static_dir,
        } => {
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&bind)
                    .await
                    .with_context(|| format!("binding {bind}"))?;
                // Scripts read this line to learn the port when binding to :0.
                println!("listening on {}", listener.local_addr()?);
                io::stdout().flush()?;
                let state = server::AppState::new(manifest.manifest.clone());
                tokio::spawn(server::load_in_background(state.clone(), manifest.seed));
                let app = server::router(state, static_dir.as_deref());
                axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                anyhow::Ok(())
            })?;
        }
        Command::Eval {
            manifest,
            set,
            json,
            overlap_mode,
            annotation_template,
            annotations,
        } => {
            let loaded = Manifest::load_engine(&manifest.manifest, manifest.seed)?;
            let text = std::fs::read_to_string(&set).with_context(|| format!("reading {}", set.display()))?;
            let eval_set = EvalSet::parse(&text)?;
            let mode = match overlap_mode {
                OverlapArg::Token => OverlapMode::Token,
                OverlapArg::Type => OverlapMode::Type,
            };
            let mut report = run_eval(
                &loaded.engine,
                &eval_set,
                &loaded.engine.style_lm,
                &loaded.style_vocab,
                mode,
            )?;
            if let Some(path) = annotation_template {
                std::fs::write(&path, emit_annotation_template(&report))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            if let Some(path) = annotations {
                let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                report.annotation = Some(aggregate_annotations(&AnnotationSheet::parse_csv(&text)?)?);
            }
            if json {
                write!(out, "{}", report.to_json()?)?;
            } else {
                write!(out, "{}", report.render_table())?;
            }
        }
        Command::Shift {
            sentence,
            manifest,
            graph,
            lm,
            tagger,
            keywords,
            passes,
            json,
        } => {
            let (graph, lm, tagger, manifest_keywords) = match (&manifest, graph, lm, tagger) {
                (Some(m), ..) => (
                    manifest_part(m, |m| &m.graph)?,
                    manifest_part(m, |m| &m.lm)?,
                    manifest_part(m, |m| &m.tagger)?,
                    Some(manifest_part(m, |m| &m.keywords)?),
                ),
                (None, Some(g), Some(l), Some(t)) => (g, l, t, None),
                _ => bail!(ConfigError(
                    "shift needs --manifest or all of --graph, --lm and --tagger".into()
                )),
            };
            let keyword_file = keywords.or(manifest_keywords);
            let keywords: BTreeSet<String> = match keyword_file {
                Some(p) => {
                    parse_keywords(&std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)
                }
                None => BTreeSet::new(),
            };
            let tokens = tokenize(&sentence);
            if tokens.is_empty() {
                bail!(stylebot_core::Error::EmptyInput);
            }
            let result = style_shift(
                &WordGraph::load(&graph)?,
                &BigramLM::load(&lm)?,
                &keywords,
                &tokens,
                &TaggerModel::load(&tagger)?,
                ShiftConfig { passes },
            );
            if json {
                writeln!(out, "{}", serde_json::to_string_pretty(&result)?)?;
            } else {
                writeln!(
                    out,
                    "{:>4}  {:>9}  {:<3}  {:<20}  sentence",
                    "rank", "score", "kw", "insertion"
                )?;
                for (i, c) in result.ranked.iter().enumerate() {
                    let ins = c
                        .insertion
                        .as_ref()
                        .map(|x| format!("+{}/{} @{}", x.inserted_word, x.source_pos, x.position))
                        .unwrap_or_else(|| "(input)".into());
                    let kw = if c.has_keyword { "yes" } else { "" };
                    writeln!(
                        out,
                        "{:>4}  {:>9.4}  {:<3}  {:<20}  {}",
                        i + 1,
                        c.score,
                        kw,
                        ins,
                        detokenize(&c.tokens)
                    )?;
                }
            }
        }
        Command::Classify {
            text,
            router,
            manifest,
            json,
        } => {
            let path = match (router, manifest) {
                (Some(r), _) => r,
                (None, Some(m)) => manifest_part(&m, |m| &m.router)?,
                (None, None) => bail!(ConfigError("classify needs --router or --manifest".into())),
            };
            let route = TfidfRouter::load(&path)?.route(&tokenize(&text));
            if json {
                writeln!(out, "{}", serde_json::to_string(&route)?)?;
            } else {
                writeln!(out, "{} {:.6}", route.label, route.probability)?;
            }
        }
        Command::Perplexity {
            model,
            textfile,
            sentence_average,
        } => {
            let lm = BigramLM::load(&model)?;
            let text = std::fs::read_to_string(&textfile).with_context(|| format!("reading {}", textfile.display()))?;
            let sentences: Vec<Vec<String>> = text.lines().map(tokenize).filter(|s| !s.is_empty()).collect();
            let value = if sentence_average {
                lm.mean_sentence_perplexity(&sentences)?
            } else {
                lm.corpus_perplexity(&sentences)?
            };
            writeln!(out, "{value:.4}")?;
        }
    }
    Ok(())
}

fn is_config_error(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.downcast_ref::<ConfigError>().is_some()
            || matches!(
                e.downcast_ref::<stylebot_core::Error>(),
                Some(stylebot_core::Error::Config(_))
            )
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve { .. }) {
        "info"
    } else {
        "warn"
    };
    tracing_subscriber::fmt()
        .with_writer(io::stderr)
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| default_level.into()))
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if is_config_error(&err) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
