//! Line-oriented chat loop.

use std::io::{BufRead, Write};

use anyhow::Result;
use stylebot_core::pipeline::{Engine, PipelineTrace, Verdict};
use stylebot_core::textproc::tokenize;

pub const PROMPT: &str = "> ";

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Accept => "accept",
        Verdict::FallbackLowConfidence => "fallback_low_confidence",
        Verdict::FallbackPerplexity => "fallback_perplexity",
    }
}

/// One-line route/gate summary for a turn.
pub fn summary_line(trace: &PipelineTrace) -> String {
    let ppl = trace
        .gate
        .perplexity
        .map(|p| format!("{p:.2}"))
        .unwrap_or_else(|| "-".into());
    format!(
        "route={} p={:.3} generator={} confidence={:.3} perplexity={} window=[{:.2}, {:.2}] verdict={}",
        trace.route.label,
        trace.route.probability,
        trace.generator,
        trace.gate.confidence,
        ppl,
        trace.gate.window_low,
        trace.gate.window_high,
        verdict_name(trace.gate.verdict)
    )
}

/// Reads utterances until `:quit` or end of input. `:trace` toggles full
/// trace output. Returns the number of turns taken.
pub fn run_chat<R: BufRead, W: Write>(engine: &Engine, input: R, mut out: W) -> Result<u64> {
    let mut show_trace = false;
    let mut turn = 0u64;
    write!(out, "{PROMPT}")?;
    out.flush()?;
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        match line {
            ":quit" => break,
            ":trace" => {
                show_trace = !show_trace;
                writeln!(out, "trace {}", if show_trace { "on" } else { "off" })?;
            }
            _ => {
                let tokens = tokenize(line);
                if !tokens.is_empty() {
                    let (_, trace) = engine.respond(&tokens, turn)?;
                    turn += 1;
                    writeln!(out, "{}", trace.final_text)?;
                    writeln!(out, "  {}", summary_line(&trace))?;
                    if show_trace {
                        writeln!(out, "{}", serde_json::to_string_pretty(&trace)?)?;
                    }
                }
            }
        }
        write!(out, "{PROMPT}")?;
        out.flush()?;
    }
    writeln!(out)?;
    Ok(turn)
}
