//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any fails.

mod common;

use std::collections::BTreeSet;
use std::io::{BufRead, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{ExitCode, Stdio};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stylebot::train::ARTIFACT_FILES;
use stylebot_core::classifier::{logistic_loss_and_grad, train_router, RouterConfig, SparseVector};
use stylebot_core::corpus::{build_pairs, Corpus, DialogPair, Utterance};
use stylebot_core::evalharness::{
    aggregate_annotations, vocabulary_overlap, AnnotationSheet, EvalSet, OverlapMode, Scores,
};
use stylebot_core::generator::seq2seq::{
    build_vocab, train_seq2seq, DecodeConfig, Seq2SeqConfig, Seq2SeqModel, TrainConfig,
};
use stylebot_core::generator::{GeneratorOutput, ResponseGenerator, ScriptedGenerator};
use stylebot_core::ngram_lm::{train_lm, LmConfig};
use stylebot_core::pipeline::{Engine, Manifest, Verdict};
use stylebot_core::textproc::{parse_tagged_corpus, train_tagger, TaggedToken};
use stylebot_core::wordgraph::{build_graph, end_node, start_node, style_shift, ShiftConfig};
use stylebot_core::{BOS, EOS, SEP, UNK};

type Words = Vec<Vec<String>>;

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

// ---- 1: bigram LM ----

fn brute_log_prob(corpus: &Words, k: f64, sentence: &[String]) -> f64 {
    let wrap = |s: &[String]| {
        let mut w = vec![BOS.to_string()];
        w.extend(s.iter().cloned());
        w.push(EOS.to_string());
        w
    };
    let wrapped: Vec<Vec<String>> = corpus.iter().map(|s| wrap(s)).collect();
    let types: BTreeSet<&String> = corpus.iter().flatten().collect();
    let v = (types.len() + 2) as f64;
    let mapped: Vec<String> = sentence
        .iter()
        .map(|t| if types.contains(t) { t.clone() } else { UNK.to_string() })
        .collect();
    let query = wrap(&mapped);
    query
        .windows(2)
        .map(|q| {
            let (mut pair, mut hist) = (0.0, 0.0);
            for s in &wrapped {
                for w in s.windows(2) {
                    if w[0] == q[0] {
                        hist += 1.0;
                        pair += (w[1] == q[1]) as u8 as f64;
                    }
                }
            }
            ((pair + k) / (hist + k * v)).ln()
        })
        .sum()
}

fn random_corpus(rng: &mut ChaCha8Rng, words: &[&str]) -> Words {
    (0..rng.random_range(1..=20))
        .map(|_| {
            (0..rng.random_range(1..=8))
                .map(|_| words[rng.random_range(0..words.len())].to_string())
                .collect()
        })
        .collect()
}

fn lm_oracle() {
    const WORDS: [&str; 9] = [
        "captain", "the", "ship", "warp", "is", "ready", "engage", "spock", "logic",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for round in 0..25 {
        let corpus = random_corpus(&mut rng, &WORDS[..6]);
        let k = [1.0, 0.5, 0.1][round % 3];
        let lm = train_lm(
            &corpus,
            LmConfig {
                smoothing_k: k,
                min_count: 1,
            },
        )
        .unwrap();
        let mut queries = random_corpus(&mut rng, &WORDS);
        queries.extend(corpus.iter().cloned());
        for q in &queries {
            let expected = brute_log_prob(&corpus, k, q);
            assert!((lm.log_prob(q) - expected).abs() < 1e-9, "round {round}: {q:?}");
            let ppl = (-expected / (q.len() + 1) as f64).exp();
            assert!(rel_err(lm.perplexity(q).unwrap(), ppl) < 1e-9);
        }
        for h in lm.vocab().iter().filter(|t| t.as_str() != EOS) {
            let total: f64 = lm.predictable().map(|w| lm.prob(h, w)).sum();
            assert!((total - 1.0).abs() < 1e-9, "history {h} sums to {total}");
        }
    }
}

// ---- 2: dialog pairs ----

fn scene(n: usize) -> Vec<Utterance> {
    (0..n)
        .map(|i| Utterance {
            speaker: None,
            tokens: vec![format!("u{i}")],
            text: format!("u{i}"),
        })
        .collect()
}

fn pair_set(pairs: &[DialogPair]) -> BTreeSet<(Vec<String>, Vec<String>)> {
    pairs.iter().map(|p| (p.post.clone(), p.response.clone())).collect()
}

fn window_oracle(scene: &[Utterance], k: usize) -> BTreeSet<(Vec<String>, Vec<String>)> {
    let mut out = BTreeSet::new();
    for end in 1..scene.len() {
        for start in end.saturating_sub(k)..end {
            let post: Vec<String> = scene[start..end]
                .iter()
                .map(|u| u.tokens.clone())
                .collect::<Vec<_>>()
                .join(&SEP.to_string());
            out.insert((post, scene[end].tokens.clone()));
        }
    }
    out
}

fn pairs_oracle() {
    let pairs = build_pairs(&scene(3), 2, "d");
    let got: Vec<(Vec<String>, Vec<String>)> = pairs.iter().map(|p| (p.post.clone(), p.response.clone())).collect();
    assert_eq!(
        got,
        vec![
            (toks("u0"), toks("u1")),
            (toks("u1"), toks("u2")),
            (vec!["u0".into(), SEP.into(), "u1".into()], toks("u2")),
        ]
    );
    for n in 0..=6 {
        let s = scene(n);
        assert_eq!(build_pairs(&s, 1, "d").len(), n.saturating_sub(1));
        for k in 1..=6 {
            let pairs = build_pairs(&s, k, "d");
            assert_eq!(pair_set(&pairs), window_oracle(&s, k), "n={n} k={k}");
            assert_eq!(pairs.len(), pair_set(&pairs).len(), "duplicates at n={n} k={k}");
            if k > 1 {
                let shallow = build_pairs(&s, k - 1, "d");
                assert_eq!(&pairs[..shallow.len()], &shallow[..], "prefix at n={n} k={k}");
            }
        }
    }
}

// ---- 3: router ----

fn classifier_checks() {
    const FILLER: [&str; 4] = ["red", "green", "blue", "table"];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut doc = |marker: &str| {
        let mut d: Vec<String> = (0..rng.random_range(1..4))
            .map(|_| FILLER[rng.random_range(0..4)].to_string())
            .collect();
        d.insert(rng.random_range(0..=d.len()), marker.to_string());
        d
    };
    let a: Words = (0..50).map(|_| doc("alpha")).collect();
    let b: Words = (0..50).map(|_| doc("beta")).collect();
    let (router, report) = train_router(&a, &b, "a", "b", &RouterConfig::default()).unwrap();
    assert_eq!(report.heldout_accuracy, 1.0, "held-out accuracy");
    assert!(router.route(&["alpha"]).probability > 0.9);

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let h = 1e-6;
    for _ in 0..20 {
        let w: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        let bias = rng.random_range(-1.0..1.0);
        let n = rng.random_range(3..12);
        let mut xs = Vec::new();
        for _ in 0..n {
            let mut entries = Vec::new();
            for i in 0..10 {
                if rng.random_bool(0.5) {
                    entries.push((i, rng.random_range(0.05..1.0)));
                }
            }
            xs.push(SparseVector(entries));
        }
        let ys: Vec<f64> = (0..n).map(|_| rng.random_bool(0.5) as u8 as f64).collect();
        let (_, gw, gb) = logistic_loss_and_grad(&w, bias, &xs, &ys, 0.01);
        let loss = |w: &[f64], b: f64| logistic_loss_and_grad(w, b, &xs, &ys, 0.01).0;
        for i in 0..w.len() {
            let (mut plus, mut minus) = (w.clone(), w.clone());
            plus[i] += h;
            minus[i] -= h;
            let fd = (loss(&plus, bias) - loss(&minus, bias)) / (2.0 * h);
            assert!(rel_err(fd, gw[i]) < 1e-5, "w[{i}] fd {fd} vs {}", gw[i]);
        }
        let fd = (loss(&w, bias + h) - loss(&w, bias - h)) / (2.0 * h);
        assert!(rel_err(fd, gb) < 1e-5, "bias fd {fd} vs {gb}");
    }
}

// ---- 4: word graph ----

fn words_of(tagged: &[Vec<TaggedToken>]) -> Words {
    tagged
        .iter()
        .map(|s| s.iter().map(|t| t.word.clone()).collect())
        .collect()
}

fn wordgraph_checks() {
    let tagged = parse_tagged_corpus(
        "uhura_NNP how_WRB are_VBP you_PRP\nuhura_NNP how_WRB are_VBP you_PRP\ni_PRP am_VBP sorry_JJ miranda_NNP\nspock_NNP report_VB\n",
    )
    .unwrap();
    let (graph, tagger) = (build_graph(&tagged).unwrap(), train_tagger(&tagged).unwrap());
    let lm = train_lm(&words_of(&tagged), LmConfig::default()).unwrap();
    let none = BTreeSet::new();
    let shift = |s: &str| style_shift(&graph, &lm, &none, &toks(s), &tagger, ShiftConfig::default()).best;
    assert_eq!(shift("how are you"), toks("uhura how are you"));
    assert_eq!(shift("i am sorry"), toks("i am sorry miranda"));

    let tie = parse_tagged_corpus("captain_NN report_VB\ndoctor_NN report_VB\n").unwrap();
    let (graph, tagger) = (build_graph(&tie).unwrap(), train_tagger(&tie).unwrap());
    let lm = train_lm(&words_of(&tie), LmConfig::default()).unwrap();
    let plain = style_shift(&graph, &lm, &none, &toks("report"), &tagger, ShiftConfig::default());
    assert!((plain.ranked[0].score - plain.ranked[1].score).abs() < 1e-12);
    assert_eq!(plain.best, toks("captain report"));
    let keyed = style_shift(
        &graph,
        &lm,
        &["doctor".to_string()].into(),
        &toks("report"),
        &tagger,
        ShiftConfig::default(),
    );
    assert_eq!(keyed.best, toks("doctor report"));

    const VOCAB: [(&str, &str); 8] = [
        ("captain", "NN"),
        ("captain", "NNP"),
        ("the", "DT"),
        ("ship", "NN"),
        ("is", "VBZ"),
        ("ready", "JJ"),
        ("warp", "NN"),
        ("warp", "VB"),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sentence = |rng: &mut ChaCha8Rng| -> Vec<TaggedToken> {
        (0..rng.random_range(1..6))
            .map(|_| {
                let (w, p) = VOCAB[rng.random_range(0..VOCAB.len())];
                TaggedToken::new(w, p)
            })
            .collect()
    };
    for _ in 0..300 {
        let corpus: Vec<Vec<TaggedToken>> = (0..rng.random_range(1..8)).map(|_| sentence(&mut rng)).collect();
        let input = sentence(&mut rng);
        let graph = build_graph(&corpus).unwrap();
        let words: Vec<String> = input.iter().map(|t| t.word.clone()).collect();
        for c in graph.insertion_candidates(&input) {
            let mut removed = c.tokens.clone();
            assert_eq!(removed.remove(c.position), c.inserted_word);
            assert_eq!(removed, words, "not a single insertion");
            let left = if c.position == 0 {
                vec![start_node()]
            } else {
                graph.resolve(&input[c.position - 1])
            };
            let right = if c.position == words.len() {
                vec![end_node()]
            } else {
                graph.resolve(&input[c.position])
            };
            let node = TaggedToken::new(c.inserted_word.clone(), c.source_pos.clone());
            assert!(
                left.iter().any(|l| graph.edge_count(l, &node) > 0),
                "no left edge for {c:?}"
            );
            assert!(
                right.iter().any(|r| graph.edge_count(&node, r) > 0),
                "no right edge for {c:?}"
            );
        }
    }
}

// ---- 5: seq2seq ----

fn seq2seq_checks() {
    let pair = |p: &str, r: &str| DialogPair {
        post: toks(p),
        response: toks(r),
        domain: "t".into(),
        context_depth: 1,
    };
    let vocab = build_vocab(
        &[
            pair("alpha beta gamma", "delta"),
            pair("gamma alpha", "epsilon delta zeta"),
        ],
        1,
    );
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for point in 0..20 {
        let config = Seq2SeqConfig {
            embedding_dim: 4,
            hidden_dim: 6,
            num_layers: 1 + point % 2,
            attention: point % 3 != 0,
            min_count: 1,
        };
        let mut model = Seq2SeqModel::new(config, vocab.clone(), point as u64).unwrap();
        for p in model.parameters_mut() {
            *p = rng.random_range(-0.5..0.5);
        }
        let examples: Vec<(Vec<usize>, Vec<usize>)> = (0..2)
            .map(|_| {
                let (a, b) = (rng.random_range(1..=5), rng.random_range(1..=5));
                (
                    (0..a).map(|_| rng.random_range(3..vocab.len())).collect(),
                    (0..b).map(|_| rng.random_range(3..vocab.len())).collect(),
                )
            })
            .collect();
        let (_, grad) = model.loss_and_gradient(&examples);
        for _ in 0..25 {
            let i = rng.random_range(0..grad.len());
            let orig = model.parameters()[i];
            model.parameters_mut()[i] = orig + 1e-5;
            let up = model.loss(&examples);
            model.parameters_mut()[i] = orig - 1e-5;
            let down = model.loss(&examples);
            model.parameters_mut()[i] = orig;
            let numeric = (up - down) / 2e-5;
            assert!(
                rel_err(numeric, grad[i]) < 1e-4 || (numeric - grad[i]).abs() < 1e-9,
                "point {point} param {i}: {numeric} vs {}",
                grad[i]
            );
        }
    }

    let text = std::fs::read_to_string(fixtures().join("toy_pairs.tsv")).unwrap();
    let pairs = Corpus::from_tsv(&text).unwrap().pairs().to_vec();
    let (model, report) = train_seq2seq(Seq2SeqConfig::default(), &pairs, &TrainConfig::default()).unwrap();
    assert!(report.final_loss < 0.1, "final loss {}", report.final_loss);
    let decode = DecodeConfig::default();
    let exact = pairs
        .iter()
        .filter(|p| model.generate(&p.post, &decode).unwrap().tokens == p.response)
        .count();
    assert!(exact * 10 >= pairs.len() * 9, "{exact}/{} reproduced", pairs.len());
    for p in &pairs {
        let (_, steps) = model.generate_traced(&p.post, &decode).unwrap();
        for dist in steps {
            assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

// ---- 6: gate ----

struct RandomStub {
    words: Vec<String>,
}

impl ResponseGenerator for RandomStub {
    fn generate(&self, post: &[String]) -> stylebot_core::Result<GeneratorOutput> {
        let seed = post.join(" ").bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
        });
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tokens = (0..rng.random_range(0..8))
            .map(|_| self.words[rng.random_range(0..self.words.len())].clone())
            .collect();
        Ok(GeneratorOutput {
            tokens,
            confidence: rng.random_range(-6.0..=0.0),
        })
    }

    fn kind(&self) -> &'static str {
        "random-stub"
    }
}

/// Checks one turn against an independent reading of the gate rule.
fn gate_turn(engine: &Engine, input: &[String], turn: u64) -> Verdict {
    let (low, high) = engine.config.window();
    let (out, trace) = engine.respond(input, turn).unwrap();
    assert!(!out.is_empty());
    assert_eq!(trace.route, engine.router.route(input));
    let expected = if trace.candidate.is_empty() || trace.gate.confidence < engine.config.confidence_floor {
        Verdict::FallbackLowConfidence
    } else {
        let ppl = engine.style_lm.perplexity(&trace.candidate).unwrap();
        if (low..=high).contains(&ppl) {
            Verdict::Accept
        } else {
            Verdict::FallbackPerplexity
        }
    };
    assert_eq!(trace.gate.verdict, expected, "turn {turn}");
    match expected {
        Verdict::Accept => assert_eq!(out, trace.candidate),
        _ => {
            assert!(engine.fallbacks.contains(&out));
            assert_eq!(trace.fallback.as_ref().unwrap().index, engine.fallbacks.index_for(turn));
        }
    }
    assert_eq!(engine.respond(input, turn).unwrap().0, out, "not deterministic");
    expected
}

fn gate_checks() {
    let mut engine = Manifest::load_engine(&fixture_manifest(), None).unwrap().engine;
    let mut seen = BTreeSet::new();
    let input = toks("mister spock , report .");
    for (tokens, confidence) in [
        ("aye , captain .", -0.5),
        ("zorp blim quax vrell snib", -0.5),
        ("aye , captain .", -10.0),
        ("", 0.0),
    ] {
        let scripted = ScriptedGenerator::constant(&tokens.split_whitespace().collect::<Vec<_>>(), confidence);
        engine.style_generator = Box::new(scripted.clone());
        engine.general_generator = Box::new(scripted);
        seen.insert(format!("{:?}", gate_turn(&engine, &input, 0)));
    }
    assert_eq!(seen.len(), 3, "scripted cases gave {seen:?}");

    let vocab = std::fs::read_to_string(fixture_build().join("style_vocab.txt")).unwrap();
    let mut words: Vec<String> = vocab.lines().map(String::from).collect();
    words.extend(["zorp", "blim", "lol", "pizza"].map(String::from));
    engine.style_generator = Box::new(RandomStub { words: words.clone() });
    engine.general_generator = Box::new(RandomStub { words: words.clone() });
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    seen.clear();
    for turn in 0..1000u64 {
        let input: Vec<String> = (0..rng.random_range(1..7))
            .map(|_| words[rng.random_range(0..words.len())].clone())
            .collect();
        seen.insert(format!("{:?}", gate_turn(&engine, &input, turn)));
    }
    assert_eq!(seen.len(), 3, "random turns gave {seen:?}");
}

// ---- 7: evaluation harness ----

/// Fixture artifacts built by the binary, shared by criteria 7 and 8.
fn binary_build() -> &'static Path {
    static DIR: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    &DIR.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("a");
        train_via_binary(&out);
        (tmp, out)
    })
    .1
}

fn train_via_binary(out: &Path) {
    let config = fixtures().join("config.toml");
    let res = run(&[
        "train-all",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "train-all failed: {}", stderr(&res));
}

fn eval_checks() {
    let mut sheet = AnnotationSheet::default();
    for cell in 0..200usize {
        sheet.insert(
            format!("ann{}", cell / 50),
            format!("{:02}", cell % 50),
            Scores {
                grammar: (cell < 187) as u8,
                coherence: (cell < 147) as u8,
                style: (cell < 172) as u8,
            },
        );
    }
    let agg = aggregate_annotations(&sheet).unwrap();
    assert_eq!((agg.grammar, agg.coherence, agg.style), (93.5, 73.5, 86.0));
    assert!((agg.average - 84.33).abs() <= 0.01, "average {}", agg.average);

    let universe: BTreeSet<String> = ["a", "b"].map(String::from).into();
    let responses = vec![toks("a b"), toks("a c")];
    assert_eq!(
        vocabulary_overlap(&responses, &universe, OverlapMode::Token).unwrap(),
        75.0
    );
    assert!((vocabulary_overlap(&responses, &universe, OverlapMode::Type).unwrap() - 200.0 / 3.0).abs() < 1e-12);
    assert!(vocabulary_overlap(&[Vec::<String>::new()], &universe, OverlapMode::Token).is_err());

    let set_path = fixtures().join("eval_set.tsv");
    let set = EvalSet::parse(&std::fs::read_to_string(&set_path).unwrap()).unwrap();
    assert_eq!(set.items.len(), 20);
    let manifest = binary_build().join("manifest.json");
    let res = run(&[
        "eval",
        "--manifest",
        manifest.to_str().unwrap(),
        "--set",
        set_path.to_str().unwrap(),
        "--json",
    ]);
    assert!(res.status.success(), "{}", stderr(&res));
    let golden = std::fs::read(fixtures().join("golden/eval_report.json")).unwrap();
    assert!(res.stdout == golden, "eval report differs from golden");
}

// ---- 8: end to end ----

fn end_to_end() {
    let first = binary_build();
    let tmp = tempfile::tempdir().unwrap();
    let second = tmp.path().join("b");
    train_via_binary(&second);
    for name in ARTIFACT_FILES {
        let (a, b) = (
            std::fs::read(first.join(name)).unwrap(),
            std::fs::read(second.join(name)).unwrap(),
        );
        assert!(a == b, "{name} differs between runs");
    }

    let mut child = bin()
        .args([
            "serve",
            "--manifest",
            second.join("manifest.json").to_str().unwrap(),
            "--bind",
            "127.0.0.1:0",
        ])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    struct Kill(std::process::Child);
    impl Drop for Kill {
        fn drop(&mut self) {
            let _ = self.0.kill();
            let _ = self.0.wait();
        }
    }
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let _guard = Kill(child);
    let addr = line
        .trim()
        .strip_prefix("listening on ")
        .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
        .to_string();

    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(30))
        .build()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(60);
    while client
        .get(format!("http://{addr}/api/health"))
        .send()
        .map(|r| r.status().as_u16())
        .unwrap_or(0)
        != 200
    {
        assert!(Instant::now() < deadline, "server never became healthy");
        std::thread::sleep(Duration::from_millis(50));
    }
    let set = EvalSet::parse(&std::fs::read_to_string(fixtures().join("eval_set.tsv")).unwrap()).unwrap();
    for item in &set.items {
        let res = client
            .post(format!("http://{addr}/api/chat"))
            .json(&serde_json::json!({ "session_id": "acceptance", "utterance": item.utterance }))
            .send()
            .unwrap();
        assert_eq!(res.status().as_u16(), 200, "{}", item.utterance);
        let body: serde_json::Value = res.json().unwrap();
        assert!(
            !body["response"].as_str().unwrap_or("").trim().is_empty(),
            "empty response to {}",
            item.utterance
        );
        let trace = client
            .get(format!("http://{addr}{}", body["trace_ref"].as_str().unwrap()))
            .send()
            .unwrap();
        assert_eq!(trace.status().as_u16(), 200);
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, u64, fn()); 8] = [
        (
            "bigram LM equals brute-force counts on 25 random corpora",
            30,
            lm_oracle,
        ),
        (
            "dialog pairs: worked example, superset, exhaustive windows",
            10,
            pairs_oracle,
        ),
        (
            "router: separable fixture perfect, gradient matches finite differences",
            30,
            classifier_checks,
        ),
        (
            "word graph: name insertion, witnessed single insertions, keyword tie-break",
            30,
            wordgraph_checks,
        ),
        (
            "seq2seq: gradient check, toy memorization, normalized softmax",
            180,
            seq2seq_checks,
        ),
        ("gate: three verdicts and 1000 randomized turns", 60, gate_checks),
        (
            "evaluation: annotation average, overlap, golden report",
            180,
            eval_checks,
        ),
        ("end to end: reproducible train-all, served chat", 180, end_to_end),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check));
        let secs = start.elapsed().as_secs_f64();
        let verdict = match outcome {
            Ok(()) if secs <= *budget as f64 => Ok(()),
            Ok(()) => Err(format!("over budget ({secs:.1}s > {budget}s)")),
            Err(payload) => Err(payload
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        match verdict {
            Ok(()) => println!("PASS  criterion {}: {name} ({secs:.2}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL  criterion {}: {name} ({secs:.2}s): {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
