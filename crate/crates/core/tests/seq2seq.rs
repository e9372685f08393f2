use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stylebot_core::corpus::{Corpus, DialogPair};
use stylebot_core::generator::seq2seq::{
    build_vocab, train_seq2seq, DecodeConfig, Seq2SeqConfig, Seq2SeqModel, TrainConfig,
};

fn toy_pairs() -> Vec<DialogPair> {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/toy_pairs.tsv")).unwrap();
    Corpus::from_tsv(&text).unwrap().pairs().to_vec()
}

fn pair(post: &str, response: &str) -> DialogPair {
    DialogPair {
        post: post.split_whitespace().map(String::from).collect(),
        response: response.split_whitespace().map(String::from).collect(),
        domain: "t".into(),
        context_depth: 1,
    }
}

#[test]
fn gradient_check_over_random_points() {
    let pairs = [
        pair("alpha beta gamma", "delta"),
        pair("gamma alpha", "epsilon delta zeta"),
    ];
    let vocab = build_vocab(&pairs, 1);
    assert!(vocab.len() <= 12);
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
        let len = |rng: &mut ChaCha8Rng| rng.random_range(1..=5);
        let examples: Vec<(Vec<usize>, Vec<usize>)> = (0..2)
            .map(|_| {
                let a = len(&mut rng);
                let b = len(&mut rng);
                (
                    (0..a).map(|_| rng.random_range(3..vocab.len())).collect(),
                    (0..b).map(|_| rng.random_range(3..vocab.len())).collect(),
                )
            })
            .collect();
        let (_, grad) = model.loss_and_gradient(&examples);
        let eps = 1e-5;
        let n = model.parameters().len();
        for _ in 0..25 {
            let i = rng.random_range(0..n);
            let orig = model.parameters()[i];
            model.parameters_mut()[i] = orig + eps;
            let up = model.loss(&examples);
            model.parameters_mut()[i] = orig - eps;
            let down = model.loss(&examples);
            model.parameters_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let diff = (numeric - grad[i]).abs();
            let rel = diff / numeric.abs().max(grad[i].abs()).max(1e-8);
            assert!(
                rel < 1e-4 || diff < 1e-9,
                "point {point} param {i}: {numeric} vs {}",
                grad[i]
            );
        }
    }
}

#[test]
fn memorizes_toy_pairs() {
    let pairs = toy_pairs();
    assert_eq!(pairs.len(), 50);
    let (model, report) = train_seq2seq(Seq2SeqConfig::default(), &pairs, &TrainConfig::default()).unwrap();
    assert!(
        report.loss_history[100] < 0.5 * report.loss_history[0],
        "{:?}",
        &report.loss_history[..3]
    );
    assert!(report.final_loss < 0.1, "final loss {}", report.final_loss);

    let decode = DecodeConfig::default();
    let exact = pairs
        .iter()
        .filter(|p| model.generate(&p.post, &decode).unwrap().tokens == p.response)
        .count();
    assert!(exact >= 45, "{exact}/50 reproduced");

    for p in pairs.iter().take(10) {
        let a = model.generate(&p.post, &decode).unwrap();
        assert_eq!(a, model.generate(&p.post, &decode).unwrap());
        assert!(a.confidence <= 0.0);
        let (_, steps) = model.generate_traced(&p.post, &decode).unwrap();
        for dist in steps {
            assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        let beam = model
            .generate(
                &p.post,
                &DecodeConfig {
                    beam_width: 3,
                    max_len: 30,
                },
            )
            .unwrap();
        assert!(beam.confidence <= 0.0);
    }
}
