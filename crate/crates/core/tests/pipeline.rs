//! Corpus-to-embedding invariants checked against direct re-computation.

mod common;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use biasweat::corpus::{self, GloveConfig, PreprocessOptions, Rules, TokenizedCorpus, Weighting};
use biasweat::embedding::{self, LoadOptions};
use biasweat::parallel;

use common::planted_corpus;

fn random_corpus(rng: &mut ChaCha8Rng, docs: usize, vocab: usize) -> TokenizedCorpus {
    let texts: Vec<String> = (0..docs)
        .map(|_| {
            let len = rng.gen_range(1..15);
            (0..len)
                .map(|_| format!("w{}", rng.gen_range(0..vocab)))
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    corpus::preprocess_texts(&texts, &Rules::default()).unwrap()
}

/// Quadratic scan over every ordered pair of in-vocabulary positions.
fn oracle_counts(
    c: &TokenizedCorpus,
    vocab: &corpus::Vocabulary,
    window: usize,
    flat: bool,
) -> HashMap<(u32, u32), f64> {
    let mut out = HashMap::new();
    for doc in &c.documents {
        let ids: Vec<u32> = doc.iter().filter_map(|t| vocab.get(t)).collect();
        for i in 0..ids.len() {
            for j in 0..ids.len() {
                let gap = i.abs_diff(j);
                if gap == 0 || gap > window {
                    continue;
                }
                let w = if flat { 1.0 } else { 1.0 / gap as f64 };
                *out.entry((ids[i], ids[j])).or_insert(0.0) += w;
            }
        }
    }
    out
}

#[test]
fn cooccurrence_matches_quadratic_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let c = random_corpus(&mut rng, 300, 40);
    let vocab = corpus::build_vocab(&c, 3).unwrap();
    for (window, weighting) in [
        (1, Weighting::Flat),
        (3, Weighting::InverseDistance),
        (10, Weighting::Flat),
    ] {
        let flat = weighting == Weighting::Flat;
        let table = corpus::count_cooccurrence(&c, &vocab, window, weighting).unwrap();
        let want = oracle_counts(&c, &vocab, window, flat);
        assert_eq!(table.len(), want.len());
        for &(i, j, x) in table.entries() {
            assert!(
                (x - want[&(i, j)]).abs() < 1e-9,
                "({i},{j}) {x} vs {}",
                want[&(i, j)]
            );
            assert_eq!(x, table.get(j, i));
        }
        let mass: f64 = want.values().sum();
        assert!((table.total_weight() - mass).abs() < 1e-6 * mass);
    }
}

#[test]
fn flat_mass_counts_every_windowed_pair_twice() {
    let c = corpus::preprocess_texts(["a b c d", "a b"], &Rules::default()).unwrap();
    let vocab = corpus::build_vocab(&c, 1).unwrap();
    let table = corpus::count_cooccurrence(&c, &vocab, 2, Weighting::Flat).unwrap();
    // doc 1: (a,b) (a,c) (b,c) (b,d) (c,d); doc 2: (a,b)
    assert_eq!(table.total_weight(), 12.0);
    let (a, b) = (vocab.get("a").unwrap(), vocab.get("b").unwrap());
    assert_eq!(table.get(a, b), 2.0);
}

#[test]
fn cooccurrence_is_thread_count_independent() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let c = random_corpus(&mut rng, 3000, 120);
    let vocab = corpus::build_vocab(&c, 2).unwrap();
    let run = |threads| {
        parallel::install(threads, || {
            corpus::count_cooccurrence(&c, &vocab, 5, Weighting::InverseDistance).unwrap()
        })
    };
    let one = run(1);
    let many = run(4);
    assert_eq!(one.entries(), many.entries());
}

fn planted_table(seed: u64, docs: usize) -> corpus::CooccurrenceTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted = planted_corpus(&mut rng, docs);
    let c = corpus::preprocess_texts(&planted.documents, &Rules::default()).unwrap();
    let vocab = corpus::build_vocab(&c, 5).unwrap();
    corpus::count_cooccurrence(&c, &vocab, 10, Weighting::InverseDistance).unwrap()
}

#[test]
fn loss_rolling_mean_never_increases() {
    let table = planted_table(23, 2000);
    let config = GloveConfig {
        dimension: 16,
        epochs: 15,
        seed: 23,
        ..Default::default()
    };
    let trained = corpus::train_glove(&table, &config).unwrap();
    let rolling: Vec<f64> = trained
        .epoch_losses
        .windows(3)
        .map(|w| w.iter().sum::<f64>() / 3.0)
        .collect();
    for pair in rolling.windows(2) {
        assert!(pair[1] <= pair[0], "{:?}", trained.epoch_losses);
    }
    let last = trained.model.objective(&table, &config);
    assert_eq!(last, *trained.epoch_losses.last().unwrap());
}

#[test]
fn training_and_saving_are_reproducible() {
    let table = planted_table(24, 1000);
    let config = GloveConfig {
        dimension: 8,
        epochs: 4,
        seed: 24,
        ..Default::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for (k, threads) in [1, 4].into_iter().enumerate() {
        let trained = parallel::install(threads, || corpus::train_glove(&table, &config).unwrap());
        let path = dir.path().join(format!("v{k}.txt"));
        embedding::save_glove_text(&trained.table, &path).unwrap();
        files.push(std::fs::read(&path).unwrap());

        let back = embedding::load_glove_text(&path, &LoadOptions::default()).unwrap();
        assert_eq!(back.len(), trained.table.len());
        for (t, v) in trained.table.iter() {
            assert_eq!(back.lookup(t).unwrap(), v);
        }
    }
    assert_eq!(files[0], files[1]);

    let other = corpus::train_glove(&table, &GloveConfig { seed: 25, ..config }).unwrap();
    let first = embedding::load_glove_text(dir.path().join("v0.txt"), &LoadOptions::default()).unwrap();
    assert_ne!(first.row(0), other.table.row(0));
}

#[test]
fn tweet_dump_filtering() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tweets.jsonl");
    let lines = [
        r##"{"id": 1, "full_text": "Stay home #ChinaVirus https://t.co/abc"}"##,
        r##"{"id": 2, "text": "Lovely weather today"}"##,
        r##"{"id": 3, "full_text": "@someone #Wuhan2020 is trending"}"##,
        "",
    ];
    std::fs::write(&path, lines.join("\n")).unwrap();
    let c = corpus::preprocess_tweets(&path, &PreprocessOptions::default()).unwrap();
    assert_eq!(c.len(), 3);
    assert_eq!(c.documents[0], ["stay", "home", "#chinavirus"]);
    let filtered = corpus::filter_by_hashtags(&c, &corpus::ANTI_CHINESE_14);
    assert_eq!(filtered.len(), 2);
    assert_eq!(
        filtered.documents[1],
        ["@someone", "#wuhan2020", "is", "trending"]
    );

    let none = corpus::filter_by_hashtags(&c, &["#nothinghere"]);
    assert!(none.is_empty());
    assert!(!none.warnings.is_empty());

    std::fs::write(&path, "{\"id\": 1}\n").unwrap();
    assert!(matches!(
        corpus::preprocess_tweets(&path, &PreprocessOptions::default()),
        Err(corpus::CorpusError::MalformedRecord { line: 1, .. })
    ));
}
