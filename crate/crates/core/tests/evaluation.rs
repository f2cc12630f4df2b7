mod common;

use cascade_ner::corpus::{AnnotationMode, Document, Mention};
use cascade_ner::evaluation::{evaluate, hier_accuracy, mention_prf, seed_stats, Granularity};
use cascade_ner::taxonomy::FineLabel;
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const POOL: [&str; 8] = [
    "per",
    "per.artist",
    "per.politician",
    "per.politician.governor",
    "org.company",
    "gpe",
    "gpe.city",
    "loc",
];

fn fl(s: &str) -> FineLabel {
    FineLabel::parse(s).unwrap()
}

fn random_doc(rng: &mut ChaCha8Rng, id: &str, sentences: usize) -> (Vec<Vec<String>>, Vec<Mention>) {
    let mut words = Vec::new();
    let mut mentions = Vec::new();
    for s in 0..sentences {
        let len = rng.random_range(1..10);
        words.push((0..len).map(|i| format!("{id}s{s}w{i}")).collect());
        for span in common::random_spans(rng, len) {
            mentions.push(Mention::gold(s, span.start, span.end, fl(POOL.choose(rng).unwrap())));
        }
    }
    (words, mentions)
}

/// Predictions derived from gold by dropping, relabeling, extending and
/// adding mentions, keeping the first of any overlapping pair.
fn perturb(rng: &mut ChaCha8Rng, words: &[Vec<String>], gold: &[Mention]) -> Vec<Mention> {
    let mut out = Vec::new();
    for m in gold {
        match rng.random_range(0..5) {
            0 => {}
            1 => out.push(Mention::gold(m.sentence, m.start, m.end, fl(POOL.choose(rng).unwrap()))),
            2 if m.end + 1 < words[m.sentence].len() => {
                out.push(Mention::gold(m.sentence, m.start, m.end + 1, m.fine.clone().unwrap()))
            }
            _ => out.push(m.clone()),
        }
    }
    for _ in 0..rng.random_range(0..3) {
        let s = rng.random_range(0..words.len());
        let t = rng.random_range(0..words[s].len());
        out.push(Mention::gold(s, t, t, fl(POOL.choose(rng).unwrap())));
    }
    let mut kept: Vec<Mention> = Vec::new();
    for m in out {
        if !kept.iter().any(|k| k.sentence == m.sentence && k.start <= m.end && m.start <= k.end) {
            kept.push(m);
        }
    }
    kept
}

fn key(m: &Mention, g: Granularity) -> (usize, usize, usize, String) {
    let l = m.fine.as_ref().unwrap();
    let k = match g {
        Granularity::Full => l.to_string(),
        Granularity::Type => l.coarse().to_string(),
        Granularity::Boundary => String::new(),
    };
    (m.sentence, m.start, m.end, k)
}

/// Greedy one-to-one matching with explicit used flags.
fn oracle_matches(gold: &[Mention], pred: &[Mention], g: Granularity) -> usize {
    let mut used = vec![false; gold.len()];
    let mut matched = 0;
    for p in pred {
        if let Some(i) = (0..gold.len()).find(|&i| !used[i] && key(&gold[i], g) == key(p, g)) {
            used[i] = true;
            matched += 1;
        }
    }
    matched
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mention_scores_match_a_brute_force_matcher(seed in any::<u64>(), docs in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut gold, mut pred) = (Vec::new(), Vec::new());
        let (mut g_total, mut p_total) = (0, 0);
        let mut matched = [0usize; 3];
        for d in 0..docs {
            let id = format!("d{d}");
            let (words, gm) = random_doc(&mut rng, &id, 3);
            let pm = perturb(&mut rng, &words, &gm);
            g_total += gm.len();
            p_total += pm.len();
            for (i, g) in Granularity::ALL.iter().enumerate() {
                matched[i] += oracle_matches(&gm, &pm, *g);
            }
            gold.push(Document::from_words(&id, &words, gm, AnnotationMode::Full).unwrap());
            pred.push(Document::from_words(&id, &words, pm, AnnotationMode::Full).unwrap());
        }
        for (i, g) in Granularity::ALL.iter().enumerate() {
            let prf = mention_prf(&gold, &pred, *g).unwrap();
            let p = if p_total == 0 { 0.0 } else { matched[i] as f64 / p_total as f64 };
            let r = if g_total == 0 { 0.0 } else { matched[i] as f64 / g_total as f64 };
            let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            prop_assert!((prf.precision - p).abs() < 1e-12, "{g:?} precision {} vs {p}", prf.precision);
            prop_assert!((prf.recall - r).abs() < 1e-12);
            prop_assert!((prf.f1 - f).abs() < 1e-12);
        }
        prop_assert!(matched[0] <= matched[1] && matched[1] <= matched[2]);
    }

    #[test]
    fn accuracy_levels_are_nested(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gold: Vec<FineLabel> = (0..n).map(|_| fl(POOL.choose(&mut rng).unwrap())).collect();
        let pred: Vec<FineLabel> = (0..n).map(|_| fl(POOL.choose(&mut rng).unwrap())).collect();
        let a = hier_accuracy(&gold, &pred).unwrap();
        prop_assert!(a.acc_sst <= a.acc_st && a.acc_st <= a.acc_t);
        prop_assert_eq!(hier_accuracy(&gold, &gold).unwrap().acc_sst, 1.0);
    }
}

#[test]
fn fixture_reproduces_hand_counts() {
    let (gold, pred) = common::evaluation_fixture();
    let report = evaluate(&gold, &pred).unwrap();
    for (g, (gt, pt, m)) in Granularity::ALL.iter().zip(common::FIXTURE_COUNTS) {
        let prf = report.prf(*g);
        let (p, r) = (m as f64 / pt as f64, m as f64 / gt as f64);
        assert!((prf.precision - p).abs() < 1e-9, "{g:?}");
        assert!((prf.recall - r).abs() < 1e-9, "{g:?}");
        assert!((prf.f1 - 2.0 * p * r / (p + r)).abs() < 1e-9, "{g:?}");
    }
    assert!((report.full.f1 - 24.0 / 39.0).abs() < 1e-12);
}

#[test]
fn deeper_prediction_inside_the_right_subtype_gets_partial_credit() {
    let a = hier_accuracy(&[fl("per.politician.governor")], &[fl("per.politician")]).unwrap();
    assert_eq!((a.acc_t, a.acc_st, a.acc_sst), (1.0, 1.0, 0.0));
}

#[test]
fn seed_stats_use_the_sample_deviation() {
    let (gold, pred) = common::evaluation_fixture();
    let reports = vec![evaluate(&gold, &pred).unwrap(), evaluate(&gold, &gold).unwrap()];
    let s = seed_stats(&reports).unwrap();
    let f1 = s.metric("full.f1").unwrap();
    let (x, y) = (24.0 / 39.0, 1.0);
    assert!((f1.mean - (x + y) / 2.0).abs() < 1e-12);
    assert!((f1.std - (y - x) / 2f64.sqrt()).abs() < 1e-12);
    assert_eq!(f1.n, 2);
    assert!(seed_stats(&[]).is_err());
}
