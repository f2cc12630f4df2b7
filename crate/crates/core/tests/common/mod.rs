//! Helpers shared by the integration and acceptance targets.
#![allow(dead_code)]

use cascade_ner::codec::{Span, Tag};
use cascade_ner::corpus::{AnnotationMode, Document, Mention};
use cascade_ner::encoder::{CrossEntropy, EncoderConfig, Example, HeadNet, Objective, Parameters, Target, CLS_ID, SEP_ID};
use cascade_ner::taxonomy::FineLabel;
use rand::seq::IndexedRandom;
use rand::{Rng, RngCore};

pub const LABELS: [&str; 4] = ["per", "org", "gpe", "loc"];

/// Disjoint random spans over a sentence of `len` tokens.
pub fn random_spans<R: RngCore>(rng: &mut R, len: usize) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < len {
        if rng.random_bool(0.35) {
            let width = rng.random_range(1..=3).min(len - i);
            spans.push(Span::new(i, i + width - 1, *LABELS.choose(rng).unwrap()));
            i += width;
        } else {
            i += 1;
        }
    }
    spans
}

/// Arbitrary tag soup, including ill-formed `I-` starts and stray `X`.
pub fn random_tags<R: RngCore>(rng: &mut R, len: usize) -> Vec<Tag> {
    (0..len)
        .map(|_| {
            let l = LABELS.choose(rng).unwrap().to_string();
            match rng.random_range(0..4) {
                0 => Tag::O,
                1 => Tag::X,
                2 => Tag::B(l),
                _ => Tag::I(l),
            }
        })
        .collect()
}

fn fl(s: &str) -> FineLabel {
    FineLabel::parse(s).unwrap()
}

fn doc(id: &str, mentions: &[(usize, usize, &str)]) -> Document {
    let words: Vec<String> = (0..12).map(|i| format!("{id}w{i}")).collect();
    let ms = mentions
        .iter()
        .map(|&(s, e, l)| Mention::gold(0, s, e, fl(l)))
        .collect();
    Document::from_words(id, &[words], ms, AnnotationMode::Full).unwrap()
}

/// Five documents with twenty gold mentions and a prediction set whose
/// scores were worked out by hand:
///
/// | doc | gold | pred | full | type | boundary |
/// |-----|------|------|------|------|----------|
/// | d0  | 4    | 4    | 3    | 4    | 4        |
/// | d1  | 4    | 5    | 2    | 2    | 3        |
/// | d2  | 4    | 1    | 1    | 1    | 1        |
/// | d3  | 4    | 4    | 2    | 4    | 4        |
/// | d4  | 4    | 5    | 4    | 4    | 4        |
/// | sum | 20   | 19   | 12   | 15   | 16       |
pub fn evaluation_fixture() -> (Vec<Document>, Vec<Document>) {
    let gold = vec![
        doc("d0", &[(0, 1, "per.politician.governor"), (3, 3, "org.company"), (5, 6, "gpe.country"), (9, 9, "loc")]),
        doc("d1", &[(0, 0, "per.artist"), (2, 3, "org.government"), (5, 5, "fac.building"), (7, 8, "veh.car")]),
        doc("d2", &[(1, 1, "crm"), (3, 4, "law.treaty"), (6, 6, "per"), (8, 9, "gpe.city")]),
        doc("d3", &[(0, 2, "org.company.bank"), (4, 4, "per.politician"), (6, 6, "per.politician"), (8, 8, "loc")]),
        doc("d4", &[(0, 0, "gpe.country"), (2, 2, "gpe.country"), (4, 5, "wea.gun"), (7, 7, "veh")]),
    ];
    let pred = vec![
        // one fine-label miss on a correct span
        doc("d0", &[(0, 1, "per.politician.governor"), (3, 3, "org.company"), (5, 6, "gpe.city"), (9, 9, "loc")]),
        // a truncated span, a wrong type, a spurious mention
        doc("d1", &[(0, 0, "per.artist"), (2, 2, "org.government"), (5, 5, "loc.region"), (7, 8, "veh.car"), (10, 10, "wea")]),
        // three misses
        doc("d2", &[(1, 1, "crm")]),
        // two depth disagreements inside the right type
        doc("d3", &[(0, 2, "org.company"), (4, 4, "per.politician"), (6, 6, "per.politician.governor"), (8, 8, "loc")]),
        // all correct plus one spurious mention
        doc("d4", &[(0, 0, "gpe.country"), (2, 2, "gpe.country"), (4, 5, "wea.gun"), (7, 7, "veh"), (9, 9, "per")]),
    ];
    (gold, pred)
}

/// (gold, predicted, matched) at full, type and boundary granularity.
pub const FIXTURE_COUNTS: [(usize, usize, usize); 3] = [(20, 19, 12), (20, 19, 15), (20, 19, 16)];

pub fn toy_net(vocab: usize, outputs: usize, seed: u64) -> HeadNet {
    HeadNet::init(EncoderConfig::toy(vocab), outputs, seed).unwrap()
}

/// Outcome of comparing analytic and numeric gradients.
#[derive(Debug, Default)]
pub struct GradReport {
    pub checked: usize,
    pub failures: Vec<String>,
    /// Fewest entries compared in any one tensor.
    pub min_per_tensor: usize,
    pub worst_rel: f64,
    /// Tensors with fewer than `per_tensor` non-negligible entries, with
    /// their count of such entries.
    pub flat: Vec<(String, usize)>,
}

/// Below this magnitude an analytic entry is compared in absolute terms.
const NEGLIGIBLE: f64 = 1e-7;
/// Absolute tolerance for negligible entries; far above the central
/// difference noise of a unit-scale loss at `h = 1e-5`.
const ATOL: f64 = 1e-8;

/// Central differences against backprop for every tensor of `net`.
///
/// Per tensor, up to `per_tensor` entries with a non-negligible analytic
/// gradient are compared at relative tolerance `rtol`. When a tensor has
/// fewer such entries (attention key biases, which softmax ignores, or
/// embedding rows of unused ids), the remainder is made up from negligible
/// entries, whose numeric gradient must then be within `ATOL` of the
/// analytic one. Two more negligible entries are always compared the same way.
pub fn gradient_check<R: RngCore>(
    net: &HeadNet,
    example: &Example,
    per_tensor: usize,
    h: f64,
    rtol: f64,
    rng: &mut R,
) -> GradReport {
    let mut grad = net.zeros_like();
    CrossEntropy.accumulate(net, example, &mut grad).unwrap();
    let loss = |n: &HeadNet| n.loss(&example.ids, &example.targets).unwrap();
    let names: Vec<String> = net.named_tensors().into_iter().map(|(n, _)| n).collect();
    let analytic: Vec<Vec<f64>> = grad.tensors().iter().map(|t| t.iter().copied().collect()).collect();
    let mut report = GradReport {
        min_per_tensor: usize::MAX,
        ..GradReport::default()
    };
    for (ti, name) in names.iter().enumerate() {
        let a = &analytic[ti];
        let (live, flat): (Vec<usize>, Vec<usize>) = (0..a.len()).partition(|&i| a[i].abs() > NEGLIGIBLE);
        let mut picks: Vec<usize> = live.choose_multiple(rng, per_tensor).copied().collect();
        if live.len() < per_tensor {
            report.flat.push((name.clone(), live.len()));
        }
        let extra = per_tensor.saturating_sub(picks.len()) + 2;
        picks.extend(flat.choose_multiple(rng, extra).copied());
        report.min_per_tensor = report.min_per_tensor.min(picks.len());
        for &i in &picks {
            let numeric = {
                let mut plus = net.clone();
                plus.tensors_mut()[ti].as_slice_mut().unwrap()[i] += h;
                let mut minus = net.clone();
                minus.tensors_mut()[ti].as_slice_mut().unwrap()[i] -= h;
                (loss(&plus) - loss(&minus)) / (2.0 * h)
            };
            report.checked += 1;
            let ok = if a[i].abs() <= NEGLIGIBLE {
                (a[i] - numeric).abs() <= ATOL
            } else {
                let rel = (a[i] - numeric).abs() / a[i].abs().max(numeric.abs());
                report.worst_rel = report.worst_rel.max(rel);
                rel <= rtol
            };
            if !ok {
                report
                    .failures
                    .push(format!("{name}[{i}]: analytic {} numeric {numeric}", a[i]));
            }
        }
    }
    report
}

fn random_ids<R: RngCore>(rng: &mut R, vocab: usize, len: usize) -> Vec<u32> {
    let mut ids: Vec<u32> = (0..len).map(|_| rng.random_range(4..vocab as u32)).collect();
    ids[0] = CLS_ID;
    ids[len - 1] = SEP_ID;
    ids
}

/// Token-level example: one target per piece, the last one zero-weighted
/// like an `X` continuation.
pub fn token_example<R: RngCore>(rng: &mut R, vocab: usize, len: usize, outputs: usize) -> Example {
    let ids = random_ids(rng, vocab, len);
    let mut targets: Vec<Target> = (1..len - 1)
        .map(|row| Target::new(row, rng.random_range(0..outputs)))
        .collect();
    targets.push(Target {
        row: len - 1,
        class: 0,
        weight: 0.0,
    });
    Example { ids, targets }
}

/// Sequence-level example: a single target on the pooled row.
pub fn sequence_example<R: RngCore>(rng: &mut R, vocab: usize, len: usize, outputs: usize) -> Example {
    let ids = random_ids(rng, vocab, len);
    Example {
        ids,
        targets: vec![Target::new(0, rng.random_range(0..outputs))],
    }
}
