//! Scoring of predicted mentions against gold.
//!
//! Mention matching is exact-span and one-to-one. The label comparison depends
//! on the granularity: the full label string, its coarse type, or nothing at
//! all (boundary-only). Hierarchical accuracy on gold spans gives back-off
//! credit at the T, ST and SST levels instead.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AnnotationMode, Document, Mention};
use crate::taxonomy::{match_level, FineLabel, Level};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("predicted document {0:?} has no gold counterpart")]
    UnknownDocument(String),
    #[error("gold document {0:?} is only partially annotated")]
    PartialGold(String),
    #[error("expected one prediction per gold mention: {gold} gold, {pred} predicted")]
    CountMismatch { gold: usize, pred: usize },
    #[error("mention without a label in document {0:?}")]
    Unlabeled(String),
    #[error("no reports to summarize")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Exact label string.
    Full,
    /// Coarse type only.
    Type,
    /// Span only.
    Boundary,
}

impl Granularity {
    pub const ALL: [Granularity; 3] = [Granularity::Full, Granularity::Type, Granularity::Boundary];

    pub fn name(self) -> &'static str {
        match self {
            Granularity::Full => "full",
            Granularity::Type => "type",
            Granularity::Boundary => "boundary",
        }
    }

    fn key(self, label: &FineLabel) -> String {
        match self {
            Granularity::Full => label.to_string(),
            Granularity::Type => label.coarse().to_string(),
            Granularity::Boundary => String::new(),
        }
    }
}

/// Precision, recall and F1 with the counts behind them.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold: usize,
    pub predicted: usize,
    pub matched: usize,
}

impl Prf {
    pub fn from_counts(gold: usize, predicted: usize, matched: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(matched, predicted);
        let recall = ratio(matched, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
            gold,
            predicted,
            matched,
        }
    }
}

type MentionKey = (usize, usize, usize, usize, String);

fn mention_keys(
    doc_index: usize,
    doc: &Document,
    granularity: Granularity,
    filter: Option<&str>,
) -> Result<Vec<MentionKey>, EvalError> {
    let mut keys = Vec::with_capacity(doc.mentions().len());
    for m in doc.mentions() {
        let label = m.label().ok_or_else(|| EvalError::Unlabeled(doc.id.clone()))?;
        if filter.is_some_and(|t| label.coarse().as_str() != t) {
            continue;
        }
        keys.push((doc_index, m.sentence, m.start, m.end, granularity.key(&label)));
    }
    Ok(keys)
}

/// Pairs predicted documents with gold ones by id. Gold documents without a
/// prediction count as having no predicted mentions.
fn align<'a>(
    gold: &'a [Document],
    pred: &'a [Document],
) -> Result<Vec<(&'a Document, Option<&'a Document>)>, EvalError> {
    for g in gold {
        if g.annotation_mode != AnnotationMode::Full {
            return Err(EvalError::PartialGold(g.id.clone()));
        }
    }
    let gold_ids: HashMap<&str, usize> =
        gold.iter().enumerate().map(|(i, d)| (d.id.as_str(), i)).collect();
    let mut by_gold: Vec<Option<&Document>> = vec![None; gold.len()];
    for p in pred {
        let gi = gold_ids
            .get(p.id.as_str())
            .ok_or_else(|| EvalError::UnknownDocument(p.id.clone()))?;
        by_gold[*gi] = Some(p);
    }
    Ok(gold.iter().zip(by_gold).collect())
}

fn count_matches(gold: &[MentionKey], pred: &[MentionKey]) -> usize {
    let mut bag: HashMap<&MentionKey, usize> = HashMap::new();
    for k in gold {
        *bag.entry(k).or_default() += 1;
    }
    let mut matched = 0;
    for k in pred {
        if let Some(c) = bag.get_mut(k) {
            if *c > 0 {
                *c -= 1;
                matched += 1;
            }
        }
    }
    matched
}

fn prf_filtered(
    gold: &[Document],
    pred: &[Document],
    granularity: Granularity,
    coarse: Option<&str>,
) -> Result<Prf, EvalError> {
    let pairs = align(gold, pred)?;
    let (mut g_total, mut p_total, mut matched) = (0, 0, 0);
    for (i, (g, p)) in pairs.into_iter().enumerate() {
        let gk = mention_keys(i, g, granularity, coarse)?;
        let pk = match p {
            Some(p) => mention_keys(i, p, granularity, coarse)?,
            None => Vec::new(),
        };
        g_total += gk.len();
        p_total += pk.len();
        matched += count_matches(&gk, &pk);
    }
    Ok(Prf::from_counts(g_total, p_total, matched))
}

/// Mention-level precision, recall and F1 at one granularity.
pub fn mention_prf(
    gold: &[Document],
    pred: &[Document],
    granularity: Granularity,
) -> Result<Prf, EvalError> {
    prf_filtered(gold, pred, granularity, None)
}

/// Accuracy at the three hierarchy levels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HierAccuracy {
    pub acc_t: f64,
    pub acc_st: f64,
    pub acc_sst: f64,
    pub count: usize,
}

impl HierAccuracy {
    pub fn at(&self, level: Level) -> f64 {
        match level {
            Level::T => self.acc_t,
            Level::ST => self.acc_st,
            Level::SST => self.acc_sst,
        }
    }
}

/// Mean per-level agreement between paired gold and predicted labels.
pub fn hier_accuracy(gold: &[FineLabel], pred: &[FineLabel]) -> Result<HierAccuracy, EvalError> {
    if gold.len() != pred.len() {
        return Err(EvalError::CountMismatch {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    if gold.is_empty() {
        return Ok(HierAccuracy::default());
    }
    let (mut t, mut st, mut sst) = (0usize, 0usize, 0usize);
    for (g, p) in gold.iter().zip(pred) {
        let m = match_level(g, p);
        t += m.t as usize;
        st += m.st as usize;
        sst += m.sst as usize;
    }
    let n = gold.len() as f64;
    Ok(HierAccuracy {
        acc_t: t as f64 / n,
        acc_st: st as f64 / n,
        acc_sst: sst as f64 / n,
        count: gold.len(),
    })
}

/// Pairs every gold mention with the prediction on the identical span.
///
/// Used for the gold-span diagnostic, where stage two labels gold spans.
pub fn paired_labels(
    gold: &[Document],
    pred: &[Document],
) -> Result<(Vec<FineLabel>, Vec<FineLabel>), EvalError> {
    let pairs = align(gold, pred)?;
    let mut g_labels = Vec::new();
    let mut p_labels = Vec::new();
    let mut g_count = 0;
    let mut p_count = 0;
    for (g, p) in pairs {
        g_count += g.mentions().len();
        let Some(p) = p else { continue };
        p_count += p.mentions().len();
        let spans: HashMap<(usize, usize, usize), &Mention> = p
            .mentions()
            .iter()
            .map(|m| ((m.sentence, m.start, m.end), m))
            .collect();
        for gm in g.mentions() {
            if let Some(pm) = spans.get(&(gm.sentence, gm.start, gm.end)) {
                g_labels.push(gm.label().ok_or_else(|| EvalError::Unlabeled(g.id.clone()))?);
                p_labels.push(pm.label().ok_or_else(|| EvalError::Unlabeled(p.id.clone()))?);
            }
        }
    }
    if g_labels.len() != g_count || p_count != g_count {
        return Err(EvalError::CountMismatch {
            gold: g_count,
            pred: p_count,
        });
    }
    Ok((g_labels, p_labels))
}

/// Full scoring report for one prediction set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub full: Prf,
    pub type_level: Prf,
    pub boundary: Prf,
    pub hier: Option<HierAccuracy>,
    pub per_type: BTreeMap<String, Prf>,
}

/// One line of the structured report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub granularity: String,
    pub value: f64,
    pub gold: usize,
    pub predicted: usize,
    pub matched: usize,
}

/// Scores predictions at every granularity, with a per-coarse-type breakdown.
pub fn evaluate(gold: &[Document], pred: &[Document]) -> Result<EvalReport, EvalError> {
    let full = mention_prf(gold, pred, Granularity::Full)?;
    let type_level = mention_prf(gold, pred, Granularity::Type)?;
    let boundary = mention_prf(gold, pred, Granularity::Boundary)?;
    let mut types = BTreeSet::new();
    for d in gold.iter().chain(pred) {
        for m in d.mentions() {
            if let Some(l) = m.label() {
                types.insert(l.coarse().to_string());
            }
        }
    }
    let per_type = types
        .into_iter()
        .map(|t| {
            let prf = prf_filtered(gold, pred, Granularity::Full, Some(&t))?;
            Ok((t, prf))
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(EvalReport {
        full,
        type_level,
        boundary,
        hier: None,
        per_type,
    })
}

/// Gold-span diagnostic: hierarchical accuracy only.
pub fn evaluate_gold_spans(gold: &[Document], pred: &[Document]) -> Result<EvalReport, EvalError> {
    let (g, p) = paired_labels(gold, pred)?;
    Ok(EvalReport {
        hier: Some(hier_accuracy(&g, &p)?),
        ..EvalReport::default()
    })
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

impl EvalReport {
    pub fn prf(&self, granularity: Granularity) -> &Prf {
        match granularity {
            Granularity::Full => &self.full,
            Granularity::Type => &self.type_level,
            Granularity::Boundary => &self.boundary,
        }
    }

    /// Named scalar metrics in a fixed order.
    pub fn metric_values(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        for g in Granularity::ALL {
            let p = self.prf(g);
            out.push((format!("{}.precision", g.name()), p.precision));
            out.push((format!("{}.recall", g.name()), p.recall));
            out.push((format!("{}.f1", g.name()), p.f1));
        }
        if let Some(h) = &self.hier {
            out.push(("acc_t".into(), h.acc_t));
            out.push(("acc_st".into(), h.acc_st));
            out.push(("acc_sst".into(), h.acc_sst));
        }
        out
    }

    pub fn records(&self) -> Vec<MetricRecord> {
        let mut out = Vec::new();
        let mut push_prf = |granularity: String, p: &Prf| {
            for (metric, value) in [("precision", p.precision), ("recall", p.recall), ("f1", p.f1)] {
                out.push(MetricRecord {
                    metric: metric.into(),
                    granularity: granularity.clone(),
                    value,
                    gold: p.gold,
                    predicted: p.predicted,
                    matched: p.matched,
                });
            }
        };
        if self.hier.is_none() || self.full.gold > 0 {
            for g in Granularity::ALL {
                push_prf(g.name().to_string(), self.prf(g));
            }
            for (t, p) in &self.per_type {
                push_prf(format!("full:{t}"), p);
            }
        }
        if let Some(h) = &self.hier {
            for (metric, value) in [("acc_t", h.acc_t), ("acc_st", h.acc_st), ("acc_sst", h.acc_sst)] {
                out.push(MetricRecord {
                    metric: metric.into(),
                    granularity: "gold_spans".into(),
                    value,
                    gold: h.count,
                    predicted: h.count,
                    matched: 0,
                });
            }
        }
        out
    }

    /// Human-readable table with percentages to two decimals.
    pub fn table(&self) -> String {
        let mut s = String::new();
        if self.hier.is_none() || self.full.gold > 0 {
            let _ = writeln!(s, "{:<16} {:>8} {:>8} {:>8} {:>7} {:>7} {:>7}", "granularity", "P", "R", "F1", "gold", "pred", "match");
            let mut row = |name: &str, p: &Prf| {
                let _ = writeln!(
                    s,
                    "{:<16} {:>8} {:>8} {:>8} {:>7} {:>7} {:>7}",
                    name,
                    pct(p.precision),
                    pct(p.recall),
                    pct(p.f1),
                    p.gold,
                    p.predicted,
                    p.matched
                );
            };
            for g in Granularity::ALL {
                row(g.name(), self.prf(g));
            }
            for (t, p) in &self.per_type {
                row(&format!("  {t}"), p);
            }
        }
        if let Some(h) = &self.hier {
            let _ = writeln!(
                s,
                "Acc-T {}  Acc-ST {}  Acc-SST {}  ({} mentions)",
                pct(h.acc_t),
                pct(h.acc_st),
                pct(h.acc_sst),
                h.count
            );
        }
        s
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// Uses the `n - 1` denominator; a single sample has deviation 0.
    pub fn from_samples(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let std = if n == 1 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(MeanStd { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub reports: Vec<EvalReport>,
    pub metrics: Vec<(String, MeanStd)>,
}

impl SeedSummary {
    pub fn metric(&self, name: &str) -> Option<&MeanStd> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }
}

/// Per-metric mean and sample deviation over runs with different seeds.
pub fn seed_stats(reports: &[EvalReport]) -> Result<SeedSummary, EvalError> {
    let first = reports.first().ok_or(EvalError::Empty)?;
    let names: Vec<String> = first.metric_values().into_iter().map(|(n, _)| n).collect();
    let metrics = names
        .into_iter()
        .filter_map(|name| {
            let xs: Vec<f64> = reports
                .iter()
                .filter_map(|r| r.metric_values().into_iter().find(|(n, _)| *n == name))
                .map(|(_, v)| v)
                .collect();
            (xs.len() == reports.len())
                .then(|| MeanStd::from_samples(&xs).map(|m| (name, m)))
                .flatten()
        })
        .collect();
    Ok(SeedSummary {
        reports: reports.to_vec(),
        metrics,
    })
}
