//! Decode-time restriction of the fine-label space given a coarse type.
//!
//! A filter returns the indices (in taxonomy order) of the labels that stay
//! eligible. Decoding takes the argmax inside that subset and renormalizes
//! its probability over the subset.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::taxonomy::{CoarseType, FineLabel, Taxonomy};

/// Probabilities over a taxonomy, in taxonomy label order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub const TOLERANCE: f64 = 1e-6;

    pub fn new(probs: Vec<f64>) -> Result<Self, ClassifierError> {
        if probs.is_empty() {
            return Err(ClassifierError::InvalidProbabilities("empty vector".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ClassifierError::InvalidProbabilities(format!("entry {p} outside [0, 1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::TOLERANCE {
            return Err(ClassifierError::InvalidProbabilities(format!("entries sum to {sum}")));
        }
        Ok(ProbVector(probs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }

    /// Index of the largest probability; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax_in(&self.0, 0..self.0.len()).expect("non-empty")
    }
}

fn argmax_in(p: &[f64], subset: impl IntoIterator<Item = usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in subset {
        if best.is_none_or(|b| p[i] > p[b]) {
            best = Some(i);
        }
    }
    best
}

fn check_len(p: &ProbVector, taxonomy: &Taxonomy) {
    assert_eq!(p.len(), taxonomy.len(), "probability vector does not match the taxonomy");
}

/// Every label.
pub fn filter_pass_through(p: &ProbVector, taxonomy: &Taxonomy, _t: &CoarseType) -> Vec<usize> {
    check_len(p, taxonomy);
    (0..p.len()).collect()
}

/// Labels whose type is `t`. Empty when `t` has no fine labels.
pub fn filter_coarse_type(p: &ProbVector, taxonomy: &Taxonomy, t: &CoarseType) -> Vec<usize> {
    check_len(p, taxonomy);
    (0..p.len()).filter(|&i| taxonomy.label(i).coarse() == t).collect()
}

/// Labels whose type is `t`, plus any label with probability at least `theta`.
pub fn filter_threshold(p: &ProbVector, taxonomy: &Taxonomy, t: &CoarseType, theta: f64) -> Vec<usize> {
    check_len(p, taxonomy);
    (0..p.len())
        .filter(|&i| taxonomy.label(i).coarse() == t || p.get(i) >= theta)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FilterConfig {
    #[default]
    PassThrough,
    CoarseType,
    Threshold { theta: f64 },
}

impl fmt::Display for FilterConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterConfig::PassThrough => f.write_str("pass_through"),
            FilterConfig::CoarseType => f.write_str("coarse_type"),
            FilterConfig::Threshold { theta } => write!(f, "threshold({theta})"),
        }
    }
}

impl FilterConfig {
    /// Operating point for the threshold filter.
    pub const DEFAULT_THETA: f64 = 0.9;

    pub fn threshold(theta: f64) -> Result<Self, ClassifierError> {
        let f = FilterConfig::Threshold { theta };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), ClassifierError> {
        match *self {
            FilterConfig::Threshold { theta } if !(0.0..=1.0).contains(&theta) => {
                Err(ClassifierError::ThetaOutOfRange(theta))
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, p: &ProbVector, taxonomy: &Taxonomy, t: &CoarseType) -> Vec<usize> {
        match *self {
            FilterConfig::PassThrough => filter_pass_through(p, taxonomy, t),
            FilterConfig::CoarseType => filter_coarse_type(p, taxonomy, t),
            FilterConfig::Threshold { theta } => filter_threshold(p, taxonomy, t, theta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub index: usize,
    pub label: FineLabel,
    /// Selected probability renormalized over the filtered subset.
    pub confidence: f64,
    /// The filter left nothing and the unfiltered argmax was used.
    pub fallback: bool,
}

/// Argmax over the filtered subset, lowest index on ties.
///
/// An empty subset falls back to the whole label space and sets `fallback`.
/// If the subset carries no probability mass at all, every member is treated
/// as equally likely.
pub fn decode_label(
    p: &ProbVector,
    taxonomy: &Taxonomy,
    t: &CoarseType,
    filter: &FilterConfig,
) -> Decoded {
    let mut subset = filter.apply(p, taxonomy, t);
    let fallback = subset.is_empty();
    if fallback {
        subset = filter_pass_through(p, taxonomy, t);
    }
    let index = argmax_in(p.as_slice(), subset.iter().copied()).expect("non-empty subset");
    let mass: f64 = subset.iter().map(|&i| p.get(i)).sum();
    let confidence = if mass > 0.0 {
        p.get(index) / mass
    } else {
        1.0 / subset.len() as f64
    };
    Decoded {
        index,
        label: taxonomy.label(index).clone(),
        confidence,
        fallback,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ct(s: &str) -> CoarseType {
        CoarseType::new(s).unwrap()
    }

    fn toy() -> (Taxonomy, ProbVector) {
        let tax = Taxonomy::from_strs(&["per", "per.politician", "gpe"], None).unwrap();
        (tax, ProbVector::new(vec![0.2, 0.3, 0.5]).unwrap())
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![1.5, -0.5]).is_err());
        assert!(ProbVector::new(vec![0.5, 0.5 + 1e-9]).is_ok());
        assert_eq!(ProbVector::new(vec![0.4, 0.4, 0.2]).unwrap().argmax(), 0);
    }

    #[test]
    fn coarse_filter_example() {
        let (tax, p) = toy();
        assert_eq!(filter_coarse_type(&p, &tax, &ct("per")), vec![0, 1]);
        assert!(filter_coarse_type(&p, &tax, &ct("org")).is_empty());
        let per_only = Taxonomy::from_strs(&["per", "per.x"], None).unwrap();
        let q = ProbVector::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(filter_coarse_type(&q, &per_only, &ct("per")), filter_pass_through(&q, &per_only, &ct("per")));
    }

    #[test]
    fn decode_examples() {
        let (tax, p) = toy();
        let d = decode_label(&p, &tax, &ct("per"), &FilterConfig::PassThrough);
        assert_eq!(d.label.to_string(), "gpe");
        assert_eq!(d.confidence, 0.5);
        let d = decode_label(&p, &tax, &ct("per"), &FilterConfig::CoarseType);
        assert_eq!(d.label.to_string(), "per.politician");
        assert!((d.confidence - 0.6).abs() < 1e-12);
        assert!(!d.fallback);
        let d = decode_label(&p, &tax, &ct("per"), &FilterConfig::threshold(0.9).unwrap());
        assert_eq!(d.label.to_string(), "per.politician");
    }

    #[test]
    fn threshold_keeps_confident_cross_type_label() {
        let tax = Taxonomy::from_strs(
            &["org", "org.company", "gpe.organizationofcountries.organizationofcountries"],
            None,
        )
        .unwrap();
        let p = ProbVector::new(vec![0.03, 0.02, 0.95]).unwrap();
        let kept = filter_threshold(&p, &tax, &ct("org"), 0.9);
        assert_eq!(kept, vec![0, 1, 2]);
        let d = decode_label(&p, &tax, &ct("org"), &FilterConfig::threshold(0.9).unwrap());
        assert_eq!(d.index, 2);
    }

    #[test]
    fn empty_filter_falls_back() {
        let (tax, p) = toy();
        let d = decode_label(&p, &tax, &ct("org"), &FilterConfig::CoarseType);
        assert!(d.fallback);
        assert_eq!(d.label.to_string(), "gpe");
    }

    #[test]
    fn zero_mass_subset() {
        let tax = Taxonomy::from_strs(&["per", "per.x", "gpe"], None).unwrap();
        let p = ProbVector::new(vec![0.0, 0.0, 1.0]).unwrap();
        let d = decode_label(&p, &tax, &ct("per"), &FilterConfig::CoarseType);
        assert_eq!(d.index, 0);
        assert_eq!(d.confidence, 0.5);
    }

    #[test]
    fn theta_range() {
        assert!(FilterConfig::threshold(1.1).is_err());
        assert!(FilterConfig::threshold(-0.1).is_err());
        assert!(FilterConfig::threshold(f64::NAN).is_err());
        assert!(FilterConfig::threshold(0.0).is_ok());
        assert!(FilterConfig::threshold(1.0).is_ok());
    }

    #[test]
    fn serde_shape() {
        let f: FilterConfig = serde_json::from_str(r#"{"kind":"threshold","theta":0.9}"#).unwrap();
        assert_eq!(f, FilterConfig::Threshold { theta: 0.9 });
        let f: FilterConfig = serde_json::from_str(r#"{"kind":"pass_through"}"#).unwrap();
        assert_eq!(f, FilterConfig::PassThrough);
    }

    fn taxonomy_strategy() -> impl Strategy<Value = Taxonomy> {
        proptest::collection::vec((0usize..4, 0usize..3), 1..10).prop_map(|v| {
            let types = ["per", "org", "gpe", "loc"];
            let labels: Vec<String> = v
                .into_iter()
                .map(|(t, s)| if s == 0 { types[t].to_string() } else { format!("{}.s{s}", types[t]) })
                .collect();
            Taxonomy::from_strs(&labels, None).unwrap()
        })
    }

    fn case() -> impl Strategy<Value = (Taxonomy, ProbVector, CoarseType)> {
        taxonomy_strategy().prop_flat_map(|tax| {
            let n = tax.len();
            (
                Just(tax),
                proptest::collection::vec(0.0f64..1.0, n),
                prop::sample::select(vec!["per", "org", "gpe", "loc"]),
            )
                .prop_map(|(tax, w, t)| {
                    let total: f64 = w.iter().sum::<f64>() + 1e-9;
                    let p = w.iter().map(|x| (x + 1e-9 / w.len() as f64) / total).collect();
                    (tax, ProbVector::new(p).unwrap(), ct(t))
                })
        })
    }

    proptest! {
        #[test]
        fn subset_laws((tax, p, t) in case(), theta in 0.0f64..=1.0) {
            let pass = filter_pass_through(&p, &tax, &t);
            let coarse = filter_coarse_type(&p, &tax, &t);
            let thr = filter_threshold(&p, &tax, &t, theta);
            prop_assert!(coarse.iter().all(|i| pass.contains(i)));
            prop_assert!(coarse.iter().all(|i| thr.contains(i)));
            prop_assert_eq!(filter_threshold(&p, &tax, &t, 0.0), pass.clone());
            let max = p.as_slice().iter().cloned().fold(0.0, f64::max);
            if max < 1.0 {
                let above = (max + 1.0) / 2.0;
                prop_assert_eq!(filter_threshold(&p, &tax, &t, above), coarse.clone());
            }
            for &i in &coarse {
                prop_assert_eq!(tax.label(i).coarse(), &t);
            }
        }

        #[test]
        fn decode_laws((tax, p, t) in case(), other in prop::sample::select(vec!["per", "org", "gpe", "loc"])) {
            let a = decode_label(&p, &tax, &t, &FilterConfig::PassThrough);
            let b = decode_label(&p, &tax, &ct(other), &FilterConfig::PassThrough);
            prop_assert_eq!(&a, &b);
            for f in [FilterConfig::PassThrough, FilterConfig::CoarseType, FilterConfig::Threshold { theta: 0.5 }] {
                let d = decode_label(&p, &tax, &t, &f);
                prop_assert!(d.confidence > 0.0 && d.confidence <= 1.0);
                let subset = f.apply(&p, &tax, &t);
                if subset.len() == 1 {
                    prop_assert_eq!(d.confidence, 1.0);
                }
                if !subset.is_empty() {
                    prop_assert!(subset.contains(&d.index));
                }
            }
        }
    }
}
