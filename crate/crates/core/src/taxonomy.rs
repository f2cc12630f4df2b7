//! Hierarchical label space.
//!
//! Fine labels have the shape `type[.subtype[.subsubtype]]`. The `type`
//! component is the coarse type; shorter labels are valid back-off labels.
//! A [`Taxonomy`] fixes the order of fine labels, and that order is the index
//! space of every probability vector produced by the fine classifier.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// The nine coarse types used for stage-one tagging by default.
pub const DEFAULT_COARSE_TYPES: [&str; 9] =
    ["crm", "fac", "gpe", "law", "loc", "org", "per", "veh", "wea"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaxonomyError {
    #[error("malformed label {0:?}: expected 1-3 non-empty dot-separated components")]
    MalformedLabel(String),
    #[error("label {label:?} has type {coarse:?}, which is not in the coarse inventory")]
    UnknownCoarseType { label: String, coarse: String },
    #[error("malformed coarse type {0:?}")]
    MalformedCoarseType(String),
    #[error("failed to read label inventory: {0}")]
    Io(String),
}

/// Depth of a label in the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Level {
    /// `type`
    T,
    /// `type.subtype`
    ST,
    /// `type.subtype.subsubtype`
    SST,
}

impl Level {
    pub const ALL: [Level; 3] = [Level::T, Level::ST, Level::SST];

    fn depth(self) -> usize {
        match self {
            Level::T => 1,
            Level::ST => 2,
            Level::SST => 3,
        }
    }
}

fn valid_component(c: &str) -> bool {
    !c.is_empty() && !c.chars().any(|ch| ch.is_whitespace() || ch == '.')
}

/// A top-level entity category, stored lowercase.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CoarseType(String);

impl CoarseType {
    pub fn new(name: &str) -> Result<Self, TaxonomyError> {
        let lower = name.trim().to_lowercase();
        if !valid_component(&lower) {
            return Err(TaxonomyError::MalformedCoarseType(name.to_string()));
        }
        Ok(CoarseType(lower))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Atomic marker token used by the coarse-type mention representations (`PER`).
    pub fn marker(&self) -> String {
        self.0.to_uppercase()
    }
}

impl fmt::Display for CoarseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for CoarseType {
    type Err = TaxonomyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CoarseType::new(s)
    }
}

impl TryFrom<String> for CoarseType {
    type Error = TaxonomyError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        CoarseType::new(&s)
    }
}

impl From<CoarseType> for String {
    fn from(c: CoarseType) -> String {
        c.0
    }
}

/// A hierarchical label `type[.subtype[.subsubtype]]`.
///
/// The constructor guarantees that a subsubtype never exists without a subtype.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct FineLabel {
    kind: CoarseType,
    subtype: Option<String>,
    subsubtype: Option<String>,
}

impl FineLabel {
    /// Parses a dot-joined label, lowercasing every component.
    pub fn parse(text: &str) -> Result<Self, TaxonomyError> {
        let malformed = || TaxonomyError::MalformedLabel(text.to_string());
        let lower = text.trim().to_lowercase();
        if lower.is_empty() {
            return Err(malformed());
        }
        let parts: Vec<&str> = lower.split('.').collect();
        if parts.len() > 3 || !parts.iter().all(|p| valid_component(p)) {
            return Err(malformed());
        }
        Ok(FineLabel {
            kind: CoarseType(parts[0].to_string()),
            subtype: parts.get(1).map(|s| s.to_string()),
            subsubtype: parts.get(2).map(|s| s.to_string()),
        })
    }

    /// The bare label consisting of a coarse type only.
    pub fn from_coarse(coarse: &CoarseType) -> Self {
        FineLabel {
            kind: coarse.clone(),
            subtype: None,
            subsubtype: None,
        }
    }

    /// The main type of the label (`E(x)`).
    pub fn coarse(&self) -> &CoarseType {
        &self.kind
    }

    pub fn subtype(&self) -> Option<&str> {
        self.subtype.as_deref()
    }

    pub fn subsubtype(&self) -> Option<&str> {
        self.subsubtype.as_deref()
    }

    /// Number of present components (1-3).
    pub fn depth(&self) -> usize {
        1 + self.subtype.is_some() as usize + self.subsubtype.is_some() as usize
    }

    /// Drops every component below `level`.
    pub fn truncate(&self, level: Level) -> FineLabel {
        let depth = level.depth();
        FineLabel {
            kind: self.kind.clone(),
            subtype: if depth >= 2 { self.subtype.clone() } else { None },
            subsubtype: if depth >= 3 { self.subsubtype.clone() } else { None },
        }
    }

    pub fn render(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for FineLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.as_str())?;
        if let Some(s) = &self.subtype {
            write!(f, ".{s}")?;
        }
        if let Some(s) = &self.subsubtype {
            write!(f, ".{s}")?;
        }
        Ok(())
    }
}

impl FromStr for FineLabel {
    type Err = TaxonomyError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FineLabel::parse(s)
    }
}

impl TryFrom<String> for FineLabel {
    type Error = TaxonomyError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        FineLabel::parse(&s)
    }
}

impl From<FineLabel> for String {
    fn from(l: FineLabel) -> String {
        l.to_string()
    }
}

/// Convenience free function mirroring [`FineLabel::parse`].
pub fn parse_label(text: &str) -> Result<FineLabel, TaxonomyError> {
    FineLabel::parse(text)
}

/// `E(x)`: the main type of a label.
pub fn coarse_of(label: &FineLabel) -> CoarseType {
    label.coarse().clone()
}

/// Per-level agreement between a gold and a predicted label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LevelMatch {
    pub t: bool,
    pub st: bool,
    pub sst: bool,
}

impl LevelMatch {
    pub fn at(&self, level: Level) -> bool {
        match level {
            Level::T => self.t,
            Level::ST => self.st,
            Level::SST => self.sst,
        }
    }
}

/// Compares two labels level by level.
///
/// A level matches when both labels agree after truncation to that level, so
/// a component missing from both labels counts as agreement. Credit is
/// monotone: a deeper match implies all shallower ones.
pub fn match_level(gold: &FineLabel, pred: &FineLabel) -> LevelMatch {
    let t = gold.truncate(Level::T) == pred.truncate(Level::T);
    let st = t && gold.truncate(Level::ST) == pred.truncate(Level::ST);
    let sst = st && gold == pred;
    LevelMatch { t, st, sst }
}

/// Ordered fine-label inventory plus the coarse inventory it lives in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    fine_labels: Vec<FineLabel>,
    coarse_types: Vec<CoarseType>,
}

impl Taxonomy {
    /// Builds a taxonomy from labels in order, dropping duplicates.
    ///
    /// With `coarse_types = None` the coarse inventory is inferred from the
    /// labels in first-seen order. With an explicit inventory every label's
    /// type must belong to it.
    pub fn new(
        labels: impl IntoIterator<Item = FineLabel>,
        coarse_types: Option<Vec<CoarseType>>,
    ) -> Result<Self, TaxonomyError> {
        let mut seen = HashSet::new();
        let fine_labels: Vec<FineLabel> = labels
            .into_iter()
            .filter(|l| seen.insert(l.clone()))
            .collect();
        let coarse_types = match coarse_types {
            Some(types) => {
                let mut seen = HashSet::new();
                let types: Vec<CoarseType> =
                    types.into_iter().filter(|t| seen.insert(t.clone())).collect();
                for label in &fine_labels {
                    if !types.contains(label.coarse()) {
                        return Err(TaxonomyError::UnknownCoarseType {
                            label: label.to_string(),
                            coarse: label.coarse().to_string(),
                        });
                    }
                }
                types
            }
            None => {
                let mut seen = HashSet::new();
                fine_labels
                    .iter()
                    .map(|l| l.coarse().clone())
                    .filter(|t| seen.insert(t.clone()))
                    .collect()
            }
        };
        Ok(Taxonomy {
            fine_labels,
            coarse_types,
        })
    }

    /// Parses label strings; see [`Taxonomy::new`].
    pub fn from_strs<S: AsRef<str>>(
        labels: &[S],
        coarse_types: Option<&[S]>,
    ) -> Result<Self, TaxonomyError> {
        let fine = labels
            .iter()
            .map(|s| FineLabel::parse(s.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        let coarse = coarse_types
            .map(|c| {
                c.iter()
                    .map(|s| CoarseType::new(s.as_ref()))
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()?;
        Taxonomy::new(fine, coarse)
    }

    /// Number of fine labels (`l`).
    pub fn len(&self) -> usize {
        self.fine_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fine_labels.is_empty()
    }

    pub fn labels(&self) -> &[FineLabel] {
        &self.fine_labels
    }

    pub fn label(&self, index: usize) -> &FineLabel {
        &self.fine_labels[index]
    }

    pub fn index_of(&self, label: &FineLabel) -> Option<usize> {
        self.fine_labels.iter().position(|l| l == label)
    }

    pub fn coarse_types(&self) -> &[CoarseType] {
        &self.coarse_types
    }

    pub fn contains_coarse(&self, coarse: &CoarseType) -> bool {
        self.coarse_types.contains(coarse)
    }

    /// Stable digest of label order and coarse inventory, used to check
    /// checkpoint compatibility.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for l in &self.fine_labels {
            hasher.update(l.to_string().as_bytes());
            hasher.update(b"\n");
        }
        hasher.update(b"--\n");
        for c in &self.coarse_types {
            hasher.update(c.as_str().as_bytes());
            hasher.update(b"\n");
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Reads a label inventory: one label per line, `#` comments and blank lines ignored.
pub fn load_taxonomy<R: BufRead>(
    source: R,
    coarse_types: Option<Vec<CoarseType>>,
) -> Result<Taxonomy, TaxonomyError> {
    let mut labels = Vec::new();
    for line in source.lines() {
        let line = line.map_err(|e| TaxonomyError::Io(e.to_string()))?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        labels.push(FineLabel::parse(content)?);
    }
    Taxonomy::new(labels, coarse_types)
}

/// The default nine-type coarse inventory.
pub fn default_coarse_types() -> Vec<CoarseType> {
    DEFAULT_COARSE_TYPES
        .iter()
        .map(|s| CoarseType(s.to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn l(s: &str) -> FineLabel {
        FineLabel::parse(s).unwrap()
    }

    #[test]
    fn parses_three_levels() {
        let label = l("per.politician.governor");
        assert_eq!(label.coarse().as_str(), "per");
        assert_eq!(label.subtype(), Some("politician"));
        assert_eq!(label.subsubtype(), Some("governor"));
        let bare = l("per");
        assert_eq!(bare.subtype(), None);
        assert_eq!(bare.subsubtype(), None);
    }

    #[test]
    fn rejects_malformed() {
        for bad in ["", "a.b.c.d", "per..x", ".per", "per.", "per. x"] {
            assert!(
                matches!(FineLabel::parse(bad), Err(TaxonomyError::MalformedLabel(_))),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn lowercases() {
        assert_eq!(l("PER.Politician").to_string(), "per.politician");
    }

    #[test]
    fn coarse_projection() {
        assert_eq!(coarse_of(&l("per.politician.senator")).as_str(), "per");
        assert_eq!(coarse_of(&l("per")).as_str(), "per");
        assert_eq!(
            coarse_of(&l("gpe.organizationofcountries.organizationofcountries")).as_str(),
            "gpe"
        );
    }

    #[test]
    fn truncation() {
        let x = l("per.politician.governor");
        assert_eq!(x.truncate(Level::ST), l("per.politician"));
        assert_eq!(x.truncate(Level::T), l("per"));
        assert_eq!(l("per").truncate(Level::SST), l("per"));
    }

    #[test]
    fn level_matching() {
        let m = match_level(&l("per.politician.governor"), &l("per.politician"));
        assert_eq!((m.t, m.st, m.sst), (true, true, false));
        let m = match_level(&l("fac.building.house"), &l("fac.building.house"));
        assert_eq!((m.t, m.st, m.sst), (true, true, true));
        let m = match_level(&l("per.politician.governor"), &l("org"));
        assert_eq!((m.t, m.st, m.sst), (false, false, false));
        // a bare gold label only earns SST credit from an identical prediction
        let m = match_level(&l("per"), &l("per.politician"));
        assert_eq!((m.t, m.st, m.sst), (true, false, false));
        let m = match_level(&l("per"), &l("per"));
        assert_eq!((m.t, m.st, m.sst), (true, true, true));
    }

    #[test]
    fn load_inventory() {
        let tax = load_taxonomy("per\n# comment\n\nper.politician\norg\n".as_bytes(), None).unwrap();
        assert_eq!(tax.len(), 3);
        assert_eq!(tax.coarse_types().len(), 2);

        let tax = load_taxonomy("per.x\nper.x\n".as_bytes(), None).unwrap();
        assert_eq!(tax.len(), 1);

        let err = load_taxonomy("zzz.q\n".as_bytes(), Some(default_coarse_types())).unwrap_err();
        assert!(matches!(err, TaxonomyError::UnknownCoarseType { .. }));
        assert_eq!(default_coarse_types().len(), 9);
    }

    #[test]
    fn fingerprint_tracks_order() {
        let a = Taxonomy::from_strs(&["per", "org"], None).unwrap();
        let b = Taxonomy::from_strs(&["org", "per"], None).unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
    }

    fn label_strategy() -> impl Strategy<Value = String> {
        proptest::collection::vec("[a-z_]{1,6}", 1..=3).prop_map(|v| v.join("."))
    }

    proptest! {
        #[test]
        fn round_trip(s in label_strategy()) {
            prop_assert_eq!(l(&s).render(), s);
        }

        #[test]
        fn coarse_is_type_truncation(s in label_strategy()) {
            let x = l(&s);
            prop_assert_eq!(coarse_of(&x), x.truncate(Level::T).coarse().clone());
        }

        #[test]
        fn matching_is_symmetric_and_monotone(a in label_strategy(), b in label_strategy()) {
            let (a, b) = (l(&a), l(&b));
            let ab = match_level(&a, &b);
            prop_assert_eq!(ab, match_level(&b, &a));
            prop_assert!(!ab.sst || ab.st);
            prop_assert!(!ab.st || ab.t);
            let aa = match_level(&a, &a);
            prop_assert!(aa.t && aa.st && aa.sst);
        }
    }
}
