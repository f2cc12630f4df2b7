//! Seeded synthetic corpora with lexical cues at both label levels.
//!
//! A mention is a head word followed by one or two names. The head word picks
//! the fine subtype (the same heads are shared by every type), while the
//! names come from per-type pools, so the coarse type can only be learned by
//! memorizing names. Non-entity pseudo-nouns drawn from the same syllable
//! generator sit next to mentions, so boundaries also depend on memorized
//! vocabulary. A small remapped family of single-token names is labeled as an
//! organization in the coarse view and as a country grouping in the fine view.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotationMode, Document, Mention};
use crate::taxonomy::{default_coarse_types, CoarseType, FineLabel, Taxonomy};

/// Fine label given to the remapped family.
pub const REMAP_LABEL: &str = "gpe.organizationofcountries.organizationofcountries";
/// Coarse type the remapped family carries in the coarse view.
pub const REMAP_COARSE: &str = "org";

const HEADS: [[&str; 3]; 3] = [
    ["chief", "grand", "prime"],
    ["deputy", "vice", "acting"],
    ["former", "junior", "honorary"],
];

const FUNCTION_WORDS: [&str; 36] = [
    "the", "a", "of", "in", "on", "and", "to", "with", "for", "from", "at", "by", "was", "is",
    "were", "has", "had", "said", "met", "saw", "near", "after", "before", "then", "also", "but",
    "that", "this", "it", "they", "we", "there", "here", "over", "under", ".",
];

const ONSETS: [&str; 18] = [
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "kr", "st", "tr",
];
const VOWELS: [&str; 6] = ["a", "e", "i", "o", "u", "y"];
const CODAS: [&str; 6] = ["", "", "n", "r", "l", "x"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub names_per_type: usize,
    pub nouns: usize,
    pub remap_names: usize,
    /// Share of mentions drawn from the remapped family.
    pub remap_rate: f64,
    /// Share of regular mentions with two names.
    pub two_name_rate: f64,
    /// Chance that a pseudo-noun directly follows a mention.
    pub noun_after_rate: f64,
    pub sentences_per_doc: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            names_per_type: 80,
            nouns: 200,
            remap_names: 3,
            remap_rate: 0.06,
            two_name_rate: 0.5,
            noun_after_rate: 0.5,
            sentences_per_doc: 10,
        }
    }
}

/// Which label level the generated mentions carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelView {
    Coarse,
    Fine,
}

/// A fixed vocabulary from which corpora are sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticWorld {
    pub config: SynthConfig,
    types: Vec<CoarseType>,
    names: Vec<Vec<String>>,
    remap: Vec<String>,
    nouns: Vec<String>,
    taxonomy: Taxonomy,
}

/// Generator-side record of one mention, for targeted checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionTruth {
    pub doc: String,
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub remapped: bool,
}

fn fine_label(t: &CoarseType, subtype: usize) -> String {
    match (t.as_str(), subtype) {
        ("gpe", 2) => REMAP_LABEL.to_string(),
        (t, 0) => format!("{t}.alpha.one"),
        (t, 1) => format!("{t}.alpha.two"),
        (t, _) => format!("{t}.beta.three"),
    }
}

impl SyntheticWorld {
    pub fn new(config: SynthConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let types = default_coarse_types();
        let mut used: HashSet<String> = FUNCTION_WORDS.iter().map(|w| w.to_string()).collect();
        used.extend(HEADS.iter().flatten().map(|w| w.to_string()));
        let mut fresh = |rng: &mut ChaCha8Rng| loop {
            let syllables = rng.random_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push_str(ONSETS.choose(rng).unwrap());
                w.push_str(VOWELS.choose(rng).unwrap());
                w.push_str(CODAS.choose(rng).unwrap());
            }
            if used.insert(w.clone()) {
                return w;
            }
        };
        let names = types
            .iter()
            .map(|_| (0..config.names_per_type).map(|_| fresh(&mut rng)).collect())
            .collect();
        let remap = (0..config.remap_names).map(|_| fresh(&mut rng)).collect();
        let nouns = (0..config.nouns).map(|_| fresh(&mut rng)).collect();
        let labels: Vec<String> = types
            .iter()
            .flat_map(|t| (0..3).map(move |s| fine_label(t, s)))
            .collect();
        let taxonomy = Taxonomy::from_strs(&labels, None).expect("generated labels are valid");
        let taxonomy = Taxonomy::new(taxonomy.labels().to_vec(), Some(types.clone()))
            .expect("labels use the default inventory");
        SyntheticWorld {
            config,
            types,
            names,
            remap,
            nouns,
            taxonomy,
        }
    }

    /// The 27-label fine inventory over the default nine coarse types.
    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn remap_names(&self) -> &[String] {
        &self.remap
    }

    fn filler(&self, rng: &mut ChaCha8Rng, out: &mut Vec<String>, min: usize) {
        let n = rng.random_range(min..=3);
        for _ in 0..n {
            if rng.random_bool(0.3) {
                out.push(self.nouns.choose(rng).unwrap().clone());
            } else {
                out.push(FUNCTION_WORDS[..35].choose(rng).unwrap().to_string());
            }
        }
    }

    /// A sentence made only of function words: no entity cues at all.
    pub fn cue_free_sentence(&self, rng: &mut ChaCha8Rng) -> Vec<String> {
        let n = rng.random_range(3..=8);
        (0..n)
            .map(|_| FUNCTION_WORDS[..35].choose(rng).unwrap().to_string())
            .chain(std::iter::once(".".to_string()))
            .collect()
    }

    fn sentence(
        &self,
        rng: &mut ChaCha8Rng,
        view: LabelView,
        index: usize,
        mentions: &mut Vec<(Mention, bool)>,
    ) -> Vec<String> {
        let count = match rng.random_range(0..100) {
            0..15 => 0,
            15..65 => 1,
            _ => 2,
        };
        let mut words = Vec::new();
        self.filler(rng, &mut words, 0);
        for k in 0..count {
            if k > 0 {
                self.filler(rng, &mut words, 1);
            }
            let start = words.len();
            let remapped = rng.random_bool(self.config.remap_rate);
            let label = if remapped {
                words.push(self.remap.choose(rng).unwrap().clone());
                match view {
                    LabelView::Coarse => REMAP_COARSE.to_string(),
                    LabelView::Fine => REMAP_LABEL.to_string(),
                }
            } else {
                let t = rng.random_range(0..self.types.len());
                let subtype = rng.random_range(0..3);
                words.push(HEADS[subtype].choose(rng).unwrap().to_string());
                let n_names = if rng.random_bool(self.config.two_name_rate) { 2 } else { 1 };
                for _ in 0..n_names {
                    words.push(self.names[t].choose(rng).unwrap().clone());
                }
                match view {
                    LabelView::Coarse => self.types[t].to_string(),
                    LabelView::Fine => fine_label(&self.types[t], subtype),
                }
            };
            let end = words.len() - 1;
            let fine = FineLabel::parse(&label).expect("generated label");
            mentions.push((Mention::gold(index, start, end, fine), remapped));
            if rng.random_bool(self.config.noun_after_rate) {
                words.push(self.nouns.choose(rng).unwrap().clone());
            }
        }
        self.filler(rng, &mut words, 1);
        if words.last().is_none_or(|w| w != ".") {
            words.push(".".to_string());
        }
        words
    }

    /// `sentences` sentences split into documents named `{prefix}{n}`.
    pub fn corpus(&self, sentences: usize, view: LabelView, seed: u64, prefix: &str) -> Vec<Document> {
        self.corpus_with_truth(sentences, view, seed, prefix).0
    }

    /// As [`SyntheticWorld::corpus`], also returning which mentions are remapped.
    pub fn corpus_with_truth(
        &self,
        sentences: usize,
        view: LabelView,
        seed: u64,
        prefix: &str,
    ) -> (Vec<Document>, Vec<MentionTruth>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let per_doc = self.config.sentences_per_doc.max(1);
        let mut docs = Vec::new();
        let mut truth = Vec::new();
        let mut produced = 0;
        while produced < sentences {
            let n = per_doc.min(sentences - produced);
            let id = format!("{prefix}{}", docs.len());
            let mut words = Vec::with_capacity(n);
            let mut mentions = Vec::new();
            for i in 0..n {
                words.push(self.sentence(&mut rng, view, i, &mut mentions));
            }
            for (m, remapped) in &mentions {
                truth.push(MentionTruth {
                    doc: id.clone(),
                    sentence: m.sentence,
                    start: m.start,
                    end: m.end,
                    remapped: *remapped,
                });
            }
            let ms = mentions.into_iter().map(|(m, _)| m).collect();
            docs.push(
                Document::from_words(id, &words, ms, AnnotationMode::Full)
                    .expect("generated mentions are disjoint"),
            );
            produced += n;
        }
        (docs, truth)
    }

    /// Documents of cue-free sentences (no mentions).
    pub fn cue_free_corpus(&self, sentences: usize, seed: u64, prefix: &str) -> Vec<Document> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let words: Vec<Vec<String>> = (0..sentences).map(|_| self.cue_free_sentence(&mut rng)).collect();
        vec![Document::from_words(format!("{prefix}0"), &words, vec![], AnnotationMode::Full)
            .expect("non-empty sentences")]
    }
}

/// Keeps each mention with probability `1 - withhold` and marks the result
/// as partially annotated.
pub fn withhold_mentions(docs: &[Document], withhold: f64, seed: u64) -> Vec<Document> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    docs.iter()
        .map(|d| {
            let kept = d
                .mentions()
                .iter()
                .filter(|_| !rng.random_bool(withhold))
                .cloned()
                .collect();
            d.with_mentions(kept, AnnotationMode::Partial)
                .expect("subset of valid mentions")
        })
        .collect()
}
