//! IOB2 sequence tagger over a label inventory.
//!
//! With the coarse inventory this is the first stage of the cascade; with the
//! full fine inventory it is the end-to-end baseline. Only first pieces carry
//! loss; continuation pieces are tagged `X` with weight zero.

use std::ops::Range;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{
    align_to_subwords, iob2_to_spans, project_from_subwords, repair, spans_to_iob2, CodecError,
    Span, Tag,
};
use crate::corpus::{AnnotationMode, CorpusError, Document, Mention, Sentence};
use crate::encoder::{
    train_step, Adam, AdamConfig, Checkpoint, CrossEntropy, EncoderError, EncoderShape, Example,
    HeadNet, PretrainedEncoder, Target, Tokenizer, TokenizerConfig,
};
use crate::evaluation::{mention_prf, EvalError, Granularity};
use crate::taxonomy::{CoarseType, FineLabel, Taxonomy, TaxonomyError};

pub const TAGGER_KIND: &str = "tagger";

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error(
        "document {0:?} is partially annotated: sequence tagging would read its unlabeled \
         mentions as outside; train the cascade's fine classifier on partial data instead"
    )]
    PartialAnnotation(String),
    #[error("mention at {doc:?} sentence {sentence} token {start} has no {level} label")]
    MissingLabel {
        doc: String,
        sentence: usize,
        start: usize,
        level: &'static str,
    },
    #[error("label {0:?} is not in the tagger inventory")]
    UnknownLabel(String),
    #[error("training corpus has no sentences")]
    EmptyTraining,
    #[error("invalid tagger configuration: {0}")]
    InvalidConfig(String),
    #[error("token {token} of {pieces} pieces exceeds the window of {window}")]
    TokenTooLong {
        token: usize,
        pieces: usize,
        window: usize,
    },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("bad tagger checkpoint: {0}")]
    Checkpoint(String),
}

/// Which labels the tagger predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inventory {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaggerConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub inventory: Inventory,
    pub clip_norm: Option<f64>,
    /// Decoupled weight decay applied by the optimizer.
    pub weight_decay: f64,
    pub encoder: EncoderShape,
    pub tokenizer: TokenizerConfig,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        TaggerConfig {
            learning_rate: 1e-5,
            batch_size: 64,
            epochs: 20,
            seed: 0,
            inventory: Inventory::Coarse,
            clip_norm: Some(1.0),
            weight_decay: 0.0,
            encoder: EncoderShape::default(),
            tokenizer: TokenizerConfig::default(),
        }
    }
}

impl TaggerConfig {
    pub fn validate(&self) -> Result<(), TaggerError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(TaggerError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(TaggerError::InvalidConfig(
                "batch size and epochs must be positive".into(),
            ));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(TaggerError::InvalidConfig(format!("weight decay must be non-negative, got {}", self.weight_decay)));
        }
        if self.clip_norm.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return Err(TaggerError::InvalidConfig("clip norm must be positive".into()));
        }
        if self.encoder.max_len < 3 {
            return Err(TaggerError::InvalidConfig(
                "max_len must leave room for one content piece".into(),
            ));
        }
        Ok(())
    }

    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `[O, X, B-l1, I-l1, B-l2, I-l2, ...]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TagAlphabet {
    labels: Vec<String>,
    tags: Vec<Tag>,
}

impl From<Vec<String>> for TagAlphabet {
    fn from(labels: Vec<String>) -> Self {
        TagAlphabet::new(labels)
    }
}

impl From<TagAlphabet> for Vec<String> {
    fn from(a: TagAlphabet) -> Self {
        a.labels
    }
}

impl TagAlphabet {
    pub const O_INDEX: usize = 0;
    pub const X_INDEX: usize = 1;

    pub fn new(labels: Vec<String>) -> Self {
        let mut tags = vec![Tag::O, Tag::X];
        for l in &labels {
            tags.push(Tag::B(l.clone()));
            tags.push(Tag::I(l.clone()));
        }
        TagAlphabet { labels, tags }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn tags(&self) -> &[Tag] {
        &self.tags
    }

    pub fn tag(&self, index: usize) -> &Tag {
        &self.tags[index]
    }

    pub fn index_of(&self, tag: &Tag) -> Option<usize> {
        match tag {
            Tag::O => Some(Self::O_INDEX),
            Tag::X => Some(Self::X_INDEX),
            Tag::B(l) => self.labels.iter().position(|x| x == l).map(|i| 2 + 2 * i),
            Tag::I(l) => self.labels.iter().position(|x| x == l).map(|i| 3 + 2 * i),
        }
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub dev_precision: f64,
    pub dev_recall: f64,
    pub dev_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TaggerMeta {
    alphabet: TagAlphabet,
    inventory: Inventory,
    coarse_types: Vec<CoarseType>,
    taxonomy_fingerprint: String,
    config: TaggerConfig,
    config_fingerprint: String,
    selected_epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    pub net: HeadNet,
    pub tokenizer: Tokenizer,
    pub alphabet: TagAlphabet,
    pub inventory: Inventory,
    pub coarse_types: Vec<CoarseType>,
    pub taxonomy_fingerprint: String,
    pub config: TaggerConfig,
    pub config_fingerprint: String,
    /// Epoch whose parameters were kept (1-based).
    pub selected_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct TrainedTagger {
    pub model: TaggerModel,
    pub log: Vec<EpochRecord>,
}

fn gold_label(doc: &Document, m: &Mention, inventory: Inventory) -> Result<String, TaggerError> {
    let missing = |level| TaggerError::MissingLabel {
        doc: doc.id.clone(),
        sentence: m.sentence,
        start: m.start,
        level,
    };
    match inventory {
        Inventory::Coarse => Ok(m.coarse_type().ok_or_else(|| missing("coarse"))?.to_string()),
        Inventory::Fine => Ok(m.fine.as_ref().ok_or_else(|| missing("fine"))?.to_string()),
    }
}

fn sentence_tags(
    doc: &Document,
    sentence: usize,
    inventory: Inventory,
    alphabet: &TagAlphabet,
) -> Result<Vec<Tag>, TaggerError> {
    let spans = doc
        .mentions_in(sentence)
        .map(|m| {
            let label = gold_label(doc, m, inventory)?;
            if !alphabet.labels.contains(&label) {
                return Err(TaggerError::UnknownLabel(label));
            }
            Ok(Span::new(m.start, m.end, label))
        })
        .collect::<Result<Vec<_>, TaggerError>>()?;
    Ok(spans_to_iob2(doc.sentences[sentence].len(), &spans)?)
}

fn require_full(docs: &[Document]) -> Result<(), TaggerError> {
    match docs.iter().find(|d| d.annotation_mode != AnnotationMode::Full) {
        Some(d) => Err(TaggerError::PartialAnnotation(d.id.clone())),
        None => Ok(()),
    }
}

impl TaggerModel {
    /// Tokenizer and encoder weights, for initializing a fine classifier.
    pub fn pretrained_encoder(&self) -> PretrainedEncoder {
        PretrainedEncoder {
            tokenizer: self.tokenizer.clone(),
            params: self.net.encoder.clone(),
        }
    }

    /// Greedy token windows whose pieces fit between `<CLS>` and `<SEP>`.
    pub fn windows<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<Range<usize>>, TaggerError> {
        let budget = self.net.encoder.config.max_len - 2;
        let mut out = Vec::new();
        let mut start = 0;
        let mut used = 0;
        for (i, t) in tokens.iter().enumerate() {
            let n = self.tokenizer.piece_count(t.as_ref());
            if n > budget {
                return Err(TaggerError::TokenTooLong {
                    token: i,
                    pieces: n,
                    window: budget,
                });
            }
            if used + n > budget {
                out.push(start..i);
                start = i;
                used = 0;
            }
            used += n;
        }
        out.push(start..tokens.len());
        Ok(out)
    }

    fn examples(&self, doc: &Document) -> Result<Vec<Example>, TaggerError> {
        let mut out = Vec::new();
        for (si, sentence) in doc.sentences.iter().enumerate() {
            let tags = sentence_tags(doc, si, self.inventory, &self.alphabet)?;
            let words = sentence.words();
            for w in self.windows(&words)? {
                let (seq, alignment) = self.tokenizer.tokenize(&words[w.clone()])?;
                let piece_tags = align_to_subwords(&tags[w], &alignment)?;
                let targets = piece_tags
                    .iter()
                    .enumerate()
                    .map(|(k, tag)| {
                        let class = self
                            .alphabet
                            .index_of(tag)
                            .ok_or_else(|| TaggerError::UnknownLabel(tag.to_string()))?;
                        let weight = if *tag == Tag::X { 0.0 } else { 1.0 };
                        Ok(Target {
                            row: k + 1,
                            class,
                            weight,
                        })
                    })
                    .collect::<Result<Vec<_>, TaggerError>>()?;
                out.push(Example {
                    ids: seq.ids,
                    targets,
                });
            }
        }
        Ok(out)
    }

    /// Training examples for a corpus: one per sentence window.
    pub fn training_examples(&self, docs: &[Document]) -> Result<Vec<Example>, TaggerError> {
        let per_doc = docs
            .iter()
            .map(|d| self.examples(d))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(per_doc.into_iter().flatten().collect())
    }

    /// Token-level tags and the mentions they decode to.
    pub fn predict_tags(&self, sentence: &Sentence) -> Result<(Vec<Tag>, Vec<Mention>), TaggerError> {
        let words = sentence.words();
        let mut tags = Vec::with_capacity(words.len());
        let mut probs = Vec::with_capacity(words.len());
        for w in self.windows(&words)? {
            let (seq, alignment) = self.tokenizer.tokenize(&words[w])?;
            let p = self.net.probabilities(&seq.ids)?;
            let mut piece_tags = Vec::with_capacity(alignment.piece_count());
            let mut piece_probs = Vec::with_capacity(alignment.piece_count());
            for k in 0..alignment.piece_count() {
                let row = p.row(k + 1);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = j;
                    }
                }
                piece_tags.push(self.alphabet.tag(best).clone());
                piece_probs.push(row[best]);
            }
            tags.extend(project_from_subwords(&piece_tags, &alignment)?);
            probs.extend(alignment.first_pieces().into_iter().map(|k| piece_probs[k]));
        }
        let tags = repair(&tags);
        let mentions = iob2_to_spans(&tags)
            .into_iter()
            .map(|span| {
                let conf = probs[span.start..=span.end].iter().sum::<f64>() / span.len() as f64;
                let mut m = match self.inventory {
                    Inventory::Coarse => Mention::coarse_only(
                        sentence.index,
                        span.start,
                        span.end,
                        CoarseType::new(&span.label)?,
                    ),
                    Inventory::Fine => {
                        Mention::gold(sentence.index, span.start, span.end, FineLabel::parse(&span.label)?)
                    }
                };
                m.confidence = Some(conf);
                Ok(m)
            })
            .collect::<Result<Vec<_>, TaggerError>>()?;
        Ok((tags, mentions))
    }

    /// Same text with the tagger's mentions.
    pub fn predict_document(&self, doc: &Document) -> Result<Document, TaggerError> {
        let mut mentions = Vec::new();
        for s in &doc.sentences {
            mentions.extend(self.predict_tags(s)?.1);
        }
        Ok(doc.with_mentions(mentions, AnnotationMode::Full)?)
    }

    pub fn predict_corpus(&self, docs: &[Document]) -> Result<Vec<Document>, TaggerError> {
        docs.par_iter().map(|d| self.predict_document(d)).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), TaggerError> {
        let meta = TaggerMeta {
            alphabet: self.alphabet.clone(),
            inventory: self.inventory,
            coarse_types: self.coarse_types.clone(),
            taxonomy_fingerprint: self.taxonomy_fingerprint.clone(),
            config: self.config.clone(),
            config_fingerprint: self.config_fingerprint.clone(),
            selected_epoch: self.selected_epoch,
        };
        let meta = serde_json::to_value(meta).map_err(|e| TaggerError::Checkpoint(e.to_string()))?;
        let ckpt = Checkpoint::capture(
            TAGGER_KIND,
            &self.net.encoder.config,
            &self.tokenizer,
            &self.net,
            meta,
        );
        Ok(ckpt.save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, TaggerError> {
        let ckpt = Checkpoint::load(path, Some(TAGGER_KIND))?;
        let meta: TaggerMeta = serde_json::from_value(ckpt.meta.clone())
            .map_err(|e| TaggerError::Checkpoint(e.to_string()))?;
        if ckpt.tokenizer.vocab_size() != ckpt.encoder.vocab_size {
            return Err(TaggerError::Checkpoint(
                "tokenizer and encoder vocabulary sizes differ".into(),
            ));
        }
        let mut net = HeadNet::init(ckpt.encoder.clone(), meta.alphabet.len(), 0)?;
        ckpt.restore_into(&mut net)?;
        Ok(TaggerModel {
            net,
            tokenizer: ckpt.tokenizer,
            alphabet: meta.alphabet,
            inventory: meta.inventory,
            coarse_types: meta.coarse_types,
            taxonomy_fingerprint: meta.taxonomy_fingerprint,
            config: meta.config,
            config_fingerprint: meta.config_fingerprint,
            selected_epoch: meta.selected_epoch,
        })
    }
}

/// Trains a tagger and keeps the epoch with the best dev mention F1
/// (earliest epoch on ties).
pub fn train_tagger(
    train: &[Document],
    dev: &[Document],
    taxonomy: &Taxonomy,
    config: &TaggerConfig,
) -> Result<TrainedTagger, TaggerError> {
    config.validate()?;
    require_full(train)?;
    require_full(dev)?;
    if train.iter().all(|d| d.sentences.is_empty()) {
        return Err(TaggerError::EmptyTraining);
    }
    let labels: Vec<String> = match config.inventory {
        Inventory::Coarse => taxonomy.coarse_types().iter().map(|c| c.to_string()).collect(),
        Inventory::Fine => taxonomy.labels().iter().map(|l| l.to_string()).collect(),
    };
    let words = train
        .iter()
        .flat_map(|d| &d.sentences)
        .flat_map(|s| s.tokens.iter().map(|t| t.text.as_str()));
    // Markers are reserved so the encoder can seed a marker-based classifier.
    let markers: Vec<String> = taxonomy.coarse_types().iter().map(CoarseType::marker).collect();
    let tokenizer = Tokenizer::train(words, &markers, &config.tokenizer);
    let net = HeadNet::init(
        config.encoder.with_vocab(tokenizer.vocab_size()),
        2 + 2 * labels.len(),
        config.seed,
    )?;
    let mut model = TaggerModel {
        net,
        tokenizer,
        alphabet: TagAlphabet::new(labels),
        inventory: config.inventory,
        coarse_types: taxonomy.coarse_types().to_vec(),
        taxonomy_fingerprint: taxonomy.fingerprint(),
        config: config.clone(),
        config_fingerprint: config.fingerprint(),
        selected_epoch: 0,
    };
    let examples = model.training_examples(train)?;
    // Dev labels are checked up front so a bad dev file fails before training.
    model.training_examples(dev)?;

    let mut optimizer = Adam::new(
        &model.net,
        AdamConfig {
            clip_norm: config.clip_norm,
            weight_decay: config.weight_decay,
            ..AdamConfig::with_lr(config.learning_rate)
        },
    );
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, HeadNet)> = None;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &examples[i]).collect();
            loss += train_step(&CrossEntropy, &mut model.net, &batch, &mut optimizer)?;
            batches += 1;
        }
        let predicted = model.predict_corpus(dev)?;
        let prf = mention_prf(dev, &predicted, Granularity::Full)?;
        log.push(EpochRecord {
            epoch,
            loss: loss / batches.max(1) as f64,
            dev_precision: prf.precision,
            dev_recall: prf.recall,
            dev_f1: prf.f1,
        });
        if best.as_ref().is_none_or(|(f, _, _)| prf.f1 > *f) {
            best = Some((prf.f1, epoch, model.net.clone()));
        }
    }
    let (_, epoch, net) = best.expect("at least one epoch");
    model.net = net;
    model.selected_epoch = epoch;
    Ok(TrainedTagger { model, log })
}

/// End-to-end baseline: the same tagger over the fine inventory.
pub fn train_baseline(
    train: &[Document],
    dev: &[Document],
    taxonomy: &Taxonomy,
    config: &TaggerConfig,
) -> Result<TrainedTagger, TaggerError> {
    let config = TaggerConfig {
        inventory: Inventory::Fine,
        ..config.clone()
    };
    train_tagger(train, dev, taxonomy, &config)
}
