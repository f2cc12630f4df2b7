//! Per-mention fine-grained classifier.
//!
//! Each mention is rendered into its own token sequence, encoded, and scored
//! over the whole fine-label inventory from the pooled (sequence-start)
//! vector. Filters restrict the label space at decode time only; training
//! has no filter parameter.

mod filter;
mod render;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use filter::{
    decode_label, filter_coarse_type, filter_pass_through, filter_threshold, Decoded, FilterConfig,
    ProbVector,
};
pub use render::{
    render, render_entity_bounded, render_entity_masked, render_masked, write_rendered,
    Representation, RenderedExample,
};

use crate::corpus::{Document, Sentence};
use crate::encoder::{
    train_step, Adam, AdamConfig, Checkpoint, CrossEntropy, EncoderError, EncoderShape, Example,
    HeadNet, PieceSequence, PretrainedEncoder, Target, Tokenizer, TokenizerConfig,
};
use crate::evaluation::hier_accuracy;
use crate::taxonomy::{CoarseType, FineLabel, Taxonomy, TaxonomyError};

pub const CLASSIFIER_KIND: &str = "classifier";

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("unknown representation {0:?} (expected masked, entity_masked or entity_bounded)")]
    UnknownRepresentation(String),
    #[error("example rendered as {found} but the model expects {expected}")]
    RepresentationMismatch {
        expected: Representation,
        found: Representation,
    },
    #[error("theta {0} is outside [0, 1]")]
    ThetaOutOfRange(f64),
    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),
    #[error("mention {start}..={end} is outside sentence {sentence} of {doc:?}")]
    MentionOutOfBounds {
        doc: String,
        sentence: usize,
        start: usize,
        end: usize,
    },
    #[error("mention at {doc:?} sentence {sentence} token {start} does not fit the encoder window")]
    MentionTooLong {
        doc: String,
        sentence: usize,
        start: usize,
    },
    #[error("mention at {doc:?} sentence {sentence} token {start} has no fine label")]
    MissingFineLabel {
        doc: String,
        sentence: usize,
        start: usize,
    },
    #[error("gold label {0:?} is not in the taxonomy")]
    UnknownLabel(String),
    #[error("no training examples")]
    EmptyTraining,
    #[error("invalid classifier configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error("bad classifier checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub representation: Representation,
    /// Filter stored with the checkpoint as the decode default.
    pub filter: FilterConfig,
    pub clip_norm: Option<f64>,
    /// Decoupled weight decay applied by the optimizer.
    pub weight_decay: f64,
    pub encoder: EncoderShape,
    pub tokenizer: TokenizerConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            learning_rate: 2e-5,
            batch_size: 24,
            epochs: 10,
            seed: 0,
            representation: Representation::Masked,
            filter: FilterConfig::PassThrough,
            clip_norm: Some(1.0),
            weight_decay: 0.0,
            encoder: EncoderShape::default(),
            tokenizer: TokenizerConfig::default(),
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ClassifierError::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(ClassifierError::InvalidConfig(
                "batch size and epochs must be positive".into(),
            ));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(ClassifierError::InvalidConfig(format!("weight decay must be non-negative, got {}", self.weight_decay)));
        }
        if self.clip_norm.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return Err(ClassifierError::InvalidConfig("clip norm must be positive".into()));
        }
        self.filter.validate()
    }
}

/// A rendered mention with its gold label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub example: RenderedExample,
    pub label: FineLabel,
}

/// Renders every labeled mention of `docs`, using the gold coarse type for
/// the marker-based representations. Partial annotation is fine: only the
/// mentions present are used.
pub fn build_examples(
    docs: &[Document],
    kind: Representation,
) -> Result<Vec<LabeledExample>, ClassifierError> {
    let mut out = Vec::new();
    for d in docs {
        for m in d.mentions() {
            let missing = || ClassifierError::MissingFineLabel {
                doc: d.id.clone(),
                sentence: m.sentence,
                start: m.start,
            };
            let label = m.fine.clone().ok_or_else(missing)?;
            let coarse = m.coarse_type().ok_or_else(missing)?;
            let example = render(kind, &d.sentences[m.sentence], m, &coarse)?;
            out.push(LabeledExample { example, label });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub dev_acc_t: f64,
    pub dev_acc_st: f64,
    pub dev_acc_sst: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassifierMeta {
    taxonomy: Taxonomy,
    representation: Representation,
    default_filter: FilterConfig,
    config: ClassifierConfig,
    selected_epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub net: HeadNet,
    pub tokenizer: Tokenizer,
    pub taxonomy: Taxonomy,
    pub representation: Representation,
    pub default_filter: FilterConfig,
    pub config: ClassifierConfig,
    pub selected_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct TrainedClassifier {
    pub model: ClassifierModel,
    pub log: Vec<EpochRecord>,
}

impl ClassifierModel {
    pub fn taxonomy_fingerprint(&self) -> String {
        self.taxonomy.fingerprint()
    }

    fn pieces(&self, example: &RenderedExample) -> Result<PieceSequence, ClassifierError> {
        if example.kind != self.representation {
            return Err(ClassifierError::RepresentationMismatch {
                expected: self.representation,
                found: example.kind,
            });
        }
        let budget = self.net.encoder.config.max_len - 2;
        let pieces = |t: &[String]| t.iter().map(|w| self.tokenizer.piece_count(w)).sum::<usize>();
        let tokens = if pieces(&example.tokens) <= budget {
            example.tokens.clone()
        } else {
            example.trim_to(|t| pieces(t) <= budget)?
        };
        Ok(self.tokenizer.tokenize(&tokens)?.0)
    }

    /// Probabilities over the taxonomy for one rendered mention.
    pub fn classify(&self, example: &RenderedExample) -> Result<ProbVector, ClassifierError> {
        let seq = self.pieces(example)?;
        ProbVector::new(self.net.row_probabilities(&seq.ids, 0)?)
    }

    /// Renders, classifies and decodes one mention span.
    pub fn label_mention(
        &self,
        sentence: &Sentence,
        mention: &crate::corpus::Mention,
        coarse: &CoarseType,
        filter: &FilterConfig,
    ) -> Result<Decoded, ClassifierError> {
        let example = render(self.representation, sentence, mention, coarse)?;
        let p = self.classify(&example)?;
        Ok(decode_label(&p, &self.taxonomy, coarse, filter))
    }

    fn training_example(&self, ex: &LabeledExample) -> Result<Example, ClassifierError> {
        let class = self
            .taxonomy
            .index_of(&ex.label)
            .ok_or_else(|| ClassifierError::UnknownLabel(ex.label.to_string()))?;
        Ok(Example {
            ids: self.pieces(&ex.example)?.ids,
            targets: vec![Target::new(0, class)],
        })
    }

    /// Pass-through argmax on each example (the dev selection metric).
    pub fn predict_labels(&self, examples: &[LabeledExample]) -> Result<Vec<FineLabel>, ClassifierError> {
        examples
            .par_iter()
            .map(|ex| {
                let p = self.classify(&ex.example)?;
                Ok(self.taxonomy.label(p.argmax()).clone())
            })
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        let meta = ClassifierMeta {
            taxonomy: self.taxonomy.clone(),
            representation: self.representation,
            default_filter: self.default_filter,
            config: self.config.clone(),
            selected_epoch: self.selected_epoch,
        };
        let meta =
            serde_json::to_value(meta).map_err(|e| ClassifierError::Checkpoint(e.to_string()))?;
        let ckpt = Checkpoint::capture(
            CLASSIFIER_KIND,
            &self.net.encoder.config,
            &self.tokenizer,
            &self.net,
            meta,
        );
        Ok(ckpt.save(path)?)
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let ckpt = Checkpoint::load(path, Some(CLASSIFIER_KIND))?;
        let meta: ClassifierMeta = serde_json::from_value(ckpt.meta.clone())
            .map_err(|e| ClassifierError::Checkpoint(e.to_string()))?;
        let taxonomy = Taxonomy::new(
            meta.taxonomy.labels().to_vec(),
            Some(meta.taxonomy.coarse_types().to_vec()),
        )?;
        if ckpt.tokenizer.vocab_size() != ckpt.encoder.vocab_size {
            return Err(ClassifierError::Checkpoint(
                "tokenizer and encoder vocabulary sizes differ".into(),
            ));
        }
        meta.default_filter.validate()?;
        let mut net = HeadNet::init(ckpt.encoder.clone(), taxonomy.len(), 0)?;
        ckpt.restore_into(&mut net)?;
        Ok(ClassifierModel {
            net,
            tokenizer: ckpt.tokenizer,
            taxonomy,
            representation: meta.representation,
            default_filter: meta.default_filter,
            config: meta.config,
            selected_epoch: meta.selected_epoch,
        })
    }
}

/// Trains on gold-labeled rendered mentions and keeps the epoch with the best
/// dev SST accuracy under pass-through decoding (earliest epoch on ties).
pub fn train_classifier(
    train: &[LabeledExample],
    dev: &[LabeledExample],
    taxonomy: &Taxonomy,
    config: &ClassifierConfig,
) -> Result<TrainedClassifier, ClassifierError> {
    train_classifier_from(train, dev, taxonomy, config, None)
}

/// Like [`train_classifier`], optionally starting from a trained encoder and
/// its tokenizer instead of a fresh one. `config.encoder` is then replaced by
/// the encoder's own shape.
pub fn train_classifier_from(
    train: &[LabeledExample],
    dev: &[LabeledExample],
    taxonomy: &Taxonomy,
    config: &ClassifierConfig,
    init: Option<&PretrainedEncoder>,
) -> Result<TrainedClassifier, ClassifierError> {
    config.validate()?;
    if train.is_empty() {
        return Err(ClassifierError::EmptyTraining);
    }
    if taxonomy.is_empty() {
        return Err(ClassifierError::InvalidConfig("empty taxonomy".into()));
    }
    let markers: Vec<String> = taxonomy.coarse_types().iter().map(CoarseType::marker).collect();
    let words = train
        .iter()
        .flat_map(|ex| ex.example.tokens.iter().map(String::as_str));
    let mut config = config.clone();
    let (tokenizer, net) = match init {
        Some(pre) => {
            if !pre.reserves(&markers) {
                return Err(ClassifierError::InvalidConfig(
                    "pretrained tokenizer does not reserve every coarse marker".into(),
                ));
            }
            config.encoder = pre.shape();
            let net = HeadNet::with_encoder(pre.params.clone(), taxonomy.len(), config.seed)?;
            (pre.tokenizer.clone(), net)
        }
        None => {
            let tokenizer = Tokenizer::train(words, &markers, &config.tokenizer);
            let net = HeadNet::init(
                config.encoder.with_vocab(tokenizer.vocab_size()),
                taxonomy.len(),
                config.seed,
            )?;
            (tokenizer, net)
        }
    };
    let mut model = ClassifierModel {
        net,
        tokenizer,
        taxonomy: taxonomy.clone(),
        representation: config.representation,
        default_filter: config.filter,
        config: config.clone(),
        selected_epoch: 0,
    };
    let examples = train
        .iter()
        .map(|ex| model.training_example(ex))
        .collect::<Result<Vec<_>, _>>()?;
    for ex in dev {
        model.training_example(ex)?;
    }
    let dev_gold: Vec<FineLabel> = dev.iter().map(|ex| ex.label.clone()).collect();

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
        let predicted = model.predict_labels(dev)?;
        let acc = hier_accuracy(&dev_gold, &predicted).expect("one prediction per example");
        log.push(EpochRecord {
            epoch,
            loss: loss / batches.max(1) as f64,
            dev_acc_t: acc.acc_t,
            dev_acc_st: acc.acc_st,
            dev_acc_sst: acc.acc_sst,
        });
        if best.as_ref().is_none_or(|(a, _, _)| acc.acc_sst > *a) {
            best = Some((acc.acc_sst, epoch, model.net.clone()));
        }
    }
    let (_, epoch, net) = best.expect("at least one epoch");
    model.net = net;
    model.selected_epoch = epoch;
    Ok(TrainedClassifier { model, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnnotationMode, Mention};

    fn fl(s: &str) -> FineLabel {
        FineLabel::parse(s).unwrap()
    }

    fn taxonomy() -> Taxonomy {
        Taxonomy::from_strs(&["per", "per.politician", "org.company", "gpe"], None).unwrap()
    }

    fn docs(mode: AnnotationMode) -> Vec<Document> {
        fn s(t: &str) -> Vec<&str> {
            t.split(' ').collect()
        }
        let d = Document::from_words(
            "d",
            &[s("senator alice spoke in paris"), s("the acme company grew"), s("bob ran")],
            vec![
                Mention::gold(0, 0, 1, fl("per.politician")),
                Mention::gold(0, 4, 4, fl("gpe")),
                Mention::gold(1, 1, 2, fl("org.company")),
                Mention::gold(2, 0, 0, fl("per")),
            ],
            mode,
        )
        .unwrap();
        vec![d]
    }

    fn config(repr: Representation) -> ClassifierConfig {
        ClassifierConfig {
            learning_rate: 1e-2,
            batch_size: 2,
            epochs: 15,
            representation: repr,
            encoder: EncoderShape {
                d_model: 16,
                heads: 2,
                ffn: 16,
                layers: 1,
                max_len: 16,
            },
            ..ClassifierConfig::default()
        }
    }

    #[test]
    fn defaults_follow_reference_schedule() {
        let c = ClassifierConfig::default();
        assert_eq!((c.learning_rate, c.batch_size, c.epochs), (2e-5, 24, 10));
        assert!(c.validate().is_ok());
        let bad = ClassifierConfig {
            filter: FilterConfig::Threshold { theta: 2.0 },
            ..c
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn builds_one_example_per_mention() {
        let ex = build_examples(&docs(AnnotationMode::Full), Representation::EntityBounded).unwrap();
        assert_eq!(ex.len(), 4);
        assert_eq!(ex[0].example.text(), "PER senator alice PER spoke in paris");
        let missing = Document::from_words(
            "m",
            &[vec!["x"]],
            vec![Mention::coarse_only(0, 0, 0, CoarseType::new("per").unwrap())],
            AnnotationMode::Partial,
        )
        .unwrap();
        assert!(matches!(
            build_examples(&[missing], Representation::Masked),
            Err(ClassifierError::MissingFineLabel { .. })
        ));
    }

    #[test]
    fn learns_a_tiny_task_and_is_deterministic() {
        for repr in Representation::ALL {
            let train = build_examples(&docs(AnnotationMode::Partial), repr).unwrap();
            let a = train_classifier(&train, &train, &taxonomy(), &config(repr)).unwrap();
            let b = train_classifier(&train, &train, &taxonomy(), &config(repr)).unwrap();
            assert_eq!(a.model.net, b.model.net);
            let best = a.log.iter().map(|r| r.dev_acc_sst).fold(0.0, f64::max);
            assert_eq!(best, 1.0, "{repr}: {:?}", a.log);
            let p = a.model.classify(&train[0].example).unwrap();
            assert!((p.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-6);
            assert_eq!(p, a.model.classify(&train[0].example).unwrap());
        }
    }

    #[test]
    fn rejects_mismatched_representation() {
        let train = build_examples(&docs(AnnotationMode::Full), Representation::Masked).unwrap();
        let model = train_classifier(&train, &[], &taxonomy(), &config(Representation::Masked))
            .unwrap()
            .model;
        let other = build_examples(&docs(AnnotationMode::Full), Representation::EntityMasked).unwrap();
        assert!(matches!(
            model.classify(&other[0].example),
            Err(ClassifierError::RepresentationMismatch { .. })
        ));
    }

    #[test]
    fn rejects_labels_outside_taxonomy() {
        let train = build_examples(&docs(AnnotationMode::Full), Representation::Masked).unwrap();
        let small = Taxonomy::from_strs(&["per"], None).unwrap();
        assert!(matches!(
            train_classifier(&train, &[], &small, &config(Representation::Masked)),
            Err(ClassifierError::UnknownLabel(_))
        ));
    }

    #[test]
    fn long_inputs_are_trimmed_around_the_mention() {
        let train = build_examples(&docs(AnnotationMode::Full), Representation::Masked).unwrap();
        let cfg = ClassifierConfig {
            encoder: EncoderShape {
                max_len: 6,
                ..config(Representation::Masked).encoder
            },
            epochs: 1,
            ..config(Representation::Masked)
        };
        let model = train_classifier(&train, &[], &taxonomy(), &cfg).unwrap().model;
        let p = model.classify(&train[0].example).unwrap();
        assert_eq!(p.len(), 4);
    }

    #[test]
    fn checkpoint_round_trip() {
        let train = build_examples(&docs(AnnotationMode::Full), Representation::EntityMasked).unwrap();
        let model = train_classifier(&train, &train, &taxonomy(), &config(Representation::EntityMasked))
            .unwrap()
            .model;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        model.save(&path).unwrap();
        assert_eq!(ClassifierModel::load(&path).unwrap(), model);
    }

    #[test]
    fn warm_start_reuses_encoder_and_tokenizer() {
        let train = build_examples(&docs(AnnotationMode::Full), Representation::EntityBounded).unwrap();
        let cfg = config(Representation::EntityBounded);
        let markers: Vec<String> = taxonomy().coarse_types().iter().map(CoarseType::marker).collect();
        let words = train.iter().flat_map(|ex| ex.example.tokens.iter().map(String::as_str));
        let tokenizer = Tokenizer::train(words, &markers, &cfg.tokenizer);
        let shape = EncoderShape { d_model: 8, ..cfg.encoder };
        let params = crate::encoder::EncoderParams::init(shape.with_vocab(tokenizer.vocab_size()), 5).unwrap();
        let init = PretrainedEncoder::new(tokenizer.clone(), params).unwrap();
        let zero = ClassifierConfig { epochs: 1, learning_rate: 1e-12, ..cfg.clone() };
        let model = train_classifier_from(&train, &[], &taxonomy(), &zero, Some(&init)).unwrap().model;
        assert_eq!(model.tokenizer, tokenizer);
        assert_eq!(model.config.encoder, shape);
        assert_eq!(model.net.encoder.config, init.params.config);

        let plain = Tokenizer::train(["alice"], &[], &cfg.tokenizer);
        let params = crate::encoder::EncoderParams::init(shape.with_vocab(plain.vocab_size()), 5).unwrap();
        let bare = PretrainedEncoder::new(plain, params).unwrap();
        assert!(matches!(
            train_classifier_from(&train, &[], &taxonomy(), &cfg, Some(&bare)),
            Err(ClassifierError::InvalidConfig(_))
        ));
    }
}
