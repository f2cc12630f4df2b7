//! Annotated documents and the file formats they travel in.
//!
//! * Column files (`token<TAB>tag`, blank line between sentences,
//!   `-DOCSTART- <id>` between documents) carry full annotation.
//! * Standoff files (`doc_id<TAB>sent_idx<TAB>start<TAB>end<TAB>label`) carry
//!   partial annotation over tokens supplied by a companion column file. An
//!   unlisted span makes no claim about being a non-entity.
//! * Prediction files add the surface text and a confidence column.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{self, CodecError, Span, Tag};
use crate::taxonomy::{CoarseType, FineLabel, TaxonomyError};

pub const DOCSTART: &str = "-DOCSTART-";
pub const PREDICTION_HEADER: &str = "doc_id\tsentence_index\tstart\tend\tsurface\tlabel\tconfidence";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {source}")]
    Tag { line: usize, source: CodecError },
    #[error("line {line}: {source}")]
    Label { line: usize, source: TaxonomyError },
    #[error("invalid mention in document {doc:?}: {message}")]
    InvalidMention { doc: String, message: String },
    #[error("unknown document {0:?}")]
    UnknownDocument(String),
    #[error("document {doc:?} has no sentence {sentence}")]
    UnknownSentence { doc: String, sentence: usize },
    #[error("coarse inventories differ between corpus {a:?} and corpus {b:?}")]
    InventoryMismatch { a: String, b: String },
    #[error("mention {start}..={end} in sentence {sentence} of {doc:?} lacks a label or confidence")]
    IncompletePrediction {
        doc: String,
        sentence: usize,
        start: usize,
        end: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub doc_id: String,
    pub index: usize,
}

impl Sentence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    /// Surface text of tokens `start..=end`, space separated.
    pub fn surface(&self, start: usize, end: usize) -> String {
        self.tokens[start..=end]
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

/// A mention inside one sentence of a document.
///
/// Gold mentions read from files carry both levels: `coarse` is the type of
/// `fine`. Cascade output keeps the stage-one coarse label in `coarse` even
/// when stage two picked a fine label of another type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub coarse: Option<CoarseType>,
    pub fine: Option<FineLabel>,
    pub confidence: Option<f64>,
    /// Set when decoding fell back to the unfiltered label space.
    #[serde(default)]
    pub fallback: bool,
}

impl Mention {
    /// A gold mention with a fine label; its coarse type is derived.
    pub fn gold(sentence: usize, start: usize, end: usize, fine: FineLabel) -> Self {
        Mention {
            sentence,
            start,
            end,
            coarse: Some(fine.coarse().clone()),
            fine: Some(fine),
            confidence: Some(1.0),
            fallback: false,
        }
    }

    /// A mention that carries only a coarse type.
    pub fn coarse_only(sentence: usize, start: usize, end: usize, coarse: CoarseType) -> Self {
        Mention {
            sentence,
            start,
            end,
            coarse: Some(coarse),
            fine: None,
            confidence: None,
            fallback: false,
        }
    }

    /// Most specific label available: the fine label, else the bare coarse type.
    pub fn label(&self) -> Option<FineLabel> {
        self.fine
            .clone()
            .or_else(|| self.coarse.as_ref().map(FineLabel::from_coarse))
    }

    /// Coarse type, preferring the explicit coarse field.
    pub fn coarse_type(&self) -> Option<CoarseType> {
        self.coarse
            .clone()
            .or_else(|| self.fine.as_ref().map(|f| f.coarse().clone()))
    }

    pub fn range(&self) -> (usize, usize) {
        (self.start, self.end)
    }

    fn position(&self) -> (usize, usize, usize) {
        (self.sentence, self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotationMode {
    Full,
    Partial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub sentences: Vec<Sentence>,
    mentions: Vec<Mention>,
    pub annotation_mode: AnnotationMode,
}

impl Document {
    /// Builds a document, checking mention bounds and per-sentence disjointness.
    pub fn new(
        id: impl Into<String>,
        sentences: Vec<Sentence>,
        mut mentions: Vec<Mention>,
        annotation_mode: AnnotationMode,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        mentions.sort_by_key(Mention::position);
        for m in &mentions {
            let sentence = sentences.get(m.sentence).ok_or(CorpusError::UnknownSentence {
                doc: id.clone(),
                sentence: m.sentence,
            })?;
            if m.start > m.end || m.end >= sentence.len() {
                return Err(CorpusError::InvalidMention {
                    doc: id.clone(),
                    message: format!(
                        "span {}..={} out of bounds for sentence {} of {} tokens",
                        m.start,
                        m.end,
                        m.sentence,
                        sentence.len()
                    ),
                });
            }
        }
        for w in mentions.windows(2) {
            if w[0].sentence == w[1].sentence && w[0].end >= w[1].start {
                return Err(CorpusError::InvalidMention {
                    doc: id.clone(),
                    message: format!(
                        "spans {}..={} and {}..={} overlap in sentence {}",
                        w[0].start, w[0].end, w[1].start, w[1].end, w[0].sentence
                    ),
                });
            }
        }
        Ok(Document {
            id,
            sentences,
            mentions,
            annotation_mode,
        })
    }

    /// Builds a document from token lists with char offsets laid out as
    /// space-joined tokens and newline-joined sentences.
    pub fn from_words<S: AsRef<str>>(
        id: impl Into<String>,
        sentences: &[Vec<S>],
        mentions: Vec<Mention>,
        annotation_mode: AnnotationMode,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let sentences = layout_sentences(&id, sentences)?;
        Document::new(id, sentences, mentions, annotation_mode)
    }

    pub fn mentions(&self) -> &[Mention] {
        &self.mentions
    }

    pub fn mentions_in(&self, sentence: usize) -> impl Iterator<Item = &Mention> {
        self.mentions.iter().filter(move |m| m.sentence == sentence)
    }

    /// Same text, different mentions.
    pub fn with_mentions(
        &self,
        mentions: Vec<Mention>,
        annotation_mode: AnnotationMode,
    ) -> Result<Document, CorpusError> {
        Document::new(self.id.clone(), self.sentences.clone(), mentions, annotation_mode)
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    fn renamed(mut self, id: String) -> Document {
        for s in &mut self.sentences {
            s.doc_id = id.clone();
        }
        self.id = id;
        self
    }
}

fn layout_sentences<S: AsRef<str>>(
    doc_id: &str,
    sentences: &[Vec<S>],
) -> Result<Vec<Sentence>, CorpusError> {
    let mut offset = 0usize;
    let mut out = Vec::with_capacity(sentences.len());
    for (index, words) in sentences.iter().enumerate() {
        if words.is_empty() {
            return Err(CorpusError::InvalidMention {
                doc: doc_id.to_string(),
                message: format!("sentence {index} is empty"),
            });
        }
        let mut tokens = Vec::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            let w = w.as_ref();
            if w.is_empty() {
                return Err(CorpusError::InvalidMention {
                    doc: doc_id.to_string(),
                    message: format!("empty token in sentence {index}"),
                });
            }
            if i > 0 {
                offset += 1;
            }
            let len = w.chars().count();
            tokens.push(Token {
                text: w.to_string(),
                char_start: offset,
                char_end: offset + len,
            });
            offset += len;
        }
        offset += 1;
        out.push(Sentence {
            tokens,
            doc_id: doc_id.to_string(),
            index,
        });
    }
    Ok(out)
}

/// Total mention and token counts of a document set.
pub fn counts(docs: &[Document]) -> (usize, usize) {
    docs.iter().fold((0, 0), |(t, m), d| {
        (t + d.token_count(), m + d.mentions().len())
    })
}

struct RawSentence {
    words: Vec<String>,
    tags: Vec<(usize, Option<String>)>,
}

struct RawDoc {
    id: String,
    sentences: Vec<RawSentence>,
}

fn parse_columns<R: BufRead>(source: R) -> Result<Vec<RawDoc>, CorpusError> {
    let mut docs: Vec<RawDoc> = Vec::new();
    let mut current: Option<RawDoc> = None;
    let mut sentence = RawSentence {
        words: Vec::new(),
        tags: Vec::new(),
    };

    fn flush(current: &mut Option<RawDoc>, sentence: &mut RawSentence, auto_id: usize) {
        if sentence.words.is_empty() {
            return;
        }
        let doc = current.get_or_insert_with(|| RawDoc {
            id: format!("doc{auto_id}"),
            sentences: Vec::new(),
        });
        doc.sentences.push(std::mem::replace(
            sentence,
            RawSentence {
                words: Vec::new(),
                tags: Vec::new(),
            },
        ));
    }

    for (n, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() {
            flush(&mut current, &mut sentence, docs.len());
            continue;
        }
        if let Some(rest) = line.strip_prefix(DOCSTART) {
            flush(&mut current, &mut sentence, docs.len());
            docs.extend(current.take());
            let id = rest
                .split_whitespace()
                .next()
                .map(str::to_string)
                .unwrap_or_else(|| format!("doc{}", docs.len()));
            current = Some(RawDoc {
                id,
                sentences: Vec::new(),
            });
            continue;
        }
        let mut fields = line.split('\t');
        let word = fields.next().unwrap_or("");
        if word.is_empty() {
            return Err(CorpusError::Malformed {
                line: lineno,
                message: "empty token".into(),
            });
        }
        let tag = fields.next().map(str::to_string);
        if fields.next().is_some() {
            return Err(CorpusError::Malformed {
                line: lineno,
                message: "expected `token<TAB>tag`".into(),
            });
        }
        sentence.words.push(word.to_string());
        sentence.tags.push((lineno, tag));
    }
    flush(&mut current, &mut sentence, docs.len());
    docs.extend(current);

    let mut seen = HashSet::new();
    for d in &docs {
        if !seen.insert(d.id.clone()) {
            return Err(CorpusError::Malformed {
                line: 0,
                message: format!("duplicate document id {:?}", d.id),
            });
        }
    }
    Ok(docs)
}

/// Reads a fully annotated column corpus.
///
/// Tags may name coarse types (`B-PER`) or fine labels (`B-per.politician`);
/// every mention gets both a fine label and its derived coarse type.
pub fn read_column_corpus<R: BufRead>(source: R) -> Result<Vec<Document>, CorpusError> {
    let raw = parse_columns(source)?;
    let mut docs = Vec::with_capacity(raw.len());
    for rd in raw {
        let mut mentions = Vec::new();
        let mut words = Vec::with_capacity(rd.sentences.len());
        for (si, rs) in rd.sentences.into_iter().enumerate() {
            let mut tags = Vec::with_capacity(rs.tags.len());
            for (lineno, tag) in &rs.tags {
                let tag = tag.as_deref().ok_or_else(|| CorpusError::Malformed {
                    line: *lineno,
                    message: "missing tag column".into(),
                })?;
                let parsed: Tag = tag.parse().map_err(|source| CorpusError::Tag {
                    line: *lineno,
                    source,
                })?;
                if parsed == Tag::X {
                    return Err(CorpusError::Tag {
                        line: *lineno,
                        source: CodecError::MalformedTag(tag.into()),
                    });
                }
                if let Some(label) = parsed.label() {
                    FineLabel::parse(label).map_err(|source| CorpusError::Label {
                        line: *lineno,
                        source,
                    })?;
                }
                tags.push(parsed);
            }
            for span in codec::iob2_to_spans(&tags) {
                let fine = FineLabel::parse(&span.label).expect("validated above");
                mentions.push(Mention::gold(si, span.start, span.end, fine));
            }
            words.push(rs.words);
        }
        docs.push(Document::from_words(rd.id, &words, mentions, AnnotationMode::Full)?);
    }
    Ok(docs)
}

/// Reads tokens from a column file, ignoring any tag column.
pub fn read_column_text<R: BufRead>(source: R) -> Result<Vec<Document>, CorpusError> {
    parse_columns(source)?
        .into_iter()
        .map(|rd| {
            let words: Vec<Vec<String>> = rd.sentences.into_iter().map(|s| s.words).collect();
            Document::from_words(rd.id, &words, Vec::new(), AnnotationMode::Full)
        })
        .collect()
}

/// Writes documents as a column corpus. Mentions are tagged with their most
/// specific label.
pub fn write_column_corpus<W: Write>(docs: &[Document], mut sink: W) -> Result<(), CorpusError> {
    for doc in docs {
        writeln!(sink, "{DOCSTART} {}", doc.id)?;
        writeln!(sink)?;
        for (si, sentence) in doc.sentences.iter().enumerate() {
            let spans: Vec<Span> = doc
                .mentions_in(si)
                .map(|m| {
                    let label = m.label().map(|l| l.to_string()).unwrap_or_default();
                    Span::new(m.start, m.end, label)
                })
                .collect();
            let tags = codec::spans_to_iob2(sentence.len(), &spans).map_err(|e| {
                CorpusError::InvalidMention {
                    doc: doc.id.clone(),
                    message: e.to_string(),
                }
            })?;
            for (tok, tag) in sentence.tokens.iter().zip(tags) {
                writeln!(sink, "{}\t{}", tok.text, tag)?;
            }
            writeln!(sink)?;
        }
    }
    Ok(())
}

/// Attaches standoff mention records to token-only documents.
///
/// Accepts both the 5-column standoff layout and the 7-column prediction
/// layout (whose header line is skipped). The result is partially annotated.
pub fn read_standoff_mentions<R: BufRead>(
    text: &[Document],
    records: R,
) -> Result<Vec<Document>, CorpusError> {
    let index: HashMap<&str, usize> = text
        .iter()
        .enumerate()
        .map(|(i, d)| (d.id.as_str(), i))
        .collect();
    let mut per_doc: Vec<Vec<Mention>> = vec![Vec::new(); text.len()];
    for (n, line) in records.lines().enumerate() {
        let line = line?;
        let lineno = n + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') || line.starts_with("doc_id\t") {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let (label_col, conf_col) = match fields.len() {
            5 => (4, None),
            7 => (5, Some(6)),
            k => {
                return Err(CorpusError::Malformed {
                    line: lineno,
                    message: format!("expected 5 or 7 tab-separated fields, got {k}"),
                })
            }
        };
        let num = |i: usize| -> Result<usize, CorpusError> {
            fields[i].parse().map_err(|_| CorpusError::Malformed {
                line: lineno,
                message: format!("field {} is not a non-negative integer: {:?}", i + 1, fields[i]),
            })
        };
        let doc_id = fields[0];
        let di = *index
            .get(doc_id)
            .ok_or_else(|| CorpusError::UnknownDocument(doc_id.to_string()))?;
        let (sent, start, end) = (num(1)?, num(2)?, num(3)?);
        if sent >= text[di].sentences.len() {
            return Err(CorpusError::UnknownSentence {
                doc: doc_id.to_string(),
                sentence: sent,
            });
        }
        let fine = FineLabel::parse(fields[label_col]).map_err(|source| CorpusError::Label {
            line: lineno,
            source,
        })?;
        let mut m = Mention::gold(sent, start, end, fine);
        if let Some(c) = conf_col {
            let conf: f64 = fields[c].parse().map_err(|_| CorpusError::Malformed {
                line: lineno,
                message: format!("bad confidence {:?}", fields[c]),
            })?;
            m.confidence = Some(conf);
        }
        per_doc[di].push(m);
    }
    text.iter()
        .zip(per_doc)
        .map(|(d, ms)| d.with_mentions(ms, AnnotationMode::Partial))
        .collect()
}

/// Outcome counts of a silver merge.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeReport {
    pub added: usize,
    pub dropped_type: usize,
    pub dropped_overlap: usize,
}

impl MergeReport {
    pub fn absorb(&mut self, other: MergeReport) {
        self.added += other.added;
        self.dropped_type += other.dropped_type;
        self.dropped_overlap += other.dropped_overlap;
    }
}

/// Adds silver mentions of allowed coarse types that overlap nothing already
/// present. Existing mentions always win.
pub fn merge_silver(
    doc: &Document,
    silver: &[Mention],
    allowed_types: &BTreeSet<CoarseType>,
) -> Result<(Document, MergeReport), CorpusError> {
    let mut report = MergeReport::default();
    let mut mentions = doc.mentions.clone();
    for s in silver {
        let allowed = s.coarse_type().is_some_and(|t| allowed_types.contains(&t));
        if !allowed {
            report.dropped_type += 1;
            continue;
        }
        let clash = mentions.iter().any(|m| {
            m.sentence == s.sentence && codec::ranges_overlap(m.range(), s.range())
        });
        if clash {
            report.dropped_overlap += 1;
            continue;
        }
        mentions.push(s.clone());
        report.added += 1;
    }
    Ok((doc.with_mentions(mentions, doc.annotation_mode)?, report))
}

/// A named document collection with its declared coarse inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub name: String,
    pub coarse_types: BTreeSet<CoarseType>,
    pub documents: Vec<Document>,
}

/// Concatenates corpora in order. With more than one input, document ids are
/// prefixed with `<corpus name>/`.
pub fn concat_corpora(corpora: &[Corpus]) -> Result<Corpus, CorpusError> {
    let Some(first) = corpora.first() else {
        return Ok(Corpus {
            name: String::new(),
            coarse_types: BTreeSet::new(),
            documents: Vec::new(),
        });
    };
    if corpora.len() == 1 {
        return Ok(first.clone());
    }
    for c in &corpora[1..] {
        if c.coarse_types != first.coarse_types {
            return Err(CorpusError::InventoryMismatch {
                a: first.name.clone(),
                b: c.name.clone(),
            });
        }
    }
    let documents = corpora
        .iter()
        .flat_map(|c| {
            c.documents
                .iter()
                .map(move |d| d.clone().renamed(format!("{}/{}", c.name, d.id)))
        })
        .collect();
    Ok(Corpus {
        name: corpora
            .iter()
            .map(|c| c.name.as_str())
            .collect::<Vec<_>>()
            .join("+"),
        coarse_types: first.coarse_types.clone(),
        documents,
    })
}

/// Writes the prediction TSV: header, then one line per mention.
pub fn write_predictions<W: Write>(docs: &[Document], mut sink: W) -> Result<(), CorpusError> {
    writeln!(sink, "{PREDICTION_HEADER}")?;
    for doc in docs {
        for m in doc.mentions() {
            let (Some(label), Some(conf)) = (m.label(), m.confidence) else {
                return Err(CorpusError::IncompletePrediction {
                    doc: doc.id.clone(),
                    sentence: m.sentence,
                    start: m.start,
                    end: m.end,
                });
            };
            let surface = doc.sentences[m.sentence].surface(m.start, m.end);
            writeln!(
                sink,
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}",
                doc.id, m.sentence, m.start, m.end, surface, label, conf
            )?;
        }
    }
    Ok(())
}

/// Writes 5-column standoff records, one line per labeled mention.
pub fn write_standoff<W: Write>(docs: &[Document], mut sink: W) -> Result<(), CorpusError> {
    for doc in docs {
        for m in doc.mentions() {
            let label = m.label().ok_or_else(|| CorpusError::IncompletePrediction {
                doc: doc.id.clone(),
                sentence: m.sentence,
                start: m.start,
                end: m.end,
            })?;
            writeln!(sink, "{}\t{}\t{}\t{}\t{}", doc.id, m.sentence, m.start, m.end, label)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fl(s: &str) -> FineLabel {
        FineLabel::parse(s).unwrap()
    }

    fn ct(s: &str) -> CoarseType {
        CoarseType::new(s).unwrap()
    }

    const SAMPLE: &str = "-DOCSTART- d1\n\nAlice\tB-PER\nwas\tO\n\nBob\tB-per.politician\nSmith\tI-per.politician\nspoke\tO\n\n";

    #[test]
    fn reads_columns() {
        let docs = read_column_corpus(SAMPLE.as_bytes()).unwrap();
        assert_eq!(docs.len(), 1);
        let d = &docs[0];
        assert_eq!(d.id, "d1");
        assert_eq!(d.annotation_mode, AnnotationMode::Full);
        assert_eq!(d.sentences.len(), 2);
        assert_eq!(d.mentions().len(), 2);
        let m = &d.mentions()[0];
        assert_eq!((m.sentence, m.start, m.end), (0, 0, 0));
        assert_eq!(m.coarse, Some(ct("per")));
        let m = &d.mentions()[1];
        assert_eq!((m.sentence, m.start, m.end), (1, 0, 1));
        assert_eq!(m.fine, Some(fl("per.politician")));
        // offsets: "Alice was\nBob Smith spoke"
        assert_eq!(d.sentences[0].tokens[1].char_start, 6);
        assert_eq!(d.sentences[1].tokens[0].char_start, 10);
        assert_eq!(d.sentences[1].tokens[1].char_end, 19);
    }

    #[test]
    fn blank_and_headerless_input() {
        assert!(read_column_corpus("".as_bytes()).unwrap().is_empty());
        assert!(read_column_corpus("\n\n".as_bytes()).unwrap().is_empty());
        let docs = read_column_corpus("a\tO\n".as_bytes()).unwrap();
        assert_eq!(docs[0].id, "doc0");
    }

    #[test]
    fn column_errors() {
        assert!(matches!(
            read_column_corpus("a\tZ-PER\n".as_bytes()),
            Err(CorpusError::Tag { line: 1, .. })
        ));
        assert!(matches!(
            read_column_corpus("a\tB-a.b.c.d\n".as_bytes()),
            Err(CorpusError::Label { line: 1, .. })
        ));
        assert!(matches!(
            read_column_corpus("a\tO\textra\n".as_bytes()),
            Err(CorpusError::Malformed { line: 1, .. })
        ));
        assert!(matches!(
            read_column_corpus("a\n".as_bytes()),
            Err(CorpusError::Malformed { line: 1, .. })
        ));
        assert!(read_column_corpus("a\tX\n".as_bytes()).is_err());
    }

    #[test]
    fn column_round_trip() {
        let docs = read_column_corpus(SAMPLE.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_column_corpus(&docs, &mut buf).unwrap();
        let again = read_column_corpus(buf.as_slice()).unwrap();
        assert_eq!(again, docs);
    }

    fn text_doc() -> Vec<Document> {
        read_column_text("-DOCSTART- d1\n\nthe\nold\nBob\nSmith\nleft\n".as_bytes()).unwrap()
    }

    #[test]
    fn standoff_records() {
        let text = text_doc();
        let docs =
            read_standoff_mentions(&text, "d1\t0\t2\t3\tper.politician\n".as_bytes()).unwrap();
        assert_eq!(docs[0].annotation_mode, AnnotationMode::Partial);
        assert_eq!(docs[0].mentions().len(), 1);
        assert_eq!(docs[0].mentions()[0].fine, Some(fl("per.politician")));

        let empty = read_standoff_mentions(&text, "".as_bytes()).unwrap();
        assert!(empty[0].mentions().is_empty());
        assert_eq!(empty[0].annotation_mode, AnnotationMode::Partial);

        let overlap = "d1\t0\t1\t2\tper\nd1\t0\t2\t3\tper\n";
        assert!(matches!(
            read_standoff_mentions(&text, overlap.as_bytes()),
            Err(CorpusError::InvalidMention { .. })
        ));
        assert!(matches!(
            read_standoff_mentions(&text, "d2\t0\t0\t0\tper\n".as_bytes()),
            Err(CorpusError::UnknownDocument(_))
        ));
        assert!(matches!(
            read_standoff_mentions(&text, "d1\t1\t0\t0\tper\n".as_bytes()),
            Err(CorpusError::UnknownSentence { .. })
        ));
        assert!(matches!(
            read_standoff_mentions(&text, "d1\t0\t4\t5\tper\n".as_bytes()),
            Err(CorpusError::InvalidMention { .. })
        ));
    }

    #[test]
    fn silver_merge() {
        let text = read_column_text("a\nb\nc\nd\ne\nf\ng\n".as_bytes()).unwrap();
        let doc = text[0]
            .with_mentions(vec![Mention::gold(0, 5, 6, fl("per"))], AnnotationMode::Full)
            .unwrap();
        let allowed: BTreeSet<_> = [ct("wea"), ct("veh")].into();

        let wea = Mention::coarse_only(0, 4, 5, ct("wea"));
        let (merged, report) = merge_silver(&doc, &[wea], &allowed).unwrap();
        assert_eq!(merged.mentions(), doc.mentions());
        assert_eq!(report.dropped_overlap, 1);

        let veh = Mention::coarse_only(0, 0, 1, ct("veh"));
        let (merged, report) = merge_silver(&doc, std::slice::from_ref(&veh), &allowed).unwrap();
        assert_eq!(merged.mentions().len(), 2);
        assert_eq!(report.added, 1);
        let (again, report) = merge_silver(&merged, &[veh], &allowed).unwrap();
        assert_eq!(again, merged);
        assert_eq!(report.added, 0);

        let gpe = Mention::coarse_only(0, 0, 0, ct("gpe"));
        let (_, report) = merge_silver(&doc, &[gpe], &allowed).unwrap();
        assert_eq!(report.dropped_type, 1);
    }

    fn corpus(name: &str, ids: &[&str]) -> Corpus {
        let documents = ids
            .iter()
            .map(|id| {
                Document::from_words(*id, &[vec!["x", "y"]], vec![], AnnotationMode::Full).unwrap()
            })
            .collect();
        Corpus {
            name: name.into(),
            coarse_types: [ct("per")].into(),
            documents,
        }
    }

    #[test]
    fn concatenation() {
        let a = corpus("A", &["d1", "d2"]);
        let b = corpus("B", &["d1", "d3", "d4"]);
        let c = concat_corpora(&[a.clone(), b]).unwrap();
        assert_eq!(c.documents.len(), 5);
        let ids: HashSet<_> = c.documents.iter().map(|d| d.id.clone()).collect();
        assert_eq!(ids.len(), 5);
        assert!(ids.contains("A/d1") && ids.contains("B/d1"));
        assert_eq!(c.documents[2].sentences[0].doc_id, "B/d1");
        assert_eq!(concat_corpora(std::slice::from_ref(&a)).unwrap(), a);

        let mut other = corpus("C", &["d9"]);
        other.coarse_types.insert(ct("org"));
        assert!(matches!(
            concat_corpora(&[a, other]),
            Err(CorpusError::InventoryMismatch { .. })
        ));
    }

    #[test]
    fn prediction_output() {
        let text = read_column_text("-DOCSTART- d1\n\nAlice\nran\n".as_bytes()).unwrap();
        let mut m = Mention::gold(0, 0, 0, fl("per"));
        m.confidence = Some(0.5);
        let doc = text[0].with_mentions(vec![m], AnnotationMode::Full).unwrap();
        let mut buf = Vec::new();
        write_predictions(std::slice::from_ref(&doc), &mut buf).unwrap();
        let out = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(out, format!("{PREDICTION_HEADER}\nd1\t0\t0\t0\tAlice\tper\t0.500000\n"));

        let mut empty = Vec::new();
        write_predictions(&text, &mut empty).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap(), format!("{PREDICTION_HEADER}\n"));

        let mut standoff = Vec::new();
        write_standoff(std::slice::from_ref(&doc), &mut standoff).unwrap();
        assert_eq!(String::from_utf8(standoff.clone()).unwrap(), "d1\t0\t0\t0\tper\n");
        let again = read_standoff_mentions(&text, standoff.as_slice()).unwrap();
        assert_eq!(again[0].mentions()[0].label(), doc.mentions()[0].label());

        let back = read_standoff_mentions(&text, buf.as_slice()).unwrap();
        assert_eq!(back[0].mentions()[0].range(), (0, 0));
        assert_eq!(back[0].mentions()[0].confidence, Some(0.5));

        let mut bare = doc.clone();
        bare.mentions[0].confidence = None;
        assert!(matches!(
            write_predictions(&[bare], Vec::new()),
            Err(CorpusError::IncompletePrediction { .. })
        ));
    }
}
