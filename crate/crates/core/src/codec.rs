//! IOB2 encoding of mention spans and subword tag projection.
//!
//! Spans use inclusive token indices. Decoding is tolerant of malformed tag
//! sequences: an `I-X` that does not continue a span of type `X` opens a new
//! span as if it were `B-X`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("invalid span {start}..={end} for a sentence of {len} tokens")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("spans {0:?} and {1:?} overlap")]
    Overlap((usize, usize), (usize, usize)),
    #[error("malformed tag {0:?}")]
    MalformedTag(String),
    #[error("length mismatch: expected {expected} tags, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid subword alignment: {0}")]
    InvalidAlignment(String),
}

/// One IOB2 tag. `X` marks non-initial subword pieces and is never predicted
/// at token level.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Tag {
    O,
    X,
    B(String),
    I(String),
}

impl Tag {
    pub fn label(&self) -> Option<&str> {
        match self {
            Tag::B(l) | Tag::I(l) => Some(l),
            Tag::O | Tag::X => None,
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => f.write_str("O"),
            Tag::X => f.write_str("X"),
            Tag::B(l) => write!(f, "B-{l}"),
            Tag::I(l) => write!(f, "I-{l}"),
        }
    }
}

impl FromStr for Tag {
    type Err = CodecError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "O" => Ok(Tag::O),
            "X" => Ok(Tag::X),
            _ => {
                let bad = || CodecError::MalformedTag(s.to_string());
                let (prefix, label) = s.split_once('-').ok_or_else(bad)?;
                if label.is_empty() || label.chars().any(char::is_whitespace) {
                    return Err(bad());
                }
                match prefix {
                    "B" => Ok(Tag::B(label.to_string())),
                    "I" => Ok(Tag::I(label.to_string())),
                    _ => Err(bad()),
                }
            }
        }
    }
}

impl TryFrom<String> for Tag {
    type Error = CodecError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Tag> for String {
    fn from(t: Tag) -> String {
        t.to_string()
    }
}

/// A typed token span with inclusive ends.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: String,
}

impl Span {
    pub fn new(start: usize, end: usize, label: impl Into<String>) -> Self {
        Span {
            start,
            end,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        ranges_overlap((self.start, self.end), (other.start, other.end))
    }
}

pub(crate) fn ranges_overlap(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

/// Parses tag strings.
pub fn parse_tags<S: AsRef<str>>(tags: &[S]) -> Result<Vec<Tag>, CodecError> {
    tags.iter().map(|t| t.as_ref().parse()).collect()
}

/// Encodes non-overlapping spans as IOB2 tags. Adjacent spans stay separate.
pub fn spans_to_iob2(sentence_len: usize, spans: &[Span]) -> Result<Vec<Tag>, CodecError> {
    let mut sorted: Vec<&Span> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    for s in &sorted {
        if s.start > s.end || s.end >= sentence_len {
            return Err(CodecError::OutOfBounds {
                start: s.start,
                end: s.end,
                len: sentence_len,
            });
        }
    }
    for pair in sorted.windows(2) {
        if pair[0].overlaps(pair[1]) {
            return Err(CodecError::Overlap(
                (pair[0].start, pair[0].end),
                (pair[1].start, pair[1].end),
            ));
        }
    }
    let mut tags = vec![Tag::O; sentence_len];
    for s in sorted {
        tags[s.start] = Tag::B(s.label.clone());
        for t in &mut tags[s.start + 1..=s.end] {
            *t = Tag::I(s.label.clone());
        }
    }
    Ok(tags)
}

/// Decodes IOB2 tags into maximal spans, repairing dangling `I-` tags.
///
/// `X` at token level is read as `O`.
pub fn iob2_to_spans(tags: &[Tag]) -> Vec<Span> {
    let mut spans: Vec<Span> = Vec::new();
    let mut open: Option<Span> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            Tag::O | Tag::X => {
                spans.extend(open.take());
            }
            Tag::B(label) => {
                spans.extend(open.take());
                open = Some(Span::new(i, i, label.clone()));
            }
            Tag::I(label) => match &mut open {
                Some(span) if span.label == *label => span.end = i,
                _ => {
                    spans.extend(open.take());
                    open = Some(Span::new(i, i, label.clone()));
                }
            },
        }
    }
    spans.extend(open);
    spans
}

/// Rewrites an arbitrary tag list into well-formed IOB2 with the same decoding.
pub fn repair(tags: &[Tag]) -> Vec<Tag> {
    spans_to_iob2(tags.len(), &iob2_to_spans(tags))
        .expect("decoded spans are in bounds and disjoint")
}

/// Piece layout of a tokenized sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubwordAlignment {
    pub pieces: Vec<String>,
    pub piece_to_token: Vec<usize>,
    pub first_piece_mask: Vec<bool>,
}

impl SubwordAlignment {
    /// Validates and builds an alignment from a piece→token map.
    pub fn new(pieces: Vec<String>, piece_to_token: Vec<usize>) -> Result<Self, CodecError> {
        if pieces.len() != piece_to_token.len() {
            return Err(CodecError::InvalidAlignment(format!(
                "{} pieces but {} map entries",
                pieces.len(),
                piece_to_token.len()
            )));
        }
        let mut first_piece_mask = Vec::with_capacity(pieces.len());
        let mut expected_next = 0usize;
        for &tok in &piece_to_token {
            if tok == expected_next {
                first_piece_mask.push(true);
                expected_next += 1;
            } else if expected_next > 0 && tok == expected_next - 1 {
                first_piece_mask.push(false);
            } else {
                return Err(CodecError::InvalidAlignment(format!(
                    "piece map must be contiguous and non-decreasing, saw token {tok} after {}",
                    expected_next as isize - 1
                )));
            }
        }
        Ok(SubwordAlignment {
            pieces,
            piece_to_token,
            first_piece_mask,
        })
    }

    /// Alignment with anonymous pieces, `counts[i]` pieces for token `i`.
    pub fn from_piece_counts(counts: &[usize]) -> Result<Self, CodecError> {
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Err(CodecError::InvalidAlignment(format!("token {i} owns no piece")));
        }
        let map: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(t, &c)| std::iter::repeat_n(t, c))
            .collect();
        let pieces = map.iter().map(|t| format!("#{t}")).collect();
        SubwordAlignment::new(pieces, map)
    }

    pub fn piece_count(&self) -> usize {
        self.pieces.len()
    }

    pub fn token_count(&self) -> usize {
        self.piece_to_token.last().map_or(0, |t| t + 1)
    }

    /// Index of the first piece of every token, in token order.
    pub fn first_pieces(&self) -> Vec<usize> {
        self.first_piece_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &f)| f.then_some(i))
            .collect()
    }
}

/// Gives each token's tag to its first piece and `X` to the rest.
pub fn align_to_subwords(
    tags: &[Tag],
    alignment: &SubwordAlignment,
) -> Result<Vec<Tag>, CodecError> {
    if tags.len() != alignment.token_count() {
        return Err(CodecError::LengthMismatch {
            expected: alignment.token_count(),
            actual: tags.len(),
        });
    }
    Ok(alignment
        .piece_to_token
        .iter()
        .zip(&alignment.first_piece_mask)
        .map(|(&t, &first)| if first { tags[t].clone() } else { Tag::X })
        .collect())
}

/// Reads each token's tag from its first piece; an `X` there becomes `O`.
pub fn project_from_subwords(
    piece_tags: &[Tag],
    alignment: &SubwordAlignment,
) -> Result<Vec<Tag>, CodecError> {
    if piece_tags.len() != alignment.piece_count() {
        return Err(CodecError::LengthMismatch {
            expected: alignment.piece_count(),
            actual: piece_tags.len(),
        });
    }
    Ok(alignment
        .first_pieces()
        .into_iter()
        .map(|p| match &piece_tags[p] {
            Tag::X => Tag::O,
            t => t.clone(),
        })
        .collect())
}
