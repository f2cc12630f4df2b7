//! Mention representations fed to the fine classifier.

use std::fmt;
use std::io::Write;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::corpus::{Mention, Sentence};
use crate::encoder::{MASK, SEP};
use crate::taxonomy::CoarseType;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// Span replaced by one mask token; `<SEP>` and the span appended.
    Masked,
    /// Span replaced by the coarse-type marker.
    EntityMasked,
    /// Span kept, with the coarse-type marker on both sides.
    EntityBounded,
}

impl Representation {
    pub const ALL: [Representation; 3] = [
        Representation::Masked,
        Representation::EntityMasked,
        Representation::EntityBounded,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Representation::Masked => "masked",
            Representation::EntityMasked => "entity_masked",
            Representation::EntityBounded => "entity_bounded",
        }
    }
}

impl fmt::Display for Representation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Representation {
    type Err = ClassifierError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Representation::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| ClassifierError::UnknownRepresentation(s.to_string()))
    }
}

/// One classifier input built from one mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedExample {
    pub tokens: Vec<String>,
    pub kind: Representation,
    pub doc_id: String,
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    /// Tokens that must survive context trimming.
    pub focus: Range<usize>,
    /// Trailing tokens appended after the sentence (kept whole).
    pub suffix: usize,
}

impl RenderedExample {
    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }

    /// Drops context tokens, farthest side first, until `fits` accepts the
    /// token list. Fails when even the focus region alone does not fit.
    pub fn trim_to<F: Fn(&[String]) -> bool>(&self, fits: F) -> Result<Vec<String>, ClassifierError> {
        let body_end = self.tokens.len() - self.suffix;
        let suffix = &self.tokens[body_end..];
        let (mut lo, mut hi) = (0, body_end);
        loop {
            let mut candidate: Vec<String> = self.tokens[lo..hi].to_vec();
            candidate.extend_from_slice(suffix);
            if fits(&candidate) {
                return Ok(candidate);
            }
            let left = self.focus.start - lo;
            let right = hi - self.focus.end;
            if left == 0 && right == 0 {
                return Err(ClassifierError::MentionTooLong {
                    doc: self.doc_id.clone(),
                    sentence: self.sentence,
                    start: self.start,
                });
            }
            if right >= left {
                hi -= 1;
            } else {
                lo += 1;
            }
        }
    }
}

fn check_bounds(sentence: &Sentence, mention: &Mention) -> Result<(), ClassifierError> {
    if mention.start > mention.end || mention.end >= sentence.len() {
        return Err(ClassifierError::MentionOutOfBounds {
            doc: sentence.doc_id.clone(),
            sentence: sentence.index,
            start: mention.start,
            end: mention.end,
        });
    }
    Ok(())
}

fn example(
    sentence: &Sentence,
    mention: &Mention,
    kind: Representation,
    tokens: Vec<String>,
    focus: Range<usize>,
    suffix: usize,
) -> RenderedExample {
    RenderedExample {
        tokens,
        kind,
        doc_id: sentence.doc_id.clone(),
        sentence: sentence.index,
        start: mention.start,
        end: mention.end,
        focus,
        suffix,
    }
}

fn words(sentence: &Sentence, range: Range<usize>) -> impl Iterator<Item = String> + '_ {
    sentence.tokens[range].iter().map(|t| t.text.clone())
}

pub fn render_masked(sentence: &Sentence, mention: &Mention) -> Result<RenderedExample, ClassifierError> {
    check_bounds(sentence, mention)?;
    let (s, e) = (mention.start, mention.end);
    let mut tokens: Vec<String> = words(sentence, 0..s).collect();
    tokens.push(MASK.to_string());
    tokens.extend(words(sentence, e + 1..sentence.len()));
    let body = tokens.len();
    tokens.push(SEP.to_string());
    tokens.extend(words(sentence, s..e + 1));
    let suffix = tokens.len() - body;
    Ok(example(sentence, mention, Representation::Masked, tokens, s..s + 1, suffix))
}

pub fn render_entity_masked(
    sentence: &Sentence,
    mention: &Mention,
    coarse: &CoarseType,
) -> Result<RenderedExample, ClassifierError> {
    check_bounds(sentence, mention)?;
    let (s, e) = (mention.start, mention.end);
    let mut tokens: Vec<String> = words(sentence, 0..s).collect();
    tokens.push(coarse.marker());
    tokens.extend(words(sentence, e + 1..sentence.len()));
    Ok(example(sentence, mention, Representation::EntityMasked, tokens, s..s + 1, 0))
}

pub fn render_entity_bounded(
    sentence: &Sentence,
    mention: &Mention,
    coarse: &CoarseType,
) -> Result<RenderedExample, ClassifierError> {
    check_bounds(sentence, mention)?;
    let (s, e) = (mention.start, mention.end);
    let mut tokens: Vec<String> = words(sentence, 0..s).collect();
    tokens.push(coarse.marker());
    tokens.extend(words(sentence, s..e + 1));
    tokens.push(coarse.marker());
    tokens.extend(words(sentence, e + 1..sentence.len()));
    let focus = s..e + 3;
    Ok(example(sentence, mention, Representation::EntityBounded, tokens, focus, 0))
}

/// Renders with the given representation. The masked form ignores `coarse`.
pub fn render(
    kind: Representation,
    sentence: &Sentence,
    mention: &Mention,
    coarse: &CoarseType,
) -> Result<RenderedExample, ClassifierError> {
    match kind {
        Representation::Masked => render_masked(sentence, mention),
        Representation::EntityMasked => render_entity_masked(sentence, mention, coarse),
        Representation::EntityBounded => render_entity_bounded(sentence, mention, coarse),
    }
}

/// Debug dump: one example per line with markers visible.
pub fn write_rendered<W: Write>(examples: &[RenderedExample], mut sink: W) -> std::io::Result<()> {
    for ex in examples {
        writeln!(
            sink,
            "{}\t{}\t{}\t{}\t{}\t{}",
            ex.doc_id,
            ex.sentence,
            ex.start,
            ex.end,
            ex.kind,
            ex.text()
        )?;
    }
    Ok(())
}
