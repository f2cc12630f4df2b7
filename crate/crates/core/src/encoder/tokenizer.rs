//! Whitespace-token + character-bigram wordpiece tokenizer.
//!
//! Frequent words are atomic pieces. Other words are cut into character
//! bigrams: the first chunk as-is, later chunks prefixed with `##`. Reserved
//! symbols (sequence start, separator, mask, unknown) and any registered extra
//! symbols (coarse-type markers) always map to a single piece.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::EncoderError;
use crate::codec::SubwordAlignment;

pub const UNK: &str = "<UNK>";
pub const CLS: &str = "<CLS>";
pub const SEP: &str = "<SEP>";
pub const MASK: &str = "<MASK>";

pub const UNK_ID: u32 = 0;
pub const CLS_ID: u32 = 1;
pub const SEP_ID: u32 = 2;
pub const MASK_ID: u32 = 3;

const SPECIALS: [&str; 4] = [UNK, CLS, SEP, MASK];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerConfig {
    /// Maximum number of whole words kept as atomic pieces.
    pub max_words: usize,
    /// Maximum number of bigram pieces.
    pub max_pieces: usize,
    /// Minimum corpus frequency for a whole word to become atomic.
    pub min_word_count: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            max_words: 8000,
            max_pieces: 2000,
            min_word_count: 1,
        }
    }
}

/// Encoder input: piece ids framed by `<CLS>` ... `<SEP>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PieceSequence {
    pub ids: Vec<u32>,
}

impl PieceSequence {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Offset of the first content piece (after `<CLS>`).
    pub const CONTENT_OFFSET: usize = 1;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TokenizerRepr", into = "TokenizerRepr")]
pub struct Tokenizer {
    vocab: Vec<String>,
    reserved: usize,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct TokenizerRepr {
    vocab: Vec<String>,
    reserved: usize,
}

impl From<TokenizerRepr> for Tokenizer {
    fn from(r: TokenizerRepr) -> Self {
        Tokenizer::from_vocab(r.vocab, r.reserved)
    }
}

impl From<Tokenizer> for TokenizerRepr {
    fn from(t: Tokenizer) -> Self {
        TokenizerRepr {
            vocab: t.vocab,
            reserved: t.reserved,
        }
    }
}

fn chunks(word: &str) -> impl Iterator<Item = String> + '_ {
    let chars: Vec<char> = word.chars().collect();
    (0..chars.len()).step_by(2).map(move |i| {
        let piece: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        if i == 0 {
            piece
        } else {
            format!("##{piece}")
        }
    })
}

fn top_by_count(counts: HashMap<String, usize>, min: usize, limit: usize) -> Vec<String> {
    let mut items: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min).collect();
    items.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    items.into_iter().take(limit).map(|(w, _)| w).collect()
}

impl Tokenizer {
    /// Learns a vocabulary from training words. `extra_vocab` entries become
    /// reserved atomic symbols right after the built-in specials.
    pub fn train<'a>(
        words: impl IntoIterator<Item = &'a str>,
        extra_vocab: &[String],
        config: &TokenizerConfig,
    ) -> Tokenizer {
        let mut word_counts: HashMap<String, usize> = HashMap::new();
        let mut piece_counts: HashMap<String, usize> = HashMap::new();
        for w in words {
            if w.is_empty() {
                continue;
            }
            *word_counts.entry(w.to_string()).or_default() += 1;
            for p in chunks(w) {
                *piece_counts.entry(p).or_default() += 1;
            }
        }
        let mut vocab: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        for e in extra_vocab {
            if !vocab.contains(e) {
                vocab.push(e.clone());
            }
        }
        let reserved = vocab.len();
        word_counts.retain(|w, _| !vocab.contains(w));
        vocab.extend(top_by_count(word_counts, config.min_word_count, config.max_words));
        vocab.extend(top_by_count(piece_counts, 1, config.max_pieces));
        Tokenizer::from_vocab(vocab, reserved)
    }

    /// Rebuilds a tokenizer from a stored vocabulary. The first `reserved`
    /// entries are the atomic symbols; later duplicates are ignored.
    pub fn from_vocab(vocab: Vec<String>, reserved: usize) -> Tokenizer {
        let mut index = HashMap::with_capacity(vocab.len());
        for (i, v) in vocab.iter().enumerate() {
            index.entry(v.clone()).or_insert(i as u32);
        }
        Tokenizer {
            vocab,
            reserved,
            index,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn reserved(&self) -> &[String] {
        &self.vocab[..self.reserved]
    }

    pub fn piece(&self, id: u32) -> &str {
        &self.vocab[id as usize]
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    fn word_pieces(&self, word: &str) -> Vec<u32> {
        if let Some(&id) = self.index.get(word) {
            return vec![id];
        }
        chunks(word)
            .map(|c| self.index.get(&c).copied().unwrap_or(UNK_ID))
            .collect()
    }

    /// Splits tokens into pieces and frames them with `<CLS>`/`<SEP>`.
    ///
    /// The alignment covers content pieces only: content piece `k` sits at
    /// position `k + 1` of the returned sequence.
    pub fn tokenize<S: AsRef<str>>(
        &self,
        tokens: &[S],
    ) -> Result<(PieceSequence, SubwordAlignment), EncoderError> {
        let mut ids = vec![CLS_ID];
        let mut pieces = Vec::new();
        let mut map = Vec::new();
        for (t, tok) in tokens.iter().enumerate() {
            let tok = tok.as_ref();
            if tok.is_empty() {
                return Err(EncoderError::EmptyToken(t));
            }
            for id in self.word_pieces(tok) {
                ids.push(id);
                pieces.push(self.vocab[id as usize].clone());
                map.push(t);
            }
        }
        ids.push(SEP_ID);
        let alignment = SubwordAlignment::new(pieces, map).expect("pieces are emitted per token in order");
        Ok((PieceSequence { ids }, alignment))
    }

    /// Number of content pieces a token expands to.
    pub fn piece_count(&self, token: &str) -> usize {
        self.word_pieces(token).len()
    }
}
