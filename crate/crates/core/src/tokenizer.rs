//! Text to token-id conversion.
//!
//! [`Tokenizer`] is the seam the rest of the crate depends on; subword
//! vocabularies can be adapted behind it. [`WordTokenizer`] is a small
//! word-level implementation driven by a [`VocabFile`].

use std::collections::HashMap;
use std::path::Path;

use crate::domain::{TokenId, TokenKind, VocabSpec};
use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";
pub const DOT: &str = ".";

pub fn sentinel_surface(i: u32) -> String {
    format!("<sentinel_{i}>")
}

pub trait Tokenizer: Send + Sync {
    fn vocab(&self) -> &VocabSpec;

    /// Text ids only: never time tokens, sentinels, BOS, EOS or PAD.
    fn tokenize(&self, text: &str) -> Vec<TokenId>;

    fn detokenize(&self, ids: &[TokenId]) -> Result<String>;
}

/// Lowercases and collapses runs of whitespace to single spaces.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Ordered list of surface strings; line number is the token id.
#[derive(Debug, Clone)]
pub struct VocabFile {
    surfaces: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl VocabFile {
    pub fn parse(text: &str) -> Result<Self> {
        let surfaces: Vec<String> = text
            .lines()
            .map(|l| l.trim_end_matches('\r').to_string())
            .collect();
        Self::from_surfaces(surfaces)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn from_surfaces(surfaces: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(surfaces.len());
        for (id, s) in surfaces.iter().enumerate() {
            if s.is_empty() {
                return Err(Error::Config(format!("empty surface at line {id}")));
            }
            if index.insert(s.clone(), id as TokenId).is_some() {
                return Err(Error::Config(format!("duplicate surface {s:?} at line {id}")));
            }
        }
        Ok(VocabFile { surfaces, index })
    }

    /// Standard layout: specials at 0..=3, the dot at 4, then `words`, then
    /// `num_sentinels` sentinels occupying the top ids in descending order.
    pub fn with_words<S: AsRef<str>>(words: &[S], num_sentinels: u32) -> Result<Self> {
        let mut surfaces: Vec<String> = [PAD, BOS, EOS, UNK, DOT].map(String::from).to_vec();
        surfaces.extend(words.iter().map(|w| w.as_ref().to_string()));
        surfaces.extend((0..num_sentinels).rev().map(sentinel_surface));
        Self::from_surfaces(surfaces)
    }

    pub fn len(&self) -> usize {
        self.surfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfaces.is_empty()
    }

    pub fn id(&self, surface: &str) -> Option<TokenId> {
        self.index.get(surface).copied()
    }

    pub fn surface(&self, id: TokenId) -> Option<&str> {
        self.surfaces.get(id as usize).map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        let mut out = self.surfaces.join("\n");
        out.push('\n');
        out
    }

    /// Derives the id layout, checking that sentinels sit at `V - 1 - i`.
    pub fn spec(&self, num_time_tokens: u32) -> Result<VocabSpec> {
        let required = |s: &str| {
            self.id(s)
                .ok_or_else(|| Error::Config(format!("vocabulary lacks {s:?}")))
        };
        let v = self.len() as u32;
        let mut num_sentinels = 0;
        while let Some(id) = self.id(&sentinel_surface(num_sentinels)) {
            if id != v - 1 - num_sentinels {
                return Err(Error::Config(format!(
                    "sentinel {num_sentinels} at id {id}, expected {}",
                    v - 1 - num_sentinels
                )));
            }
            num_sentinels += 1;
        }
        VocabSpec::builder(v, num_time_tokens)
            .specials(required(PAD)?, required(BOS)?, required(EOS)?, required(UNK)?)
            .dot(required(DOT)?)
            .sentinels(num_sentinels)
            .build()
    }
}

/// Lowercasing, punctuation-splitting, whitespace-splitting tokenizer.
#[derive(Debug, Clone)]
pub struct WordTokenizer {
    file: VocabFile,
    spec: VocabSpec,
}

impl WordTokenizer {
    pub fn new(file: VocabFile, num_time_tokens: u32) -> Result<Self> {
        let spec = file.spec(num_time_tokens)?;
        Ok(WordTokenizer { file, spec })
    }

    pub fn vocab_file(&self) -> &VocabFile {
        &self.file
    }

    fn lookup(&self, piece: &str) -> TokenId {
        match self.file.id(piece) {
            Some(id) if matches!(self.spec.kind(id), TokenKind::Word | TokenKind::Dot) => id,
            _ => self.spec.unk_id(),
        }
    }
}

fn split_pieces(text: &str) -> Vec<String> {
    let mut pieces = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_whitespace() || c.is_ascii_punctuation() {
            if !word.is_empty() {
                pieces.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                pieces.push(c.to_string());
            }
        } else {
            word.extend(c.to_lowercase());
        }
    }
    if !word.is_empty() {
        pieces.push(word);
    }
    pieces
}

impl Tokenizer for WordTokenizer {
    fn vocab(&self) -> &VocabSpec {
        &self.spec
    }

    fn tokenize(&self, text: &str) -> Vec<TokenId> {
        split_pieces(text).iter().map(|p| self.lookup(p)).collect()
    }

    fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        let mut out = String::new();
        for &id in ids {
            let surface = match self.spec.kind(id) {
                TokenKind::Dot => {
                    out.push_str(DOT);
                    continue;
                }
                TokenKind::Word | TokenKind::Unk => self.file.surface(id).unwrap_or(UNK),
                kind => return Err(Error::token(id, format!("{kind:?} is not a text token"))),
            };
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(surface);
        }
        Ok(out)
    }
}
