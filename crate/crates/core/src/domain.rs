//! Core value types shared by every stage of the pipeline.
//!
//! The joint vocabulary is laid out as `[0, V)` for text (specials, the
//! sentence separator, ordinary words, and sentinels packed at the top of
//! the text range) followed by `[V, V+N)` for time tokens.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

/// Layout of the joint text + time vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawVocabSpec", into = "RawVocabSpec")]
pub struct VocabSpec {
    text_vocab_size: u32,
    num_time_tokens: u32,
    pad_id: TokenId,
    bos_id: TokenId,
    eos_id: TokenId,
    unk_id: TokenId,
    num_sentinels: u32,
    dot_id: TokenId,
}

#[derive(Serialize, Deserialize)]
struct RawVocabSpec {
    #[serde(rename = "V")]
    v: u32,
    #[serde(rename = "N")]
    n: u32,
    pad: TokenId,
    bos: TokenId,
    eos: TokenId,
    unk: TokenId,
    num_sentinels: u32,
    dot: TokenId,
}

impl TryFrom<RawVocabSpec> for VocabSpec {
    type Error = Error;

    fn try_from(r: RawVocabSpec) -> Result<Self> {
        VocabSpec::builder(r.v, r.n)
            .specials(r.pad, r.bos, r.eos, r.unk)
            .dot(r.dot)
            .sentinels(r.num_sentinels)
            .build()
    }
}

impl From<VocabSpec> for RawVocabSpec {
    fn from(s: VocabSpec) -> Self {
        RawVocabSpec {
            v: s.text_vocab_size,
            n: s.num_time_tokens,
            pad: s.pad_id,
            bos: s.bos_id,
            eos: s.eos_id,
            unk: s.unk_id,
            num_sentinels: s.num_sentinels,
            dot: s.dot_id,
        }
    }
}

/// What a token id denotes under a given [`VocabSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Pad,
    Bos,
    Eos,
    Unk,
    Dot,
    Word,
    Sentinel(u32),
    Time(u32),
    OutOfRange,
}

pub struct VocabSpecBuilder {
    spec: VocabSpec,
}

impl VocabSpecBuilder {
    pub fn specials(mut self, pad: TokenId, bos: TokenId, eos: TokenId, unk: TokenId) -> Self {
        self.spec.pad_id = pad;
        self.spec.bos_id = bos;
        self.spec.eos_id = eos;
        self.spec.unk_id = unk;
        self
    }

    pub fn dot(mut self, dot: TokenId) -> Self {
        self.spec.dot_id = dot;
        self
    }

    pub fn sentinels(mut self, count: u32) -> Self {
        self.spec.num_sentinels = count;
        self
    }

    pub fn build(self) -> Result<VocabSpec> {
        self.spec.check()?;
        Ok(self.spec)
    }
}

impl VocabSpec {
    /// Starts a spec with specials at ids 0..=3 (pad, bos, eos, unk), the dot
    /// at id 4 and no sentinels.
    pub fn builder(text_vocab_size: u32, num_time_tokens: u32) -> VocabSpecBuilder {
        VocabSpecBuilder {
            spec: VocabSpec {
                text_vocab_size,
                num_time_tokens,
                pad_id: 0,
                bos_id: 1,
                eos_id: 2,
                unk_id: 3,
                num_sentinels: 0,
                dot_id: 4,
            },
        }
    }

    fn check(&self) -> Result<()> {
        let v = self.text_vocab_size;
        if v == 0 {
            return Err(Error::Config("text vocabulary size must be positive".into()));
        }
        if self.num_time_tokens == 0 {
            return Err(Error::Config("number of time tokens must be positive".into()));
        }
        if v.checked_add(self.num_time_tokens).is_none() {
            return Err(Error::Config("V + N overflows the token id space".into()));
        }
        let named = [
            ("pad", self.pad_id),
            ("bos", self.bos_id),
            ("eos", self.eos_id),
            ("unk", self.unk_id),
            ("dot", self.dot_id),
        ];
        for (i, (name, id)) in named.iter().enumerate() {
            if *id >= v {
                return Err(Error::Config(format!("{name} id {id} is not below V={v}")));
            }
            if let Some((other, _)) = named[..i].iter().find(|(_, o)| o == id) {
                return Err(Error::Config(format!("{name} and {other} share id {id}")));
            }
        }
        if self.num_sentinels > v {
            return Err(Error::Config(format!(
                "{} sentinels do not fit in a text vocabulary of {v}",
                self.num_sentinels
            )));
        }
        let lowest_sentinel = v - self.num_sentinels;
        if let Some((name, id)) = named.iter().find(|(_, id)| *id >= lowest_sentinel) {
            return Err(Error::Config(format!(
                "{name} id {id} collides with the sentinel range [{lowest_sentinel}, {v})"
            )));
        }
        Ok(())
    }

    pub fn text_vocab_size(&self) -> u32 {
        self.text_vocab_size
    }

    pub fn num_time_tokens(&self) -> u32 {
        self.num_time_tokens
    }

    /// Size of the joint vocabulary, `V + N`.
    pub fn total_size(&self) -> u32 {
        self.text_vocab_size + self.num_time_tokens
    }

    pub fn pad_id(&self) -> TokenId {
        self.pad_id
    }

    pub fn bos_id(&self) -> TokenId {
        self.bos_id
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn unk_id(&self) -> TokenId {
        self.unk_id
    }

    pub fn dot_id(&self) -> TokenId {
        self.dot_id
    }

    pub fn num_sentinels(&self) -> u32 {
        self.num_sentinels
    }

    /// Id of the `i`-th sentinel, counting down from the top of the text range.
    pub fn sentinel_id(&self, i: u32) -> Option<TokenId> {
        (i < self.num_sentinels).then(|| self.text_vocab_size - 1 - i)
    }

    /// Id of the time token for grid index `k`.
    pub fn time_token_id(&self, k: u32) -> Option<TokenId> {
        (k < self.num_time_tokens).then(|| self.text_vocab_size + k)
    }

    pub fn is_time_token(&self, id: TokenId) -> bool {
        id >= self.text_vocab_size && id < self.total_size()
    }

    pub fn kind(&self, id: TokenId) -> TokenKind {
        let v = self.text_vocab_size;
        if id >= self.total_size() {
            TokenKind::OutOfRange
        } else if id >= v {
            TokenKind::Time(id - v)
        } else if id >= v - self.num_sentinels {
            TokenKind::Sentinel(v - 1 - id)
        } else if id == self.pad_id {
            TokenKind::Pad
        } else if id == self.bos_id {
            TokenKind::Bos
        } else if id == self.eos_id {
            TokenKind::Eos
        } else if id == self.unk_id {
            TokenKind::Unk
        } else if id == self.dot_id {
            TokenKind::Dot
        } else {
            TokenKind::Word
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeMode {
    /// `N` equally spaced points spanning `[0, T]`.
    Relative,
    /// The `k`-th token stands for the `k`-th second.
    Absolute,
}

/// Time-token vocabulary; bound to a video duration at use time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTimeGrid")]
pub struct TimeGrid {
    pub mode: TimeMode,
    pub n: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTimeGrid {
    mode: TimeMode,
    n: u32,
}

impl TryFrom<RawTimeGrid> for TimeGrid {
    type Error = Error;

    fn try_from(raw: RawTimeGrid) -> Result<Self> {
        TimeGrid::new(raw.mode, raw.n)
    }
}

impl TimeGrid {
    pub fn new(mode: TimeMode, n: u32) -> Result<Self> {
        let min = match mode {
            TimeMode::Relative => 2,
            TimeMode::Absolute => 1,
        };
        if n < min {
            return Err(Error::Config(format!(
                "{mode:?} time grid needs at least {min} tokens, got {n}"
            )));
        }
        Ok(TimeGrid { mode, n })
    }

    pub fn relative(n: u32) -> Result<Self> {
        Self::new(TimeMode::Relative, n)
    }

    pub fn absolute(n: u32) -> Result<Self> {
        Self::new(TimeMode::Absolute, n)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub start: f64,
    pub end: f64,
    pub caption: String,
}

impl Event {
    pub fn new(start: f64, end: f64, caption: impl Into<String>) -> Self {
        Event {
            start,
            end,
            caption: caption.into(),
        }
    }
}

/// How [`EventSet::from_events`] treats timestamps outside `[0, duration]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ingest {
    /// Clamp into range.
    #[default]
    Clamp,
    /// Reject out-of-range timestamps.
    Strict,
}

/// The events of one video together with its duration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSet {
    pub duration: f64,
    pub events: Vec<Event>,
}

fn event_order(a: &Event, b: &Event) -> Ordering {
    a.start.total_cmp(&b.start).then(a.end.total_cmp(&b.end))
}

impl EventSet {
    pub fn empty(duration: f64) -> Self {
        EventSet {
            duration,
            events: Vec::new(),
        }
    }

    /// Builds a valid set: times are clamped (or checked, in strict mode)
    /// and events are stably sorted by `(start, end)`.
    pub fn from_events(duration: f64, events: Vec<Event>, ingest: Ingest) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::invalid(format!(
                "duration must be positive and finite, got {duration}"
            )));
        }
        let mut out = Vec::with_capacity(events.len());
        for (i, mut e) in events.into_iter().enumerate() {
            if !(e.start.is_finite() && e.end.is_finite()) {
                return Err(Error::invalid(format!("non-finite time at index {i}")));
            }
            if e.start > e.end {
                return Err(Error::invalid(format!("start>end at index {i}")));
            }
            match ingest {
                Ingest::Clamp => {
                    e.start = e.start.clamp(0.0, duration);
                    e.end = e.end.clamp(0.0, duration);
                }
                Ingest::Strict => {
                    if e.start < 0.0 || e.end > duration {
                        return Err(Error::invalid(format!(
                            "event {i} [{}, {}] outside [0, {duration}]",
                            e.start, e.end
                        )));
                    }
                }
            }
            out.push(e);
        }
        out.sort_by(event_order);
        Ok(EventSet {
            duration,
            events: out,
        })
    }

    /// Re-establishes the canonical event order in place.
    pub fn sort(&mut self) {
        self.events.sort_by(event_order);
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "rule")]
pub enum Violation {
    BadDuration { duration: f64 },
    NonFinite { index: usize },
    NegativeStart { index: usize },
    StartAfterEnd { index: usize },
    EndAfterDuration { index: usize },
    OutOfOrder { index: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::BadDuration { duration } => write!(f, "duration {duration} is not positive"),
            Violation::NonFinite { index } => write!(f, "non-finite time at index {index}"),
            Violation::NegativeStart { index } => write!(f, "start<0 at index {index}"),
            Violation::StartAfterEnd { index } => write!(f, "start>end at index {index}"),
            Violation::EndAfterDuration { index } => write!(f, "end>duration at index {index}"),
            Violation::OutOfOrder { index } => write!(f, "out of order at index {index}"),
        }
    }
}

/// Lists every invariant an [`EventSet`] breaks. An empty list means valid.
pub fn validate_event_set(es: &EventSet) -> Vec<Violation> {
    let mut out = Vec::new();
    let d = es.duration;
    let duration_ok = d.is_finite() && d > 0.0;
    if !duration_ok {
        out.push(Violation::BadDuration { duration: d });
    }
    for (index, e) in es.events.iter().enumerate() {
        if !(e.start.is_finite() && e.end.is_finite()) {
            out.push(Violation::NonFinite { index });
            continue;
        }
        if e.start < 0.0 {
            out.push(Violation::NegativeStart { index });
        }
        if e.start > e.end {
            out.push(Violation::StartAfterEnd { index });
        }
        if duration_ok && e.end > d {
            out.push(Violation::EndAfterDuration { index });
        }
        if index > 0 && event_order(&es.events[index - 1], e) == Ordering::Greater {
            out.push(Violation::OutOfOrder { index });
        }
    }
    out
}

/// A flat sequence of ids from the joint vocabulary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(pub Vec<TokenId>);

impl TokenSequence {
    pub fn new(ids: Vec<TokenId>) -> Self {
        TokenSequence(ids)
    }

    pub fn into_inner(self) -> Vec<TokenId> {
        self.0
    }

    /// Checks every id is inside `[0, V+N)`.
    pub fn check(&self, vocab: &VocabSpec) -> Result<()> {
        match self.0.iter().find(|&&id| id >= vocab.total_size()) {
            Some(&id) => Err(Error::token(id, "outside the joint vocabulary")),
            None => Ok(()),
        }
    }
}

impl Deref for TokenSequence {
    type Target = [TokenId];

    fn deref(&self) -> &[TokenId] {
        &self.0
    }
}

impl From<Vec<TokenId>> for TokenSequence {
    fn from(ids: Vec<TokenId>) -> Self {
        TokenSequence(ids)
    }
}

impl FromIterator<TokenId> for TokenSequence {
    fn from_iter<I: IntoIterator<Item = TokenId>>(iter: I) -> Self {
        TokenSequence(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimePosition {
    #[default]
    BeforeText,
    AfterText,
}

/// Layout options for event sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeqConfig {
    pub time_position: TimePosition,
    pub use_dot_separator: bool,
    pub emit_bos: bool,
    pub emit_eos: bool,
}

impl Default for SeqConfig {
    fn default() -> Self {
        SeqConfig {
            time_position: TimePosition::BeforeText,
            use_dot_separator: true,
            emit_bos: true,
            emit_eos: true,
        }
    }
}
