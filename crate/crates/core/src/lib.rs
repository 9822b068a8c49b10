//! Sequence-level machinery for dense video captioning framed as
//! sequence-to-sequence generation.
//!
//! Events (a caption plus start/end times) are serialized into a single
//! token stream where quantized timestamps are ordinary vocabulary entries.
//! The crate covers that codec, the weak-supervision transforms that turn
//! speech transcripts into training pairs, the token-level likelihood
//! objective, beam-search decoding over a pluggable scorer, and the dense
//! captioning evaluation metrics.

pub mod bridge;
pub mod decoder;
pub mod domain;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod seq_codec;
pub mod time_codec;
pub mod tokenizer;
pub mod transforms;

pub use domain::{
    validate_event_set, Event, EventSet, Ingest, SeqConfig, TimeGrid, TimeMode, TimePosition, TokenId,
    TokenKind, TokenSequence, VocabSpec,
};
pub use error::{Error, Result};
