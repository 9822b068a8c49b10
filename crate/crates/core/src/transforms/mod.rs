//! Building training examples from speech transcripts and annotations.
//!
//! Transcribed speech sentences, with their ASR timestamps, double as
//! pseudo events: the generative objective predicts the whole timed
//! transcript, the denoising objective recovers masked spans of it.

mod corrupt;
mod crop;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Event, EventSet, Ingest, SeqConfig, TimeGrid, TokenSequence};
use crate::error::{Error, Result};
use crate::seq_codec::{encode_event_set, transcript_to_sequence};
use crate::tokenizer::Tokenizer;

pub use corrupt::{corrupt_spans, Corruption, CorruptionConfig, CorruptionDiagnostics};
pub use crop::{temporal_crop, WindowPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExampleKind {
    Generative,
    Denoising,
    Finetune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    /// Absent for the generative objective: the decoder sees video only.
    pub encoder_text: Option<TokenSequence>,
    pub decoder_target: TokenSequence,
    pub kind: ExampleKind,
}

/// Turns timed transcript sentences into pseudo events.
///
/// Blank sentences and sentences with inverted or non-finite timestamps
/// are dropped; the rest are clamped to `[0, duration]` and sorted.
pub fn pseudo_label(transcript: &[Event], duration: f64) -> Result<EventSet> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid(format!(
            "duration must be positive and finite, got {duration}"
        )));
    }
    let events = transcript
        .iter()
        .filter(|s| !s.caption.trim().is_empty())
        .filter(|s| s.start.is_finite() && s.end.is_finite() && s.start <= s.end)
        .cloned()
        .collect();
    EventSet::from_events(duration, events, Ingest::Clamp)
}

pub fn make_generative_example(
    transcript: &[Event],
    duration: f64,
    cfg: &SeqConfig,
    grid: TimeGrid,
    tok: &dyn Tokenizer,
) -> Result<TrainingExample> {
    let pseudo = pseudo_label(transcript, duration)?;
    Ok(TrainingExample {
        encoder_text: None,
        decoder_target: transcript_to_sequence(&pseudo, cfg, grid, tok)?,
        kind: ExampleKind::Generative,
    })
}

pub fn make_denoising_example(
    transcript: &[Event],
    duration: f64,
    cfg: &SeqConfig,
    grid: TimeGrid,
    tok: &dyn Tokenizer,
    cc: &CorruptionConfig,
) -> Result<TrainingExample> {
    let pseudo = pseudo_label(transcript, duration)?;
    let speech = transcript_to_sequence(&pseudo, cfg, grid, tok)?;
    let c = corrupt_spans(&speech, cc, tok.vocab())?;
    Ok(TrainingExample {
        encoder_text: Some(c.corrupted),
        decoder_target: c.target,
        kind: ExampleKind::Denoising,
    })
}

/// Speech sequence in, annotated event sequence out.
pub fn make_finetune_example(
    transcript: &[Event],
    annotations: &EventSet,
    cfg: &SeqConfig,
    grid: TimeGrid,
    tok: &dyn Tokenizer,
) -> Result<TrainingExample> {
    let pseudo = pseudo_label(transcript, annotations.duration)?;
    Ok(TrainingExample {
        encoder_text: Some(transcript_to_sequence(&pseudo, cfg, grid, tok)?),
        decoder_target: encode_event_set(annotations, cfg, grid, tok)?,
        kind: ExampleKind::Finetune,
    })
}

/// Keeps `ceil(fraction * n)` videos chosen by a seeded shuffle of the
/// sorted ids.
pub fn few_shot_subset<T: Clone>(
    corpus: &BTreeMap<String, T>,
    fraction: f64,
    seed: u64,
) -> Result<BTreeMap<String, T>> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::invalid(format!("fraction {fraction} outside (0, 1]")));
    }
    let mut ids: Vec<&String> = corpus.keys().collect();
    let n = ids.len();
    // the epsilon absorbs representation error such as 0.07 * 100 = 7.000000000000001
    let keep = ((fraction * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);
    Ok(ids[..keep]
        .iter()
        .map(|&id| (id.clone(), corpus[id].clone()))
        .collect())
}
