//! Event sets to interleaved time/text token sequences and back.
//!
//! Each event contributes its start and end time tokens plus its caption
//! tokens, either time-first or text-first. Decoding is best-effort:
//! model output can contain anything, so malformed regions are skipped and
//! counted instead of failing.

use serde::{Deserialize, Serialize};

use crate::domain::{
    validate_event_set, Event, EventSet, SeqConfig, TimeGrid, TimePosition, TokenId, TokenKind,
    TokenSequence, VocabSpec,
};
use crate::error::{Error, Result};
use crate::time_codec::{decode_time, encode_time};
use crate::tokenizer::Tokenizer;

fn check_grid(grid: TimeGrid, vocab: &VocabSpec) -> Result<()> {
    if grid.n != vocab.num_time_tokens() {
        return Err(Error::Config(format!(
            "time grid has {} tokens but the vocabulary reserves {}",
            grid.n,
            vocab.num_time_tokens()
        )));
    }
    Ok(())
}

/// Encodes all events of `es` into one sequence, in canonical event order.
pub fn encode_event_set(
    es: &EventSet,
    cfg: &SeqConfig,
    grid: TimeGrid,
    tok: &dyn Tokenizer,
) -> Result<TokenSequence> {
    let vocab = tok.vocab();
    check_grid(grid, vocab)?;
    let mut es = es.clone();
    es.sort();
    if let Some(v) = validate_event_set(&es).first() {
        return Err(Error::invalid(format!("cannot encode event set: {v}")));
    }

    let time_id = |t: f64| -> Result<TokenId> {
        let k = encode_time(t, es.duration, grid)?;
        Ok(vocab.time_token_id(k).expect("grid index below N"))
    };

    let mut ids = Vec::new();
    if cfg.emit_bos {
        ids.push(vocab.bos_id());
    }
    for e in &es.events {
        let times = [time_id(e.start)?, time_id(e.end)?];
        let mut text = tok.tokenize(&e.caption);
        if cfg.use_dot_separator && text.last() != Some(&vocab.dot_id()) {
            text.push(vocab.dot_id());
        }
        match cfg.time_position {
            TimePosition::BeforeText => {
                ids.extend(times);
                ids.extend(text);
            }
            TimePosition::AfterText => {
                ids.extend(text);
                ids.extend(times);
            }
        }
    }
    if cfg.emit_eos {
        ids.push(vocab.eos_id());
    }
    Ok(TokenSequence(ids))
}

/// Encodes a speech transcript (sentences with ASR timestamps). The layout
/// is identical to annotated events.
pub fn transcript_to_sequence(
    transcript: &EventSet,
    cfg: &SeqConfig,
    grid: TimeGrid,
    tok: &dyn Tokenizer,
) -> Result<TokenSequence> {
    encode_event_set(transcript, cfg, grid, tok)
}

/// What the decoder had to discard.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeDiagnostics {
    /// Tokens that could not be placed in any well-formed event group.
    pub skipped_tokens: usize,
    /// Well-formed groups rejected for an inverted interval or empty caption.
    pub dropped_events: usize,
    pub saw_eos: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoded {
    pub events: EventSet,
    pub diagnostics: DecodeDiagnostics,
}

enum Run {
    Times(Vec<u32>),
    Text(Vec<TokenId>),
}

impl Run {
    fn times(&self) -> Option<&[u32]> {
        match self {
            Run::Times(ts) => Some(ts),
            Run::Text(_) => None,
        }
    }
}

fn collect_runs(ids: &[TokenId], vocab: &VocabSpec, diag: &mut DecodeDiagnostics) -> Vec<Run> {
    let mut runs: Vec<Run> = Vec::new();
    for (pos, &id) in ids.iter().enumerate() {
        match vocab.kind(id) {
            TokenKind::Eos => {
                diag.saw_eos = true;
                break;
            }
            TokenKind::Bos if pos == 0 => {}
            TokenKind::Time(k) => match runs.last_mut() {
                Some(Run::Times(ts)) => ts.push(k),
                _ => runs.push(Run::Times(vec![k])),
            },
            TokenKind::Word | TokenKind::Dot | TokenKind::Unk => match runs.last_mut() {
                Some(Run::Text(xs)) => xs.push(id),
                _ => runs.push(Run::Text(vec![id])),
            },
            _ => diag.skipped_tokens += 1,
        }
    }
    runs
}

/// Parses a (possibly malformed) sequence back into events.
///
/// Only configuration problems (grid/vocabulary mismatch, bad duration) are
/// errors; token content never is.
pub fn decode_event_sequence(
    ids: &[TokenId],
    duration: f64,
    cfg: &SeqConfig,
    grid: TimeGrid,
    tok: &dyn Tokenizer,
) -> Result<Decoded> {
    let vocab = tok.vocab();
    check_grid(grid, vocab)?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::invalid(format!(
            "duration must be positive and finite, got {duration}"
        )));
    }

    let mut diag = DecodeDiagnostics::default();
    let runs = collect_runs(ids, vocab, &mut diag);

    // (start index, end index, caption ids) per well-formed group
    let mut groups: Vec<(u32, u32, &[TokenId])> = Vec::new();
    for (i, run) in runs.iter().enumerate() {
        let text = match run {
            Run::Text(xs) => xs,
            Run::Times(ts) => {
                let attached = match cfg.time_position {
                    TimePosition::BeforeText => matches!(runs.get(i + 1), Some(Run::Text(_))),
                    TimePosition::AfterText => i > 0 && matches!(runs[i - 1], Run::Text(_)),
                };
                if !attached {
                    diag.skipped_tokens += ts.len();
                }
                continue;
            }
        };
        let neighbour = match cfg.time_position {
            TimePosition::BeforeText => i.checked_sub(1).and_then(|j| runs[j].times()),
            TimePosition::AfterText => runs.get(i + 1).and_then(Run::times),
        };
        match neighbour {
            Some(ts) if ts.len() >= 2 => {
                let pair = match cfg.time_position {
                    TimePosition::BeforeText => (ts[ts.len() - 2], ts[ts.len() - 1]),
                    TimePosition::AfterText => (ts[0], ts[1]),
                };
                diag.skipped_tokens += ts.len() - 2;
                groups.push((pair.0, pair.1, text));
            }
            other => diag.skipped_tokens += text.len() + other.map_or(0, <[u32]>::len),
        }
    }

    let mut events = Vec::with_capacity(groups.len());
    for (a, b, text) in groups {
        let start = decode_time(a, duration, grid)?.min(duration);
        let end = decode_time(b, duration, grid)?.min(duration);
        let caption = tok.detokenize(text)?;
        if start > end
            || caption
                .trim_matches(|c: char| c == '.' || c.is_whitespace())
                .is_empty()
        {
            diag.dropped_events += 1;
            continue;
        }
        events.push(Event::new(start, end, caption));
    }
    let mut events = EventSet { duration, events };
    events.sort();
    Ok(Decoded {
        events,
        diagnostics: diag,
    })
}

/// Drops every id at or above `V`, leaving a paragraph-style text sequence.
pub fn strip_time_tokens(seq: &[TokenId], vocab: &VocabSpec) -> TokenSequence {
    seq.iter()
        .copied()
        .filter(|&id| id < vocab.text_vocab_size())
        .collect()
}

/// Forces `seq` to exactly `len` tokens. Truncation keeps a final EOS (the
/// last non-pad token) in the last slot; padding appends PAD.
pub fn truncate_or_pad(seq: &[TokenId], len: usize, vocab: &VocabSpec) -> Result<TokenSequence> {
    if len == 0 {
        return Err(Error::invalid("target length must be at least 1"));
    }
    let mut out: Vec<TokenId> = seq.to_vec();
    if out.len() > len {
        let ends_in_eos = out
            .iter()
            .rev()
            .find(|&&id| id != vocab.pad_id())
            .is_some_and(|&id| id == vocab.eos_id());
        out.truncate(len);
        if ends_in_eos {
            out[len - 1] = vocab.eos_id();
        }
    } else {
        out.resize(len, vocab.pad_id());
    }
    Ok(TokenSequence(out))
}
