use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{TokenId, TokenKind, TokenSequence, VocabSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionConfig {
    pub mask_probability: f64,
    pub mean_span_length: f64,
    pub rng_seed: u64,
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            mask_probability: 0.15,
            mean_span_length: 3.0,
            rng_seed: 0,
        }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mask_probability) {
            return Err(Error::Config(format!(
                "mask probability {} outside [0, 1]",
                self.mask_probability
            )));
        }
        if !(self.mean_span_length >= 1.0 && self.mean_span_length.is_finite()) {
            return Err(Error::Config(format!(
                "mean span length {} must be at least 1",
                self.mean_span_length
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionDiagnostics {
    pub maskable_tokens: usize,
    pub masked_tokens: usize,
    pub spans: usize,
    /// Span count was capped at the number of available sentinels.
    pub sentinel_limited: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    pub corrupted: TokenSequence,
    pub target: TokenSequence,
    pub diagnostics: CorruptionDiagnostics,
}

/// Splits `total` into `parts` positive integers, uniformly over all
/// compositions.
fn composition(rng: &mut ChaCha8Rng, total: usize, parts: usize) -> Vec<usize> {
    debug_assert!(parts >= 1 && parts <= total);
    let mut cuts = index::sample(rng, total - 1, parts - 1).into_vec();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for c in cuts {
        out.push(c + 1 - prev);
        prev = c + 1;
    }
    out.push(total - prev);
    out
}

/// Chooses masked spans over `len` maskable slots. Returns `(offset, length)`
/// pairs in increasing offset order; spans never touch each other.
fn sample_spans(
    rng: &mut ChaCha8Rng,
    len: usize,
    cc: &CorruptionConfig,
    max_spans: usize,
    diag: &mut CorruptionDiagnostics,
) -> Vec<(usize, usize)> {
    let noise = ((len as f64) * cc.mask_probability).round() as usize;
    if noise == 0 {
        return Vec::new();
    }
    let keep = len - noise;
    let mut num_spans = ((noise as f64 / cc.mean_span_length).round() as usize).max(1);
    // interior gaps need at least one kept token each
    num_spans = num_spans.min(keep + 1);
    if num_spans > max_spans {
        num_spans = max_spans;
        diag.sentinel_limited = true;
    }
    if num_spans == 0 {
        return Vec::new();
    }

    let noise_lengths = composition(rng, noise, num_spans);
    // outer gaps may be empty: compose keep + 2 and take one off each end
    let mut gaps = composition(rng, keep + 2, num_spans + 1);
    gaps[0] -= 1;
    gaps[num_spans] -= 1;

    let mut spans = Vec::with_capacity(num_spans);
    let mut offset = 0;
    for (gap, span) in gaps.iter().zip(&noise_lengths) {
        offset += gap;
        spans.push((offset, *span));
        offset += span;
    }
    spans
}

/// Masks random spans of `seq` with sentinels.
///
/// BOS, EOS and PAD are never masked; text and time tokens both are.
/// `corrupted` replaces span `i` with sentinel `i`; `target` lists each
/// sentinel followed by the tokens it hides, then EOS.
pub fn corrupt_spans(seq: &[TokenId], cc: &CorruptionConfig, vocab: &VocabSpec) -> Result<Corruption> {
    cc.validate()?;
    let mut maskable = Vec::with_capacity(seq.len());
    for (pos, &id) in seq.iter().enumerate() {
        match vocab.kind(id) {
            TokenKind::Sentinel(_) => return Err(Error::token(id, "input already contains a sentinel")),
            TokenKind::OutOfRange => return Err(Error::token(id, "outside the joint vocabulary")),
            TokenKind::Bos | TokenKind::Eos | TokenKind::Pad => {}
            _ => maskable.push(pos),
        }
    }

    let mut diag = CorruptionDiagnostics {
        maskable_tokens: maskable.len(),
        ..Default::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cc.rng_seed);
    let max_spans = vocab.num_sentinels() as usize;
    let planned = sample_spans(&mut rng, maskable.len(), cc, max_spans, &mut diag);

    // Map spans back to sequence positions. A span that straddles an
    // unmaskable token is cut there, so count pieces against the sentinels.
    let mut pieces: Vec<(usize, usize)> = Vec::new();
    for (offset, length) in planned {
        for &pos in &maskable[offset..offset + length] {
            let full = pieces.len() == max_spans;
            match pieces.last_mut() {
                Some((start, len)) if *start + *len == pos => *len += 1,
                _ if full => {
                    diag.sentinel_limited = true;
                    break;
                }
                _ => pieces.push((pos, 1)),
            }
        }
    }
    // Pieces of adjacent planned spans can never merge: planned spans keep
    // at least one maskable token between them.

    let mut corrupted = Vec::with_capacity(seq.len());
    let mut target = Vec::new();
    let mut cursor = 0;
    for (i, &(start, len)) in pieces.iter().enumerate() {
        let sentinel = vocab
            .sentinel_id(i as u32)
            .expect("piece count capped at sentinels");
        corrupted.extend_from_slice(&seq[cursor..start]);
        corrupted.push(sentinel);
        target.push(sentinel);
        target.extend_from_slice(&seq[start..start + len]);
        cursor = start + len;
        diag.masked_tokens += len;
    }
    corrupted.extend_from_slice(&seq[cursor..]);
    target.push(vocab.eos_id());
    diag.spans = pieces.len();

    Ok(Corruption {
        corrupted: TokenSequence(corrupted),
        target: TokenSequence(target),
        diagnostics: diag,
    })
}
