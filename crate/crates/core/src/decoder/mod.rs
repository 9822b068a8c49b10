//! Autoregressive decoding over a pluggable next-token scorer.
//!
//! Beam search ranks partial hypotheses by cumulative log-probability and
//! finished ones by `logprob / len^alpha`. The `beam_size` slots are shared
//! between finishing and continuing candidates, so a beam of one is exactly
//! greedy decoding.

mod ngram;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::domain::{SeqConfig, TimeGrid, TokenId, TokenSequence};
use crate::error::{Error, Result};
use crate::seq_codec::{decode_event_sequence, Decoded};
use crate::tokenizer::Tokenizer;

pub use ngram::NGramScorer;

/// Source of next-token distributions over the joint vocabulary.
pub trait Scorer {
    fn vocab_size(&self) -> usize;

    /// Natural-log probabilities for the token following `prefix`.
    fn next_logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>>;
}

fn checked_row(scorer: &dyn Scorer, prefix: &[TokenId]) -> Result<Vec<f64>> {
    let row = scorer.next_logprobs(prefix)?;
    if row.len() != scorer.vocab_size() {
        return Err(Error::ScorerContract(format!(
            "row has {} entries, vocabulary has {}",
            row.len(),
            scorer.vocab_size()
        )));
    }
    if row.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(Error::ScorerContract("row contains NaN or +inf".into()));
    }
    let lse = crate::loss::logsumexp(&row);
    if !lse.is_finite() || lse.abs() > 1e-6 {
        return Err(Error::ScorerContract(format!(
            "row is not normalized (logsumexp = {lse})"
        )));
    }
    Ok(row)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub length_norm_alpha: f64,
    pub max_length: usize,
    pub eos_id: TokenId,
}

impl BeamConfig {
    /// Four beams, length exponent 0.6, up to 256 tokens.
    pub fn new(eos_id: TokenId) -> Self {
        BeamConfig {
            beam_size: 4,
            length_norm_alpha: 0.6,
            max_length: 256,
            eos_id,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 || self.max_length == 0 {
            return Err(Error::Config(
                "beam size and max length must be at least 1".into(),
            ));
        }
        if !self.length_norm_alpha.is_finite() {
            return Err(Error::Config(
                "length normalization exponent must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Length-normalized score used to rank hypotheses.
pub fn normalized_score(logprob: f64, len: usize, alpha: f64) -> f64 {
    logprob / (len as f64).powf(alpha)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypothesis {
    pub tokens: TokenSequence,
    pub logprob: f64,
    pub score: f64,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamOutput {
    pub best: Hypothesis,
    /// Finished hypotheses best-first, then any unfinished survivors.
    pub ranked: Vec<Hypothesis>,
}

/// Best-first by `key`, ties to the lexicographically smaller sequence.
fn rank(a_key: f64, a: &[TokenId], b_key: f64, b: &[TokenId]) -> Ordering {
    b_key.total_cmp(&a_key).then_with(|| a.cmp(b))
}

/// Appends the argmax token (lowest id on ties) until EOS or `max_length`.
pub fn greedy_decode(scorer: &dyn Scorer, cfg: &BeamConfig) -> Result<TokenSequence> {
    cfg.validate()?;
    let mut out = Vec::new();
    while out.len() < cfg.max_length {
        let row = checked_row(scorer, &out)?;
        let (best, _) =
            row.iter().enumerate().fold(
                (0, f64::NEG_INFINITY),
                |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) },
            );
        out.push(best as TokenId);
        if best as TokenId == cfg.eos_id {
            break;
        }
    }
    Ok(TokenSequence(out))
}

pub fn beam_decode(scorer: &dyn Scorer, cfg: &BeamConfig) -> Result<BeamOutput> {
    cfg.validate()?;
    let alpha = cfg.length_norm_alpha;
    let mut live: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<(Vec<TokenId>, f64)> = Vec::new();

    for _ in 0..cfg.max_length {
        let mut candidates: Vec<(Vec<TokenId>, f64)> = Vec::new();
        for (prefix, logprob) in &live {
            let row = checked_row(scorer, prefix)?;
            for (tok, lp) in row.into_iter().enumerate() {
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let mut tokens = prefix.clone();
                tokens.push(tok as TokenId);
                candidates.push((tokens, logprob + lp));
            }
        }
        let by_logprob = |a: &(Vec<TokenId>, f64), b: &(Vec<TokenId>, f64)| rank(a.1, &a.0, b.1, &b.0);
        if candidates.len() > cfg.beam_size {
            candidates.select_nth_unstable_by(cfg.beam_size - 1, by_logprob);
            candidates.truncate(cfg.beam_size);
        }
        candidates.sort_by(by_logprob);

        live.clear();
        for cand in candidates {
            if cand.0.last() == Some(&cfg.eos_id) {
                finished.push(cand);
            } else {
                live.push(cand);
            }
        }
        if live.is_empty() {
            break;
        }
    }

    let to_hyp = |(tokens, logprob): (Vec<TokenId>, f64), done: bool| Hypothesis {
        score: normalized_score(logprob, tokens.len(), alpha),
        tokens: TokenSequence(tokens),
        logprob,
        finished: done,
    };
    let by_score = |a: &Hypothesis, b: &Hypothesis| rank(a.score, &a.tokens, b.score, &b.tokens);
    let mut ranked: Vec<Hypothesis> = finished.into_iter().map(|h| to_hyp(h, true)).collect();
    ranked.sort_by(by_score);
    let mut open: Vec<Hypothesis> = live.into_iter().map(|h| to_hyp(h, false)).collect();
    open.sort_by(by_score);
    ranked.extend(open);

    let best = ranked
        .first()
        .cloned()
        .ok_or_else(|| Error::ScorerContract("every continuation had zero probability".into()))?;
    Ok(BeamOutput { best, ranked })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedRun {
    pub tokens: TokenSequence,
    pub decoded: Decoded,
}

/// Beam search followed by event-sequence parsing.
pub fn decode_to_events(
    scorer: &dyn Scorer,
    cfg: &BeamConfig,
    duration: f64,
    seq_cfg: &SeqConfig,
    grid: TimeGrid,
    tok: &dyn Tokenizer,
) -> Result<DecodedRun> {
    let out = beam_decode(scorer, cfg)?;
    let decoded = decode_event_sequence(&out.best.tokens, duration, seq_cfg, grid, tok)?;
    Ok(DecodedRun {
        tokens: out.best.tokens,
        decoded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::{VocabFile, WordTokenizer};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    /// Emits a fixed script, then EOS forever.
    struct Scripted {
        script: Vec<TokenId>,
        vocab: usize,
        eos: TokenId,
    }

    impl Scorer for Scripted {
        fn vocab_size(&self) -> usize {
            self.vocab
        }

        fn next_logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
            let next = self.script.get(prefix.len()).copied().unwrap_or(self.eos);
            let mut row = vec![f64::NEG_INFINITY; self.vocab];
            row[next as usize] = 0.0;
            Ok(row)
        }
    }

    struct Fixed(Vec<f64>);

    impl Scorer for Fixed {
        fn vocab_size(&self) -> usize {
            self.0.len()
        }

        fn next_logprobs(&self, _: &[TokenId]) -> Result<Vec<f64>> {
            Ok(self.0.clone())
        }
    }

    fn cfg(beam: usize, max_length: usize, eos: TokenId) -> BeamConfig {
        BeamConfig {
            beam_size: beam,
            length_norm_alpha: 0.6,
            max_length,
            eos_id: eos,
        }
    }

    #[test]
    fn greedy_examples() {
        let only_eos = Scripted {
            script: vec![],
            vocab: 3,
            eos: 2,
        };
        assert_eq!(greedy_decode(&only_eos, &cfg(1, 10, 2)).unwrap().0, vec![2]);

        let chain = Scripted {
            script: vec![0, 1],
            vocab: 3,
            eos: 2,
        };
        assert_eq!(greedy_decode(&chain, &cfg(1, 10, 2)).unwrap().0, vec![0, 1, 2]);

        let mut row = vec![(0.05f64).ln(); 10];
        row[3] = (0.3f64).ln();
        row[7] = (0.3f64).ln();
        let tie = Fixed(row);
        assert_eq!(greedy_decode(&tie, &cfg(1, 1, 9)).unwrap().0, vec![3]);
    }

    #[test]
    fn contract_violations_are_errors() {
        assert!(matches!(
            greedy_decode(&Fixed(vec![-1.0, -1.0]), &cfg(1, 3, 1)),
            Err(Error::ScorerContract(_))
        ));
        struct Short;
        impl Scorer for Short {
            fn vocab_size(&self) -> usize {
                3
            }
            fn next_logprobs(&self, _: &[TokenId]) -> Result<Vec<f64>> {
                Ok(vec![0.0])
            }
        }
        assert!(matches!(
            beam_decode(&Short, &cfg(2, 3, 1)),
            Err(Error::ScorerContract(_))
        ));
        assert!(beam_decode(&Fixed(vec![0.0]), &cfg(0, 3, 0)).is_err());
    }

    #[test]
    fn unfinished_hypothesis_returned_at_max_length() {
        let chain = Scripted {
            script: vec![0, 1, 0, 1],
            vocab: 3,
            eos: 2,
        };
        let out = beam_decode(&chain, &cfg(2, 3, 2)).unwrap();
        assert_eq!(out.best.tokens.0, vec![0, 1, 0]);
        assert!(!out.best.finished);
    }

    #[test]
    fn length_normalization_prefers_longer_finished_hypotheses() {
        // two-step path 0 -> EOS beats immediate EOS only once normalized
        let mut table = BTreeMap::new();
        table.insert(vec![], vec![0.45, 0.55]);
        table.insert(vec![0], vec![0.05, 0.95]);
        table.insert(vec![1], vec![0.5, 0.5]);
        let s = NGramScorer::new(2, table).unwrap();
        let eos = 1;
        // immediate EOS: ln 0.55 = -0.598; [0, EOS]: ln(0.45 * 0.95) = -0.850
        let raw = BeamConfig {
            length_norm_alpha: 0.0,
            ..cfg(2, 2, eos)
        };
        assert_eq!(beam_decode(&s, &raw).unwrap().best.tokens.0, vec![1]);
        // alpha = 1: -0.598 / 1 vs -0.850 / 2 = -0.425
        let norm = BeamConfig {
            length_norm_alpha: 1.0,
            ..cfg(2, 2, eos)
        };
        assert_eq!(beam_decode(&s, &norm).unwrap().best.tokens.0, vec![0, 1]);
    }

    #[test]
    fn decode_to_events_examples() {
        let words = ["add", "oil"];
        let tok = WordTokenizer::new(VocabFile::with_words(&words, 0).unwrap(), 100).unwrap();
        let vocab = *tok.vocab();
        let v = vocab.text_vocab_size();
        let grid = TimeGrid::relative(100).unwrap();
        let add = tok.vocab_file().id("add").unwrap();
        let oil = tok.vocab_file().id("oil").unwrap();
        let total = vocab.total_size() as usize;
        let bc = BeamConfig::new(vocab.eos_id());

        let script = Scripted {
            script: vec![v, v + 50, add, oil, 4],
            vocab: total,
            eos: 2,
        };
        let run = decode_to_events(&script, &bc, 120.0, &SeqConfig::default(), grid, &tok).unwrap();
        assert_eq!(run.decoded.events.len(), 1);
        let e = &run.decoded.events.events[0];
        assert_eq!((e.start, e.caption.as_str()), (0.0, "add oil."));
        assert!((e.end - 60.606_060_606).abs() < 1e-8);

        let eos_only = Scripted {
            script: vec![],
            vocab: total,
            eos: 2,
        };
        let run = decode_to_events(&eos_only, &bc, 120.0, &SeqConfig::default(), grid, &tok).unwrap();
        assert!(run.decoded.events.is_empty());

        let junk = Scripted {
            script: vec![v + 3, add, 0, v + 1],
            vocab: total,
            eos: 2,
        };
        let run = decode_to_events(&junk, &bc, 120.0, &SeqConfig::default(), grid, &tok).unwrap();
        assert!(run.decoded.events.is_empty());
        assert!(run.decoded.diagnostics.skipped_tokens > 0);
    }

    /// Every sequence the decoder could return: EOS-terminated ones of any
    /// length up to `max_length`, plus EOS-free ones of exactly `max_length`.
    fn exhaustive_best(scorer: &dyn Scorer, c: &BeamConfig) -> Vec<TokenId> {
        let vocab = scorer.vocab_size() as TokenId;
        let mut finished: Vec<(f64, Vec<TokenId>)> = Vec::new();
        let mut open: Vec<(f64, Vec<TokenId>)> = Vec::new();
        let mut frontier: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
        for depth in 1..=c.max_length {
            let mut next = Vec::new();
            for (prefix, lp) in &frontier {
                let row = scorer.next_logprobs(prefix).unwrap();
                for t in 0..vocab {
                    let mut seq = prefix.clone();
                    seq.push(t);
                    let total = lp + row[t as usize];
                    let score = total / (seq.len() as f64).powf(c.length_norm_alpha);
                    if t == c.eos_id {
                        finished.push((score, seq));
                    } else if depth == c.max_length {
                        open.push((score, seq));
                    } else {
                        next.push((seq, total));
                    }
                }
            }
            frontier = next;
        }
        let pool = if finished.is_empty() { open } else { finished };
        pool.into_iter()
            .min_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)))
            .unwrap()
            .1
    }

    proptest! {
        #[test]
        fn wide_beam_matches_enumeration(
            vocab in 2usize..=4,
            order in 1usize..=3,
            max_length in 1usize..=4,
            alpha in prop::sample::select(vec![0.0, 0.6, 1.0]),
            seed in any::<u64>(),
        ) {
            let s = NGramScorer::random(order, vocab, seed).unwrap();
            let c = BeamConfig { beam_size: 1000, length_norm_alpha: alpha, max_length, eos_id: 0 };
            prop_assert_eq!(beam_decode(&s, &c).unwrap().best.tokens.0, exhaustive_best(&s, &c));
        }

        #[test]
        fn unit_beam_is_greedy(vocab in 2usize..=5, order in 1usize..=3, max_length in 1usize..=6, seed in any::<u64>()) {
            let s = NGramScorer::random(order, vocab, seed).unwrap();
            let c = cfg(1, max_length, (vocab - 1) as TokenId);
            prop_assert_eq!(beam_decode(&s, &c).unwrap().best.tokens, greedy_decode(&s, &c).unwrap());
        }

        #[test]
        fn exhaustive_beam_dominates_narrower_beams(seed in any::<u64>(), beam in 1usize..6) {
            // wider beams are not monotone in general, only the exhaustive one bounds the rest
            let s = NGramScorer::random(2, 4, seed).unwrap();
            let narrow = BeamConfig { beam_size: beam, ..cfg(1, 4, 0) };
            let wide = BeamConfig { beam_size: 1000, ..narrow };
            let (n, w) = (beam_decode(&s, &narrow).unwrap().best, beam_decode(&s, &wide).unwrap().best);
            if n.finished {
                prop_assert!(w.score >= n.score);
            }
        }

        #[test]
        fn decoding_is_deterministic(seed in any::<u64>()) {
            let s = NGramScorer::random(2, 4, seed).unwrap();
            let c = cfg(3, 5, 0);
            prop_assert_eq!(beam_decode(&s, &c).unwrap(), beam_decode(&s, &c).unwrap());
        }
    }
}
