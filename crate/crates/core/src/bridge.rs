//! JSON-in, JSON-out entry points for bindings and the command line.
//!
//! Every operation takes one JSON object and returns one JSON value, so a
//! foreign binding only has to move strings. Output is canonical: object
//! keys sorted, floats in shortest round-trip form.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::decoder::{beam_decode, BeamConfig, NGramScorer, Scorer};
use crate::domain::{validate_event_set, Event, EventSet, SeqConfig, TimeGrid, TokenId, Violation};
use crate::error::Error;
use crate::loss::{sequence_nll, LogProbMatrix};
use crate::metrics::{evaluate, Corpus, EvalConfig};
use crate::seq_codec::{decode_event_sequence, encode_event_set};
use crate::tokenizer::{Tokenizer, VocabFile, WordTokenizer};
use crate::transforms::{
    corrupt_spans, few_shot_subset, make_denoising_example, make_finetune_example, make_generative_example,
    pseudo_label, temporal_crop, CorruptionConfig, WindowPolicy,
};

pub const OPS: &[&str] = &[
    "encode_event_set",
    "decode_event_sequence",
    "validate_event_set",
    "pseudo_label",
    "make_example",
    "corrupt_spans",
    "temporal_crop",
    "few_shot_subset",
    "sequence_nll",
    "beam_decode",
    "evaluate",
];

/// Diagnostic payload for a failed call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            error: e.kind(),
            message: e.to_string(),
            violations: Vec::new(),
        }
    }
}

impl Failure {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("failure payload serializes")
    }
}

type Outcome = std::result::Result<Value, Failure>;

pub fn canonical_json(v: &Value) -> String {
    serde_json::to_string(v).expect("values serialize")
}

fn parse<T: DeserializeOwned>(args: Value) -> std::result::Result<T, Failure> {
    serde_json::from_value(args).map_err(|e| Failure::from(Error::Json(e)))
}

fn to_value<T: Serialize>(x: &T) -> Outcome {
    serde_json::to_value(x).map_err(|e| Failure::from(Error::Json(e)))
}

fn checked(es: &EventSet) -> std::result::Result<(), Failure> {
    let violations = validate_event_set(es);
    match violations.first() {
        None => Ok(()),
        Some(v) => Err(Failure {
            error: "invalid_input",
            message: format!("invalid event set: {v}"),
            violations,
        }),
    }
}

/// Word tokenizer over `vocab` (surfaces in id order) with the grid's time
/// tokens appended.
fn tokenizer(vocab: Vec<String>, grid: TimeGrid) -> std::result::Result<WordTokenizer, Failure> {
    Ok(WordTokenizer::new(VocabFile::from_surfaces(vocab)?, grid.n)?)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EncodeArgs {
    event_set: EventSet,
    vocab: Vec<String>,
    time_grid: TimeGrid,
    #[serde(default)]
    seq_config: SeqConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DecodeArgs {
    tokens: Vec<TokenId>,
    duration: f64,
    vocab: Vec<String>,
    time_grid: TimeGrid,
    #[serde(default)]
    seq_config: SeqConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ValidateArgs {
    event_set: EventSet,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PseudoLabelArgs {
    transcript: Vec<Event>,
    duration: f64,
}

#[derive(Deserialize)]
#[serde(rename_all = "lowercase")]
enum ExampleRequest {
    Generative,
    Denoising,
    Finetune,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ExampleArgs {
    kind: ExampleRequest,
    transcript: Vec<Event>,
    duration: f64,
    #[serde(default)]
    annotations: Option<EventSet>,
    vocab: Vec<String>,
    time_grid: TimeGrid,
    #[serde(default)]
    seq_config: SeqConfig,
    #[serde(default)]
    corruption: CorruptionConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorruptArgs {
    tokens: Vec<TokenId>,
    vocab: Vec<String>,
    time_grid: TimeGrid,
    #[serde(default)]
    corruption: CorruptionConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CropArgs {
    event_set: EventSet,
    #[serde(default)]
    window: WindowPolicy,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    max_narrations: Option<usize>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubsetArgs {
    corpus: BTreeMap<String, Value>,
    fraction: f64,
    #[serde(default)]
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NllArgs {
    target: Vec<TokenId>,
    logprobs: Vec<Vec<f64>>,
    #[serde(default)]
    weights: Option<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BeamArgs {
    scorer: NGramScorer,
    beam: BeamConfig,
    duration: f64,
    vocab: Vec<String>,
    time_grid: TimeGrid,
    #[serde(default)]
    seq_config: SeqConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvalArgs {
    predictions: Corpus,
    references: Vec<Corpus>,
    #[serde(default)]
    config: EvalConfig,
    #[serde(default = "one")]
    jobs: usize,
}

fn one() -> usize {
    1
}

/// Runs `op` on `args`. Unknown ops and malformed arguments fail like any
/// other invalid input.
pub fn call(op: &str, args: Value) -> Outcome {
    match op {
        "encode_event_set" => {
            let a: EncodeArgs = parse(args)?;
            checked(&a.event_set)?;
            let (tok, grid) = (tokenizer(a.vocab, a.time_grid)?, a.time_grid);
            let seq = encode_event_set(&a.event_set, &a.seq_config, grid, &tok)?;
            Ok(json!({ "tokens": seq }))
        }
        "decode_event_sequence" => {
            let a: DecodeArgs = parse(args)?;
            let (tok, grid) = (tokenizer(a.vocab, a.time_grid)?, a.time_grid);
            to_value(&decode_event_sequence(
                &a.tokens,
                a.duration,
                &a.seq_config,
                grid,
                &tok,
            )?)
        }
        "validate_event_set" => {
            let a: ValidateArgs = parse(args)?;
            Ok(json!({ "violations": validate_event_set(&a.event_set) }))
        }
        "pseudo_label" => {
            let a: PseudoLabelArgs = parse(args)?;
            to_value(&pseudo_label(&a.transcript, a.duration)?)
        }
        "make_example" => {
            let a: ExampleArgs = parse(args)?;
            let (tok, grid) = (tokenizer(a.vocab, a.time_grid)?, a.time_grid);
            let ex = match a.kind {
                ExampleRequest::Generative => {
                    make_generative_example(&a.transcript, a.duration, &a.seq_config, grid, &tok)?
                }
                ExampleRequest::Denoising => make_denoising_example(
                    &a.transcript,
                    a.duration,
                    &a.seq_config,
                    grid,
                    &tok,
                    &a.corruption,
                )?,
                ExampleRequest::Finetune => {
                    let ann = a
                        .annotations
                        .ok_or_else(|| Failure::from(Error::invalid("finetune examples need annotations")))?;
                    checked(&ann)?;
                    make_finetune_example(&a.transcript, &ann, &a.seq_config, grid, &tok)?
                }
            };
            to_value(&ex)
        }
        "corrupt_spans" => {
            let a: CorruptArgs = parse(args)?;
            let tok = tokenizer(a.vocab, a.time_grid)?;
            to_value(&corrupt_spans(&a.tokens, &a.corruption, tok.vocab())?)
        }
        "temporal_crop" => {
            let a: CropArgs = parse(args)?;
            checked(&a.event_set)?;
            to_value(&temporal_crop(&a.event_set, a.window, a.seed, a.max_narrations)?)
        }
        "few_shot_subset" => {
            let a: SubsetArgs = parse(args)?;
            to_value(&few_shot_subset(&a.corpus, a.fraction, a.seed)?)
        }
        "sequence_nll" => {
            let a: NllArgs = parse(args)?;
            let m = LogProbMatrix::from_rows(a.logprobs)?;
            let weights = a.weights.unwrap_or_else(|| vec![1.0; m.rows()]);
            Ok(json!({ "loss": sequence_nll(&a.target, &m, &weights)? }))
        }
        "beam_decode" => {
            let a: BeamArgs = parse(args)?;
            let (tok, grid) = (tokenizer(a.vocab, a.time_grid)?, a.time_grid);
            let total = tok.vocab().total_size() as usize;
            if a.scorer.vocab_size() != total {
                return Err(Error::Config(format!(
                    "scorer covers {} ids, vocabulary has {total}",
                    a.scorer.vocab_size()
                ))
                .into());
            }
            let out = beam_decode(&a.scorer, &a.beam)?;
            let decoded = decode_event_sequence(&out.best.tokens, a.duration, &a.seq_config, grid, &tok)?;
            Ok(json!({
                "tokens": out.best.tokens,
                "events": decoded.events,
                "diagnostics": decoded.diagnostics,
                "hypotheses": out.ranked,
            }))
        }
        "evaluate" => {
            let a: EvalArgs = parse(args)?;
            to_value(&evaluate(&a.predictions, &a.references, &a.config, a.jobs)?)
        }
        _ => Err(Failure {
            error: "invalid_input",
            message: format!("unknown operation {op:?}; known: {}", OPS.join(", ")),
            violations: Vec::new(),
        }),
    }
}

/// [`call`] on JSON text, returning `Ok(canonical result)` or
/// `Err(canonical failure payload)`.
pub fn call_json(op: &str, args: &str) -> std::result::Result<String, String> {
    let args: Value = serde_json::from_str(args).map_err(|e| Failure::from(Error::Json(e)).to_json())?;
    call(op, args)
        .map(|v| canonical_json(&v))
        .map_err(|f| f.to_json())
}
