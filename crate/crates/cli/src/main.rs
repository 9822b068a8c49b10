mod selftest;

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use denscap::bridge::{self, canonical_json, Failure};
use denscap::decoder::BeamConfig;
use denscap::loss::LogProbMatrix;
use denscap::metrics::{CaptionMetricKind, EvalConfig};
use denscap::tokenizer::VocabFile;
use denscap::transforms::{CorruptionConfig, WindowPolicy};
use denscap::{Error, SeqConfig, TimeGrid, TimeMode, TimePosition};
use serde::Deserialize;
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "denscap", version, about = "Dense video captioning sequence tools")]
struct Cli {
    /// Seed for every randomized step; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON run configuration; explicit flags take precedence over it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct SeqFlags {
    /// Text vocabulary, one surface per line in id order.
    #[arg(long, value_name = "FILE")]
    vocab: Option<PathBuf>,
    #[arg(long, value_enum)]
    time_mode: Option<ModeFlag>,
    #[arg(long)]
    n_time_tokens: Option<u32>,
    #[arg(long, value_enum)]
    time_position: Option<PositionFlag>,
    #[arg(long, value_enum)]
    dot: Option<Switch>,
}

#[derive(ValueEnum, Clone, Copy)]
enum ModeFlag {
    Relative,
    Absolute,
}

#[derive(ValueEnum, Clone, Copy)]
enum PositionFlag {
    Before,
    After,
}

#[derive(ValueEnum, Clone, Copy)]
enum Switch {
    On,
    Off,
}

#[derive(ValueEnum, Clone, Copy)]
enum Objective {
    Generative,
    Denoising,
    Finetune,
}

#[derive(ValueEnum, Clone, Copy)]
enum MetricFlag {
    Cider,
    MeteorLite,
}

#[derive(Subcommand)]
enum Command {
    /// Event set JSON to a token id list.
    Encode {
        #[arg(long, default_value = "-")]
        input: PathBuf,
        #[command(flatten)]
        seq: SeqFlags,
    },
    /// Token id list back to events, with decode diagnostics.
    Decode {
        #[arg(long, default_value = "-")]
        input: PathBuf,
        #[arg(long)]
        duration: f64,
        #[command(flatten)]
        seq: SeqFlags,
    },
    /// Timed transcript sentences to pseudo events, or to a training example.
    PseudoLabel {
        #[arg(long, default_value = "-")]
        input: PathBuf,
        #[arg(long)]
        duration: f64,
        /// Emit a training example instead of the event set.
        #[arg(long, value_enum)]
        objective: Option<Objective>,
        /// Annotated event set, required for finetune examples.
        #[arg(long, value_name = "FILE")]
        annotations: Option<PathBuf>,
        #[command(flatten)]
        seq: SeqFlags,
        #[command(flatten)]
        corruption: CorruptionFlags,
    },
    /// Span corruption of a token id list.
    Corrupt {
        #[arg(long, default_value = "-")]
        input: PathBuf,
        #[command(flatten)]
        seq: SeqFlags,
        #[command(flatten)]
        corruption: CorruptionFlags,
    },
    /// Crop an event set to a window.
    Crop {
        #[arg(long, default_value = "-")]
        input: PathBuf,
        /// `full`, `random`, or `START,END` in seconds.
        #[arg(long, default_value = "random")]
        window: String,
        #[arg(long, default_value_t = 0.1)]
        min_fraction: f64,
        #[arg(long)]
        max_narrations: Option<usize>,
    },
    /// Seeded subset of a corpus keyed by video id.
    Subset {
        #[arg(long, default_value = "-")]
        input: PathBuf,
        #[arg(long)]
        fraction: f64,
    },
    /// Weighted negative log-likelihood of a target under log-probabilities.
    Loss {
        /// Token id list.
        #[arg(long)]
        target: PathBuf,
        /// Matrix as JSON rows, or binary (`.bin`: u64 rows, u64 cols, f64 values, little-endian).
        #[arg(long)]
        logprobs: PathBuf,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Beam search over an n-gram scorer, parsed into events.
    DecodeRun {
        #[arg(long)]
        scorer: PathBuf,
        #[arg(long)]
        duration: f64,
        #[arg(long)]
        beam_size: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        max_length: Option<usize>,
        #[command(flatten)]
        seq: SeqFlags,
    },
    /// Dense captioning evaluation.
    Eval {
        #[arg(long)]
        preds: PathBuf,
        /// One or more reference files, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        refs: Vec<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
        #[arg(long, value_enum)]
        caption_metric: Option<MetricFlag>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Run the embedded golden fixtures.
    Selftest,
}

#[derive(Args, Clone, Default)]
struct CorruptionFlags {
    #[arg(long)]
    mask_probability: Option<f64>,
    #[arg(long)]
    mean_span_length: Option<f64>,
}

/// Config file layout. Every section is optional.
#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    seed: Option<u64>,
    vocab: Option<PathBuf>,
    time_grid: Option<TimeGrid>,
    seq_config: Option<SeqConfig>,
    corruption: Option<CorruptionConfig>,
    beam: Option<BeamSection>,
    eval: Option<EvalConfig>,
}

#[derive(Deserialize, Default, Clone, Copy)]
#[serde(default, deny_unknown_fields)]
struct BeamSection {
    beam_size: Option<usize>,
    length_norm_alpha: Option<f64>,
    max_length: Option<usize>,
}

enum Fail {
    Usage(String),
    Data(Failure),
}

impl From<Failure> for Fail {
    fn from(f: Failure) -> Self {
        Fail::Data(f)
    }
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Data(e.into())
    }
}

type Res<T> = Result<T, Fail>;

fn read_bytes(path: &Path) -> Res<Vec<u8>> {
    let mut buf = Vec::new();
    if path == Path::new("-") {
        io::stdin().read_to_end(&mut buf).map_err(Error::from)?;
    } else {
        buf = fs::read(path)
            .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    }
    Ok(buf)
}

fn read_json(path: &Path) -> Res<Value> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| {
        Fail::Data(Failure::from(Error::InvalidInput(format!(
            "{}: {e}",
            path.display()
        ))))
    })
}

/// Token ids given either as a bare list or as `{"tokens": [...]}`.
fn read_tokens(path: &Path) -> Res<Value> {
    let v = read_json(path)?;
    Ok(match v {
        Value::Object(mut m) if m.contains_key("tokens") => m.remove("tokens").unwrap_or_default(),
        other => other,
    })
}

struct Ctx {
    cfg: RunConfig,
    seed: u64,
}

impl Ctx {
    fn load(cli: &Cli) -> Res<Self> {
        let cfg: RunConfig = match &cli.config {
            None => RunConfig::default(),
            Some(p) => serde_json::from_value(read_json(p)?)
                .map_err(|e| Fail::Usage(format!("config {}: {e}", p.display())))?,
        };
        let seed = cli
            .seed
            .or(cfg.seed)
            .or(cfg.corruption.map(|c| c.rng_seed))
            .unwrap_or(0);
        Ok(Ctx { cfg, seed })
    }

    fn grid(&self, f: &SeqFlags) -> Res<TimeGrid> {
        let base = self.cfg.time_grid;
        let mode = match f.time_mode {
            Some(ModeFlag::Relative) => TimeMode::Relative,
            Some(ModeFlag::Absolute) => TimeMode::Absolute,
            None => base.map_or(TimeMode::Relative, |g| g.mode),
        };
        let n = f.n_time_tokens.or(base.map(|g| g.n)).unwrap_or(100);
        TimeGrid::new(mode, n).map_err(|e| Fail::Usage(e.to_string()))
    }

    fn seq_config(&self, f: &SeqFlags) -> SeqConfig {
        let mut c = self.cfg.seq_config.unwrap_or_default();
        if let Some(p) = f.time_position {
            c.time_position = match p {
                PositionFlag::Before => TimePosition::BeforeText,
                PositionFlag::After => TimePosition::AfterText,
            };
        }
        if let Some(d) = f.dot {
            c.use_dot_separator = matches!(d, Switch::On);
        }
        c
    }

    fn vocab(&self, f: &SeqFlags) -> Res<VocabFile> {
        let path =
            f.vocab.as_ref().or(self.cfg.vocab.as_ref()).ok_or_else(|| {
                Fail::Usage("a vocabulary is required (--vocab or config \"vocab\")".into())
            })?;
        Ok(VocabFile::load(path)?)
    }

    /// `vocab`, `time_grid`, and `seq_config` arguments shared by codec ops.
    fn codec_args(&self, f: &SeqFlags) -> Res<Value> {
        let file = self.vocab(f)?;
        let surfaces: Vec<&str> = (0..file.len() as u32).filter_map(|i| file.surface(i)).collect();
        Ok(json!({
            "vocab": surfaces,
            "time_grid": self.grid(f)?,
            "seq_config": self.seq_config(f),
        }))
    }

    fn corruption(&self, f: &CorruptionFlags) -> Res<CorruptionConfig> {
        let mut c = self.cfg.corruption.unwrap_or_default();
        if let Some(p) = f.mask_probability {
            c.mask_probability = p;
        }
        if let Some(m) = f.mean_span_length {
            c.mean_span_length = m;
        }
        c.rng_seed = self.seed;
        c.validate().map_err(|e| Fail::Usage(e.to_string()))?;
        Ok(c)
    }
}

fn merge(mut base: Value, extra: Value) -> Value {
    if let (Some(b), Value::Object(e)) = (base.as_object_mut(), extra) {
        b.extend(e);
    }
    base
}

fn parse_window(spec: &str, min_fraction: f64) -> Res<WindowPolicy> {
    match spec {
        "full" => Ok(WindowPolicy::Full),
        "random" => Ok(WindowPolicy::Random { min_fraction }),
        other => {
            let parts: Vec<f64> = other
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| Fail::Usage(format!("bad window {other:?}")))?;
            match parts[..] {
                [start, end] => Ok(WindowPolicy::Fixed { start, end }),
                _ => Err(Fail::Usage(format!("bad window {other:?}"))),
            }
        }
    }
}

fn read_matrix(path: &Path) -> Res<Value> {
    if path.extension().is_some_and(|e| e == "json") {
        return read_json(path);
    }
    let m = LogProbMatrix::read_from(&read_bytes(path)?[..])?;
    Ok(json!((0..m.rows())
        .map(|r| m.row(r).to_vec())
        .collect::<Vec<_>>()))
}

fn run(cli: &Cli) -> Res<Value> {
    let ctx = Ctx::load(cli)?;
    let (op, args) = match &cli.command {
        Command::Encode { input, seq } => (
            "encode_event_set",
            merge(ctx.codec_args(seq)?, json!({ "event_set": read_json(input)? })),
        ),
        Command::Decode { input, duration, seq } => (
            "decode_event_sequence",
            merge(
                ctx.codec_args(seq)?,
                json!({ "tokens": read_tokens(input)?, "duration": duration }),
            ),
        ),
        Command::PseudoLabel {
            input,
            duration,
            objective,
            annotations,
            seq,
            corruption,
        } => match objective {
            None => (
                "pseudo_label",
                json!({ "transcript": read_json(input)?, "duration": duration }),
            ),
            Some(obj) => {
                let codec = ctx.codec_args(seq)?;
                let kind = match obj {
                    Objective::Generative => "generative",
                    Objective::Denoising => "denoising",
                    Objective::Finetune => "finetune",
                };
                let mut extra = json!({
                    "kind": kind,
                    "corruption": ctx.corruption(corruption)?,
                    "transcript": read_json(input)?,
                    "duration": duration,
                });
                if let Some(a) = annotations {
                    extra["annotations"] = read_json(a)?;
                }
                ("make_example", merge(codec, extra))
            }
        },
        Command::Corrupt {
            input,
            seq,
            corruption,
        } => {
            let corruption = ctx.corruption(corruption)?;
            let mut args = ctx.codec_args(seq)?;
            args.as_object_mut().map(|m| m.remove("seq_config"));
            (
                "corrupt_spans",
                merge(
                    args,
                    json!({ "tokens": read_tokens(input)?, "corruption": corruption }),
                ),
            )
        }
        Command::Crop {
            input,
            window,
            min_fraction,
            max_narrations,
        } => (
            "temporal_crop",
            json!({
                "event_set": read_json(input)?,
                "window": parse_window(window, *min_fraction)?,
                "seed": ctx.seed,
                "max_narrations": max_narrations,
            }),
        ),
        Command::Subset { input, fraction } => (
            "few_shot_subset",
            json!({ "corpus": read_json(input)?, "fraction": fraction, "seed": ctx.seed }),
        ),
        Command::Loss {
            target,
            logprobs,
            weights,
        } => {
            let mut args = json!({ "target": read_tokens(target)?, "logprobs": read_matrix(logprobs)? });
            if let Some(w) = weights {
                args["weights"] = read_json(w)?;
            }
            ("sequence_nll", args)
        }
        Command::DecodeRun {
            scorer,
            duration,
            beam_size,
            alpha,
            max_length,
            seq,
        } => {
            let codec = ctx.codec_args(seq)?;
            let eos = ctx.vocab(seq)?.spec(ctx.grid(seq)?.n)?.eos_id();
            let section = ctx.cfg.beam.unwrap_or_default();
            let defaults = BeamConfig::new(eos);
            let beam = BeamConfig {
                beam_size: beam_size.or(section.beam_size).unwrap_or(defaults.beam_size),
                length_norm_alpha: alpha
                    .or(section.length_norm_alpha)
                    .unwrap_or(defaults.length_norm_alpha),
                max_length: max_length.or(section.max_length).unwrap_or(defaults.max_length),
                eos_id: eos,
            };
            beam.validate().map_err(|e| Fail::Usage(e.to_string()))?;
            (
                "beam_decode",
                merge(
                    codec,
                    json!({ "scorer": read_json(scorer)?, "duration": duration, "beam": beam }),
                ),
            )
        }
        Command::Eval {
            preds,
            refs,
            report: _,
            thresholds,
            caption_metric,
            jobs,
        } => {
            let mut cfg = ctx.cfg.eval.clone().unwrap_or_default();
            if let Some(t) = thresholds {
                cfg.iou_thresholds = t.clone();
            }
            if let Some(m) = caption_metric {
                cfg.caption_metric = match m {
                    MetricFlag::Cider => CaptionMetricKind::Cider,
                    MetricFlag::MeteorLite => CaptionMetricKind::MeteorLite,
                };
            }
            cfg.validate().map_err(|e| Fail::Usage(e.to_string()))?;
            let references = refs.iter().map(|r| read_json(r)).collect::<Res<Vec<_>>>()?;
            (
                "evaluate",
                json!({ "predictions": read_json(preds)?, "references": references, "config": cfg, "jobs": jobs }),
            )
        }
        Command::Selftest => return selftest::run().map_err(Fail::Data),
    };
    Ok(bridge::call(op, args)?)
}

fn emit(path: Option<&PathBuf>, text: &str) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, format!("{text}\n")),
        None => writeln!(io::stdout().lock(), "{text}"),
    }
}

fn report_failure(kind: &str, message: &str) {
    let payload = json!({ "error": kind, "message": message });
    eprintln!("{}", canonical_json(&payload));
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            report_failure("usage", e.render().to_string().trim());
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(v) => {
            let text = canonical_json(&v);
            let target = match &cli.command {
                Command::Eval { report: Some(r), .. } => Some(r),
                _ => cli.out.as_ref(),
            };
            if let Err(e) = emit(target, &text) {
                report_failure("io", &e.to_string());
                return ExitCode::from(2);
            }
            if matches!(cli.command, Command::Selftest) && v["failed"].as_u64() != Some(0) {
                return ExitCode::from(2);
            }
            ExitCode::SUCCESS
        }
        Err(Fail::Usage(msg)) => {
            report_failure("usage", &msg);
            ExitCode::from(1)
        }
        Err(Fail::Data(f)) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(2)
        }
    }
}
