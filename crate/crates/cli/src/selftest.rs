//! Golden values checked by `denscap selftest`.

use denscap::bridge::Failure;
use denscap::domain::{Event, EventSet, Ingest};
use denscap::loss::{sequence_nll_unweighted, LogProbMatrix};
use denscap::metrics::{
    localization_pr, temporal_iou, CaptionMetric, Cider, CiderVariant, DocFreq, MeteorLite, Segment,
};
use denscap::seq_codec::encode_event_set;
use denscap::time_codec::{decode_time, encode_time};
use denscap::tokenizer::{VocabFile, WordTokenizer};
use denscap::{Result, SeqConfig, TimeGrid};
use serde_json::{json, Value};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9
}

fn time_tokens() -> Result<bool> {
    let g = TimeGrid::relative(100)?;
    Ok(encode_time(37.2, 120.0, g)? == 31
        && encode_time(60.0, 120.0, g)? == 50
        && close(decode_time(31, 120.0, g)?, 31.0 * 120.0 / 99.0)
        && encode_time(37.2, 120.0, TimeGrid::absolute(200)?)? == 37)
}

fn two_event_sequence() -> Result<bool> {
    let tok = WordTokenizer::new(VocabFile::with_words(&["add", "oil", "stir"], 0)?, 100)?;
    let es = EventSet::from_events(
        120.0,
        vec![Event::new(0.0, 60.0, "add oil"), Event::new(60.0, 120.0, "stir")],
        Ingest::Strict,
    )?;
    let seq = encode_event_set(&es, &SeqConfig::default(), TimeGrid::relative(100)?, &tok)?;
    let v = 8;
    Ok(seq.0 == [1, v, v + 50, 5, 6, 4, v + 50, v + 99, 7, 4, 2])
}

fn uniform_loss() -> Result<bool> {
    let m = LogProbMatrix::new(3, 10, vec![-(10f64.ln()); 30])?;
    Ok((sequence_nll_unweighted(&[0, 1, 2, 3], &m)? - 10f64.ln()).abs() < 1e-12)
}

fn iou() -> Result<bool> {
    let s = Segment::new;
    Ok(close(temporal_iou(s(0.0, 10.0), s(5.0, 15.0))?, 1.0 / 3.0)
        && temporal_iou(s(0.0, 10.0), s(0.0, 10.0))? == 1.0
        && temporal_iou(s(0.0, 1.0), s(2.0, 3.0))? == 0.0)
}

fn localization() -> Result<bool> {
    let refs = EventSet::from_events(100.0, vec![Event::new(0.0, 10.0, "x")], Ingest::Strict)?;
    let preds = EventSet::from_events(
        100.0,
        vec![Event::new(4.0, 10.0, "x"), Event::new(50.0, 60.0, "y")],
        Ingest::Strict,
    )?;
    let l = localization_pr(&preds, &refs, &[0.3, 0.5, 0.7, 0.9])?;
    Ok(close(l.precision, 0.25) && close(l.recall, 0.5) && close(l.f1, 1.0 / 3.0))
}

fn cider() -> Result<bool> {
    let corpus = ["a man is slicing an onion", "a woman pours oil in a pan"];
    let c = Cider::new(DocFreq::build(corpus)?, CiderVariant::D);
    let cand = "a man is slicing an onion onion onion in a pan";
    Ok(close(c.score(cand, &[corpus[0]]), 4.4198846360054125)
        && close(c.score(cand, &corpus), 2.8262234207989434)
        && close(c.score(corpus[1], &[corpus[1]]), 10.0))
}

fn meteor() -> Result<bool> {
    let m = MeteorLite::default();
    Ok(
        close(m.score("cut the red onion", &["cut the red onion"]), 0.9921875)
            && close(m.score("the cat sat", &["the cat"]), 0.8928571428571429)
            && m.score("the cat", &["a dog"]) == 0.0,
    )
}

type Check = fn() -> Result<bool>;

const CHECKS: &[(&str, Check)] = &[
    ("time_tokens", time_tokens),
    ("two_event_sequence", two_event_sequence),
    ("uniform_loss", uniform_loss),
    ("temporal_iou", iou),
    ("localization", localization),
    ("cider_d", cider),
    ("meteor_lite", meteor),
];

pub fn run() -> std::result::Result<Value, Failure> {
    let mut results = serde_json::Map::new();
    let mut failed = 0;
    for (name, check) in CHECKS {
        let ok = check()?;
        failed += usize::from(!ok);
        results.insert((*name).to_owned(), json!(ok));
    }
    Ok(json!({ "checks": results, "passed": CHECKS.len() - failed, "failed": failed }))
}
