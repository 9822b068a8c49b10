//! Dense captioning evaluation: temporal IoU, localization precision and
//! recall, caption scores over IoU-matched pairs, and order-preserving
//! matching (SODA).

mod cider;
mod iou;
mod meteor;
mod soda;
mod text;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{validate_event_set, EventSet};
use crate::error::{Error, Result};

pub use cider::{Cider, CiderVariant, DocFreq};
pub use iou::{localization_pr, temporal_iou, Localization, Segment, ThresholdPr};
pub use meteor::{align, Alignment, MeteorLite};
pub use soda::{order_preserving_max, soda, Soda};
pub use text::words;

/// Video id to events.
pub type Corpus = BTreeMap<String, EventSet>;

/// Sentence-level caption similarity against one or more references.
pub trait CaptionMetric: Send + Sync {
    fn name(&self) -> &'static str;
    fn score(&self, candidate: &str, references: &[&str]) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionMetricKind {
    Cider,
    #[default]
    MeteorLite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiReferencePolicy {
    #[default]
    AverageOverSets,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    /// Scorer inside SODA.
    pub caption_metric: CaptionMetricKind,
    pub cider_variant: CiderVariant,
    pub multi_reference_policy: MultiReferencePolicy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_thresholds: vec![0.3, 0.5, 0.7, 0.9],
            caption_metric: CaptionMetricKind::default(),
            cider_variant: CiderVariant::default(),
            multi_reference_policy: MultiReferencePolicy::default(),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.iou_thresholds;
        if t.is_empty() {
            return Err(Error::Config("at least one IoU threshold is required".into()));
        }
        if t.iter().any(|&x| !(x > 0.0 && x <= 1.0)) || t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "IoU thresholds must be strictly increasing within (0, 1], got {t:?}"
            )));
        }
        Ok(())
    }
}

/// For each prediction, the reference with the highest IoU (lowest index on
/// ties) and that IoU.
fn best_matches(preds: &EventSet, refs: &EventSet) -> Result<Vec<Option<(usize, f64)>>> {
    Ok(iou::iou_matrix(preds, refs)?
        .into_iter()
        .map(|row| {
            row.into_iter()
                .enumerate()
                .fold(None, |best: Option<(usize, f64)>, (j, v)| match best {
                    Some((_, bv)) if bv >= v => best,
                    _ => Some((j, v)),
                })
        })
        .collect())
}

/// Per-threshold mean over predictions of the caption score against the
/// matched reference, counting pairs below the threshold as zero. No
/// predictions gives zeros.
pub fn matched_pair_caption_score(
    preds: &EventSet,
    refs: &EventSet,
    thresholds: &[f64],
    metric: &dyn CaptionMetric,
) -> Result<Vec<f64>> {
    let scored: Vec<(f64, f64)> = best_matches(preds, refs)?
        .into_iter()
        .zip(&preds.events)
        .filter_map(|(m, p)| m.map(|(j, iou)| (iou, metric.score(&p.caption, &[&refs.events[j].caption]))))
        .collect();
    let n = preds.len().max(1) as f64;
    Ok(thresholds
        .iter()
        .map(|&tau| {
            scored
                .iter()
                .filter(|(iou, _)| *iou >= tau)
                .map(|(_, s)| s)
                .sum::<f64>()
                / n
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdScores {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub cider: f64,
    pub meteor_lite: f64,
}

/// Scores for one video or an aggregate. Averages run over thresholds; F1
/// values are always recomputed from the precision and recall beside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub per_threshold: Vec<ThresholdScores>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub cider: f64,
    pub meteor_lite: f64,
    pub soda_precision: f64,
    pub soda_recall: f64,
    pub soda_f: f64,
}

impl Summary {
    fn finish(per_threshold: Vec<ThresholdScores>, soda: Soda) -> Self {
        let k = per_threshold.len() as f64;
        let mean = |f: fn(&ThresholdScores) -> f64| per_threshold.iter().map(f).sum::<f64>() / k;
        let precision = mean(|t| t.precision);
        let recall = mean(|t| t.recall);
        Summary {
            precision,
            recall,
            f1: iou::f1(precision, recall),
            cider: mean(|t| t.cider),
            meteor_lite: mean(|t| t.meteor_lite),
            soda_precision: soda.precision,
            soda_recall: soda.recall,
            soda_f: soda.f,
            per_threshold,
        }
    }

    /// Field-wise mean; SODA f is averaged directly rather than recomputed.
    fn mean<'a>(items: impl IntoIterator<Item = &'a Summary>) -> Summary {
        let items: Vec<&Summary> = items.into_iter().collect();
        let k = items.len() as f64;
        let avg = |f: &dyn Fn(&Summary) -> f64| items.iter().map(|s| f(s)).sum::<f64>() / k;
        let per_threshold = (0..items[0].per_threshold.len())
            .map(|t| {
                let precision = avg(&|s| s.per_threshold[t].precision);
                let recall = avg(&|s| s.per_threshold[t].recall);
                ThresholdScores {
                    threshold: items[0].per_threshold[t].threshold,
                    precision,
                    recall,
                    f1: iou::f1(precision, recall),
                    cider: avg(&|s| s.per_threshold[t].cider),
                    meteor_lite: avg(&|s| s.per_threshold[t].meteor_lite),
                }
            })
            .collect();
        let soda = Soda {
            precision: avg(&|s| s.soda_precision),
            recall: avg(&|s| s.soda_recall),
            f: avg(&|s| s.soda_f),
        };
        Summary::finish(per_threshold, soda)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: EvalConfig,
    /// Caption scorer used inside SODA.
    pub soda_metric: String,
    pub reference_sets: usize,
    pub videos: usize,
    pub corpus: Summary,
    pub per_video: BTreeMap<String, Summary>,
    /// Predicted ids absent from every reference set; excluded from scoring.
    pub unknown_prediction_ids: Vec<String>,
}

fn evaluate_video(
    preds: &EventSet,
    refs: &EventSet,
    cfg: &EvalConfig,
    cider: &Cider,
    meteor: &MeteorLite,
) -> Result<Summary> {
    let loc = localization_pr(preds, refs, &cfg.iou_thresholds)?;
    let c = matched_pair_caption_score(preds, refs, &cfg.iou_thresholds, cider)?;
    let m = matched_pair_caption_score(preds, refs, &cfg.iou_thresholds, meteor)?;
    let soda_metric: &dyn CaptionMetric = match cfg.caption_metric {
        CaptionMetricKind::Cider => cider,
        CaptionMetricKind::MeteorLite => meteor,
    };
    let per_threshold = loc
        .per_threshold
        .iter()
        .zip(c.into_iter().zip(m))
        .map(|(t, (cider, meteor_lite))| ThresholdScores {
            threshold: t.threshold,
            precision: t.precision,
            recall: t.recall,
            f1: t.f1,
            cider,
            meteor_lite,
        })
        .collect();
    Ok(Summary::finish(per_threshold, soda(preds, refs, soda_metric)?))
}

fn check_corpus(what: &str, corpus: &Corpus) -> Result<()> {
    for (id, es) in corpus {
        if let Some(v) = validate_event_set(es).first() {
            return Err(Error::invalid(format!("{what} video {id:?}: {v}")));
        }
    }
    Ok(())
}

/// Scores every reference video of every reference set; a video missing
/// from the predictions counts as predicting nothing. Corpus figures are
/// means over videos, then over reference sets. Caption document
/// frequencies come from each set's reference captions, one document per
/// event.
///
/// `jobs` above one spreads videos over a thread pool; results do not
/// depend on it.
pub fn evaluate(
    preds: &Corpus,
    reference_sets: &[Corpus],
    cfg: &EvalConfig,
    jobs: usize,
) -> Result<EvalReport> {
    cfg.validate()?;
    if reference_sets.is_empty() {
        return Err(Error::Config("at least one reference set is required".into()));
    }
    check_corpus("predicted", preds)?;
    for r in reference_sets {
        check_corpus("reference", r)?;
    }
    let known: BTreeSet<&String> = reference_sets.iter().flat_map(|r| r.keys()).collect();
    let unknown_prediction_ids = preds.keys().filter(|k| !known.contains(k)).cloned().collect();
    let empty = EventSet::empty(1.0);
    let meteor = MeteorLite::default();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let mut set_summaries = Vec::new();
    let mut per_video_sets: BTreeMap<String, Vec<Summary>> = BTreeMap::new();
    for refs in reference_sets {
        let df = DocFreq::build(
            refs.values()
                .flat_map(|es| es.events.iter().map(|e| e.caption.as_str())),
        )
        .map_err(|_| Error::invalid("a reference set contains no events"))?;
        let cider = Cider::new(df, cfg.cider_variant);
        let ids: Vec<&String> = refs.keys().collect();
        let scored: Vec<Result<Summary>> = pool.install(|| {
            ids.par_iter()
                .map(|id| evaluate_video(preds.get(*id).unwrap_or(&empty), &refs[*id], cfg, &cider, &meteor))
                .collect()
        });
        let mut videos = Vec::with_capacity(ids.len());
        for (id, s) in ids.into_iter().zip(scored) {
            let s = s?;
            per_video_sets.entry(id.clone()).or_default().push(s.clone());
            videos.push(s);
        }
        if videos.is_empty() {
            return Err(Error::invalid("a reference set contains no videos"));
        }
        set_summaries.push(Summary::mean(&videos));
    }

    let per_video: BTreeMap<String, Summary> = per_video_sets
        .into_iter()
        .map(|(id, s)| (id, Summary::mean(&s)))
        .collect();
    Ok(EvalReport {
        config: cfg.clone(),
        soda_metric: match cfg.caption_metric {
            CaptionMetricKind::Cider => cfg.cider_variant.metric_name(),
            CaptionMetricKind::MeteorLite => meteor.name(),
        }
        .to_owned(),
        reference_sets: reference_sets.len(),
        videos: per_video.len(),
        corpus: Summary::mean(&set_summaries),
        per_video,
        unknown_prediction_ids,
    })
}
