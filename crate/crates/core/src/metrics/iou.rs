use serde::{Deserialize, Serialize};

use crate::domain::{Event, EventSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
}

impl Segment {
    pub fn new(start: f64, end: f64) -> Self {
        Segment { start, end }
    }

    fn check(&self) -> Result<()> {
        if self.start.is_finite() && self.end.is_finite() && self.start <= self.end {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "invalid segment [{}, {}]",
                self.start, self.end
            )))
        }
    }
}

impl From<&Event> for Segment {
    fn from(e: &Event) -> Self {
        Segment::new(e.start, e.end)
    }
}

/// Intersection over union; zero when the union has no length.
pub fn temporal_iou(a: Segment, b: Segment) -> Result<f64> {
    a.check()?;
    b.check()?;
    let inter = (a.end.min(b.end) - a.start.max(b.start)).max(0.0);
    let union = a.end.max(b.end) - a.start.min(b.start);
    Ok(if union > 0.0 {
        (inter / union).min(1.0)
    } else {
        0.0
    })
}

/// `m[i][j]` is the IoU of prediction `i` with reference `j`.
pub(crate) fn iou_matrix(preds: &EventSet, refs: &EventSet) -> Result<Vec<Vec<f64>>> {
    preds
        .events
        .iter()
        .map(|p| {
            refs.events
                .iter()
                .map(|g| temporal_iou(p.into(), g.into()))
                .collect()
        })
        .collect()
}

pub(crate) fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPr {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Localization {
    pub per_threshold: Vec<ThresholdPr>,
    pub precision: f64,
    pub recall: f64,
    /// Harmonic mean of the averaged precision and recall.
    pub f1: f64,
}

/// A prediction is a hit at `tau` when some reference overlaps it with IoU at
/// least `tau`, and symmetrically for references.
///
/// An empty side makes its ratio 0/0: precision is then 1 only if the
/// references are empty too, recall is 1 only if the predictions are empty.
pub fn localization_pr(preds: &EventSet, refs: &EventSet, thresholds: &[f64]) -> Result<Localization> {
    let m = iou_matrix(preds, refs)?;
    let (n_p, n_r) = (preds.len(), refs.len());
    let best_for_pred: Vec<f64> = m
        .iter()
        .map(|row| row.iter().copied().fold(0.0, f64::max))
        .collect();
    let best_for_ref: Vec<f64> = (0..n_r)
        .map(|j| m.iter().map(|row| row[j]).fold(0.0, f64::max))
        .collect();
    let ratio = |hits: usize, total: usize, other_empty: bool| {
        if total == 0 {
            if other_empty {
                1.0
            } else {
                0.0
            }
        } else {
            hits as f64 / total as f64
        }
    };
    let per_threshold: Vec<ThresholdPr> = thresholds
        .iter()
        .map(|&tau| {
            let hp = best_for_pred.iter().filter(|&&x| x >= tau).count();
            let hr = best_for_ref.iter().filter(|&&x| x >= tau).count();
            let precision = ratio(hp, n_p, n_r == 0);
            let recall = ratio(hr, n_r, n_p == 0);
            ThresholdPr {
                threshold: tau,
                precision,
                recall,
                f1: f1(precision, recall),
            }
        })
        .collect();
    let k = per_threshold.len().max(1) as f64;
    let precision = per_threshold.iter().map(|t| t.precision).sum::<f64>() / k;
    let recall = per_threshold.iter().map(|t| t.recall).sum::<f64>() / k;
    Ok(Localization {
        per_threshold,
        precision,
        recall,
        f1: f1(precision, recall),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Ingest;
    use proptest::prelude::*;

    const TAUS: [f64; 4] = [0.3, 0.5, 0.7, 0.9];

    fn set(spans: &[(f64, f64)]) -> EventSet {
        let events = spans.iter().map(|&(s, e)| Event::new(s, e, "x")).collect();
        EventSet::from_events(1000.0, events, Ingest::Strict).unwrap()
    }

    #[test]
    fn iou_examples() {
        let s = Segment::new;
        assert_eq!(temporal_iou(s(0.0, 10.0), s(0.0, 10.0)).unwrap(), 1.0);
        assert!((temporal_iou(s(0.0, 10.0), s(5.0, 15.0)).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(temporal_iou(s(0.0, 1.0), s(2.0, 3.0)).unwrap(), 0.0);
        assert_eq!(temporal_iou(s(3.0, 3.0), s(3.0, 3.0)).unwrap(), 0.0);
        assert_eq!(temporal_iou(s(3.0, 3.0), s(0.0, 5.0)).unwrap(), 0.0);
        assert!(temporal_iou(s(2.0, 1.0), s(0.0, 5.0)).is_err());
        assert!(temporal_iou(s(f64::NAN, 1.0), s(0.0, 5.0)).is_err());
    }

    #[test]
    fn two_predictions_one_reference() {
        // second prediction overlaps the reference with IoU 6 / 10
        let refs = set(&[(0.0, 10.0)]);
        let preds = set(&[(4.0, 10.0), (50.0, 60.0)]);
        assert!(
            (temporal_iou(Segment::new(4.0, 10.0), Segment::new(0.0, 10.0)).unwrap() - 0.6).abs() < 1e-15
        );
        let l = localization_pr(&preds, &refs, &TAUS).unwrap();
        let p: Vec<f64> = l.per_threshold.iter().map(|t| t.precision).collect();
        let r: Vec<f64> = l.per_threshold.iter().map(|t| t.recall).collect();
        assert_eq!(p, [0.5, 0.5, 0.0, 0.0]);
        assert_eq!(r, [1.0, 1.0, 0.0, 0.0]);
        assert!((l.precision - 0.25).abs() < 1e-12);
        assert!((l.recall - 0.5).abs() < 1e-12);
        assert!((l.f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_conventions() {
        let some = set(&[(0.0, 10.0)]);
        let none = set(&[]);
        let l = localization_pr(&none, &none, &TAUS).unwrap();
        assert_eq!((l.precision, l.recall, l.f1), (1.0, 1.0, 1.0));
        let l = localization_pr(&none, &some, &TAUS).unwrap();
        assert_eq!((l.precision, l.recall, l.f1), (0.0, 0.0, 0.0));
        let l = localization_pr(&some, &none, &TAUS).unwrap();
        assert_eq!((l.precision, l.recall, l.f1), (0.0, 0.0, 0.0));
        let l = localization_pr(&some, &some, &TAUS).unwrap();
        assert_eq!((l.precision, l.recall, l.f1), (1.0, 1.0, 1.0));
        let l = localization_pr(&some, &set(&[(20.0, 30.0)]), &TAUS).unwrap();
        assert_eq!((l.precision, l.recall, l.f1), (0.0, 0.0, 0.0));
    }

    fn seg() -> impl Strategy<Value = (f64, f64)> {
        (0.0f64..100.0, 0.0f64..100.0).prop_map(|(a, b)| (a.min(b), a.max(b)))
    }

    proptest! {
        #[test]
        fn iou_is_symmetric_and_bounded(a in seg(), b in seg()) {
            let (x, y) = (Segment::new(a.0, a.1), Segment::new(b.0, b.1));
            let v = temporal_iou(x, y).unwrap();
            prop_assert_eq!(v, temporal_iou(y, x).unwrap());
            prop_assert!((0.0..=1.0).contains(&v));
            if a.1 > a.0 {
                prop_assert_eq!(temporal_iou(x, x).unwrap(), 1.0);
            }
            if v == 1.0 {
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn precision_and_recall_fall_with_threshold(
            p in prop::collection::vec(seg(), 0..6),
            r in prop::collection::vec(seg(), 0..6),
        ) {
            let l = localization_pr(&set(&p), &set(&r), &[0.1, 0.3, 0.5, 0.7, 0.9, 1.0]).unwrap();
            for w in l.per_threshold.windows(2) {
                prop_assert!(w[1].precision <= w[0].precision);
                prop_assert!(w[1].recall <= w[0].recall);
            }
        }
    }
}
