use serde::{Deserialize, Serialize};

use super::iou::{f1, iou_matrix};
use super::CaptionMetric;
use crate::domain::EventSet;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Soda {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

/// Best total of `s[i][j]` over matchings that preserve order on both sides.
pub fn order_preserving_max(s: &[Vec<f64>], m: usize) -> f64 {
    let mut c = vec![vec![0.0f64; m + 1]; s.len() + 1];
    for i in 1..=s.len() {
        for j in 1..=m {
            c[i][j] = c[i - 1][j]
                .max(c[i][j - 1])
                .max(c[i - 1][j - 1] + s[i - 1][j - 1]);
        }
    }
    c[s.len()][m]
}

/// Order-preserving matching of predictions to references, each pair
/// weighted by IoU times caption score. Both sides are taken in start order.
/// Scores stay in the caption metric's own units. Either side empty gives 0.
pub fn soda(preds: &EventSet, refs: &EventSet, metric: &dyn CaptionMetric) -> Result<Soda> {
    let (mut p, mut r) = (preds.clone(), refs.clone());
    p.sort();
    r.sort();
    let iou = iou_matrix(&p, &r)?;
    let s: Vec<Vec<f64>> = iou
        .iter()
        .zip(&p.events)
        .map(|(row, pe)| {
            row.iter()
                .zip(&r.events)
                .map(|(&v, re)| {
                    if v > 0.0 {
                        v * metric.score(&pe.caption, &[&re.caption])
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    if p.is_empty() || r.is_empty() {
        return Ok(Soda {
            precision: 0.0,
            recall: 0.0,
            f: 0.0,
        });
    }
    let best = order_preserving_max(&s, r.len());
    let precision = best / p.len() as f64;
    let recall = best / r.len() as f64;
    Ok(Soda {
        precision,
        recall,
        f: f1(precision, recall),
    })
}
