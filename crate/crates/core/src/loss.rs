//! Weighted token-level negative log-likelihood of a target sequence.

use std::io::{Read, Write};

use crate::domain::TokenId;
use crate::error::{Error, Result};

/// Row-major matrix of natural-log probabilities, one row per predicted
/// position.
#[derive(Debug, Clone, PartialEq)]
pub struct LogProbMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl LogProbMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows.checked_mul(cols) != Some(data.len()) {
            return Err(Error::invalid(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(LogProbMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("ragged log-probability rows"));
        }
        let n = rows.len();
        Self::new(n, cols, rows.into_iter().flatten().collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Checks every row exponentiates to a distribution (within `1e-6`).
    pub fn check_rows(&self) -> Result<()> {
        for i in 0..self.rows {
            let lse = logsumexp(self.row(i));
            if !lse.is_finite() || lse.abs() > 1e-6 {
                return Err(Error::invalid(format!(
                    "row {i} is not normalized (logsumexp = {lse})"
                )));
            }
        }
        Ok(())
    }

    /// Binary layout: `rows` and `cols` as little-endian u64, then the values
    /// as little-endian f64, row-major.
    pub fn read_from(mut r: impl Read) -> Result<Self> {
        let mut word = [0u8; 8];
        r.read_exact(&mut word)?;
        let rows = u64::from_le_bytes(word);
        r.read_exact(&mut word)?;
        let cols = u64::from_le_bytes(word);
        let count = rows
            .checked_mul(cols)
            .and_then(|c| usize::try_from(c).ok())
            .ok_or_else(|| Error::invalid("matrix header overflows"))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != count * 8 {
            return Err(Error::invalid(format!(
                "expected {count} f64 values after the header, found {} bytes",
                bytes.len()
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::new(rows as usize, cols as usize, data)
    }

    pub fn write_to(&self, mut w: impl Write) -> Result<()> {
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.cols as u64).to_le_bytes())?;
        for x in &self.data {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }
}

pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `-(sum_k w_k * logp[k][target[k+1]]) / sum_k w_k`.
///
/// Row `k` is the distribution predicted after seeing `target[..=k]`. Rows
/// are not renormalization-checked here; see [`LogProbMatrix::check_rows`].
pub fn sequence_nll(target: &[TokenId], logprobs: &LogProbMatrix, weights: &[f64]) -> Result<f64> {
    let steps = target.len().saturating_sub(1);
    if target.len() < 2 {
        return Err(Error::invalid("target needs at least two tokens"));
    }
    if logprobs.rows() != steps || weights.len() != steps {
        return Err(Error::invalid(format!(
            "target of length {} needs {steps} rows and weights, got {} rows and {} weights",
            target.len(),
            logprobs.rows(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("weights must not all be zero"));
    }
    let mut acc = 0.0;
    for (k, (&next, &w)) in target[1..].iter().zip(weights).enumerate() {
        let lp = *logprobs
            .row(k)
            .get(next as usize)
            .ok_or_else(|| Error::token(next, format!("outside a {}-entry row", logprobs.cols())))?;
        if w != 0.0 {
            acc += w * lp;
        }
    }
    let loss = -acc / total;
    // avoid reporting -0.0 for a perfect prediction
    Ok(if loss == 0.0 { 0.0 } else { loss })
}

/// [`sequence_nll`] with every weight set to one.
pub fn sequence_nll_unweighted(target: &[TokenId], logprobs: &LogProbMatrix) -> Result<f64> {
    sequence_nll(target, logprobs, &vec![1.0; target.len().saturating_sub(1)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_hot(target: &[TokenId], cols: usize) -> LogProbMatrix {
        let rows = target[1..]
            .iter()
            .map(|&t| {
                (0..cols)
                    .map(|c| if c == t as usize { 0.0 } else { f64::NEG_INFINITY })
                    .collect()
            })
            .collect();
        LogProbMatrix::from_rows(rows).unwrap()
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        let target = [1, 5, 7, 2];
        assert_eq!(
            sequence_nll_unweighted(&target, &one_hot(&target, 10)).unwrap(),
            0.0
        );
    }

    #[test]
    fn uniform_rows_cost_log_vocab() {
        let m = LogProbMatrix::new(4, 10, vec![-(10f64.ln()); 40]).unwrap();
        let loss = sequence_nll_unweighted(&[0, 3, 9, 1, 4], &m).unwrap();
        assert!((loss - std::f64::consts::LN_10).abs() < 1e-12);
        assert!((loss - std::f64::consts::LN_10).abs() < 1e-6);
    }

    #[test]
    fn zero_weights_mask_rows() {
        let target = [0, 1, 2, 3, 4];
        let mut m = LogProbMatrix::new(4, 5, vec![-(5f64.ln()); 20]).unwrap();
        let w = [1.0, 0.0, 0.0, 0.0];
        let before = sequence_nll(&target, &m, &w).unwrap();
        for r in 1..4 {
            m.row_mut(r).fill(-100.0);
        }
        assert_eq!(sequence_nll(&target, &m, &w).unwrap(), before);
        m.row_mut(0)[1] = -0.1;
        assert!((sequence_nll(&target, &m, &w).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn shape_and_token_errors() {
        let m = LogProbMatrix::new(2, 3, vec![-(3f64.ln()); 6]).unwrap();
        assert!(matches!(
            sequence_nll_unweighted(&[0, 1], &m),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            sequence_nll(&[0, 1, 2], &m, &[1.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            sequence_nll(&[0, 1, 2], &m, &[0.0, 0.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            sequence_nll(&[0, 1, 2], &m, &[-1.0, 2.0]),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            sequence_nll_unweighted(&[0, 1, 3], &m),
            Err(Error::InvalidToken { id: 3, .. })
        ));
        assert!(LogProbMatrix::new(2, 3, vec![0.0; 5]).is_err());
    }

    #[test]
    fn row_normalization_check() {
        let ok = LogProbMatrix::new(1, 4, vec![-(4f64.ln()); 4]).unwrap();
        assert!(ok.check_rows().is_ok());
        let bad = LogProbMatrix::new(1, 4, vec![-1.0; 4]).unwrap();
        assert!(bad.check_rows().is_err());
    }

    #[test]
    fn binary_round_trip_and_layout() {
        let m = LogProbMatrix::new(2, 2, vec![-0.5, -1.5, -2.5, -3.5]).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 32);
        assert_eq!(&buf[..8], &2u64.to_le_bytes());
        assert_eq!(&buf[16..24], &(-0.5f64).to_le_bytes());
        assert_eq!(LogProbMatrix::read_from(&buf[..]).unwrap(), m);
        assert!(LogProbMatrix::read_from(&buf[..40]).is_err());
    }

    fn softmax_rows(raw: &[Vec<f64>]) -> LogProbMatrix {
        let rows = raw
            .iter()
            .map(|r| {
                let z = logsumexp(r);
                r.iter().map(|x| x - z).collect()
            })
            .collect();
        LogProbMatrix::from_rows(rows).unwrap()
    }

    proptest! {
        #[test]
        fn weight_scaling_is_invisible(
            raw in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 1..8),
            seed_weights in prop::collection::vec(0.1f64..3.0, 8),
            targets in prop::collection::vec(0u32..6, 9),
            scale in 0.01f64..100.0,
        ) {
            let m = softmax_rows(&raw);
            let target = &targets[..=m.rows()];
            let w = &seed_weights[..m.rows()];
            let scaled: Vec<f64> = w.iter().map(|x| x * scale).collect();
            let a = sequence_nll(target, &m, w).unwrap();
            let b = sequence_nll(target, &m, &scaled).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn only_target_entries_matter(
            raw in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 1..8),
            targets in prop::collection::vec(0u32..6, 9),
            noise in -10.0f64..0.0,
        ) {
            let m = softmax_rows(&raw);
            let target = &targets[..=m.rows()];
            let before = sequence_nll_unweighted(target, &m).unwrap();
            let mut edited = m.clone();
            for k in 0..edited.rows() {
                let keep = target[k + 1] as usize;
                for (c, x) in edited.row_mut(k).iter_mut().enumerate() {
                    if c != keep {
                        *x = noise;
                    }
                }
            }
            prop_assert_eq!(sequence_nll_unweighted(target, &edited).unwrap(), before);
        }
    }
}
