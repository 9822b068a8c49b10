use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::text::words;
use super::CaptionMetric;
use crate::error::{Error, Result};

const MAX_N: usize = 4;
const SIGMA: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiderVariant {
    /// Clipped counts and a gaussian length penalty.
    #[default]
    D,
    Plain,
}

impl CiderVariant {
    pub fn metric_name(self) -> &'static str {
        match self {
            CiderVariant::D => "cider_d",
            CiderVariant::Plain => "cider",
        }
    }
}

fn ngrams(tokens: &[String], n: usize) -> impl Iterator<Item = String> + '_ {
    tokens.windows(n).map(|w| w.join(" "))
}

/// Number of documents containing each 1- to 4-gram, counted once per
/// document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocFreq {
    df: HashMap<String, usize>,
    docs: usize,
}

impl DocFreq {
    pub fn build<'a>(documents: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let mut df = HashMap::new();
        let mut docs = 0;
        for doc in documents {
            docs += 1;
            let toks = words(doc);
            let seen: HashSet<String> = (1..=MAX_N).flat_map(|n| ngrams(&toks, n)).collect();
            for g in seen {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        if docs == 0 {
            return Err(Error::Config(
                "document frequencies need at least one document".into(),
            ));
        }
        Ok(DocFreq { df, docs })
    }

    pub fn documents(&self) -> usize {
        self.docs
    }

    pub fn idf(&self, gram: &str) -> f64 {
        let df = self.df.get(gram).copied().unwrap_or(0).max(1);
        (self.docs as f64).ln() - (df as f64).ln()
    }
}

struct TfIdf {
    vecs: [HashMap<String, f64>; MAX_N],
    norms: [f64; MAX_N],
    len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cider {
    df: DocFreq,
    variant: CiderVariant,
}

impl Cider {
    pub fn new(df: DocFreq, variant: CiderVariant) -> Self {
        Cider { df, variant }
    }

    fn tfidf(&self, text: &str) -> TfIdf {
        let toks = words(text);
        let mut vecs: [HashMap<String, f64>; MAX_N] = Default::default();
        let mut norms = [0.0; MAX_N];
        for n in 1..=MAX_N {
            let v = &mut vecs[n - 1];
            for g in ngrams(&toks, n) {
                *v.entry(g).or_insert(0.0) += 1.0;
            }
            for (g, x) in v.iter_mut() {
                *x *= self.df.idf(g);
                norms[n - 1] += *x * *x;
            }
            norms[n - 1] = norms[n - 1].sqrt();
        }
        TfIdf {
            vecs,
            norms,
            len: toks.len(),
        }
    }

    fn similarity(&self, c: &TfIdf, r: &TfIdf) -> f64 {
        let mut total = 0.0;
        for n in 0..MAX_N {
            let mut dot = 0.0;
            for (g, &hv) in &c.vecs[n] {
                if let Some(&rv) = r.vecs[n].get(g) {
                    dot += match self.variant {
                        CiderVariant::D => hv.min(rv) * rv,
                        CiderVariant::Plain => hv * rv,
                    };
                }
            }
            if c.norms[n] != 0.0 && r.norms[n] != 0.0 {
                dot /= c.norms[n] * r.norms[n];
            } else {
                dot = 0.0;
            }
            if self.variant == CiderVariant::D {
                let delta = c.len as f64 - r.len as f64;
                dot *= (-delta * delta / (2.0 * SIGMA * SIGMA)).exp();
            }
            total += dot;
        }
        total / MAX_N as f64
    }
}

impl CaptionMetric for Cider {
    fn name(&self) -> &'static str {
        self.variant.metric_name()
    }

    fn score(&self, candidate: &str, references: &[&str]) -> f64 {
        if references.is_empty() {
            return 0.0;
        }
        let c = self.tfidf(candidate);
        let sum: f64 = references
            .iter()
            .map(|r| self.similarity(&c, &self.tfidf(r)))
            .sum();
        10.0 * sum / references.len() as f64
    }
}
