use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Scorer;
use crate::domain::TokenId;
use crate::error::{Error, Result};

/// Conditional next-token table keyed by up to `order - 1` previous ids.
///
/// Lookups use the longest available context suffix and back off to
/// shorter ones (down to the empty context) when a context is missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNGram", into = "RawNGram")]
pub struct NGramScorer {
    order: usize,
    vocab_size: usize,
    probs: BTreeMap<Vec<TokenId>, Vec<f64>>,
    #[serde(skip)]
    logprobs: HashMap<Vec<TokenId>, Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawNGram {
    order: usize,
    table: BTreeMap<String, Vec<f64>>,
}

fn parse_context(key: &str) -> Result<Vec<TokenId>> {
    if key.trim().is_empty() {
        return Ok(Vec::new());
    }
    key.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad context key {key:?}")))
        })
        .collect()
}

fn context_key(ctx: &[TokenId]) -> String {
    ctx.iter().map(|id| id.to_string()).collect::<Vec<_>>().join(",")
}

impl TryFrom<RawNGram> for NGramScorer {
    type Error = Error;

    fn try_from(raw: RawNGram) -> Result<Self> {
        let table = raw
            .table
            .into_iter()
            .map(|(k, row)| Ok((parse_context(&k)?, row)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        NGramScorer::new(raw.order, table)
    }
}

impl From<NGramScorer> for RawNGram {
    fn from(s: NGramScorer) -> Self {
        RawNGram {
            order: s.order,
            table: s.probs.iter().map(|(k, v)| (context_key(k), v.clone())).collect(),
        }
    }
}

impl NGramScorer {
    pub fn new(order: usize, table: BTreeMap<Vec<TokenId>, Vec<f64>>) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("n-gram order must be at least 1".into()));
        }
        let vocab_size = table
            .values()
            .next()
            .map(Vec::len)
            .ok_or_else(|| Error::Config("n-gram table is empty".into()))?;
        let mut logprobs = HashMap::with_capacity(table.len());
        for (ctx, row) in &table {
            let key = context_key(ctx);
            if ctx.len() >= order {
                return Err(Error::Config(format!(
                    "context {key:?} is longer than order {order} allows"
                )));
            }
            if row.len() != vocab_size || vocab_size == 0 {
                return Err(Error::Config(format!(
                    "row for {key:?} has {} entries",
                    row.len()
                )));
            }
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Config(format!("row for {key:?} has a non-probability")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Config(format!("row for {key:?} sums to {sum}")));
            }
            logprobs.insert(ctx.clone(), row.iter().map(|p| p.ln()).collect());
        }
        Ok(NGramScorer {
            order,
            vocab_size,
            probs: table,
            logprobs,
        })
    }

    /// A fully populated table with random rows for every context of length
    /// below `order`.
    pub fn random(order: usize, vocab_size: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table = BTreeMap::new();
        let mut contexts: Vec<Vec<TokenId>> = vec![Vec::new()];
        for _ in 0..order {
            for ctx in &contexts {
                let weights: Vec<f64> = (0..vocab_size).map(|_| rng.gen_range(0.05..1.0)).collect();
                let z: f64 = weights.iter().sum();
                table.insert(ctx.clone(), weights.iter().map(|w| w / z).collect());
            }
            contexts = contexts
                .iter()
                .flat_map(|ctx| {
                    (0..vocab_size as TokenId).map(move |t| {
                        let mut c = ctx.clone();
                        c.push(t);
                        c
                    })
                })
                .collect();
        }
        Self::new(order, table)
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

impl Scorer for NGramScorer {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn next_logprobs(&self, prefix: &[TokenId]) -> Result<Vec<f64>> {
        let longest = prefix.len().min(self.order - 1);
        (0..=longest)
            .rev()
            .find_map(|n| self.logprobs.get(&prefix[prefix.len() - n..]))
            .cloned()
            .ok_or_else(|| {
                Error::ScorerContract(format!("no n-gram row for any suffix of {}", context_key(prefix)))
            })
    }
}
