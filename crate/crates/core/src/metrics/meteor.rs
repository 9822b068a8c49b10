use std::collections::HashMap;

use rust_stemmers::{Algorithm, Stemmer};

use super::text::words;
use super::CaptionMetric;

/// Search states explored before falling back to greedy alignment.
const STATE_BUDGET: usize = 200_000;

/// Unigram METEOR without synonym tables: words align when they are equal
/// or share a Porter stem.
pub struct MeteorLite {
    stemmer: Stemmer,
}

impl Default for MeteorLite {
    fn default() -> Self {
        MeteorLite {
            stemmer: Stemmer::create(Algorithm::English),
        }
    }
}

impl std::fmt::Debug for MeteorLite {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("MeteorLite")
    }
}

/// Matches and chunks of an alignment; more matches win, then fewer chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Alignment {
    pub matches: usize,
    pub chunks: usize,
}

impl Alignment {
    fn better(self, other: Alignment) -> bool {
        (self.matches, std::cmp::Reverse(self.chunks)) > (other.matches, std::cmp::Reverse(other.chunks))
    }
}

struct Search<'a> {
    cand: &'a [String],
    refs: &'a [String],
    memo: HashMap<(usize, u64, usize), Alignment>,
}

const NONE: usize = usize::MAX;

impl Search<'_> {
    /// Best alignment of `cand[i..]` given used reference positions and the
    /// reference position matched by `cand[i - 1]`.
    fn run(&mut self, i: usize, used: u64, prev: usize) -> Option<Alignment> {
        if i == self.cand.len() {
            return Some(Alignment {
                matches: 0,
                chunks: 0,
            });
        }
        if let Some(&a) = self.memo.get(&(i, used, prev)) {
            return Some(a);
        }
        if self.memo.len() >= STATE_BUDGET {
            return None;
        }
        let mut best = self.run(i + 1, used, NONE)?;
        for j in 0..self.refs.len() {
            if used & (1 << j) != 0 || self.refs[j] != self.cand[i] {
                continue;
            }
            let rest = self.run(i + 1, used | (1 << j), j)?;
            let continues = prev != NONE && prev + 1 == j;
            let a = Alignment {
                matches: rest.matches + 1,
                chunks: rest.chunks + usize::from(!continues),
            };
            if a.better(best) {
                best = a;
            }
        }
        self.memo.insert((i, used, prev), best);
        Some(best)
    }
}

/// Left to right, each word takes the next unused equal reference word,
/// preferring the one continuing the current chunk. Still maximizes matches.
fn greedy(cand: &[String], refs: &[String]) -> Alignment {
    let mut used = vec![false; refs.len()];
    let (mut matches, mut chunks, mut prev) = (0, 0, NONE);
    for w in cand {
        let follow = (prev != NONE && prev + 1 < refs.len() && !used[prev + 1] && refs[prev + 1] == *w)
            .then(|| prev + 1);
        let pick = follow.or_else(|| (0..refs.len()).find(|&j| !used[j] && refs[j] == *w));
        match pick {
            Some(j) => {
                used[j] = true;
                matches += 1;
                if follow.is_none() {
                    chunks += 1;
                }
                prev = j;
            }
            None => prev = NONE,
        }
    }
    Alignment { matches, chunks }
}

/// Maximum-match, minimum-chunk alignment of two stemmed word sequences.
pub fn align(cand: &[String], refs: &[String]) -> Alignment {
    if refs.len() <= 64 {
        let mut s = Search {
            cand,
            refs,
            memo: HashMap::new(),
        };
        if let Some(a) = s.run(0, 0, NONE) {
            return a;
        }
    }
    greedy(cand, refs)
}

impl MeteorLite {
    fn stems(&self, text: &str) -> Vec<String> {
        words(text)
            .iter()
            .map(|w| self.stemmer.stem(w).into_owned())
            .collect()
    }

    fn single(&self, cand: &[String], reference: &[String]) -> f64 {
        let a = align(cand, reference);
        if a.matches == 0 {
            return 0.0;
        }
        let m = a.matches as f64;
        let p = m / cand.len() as f64;
        let r = m / reference.len() as f64;
        let fmean = p * r / (0.9 * p + 0.1 * r);
        let penalty = 0.5 * (a.chunks as f64 / m).powi(3);
        fmean * (1.0 - penalty)
    }
}

impl CaptionMetric for MeteorLite {
    fn name(&self) -> &'static str {
        "meteor_lite"
    }

    /// Best score over the references.
    fn score(&self, candidate: &str, references: &[&str]) -> f64 {
        let cand = self.stems(candidate);
        references
            .iter()
            .map(|r| self.single(&cand, &self.stems(r)))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn fixtures() {
        let m = MeteorLite::default();
        assert!((m.score("cut the red onion", &["cut the red onion"]) - 0.9921875).abs() < 1e-12);
        let expected = (2.0 / 3.0) / (0.9 * 2.0 / 3.0 + 0.1) * (1.0 - 0.5 * 0.125);
        assert!((m.score("the cat sat", &["the cat"]) - expected).abs() < 1e-12);
        assert!((m.score("the cat sat", &["the cat"]) - 0.892_857_142_857_142_8).abs() < 1e-9);
        assert_eq!(m.score("the cat", &["a dog"]), 0.0);
        assert_eq!(m.score("", &["a dog"]), 0.0);
        assert_eq!(m.score("a dog", &[]), 0.0);
    }

    #[test]
    fn stems_match() {
        let m = MeteorLite::default();
        assert_eq!(
            m.score("slicing onions", &["sliced onion"]),
            m.score("x y", &["x y"])
        );
    }

    #[test]
    fn alignment_prefers_fewer_chunks() {
        // matching the second "the" keeps "the cat" contiguous
        let a = align(&toks("the cat"), &toks("the dog the cat"));
        assert_eq!(
            a,
            Alignment {
                matches: 2,
                chunks: 1
            }
        );
        let a = align(&toks("a b c"), &toks("c a b"));
        assert_eq!(
            a,
            Alignment {
                matches: 3,
                chunks: 2
            }
        );
    }

    /// Tries every injective assignment.
    fn brute(cand: &[String], refs: &[String]) -> Alignment {
        fn go(
            i: usize,
            cand: &[String],
            refs: &[String],
            used: &mut Vec<bool>,
            map: &mut Vec<Option<usize>>,
            best: &mut Alignment,
        ) {
            if i == cand.len() {
                let matches = map.iter().flatten().count();
                let chunks = (0..map.len())
                    .filter(|&k| match (map[k], k.checked_sub(1).and_then(|p| map[p])) {
                        (Some(j), Some(pj)) => pj + 1 != j,
                        (Some(_), None) => true,
                        _ => false,
                    })
                    .count();
                let a = Alignment { matches, chunks };
                if a.better(*best) {
                    *best = a;
                }
                return;
            }
            map.push(None);
            go(i + 1, cand, refs, used, map, best);
            map.pop();
            for j in 0..refs.len() {
                if !used[j] && refs[j] == cand[i] {
                    used[j] = true;
                    map.push(Some(j));
                    go(i + 1, cand, refs, used, map, best);
                    map.pop();
                    used[j] = false;
                }
            }
        }
        let mut best = Alignment {
            matches: 0,
            chunks: 0,
        };
        go(
            0,
            cand,
            refs,
            &mut vec![false; refs.len()],
            &mut Vec::new(),
            &mut best,
        );
        best
    }

    fn sentence() -> impl Strategy<Value = Vec<String>> {
        prop::collection::vec(
            prop::sample::select(vec!["a", "b", "c"]).prop_map(String::from),
            0..7,
        )
    }

    proptest! {
        #[test]
        fn alignment_matches_brute_force(c in sentence(), r in sentence()) {
            prop_assert_eq!(align(&c, &r), brute(&c, &r));
            prop_assert_eq!(greedy(&c, &r).matches, brute(&c, &r).matches);
        }

        #[test]
        fn score_is_bounded_and_reference_order_free(c in sentence(), r1 in sentence(), r2 in sentence()) {
            let m = MeteorLite::default();
            let (c, r1, r2) = (c.join(" "), r1.join(" "), r2.join(" "));
            let s = m.score(&c, &[&r1, &r2]);
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, m.score(&c, &[&r2, &r1]));
        }
    }
}
