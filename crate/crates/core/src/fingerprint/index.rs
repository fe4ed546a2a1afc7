//! Inverted index over set bits with popcount-bound screening.
//!
//! For `a ≤ b` popcounts, Tanimoto is bounded by `a / b`, so a query only
//! needs to visit reference fingerprints whose popcount lies in
//! `[τ·a, a/τ]`. Within that window, posting lists accumulate exact
//! intersection counts, and the similarity of each touched candidate is then
//! computed exactly. Results are therefore identical to exhaustive scanning.

use rayon::prelude::*;

use super::{tanimoto_from_counts, Fingerprint, FingerprintError};

/// Relative slack on the popcount window; only widens the screen.
const WINDOW_SLACK: f64 = 1e-9;

pub struct SimilarityIndex<'a> {
    fps: Vec<&'a Fingerprint>,
    /// Reference indices ordered by `(popcount, index)`.
    by_pop: Vec<u32>,
    /// Popcount at each sorted position.
    pops: Vec<u32>,
    /// Sorted positions carrying each bit.
    postings: Vec<Vec<u32>>,
}

struct Scratch {
    counts: Vec<u32>,
    touched: Vec<u32>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            counts: vec![0; n],
            touched: Vec::new(),
        }
    }
}

impl<'a> SimilarityIndex<'a> {
    pub fn new(fps: Vec<&'a Fingerprint>) -> Result<Self, FingerprintError> {
        let width = fps.first().map_or(0, |f| f.width());
        if let Some(bad) = fps.iter().find(|f| f.width() != width) {
            return Err(FingerprintError::WidthMismatch(width, bad.width()));
        }
        let mut by_pop: Vec<u32> = (0..fps.len() as u32).collect();
        by_pop.sort_by_key(|&i| (fps[i as usize].popcount(), i));
        let pops: Vec<u32> = by_pop.iter().map(|&i| fps[i as usize].popcount()).collect();
        let mut postings = vec![Vec::new(); width];
        for (pos, &i) in by_pop.iter().enumerate() {
            for bit in fps[i as usize].ones() {
                postings[bit].push(pos as u32);
            }
        }
        Ok(Self {
            fps,
            by_pop,
            pops,
            postings,
        })
    }

    pub fn len(&self) -> usize {
        self.fps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fps.is_empty()
    }

    fn width(&self) -> usize {
        self.postings.len()
    }

    fn check(&self, query: &Fingerprint) -> Result<(), FingerprintError> {
        if !self.fps.is_empty() && query.width() != self.width() {
            return Err(FingerprintError::WidthMismatch(self.width(), query.width()));
        }
        Ok(())
    }

    /// Sorted-position window whose popcounts may reach `tau` against `a`.
    fn window(&self, a: u32, tau: f64) -> (usize, usize) {
        let lo = (a as f64 * tau * (1.0 - WINDOW_SLACK)).floor() as u32;
        let hi = (a as f64 / tau * (1.0 + WINDOW_SLACK)).ceil();
        let hi = if hi >= u32::MAX as f64 { u32::MAX } else { hi as u32 };
        let start = self.pops.partition_point(|&p| p < lo);
        let end = self.pops.partition_point(|&p| p <= hi);
        (start, end)
    }

    /// Visits every reference with similarity ≥ `tau` among sorted positions
    /// in `[from, end)`, calling `emit(reference index, similarity)`.
    fn scan(
        &self,
        query: &Fingerprint,
        tau: f64,
        from: usize,
        scratch: &mut Scratch,
        mut emit: impl FnMut(usize, f64),
    ) {
        let a = query.popcount();
        if tau <= 0.0 {
            for pos in from..self.fps.len() {
                let idx = self.by_pop[pos] as usize;
                let inter = query.intersection_count(self.fps[idx]).unwrap_or(0);
                emit(idx, tanimoto_from_counts(inter, a, self.pops[pos]));
            }
            return;
        }
        if a == 0 {
            return;
        }
        let (start, end) = self.window(a, tau);
        let start = start.max(from);
        if start >= end {
            return;
        }
        for bit in query.ones() {
            let list = &self.postings[bit];
            let lo = list.partition_point(|&p| (p as usize) < start);
            for &pos in &list[lo..] {
                if pos as usize >= end {
                    break;
                }
                let slot = &mut scratch.counts[pos as usize];
                if *slot == 0 {
                    scratch.touched.push(pos);
                }
                *slot += 1;
            }
        }
        for &pos in &scratch.touched {
            let inter = std::mem::take(&mut scratch.counts[pos as usize]);
            let s = tanimoto_from_counts(inter, a, self.pops[pos as usize]);
            if s >= tau {
                emit(self.by_pop[pos as usize] as usize, s);
            }
        }
        scratch.touched.clear();
    }

    /// All references with similarity ≥ `tau` to `query`, in ascending
    /// reference index order.
    pub fn query(&self, query: &Fingerprint, tau: f64) -> Result<Vec<(usize, f64)>, FingerprintError> {
        self.check(query)?;
        let mut scratch = Scratch::new(self.fps.len());
        let mut out = Vec::new();
        self.scan(query, tau, 0, &mut scratch, |j, s| out.push((j, s)));
        out.sort_unstable_by_key(|&(j, _)| j);
        Ok(out)
    }

    /// Runs [`Self::query`] for many queries in parallel; output order follows
    /// the input order regardless of scheduling.
    pub fn query_many(
        &self,
        queries: &[&Fingerprint],
        tau: f64,
    ) -> Result<Vec<Vec<(usize, f64)>>, FingerprintError> {
        for q in queries {
            self.check(q)?;
        }
        Ok(queries
            .par_iter()
            .map_init(
                || Scratch::new(self.fps.len()),
                |scratch, q| {
                    let mut out = Vec::new();
                    self.scan(q, tau, 0, scratch, |j, s| out.push((j, s)));
                    out.sort_unstable_by_key(|&(j, _)| j);
                    out
                },
            )
            .collect())
    }

    /// Every unordered pair `(i, j, s)` with `i < j` and `s ≥ tau` among the
    /// indexed fingerprints, sorted by `(i, j)`.
    pub fn self_join(&self, tau: f64) -> Vec<(usize, usize, f64)> {
        let mut pairs: Vec<(usize, usize, f64)> = (0..self.fps.len())
            .into_par_iter()
            .map_init(
                || Scratch::new(self.fps.len()),
                |scratch, pos| {
                    let i = self.by_pop[pos] as usize;
                    let mut out = Vec::new();
                    self.scan(self.fps[i], tau, pos + 1, scratch, |j, s| {
                        out.push((i.min(j), i.max(j), s));
                    });
                    out
                },
            )
            .flatten()
            .collect();
        pairs.sort_unstable_by_key(|p| (p.0, p.1));
        pairs
    }

    /// Highest similarity between `query` and any reference, or `None` when
    /// the index is empty.
    pub fn max_similarity(&self, query: &Fingerprint) -> Result<Option<f64>, FingerprintError> {
        self.check(query)?;
        let n = self.fps.len();
        if n == 0 {
            return Ok(None);
        }
        let a = query.popcount();
        if a == 0 {
            return Ok(Some(0.0));
        }
        let bound = |pos: usize| {
            let b = self.pops[pos];
            if b == 0 {
                0.0
            } else {
                a.min(b) as f64 / a.max(b) as f64
            }
        };
        let pivot = self.pops.partition_point(|&p| p < a);
        let (mut left, mut right) = (pivot, pivot);
        let mut best = 0.0f64;
        loop {
            let lb = (left > 0).then(|| bound(left - 1));
            let rb = (right < n).then(|| bound(right));
            let pos = match (lb, rb) {
                (None, None) => break,
                (Some(l), Some(r)) if l >= r => {
                    left -= 1;
                    left
                }
                (Some(_), None) => {
                    left -= 1;
                    left
                }
                _ => {
                    right += 1;
                    right - 1
                }
            };
            if bound(pos) < best || bound(pos) == 0.0 {
                break;
            }
            let idx = self.by_pop[pos] as usize;
            let inter = query.intersection_count(self.fps[idx])?;
            best = best.max(tanimoto_from_counts(inter, a, self.pops[pos]));
            if best >= 1.0 {
                break;
            }
        }
        Ok(Some(best))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::tanimoto;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_fps(n: usize, width: usize, seed: u64) -> Vec<Fingerprint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let families: Vec<Vec<usize>> = (0..6)
            .map(|_| (0..20).map(|_| rng.gen_range(0..width)).collect())
            .collect();
        (0..n)
            .map(|_| {
                let fam = &families[rng.gen_range(0..families.len())];
                let mut bits: Vec<usize> = fam.iter().copied().filter(|_| rng.gen_bool(0.8)).collect();
                let extra = rng.gen_range(0..6);
                bits.extend((0..extra).map(|_| rng.gen_range(0..width)));
                Fingerprint::from_indices(width, bits).unwrap()
            })
            .collect()
    }

    #[test]
    fn self_join_matches_brute_force() {
        for (seed, tau) in [(1, 0.3), (2, 0.0), (3, 0.7), (4, 1.0)] {
            let fps = random_fps(120, 256, seed);
            let index = SimilarityIndex::new(fps.iter().collect()).unwrap();
            let mut expected = Vec::new();
            for i in 0..fps.len() {
                for j in i + 1..fps.len() {
                    let s = tanimoto(&fps[i], &fps[j]).unwrap();
                    if s >= tau {
                        expected.push((i, j, s));
                    }
                }
            }
            assert_eq!(index.self_join(tau), expected, "tau {tau}");
        }
    }

    #[test]
    fn query_and_max_match_brute_force() {
        let refs = random_fps(80, 128, 9);
        let queries = random_fps(30, 128, 10);
        let index = SimilarityIndex::new(refs.iter().collect()).unwrap();
        for q in &queries {
            let expected: Vec<(usize, f64)> = refs
                .iter()
                .enumerate()
                .map(|(j, r)| (j, tanimoto(q, r).unwrap()))
                .filter(|&(_, s)| s >= 0.25)
                .collect();
            assert_eq!(index.query(q, 0.25).unwrap(), expected);
            let best = refs
                .iter()
                .map(|r| tanimoto(q, r).unwrap())
                .fold(0.0, f64::max);
            assert_eq!(index.max_similarity(q).unwrap(), Some(best));
        }
    }

    #[test]
    fn empty_index() {
        let index = SimilarityIndex::new(Vec::new()).unwrap();
        let q = Fingerprint::zeros(64).unwrap();
        assert_eq!(index.max_similarity(&q).unwrap(), None);
        assert!(index.query(&q, 0.5).unwrap().is_empty());
        assert!(index.self_join(0.0).is_empty());
    }
}
