//! Candidate pairs, rank percentiles, joint cliff scores and the raw cliff set.
//!
//! The candidate universe is every unordered pair with Tanimoto ≥ τ. The
//! property gap of a pair is ranked against all candidates (midrank
//! percentile), so the joint score `s^α · r^β` does not depend on the units of
//! the target.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::{Fingerprint, FingerprintError, SimilarityIndex};
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PairGenError {
    #[error("need at least 2 molecules, got {0}")]
    InsufficientData(usize),
    #[error("{0} fingerprints but {1} targets")]
    LengthMismatch(usize, usize),
    #[error("invalid pair generation config: {0}")]
    Config(String),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGenConfig {
    /// Similarity floor for candidate pairs.
    pub tau: f64,
    /// Similarity exponent of the joint score.
    pub alpha: f64,
    /// Rank-percentile exponent of the joint score.
    pub beta: f64,
    /// Fraction of top-scoring candidates kept as raw cliffs.
    pub tau_c_quantile: f64,
    pub per_molecule_cap: Option<usize>,
}

impl Default for PairGenConfig {
    fn default() -> Self {
        Self {
            tau: 0.3,
            alpha: 1.0,
            beta: 1.0,
            tau_c_quantile: 0.02,
            per_molecule_cap: None,
        }
    }
}

impl PairGenConfig {
    pub fn validate(&self) -> Result<(), PairGenError> {
        let bad = |m: String| Err(PairGenError::Config(m));
        if !(0.0..=1.0).contains(&self.tau) {
            return bad(format!("tau {} outside [0,1]", self.tau));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) || !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("exponents must be > 0, got alpha={} beta={}", self.alpha, self.beta));
        }
        if !(self.tau_c_quantile > 0.0 && self.tau_c_quantile <= 1.0) {
            return bad(format!("tau_c quantile {} outside (0,1]", self.tau_c_quantile));
        }
        if self.per_molecule_cap == Some(0) {
            return bad("per-molecule cap must be at least 1".into());
        }
        Ok(())
    }
}

/// A τ-similar pair; `i < j` are canonical molecule indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidatePair {
    pub i: usize,
    pub j: usize,
    pub similarity: f64,
    pub dy: f64,
    /// Midrank percentile of `dy` among all candidates.
    pub rank: f64,
    pub score: f64,
}

/// All pairs with similarity ≥ `config.tau`, sorted by `(i, j)`, with `dy`
/// filled in and `rank`/`score` zeroed.
pub fn generate_pairs(
    fps: &[Fingerprint],
    targets: &[f64],
    config: &PairGenConfig,
) -> Result<Vec<CandidatePair>, PairGenError> {
    config.validate()?;
    if fps.len() != targets.len() {
        return Err(PairGenError::LengthMismatch(fps.len(), targets.len()));
    }
    if fps.len() < 2 {
        return Err(PairGenError::InsufficientData(fps.len()));
    }
    let index = SimilarityIndex::new(fps.iter().collect())?;
    let mut pairs: Vec<CandidatePair> = index
        .self_join(config.tau)
        .into_iter()
        .map(|(i, j, similarity)| CandidatePair {
            i,
            j,
            similarity,
            dy: (targets[i] - targets[j]).abs(),
            rank: 0.0,
            score: 0.0,
        })
        .collect();
    if let Some(cap) = config.per_molecule_cap {
        pairs = apply_per_molecule_cap(pairs, fps.len(), cap);
    }
    Ok(pairs)
}

/// Keeps a pair if it is among the `cap` most similar partners (ties by
/// partner index) of either endpoint. Input and output sorted by `(i, j)`.
pub fn apply_per_molecule_cap(pairs: Vec<CandidatePair>, n: usize, cap: usize) -> Vec<CandidatePair> {
    let mut incident: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, p) in pairs.iter().enumerate() {
        incident[p.i].push(k);
        incident[p.j].push(k);
    }
    let mut keep = vec![false; pairs.len()];
    for (mol, list) in incident.iter_mut().enumerate() {
        let partner = |k: usize| if pairs[k].i == mol { pairs[k].j } else { pairs[k].i };
        list.sort_by(|&a, &b| {
            pairs[b]
                .similarity
                .total_cmp(&pairs[a].similarity)
                .then(partner(a).cmp(&partner(b)))
        });
        for &k in list.iter().take(cap) {
            keep[k] = true;
        }
    }
    pairs
        .into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect()
}

/// Fills `rank` with `(#smaller + ½·#equal) / n`, where `#equal` counts the
/// pair itself.
pub fn rank_percentile(pairs: &mut [CandidatePair]) {
    let mut sorted: Vec<f64> = pairs.iter().map(|p| p.dy).collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    for p in pairs.iter_mut() {
        let less = sorted.partition_point(|&v| v < p.dy);
        let less_eq = sorted.partition_point(|&v| v <= p.dy);
        p.rank = (less as f64 + 0.5 * (less_eq - less) as f64) / n;
    }
}

/// `similarity^alpha · rank^beta`.
pub fn cliff_score(similarity: f64, rank: f64, alpha: f64, beta: f64) -> f64 {
    similarity.powf(alpha) * rank.powf(beta)
}

pub fn score_pairs(pairs: &mut [CandidatePair], alpha: f64, beta: f64) {
    for p in pairs.iter_mut() {
        p.score = cliff_score(p.similarity, p.rank, alpha, beta);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawCliffs {
    pub edges: Vec<CandidatePair>,
    /// `None` when there were no candidates to threshold.
    pub tau_c: Option<f64>,
}

/// Keeps pairs whose score reaches the `(1 - top_quantile)` empirical
/// quantile of all scores; ties at the threshold are all kept.
pub fn threshold_raw_cliffs(pairs: &[CandidatePair], top_quantile: f64) -> RawCliffs {
    let scores: Vec<f64> = pairs.iter().map(|p| p.score).collect();
    match stats::quantile(&scores, 1.0 - top_quantile) {
        None => RawCliffs {
            edges: Vec::new(),
            tau_c: None,
        },
        Some(tau_c) => RawCliffs {
            edges: pairs.iter().filter(|p| p.score >= tau_c).copied().collect(),
            tau_c: Some(tau_c),
        },
    }
}

/// Audit dump: tab-separated `i j s dy r c`, one pair per line, ids as given.
pub fn write_pair_dump<W: Write>(pairs: &[CandidatePair], ids: &[&str], mut out: W) -> std::io::Result<()> {
    writeln!(out, "i\tj\ts\tdy\tr\tc")?;
    for p in pairs {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            ids[p.i], ids[p.j], p.similarity, p.dy, p.rank, p.score
        )?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(i: usize, j: usize, similarity: f64, dy: f64) -> CandidatePair {
        CandidatePair {
            i,
            j,
            similarity,
            dy,
            rank: 0.0,
            score: 0.0,
        }
    }

    #[test]
    fn identical_molecules_pair_up() {
        let f = Fingerprint::from_indices(64, [1, 5, 9]).unwrap();
        let config = PairGenConfig {
            tau: 0.5,
            ..Default::default()
        };
        let pairs = generate_pairs(&[f.clone(), f], &[1.0, 3.5], &config).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].similarity, 1.0);
        assert_eq!(pairs[0].dy, 2.5);
    }

    #[test]
    fn tau_one_excludes_distinct() {
        let fps: Vec<Fingerprint> = (0..5)
            .map(|k| Fingerprint::from_indices(64, [k, k + 10]).unwrap())
            .collect();
        let config = PairGenConfig {
            tau: 1.0,
            ..Default::default()
        };
        assert!(generate_pairs(&fps, &[0.0; 5], &config).unwrap().is_empty());
    }

    #[test]
    fn too_few_molecules() {
        let f = Fingerprint::from_indices(64, [1]).unwrap();
        assert_eq!(
            generate_pairs(&[f], &[0.0], &PairGenConfig::default()),
            Err(PairGenError::InsufficientData(1))
        );
    }

    #[test]
    fn midrank_examples() {
        let mut tied = vec![pair(0, 1, 1.0, 2.0), pair(0, 2, 1.0, 2.0), pair(1, 2, 1.0, 2.0)];
        rank_percentile(&mut tied);
        assert!(tied.iter().all(|p| p.rank == 0.5));

        let mut inc: Vec<_> = (0..4).map(|k| pair(0, k + 1, 1.0, k as f64)).collect();
        rank_percentile(&mut inc);
        let r: Vec<f64> = inc.iter().map(|p| p.rank).collect();
        assert_eq!(r, vec![0.125, 0.375, 0.625, 0.875]);

        let mut one = vec![pair(0, 1, 1.0, 7.0)];
        rank_percentile(&mut one);
        assert_eq!(one[0].rank, 0.5);
    }

    #[test]
    fn score_examples() {
        assert_eq!(cliff_score(1.0, 1.0, 2.7, 0.3), 1.0);
        assert!((cliff_score(0.5, 0.8, 1.0, 1.0) - 0.4).abs() < 1e-15);
        assert_eq!(cliff_score(0.9, 0.0, 1.0, 0.5), 0.0);
    }

    #[test]
    fn threshold_examples() {
        let mut pairs: Vec<_> = (0..100).map(|k| pair(k, k + 1, 1.0, 0.0)).collect();
        for (k, p) in pairs.iter_mut().enumerate() {
            p.score = ((k * 37) % 100) as f64 / 100.0;
        }
        let all = threshold_raw_cliffs(&pairs, 1.0);
        assert_eq!(all.edges, pairs);

        let top = threshold_raw_cliffs(&pairs, 0.1);
        let mut expected: Vec<f64> = pairs.iter().map(|p| p.score).collect();
        expected.sort_by(|a, b| b.total_cmp(a));
        let mut got: Vec<f64> = top.edges.iter().map(|p| p.score).collect();
        got.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(got, expected[..10].to_vec());

        let mut flat = pairs.clone();
        flat.iter_mut().for_each(|p| p.score = 0.3);
        assert_eq!(threshold_raw_cliffs(&flat, 0.05).edges.len(), 100);

        let none = threshold_raw_cliffs(&[], 0.1);
        assert!(none.edges.is_empty());
        assert_eq!(none.tau_c, None);
    }

    #[test]
    fn cap_keeps_top_partners_either_side() {
        // hub 0 with partners 1..4 at decreasing similarity
        let pairs = vec![
            pair(0, 1, 0.9, 0.0),
            pair(0, 2, 0.8, 0.0),
            pair(0, 3, 0.7, 0.0),
            pair(0, 4, 0.6, 0.0),
            pair(3, 4, 0.5, 0.0),
        ];
        let kept = apply_per_molecule_cap(pairs.clone(), 5, 1);
        // 0 keeps (0,1); 1 keeps (0,1); 2 keeps (0,2); 3 keeps (0,3); 4 keeps (0,4)
        assert_eq!(kept, pairs[..4].to_vec());
    }

    proptest! {
        #[test]
        fn score_is_monotone(s in 0.0f64..1.0, r in 0.0f64..1.0, d in 0.0f64..0.5, a in 0.1f64..3.0, b in 0.1f64..3.0) {
            let s2 = (s + d).min(1.0);
            let r2 = (r + d).min(1.0);
            prop_assert!(cliff_score(s2, r, a, b) >= cliff_score(s, r, a, b));
            prop_assert!(cliff_score(s, r2, a, b) >= cliff_score(s, r, a, b));
        }

        #[test]
        fn ranks_are_permutation_invariant(dys in proptest::collection::vec(0u8..20, 1..40), rot in 0usize..40) {
            let mut a: Vec<_> = dys.iter().enumerate().map(|(k, &d)| pair(k, k + 1, 1.0, d as f64)).collect();
            let mut b = a.clone();
            let len = b.len();
            b.rotate_left(rot % len);
            rank_percentile(&mut a);
            rank_percentile(&mut b);
            a.sort_by_key(|p| p.i);
            b.sort_by_key(|p| p.i);
            prop_assert_eq!(&a, &b);
            for x in &a {
                prop_assert!(x.rank > 0.0 && x.rank < 1.0);
                for y in &a {
                    if x.dy < y.dy { prop_assert!(x.rank < y.rank); }
                }
            }
        }
    }
}
