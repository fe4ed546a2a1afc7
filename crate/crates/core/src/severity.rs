//! Offline per-molecule severity.
//!
//! Every molecule (train, val or test) is scored against the training set
//! only: its τ-similar training neighbors are collected (top `K` by
//! similarity), the `M` strongest by `similarity × |Δy|` are averaged, and the
//! average is divided by a normalization constant `q_norm`, the
//! `norm_percentile` quantile of all Δy collected for training molecules.
//! The train-exposure score `D(i)` is the single strongest neighbor strength
//! and drives the Q1..Q4 grouping used by evaluation and the controller.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cliffgraph::Split;
use crate::fingerprint::{Fingerprint, FingerprintError, SimilarityIndex};
use crate::stats;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SeverityError {
    #[error("no property gaps to normalize by")]
    EmptyNormalization,
    #[error("normalization quantile {0} is not positive; all collected gaps are zero at this percentile")]
    DegenerateNormalization(f64),
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
    #[error("invalid severity config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SeverityGroup {
    Q0,
    Q1,
    Q2,
    Q3,
    Q4,
}

impl SeverityGroup {
    pub const RANKED: [SeverityGroup; 4] = [Self::Q1, Self::Q2, Self::Q3, Self::Q4];

    pub fn from_quartile(q: u8) -> Self {
        match q {
            0 => Self::Q0,
            1 => Self::Q1,
            2 => Self::Q2,
            3 => Self::Q3,
            _ => Self::Q4,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        ["Q0", "Q1", "Q2", "Q3", "Q4"][self.index()]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityConfig {
    pub tau: f64,
    /// Neighbor budget.
    pub k: usize,
    /// Aggregation budget, `1 ≤ m ≤ k`.
    pub m: usize,
    pub norm_percentile: f64,
}

impl Default for SeverityConfig {
    fn default() -> Self {
        Self {
            tau: 0.3,
            k: 64,
            m: 8,
            norm_percentile: 0.95,
        }
    }
}

impl SeverityConfig {
    pub fn validate(&self) -> Result<(), SeverityError> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(SeverityError::Config(format!("tau {} outside [0,1]", self.tau)));
        }
        if self.m < 1 || self.m > self.k {
            return Err(SeverityError::Config(format!(
                "need 1 <= m <= k, got m={} k={}",
                self.m, self.k
            )));
        }
        if !(self.norm_percentile > 0.0 && self.norm_percentile <= 1.0) {
            return Err(SeverityError::Config(format!(
                "norm percentile {} outside (0,1]",
                self.norm_percentile
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeverityRecord {
    /// Normalized severity `s_i`.
    pub score: f64,
    /// Train-exposure score `D(i)`.
    pub exposure: f64,
    /// Exposure quartile within the molecule's own split.
    pub group: SeverityGroup,
    pub neighbor_count: usize,
    /// Test molecules only: max quartile of incident cliff edges whose other
    /// endpoint is in train.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_group: Option<SeverityGroup>,
}

/// A training-set neighbor of some molecule; `j` is a dataset index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub j: usize,
    pub similarity: f64,
    pub dy: f64,
}

impl Neighbor {
    pub fn strength(&self) -> f64 {
        self.similarity * self.dy
    }
}

/// Similarity index over the training molecules of a dataset.
pub struct TrainReference<'a> {
    train: Vec<usize>,
    index: SimilarityIndex<'a>,
    targets: &'a [f64],
}

impl<'a> TrainReference<'a> {
    pub fn new(fps: &'a [Fingerprint], targets: &'a [f64], train: Vec<usize>) -> Result<Self, SeverityError> {
        let index = SimilarityIndex::new(train.iter().map(|&i| &fps[i]).collect())?;
        Ok(Self { train, index, targets })
    }

    pub fn train_indices(&self) -> &[usize] {
        &self.train
    }

    fn finish(&self, me: Option<usize>, y: f64, hits: Vec<(usize, f64)>, k: usize) -> Vec<Neighbor> {
        let mut out: Vec<Neighbor> = hits
            .into_iter()
            .map(|(local, similarity)| {
                let j = self.train[local];
                Neighbor {
                    j,
                    similarity,
                    dy: (y - self.targets[j]).abs(),
                }
            })
            .filter(|n| Some(n.j) != me)
            .collect();
        out.sort_by(|a, b| b.similarity.total_cmp(&a.similarity).then(a.j.cmp(&b.j)));
        out.truncate(k);
        out
    }

    /// Top-`k` training neighbors of molecule `me` with similarity ≥ `tau`,
    /// highest similarity first (ties by index). `me` itself is excluded.
    pub fn collect_neighbors(
        &self,
        me: usize,
        fp: &Fingerprint,
        y: f64,
        tau: f64,
        k: usize,
    ) -> Result<Vec<Neighbor>, SeverityError> {
        let hits = self.index.query(fp, tau)?;
        Ok(self.finish(Some(me), y, hits, k))
    }

    /// [`Self::collect_neighbors`] for dataset molecules `queries`, in parallel.
    pub fn collect_many(
        &self,
        fps: &[Fingerprint],
        queries: &[usize],
        tau: f64,
        k: usize,
    ) -> Result<Vec<Vec<Neighbor>>, SeverityError> {
        let q: Vec<&Fingerprint> = queries.iter().map(|&i| &fps[i]).collect();
        let hits = self.index.query_many(&q, tau)?;
        Ok(queries
            .iter()
            .zip(hits)
            .map(|(&i, h)| self.finish(Some(i), self.targets[i], h, k))
            .collect())
    }
}

/// `alpha`-quantile of the collected gaps (linear interpolation).
pub fn compute_q_norm(values: &[f64], alpha: f64) -> Result<f64, SeverityError> {
    let q = stats::quantile(values, alpha).ok_or(SeverityError::EmptyNormalization)?;
    if q > 0.0 {
        Ok(q)
    } else {
        Err(SeverityError::DegenerateNormalization(q))
    }
}

/// Mean strength of the `m` strongest neighbors (fewer if fewer exist),
/// before normalization; 0 for no neighbors.
pub fn mean_top_strength(neighbors: &[Neighbor], m: usize) -> f64 {
    let mut strengths: Vec<(f64, usize)> = neighbors.iter().map(|n| (n.strength(), n.j)).collect();
    strengths.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let take = strengths.len().min(m);
    if take == 0 {
        return 0.0;
    }
    strengths[..take].iter().map(|s| s.0).sum::<f64>() / take as f64
}

pub fn severity_score(neighbors: &[Neighbor], m: usize, q_norm: f64) -> f64 {
    mean_top_strength(neighbors, m) / q_norm
}

pub fn train_exposure_score(neighbors: &[Neighbor]) -> f64 {
    neighbors.iter().map(Neighbor::strength).fold(0.0, f64::max)
}

/// Quartile labels for one molecule set. `values[k] = (canonical index, D)`;
/// `D == 0` gives Q0, the rest are ranked ascending by `(D, index)` and cut
/// into four near-equal groups, highest quarter Q4.
pub fn quartile_groups_by_exposure(values: &[(usize, f64)]) -> Vec<SeverityGroup> {
    let mut ranked: Vec<usize> = (0..values.len()).filter(|&k| values[k].1 > 0.0).collect();
    ranked.sort_by(|&a, &b| values[a].1.total_cmp(&values[b].1).then(values[a].0.cmp(&values[b].0)));
    let n = ranked.len();
    let mut groups = vec![SeverityGroup::Q0; values.len()];
    for (rank, &k) in ranked.iter().enumerate() {
        groups[k] = SeverityGroup::from_quartile(((4 * rank / n) + 1).min(4) as u8);
    }
    groups
}

/// Severity for every molecule of a split dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SeverityTable {
    pub records: Vec<SeverityRecord>,
    /// Mean top-M strength before normalization, per molecule.
    pub raw_strength: Vec<f64>,
    /// Gaps collected from training molecules' neighbor lists.
    pub train_gaps: Vec<f64>,
    pub q_norm: Option<f64>,
}

/// Scores every molecule against the training molecules of `labels`.
///
/// When no training neighbor pair has a nonzero gap, every score is 0 and
/// `q_norm` is `None`.
pub fn compute_severity(
    fps: &[Fingerprint],
    targets: &[f64],
    labels: &[Split],
    config: &SeverityConfig,
) -> Result<SeverityTable, SeverityError> {
    config.validate()?;
    let train: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Split::Train).collect();
    let reference = TrainReference::new(fps, targets, train)?;
    let all: Vec<usize> = (0..labels.len()).collect();
    let neighbors = reference.collect_many(fps, &all, config.tau, config.k)?;

    let train_gaps: Vec<f64> = reference
        .train_indices()
        .iter()
        .flat_map(|&i| neighbors[i].iter().map(|n| n.dy))
        .collect();
    let q_norm = if train_gaps.iter().any(|&g| g > 0.0) {
        Some(compute_q_norm(&train_gaps, config.norm_percentile)?)
    } else {
        None
    };

    let raw_strength: Vec<f64> = neighbors.iter().map(|n| mean_top_strength(n, config.m)).collect();
    let exposure: Vec<f64> = neighbors.iter().map(|n| train_exposure_score(n)).collect();

    let mut groups = vec![SeverityGroup::Q0; labels.len()];
    for split in [Split::Train, Split::Val, Split::Test] {
        let members: Vec<(usize, f64)> = (0..labels.len())
            .filter(|&i| labels[i] == split)
            .map(|i| (i, exposure[i]))
            .collect();
        for ((i, _), g) in members.iter().zip(quartile_groups_by_exposure(&members)) {
            groups[*i] = g;
        }
    }

    let records = (0..labels.len())
        .map(|i| SeverityRecord {
            score: q_norm.map_or(0.0, |q| raw_strength[i] / q),
            exposure: exposure[i],
            group: groups[i],
            neighbor_count: neighbors[i].len(),
            edge_group: None,
        })
        .collect();
    Ok(SeverityTable {
        records,
        raw_strength,
        train_gaps,
        q_norm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QAlphaRow {
    pub alpha: f64,
    pub q_alpha: f64,
    /// `q_base / q_alpha`: the global factor applied to every score.
    pub scale_factor: f64,
    pub mean_score: f64,
    pub spearman: f64,
    pub top_decile_overlap: f64,
}

fn top_decile(scores: &[f64]) -> Vec<usize> {
    let k = (scores.len() as f64 * 0.1).ceil() as usize;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Re-normalizes the raw strengths at each swept percentile and compares the
/// resulting ranking with the one at `base_alpha`.
pub fn q_alpha_sensitivity(
    raw_strength: &[f64],
    gaps: &[f64],
    base_alpha: f64,
    sweep: &[f64],
) -> Result<Vec<QAlphaRow>, SeverityError> {
    let q_base = compute_q_norm(gaps, base_alpha)?;
    let base: Vec<f64> = raw_strength.iter().map(|r| r / q_base).collect();
    let base_top = top_decile(&base);
    sweep
        .iter()
        .map(|&alpha| {
            let q_alpha = compute_q_norm(gaps, alpha)?;
            let scores: Vec<f64> = raw_strength.iter().map(|r| r / q_alpha).collect();
            let top = top_decile(&scores);
            let shared = top.iter().filter(|i| base_top.binary_search(i).is_ok()).count();
            Ok(QAlphaRow {
                alpha,
                q_alpha,
                scale_factor: q_base / q_alpha,
                mean_score: stats::mean(&scores).unwrap_or(0.0),
                spearman: stats::spearman(&base, &scores).unwrap_or(f64::NAN),
                top_decile_overlap: if base_top.is_empty() {
                    1.0
                } else {
                    shared as f64 / base_top.len() as f64
                },
            })
        })
        .collect()
}
