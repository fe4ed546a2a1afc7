//! Severity-conditioned error metrics, pair diagnostics and split-shift checks.
//!
//! Undefined quantities (empty groups, constant inputs, zero qualifying pairs)
//! are `None` and are written as `null` in JSON and `NA` in TSV, never as 0.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fingerprint::{Fingerprint, FingerprintError, SimilarityIndex};
use crate::severity::SeverityGroup;
use crate::stats;

pub const KDE_GRID_POINTS: usize = 512;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no training molecules to compare against")]
    EmptyTrain,
    #[error(transparent)]
    Fingerprint(#[from] FingerprintError),
}

/// Per-group MAE, indexed by [`SeverityGroup::index`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroupMae {
    pub mae: [Option<f64>; 5],
    pub count: [usize; 5],
}

impl GroupMae {
    pub fn get(&self, g: SeverityGroup) -> Option<f64> {
        self.mae[g.index()]
    }
}

pub fn quartile_mae(errors: &[f64], groups: &[SeverityGroup]) -> Result<GroupMae, DiagnosticsError> {
    if errors.len() != groups.len() {
        return Err(DiagnosticsError::Dimension(format!(
            "{} errors vs {} groups",
            errors.len(),
            groups.len()
        )));
    }
    let mut sums = [0.0; 5];
    let mut out = GroupMae::default();
    for (e, g) in errors.iter().zip(groups) {
        sums[g.index()] += e.abs();
        out.count[g.index()] += 1;
    }
    for ((mae, &count), sum) in out.mae.iter_mut().zip(&out.count).zip(sums) {
        if count > 0 {
            *mae = Some(sum / count as f64);
        }
    }
    Ok(out)
}

/// `ē₄ / ē₁`; `None` if either is undefined or `ē₁ == 0`.
pub fn severity_ratio(groups: &GroupMae) -> Option<f64> {
    match (groups.get(SeverityGroup::Q4), groups.get(SeverityGroup::Q1)) {
        (Some(q4), Some(q1)) if q1 > 0.0 => Some(q4 / q1),
        _ => None,
    }
}

/// Pearson correlation; `None` below 3 points or for constant input.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 3 {
        return None;
    }
    stats::pearson(x, y)
}

/// Spearman rank correlation with midranks; `None` below 3 points or for
/// constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 3 {
        return None;
    }
    stats::spearman(x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairDiagnostics {
    pub n_pairs: usize,
    pub pair_mae: Option<f64>,
    pub pair_err_over_mae: Option<f64>,
    pub pair_sign_agreement: Option<f64>,
}

/// Error of predicted differences over all τ-similar pairs of `fps`.
pub fn pair_diagnostics(
    fps: &[Fingerprint],
    preds: &[f64],
    targets: &[f64],
    tau: f64,
) -> Result<PairDiagnostics, DiagnosticsError> {
    if fps.len() != preds.len() || fps.len() != targets.len() {
        return Err(DiagnosticsError::Dimension(format!(
            "{} fingerprints, {} predictions, {} targets",
            fps.len(),
            preds.len(),
            targets.len()
        )));
    }
    let pairs = SimilarityIndex::new(fps.iter().collect())?.self_join(tau);
    let mut delta_err = 0.0;
    let mut signed = 0usize;
    let mut agree = 0usize;
    for &(i, j, _) in &pairs {
        let dp = preds[i] - preds[j];
        let dt = targets[i] - targets[j];
        delta_err += (dp - dt).abs();
        if dt != 0.0 {
            signed += 1;
            if dp.signum() == dt.signum() && dp != 0.0 {
                agree += 1;
            }
        }
    }
    let n = pairs.len();
    let pair_mae = (n > 0).then(|| delta_err / n as f64);
    let errors: Vec<f64> = preds.iter().zip(targets).map(|(p, y)| (p - y).abs()).collect();
    let mae = stats::mean(&errors);
    Ok(PairDiagnostics {
        n_pairs: n,
        pair_mae,
        pair_err_over_mae: match (pair_mae, mae) {
            (Some(p), Some(m)) if m > 0.0 => Some(p / m),
            _ => None,
        },
        pair_sign_agreement: (signed > 0).then(|| agree as f64 / signed as f64),
    })
}

/// Empirical quantile function evaluated at `k / (m - 1)`, `k = 0..m`.
fn quantile_grid(sorted: &[f64], m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![stats::quantile_sorted(sorted, 0.5).unwrap_or(0.0)];
    }
    (0..m)
        .map(|k| stats::quantile_sorted(sorted, k as f64 / (m - 1) as f64).unwrap_or(0.0))
        .collect()
}

/// Unnormalized 1-D Wasserstein-1 via matched quantiles on a common grid of
/// `max(|a|, |b|)` points. `None` if either sample is empty.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let m = a.len().max(b.len());
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(f64::total_cmp);
    sb.sort_by(f64::total_cmp);
    let qa = quantile_grid(&sa, m);
    let qb = quantile_grid(&sb, m);
    Some(qa.iter().zip(&qb).map(|(x, y)| (x - y).abs()).sum::<f64>() / m as f64)
}

/// W1 divided by the population standard deviation of the pooled sample.
pub fn wasserstein1_normalized(a: &[f64], b: &[f64]) -> Option<f64> {
    let w = wasserstein1(a, b)?;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let sigma = stats::std_dev(&pooled)?;
    (sigma > 0.0).then(|| w / sigma)
}

/// Silverman's rule `0.9 · min(σ, IQR/1.34) · n^(-1/5)`; falls back to σ
/// when the IQR is zero. `None` for fewer than 2 distinct values.
pub fn silverman_bandwidth(values: &[f64]) -> Option<f64> {
    let sigma = stats::std_dev(values)?;
    if values.len() < 2 || sigma <= 0.0 {
        return None;
    }
    let iqr = stats::quantile(values, 0.75)? - stats::quantile(values, 0.25)?;
    let spread = if iqr > 0.0 { sigma.min(iqr / 1.34) } else { sigma };
    Some(0.9 * spread * (values.len() as f64).powf(-0.2))
}

pub fn gaussian_kde(values: &[f64], bandwidth: f64, x: f64) -> f64 {
    let norm = 1.0 / (values.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    values
        .iter()
        .map(|v| {
            let z = (x - v) / bandwidth;
            (-0.5 * z * z).exp()
        })
        .sum::<f64>()
        * norm
}

/// Overlap coefficient `∫ min(f_a, f_b)` with Gaussian KDEs, integrated by
/// the trapezoid rule on `points` nodes spanning both samples ± 3 bandwidths.
pub fn kde_overlap_with_grid(a: &[f64], b: &[f64], points: usize) -> Option<f64> {
    let ha = silverman_bandwidth(a)?;
    let hb = silverman_bandwidth(b)?;
    let h = ha.max(hb);
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min) - 3.0 * h;
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max) + 3.0 * h;
    let step = (hi - lo) / (points - 1) as f64;
    let f: Vec<f64> = (0..points)
        .map(|k| {
            let x = lo + step * k as f64;
            gaussian_kde(a, ha, x).min(gaussian_kde(b, hb, x))
        })
        .collect();
    let integral = step * (f.iter().sum::<f64>() - 0.5 * (f[0] + f[points - 1]));
    Some(integral.clamp(0.0, 1.0))
}

pub fn kde_overlap(a: &[f64], b: &[f64]) -> Option<f64> {
    kde_overlap_with_grid(a, b, KDE_GRID_POINTS)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySummary {
    pub n: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub frac_above_half: f64,
}

/// Highest Tanimoto to any training fingerprint, per query.
pub fn nearest_train_similarities(
    queries: &[&Fingerprint],
    train: &[&Fingerprint],
) -> Result<Vec<f64>, DiagnosticsError> {
    if train.is_empty() {
        return Err(DiagnosticsError::EmptyTrain);
    }
    let index = SimilarityIndex::new(train.to_vec())?;
    queries
        .iter()
        .map(|q| Ok(index.max_similarity(q)?.unwrap_or(0.0)))
        .collect()
}

pub fn summarize_similarities(values: &[f64]) -> Option<SimilaritySummary> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(SimilaritySummary {
        n: values.len(),
        mean: stats::mean(values)?,
        q1: stats::quantile_sorted(&sorted, 0.25)?,
        median: stats::quantile_sorted(&sorted, 0.5)?,
        q3: stats::quantile_sorted(&sorted, 0.75)?,
        frac_above_half: values.iter().filter(|&&v| v > 0.5).count() as f64 / values.len() as f64,
    })
}

pub fn nearest_train_similarity(
    queries: &[&Fingerprint],
    train: &[&Fingerprint],
) -> Result<Option<SimilaritySummary>, DiagnosticsError> {
    Ok(summarize_similarities(&nearest_train_similarities(queries, train)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftRow {
    pub a: String,
    pub b: String,
    pub w1_over_sigma: Option<f64>,
    pub kde_overlap: Option<f64>,
}

pub fn shift_row(a: &str, b: &str, ya: &[f64], yb: &[f64]) -> ShiftRow {
    ShiftRow {
        a: a.into(),
        b: b.into(),
        w1_over_sigma: wasserstein1_normalized(ya, yb),
        kde_overlap: kde_overlap(ya, yb),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub n: usize,
    pub mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_test: usize,
    pub overall_mae: Option<f64>,
    pub group_mae: Vec<GroupRow>,
    pub severity_ratio: Option<f64>,
    pub pcc: Option<f64>,
    pub spearman_e_s: Option<f64>,
    pub pair_mae: Option<f64>,
    pub pair_err_over_mae: Option<f64>,
    pub pair_sign_agreement: Option<f64>,
    pub n_pairs: usize,
    pub shift: Vec<ShiftRow>,
    pub nearest_train_similarity: Option<SimilaritySummary>,
}

/// Inputs for one evaluated split, all aligned.
pub struct EvalInput<'a> {
    pub fps: &'a [&'a Fingerprint],
    pub preds: &'a [f64],
    pub targets: &'a [f64],
    pub groups: &'a [SeverityGroup],
    pub scores: &'a [f64],
    pub train_fps: &'a [&'a Fingerprint],
    pub pair_tau: f64,
    pub shift: Vec<ShiftRow>,
}

pub fn evaluate(input: &EvalInput<'_>) -> Result<EvalReport, DiagnosticsError> {
    let n = input.preds.len();
    if [input.fps.len(), input.targets.len(), input.groups.len(), input.scores.len()]
        .iter()
        .any(|&l| l != n)
    {
        return Err(DiagnosticsError::Dimension("evaluation inputs differ in length".into()));
    }
    let errors: Vec<f64> = input
        .preds
        .iter()
        .zip(input.targets)
        .map(|(p, y)| (p - y).abs())
        .collect();
    let groups = quartile_mae(&errors, input.groups)?;
    let owned: Vec<Fingerprint> = input.fps.iter().map(|f| (*f).clone()).collect();
    let pairs = pair_diagnostics(&owned, input.preds, input.targets, input.pair_tau)?;
    let nearest = if input.train_fps.is_empty() {
        None
    } else {
        nearest_train_similarity(input.fps, input.train_fps)?
    };
    Ok(EvalReport {
        n_test: n,
        overall_mae: stats::mean(&errors),
        group_mae: [
            SeverityGroup::Q0,
            SeverityGroup::Q1,
            SeverityGroup::Q2,
            SeverityGroup::Q3,
            SeverityGroup::Q4,
        ]
        .iter()
        .map(|&g| GroupRow {
            group: g.label().into(),
            n: groups.count[g.index()],
            mae: groups.get(g),
        })
        .collect(),
        severity_ratio: severity_ratio(&groups),
        pcc: pearson(input.preds, input.targets),
        spearman_e_s: spearman(&errors, input.scores),
        pair_mae: pairs.pair_mae,
        pair_err_over_mae: pairs.pair_err_over_mae,
        pair_sign_agreement: pairs.pair_sign_agreement,
        n_pairs: pairs.n_pairs,
        shift: input.shift.clone(),
        nearest_train_similarity: nearest,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileRow {
    pub quartile: u8,
    pub n_edges: usize,
    pub mean_dy: Option<f64>,
    pub mean_similarity: Option<f64>,
    pub mean_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub counts: BTreeMap<String, usize>,
    pub coverage: f64,
    pub test_test_edges: usize,
    pub graph_nodes: usize,
    pub graph_edges: usize,
    pub quartiles: Vec<QuartileRow>,
    pub shift: Vec<ShiftRow>,
    pub nearest_train_similarity: Option<SimilaritySummary>,
}

/// Per-quartile means over `(quartile, dy, similarity, score)` tuples.
pub fn quartile_table(edges: impl IntoIterator<Item = (u8, f64, f64, f64)>) -> Vec<QuartileRow> {
    let mut acc = [(0usize, 0.0, 0.0, 0.0); 4];
    for (q, dy, s, c) in edges {
        let slot = &mut acc[(q.clamp(1, 4) - 1) as usize];
        slot.0 += 1;
        slot.1 += dy;
        slot.2 += s;
        slot.3 += c;
    }
    acc.iter()
        .enumerate()
        .map(|(k, &(n, dy, s, c))| {
            let mean = |v: f64| (n > 0).then(|| v / n as f64);
            QuartileRow {
                quartile: k as u8 + 1,
                n_edges: n,
                mean_dy: mean(dy),
                mean_similarity: mean(s),
                mean_score: mean(c),
            }
        })
        .collect()
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize, W: Write>(value: &T, mut out: W) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, value).map_err(std::io::Error::from)?;
    out.write_all(b"\n")?;
    out.flush()
}

fn flatten(prefix: &str, value: &serde_json::Value, rows: &mut Vec<(String, String)>) {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, rows);
            }
        }
        Value::Array(items) => {
            for (k, v) in items.iter().enumerate() {
                let label = v
                    .get("group")
                    .and_then(Value::as_str)
                    .map(str::to_string)
                    .or_else(|| {
                        match (v.get("a").and_then(Value::as_str), v.get("b").and_then(Value::as_str)) {
                            (Some(a), Some(b)) => Some(format!("{a}_{b}")),
                            _ => v.get("quartile").map(|q| format!("Q{q}")),
                        }
                    })
                    .unwrap_or_else(|| k.to_string());
                flatten(&format!("{prefix}.{label}"), v, rows);
            }
        }
        Value::Null => rows.push((prefix.into(), "NA".into())),
        Value::String(s) => rows.push((prefix.into(), s.clone())),
        other => rows.push((prefix.into(), other.to_string())),
    }
}

/// Two-column `field\tvalue` table; nested fields use dotted names and
/// undefined values are `NA`.
pub fn write_tsv<T: Serialize, W: Write>(value: &T, mut out: W) -> std::io::Result<()> {
    let json = serde_json::to_value(value).map_err(std::io::Error::from)?;
    let mut rows = Vec::new();
    flatten("", &json, &mut rows);
    writeln!(out, "field\tvalue")?;
    for (k, v) in rows {
        writeln!(out, "{k}\t{v}")?;
    }
    out.flush()
}
