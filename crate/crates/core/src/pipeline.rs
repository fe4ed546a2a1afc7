//! End-to-end stages: split construction, training from an artifact,
//! evaluation and model-free split diagnostics.

use std::collections::{BTreeMap, HashMap};

use crate::cliffgraph::{
    assemble_split, assign_pair_quartiles, degree_capped_select, induce_molecule_severity, CliffEdge, CliffGraph,
    Split, SplitAssignment,
};
use crate::config::RunConfig;
use crate::dataio::{
    artifact_coverage, check_artifact_matches, ArtifactEdge, ArtifactMeta, Dataset, SplitArtifact, SplitCounts,
};
use crate::diagnostics::{
    evaluate, nearest_train_similarity, quartile_table, shift_row, EvalInput, EvalReport, ShiftRow, SplitReport,
};
use crate::fingerprint::Fingerprint;
use crate::pairgen::{generate_pairs, rank_percentile, score_pairs, threshold_raw_cliffs, CandidatePair};
use crate::severity::{compute_severity, SeverityGroup, SeverityTable};
use crate::trainer::{train, EpochRecord, LinearPredictor, TrainData, TrainError};
use crate::Error;

/// Everything produced while building a split.
pub struct SplitRun {
    /// The input dataset in canonical (id-sorted) order.
    pub dataset: Dataset,
    pub fingerprints: Vec<Fingerprint>,
    pub pairs: Vec<CandidatePair>,
    pub n_raw_cliff_edges: usize,
    pub tau_c: Option<f64>,
    pub graph: CliffGraph,
    pub assignment: SplitAssignment,
    pub severity: SeverityTable,
    pub artifact: SplitArtifact,
}

/// Fingerprints → candidate pairs → cliff graph → split → severity.
pub fn build_split(dataset: &Dataset, config: &RunConfig) -> Result<SplitRun, Error> {
    config.validate()?;
    let dataset = dataset.canonical();
    let fps = dataset.fingerprints(config.fingerprint.radius, config.fingerprint.width)?;
    let targets = dataset.targets();
    let mut pairs = generate_pairs(&fps, &targets, &config.pairs)?;
    rank_percentile(&mut pairs);
    score_pairs(&mut pairs, config.pairs.alpha, config.pairs.beta);
    let raw = threshold_raw_cliffs(&pairs, config.pairs.tau_c_quantile);
    let kept = degree_capped_select(&raw.edges, config.degree_cap)?;
    let mut edges: Vec<CliffEdge> = kept.iter().map(CliffEdge::from).collect();
    assign_pair_quartiles(&mut edges);
    let graph = CliffGraph::new(dataset.len(), edges);
    let assignment = assemble_split(&graph, &config.fractions, config.seed)?;
    let mut severity = compute_severity(&fps, &targets, &assignment.labels, &config.severity)?;
    for (rec, g) in severity
        .records
        .iter_mut()
        .zip(induce_molecule_severity(&assignment.labels, graph.edges()))
    {
        rec.edge_group = g;
    }

    let ids = dataset.ids();
    let assignment_map: BTreeMap<String, Split> = ids
        .iter()
        .zip(&assignment.labels)
        .map(|(id, &l)| (id.to_string(), l))
        .collect();
    let cliff_edges: Vec<ArtifactEdge> = graph
        .edges()
        .iter()
        .map(|e| ArtifactEdge {
            i: ids[e.i].to_string(),
            j: ids[e.j].to_string(),
            similarity: e.similarity,
            dy: e.dy,
            score: e.score,
            quartile: e.quartile,
        })
        .collect();
    let artifact = SplitArtifact {
        meta: ArtifactMeta {
            config: config.clone(),
            seed: config.seed,
            coverage: artifact_coverage(&assignment_map, &cliff_edges),
            counts: SplitCounts::from_labels(&assignment.labels),
            n_candidate_pairs: pairs.len(),
            n_raw_cliff_edges: raw.edges.len(),
            tau_c: raw.tau_c,
            q_norm: severity.q_norm,
        },
        assignment: assignment_map,
        cliff_edges,
        severity: ids
            .iter()
            .zip(&severity.records)
            .map(|(id, r)| (id.to_string(), r.clone()))
            .collect(),
    };
    artifact.validate()?;
    Ok(SplitRun {
        fingerprints: fps,
        pairs,
        n_raw_cliff_edges: raw.edges.len(),
        tau_c: raw.tau_c,
        graph,
        assignment,
        severity,
        artifact,
        dataset,
    })
}

/// Dataset in canonical order with per-molecule labels and severity taken
/// from an artifact.
pub struct AlignedSplit {
    pub dataset: Dataset,
    pub fingerprints: Vec<Fingerprint>,
    pub targets: Vec<f64>,
    pub labels: Vec<Split>,
    pub scores: Vec<f64>,
    pub groups: Vec<SeverityGroup>,
    /// Molecules without a severity entry in the artifact.
    pub missing_severity: usize,
}

impl AlignedSplit {
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == split).collect()
    }

    fn values(&self, split: Split) -> Vec<f64> {
        self.indices(split).iter().map(|&i| self.targets[i]).collect()
    }

    fn fps(&self, split: Split) -> Vec<&Fingerprint> {
        self.indices(split).iter().map(|&i| &self.fingerprints[i]).collect()
    }

    pub fn shift_rows(&self) -> Vec<ShiftRow> {
        let (tr, va, te) = (self.values(Split::Train), self.values(Split::Val), self.values(Split::Test));
        vec![
            shift_row("train", "test", &tr, &te),
            shift_row("train", "val", &tr, &va),
            shift_row("val", "test", &va, &te),
        ]
    }
}

pub fn align(dataset: &Dataset, artifact: &SplitArtifact) -> Result<AlignedSplit, Error> {
    check_artifact_matches(dataset, artifact)?;
    let dataset = dataset.canonical();
    let config = &artifact.meta.config;
    let fingerprints = dataset.fingerprints(config.fingerprint.radius, config.fingerprint.width)?;
    let ids = dataset.ids();
    let labels: Vec<Split> = ids.iter().map(|id| artifact.assignment[*id]).collect();
    let mut missing_severity = 0;
    let (scores, groups) = ids
        .iter()
        .map(|id| match artifact.severity.get(*id) {
            Some(r) => (r.score, r.group),
            None => {
                missing_severity += 1;
                (0.0, SeverityGroup::Q0)
            }
        })
        .unzip();
    Ok(AlignedSplit {
        targets: dataset.targets(),
        fingerprints,
        labels,
        scores,
        groups,
        missing_severity,
        dataset,
    })
}

/// Trains the built-in linear predictor on an artifact's split.
pub fn train_linear(
    dataset: &Dataset,
    artifact: &SplitArtifact,
    config: &RunConfig,
) -> Result<(LinearPredictor, Vec<EpochRecord>), Error> {
    config.validate()?;
    let aligned = align(dataset, artifact)?;
    let data = TrainData {
        fps: &aligned.fingerprints,
        targets: &aligned.targets,
        labels: &aligned.labels,
        scores: &aligned.scores,
        groups: &aligned.groups,
    };
    let width = aligned.fingerprints.first().map_or(config.fingerprint.width, Fingerprint::width);
    let mut model = LinearPredictor::new(width);
    let trace = train(&mut model, &data, &config.training, &config.controller, config.seed)?;
    Ok((model, trace))
}

/// Full evaluation report on the test split. `predictions` maps id to value
/// and must cover every test molecule.
pub fn evaluate_split(
    dataset: &Dataset,
    artifact: &SplitArtifact,
    predictions: &HashMap<String, f64>,
) -> Result<EvalReport, Error> {
    let aligned = align(dataset, artifact)?;
    if aligned.missing_severity > 0 {
        log::warn!(
            "{} molecules lack severity entries; they are reported as Q0",
            aligned.missing_severity
        );
    }
    let test = aligned.indices(Split::Test);
    let ids = aligned.dataset.ids();
    let preds: Vec<f64> = test
        .iter()
        .map(|&i| {
            predictions
                .get(ids[i])
                .copied()
                .ok_or_else(|| Error::Config(format!("no prediction for test molecule {:?}", ids[i])))
        })
        .collect::<Result<_, _>>()?;
    let pick = |v: &[f64]| test.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let targets = pick(&aligned.targets);
    let scores = pick(&aligned.scores);
    let groups: Vec<SeverityGroup> = test.iter().map(|&i| aligned.groups[i]).collect();
    let fps = aligned.fps(Split::Test);
    let train_fps = aligned.fps(Split::Train);
    let report = evaluate(&EvalInput {
        fps: &fps,
        preds: &preds,
        targets: &targets,
        groups: &groups,
        scores: &scores,
        train_fps: &train_fps,
        pair_tau: artifact.meta.config.pairs.tau,
        shift: aligned.shift_rows(),
    })?;
    Ok(report)
}

pub fn predict_all(model: &LinearPredictor, dataset: &Dataset, artifact: &SplitArtifact) -> Result<HashMap<String, f64>, Error> {
    let aligned = align(dataset, artifact)?;
    if let Some(fp) = aligned.fingerprints.iter().find(|fp| fp.width() != model.width) {
        return Err(TrainError::Model(format!(
            "model expects {}-bit fingerprints, dataset has {}-bit",
            model.width,
            fp.width()
        ))
        .into());
    }
    Ok(aligned
        .dataset
        .ids()
        .iter()
        .zip(&aligned.fingerprints)
        .map(|(id, fp)| (id.to_string(), model.predict_one(fp)))
        .collect())
}

/// Partition statistics and model-free shift checks for an artifact.
pub fn split_report(dataset: &Dataset, artifact: &SplitArtifact) -> Result<SplitReport, Error> {
    let aligned = align(dataset, artifact)?;
    let counts = artifact.meta.counts;
    let test_test_edges = artifact
        .cliff_edges
        .iter()
        .filter(|e| artifact.assignment[&e.i] == Split::Test && artifact.assignment[&e.j] == Split::Test)
        .count();
    let mut nodes: Vec<&str> = artifact
        .cliff_edges
        .iter()
        .flat_map(|e| [e.i.as_str(), e.j.as_str()])
        .collect();
    nodes.sort_unstable();
    nodes.dedup();
    let train_fps = aligned.fps(Split::Train);
    let nearest = if train_fps.is_empty() {
        None
    } else {
        nearest_train_similarity(&aligned.fps(Split::Test), &train_fps)?
    };
    Ok(SplitReport {
        counts: [("train", counts.train), ("val", counts.val), ("test", counts.test)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        coverage: artifact_coverage(&artifact.assignment, &artifact.cliff_edges),
        test_test_edges,
        graph_nodes: nodes.len(),
        graph_edges: artifact.cliff_edges.len(),
        quartiles: quartile_table(
            artifact
                .cliff_edges
                .iter()
                .map(|e| (e.quartile, e.dy, e.similarity, e.score)),
        ),
        shift: aligned.shift_rows(),
        nearest_train_similarity: nearest,
    })
}

/// Plain-text partition summary in the layout of a benchmark statistics
/// table.
pub fn format_summary(report: &SplitReport, meta: &ArtifactMeta) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.4}"));
    let mut out = String::new();
    out.push_str("train\tval\ttest\tcoverage_pct\ttest_test_edges\tgraph_nodes\tgraph_edges\n");
    out.push_str(&format!(
        "{}\t{}\t{}\t{:.2}\t{}\t{}\t{}\n",
        report.counts["train"],
        report.counts["val"],
        report.counts["test"],
        100.0 * report.coverage,
        report.test_test_edges,
        report.graph_nodes,
        report.graph_edges
    ));
    out.push_str("quartile\tedges\tmean_dy\tmean_s\tmean_c\n");
    for row in &report.quartiles {
        out.push_str(&format!(
            "Q{}\t{}\t{}\t{}\t{}\n",
            row.quartile,
            row.n_edges,
            opt(row.mean_dy),
            opt(row.mean_similarity),
            opt(row.mean_score)
        ));
    }
    out.push_str(&format!(
        "candidate_pairs\t{}\nraw_cliff_edges\t{}\ntau_c\t{}\nq_norm\t{}\n",
        meta.n_candidate_pairs,
        meta.n_raw_cliff_edges,
        opt(meta.tau_c),
        opt(meta.q_norm)
    ));
    out
}
