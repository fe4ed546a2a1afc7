//! Dataset ingestion and split-artifact persistence.
//!
//! Input files are CSV or TSV with a header naming `id`, `target` and at least
//! one of `structure` (alias `smiles`) / `fingerprint`. Fingerprints are hex,
//! most-significant nibble first (see [`Fingerprint::from_hex`]).
//!
//! Split artifacts are pretty-printed JSON with four sections (`meta`,
//! `assignment`, `cliff_edges`, `severity`). Lists are written in sorted id
//! order so two writes of the same artifact are byte-identical, and reading
//! re-checks every artifact invariant.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cliffgraph::Split;
use crate::config::RunConfig;
use crate::fingerprint::{circular_fingerprint, parse_structure, Fingerprint};
use crate::severity::{SeverityGroup, SeverityRecord};

pub const ARTIFACT_FORMAT: &str = "cliffkit-split";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("line {line}: {message}")]
    Row { line: u64, message: String },
    #[error("duplicate id {id:?} (line {line})")]
    DuplicateId { id: String, line: u64 },
    #[error("molecule {id:?}: {message}")]
    Molecule { id: String, message: String },
    #[error("corrupt artifact: {invariant}")]
    CorruptArtifact { invariant: String },
    #[error("hard constraint violated: cliff edge {i:?}-{j:?} has both endpoints in test")]
    TestTestEdge { i: String, j: String },
    #[error("artifact does not match dataset: {0}")]
    IdMismatch(String),
}

impl From<csv::Error> for DataError {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map_or(0, |p| p.line());
        match err.into_kind() {
            csv::ErrorKind::Io(io) => DataError::Io(io),
            other => DataError::Row {
                line,
                message: format!("{other:?}"),
            },
        }
    }
}

fn corrupt(invariant: impl Into<String>) -> DataError {
    DataError::CorruptArtifact {
        invariant: invariant.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Tsv,
}

impl TableFormat {
    fn delimiter(self) -> u8 {
        match self {
            TableFormat::Csv => b',',
            TableFormat::Tsv => b'\t',
        }
    }

    /// `.tsv` / `.tab` map to TSV, everything else to CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("tsv") | Some("tab") => TableFormat::Tsv,
            _ => TableFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoleculeRecord {
    pub id: String,
    pub structure: Option<String>,
    pub fingerprint: Option<Fingerprint>,
    pub target: f64,
}

/// A validated, ordered list of molecules.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    records: Vec<MoleculeRecord>,
}

impl Dataset {
    /// Validates id uniqueness, finite targets, presence of a structure or
    /// fingerprint, and a uniform fingerprint width.
    pub fn new(records: Vec<MoleculeRecord>) -> Result<Self, DataError> {
        let mut seen = HashSet::new();
        let mut width = None;
        for (row, rec) in records.iter().enumerate() {
            let line = row as u64 + 2;
            if let Some(message) = record_problem(rec, &mut width) {
                return Err(DataError::Row { line, message });
            }
            if !seen.insert(rec.id.as_str()) {
                return Err(DataError::DuplicateId {
                    id: rec.id.clone(),
                    line,
                });
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[MoleculeRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.target).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.records.iter().map(|r| r.id.as_str()).collect()
    }

    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.as_str(), i))
            .collect()
    }

    /// Copy with records sorted by id, the canonical molecule order used by
    /// every pipeline stage (so results do not depend on input row order).
    pub fn canonical(&self) -> Dataset {
        let mut records = self.records.clone();
        records.sort_by(|a, b| a.id.cmp(&b.id));
        Dataset { records }
    }

    /// Fingerprints for every record: precomputed ones are used as-is,
    /// others are generated from the structure text.
    pub fn fingerprints(&self, radius: usize, width: usize) -> Result<Vec<Fingerprint>, DataError> {
        let fps: Vec<Fingerprint> = self
            .records
            .par_iter()
            .map(|rec| match (&rec.fingerprint, &rec.structure) {
                (Some(fp), _) => Ok(fp.clone()),
                (None, Some(text)) => parse_structure(text)
                    .and_then(|g| circular_fingerprint(&g, radius, width))
                    .map_err(|e| DataError::Molecule {
                        id: rec.id.clone(),
                        message: e.to_string(),
                    }),
                (None, None) => Err(DataError::Molecule {
                    id: rec.id.clone(),
                    message: "no structure or fingerprint".into(),
                }),
            })
            .collect::<Result<_, _>>()?;
        if let Some(first) = fps.first() {
            if let Some((rec, fp)) = self
                .records
                .iter()
                .zip(&fps)
                .find(|(_, fp)| fp.width() != first.width())
            {
                return Err(DataError::Molecule {
                    id: rec.id.clone(),
                    message: format!("fingerprint width {} differs from {}", fp.width(), first.width()),
                });
            }
        }
        Ok(fps)
    }
}

fn record_problem(rec: &MoleculeRecord, width: &mut Option<usize>) -> Option<String> {
    if rec.id.is_empty() {
        return Some("empty id".into());
    }
    if !rec.target.is_finite() {
        return Some(format!("non-finite target {}", rec.target));
    }
    if rec.structure.is_none() && rec.fingerprint.is_none() {
        return Some("neither structure nor fingerprint given".into());
    }
    if let Some(fp) = &rec.fingerprint {
        match *width {
            Some(w) if w != fp.width() => {
                return Some(format!("fingerprint width {} differs from {}", fp.width(), w))
            }
            None => *width = Some(fp.width()),
            _ => {}
        }
    }
    None
}

/// Result of a lenient load: every input row is either a record or an error.
#[derive(Debug)]
pub struct LoadOutcome {
    pub dataset: Dataset,
    pub errors: Vec<DataError>,
    pub rows_read: usize,
}

struct Columns {
    id: usize,
    target: usize,
    structure: Option<usize>,
    fingerprint: Option<usize>,
}

fn find_columns(headers: &csv::StringRecord) -> Result<Columns, DataError> {
    let find = |names: &[&str]| {
        headers
            .iter()
            .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
    };
    let id = find(&["id"]).ok_or_else(|| DataError::Schema("missing column 'id'".into()))?;
    let target = find(&["target"]).ok_or_else(|| DataError::Schema("missing column 'target'".into()))?;
    let structure = find(&["structure", "smiles"]);
    let fingerprint = find(&["fingerprint"]);
    if structure.is_none() && fingerprint.is_none() {
        return Err(DataError::Schema(
            "need a 'structure' or 'fingerprint' column".into(),
        ));
    }
    Ok(Columns {
        id,
        target,
        structure,
        fingerprint,
    })
}

fn parse_row(row: &csv::StringRecord, cols: &Columns) -> Result<MoleculeRecord, String> {
    let cell = |i: usize| row.get(i).map(str::trim).unwrap_or("");
    let optional = |i: Option<usize>| i.map(cell).filter(|s| !s.is_empty());
    let id = cell(cols.id).to_string();
    let target_text = cell(cols.target);
    let target: f64 = target_text
        .parse()
        .map_err(|_| format!("target {target_text:?} is not a number"))?;
    let fingerprint = optional(cols.fingerprint)
        .map(Fingerprint::from_hex)
        .transpose()
        .map_err(|e| e.to_string())?;
    Ok(MoleculeRecord {
        id,
        structure: optional(cols.structure).map(str::to_string),
        fingerprint,
        target,
    })
}

/// Loads a dataset, collecting per-row problems instead of failing on the
/// first one. Schema problems (missing header columns) are still fatal.
pub fn load_dataset_lenient<R: Read>(reader: R, format: TableFormat) -> Result<LoadOutcome, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = find_columns(&headers)?;
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    let mut width = None;
    let mut rows_read = 0;
    for row in rdr.records() {
        rows_read += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                errors.push(DataError::from(e));
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        let rec = match parse_row(&row, &cols) {
            Ok(r) => r,
            Err(message) => {
                errors.push(DataError::Row { line, message });
                continue;
            }
        };
        if let Some(message) = record_problem(&rec, &mut width) {
            errors.push(DataError::Row { line, message });
            continue;
        }
        if !seen.insert(rec.id.clone()) {
            errors.push(DataError::DuplicateId { id: rec.id, line });
            continue;
        }
        records.push(rec);
    }
    Ok(LoadOutcome {
        dataset: Dataset { records },
        errors,
        rows_read,
    })
}

/// Strict load: the first row problem is returned as the error.
pub fn load_dataset(path: &Path, format: TableFormat) -> Result<Dataset, DataError> {
    let outcome = load_dataset_lenient(File::open(path)?, format)?;
    match outcome.errors.into_iter().next() {
        Some(err) => Err(err),
        None => Ok(outcome.dataset),
    }
}

pub fn write_dataset<W: Write>(dataset: &Dataset, writer: W, format: TableFormat) -> Result<(), DataError> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(format.delimiter())
        .from_writer(writer);
    wtr.write_record(["id", "structure", "fingerprint", "target"])?;
    for rec in &dataset.records {
        let fp = rec.fingerprint.as_ref().map(Fingerprint::to_hex).unwrap_or_default();
        wtr.write_record([
            rec.id.as_str(),
            rec.structure.as_deref().unwrap_or(""),
            fp.as_str(),
            rec.target.to_string().as_str(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: &Path, format: TableFormat) -> Result<(), DataError> {
    write_dataset(dataset, BufWriter::new(File::create(path)?), format)
}

/// Reads `id,prediction` rows (CSV or TSV by `format`).
pub fn read_predictions<R: Read>(reader: R, format: TableFormat) -> Result<HashMap<String, f64>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter())
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let (Some(id_col), Some(p_col)) = (find("id"), find("prediction")) else {
        return Err(DataError::Schema("predictions need 'id' and 'prediction' columns".into()));
    };
    let mut out = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let id = row.get(id_col).unwrap_or("").trim().to_string();
        let text = row.get(p_col).unwrap_or("").trim();
        let value: f64 = text.parse().map_err(|_| DataError::Row {
            line,
            message: format!("prediction {text:?} is not a number"),
        })?;
        if !value.is_finite() {
            return Err(DataError::Row {
                line,
                message: format!("non-finite prediction {value}"),
            });
        }
        if out.insert(id.clone(), value).is_some() {
            return Err(DataError::DuplicateId { id, line });
        }
    }
    Ok(out)
}

/// Writes `id,prediction` rows sorted by id.
pub fn write_predictions<W: Write>(predictions: &HashMap<String, f64>, writer: W) -> Result<(), DataError> {
    let mut ids: Vec<&String> = predictions.keys().collect();
    ids.sort();
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["id", "prediction"])?;
    for id in ids {
        wtr.write_record([id.as_str(), &predictions[id].to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Split artifact

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEdge {
    pub i: String,
    pub j: String,
    pub similarity: f64,
    pub dy: f64,
    pub score: f64,
    pub quartile: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a Split>) -> Self {
        let mut c = SplitCounts::default();
        for label in labels {
            match label {
                Split::Train => c.train += 1,
                Split::Val => c.val += 1,
                Split::Test => c.test += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub config: RunConfig,
    pub seed: u64,
    pub coverage: f64,
    pub counts: SplitCounts,
    pub n_candidate_pairs: usize,
    pub n_raw_cliff_edges: usize,
    /// Score threshold for raw cliff candidates; `None` when no pairs existed.
    pub tau_c: Option<f64>,
    /// Severity normalization constant; `None` when no training pair had a
    /// nonzero property gap.
    pub q_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitArtifact {
    pub assignment: BTreeMap<String, Split>,
    pub cliff_edges: Vec<ArtifactEdge>,
    pub severity: BTreeMap<String, SeverityRecord>,
    pub meta: ArtifactMeta,
}

#[derive(Serialize, Deserialize)]
struct AssignmentEntry {
    id: String,
    split: Split,
}

#[derive(Serialize, Deserialize)]
struct SeverityEntry {
    id: String,
    #[serde(flatten)]
    record: SeverityRecord,
}

#[derive(Serialize, Deserialize)]
struct ArtifactFile {
    format: String,
    version: u32,
    meta: ArtifactMeta,
    assignment: Vec<AssignmentEntry>,
    cliff_edges: Vec<ArtifactEdge>,
    severity: Vec<SeverityEntry>,
}

/// Crossing train–test edges over all edges; 0 for an empty edge list.
pub fn artifact_coverage(assignment: &BTreeMap<String, Split>, edges: &[ArtifactEdge]) -> f64 {
    if edges.is_empty() {
        return 0.0;
    }
    let crossing = edges
        .iter()
        .filter(|e| {
            matches!(
                (assignment.get(&e.i), assignment.get(&e.j)),
                (Some(Split::Train), Some(Split::Test)) | (Some(Split::Test), Some(Split::Train))
            )
        })
        .count();
    crossing as f64 / edges.len() as f64
}

impl SplitArtifact {
    /// Checks every artifact invariant, naming the first one that fails.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut seen_edges = HashSet::new();
        for e in &self.cliff_edges {
            let (li, lj) = match (self.assignment.get(&e.i), self.assignment.get(&e.j)) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(corrupt(format!("edge {}-{} has an unassigned endpoint", e.i, e.j))),
            };
            if *li == Split::Test && *lj == Split::Test {
                return Err(DataError::TestTestEdge {
                    i: e.i.clone(),
                    j: e.j.clone(),
                });
            }
            if e.i == e.j {
                return Err(corrupt(format!("self edge on {}", e.i)));
            }
            let key = if e.i < e.j { (&e.i, &e.j) } else { (&e.j, &e.i) };
            if !seen_edges.insert(key) {
                return Err(corrupt(format!("duplicate edge {}-{}", e.i, e.j)));
            }
            if !(1..=4).contains(&e.quartile) {
                return Err(corrupt(format!("edge {}-{} has quartile {}", e.i, e.j, e.quartile)));
            }
            if !(e.score.is_finite() && e.similarity.is_finite() && e.dy.is_finite()) {
                return Err(corrupt(format!("edge {}-{} has non-finite values", e.i, e.j)));
            }
        }
        let counts = SplitCounts::from_labels(self.assignment.values());
        if counts != self.meta.counts {
            return Err(corrupt(format!(
                "meta counts {:?} differ from assignment counts {:?}",
                self.meta.counts, counts
            )));
        }
        let coverage = artifact_coverage(&self.assignment, &self.cliff_edges);
        if coverage.to_bits() != self.meta.coverage.to_bits() {
            return Err(corrupt(format!(
                "meta coverage {} differs from recomputed {}",
                self.meta.coverage, coverage
            )));
        }
        for (id, rec) in &self.severity {
            let Some(label) = self.assignment.get(id) else {
                return Err(corrupt(format!("severity entry {id:?} is not in the assignment")));
            };
            if !(rec.score >= 0.0 && rec.exposure >= 0.0) {
                return Err(corrupt(format!("severity of {id:?} is negative or NaN")));
            }
            if rec.neighbor_count == 0 && rec.group != SeverityGroup::Q0 {
                return Err(corrupt(format!("{id:?} has no neighbors but group {:?}", rec.group)));
            }
            if rec.edge_group.is_some() && *label != Split::Test {
                return Err(corrupt(format!("{id:?} carries an edge-induced group but is not test")));
            }
        }
        Ok(())
    }
}

pub fn write_split_artifact<W: Write>(artifact: &SplitArtifact, mut writer: W) -> Result<(), DataError> {
    artifact.validate()?;
    let file = ArtifactFile {
        format: ARTIFACT_FORMAT.into(),
        version: ARTIFACT_VERSION,
        meta: artifact.meta.clone(),
        assignment: artifact
            .assignment
            .iter()
            .map(|(id, &split)| AssignmentEntry { id: id.clone(), split })
            .collect(),
        cliff_edges: artifact.cliff_edges.clone(),
        severity: artifact
            .severity
            .iter()
            .map(|(id, rec)| SeverityEntry {
                id: id.clone(),
                record: rec.clone(),
            })
            .collect(),
    };
    serde_json::to_writer_pretty(&mut writer, &file).map_err(std::io::Error::from)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn read_split_artifact<R: Read>(reader: R) -> Result<SplitArtifact, DataError> {
    let file: ArtifactFile =
        serde_json::from_reader(reader).map_err(|e| corrupt(format!("unreadable container: {e}")))?;
    if file.format != ARTIFACT_FORMAT || file.version != ARTIFACT_VERSION {
        return Err(corrupt(format!(
            "unsupported format {:?} version {}",
            file.format, file.version
        )));
    }
    let mut assignment = BTreeMap::new();
    for entry in file.assignment {
        if assignment.insert(entry.id.clone(), entry.split).is_some() {
            return Err(corrupt(format!("id {:?} assigned twice", entry.id)));
        }
    }
    let mut severity = BTreeMap::new();
    for entry in file.severity {
        if severity.insert(entry.id.clone(), entry.record).is_some() {
            return Err(corrupt(format!("severity for {:?} listed twice", entry.id)));
        }
    }
    let artifact = SplitArtifact {
        assignment,
        cliff_edges: file.cliff_edges,
        severity,
        meta: file.meta,
    };
    artifact.validate()?;
    Ok(artifact)
}

pub fn save_split_artifact(artifact: &SplitArtifact, path: &Path) -> Result<(), DataError> {
    write_split_artifact(artifact, BufWriter::new(File::create(path)?))
}

pub fn load_split_artifact(path: &Path) -> Result<SplitArtifact, DataError> {
    read_split_artifact(std::io::BufReader::new(File::open(path)?))
}

/// Checks that the artifact assigns exactly the dataset's ids.
pub fn check_artifact_matches(dataset: &Dataset, artifact: &SplitArtifact) -> Result<(), DataError> {
    if dataset.len() != artifact.assignment.len() {
        return Err(DataError::IdMismatch(format!(
            "dataset has {} molecules, artifact assigns {}",
            dataset.len(),
            artifact.assignment.len()
        )));
    }
    if let Some(rec) = dataset
        .records()
        .iter()
        .find(|r| !artifact.assignment.contains_key(&r.id))
    {
        return Err(DataError::IdMismatch(format!("id {:?} is not assigned", rec.id)));
    }
    Ok(())
}
