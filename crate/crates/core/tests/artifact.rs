use std::io::Cursor;

use cliffkit::cliffgraph::Split;
use cliffkit::config::RunConfig;
use cliffkit::dataio::{
    load_dataset_lenient, read_split_artifact, write_dataset, write_split_artifact, DataError, SplitArtifact,
    TableFormat,
};
use cliffkit::pipeline::build_split;
use cliffkit::synth::{planted_cliff_dataset, SynthConfig};

fn artifact() -> SplitArtifact {
    let dataset = planted_cliff_dataset(&SynthConfig {
        n_molecules: 120,
        ..SynthConfig::default()
    })
    .unwrap();
    build_split(&dataset, &RunConfig::default()).unwrap().artifact
}

fn bytes(a: &SplitArtifact) -> Vec<u8> {
    let mut out = Vec::new();
    write_split_artifact(a, &mut out).unwrap();
    out
}

#[test]
fn round_trip_is_identity_and_bytes_are_stable() {
    let a = artifact();
    let first = bytes(&a);
    assert_eq!(first, bytes(&a));
    let back = read_split_artifact(Cursor::new(&first)).unwrap();
    assert_eq!(back, a);
    assert_eq!(bytes(&back), first);
}

#[test]
fn tampered_artifacts_are_rejected() {
    let a = artifact();
    assert!(!a.cliff_edges.is_empty());

    let mut test_test = a.clone();
    let e = &test_test.cliff_edges[0];
    let (i, j) = (e.i.clone(), e.j.clone());
    test_test.assignment.insert(i, Split::Test);
    test_test.assignment.insert(j, Split::Test);
    assert!(matches!(test_test.validate(), Err(DataError::TestTestEdge { .. })));

    let mut coverage = a.clone();
    coverage.meta.coverage += 0.01;
    assert!(coverage.validate().is_err());

    let mut counts = a.clone();
    counts.meta.counts.test += 1;
    assert!(counts.validate().is_err());

    let text = String::from_utf8(bytes(&a)).unwrap();
    let wrong_format = text.replacen("cliffkit-split", "other-split", 1);
    assert!(read_split_artifact(Cursor::new(wrong_format)).is_err());
    assert!(read_split_artifact(Cursor::new(&text[..text.len() / 2])).is_err());
}

#[test]
fn lenient_loader_accounts_for_every_row() {
    let dataset = planted_cliff_dataset(&SynthConfig {
        n_molecules: 30,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut csv = Vec::new();
    write_dataset(&dataset, &mut csv, TableFormat::Csv).unwrap();
    let mut text = String::from_utf8(csv).unwrap();
    let first_row = text.lines().nth(1).unwrap().to_string();
    text.push_str(&first_row);
    text.push('\n');
    text.push_str("bad1,CCO,,notanumber\n");
    text.push_str("bad2,,,1.0\n");
    let outcome = load_dataset_lenient(Cursor::new(text), TableFormat::Csv).unwrap();
    assert_eq!(outcome.rows_read, 33);
    assert_eq!(outcome.dataset.len() + outcome.errors.len(), outcome.rows_read);
    assert_eq!(outcome.dataset.len(), 30);
    assert_eq!(outcome.dataset, dataset);
}
