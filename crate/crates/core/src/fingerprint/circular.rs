//! Circular (Morgan-style) hashed fingerprints.
//!
//! Every atom starts from an invariant built from its element, charge,
//! aromatic flag, heavy-atom degree and explicit hydrogen count. Each
//! iteration folds the sorted `(bond order, neighbor identifier)` list into a
//! new identifier; the identifier of every atom at every radius `0..=radius`
//! sets one bit (`hash mod width`). Because neighbor lists are sorted by
//! identifier, atom numbering does not affect the result.

use super::{Fingerprint, FingerprintError, MolGraph};

pub const DEFAULT_RADIUS: usize = 2;
pub const DEFAULT_WIDTH: usize = 2048;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the little-endian bytes of each word; stable across platforms.
fn fnv1a(words: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    for w in words {
        for byte in w.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

fn element_code(symbol: &str) -> u64 {
    symbol
        .bytes()
        .fold(0u64, |acc, b| (acc << 8) | b as u64)
}

pub fn circular_fingerprint(
    graph: &MolGraph,
    radius: usize,
    width: usize,
) -> Result<Fingerprint, FingerprintError> {
    if width == 0 || !width.is_power_of_two() {
        return Err(FingerprintError::BadWidth(width));
    }
    if graph.atoms.is_empty() {
        return Err(FingerprintError::EmptyGraph);
    }
    let adj = graph.adjacency();
    let mut ids: Vec<u64> = graph
        .atoms
        .iter()
        .zip(&adj)
        .map(|(atom, nbrs)| {
            fnv1a(&[
                0,
                element_code(&atom.element),
                atom.charge as i64 as u64,
                atom.aromatic as u64,
                nbrs.len() as u64,
                atom.hcount.map_or(u64::MAX, u64::from),
            ])
        })
        .collect();

    let mut bits: Vec<usize> = ids.iter().map(|&h| (h % width as u64) as usize).collect();
    let mut env = Vec::new();
    for r in 1..=radius {
        let next: Vec<u64> = adj
            .iter()
            .enumerate()
            .map(|(i, nbrs)| {
                let mut pairs: Vec<(u64, u64)> = nbrs
                    .iter()
                    .map(|&(j, order)| (order.code() as u64, ids[j]))
                    .collect();
                pairs.sort_unstable();
                env.clear();
                env.push(r as u64);
                env.push(ids[i]);
                for (order, id) in pairs {
                    env.push(order);
                    env.push(id);
                }
                fnv1a(&env)
            })
            .collect();
        bits.extend(next.iter().map(|&h| (h % width as u64) as usize));
        ids = next;
    }
    Fingerprint::from_indices(width, bits)
}
