//! Degree-capped cliff graph and the cliff-exposed train/val/test split.
//!
//! The split never places both endpoints of a cliff edge in test. Within that
//! constraint each connected component chooses a test side that maximizes the
//! number of edges crossing into train: a full color class for bipartite
//! components, a locally optimized independent set otherwise.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pairgen::CandidatePair;
use crate::severity::SeverityGroup;

/// Local-search sweep budget for non-bipartite components.
pub const LOCAL_SEARCH_SWEEPS: usize = 20;
/// Randomized greedy restarts after the degree-ordered start.
pub const LOCAL_SEARCH_RESTARTS: usize = 16;

const STREAM_COMPONENT: u64 = 1 << 40;
const STREAM_TOP_UP: u64 = 2;
const STREAM_VALIDATION: u64 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("split fractions invalid: {0}")]
    BadFractions(String),
    #[error("degree cap must be at least 1")]
    BadDegreeCap,
    #[error("coverage is undefined for an empty edge list")]
    EmptyEdges,
    #[error("infeasible split: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<(), SplitError> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
            return Err(SplitError::BadFractions(format!("{parts:?} must all be positive")));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(SplitError::BadFractions(format!("{parts:?} sum to {sum}, not 1")));
        }
        Ok(())
    }

    /// `(val, test)` target counts for `n` molecules; train takes the rest.
    pub fn targets(&self, n: usize) -> (usize, usize) {
        let test = ((n as f64 * self.test).round() as usize).min(n);
        let val = ((n as f64 * self.val).round() as usize).min(n - test);
        (val, test)
    }
}

/// A retained cliff edge between canonical molecule indices `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CliffEdge {
    pub i: usize,
    pub j: usize,
    pub similarity: f64,
    pub dy: f64,
    pub score: f64,
    /// 1..=4 once assigned, 0 before.
    pub quartile: u8,
}

impl From<&CandidatePair> for CliffEdge {
    fn from(p: &CandidatePair) -> Self {
        Self {
            i: p.i,
            j: p.j,
            similarity: p.similarity,
            dy: p.dy,
            score: p.score,
            quartile: 0,
        }
    }
}

/// Greedy hub suppression: edges in descending score (ties by `(i, j)`) are
/// kept while both endpoints have degree below `cap`. Output sorted by `(i, j)`.
pub fn degree_capped_select(raw: &[CandidatePair], cap: usize) -> Result<Vec<CandidatePair>, SplitError> {
    if cap == 0 {
        return Err(SplitError::BadDegreeCap);
    }
    let mut order: Vec<&CandidatePair> = raw.iter().collect();
    order.sort_by(|a, b| b.score.total_cmp(&a.score).then((a.i, a.j).cmp(&(b.i, b.j))));
    let n = raw.iter().map(|p| p.j.max(p.i) + 1).max().unwrap_or(0);
    let mut degree = vec![0usize; n];
    let mut kept: Vec<CandidatePair> = Vec::new();
    for p in order {
        if degree[p.i] < cap && degree[p.j] < cap {
            degree[p.i] += 1;
            degree[p.j] += 1;
            kept.push(*p);
        }
    }
    kept.sort_by_key(|p| (p.i, p.j));
    Ok(kept)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliffGraph {
    n_molecules: usize,
    edges: Vec<CliffEdge>,
    /// Neighbor lists indexed by molecule, sorted ascending.
    adjacency: Vec<Vec<usize>>,
    nodes: Vec<usize>,
}

impl CliffGraph {
    pub fn new(n_molecules: usize, mut edges: Vec<CliffEdge>) -> Self {
        edges.sort_by_key(|e| (e.i, e.j));
        let mut adjacency = vec![Vec::new(); n_molecules];
        for e in &edges {
            adjacency[e.i].push(e.j);
            adjacency[e.j].push(e.i);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        let nodes = (0..n_molecules).filter(|&v| !adjacency[v].is_empty()).collect();
        Self {
            n_molecules,
            edges,
            adjacency,
            nodes,
        }
    }

    pub fn n_molecules(&self) -> usize {
        self.n_molecules
    }

    pub fn edges(&self) -> &[CliffEdge] {
        &self.edges
    }

    pub fn edges_mut(&mut self) -> &mut [CliffEdge] {
        &mut self.edges
    }

    /// Molecules with at least one edge, ascending.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Connected components over graph nodes, each sorted ascending, ordered by
/// smallest member.
pub fn connected_components(graph: &CliffGraph) -> Vec<Vec<usize>> {
    let mut seen = vec![false; graph.n_molecules()];
    let mut out = Vec::new();
    for &start in graph.nodes() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &u in graph.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    comp.push(u);
                    queue.push_back(u);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentPartition {
    /// Test-side molecules, ascending; an independent set.
    pub test: Vec<usize>,
    /// Edges with exactly one endpoint in `test`.
    pub crossing: usize,
}

/// Two-coloring from the smallest member; `None` if an odd cycle exists.
fn two_color(graph: &CliffGraph, component: &[usize]) -> Option<(Vec<usize>, Vec<usize>)> {
    let mut color: Vec<Option<bool>> = vec![None; graph.n_molecules()];
    let start = *component.first()?;
    color[start] = Some(false);
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        let cv = color[v].unwrap_or(false);
        for &u in graph.neighbors(v) {
            match color[u] {
                None => {
                    color[u] = Some(!cv);
                    queue.push_back(u);
                }
                Some(cu) if cu == cv => return None,
                Some(_) => {}
            }
        }
    }
    let (a, b): (Vec<usize>, Vec<usize>) = component.iter().partition(|&&v| color[v] == Some(false));
    Some((a, b))
}

fn by_degree_desc(graph: &CliffGraph, nodes: &mut [usize]) {
    nodes.sort_by(|&a, &b| graph.degree(b).cmp(&graph.degree(a)).then(a.cmp(&b)));
}

struct LocalSearch<'g> {
    graph: &'g CliffGraph,
    in_test: Vec<bool>,
    size: usize,
    budget: usize,
}

impl<'g> LocalSearch<'g> {
    fn new(graph: &'g CliffGraph, start: &[usize], budget: usize) -> Self {
        let mut in_test = vec![false; graph.n_molecules()];
        for &v in start {
            in_test[v] = true;
        }
        Self {
            graph,
            in_test,
            size: start.len(),
            budget,
        }
    }

    fn greedy_fill(&mut self, candidates: &[usize]) {
        for &v in candidates {
            if self.size >= self.budget {
                break;
            }
            if !self.in_test[v] && self.graph.neighbors(v).iter().all(|&u| !self.in_test[u]) {
                self.in_test[v] = true;
                self.size += 1;
            }
        }
    }

    /// Tries to move `v` into test, evicting its test neighbors, or swapping
    /// out the lowest-degree member when test is full. Applies the move only
    /// if the crossing count strictly increases.
    fn try_improve(&mut self, v: usize, members: &[usize]) -> bool {
        if self.in_test[v] || self.budget == 0 {
            return false;
        }
        let g = self.graph;
        let conflicts: Vec<usize> = g.neighbors(v).iter().copied().filter(|&u| self.in_test[u]).collect();
        let lost: usize = conflicts.iter().map(|&u| g.degree(u)).sum();
        let new_size = self.size - conflicts.len() + 1;
        if new_size <= self.budget {
            if g.degree(v) > lost {
                for u in conflicts {
                    self.in_test[u] = false;
                }
                self.in_test[v] = true;
                self.size = new_size;
                return true;
            }
            return false;
        }
        // full and conflict-free: swap with the weakest member
        let weakest = members
            .iter()
            .copied()
            .filter(|&w| self.in_test[w])
            .min_by(|&a, &b| g.degree(a).cmp(&g.degree(b)).then(a.cmp(&b)));
        match weakest {
            Some(w) if g.degree(v) > g.degree(w) => {
                self.in_test[w] = false;
                self.in_test[v] = true;
                true
            }
            _ => false,
        }
    }

    /// Replaces test member `w` by the neighbors it alone blocks, taken
    /// greedily by degree, if that raises the crossing count.
    fn try_expand(&mut self, w: usize) -> bool {
        if !self.in_test[w] {
            return false;
        }
        let g = self.graph;
        let mut freed: Vec<usize> = g
            .neighbors(w)
            .iter()
            .copied()
            .filter(|&u| g.neighbors(u).iter().all(|&x| x == w || !self.in_test[x]))
            .collect();
        by_degree_desc(g, &mut freed);
        let room = self.budget - self.size + 1;
        let mut picked: Vec<usize> = Vec::new();
        for u in freed {
            if picked.len() == room {
                break;
            }
            if picked.iter().all(|&p| !g.neighbors(u).contains(&p)) {
                picked.push(u);
            }
        }
        let gained: usize = picked.iter().map(|&u| g.degree(u)).sum();
        if picked.len() < 2 || gained <= g.degree(w) {
            return false;
        }
        self.in_test[w] = false;
        for &u in &picked {
            self.in_test[u] = true;
        }
        self.size += picked.len() - 1;
        true
    }

    fn run(&mut self, members: &[usize], rng: &mut ChaCha8Rng) {
        let mut order = members.to_vec();
        for _ in 0..LOCAL_SEARCH_SWEEPS {
            order.shuffle(rng);
            let mut improved = false;
            for &v in &order {
                improved |= self.try_improve(v, members);
            }
            for &v in &order {
                improved |= self.try_expand(v);
            }
            if !improved {
                break;
            }
        }
    }

    fn finish(self, members: &[usize]) -> ComponentPartition {
        let test: Vec<usize> = members.iter().copied().filter(|&v| self.in_test[v]).collect();
        let crossing = test.iter().map(|&v| self.graph.degree(v)).sum();
        ComponentPartition { test, crossing }
    }
}

fn component_rng(seed: u64, component: &[usize]) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_COMPONENT + component.first().copied().unwrap_or(0) as u64);
    rng
}

/// Chooses the test side of one connected component with at most
/// `test_budget` members. `component` must be sorted ascending.
pub fn partition_component(
    graph: &CliffGraph,
    component: &[usize],
    test_budget: usize,
    seed: u64,
) -> ComponentPartition {
    let budget = test_budget.min(component.len());
    if budget == 0 {
        return ComponentPartition {
            test: Vec::new(),
            crossing: 0,
        };
    }
    let mut rng = component_rng(seed, component);
    if let Some((a, b)) = two_color(graph, component) {
        // every edge crosses when a whole class is test; prefer the smaller
        // class, ties to the class holding the smallest member
        let mut classes = [a, b];
        if classes[1].len() < classes[0].len() {
            classes.swap(0, 1);
        }
        if let Some(class) = classes.iter().find(|c| c.len() <= budget) {
            return LocalSearch::new(graph, class, budget).finish(component);
        }
        let mut best: Option<ComponentPartition> = None;
        for class in &classes {
            let mut ranked = class.clone();
            by_degree_desc(graph, &mut ranked);
            ranked.truncate(budget);
            let mut search = LocalSearch::new(graph, &ranked, budget);
            search.run(component, &mut rng);
            let part = search.finish(component);
            if best.as_ref().is_none_or(|b| part.crossing > b.crossing) {
                best = Some(part);
            }
        }
        return best.expect("two classes");
    }
    let mut ranked = component.to_vec();
    by_degree_desc(graph, &mut ranked);
    let mut best: Option<ComponentPartition> = None;
    for restart in 0..=LOCAL_SEARCH_RESTARTS {
        if restart > 0 {
            ranked.shuffle(&mut rng);
        }
        let mut search = LocalSearch::new(graph, &[], budget);
        search.greedy_fill(&ranked);
        search.run(component, &mut rng);
        let part = search.finish(component);
        if best.as_ref().is_none_or(|b| part.crossing > b.crossing) {
            best = Some(part);
        }
    }
    best.expect("at least one start")
}

/// Crossing train–test edges over all edges.
pub fn coverage(labels: &[Split], edges: &[CliffEdge]) -> Result<f64, SplitError> {
    if edges.is_empty() {
        return Err(SplitError::EmptyEdges);
    }
    let crossing = edges
        .iter()
        .filter(|e| {
            matches!(
                (labels[e.i], labels[e.j]),
                (Split::Train, Split::Test) | (Split::Test, Split::Train)
            )
        })
        .count();
    Ok(crossing as f64 / edges.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    /// Label per canonical molecule index.
    pub labels: Vec<Split>,
    /// Edge coverage; 0 when the graph has no edges.
    pub coverage: f64,
    /// Test molecules taken from graph components.
    pub graph_test: usize,
    /// Test molecules added to reach the target size.
    pub topped_up: usize,
}

/// Builds the full split: component test sides in order of crossing gain,
/// top-up to the test target, then seeded uniform validation sampling from
/// the remaining train pool. If the top-up falls short, the test side is
/// rebuilt from isolated molecules and a min-degree independent set.
pub fn assemble_split(
    graph: &CliffGraph,
    fractions: &SplitFractions,
    seed: u64,
) -> Result<SplitAssignment, SplitError> {
    fractions.validate()?;
    let n = graph.n_molecules();
    let (n_val, n_test) = fractions.targets(n);
    let components = connected_components(graph);
    let mut parts: Vec<(usize, ComponentPartition)> = components
        .par_iter()
        .enumerate()
        .map(|(k, comp)| (k, partition_component(graph, comp, n_test, seed)))
        .collect();
    parts.sort_by(|(ka, a), (kb, b)| {
        b.crossing
            .cmp(&a.crossing)
            .then(components[*ka].len().cmp(&components[*kb].len()))
            .then(components[*ka][0].cmp(&components[*kb][0]))
    });

    let mut labels = vec![Split::Train; n];
    let mut remaining = n_test;
    for (k, part) in parts {
        if remaining == 0 {
            break;
        }
        let part = if part.test.len() <= remaining {
            part
        } else {
            partition_component(graph, &components[k], remaining, seed)
        };
        for &v in &part.test {
            labels[v] = Split::Test;
        }
        remaining -= part.test.len();
    }
    let graph_test = n_test - remaining;

    if remaining > 0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(STREAM_TOP_UP);
        let mut free: Vec<usize> = (0..n).filter(|&v| graph.degree(v) == 0).collect();
        free.shuffle(&mut rng);
        for v in free.into_iter().take(remaining) {
            labels[v] = Split::Test;
            remaining -= 1;
        }
        let mut graph_pool: Vec<usize> = graph.nodes().iter().copied().filter(|&v| labels[v] == Split::Train).collect();
        graph_pool.shuffle(&mut rng);
        for v in graph_pool {
            if remaining == 0 {
                break;
            }
            if graph.neighbors(v).iter().all(|&u| labels[u] != Split::Test) {
                labels[v] = Split::Test;
                remaining -= 1;
            }
        }
        if remaining > 0 {
            let free = (0..n).filter(|&v| graph.degree(v) == 0).count();
            let independent = min_degree_independent_set(graph);
            if free + independent.len() < n_test {
                return Err(SplitError::Infeasible(format!(
                    "test target {n_test} unreachable: the largest test side found without a test-test \
                     cliff edge has {} molecules",
                    free + independent.len()
                )));
            }
            log::warn!("coverage-driven test side too small for the test target; using a min-degree independent set");
            labels = vec![Split::Train; n];
            for v in (0..n).filter(|&v| graph.degree(v) == 0).chain(independent).take(n_test) {
                labels[v] = Split::Test;
            }
        }
    }
    let topped_up = n_test - graph_test;

    let mut pool: Vec<usize> = (0..n).filter(|&v| labels[v] == Split::Train).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_VALIDATION);
    pool.shuffle(&mut rng);
    for &v in pool.iter().take(n_val) {
        labels[v] = Split::Val;
    }

    let coverage = coverage(&labels, graph.edges()).unwrap_or(0.0);
    Ok(SplitAssignment {
        labels,
        coverage,
        graph_test,
        topped_up,
    })
}

/// Greedy independent set over graph nodes: repeatedly takes the node of
/// smallest remaining degree (ties by index) and drops its neighbors.
fn min_degree_independent_set(graph: &CliffGraph) -> Vec<usize> {
    let n = graph.n_molecules();
    let mut alive = vec![false; n];
    let mut degree = vec![0usize; n];
    let mut heap = BinaryHeap::new();
    for &v in graph.nodes() {
        alive[v] = true;
        degree[v] = graph.degree(v);
        heap.push(Reverse((degree[v], v)));
    }
    let mut out = Vec::new();
    while let Some(Reverse((d, v))) = heap.pop() {
        if !alive[v] || d != degree[v] {
            continue;
        }
        out.push(v);
        alive[v] = false;
        for &u in graph.neighbors(v) {
            if !alive[u] {
                continue;
            }
            alive[u] = false;
            for &w in graph.neighbors(u) {
                if alive[w] {
                    degree[w] -= 1;
                    heap.push(Reverse((degree[w], w)));
                }
            }
        }
    }
    out
}

/// Ranks edges ascending by `(score, i, j)` and labels quarters Q1..Q4,
/// highest scores Q4.
pub fn assign_pair_quartiles(edges: &mut [CliffEdge]) {
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.sort_by(|&a, &b| {
        edges[a]
            .score
            .total_cmp(&edges[b].score)
            .then((edges[a].i, edges[a].j).cmp(&(edges[b].i, edges[b].j)))
    });
    let len = edges.len();
    for (rank, &k) in order.iter().enumerate() {
        edges[k].quartile = (4 * rank / len + 1).min(4) as u8;
    }
}

/// Edge-induced group for each test molecule: the highest quartile among its
/// edges to train molecules, Q0 if none. `None` for non-test molecules.
pub fn induce_molecule_severity(labels: &[Split], edges: &[CliffEdge]) -> Vec<Option<SeverityGroup>> {
    let mut best: Vec<Option<u8>> = labels.iter().map(|&l| (l == Split::Test).then_some(0)).collect();
    for e in edges {
        for (t, o) in [(e.i, e.j), (e.j, e.i)] {
            if labels[o] == Split::Train {
                if let Some(q) = best[t].as_mut() {
                    *q = (*q).max(e.quartile);
                }
            }
        }
    }
    best.into_iter().map(|q| q.map(SeverityGroup::from_quartile)).collect()
}
