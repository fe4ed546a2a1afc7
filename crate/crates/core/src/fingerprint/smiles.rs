//! A deliberately small line-notation reader.
//!
//! Supported: organic-subset atoms (`B C N O P S F Cl Br I`), lowercase
//! aromatic atoms (`b c n o p s`), bracket atoms with element, hydrogen count
//! and charge, explicit `- = # :` bonds, branches, ring closures (`1`..`9`,
//! `%nn`) and `.` separators at the top level. Anything else (stereo marks,
//! isotopes, atom classes, `/` `\` `$` bonds) is rejected with the byte offset
//! of the offending token rather than skipped.

use std::collections::{BTreeMap, HashSet};

use super::FingerprintError;

const ELEMENTS: &[&str] = &[
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

const ORGANIC: &[&str] = &["B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"];
const AROMATIC_ORGANIC: &[&str] = &["B", "C", "N", "O", "P", "S"];
const AROMATIC_BRACKET: &[&str] = &["B", "C", "N", "O", "P", "S", "Se", "As"];

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Atom {
    /// Capitalized element symbol, e.g. `"C"`, `"Cl"`.
    pub element: String,
    pub charge: i8,
    pub aromatic: bool,
    /// Explicit hydrogen count; `Some` exactly for bracket atoms.
    pub hcount: Option<u8>,
}

impl Atom {
    fn needs_bracket(&self) -> bool {
        self.hcount.is_some()
            || self.charge != 0
            || !ORGANIC.contains(&self.element.as_str())
            || (self.aromatic && !AROMATIC_ORGANIC.contains(&self.element.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    pub fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

/// Atoms plus an undirected simple bond list.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MolGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
}

impl MolGraph {
    /// Neighbor lists `(atom, bond order)` sorted by atom index.
    pub fn adjacency(&self) -> Vec<Vec<(usize, BondOrder)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for bond in &self.bonds {
            adj[bond.a].push((bond.b, bond.order));
            adj[bond.b].push((bond.a, bond.order));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Checks endpoint validity, self-bonds and duplicate bonds.
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = HashSet::new();
        for bond in &self.bonds {
            if bond.a >= self.atoms.len() || bond.b >= self.atoms.len() {
                return Err(format!("bond {}-{} references a missing atom", bond.a, bond.b));
            }
            if bond.a == bond.b {
                return Err(format!("self-bond on atom {}", bond.a));
            }
            if !seen.insert((bond.a.min(bond.b), bond.a.max(bond.b))) {
                return Err(format!("duplicate bond {}-{}", bond.a, bond.b));
            }
        }
        Ok(())
    }
}

fn parse_err(offset: usize, message: impl Into<String>) -> FingerprintError {
    FingerprintError::Parse {
        offset,
        message: message.into(),
    }
}

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
    graph: MolGraph,
    bond_set: HashSet<(usize, usize)>,
    prev: Option<usize>,
    pending: Option<(BondOrder, usize)>,
    branches: Vec<(Option<usize>, usize, bool)>,
    rings: BTreeMap<u32, (usize, Option<BondOrder>, usize)>,
}

impl<'a> Parser<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            text: text.as_bytes(),
            pos: 0,
            graph: MolGraph::default(),
            bond_set: HashSet::new(),
            prev: None,
            pending: None,
            branches: Vec::new(),
            rings: BTreeMap::new(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn add_bond(&mut self, a: usize, b: usize, order: BondOrder, offset: usize) -> Result<(), FingerprintError> {
        if a == b {
            return Err(parse_err(offset, "ring closure bonds an atom to itself"));
        }
        if !self.bond_set.insert((a.min(b), a.max(b))) {
            return Err(parse_err(offset, format!("duplicate bond between atoms {a} and {b}")));
        }
        self.graph.bonds.push(Bond { a, b, order });
        Ok(())
    }

    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.graph.atoms[a].aromatic && self.graph.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }

    fn push_atom(&mut self, atom: Atom, offset: usize) -> Result<(), FingerprintError> {
        let idx = self.graph.atoms.len();
        self.graph.atoms.push(atom);
        match (self.prev, self.pending.take()) {
            (Some(p), pending) => {
                let order = pending.map_or_else(|| self.default_order(p, idx), |(o, _)| o);
                self.add_bond(p, idx, order, offset)?;
            }
            (None, Some((_, bond_at))) => {
                return Err(parse_err(bond_at, "bond symbol without a preceding atom"));
            }
            (None, None) => {}
        }
        if let Some(top) = self.branches.last_mut() {
            top.2 = true;
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<Atom, FingerprintError> {
        let start = self.pos;
        let c = self.text[start];
        let two = |next: u8| self.text.get(start + 1) == Some(&next);
        let (element, aromatic, len) = match c {
            b'C' if two(b'l') => ("Cl", false, 2),
            b'B' if two(b'r') => ("Br", false, 2),
            b'B' => ("B", false, 1),
            b'C' => ("C", false, 1),
            b'N' => ("N", false, 1),
            b'O' => ("O", false, 1),
            b'P' => ("P", false, 1),
            b'S' => ("S", false, 1),
            b'F' => ("F", false, 1),
            b'I' => ("I", false, 1),
            b'b' => ("B", true, 1),
            b'c' => ("C", true, 1),
            b'n' => ("N", true, 1),
            b'o' => ("O", true, 1),
            b'p' => ("P", true, 1),
            b's' => ("S", true, 1),
            _ => return Err(parse_err(start, format!("unknown token {:?}", c as char))),
        };
        self.pos += len;
        Ok(Atom {
            element: element.to_string(),
            charge: 0,
            aromatic,
            hcount: None,
        })
    }

    fn bracket_atom(&mut self) -> Result<Atom, FingerprintError> {
        let open = self.pos;
        self.pos += 1;
        let sym_at = self.pos;
        match self.peek() {
            Some(d) if d.is_ascii_digit() => {
                return Err(parse_err(sym_at, "isotope labels are not supported"))
            }
            None => return Err(parse_err(open, "unterminated bracket atom")),
            _ => {}
        }
        let first = self.peek().unwrap();
        let (element, aromatic) = if first.is_ascii_lowercase() {
            // aromatic: two-letter first (se, as), then single letter
            let pair = self.text.get(self.pos..self.pos + 2).map(|s| {
                let mut e = String::from_utf8_lossy(s).into_owned();
                e[..1].make_ascii_uppercase();
                e
            });
            match pair {
                Some(e) if AROMATIC_BRACKET.contains(&e.as_str()) && e.len() == 2 => {
                    self.pos += 2;
                    (e, true)
                }
                _ => {
                    let e = (first as char).to_ascii_uppercase().to_string();
                    if !AROMATIC_BRACKET.contains(&e.as_str()) {
                        return Err(parse_err(sym_at, format!("unknown aromatic symbol {:?}", first as char)));
                    }
                    self.pos += 1;
                    (e, true)
                }
            }
        } else if first.is_ascii_uppercase() {
            let two = self
                .text
                .get(self.pos + 1)
                .filter(|c| c.is_ascii_lowercase())
                .map(|&c| format!("{}{}", first as char, c as char));
            match two {
                Some(e) if ELEMENTS.contains(&e.as_str()) => {
                    self.pos += 2;
                    (e, false)
                }
                _ => {
                    let e = (first as char).to_string();
                    if !ELEMENTS.contains(&e.as_str()) {
                        return Err(parse_err(sym_at, format!("unknown element {e:?}")));
                    }
                    self.pos += 1;
                    (e, false)
                }
            }
        } else {
            return Err(parse_err(sym_at, format!("unexpected {:?} in bracket atom", first as char)));
        };

        let mut hcount = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            hcount = 1;
            if let Some(d) = self.peek().filter(u8::is_ascii_digit) {
                hcount = d - b'0';
                self.pos += 1;
            }
        }

        let mut charge: i32 = 0;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            let unit = if sign == b'+' { 1 } else { -1 };
            self.pos += 1;
            charge = unit;
            if let Some(d) = self.peek().filter(u8::is_ascii_digit) {
                let mut n = (d - b'0') as i32;
                self.pos += 1;
                if let Some(d2) = self.peek().filter(u8::is_ascii_digit) {
                    n = n * 10 + (d2 - b'0') as i32;
                    self.pos += 1;
                }
                charge = unit * n;
            } else {
                while self.peek() == Some(sign) {
                    charge += unit;
                    self.pos += 1;
                }
            }
            if !(-15..=15).contains(&charge) {
                return Err(parse_err(sym_at, "formal charge out of range"));
            }
        }

        match self.peek() {
            Some(b']') => {
                self.pos += 1;
                Ok(Atom {
                    element,
                    charge: charge as i8,
                    aromatic,
                    hcount: Some(hcount),
                })
            }
            Some(b'@') => Err(parse_err(self.pos, "stereochemistry is not supported")),
            Some(b':') => Err(parse_err(self.pos, "atom classes are not supported")),
            Some(c) => Err(parse_err(self.pos, format!("unexpected {:?} in bracket atom", c as char))),
            None => Err(parse_err(open, "unterminated bracket atom")),
        }
    }

    fn ring_closure(&mut self, number: u32, offset: usize) -> Result<(), FingerprintError> {
        let Some(current) = self.prev else {
            return Err(parse_err(offset, "ring closure without a preceding atom"));
        };
        let explicit = self.pending.take().map(|(o, _)| o);
        match self.rings.remove(&number) {
            Some((other, opened_with, _)) => {
                let order = match (opened_with, explicit) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(parse_err(offset, "conflicting bond symbols on ring closure"))
                    }
                    (Some(a), _) | (None, Some(a)) => a,
                    (None, None) => self.default_order(other, current),
                };
                self.add_bond(other, current, order, offset)
            }
            None => {
                self.rings.insert(number, (current, explicit, offset));
                Ok(())
            }
        }
    }

    fn run(mut self) -> Result<MolGraph, FingerprintError> {
        while let Some(c) = self.peek() {
            let at = self.pos;
            match c {
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.push_atom(atom, at)?;
                }
                b'-' | b'=' | b'#' | b':' => {
                    if self.pending.is_some() {
                        return Err(parse_err(at, "two consecutive bond symbols"));
                    }
                    if self.prev.is_none() {
                        return Err(parse_err(at, "bond symbol without a preceding atom"));
                    }
                    let order = match c {
                        b'-' => BondOrder::Single,
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        _ => BondOrder::Aromatic,
                    };
                    self.pending = Some((order, at));
                    self.pos += 1;
                }
                b'(' => {
                    if self.prev.is_none() {
                        return Err(parse_err(at, "branch without a preceding atom"));
                    }
                    if self.pending.is_some() {
                        return Err(parse_err(at, "bond symbol before branch"));
                    }
                    self.branches.push((self.prev, at, false));
                    self.pos += 1;
                }
                b')' => {
                    let Some((anchor, _, nonempty)) = self.branches.pop() else {
                        return Err(parse_err(at, "unmatched ')'"));
                    };
                    if let Some((_, bond_at)) = self.pending {
                        return Err(parse_err(bond_at, "dangling bond at end of branch"));
                    }
                    if !nonempty {
                        return Err(parse_err(at, "empty branch"));
                    }
                    self.prev = anchor;
                    self.pos += 1;
                }
                b'0'..=b'9' => {
                    self.pos += 1;
                    self.ring_closure((c - b'0') as u32, at)?;
                }
                b'%' => {
                    let digits = self.text.get(at + 1..at + 3).filter(|d| d.iter().all(u8::is_ascii_digit));
                    let Some(d) = digits else {
                        return Err(parse_err(at, "'%' must be followed by two digits"));
                    };
                    let number = ((d[0] - b'0') * 10 + (d[1] - b'0')) as u32;
                    self.pos += 3;
                    self.ring_closure(number, at)?;
                }
                b'.' => {
                    if let Some((_, bond_at)) = self.pending {
                        return Err(parse_err(bond_at, "dangling bond before '.'"));
                    }
                    if !self.branches.is_empty() {
                        return Err(parse_err(at, "'.' inside a branch is not supported"));
                    }
                    if self.prev.is_none() {
                        return Err(parse_err(at, "'.' without a preceding atom"));
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                b'@' => return Err(parse_err(at, "stereochemistry is not supported")),
                b'/' | b'\\' => return Err(parse_err(at, "directional bonds are not supported")),
                b'$' => return Err(parse_err(at, "quadruple bonds are not supported")),
                _ => {
                    let atom = self.organic_atom()?;
                    self.push_atom(atom, at)?;
                }
            }
        }
        if let Some(&(_, open_at, _)) = self.branches.last() {
            return Err(parse_err(open_at, "unmatched '('"));
        }
        if let Some((_, bond_at)) = self.pending {
            return Err(parse_err(bond_at, "dangling bond at end of input"));
        }
        if let Some((number, &(_, _, opened_at))) = self.rings.iter().next() {
            return Err(parse_err(opened_at, format!("ring closure {number} never closed")));
        }
        if self.graph.atoms.is_empty() {
            return Err(parse_err(0, "empty structure"));
        }
        Ok(self.graph)
    }
}

/// Parses the supported line-notation subset into a [`MolGraph`].
pub fn parse_structure(text: &str) -> Result<MolGraph, FingerprintError> {
    Parser::new(text).run()
}

fn atom_text(atom: &Atom) -> String {
    let symbol = if atom.aromatic {
        atom.element.to_ascii_lowercase()
    } else {
        atom.element.clone()
    };
    if !atom.needs_bracket() {
        return symbol;
    }
    let mut out = format!("[{symbol}");
    match atom.hcount.unwrap_or(0) {
        0 => {}
        1 => out.push('H'),
        h => out.push_str(&format!("H{h}")),
    }
    match atom.charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => out.push_str(&format!("+{c}")),
        c => out.push_str(&format!("-{}", -c)),
    }
    out.push(']');
    out
}

fn bond_text(order: BondOrder, a: &Atom, b: &Atom) -> &'static str {
    let both_aromatic = a.aromatic && b.aromatic;
    match order {
        BondOrder::Single if both_aromatic => "-",
        BondOrder::Single => "",
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic if both_aromatic => "",
        BondOrder::Aromatic => ":",
    }
}

fn ring_label(n: u32) -> String {
    if n < 10 {
        n.to_string()
    } else {
        format!("%{n:02}")
    }
}

/// Renders a graph back to text by depth-first traversal.
///
/// Returns the text and the order in which atoms were written: atom `k` of
/// the re-parsed graph is atom `order[k]` of the input.
pub fn render_structure(graph: &MolGraph) -> (String, Vec<usize>) {
    let n = graph.atoms.len();
    let adj = graph.adjacency();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut children: Vec<Vec<(usize, BondOrder)>> = vec![Vec::new(); n];
    // ring bonds incident to each atom: (other atom, order)
    let mut ring_bonds: Vec<Vec<(usize, BondOrder)>> = vec![Vec::new(); n];
    let mut roots = Vec::new();

    for root in 0..n {
        if visited[root] {
            continue;
        }
        roots.push(root);
        // iterative DFS keeping per-node neighbor cursors
        let mut stack: Vec<(usize, Option<usize>, usize)> = vec![(root, None, 0)];
        visited[root] = true;
        order.push(root);
        while let Some((v, parent, cursor)) = stack.pop() {
            if cursor >= adj[v].len() {
                continue;
            }
            stack.push((v, parent, cursor + 1));
            let (u, bond) = adj[v][cursor];
            if Some(u) == parent {
                continue;
            }
            if !visited[u] {
                visited[u] = true;
                order.push(u);
                children[v].push((u, bond));
                stack.push((u, Some(v), 0));
            } else if !ring_bonds[v].iter().any(|&(o, _)| o == u) {
                ring_bonds[v].push((u, bond));
                ring_bonds[u].push((v, bond));
            }
        }
    }

    let mut position = vec![0usize; n];
    for (k, &atom) in order.iter().enumerate() {
        position[atom] = k;
    }
    for list in &mut ring_bonds {
        list.sort_by_key(|&(o, _)| position[o]);
    }

    let mut out = String::new();
    let mut open: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    let mut free: Vec<u32> = Vec::new();
    let mut next_label = 1u32;

    // explicit stack of emit actions
    enum Step {
        Atom(usize),
        Text(&'static str),
        Bond(usize, usize, BondOrder),
    }
    for (c, &root) in roots.iter().enumerate() {
        if c > 0 {
            out.push('.');
        }
        let mut steps = vec![Step::Atom(root)];
        while let Some(step) = steps.pop() {
            match step {
                Step::Text(t) => out.push_str(t),
                Step::Bond(a, b, o) => out.push_str(bond_text(o, &graph.atoms[a], &graph.atoms[b])),
                Step::Atom(v) => {
                    out.push_str(&atom_text(&graph.atoms[v]));
                    for &(u, bond) in &ring_bonds[v] {
                        let key = (v.min(u), v.max(u));
                        if let Some(label) = open.remove(&key) {
                            out.push_str(&ring_label(label));
                            free.push(label);
                            free.sort_unstable_by(|a, b| b.cmp(a));
                        } else {
                            let label = free.pop().unwrap_or_else(|| {
                                next_label += 1;
                                next_label - 1
                            });
                            out.push_str(bond_text(bond, &graph.atoms[v], &graph.atoms[u]));
                            out.push_str(&ring_label(label));
                            open.insert(key, label);
                        }
                    }
                    let kids = &children[v];
                    // pushed in reverse so they pop in order
                    if let Some((&(last, lo), rest)) = kids.split_last() {
                        steps.push(Step::Atom(last));
                        steps.push(Step::Bond(v, last, lo));
                        for &(kid, ko) in rest.iter().rev() {
                            steps.push(Step::Text(")"));
                            steps.push(Step::Atom(kid));
                            steps.push(Step::Bond(v, kid, ko));
                            steps.push(Step::Text("("));
                        }
                    }
                }
            }
        }
    }
    (out, order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bond_set(g: &MolGraph) -> Vec<(usize, usize, BondOrder)> {
        let mut v: Vec<_> = g
            .bonds
            .iter()
            .map(|b| (b.a.min(b.b), b.a.max(b.b), b.order))
            .collect();
        v.sort();
        v
    }

    #[test]
    fn single_atom() {
        let g = parse_structure("C").unwrap();
        assert_eq!(g.atoms.len(), 1);
        assert!(g.bonds.is_empty());
    }

    #[test]
    fn linear_chain() {
        let g = parse_structure("CCO").unwrap();
        assert_eq!(g.atoms.len(), 3);
        assert_eq!(
            bond_set(&g),
            vec![(0, 1, BondOrder::Single), (1, 2, BondOrder::Single)]
        );
        assert_eq!(g.atoms[2].element, "O");
    }

    #[test]
    fn three_ring() {
        let g = parse_structure("C1CC1").unwrap();
        assert_eq!(g.atoms.len(), 3);
        assert_eq!(
            bond_set(&g),
            vec![
                (0, 1, BondOrder::Single),
                (0, 2, BondOrder::Single),
                (1, 2, BondOrder::Single)
            ]
        );
    }

    #[test]
    fn aromatic_ring_and_branches() {
        let g = parse_structure("c1ccccc1C(=O)[O-]").unwrap();
        assert_eq!(g.atoms.len(), 9);
        assert_eq!(g.bonds.len(), 9);
        let aromatic = g.bonds.iter().filter(|b| b.order == BondOrder::Aromatic).count();
        assert_eq!(aromatic, 6);
        assert_eq!(g.atoms[8].charge, -1);
        assert_eq!(g.atoms[8].hcount, Some(0));
        assert!(g.bonds.iter().any(|b| b.order == BondOrder::Double));
    }

    #[test]
    fn bracket_atoms() {
        let g = parse_structure("[NH4+].[Cl-]").unwrap();
        assert_eq!(g.atoms[0].hcount, Some(4));
        assert_eq!(g.atoms[0].charge, 1);
        assert_eq!(g.atoms[1].element, "Cl");
        assert!(g.bonds.is_empty());
        let g = parse_structure("[nH]1cccc1").unwrap();
        assert!(g.atoms[0].aromatic);
        let g = parse_structure("[Fe+++]").unwrap();
        assert_eq!(g.atoms[0].charge, 3);
        let g = parse_structure("C%12CC%12").unwrap();
        assert_eq!(g.bonds.len(), 3);
    }

    fn offset_of(text: &str) -> usize {
        match parse_structure(text) {
            Err(FingerprintError::Parse { offset, .. }) => offset,
            other => panic!("expected parse error for {text:?}, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_offsets() {
        assert_eq!(offset_of("CC(C"), 2);
        assert_eq!(offset_of("CC)C"), 2);
        assert_eq!(offset_of("C1CC"), 1);
        assert_eq!(offset_of("CCX"), 2);
        assert_eq!(offset_of("C[C@H](O)N"), 3);
        assert_eq!(offset_of("C/C=C/C"), 1);
        assert_eq!(offset_of("[13CH4]"), 1);
        assert_eq!(offset_of("=CC"), 0);
        assert_eq!(offset_of("CC="), 2);
        assert_eq!(offset_of("C()C"), 2);
        assert_eq!(offset_of("C11"), 2);
        assert_eq!(offset_of("C12CC12"), 6);
        assert_eq!(offset_of(""), 0);
        assert_eq!(offset_of("[Xx]"), 1);
    }

    #[test]
    fn render_simple() {
        let g = parse_structure("CC(=O)O").unwrap();
        let (text, order) = render_structure(&g);
        assert_eq!(text, "CC(=O)O");
        assert_eq!(order, vec![0, 1, 2, 3]);
        let (text, _) = render_structure(&parse_structure("c1ccccc1").unwrap());
        assert_eq!(text, "c1ccccc1");
    }

    fn permuted(g: &MolGraph, order: &[usize]) -> MolGraph {
        let mut pos = vec![0; order.len()];
        for (k, &a) in order.iter().enumerate() {
            pos[a] = k;
        }
        MolGraph {
            atoms: order.iter().map(|&a| g.atoms[a].clone()).collect(),
            bonds: g
                .bonds
                .iter()
                .map(|b| Bond {
                    a: pos[b.a],
                    b: pos[b.b],
                    order: b.order,
                })
                .collect(),
        }
    }

    fn arb_graph() -> impl Strategy<Value = MolGraph> {
        let atom = (0usize..8, -2i8..=2, any::<bool>(), proptest::option::of(0u8..4)).prop_map(
            |(e, charge, aromatic, hcount)| {
                let element = ["C", "N", "O", "S", "Cl", "P", "Se", "Na"][e].to_string();
                let aromatic = aromatic && e < 4;
                Atom {
                    element,
                    charge,
                    aromatic,
                    hcount: if charge != 0 { Some(hcount.unwrap_or(0)) } else { hcount },
                }
            },
        );
        (proptest::collection::vec(atom, 1..14), proptest::collection::vec((0usize..14, 0usize..14, 0u8..4), 0..24)).prop_map(
            |(mut atoms, raw)| {
                for a in atoms.iter_mut() {
                    if !ORGANIC.contains(&a.element.as_str()) && a.hcount.is_none() {
                        a.hcount = Some(0);
                    }
                }
                let n = atoms.len();
                let mut seen = HashSet::new();
                let mut bonds = Vec::new();
                for (a, b, o) in raw {
                    let (a, b) = (a % n, b % n);
                    if a == b || !seen.insert((a.min(b), a.max(b))) {
                        continue;
                    }
                    let order = [BondOrder::Single, BondOrder::Double, BondOrder::Triple, BondOrder::Aromatic][o as usize];
                    bonds.push(Bond { a, b, order });
                }
                MolGraph { atoms, bonds }
            },
        )
    }

    proptest! {
        #[test]
        fn render_then_parse_is_equivalent(g in arb_graph()) {
            prop_assert!(g.validate().is_ok());
            let (text, order) = render_structure(&g);
            let back = parse_structure(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
            let expected = permuted(&g, &order);
            prop_assert_eq!(&back.atoms, &expected.atoms, "text {}", text);
            prop_assert_eq!(bond_set(&back), bond_set(&expected), "text {}", text);
        }
    }
}
