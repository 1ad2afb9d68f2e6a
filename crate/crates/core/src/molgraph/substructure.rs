//! Backtracking subgraph monomorphism in the VF2 style: pattern atoms are
//! visited in breadth-first order so each new atom is anchored to an
//! already-mapped neighbor, and every mapped pattern edge must exist in
//! the target.

use std::collections::{BTreeSet, HashSet, VecDeque};

use super::{MolError, MolecularGraph};

pub const MAX_PATTERN_ATOMS: usize = 16;

#[derive(Clone, Copy)]
struct Rules {
    bond_orders: bool,
    first_only: bool,
}

/// All embeddings of `pattern` into `graph`, one per distinct matched atom
/// set. Each mapping is indexed by pattern atom and holds the target atom.
///
/// Atoms match on element and aromatic flag; edges match on existence.
pub fn match_substructure(
    graph: &MolecularGraph,
    pattern: &MolecularGraph,
) -> Result<Vec<Vec<usize>>, MolError> {
    if pattern.n_atoms() > MAX_PATTERN_ATOMS {
        return Err(MolError::PatternTooLarge(pattern.n_atoms()));
    }
    let rules = Rules {
        bond_orders: false,
        first_only: false,
    };
    let mut seen = HashSet::new();
    Ok(embeddings(graph, pattern, rules)
        .into_iter()
        .filter(|m| {
            let set: BTreeSet<usize> = m.iter().copied().collect();
            seen.insert(set)
        })
        .collect())
}

/// Distinct matched atom sets, each sorted ascending.
pub fn matched_atom_sets(
    graph: &MolecularGraph,
    pattern: &MolecularGraph,
) -> Result<Vec<Vec<usize>>, MolError> {
    Ok(match_substructure(graph, pattern)?
        .into_iter()
        .map(|mut m| {
            m.sort_unstable();
            m
        })
        .collect())
}

/// Graph isomorphism including bond orders. Not size-limited.
pub fn is_isomorphic(a: &MolecularGraph, b: &MolecularGraph) -> bool {
    if a.n_atoms() != b.n_atoms() || a.n_bonds() != b.n_bonds() {
        return false;
    }
    let rules = Rules {
        bond_orders: true,
        first_only: true,
    };
    // equal edge counts turn a monomorphism into an isomorphism
    !embeddings(b, a, rules).is_empty()
}

fn search_order(pattern: &MolecularGraph) -> Vec<(usize, Option<usize>)> {
    let n = pattern.n_atoms();
    let mut seen = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for root in 0..n {
        if seen[root] {
            continue;
        }
        seen[root] = true;
        let mut queue = VecDeque::from([(root, None)]);
        while let Some((a, parent)) = queue.pop_front() {
            order.push((a, parent));
            for nb in pattern.neighbors(a) {
                if !seen[nb] {
                    seen[nb] = true;
                    queue.push_back((nb, Some(a)));
                }
            }
        }
    }
    order
}

fn embeddings(graph: &MolecularGraph, pattern: &MolecularGraph, rules: Rules) -> Vec<Vec<usize>> {
    if pattern.n_atoms() == 0 || pattern.n_atoms() > graph.n_atoms() {
        return Vec::new();
    }
    let order = search_order(pattern);
    let mut state = Search {
        graph,
        pattern,
        rules,
        order,
        mapping: vec![usize::MAX; pattern.n_atoms()],
        used: vec![false; graph.n_atoms()],
        found: Vec::new(),
    };
    state.extend(0);
    state.found
}

struct Search<'g> {
    graph: &'g MolecularGraph,
    pattern: &'g MolecularGraph,
    rules: Rules,
    order: Vec<(usize, Option<usize>)>,
    mapping: Vec<usize>,
    used: Vec<bool>,
    found: Vec<Vec<usize>>,
}

impl Search<'_> {
    fn done(&self) -> bool {
        self.rules.first_only && !self.found.is_empty()
    }

    fn compatible(&self, p: usize, t: usize) -> bool {
        let (pa, ta) = (self.pattern.atom(p), self.graph.atom(t));
        if pa.element != ta.element || pa.aromatic != ta.aromatic {
            return false;
        }
        if self.pattern.degree(p) > self.graph.degree(t) {
            return false;
        }
        for &(pn, pb) in self.pattern.incident(p) {
            let tn = self.mapping[pn];
            if tn == usize::MAX {
                continue;
            }
            match self.graph.bond_between(t, tn) {
                None => return false,
                Some(tb) => {
                    if self.rules.bond_orders
                        && self.graph.bond(tb).order != self.pattern.bond(pb).order
                    {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn try_atom(&mut self, depth: usize, p: usize, t: usize) {
        if self.used[t] || !self.compatible(p, t) {
            return;
        }
        self.mapping[p] = t;
        self.used[t] = true;
        self.extend(depth + 1);
        self.used[t] = false;
        self.mapping[p] = usize::MAX;
    }

    fn extend(&mut self, depth: usize) {
        if self.done() {
            return;
        }
        if depth == self.order.len() {
            self.found.push(self.mapping.clone());
            return;
        }
        let (p, parent) = self.order[depth];
        match parent {
            Some(pp) => {
                let anchor = self.mapping[pp];
                let candidates: Vec<usize> = self.graph.neighbors(anchor).collect();
                for t in candidates {
                    self.try_atom(depth, p, t);
                    if self.done() {
                        return;
                    }
                }
            }
            None => {
                for t in 0..self.graph.n_atoms() {
                    self.try_atom(depth, p, t);
                    if self.done() {
                        return;
                    }
                }
            }
        }
    }
}
