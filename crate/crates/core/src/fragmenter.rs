//! Rule-based fragmentation into attribution units.
//!
//! A bond is cut when any of the following holds:
//!
//! * it is a non-ring bond touching a ring atom (separates side chains
//!   from rings and rings from each other),
//! * one endpoint is a non-ring atom with four or more heavy neighbors,
//! * one endpoint is a halogen.
//!
//! Ring bonds are never cut, so fused and spiro systems stay whole.
//! Fragments are the connected components of what remains, numbered in
//! order of their lowest atom index.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::molgraph::{is_halogen, MolecularGraph};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FragmentError {
    #[error("ring perception must run before fragmentation")]
    RingsNotPerceived,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentAssignment {
    pub fragment_of: Vec<usize>,
    pub n_fragments: usize,
    /// Indices into the graph's bond list, ascending.
    pub cut_bonds: Vec<usize>,
}

impl FragmentAssignment {
    /// Atom indices of every fragment, each ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_fragments];
        for (atom, &f) in self.fragment_of.iter().enumerate() {
            out[f].push(atom);
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut out = vec![0; self.n_fragments];
        for &f in &self.fragment_of {
            out[f] += 1;
        }
        out
    }

    /// Whole molecule as one fragment.
    pub fn single(n_atoms: usize) -> Self {
        Self {
            fragment_of: vec![0; n_atoms],
            n_fragments: usize::from(n_atoms > 0),
            cut_bonds: Vec::new(),
        }
    }
}

fn cut_rule_applies(graph: &MolecularGraph, bond: usize) -> bool {
    let b = graph.bond(bond);
    if b.in_ring {
        return false;
    }
    let (a, c) = (graph.atom(b.a), graph.atom(b.b));
    let side_chain = a.in_ring || c.in_ring;
    let branch_point = [b.a, b.b]
        .iter()
        .any(|&x| !graph.atom(x).in_ring && graph.degree(x) >= 4);
    let halogen = is_halogen(&a.element) || is_halogen(&c.element);
    side_chain || branch_point || halogen
}

pub fn fragment(graph: &MolecularGraph) -> Result<FragmentAssignment, FragmentError> {
    if !graph.rings_perceived() {
        return Err(FragmentError::RingsNotPerceived);
    }
    let n = graph.n_atoms();
    let cut_bonds: Vec<usize> = (0..graph.n_bonds())
        .filter(|&b| cut_rule_applies(graph, b))
        .collect();
    let mut is_cut = vec![false; graph.n_bonds()];
    for &b in &cut_bonds {
        is_cut[b] = true;
    }

    let mut fragment_of = vec![usize::MAX; n];
    let mut next_id = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if fragment_of[start] != usize::MAX {
            continue;
        }
        fragment_of[start] = next_id;
        stack.push(start);
        while let Some(a) = stack.pop() {
            for &(nb, bond) in graph.incident(a) {
                if !is_cut[bond] && fragment_of[nb] == usize::MAX {
                    fragment_of[nb] = next_id;
                    stack.push(nb);
                }
            }
        }
        next_id += 1;
    }
    Ok(FragmentAssignment {
        fragment_of,
        n_fragments: next_id,
        cut_bonds,
    })
}
