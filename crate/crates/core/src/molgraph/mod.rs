//! Molecular graphs: SMILES input/output, ring perception, substructure
//! search and atom featurization.

mod features;
mod rings;
mod smiles;
mod substructure;

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use features::{element_index, featurize, FeatureMatrix, ELEMENT_VOCABULARY, FEATURE_DIM};
pub use rings::perceive_rings;
pub use smiles::{parse_smiles, write_smiles};
pub use substructure::{is_isomorphic, match_substructure, matched_atom_sets, MAX_PATTERN_ATOMS};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MolError {
    #[error("empty SMILES input")]
    EmptyInput,
    #[error("unknown token {token:?} at position {position}")]
    UnknownToken { position: usize, token: String },
    #[error("ring closure {0} opened but never closed")]
    UnclosedRing(u32),
    #[error("unbalanced parenthesis at position {0}")]
    UnbalancedParenthesis(usize),
    #[error("invalid bond between atoms {a} and {b}: {reason}")]
    InvalidBond {
        a: usize,
        b: usize,
        reason: &'static str,
    },
    #[error("pattern has {0} atoms; at most {MAX_PATTERN_ATOMS} are supported")]
    PatternTooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl fmt::Display for BondOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BondOrder::Single => "1",
            BondOrder::Double => "2",
            BondOrder::Triple => "3",
            BondOrder::Aromatic => "ar",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomRecord {
    pub element: String,
    pub aromatic: bool,
    pub in_ring: bool,
    pub ring_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
    pub in_ring: bool,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if self.a == atom {
            self.b
        } else {
            self.a
        }
    }
}

/// Heavy-atom graph of a molecule. Hydrogens are implicit.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct MolecularGraph {
    atoms: Vec<AtomRecord>,
    bonds: Vec<Bond>,
    /// (neighbor, bond index) per atom, in insertion order.
    adjacency: Vec<Vec<(usize, usize)>>,
    rings: Vec<Vec<usize>>,
    rings_perceived: bool,
}

impl MolecularGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses SMILES and perceives rings in one step.
    pub fn from_smiles(text: &str) -> Result<Self, MolError> {
        Ok(perceive_rings(parse_smiles(text)?))
    }

    pub fn add_atom(&mut self, element: &str, aromatic: bool) -> usize {
        self.atoms.push(AtomRecord {
            element: element.to_string(),
            aromatic,
            in_ring: false,
            ring_ids: Vec::new(),
        });
        self.adjacency.push(Vec::new());
        self.rings_perceived = false;
        self.atoms.len() - 1
    }

    pub fn add_bond(&mut self, a: usize, b: usize, order: BondOrder) -> Result<usize, MolError> {
        let n = self.atoms.len();
        if a == b {
            return Err(MolError::InvalidBond { a, b, reason: "self loop" });
        }
        if a >= n || b >= n {
            return Err(MolError::InvalidBond {
                a,
                b,
                reason: "endpoint out of range",
            });
        }
        if self.bond_between(a, b).is_some() {
            return Err(MolError::InvalidBond {
                a,
                b,
                reason: "duplicate bond",
            });
        }
        if order == BondOrder::Aromatic && !(self.atoms[a].aromatic && self.atoms[b].aromatic) {
            return Err(MolError::InvalidBond {
                a,
                b,
                reason: "aromatic bond between non-aromatic atoms",
            });
        }
        let idx = self.bonds.len();
        self.bonds.push(Bond {
            a,
            b,
            order,
            in_ring: false,
        });
        self.adjacency[a].push((b, idx));
        self.adjacency[b].push((a, idx));
        self.rings_perceived = false;
        Ok(idx)
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn n_bonds(&self) -> usize {
        self.bonds.len()
    }

    pub fn atoms(&self) -> &[AtomRecord] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> &AtomRecord {
        &self.atoms[i]
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn bond(&self, i: usize) -> &Bond {
        &self.bonds[i]
    }

    pub fn neighbors(&self, atom: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency[atom].iter().map(|&(n, _)| n)
    }

    /// (neighbor, bond index) pairs.
    pub fn incident(&self, atom: usize) -> &[(usize, usize)] {
        &self.adjacency[atom]
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.adjacency[atom].len()
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<usize> {
        self.adjacency
            .get(a)?
            .iter()
            .find(|&&(n, _)| n == b)
            .map(|&(_, idx)| idx)
    }

    pub fn rings_perceived(&self) -> bool {
        self.rings_perceived
    }

    /// Smallest set of smallest rings, each as atoms in cycle order.
    pub fn rings(&self) -> &[Vec<usize>] {
        &self.rings
    }

    pub fn ring_count(&self) -> usize {
        self.rings.len()
    }

    pub(crate) fn set_ring_info(&mut self, bond_in_ring: Vec<bool>, rings: Vec<Vec<usize>>) {
        for (bond, flag) in self.bonds.iter_mut().zip(bond_in_ring) {
            bond.in_ring = flag;
        }
        for atom in &mut self.atoms {
            atom.ring_ids.clear();
        }
        for (rid, ring) in rings.iter().enumerate() {
            for &a in ring {
                self.atoms[a].ring_ids.push(rid);
            }
        }
        for i in 0..self.atoms.len() {
            let in_ring = self.adjacency[i]
                .iter()
                .any(|&(_, b)| self.bonds[b].in_ring);
            self.atoms[i].in_ring = in_ring;
        }
        self.rings = rings;
        self.rings_perceived = true;
    }

    /// One line per atom (`atom <index> <element> ring=<0|1>`) followed by
    /// one line per bond (`bond <a> <b> <order>`).
    pub fn debug_dump(&self) -> String {
        let mut out = String::new();
        for (i, a) in self.atoms.iter().enumerate() {
            let sym = if a.aromatic {
                a.element.to_lowercase()
            } else {
                a.element.clone()
            };
            let _ = writeln!(out, "atom {i} {sym} ring={}", u8::from(a.in_ring));
        }
        for b in &self.bonds {
            let _ = writeln!(out, "bond {} {} {}", b.a, b.b, b.order);
        }
        out
    }
}

pub fn is_halogen(element: &str) -> bool {
    matches!(element, "F" | "Cl" | "Br" | "I")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_bond_rejects_invalid_edges() {
        let mut g = MolecularGraph::new();
        let a = g.add_atom("C", false);
        let b = g.add_atom("C", false);
        assert!(g.add_bond(a, a, BondOrder::Single).is_err());
        assert!(g.add_bond(a, 7, BondOrder::Single).is_err());
        g.add_bond(a, b, BondOrder::Single).unwrap();
        assert!(g.add_bond(b, a, BondOrder::Double).is_err());
        let c = g.add_atom("C", true);
        assert!(g.add_bond(b, c, BondOrder::Aromatic).is_err());
    }

    #[test]
    fn debug_dump_format() {
        let g = MolecularGraph::from_smiles("C1CC1O").unwrap();
        let dump = g.debug_dump();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines[0], "atom 0 C ring=1");
        assert_eq!(lines[3], "atom 3 O ring=0");
        assert_eq!(lines[4], "bond 0 1 1");
        assert_eq!(lines.len(), 4 + 4);
    }
}
