use std::sync::Arc;

use crate::autograd::{Matrix, NeighborLists};
use crate::fragmenter::{fragment, FragmentAssignment};
use crate::molgraph::{featurize, MolecularGraph};

use super::ModelError;

/// Neighbors of every atom, partitioned by whether they share its fragment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSplit {
    pub intra: Vec<Vec<usize>>,
    pub inter: Vec<Vec<usize>>,
}

pub fn split_neighbors(graph: &MolecularGraph, frag: &FragmentAssignment) -> NeighborSplit {
    let n = graph.n_atoms();
    let mut intra = vec![Vec::new(); n];
    let mut inter = vec![Vec::new(); n];
    for i in 0..n {
        for j in graph.neighbors(i) {
            if frag.fragment_of[i] == frag.fragment_of[j] {
                intra[i].push(j);
            } else {
                inter[i].push(j);
            }
        }
    }
    NeighborSplit { intra, inter }
}

/// Everything the network needs from one molecule.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedGraph {
    pub features: Matrix,
    pub intra: NeighborLists,
    pub inter: NeighborLists,
    pub fragment_of: Vec<usize>,
    pub n_fragments: usize,
}

impl PreparedGraph {
    pub fn new(graph: &MolecularGraph, frag: &FragmentAssignment) -> Self {
        let split = split_neighbors(graph, frag);
        Self {
            features: featurize(graph),
            intra: NeighborLists::from_lists(&split.intra),
            inter: NeighborLists::from_lists(&split.inter),
            fragment_of: frag.fragment_of.clone(),
            n_fragments: frag.n_fragments,
        }
    }

    /// Parses, perceives rings, fragments and prepares in one go.
    pub fn from_smiles(
        smiles: &str,
    ) -> Result<(MolecularGraph, FragmentAssignment, PreparedGraph), ModelError> {
        let graph = MolecularGraph::from_smiles(smiles)?;
        let frag = fragment(&graph)?;
        let prepared = PreparedGraph::new(&graph, &frag);
        Ok((graph, frag, prepared))
    }

    pub fn n_atoms(&self) -> usize {
        self.features.rows()
    }
}

/// Disjoint union of several molecules, evaluated in one pass.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub features: Matrix,
    pub intra: Arc<NeighborLists>,
    pub inter: Arc<NeighborLists>,
    /// Global fragment id of every atom.
    pub fragment_of: Arc<Vec<usize>>,
    pub n_fragments: usize,
    pub molecule_of_fragment: Arc<Vec<usize>>,
    pub n_molecules: usize,
    /// `atom_offsets[m]..atom_offsets[m + 1]` are the rows of molecule `m`.
    pub atom_offsets: Vec<usize>,
    pub fragment_offsets: Vec<usize>,
}

impl GraphBatch {
    pub fn new(graphs: &[&PreparedGraph]) -> Self {
        let total_atoms: usize = graphs.iter().map(|g| g.n_atoms()).sum();
        let dim = graphs.first().map_or(0, |g| g.features.cols());
        let mut features = Vec::with_capacity(total_atoms * dim);
        let mut intra = NeighborLists::default();
        let mut inter = NeighborLists::default();
        let mut fragment_of = Vec::with_capacity(total_atoms);
        let mut molecule_of_fragment = Vec::new();
        let mut atom_offsets = vec![0];
        let mut fragment_offsets = vec![0];
        let (mut atoms, mut frags) = (0, 0);
        for (m, g) in graphs.iter().enumerate() {
            features.extend_from_slice(g.features.as_slice());
            intra.append_shifted(&g.intra, atoms);
            inter.append_shifted(&g.inter, atoms);
            fragment_of.extend(g.fragment_of.iter().map(|f| f + frags));
            molecule_of_fragment.extend(std::iter::repeat_n(m, g.n_fragments));
            atoms += g.n_atoms();
            frags += g.n_fragments;
            atom_offsets.push(atoms);
            fragment_offsets.push(frags);
        }
        if graphs.is_empty() {
            intra = NeighborLists::from_lists::<Vec<usize>>(&[]);
            inter = NeighborLists::from_lists::<Vec<usize>>(&[]);
        }
        Self {
            features: Matrix::from_vec(total_atoms, dim, features),
            intra: Arc::new(intra),
            inter: Arc::new(inter),
            fragment_of: Arc::new(fragment_of),
            n_fragments: frags,
            molecule_of_fragment: Arc::new(molecule_of_fragment),
            n_molecules: graphs.len(),
            atom_offsets,
            fragment_offsets,
        }
    }

    pub fn single(graph: &PreparedGraph) -> Self {
        Self::new(&[graph])
    }

    pub fn n_atoms(&self) -> usize {
        self.features.rows()
    }
}
