use super::MolecularGraph;
use crate::autograd::Matrix;

/// Atom types with a dedicated one-hot column; anything else maps to the
/// trailing "other" column.
pub const ELEMENT_VOCABULARY: [&str; 10] = ["C", "N", "O", "F", "Cl", "Br", "P", "S", "B", "I"];
pub const FEATURE_DIM: usize = ELEMENT_VOCABULARY.len() + 1;

/// `N x FEATURE_DIM` one-hot atom-type matrix. No bond features exist.
pub type FeatureMatrix = Matrix;

pub fn element_index(element: &str) -> usize {
    ELEMENT_VOCABULARY
        .iter()
        .position(|e| *e == element)
        .unwrap_or(FEATURE_DIM - 1)
}

pub fn featurize(graph: &MolecularGraph) -> FeatureMatrix {
    let mut x = Matrix::zeros(graph.n_atoms(), FEATURE_DIM);
    for (i, atom) in graph.atoms().iter().enumerate() {
        x.set(i, element_index(&atom.element), 1.0);
    }
    x
}
