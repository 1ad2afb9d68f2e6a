//! Fragment-attributed graph neural networks for molecular property
//! prediction.
//!
//! Molecules are split into chemically meaningful fragments; a graph
//! network with separate intra- and inter-fragment weights produces one
//! scalar contribution per fragment, and the prediction is the sum of the
//! contributions plus a bias. The contributions double as the explanation.

pub mod autograd;
pub mod datagen;
pub mod explain;
pub mod fragmenter;
pub mod metrics;
pub mod molgraph;
pub mod render;
pub mod sealnet;
pub mod training;
