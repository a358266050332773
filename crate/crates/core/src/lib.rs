//! Lattice stochastic quantisation of the renormalised quartic Langevin
//! dynamics on dyadic tori, with tree seminorms, verification harnesses and
//! Monte-Carlo estimators for the invariant measure.

pub mod dynamics;
pub mod error;
pub mod holder;
pub mod lattice;
pub mod noise;
pub mod potential;
pub mod quadrature;
pub mod renorm;
pub mod snapshot;
pub mod spectral;
pub mod stats;
pub mod trees;
pub mod verify;

pub use error::{Phi4Error, Result};
pub use lattice::{BoxCell, BoxRegion, Field, LatticeGrid, TestFunction};
pub use noise::{NoiseIncrement, NoiseStream};
pub use renorm::RenormConstants;
pub use trees::{Tree, TreeEnsemble};
