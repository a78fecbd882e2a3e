//! Quantum hitting times of reversible Markov chains.
//!
//! Classical hitting times come from the spectrum of the deleted chain
//! `P₋z`. Quantum hitting times come from the spectrum of the search operator
//! `U₂U₁` built on the edge space, where `U₂ = SWAP·ref(A)` is the shifted
//! Szegedy walk and `U₁` reflects about the marked star state. Everything is
//! dense and exact up to floating point, sized for chains of a few dozen
//! states at most.

pub mod chains;
pub mod classical;
pub mod error;
pub mod linalg;
pub mod phase;
pub mod qht;
pub mod search;
pub mod szegedy;
pub mod tulsi;
pub mod verify;

pub use chains::{ChainSpec, Family, MarkovChain};
pub use classical::{
    classical_row, deleted_spectrum, ClassicalRow, DeletedSpectrum, HzDistribution,
};
pub use error::{Error, Result};
pub use linalg::{CVector, OrthogonalSpectrum};
pub use phase::{PEConfig, RotateReport};
pub use qht::{qht_chain, qht_eps_chain, DeviationReport, QHDistribution};
pub use search::{SearchEigensystem, TargetDecomposition};
pub use szegedy::{EdgeOperator, SearchOperator};
pub use tulsi::{FindReport, TulsiOperator};
pub use verify::{verify_chain, Tolerances, VerifyReport, Violation};
