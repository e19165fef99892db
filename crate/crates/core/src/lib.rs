//! Steering assemblages with several characterised parties, and SDP/LP-based
//! certification of quantum, classical (LHS) and no-signalling explanations.
//!
//! The crate is organised as:
//! - [`matcore`]: dense complex/rational matrix kernel;
//! - [`sdp`]: a self-contained primal-dual interior-point SDP solver plus an
//!   SDPA-sparse exporter;
//! - [`model`]: scenarios, assemblages and quantum realizations;
//! - [`construct`]: assemblage generators and bundled example fixtures;
//! - [`certify`]: the certification engines (parent-state SDP, lambda
//!   relaxation, NPA and outer moment hierarchies, LHS membership);
//! - [`robustness`]: noise-robustness SDPs;
//! - [`bell`]: Bell functional evaluation on the uncharacterised parties;
//! - [`document`]: the JSON interchange formats used by the CLI.

pub mod bell;
pub mod certify;
pub mod construct;
pub mod document;
pub mod matcore;
pub mod model;
pub mod robustness;
pub mod sdp;

pub use matcore::{CMatrix, DimVector, HermitianMatrix, C64};
