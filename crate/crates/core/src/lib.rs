//! Rate-distortion functions for a product of two degraded sources with
//! side information at two decoders.
//!
//! The library computes and cross-validates the rate-distortion function of
//! a source `X = (X1, X2)` observed by one encoder and reproduced by two
//! decoders holding side information `Y = (Y1, Y2)` and `Z = (Z1, Z2)`
//! respectively, where the two component triples are independent and each
//! is degraded. It covers:
//!
//! - exact finite-alphabet information measures and degradedness tests
//!   ([`prob`], [`source`]);
//! - the rate objectives over auxiliary `(W, U)` layers, optimal decoder
//!   construction, and distortion feasibility ([`objective`]);
//! - constrained minimization of those objectives, the component-wise
//!   rates, the joint-vs-component gap, and a grid-enumeration oracle
//!   ([`optimizer`], [`oracle`]);
//! - the jointly Gaussian closed form with its own numeric oracle
//!   ([`gaussian`]);
//! - a block-coding simulator for the layered binning scheme that sends
//!   the XOR of the two extra bin indices ([`simulate`]);
//! - an exact auditor for the converse entropy inequality ([`lemma`]).

pub mod builtins;
pub mod config;
pub mod error;
pub mod gaussian;
pub mod lemma;
pub mod objective;
pub mod optimizer;
pub mod oracle;
pub mod prob;
pub mod report;
pub mod rng;
pub mod simulate;
pub mod source;

pub use error::{HbrdError, Result};
pub use source::{
    classify_degradedness, ComponentSource, DegradednessClass, DegradednessKind,
    DistortionQuadruple, DistortionSpec, ProductSource, Var,
};
