//! Numerical verification of stratification regularity conditions.
//!
//! The crate checks Verdier, Whitney and Thom-type regularity of explicit
//! stratified sets by sampling "wings" (curves approaching a base stratum),
//! measuring tangent-space gaps along them and classifying the limit
//! behaviour of the gap against the approach distance. A small refinement
//! engine partitions low-dimensional polynomial varieties until the checks
//! pass on every frontier pair.
//!
//! Everything is deterministic under a fixed seed: random draws go through
//! seeded ChaCha streams keyed by structural data, collections iterate in
//! sorted order, and reports contain no timestamps.

pub mod conditions;
pub mod expr;
pub mod limits;
pub mod numeric;
pub mod scene;
pub mod strata;
pub mod stratify;
pub mod subspace;

pub use expr::{Expr, ParseError, Polynomial, VarTable};
pub use scene::{BuiltScene, Scene};
pub use strata::{Stratification, Stratum, StratumPoint};
pub use stratify::{
    certify, initial_decomposition, rank_partition, refine, CertifyOutcome, CertifyStatus,
    DecomposeParams, RefineOutcome, RefineParams, RefineStatus, StratifyError,
};
pub use subspace::Subspace;
