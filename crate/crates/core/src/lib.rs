//! Hidden Bell-CHSH nonlocality of two-qubit states under local filtering.
//!
//! The closed-form test lives in [`correlation`]: build the Pauli correlation
//! matrix `R`, form `C = M R M R^T` with the Minkowski metric `M`, and compare
//! the sorted spectrum. [`filtering`] realizes the local filters and the normal
//! form, [`oracle`] searches filters by brute force as an independent check, and
//! [`survey`] estimates class volumes over states with one marginal maximally
//! mixed.

pub mod correlation;
pub mod error;
pub mod filtering;
pub mod linalg;
pub mod oracle;
pub mod qstate;
pub mod rng;
pub mod statefile;
pub mod survey;


pub use error::{Error, Result};

pub use qstate::{Side, TwoQubitState};
pub use rng::SeedStream;

pub use correlation::{analyze, CorrelationMatrix, CriterionReport, LorentzSpectrum, Tolerances};
pub use filtering::{LocalFilter, LorentzMap, NormalForm, NormalFormCase, NormalFormParams};
