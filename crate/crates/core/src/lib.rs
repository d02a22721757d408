//! Band structure, Weyl point and lattice Green function analysis for
//! periodic tight-binding Hamiltonians on Z^d.

pub mod bands;
pub mod critical;
pub mod error;
pub mod green;
pub mod lap;
pub mod oscillatory;
pub mod linalg;
pub mod model;
pub mod model_file;
pub mod quad;
pub mod reference;
pub mod torus;
pub mod weyl;

pub use error::{LapError, Result};
pub use linalg::{CMat, C64};
pub use model::{build_model, eval_symbol, HoppingModel, HoppingSpec, SymbolValue};
