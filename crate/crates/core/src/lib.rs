//! Numerical checks for the fractional Gel'fand equation `(-Δ)^s u = e^u`:
//! the nonlocal operator, the extension, energies, stability and the
//! singular-set detector.

pub mod constants;
pub mod corpus;
pub mod energy;
pub mod error;
pub mod extension;
pub mod field;
pub mod geometry;
pub mod nonlocal;
pub mod oracle;
pub mod quad;
pub mod report;
pub mod regularity;
pub mod special;
pub mod stability;
pub mod suite;

pub use constants::{constants, ConstantSet, Params};
pub use error::{Error, Result};
pub use extension::ExtensionField;
pub use field::{Field, Lattice, Tail};
pub use geometry::Point;
pub use report::{Report, RunConfig};
