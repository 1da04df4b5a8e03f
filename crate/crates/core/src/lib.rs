//! Random walks among random conductances on discrete tori: environment
//! samplers, exact heat kernels, Gaussian envelopes, chaining lower bounds,
//! moment scaling and Green kernels.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod chaining;
pub mod envelopes;
pub mod environment;
pub mod error;
pub mod green;
pub mod kernel;
pub mod lattice;
pub mod moments;
pub mod par;
pub mod report;
pub mod seed;
pub mod stats;

pub use environment::{ConductanceField, EnvironmentSpec};
pub use error::{RcmError, Result};
pub use lattice::TorusGeometry;
