//! Controlled rough paths over a finite-dimensional driver: truncated tensor
//! algebra, geometric lifts, controlled paths, Lipschitz composition, rough
//! integration and a patched Picard solver for rough differential equations.

pub mod controlled;
pub mod error;
pub mod integral;
pub mod lipschitz;
pub mod oracle;
pub mod rde;
pub mod rough_path;
pub mod samples;
pub mod scenario;
pub mod tensor;
pub mod verify;

pub use controlled::{concatenate, ctrl_distance, ControlledPath};
pub use error::{Error, Result};
pub use rde::{solve, SolveReport, SolverConfig};
pub use rough_path::{lift_path, GeometricRoughPath, PiecewiseLinearPath};
pub use tensor::{BoxTensor, SymTensor, TensorSeries, Word};
