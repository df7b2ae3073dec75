//! Problem instances, assignment-matrix algebra and ground-truth feasibility.

mod assignment;
mod distribution;
mod instance;
mod matrix;
pub mod presets;

pub use assignment::AssignmentMatrix;
pub use distribution::DistributionSpec;
pub use instance::ProblemInstance;
pub use matrix::Matrix;
