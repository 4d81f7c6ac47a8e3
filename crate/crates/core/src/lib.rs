//! Floquet principal eigenvalue of time-periodic transport equations with an integral
//! source term, on truncated grids, with quantitative attraction certificates.

pub mod linalg;
pub mod model;
pub mod flow;
pub mod semiflow;
pub mod spectral;
pub mod harris;
pub mod cli;
