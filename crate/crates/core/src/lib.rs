//! Structure-preserving simulation of incompressible Euler flow on the sphere
//! through its su(N) matrix quantization.

pub mod analysis;
pub mod basis;
pub mod cli;
pub mod cmat;
pub mod error;
pub mod initial;
pub mod integrate;
pub mod laplacian;
pub mod point_vortex;
pub mod sim;
pub mod sphere;
pub mod wigner;

pub use basis::{coeffs_to_matrix, matrix_to_coeffs, QuantBasis, SpectralCoeffs};
pub use cmat::{CMatrix, VorticityMatrix};
pub use error::{Error, Result};
pub use laplacian::LaplacianOperator;
