//! Small linear-algebra kernels: 3×3 symmetric eigenvalues, a CSR sparse
//! matrix and an envelope Cholesky factorization.

pub mod skyline;
pub mod sparse;
pub mod sym3;

pub use skyline::SkylineCholesky;
pub use sparse::CsrMatrix;
pub use sym3::Mat3;
