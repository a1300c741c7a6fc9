//! Dense linear algebra and seeded sampling.

mod eigen;
mod matrix;
mod rng;

pub use eigen::{dense_covariance_topk, gram_topk, sym_eig_topk, EigenPairs};
pub use matrix::{axpy, dot, gemm, matmul, matmul_t, t_matmul, Matrix};
pub use rng::{derive_seed, SeededRng};
