//! Deterministic dense-tensor kernel: linear algebra, convolution, statistics,
//! whitening and seeded sampling. Everything is `f64` and single-threaded.

pub mod conv;
pub mod linalg;
pub mod rng;
pub mod stats;
pub mod tensor;
pub mod whiten;

pub use conv::{conv2d, global_avg_pool, max_pool2x2};
pub use linalg::{covariance, matmul, matmul_tn, sym_eigen, SymEigen};
pub use rng::{sample_normal, RngStream};
pub use stats::mean_std;
pub use tensor::Tensor;
pub use whiten::{zca_whiten, Whitened};
