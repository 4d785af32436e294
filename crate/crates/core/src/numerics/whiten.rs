use super::linalg::{covariance, gemm_acc, sym_eigen};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Result of ZCA whitening: `xw = (x − mean) · transform`.
#[derive(Debug, Clone)]
pub struct Whitened {
    pub xw: Tensor,
    /// Symmetric `d×d` matrix `U diag(1/√(λ+eps)) Uᵀ`.
    pub transform: Tensor,
    pub mean: Tensor,
}

impl Whitened {
    /// Applies the fitted transform to new rows.
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        zca_apply(x, &self.mean, &self.transform)
    }
}

pub fn zca_whiten(x: &Tensor, eps: f64) -> Result<Whitened> {
    let (_, d) = x.dims2()?;
    if !x.is_finite() {
        return Err(Error::Value("zca_whiten: input contains non-finite values".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Value(format!("zca_whiten: eps must be positive, got {eps}")));
    }
    let (cov, mean) = covariance(x)?;
    let eig = sym_eigen(&cov)?;
    let mut transform = vec![0.0; d * d];
    for k in 0..d {
        let u = eig.vector(k);
        let s = 1.0 / (eig.values[k].max(0.0) + eps).sqrt();
        for i in 0..d {
            for j in 0..d {
                transform[i * d + j] += s * u[i] * u[j];
            }
        }
    }
    let transform = Tensor::new(vec![d, d], transform)?;
    let mean = Tensor::vector(mean);
    let xw = zca_apply(x, &mean, &transform)?;
    Ok(Whitened { xw, transform, mean })
}

fn zca_apply(x: &Tensor, mean: &Tensor, transform: &Tensor) -> Result<Tensor> {
    let (n, d) = x.dims2()?;
    if mean.len() != d || transform.shape() != [d, d] {
        return Err(Error::Dimension(format!(
            "zca transform is {:?} but data has {d} columns",
            transform.shape()
        )));
    }
    let mut centered = x.data().to_vec();
    for row in centered.chunks_exact_mut(d) {
        for (v, m) in row.iter_mut().zip(mean.data()) {
            *v -= m;
        }
    }
    let mut out = vec![0.0; n * d];
    gemm_acc(n, d, d, &centered, transform.data(), &mut out);
    Tensor::new(vec![n, d], out)
}
