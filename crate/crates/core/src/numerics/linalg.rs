use super::tensor::Tensor;
use crate::error::{dim_err, Result};

/// `c += a · b` for row-major `a: m×k`, `b: k×n`, `c: m×n`.
///
/// i-k-j order with a fixed summation order, so results are reproducible
/// bit-for-bit for identical inputs.
pub(crate) fn gemm_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        let a_row = &a[i * k..(i + 1) * k];
        for (l, &a_il) in a_row.iter().enumerate() {
            if a_il == 0.0 {
                continue;
            }
            let b_row = &b[l * n..(l + 1) * n];
            for (cj, &bj) in c_row.iter_mut().zip(b_row) {
                *cj += a_il * bj;
            }
        }
    }
}

/// `c += aᵀ · b` for `a: k×m`, `b: k×n`, `c: m×n`.
pub(crate) fn gemm_tn_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    for l in 0..k {
        let a_row = &a[l * m..(l + 1) * m];
        let b_row = &b[l * n..(l + 1) * n];
        for (i, &a_li) in a_row.iter().enumerate() {
            if a_li == 0.0 {
                continue;
            }
            let c_row = &mut c[i * n..(i + 1) * n];
            for (cj, &bj) in c_row.iter_mut().zip(b_row) {
                *cj += a_li * bj;
            }
        }
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return dim_err(format!("matmul inner dimensions differ: {m}×{k} by {k2}×{n}"));
    }
    let mut c = vec![0.0; m * n];
    gemm_acc(m, k, n, a.data(), b.data(), &mut c);
    Tensor::new(vec![m, n], c)
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_tn(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (k, m) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return dim_err(format!("matmul_tn leading dimensions differ: {k} vs {k2}"));
    }
    let mut c = vec![0.0; m * n];
    gemm_tn_acc(m, k, n, a.data(), b.data(), &mut c);
    Tensor::new(vec![m, n], c)
}

/// Population (1/n) covariance of the rows of `x: n×d` and their mean.
pub fn covariance(x: &Tensor) -> Result<(Tensor, Vec<f64>)> {
    let (n, d) = x.dims2()?;
    let mut mean = vec![0.0; d];
    for row in x.rows() {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut centered = x.data().to_vec();
    for row in centered.chunks_exact_mut(d) {
        for (v, m) in row.iter_mut().zip(&mean) {
            *v -= m;
        }
    }
    let mut c = vec![0.0; d * d];
    gemm_tn_acc(d, n, d, &centered, &centered, &mut c);
    c.iter_mut().for_each(|v| *v /= n as f64);
    // exact symmetry
    for i in 0..d {
        for j in 0..i {
            let s = 0.5 * (c[i * d + j] + c[j * d + i]);
            c[i * d + j] = s;
            c[j * d + i] = s;
        }
    }
    Ok((Tensor::new(vec![d, d], c)?, mean))
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, matching `values`.
    pub vectors: Tensor,
}

impl SymEigen {
    pub fn vector(&self, j: usize) -> Vec<f64> {
        let d = self.values.len();
        (0..d).map(|i| self.vectors.data()[i * d + j]).collect()
    }
}

/// Off-diagonal Frobenius mass at which the sweep stops, relative to ‖A‖_F.
pub const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 100;

pub fn sym_eigen(a: &Tensor) -> Result<SymEigen> {
    let (d, d2) = a.dims2()?;
    if d != d2 {
        return dim_err(format!("eigendecomposition needs a square matrix, got {d}×{d2}"));
    }
    let mut m = a.data().to_vec();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let total: f64 = m.iter().map(|x| x * x).sum::<f64>().sqrt();
    let off = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    s += m[i * d + j] * m[i * d + j];
                }
            }
        }
        s.sqrt()
    };

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off(&m) <= JACOBI_TOL * total || total == 0.0 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * d + p];
                let aqq = m[q * d + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // A ← Jᵀ A J on rows/cols p, q
                for k in 0..d {
                    let akp = m[k * d + p];
                    let akq = m[k * d + q];
                    m[k * d + p] = c * akp - s * akq;
                    m[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = m[p * d + k];
                    let aqk = m[q * d + k];
                    m[p * d + k] = c * apk - s * aqk;
                    m[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m[j * d + j].total_cmp(&m[i * d + i]));
    let values = order.iter().map(|&i| m[i * d + i]).collect();
    let mut vectors = vec![0.0; d * d];
    for (new_j, &old_j) in order.iter().enumerate() {
        for i in 0..d {
            vectors[i * d + new_j] = v[i * d + old_j];
        }
    }
    Ok(SymEigen {
        values,
        vectors: Tensor::new(vec![d, d], vectors)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::{sample_normal, RngStream};

    fn naive(a: &Tensor, b: &Tensor) -> Tensor {
        let (m, k) = a.dims2().unwrap();
        let (_, n) = b.dims2().unwrap();
        let mut c = Tensor::zeros(&[m, n]);
        for i in 0..m {
            for j in 0..n {
                let mut s = 0.0;
                for l in 0..k {
                    s += a.data()[i * k + l] * b.data()[l * n + j];
                }
                c.data_mut()[i * n + j] = s;
            }
        }
        c
    }

    #[test]
    fn identity_and_scalar() {
        let i2 = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let b = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(matmul(&i2, &b).unwrap(), b);
        let c = matmul(
            &Tensor::from_rows(&[[2.0]]).unwrap(),
            &Tensor::from_rows(&[[3.0]]).unwrap(),
        )
        .unwrap();
        assert_eq!(c.data(), &[6.0]);
    }

    #[test]
    fn random_matches_triple_loop() {
        let mut rng = RngStream::new(11);
        let a = sample_normal(&mut rng, &[7, 5], 0.0, 1.0);
        let b = sample_normal(&mut rng, &[5, 3], 0.0, 1.0);
        let c = matmul(&a, &b).unwrap();
        let r = naive(&a, &b);
        assert!(c.max_abs_diff(&r).unwrap() <= 1e-12 * r.max_abs().max(1.0));
        let ct = matmul_tn(&a.transpose().unwrap(), &b).unwrap();
        assert!(ct.max_abs_diff(&r).unwrap() <= 1e-12 * r.max_abs().max(1.0));
    }

    #[test]
    fn inner_dimension_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        assert!(matmul(&a, &a).is_err());
    }

    #[test]
    fn jacobi_reconstructs() {
        let mut rng = RngStream::new(5);
        let x = sample_normal(&mut rng, &[6, 6], 0.0, 1.0);
        let sym = matmul(&x.transpose().unwrap(), &x).unwrap();
        let e = sym_eigen(&sym).unwrap();
        let d = 6;
        // U diag(λ) Uᵀ == A
        let mut rec = Tensor::zeros(&[d, d]);
        for k in 0..d {
            let u = e.vector(k);
            for i in 0..d {
                for j in 0..d {
                    rec.data_mut()[i * d + j] += e.values[k] * u[i] * u[j];
                }
            }
        }
        assert!(rec.max_abs_diff(&sym).unwrap() < 1e-10 * sym.max_abs());
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn diagonal_input_is_fixed_point() {
        let a = Tensor::from_rows(&[[1.0, 0.0], [0.0, 3.0]]).unwrap();
        let e = sym_eigen(&a).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
    }
}
