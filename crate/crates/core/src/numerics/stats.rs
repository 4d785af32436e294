use super::tensor::Tensor;
use crate::error::{dim_err, Result};

/// Mean and population (1/n) standard deviation over `axes`.
///
/// The result keeps the non-reduced axes in order; reducing every axis gives
/// shape `[1]`.
pub fn mean_std(t: &Tensor, axes: &[usize]) -> Result<(Tensor, Tensor)> {
    let rank = t.rank();
    if axes.is_empty() {
        return dim_err("mean_std: no reduction axes given");
    }
    let mut reduced = vec![false; rank];
    for &a in axes {
        if a >= rank || reduced[a] {
            return dim_err(format!("mean_std: invalid axes {axes:?} for rank {rank}"));
        }
        reduced[a] = true;
    }
    let shape = t.shape();
    let kept: Vec<usize> = (0..rank).filter(|&a| !reduced[a]).map(|a| shape[a]).collect();
    let out_shape = if kept.is_empty() { vec![1] } else { kept };
    let out_len: usize = out_shape.iter().product();
    let count = t.len() / out_len;

    // output index of every input position
    let mut out_index = vec![0usize; t.len()];
    let mut idx = vec![0usize; rank];
    for slot in out_index.iter_mut() {
        let mut o = 0;
        for a in 0..rank {
            if !reduced[a] {
                o = o * shape[a] + idx[a];
            }
        }
        *slot = o;
        for a in (0..rank).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }

    let mut mean = vec![0.0; out_len];
    for (&o, &x) in out_index.iter().zip(t.data()) {
        mean[o] += x;
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut var = vec![0.0; out_len];
    for (&o, &x) in out_index.iter().zip(t.data()) {
        let d = x - mean[o];
        var[o] += d * d;
    }
    let std = var.iter().map(|v| (v / count as f64).sqrt()).collect();
    Ok((
        Tensor::new(out_shape.clone(), mean)?,
        Tensor::new(out_shape, std)?,
    ))
}

/// Per-column mean of a 2-D tensor.
pub fn column_mean(t: &Tensor) -> Result<Vec<f64>> {
    let (n, _) = t.dims2()?;
    let mut s = column_sum(t)?;
    s.iter_mut().for_each(|v| *v /= n as f64);
    Ok(s)
}

pub fn column_sum(t: &Tensor) -> Result<Vec<f64>> {
    let (_, d) = t.dims2()?;
    let mut s = vec![0.0; d];
    for row in t.rows() {
        for (a, b) in s.iter_mut().zip(row) {
            *a += b;
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::{sample_normal, RngStream};

    #[test]
    fn hand_computed() {
        let t = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let (m, s) = mean_std(&t, &[0]).unwrap();
        assert_eq!(m.data(), &[2.0]);
        assert!((s.data()[0] - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn constant_has_zero_std() {
        let t = Tensor::full(&[5], 3.25);
        let (_, s) = mean_std(&t, &[0]).unwrap();
        assert_eq!(s.data(), &[0.0]);
    }

    #[test]
    fn random_vector_matches_two_pass() {
        let mut rng = RngStream::new(2);
        let t = sample_normal(&mut rng, &[100], 1.0, 3.0);
        let n = 100.0;
        let mut sum = 0.0;
        for x in t.data() {
            sum += x;
        }
        let mean = sum / n;
        let mut ss = 0.0;
        for x in t.data() {
            ss += (x - mean) * (x - mean);
        }
        let (m, s) = mean_std(&t, &[0]).unwrap();
        assert!((m.data()[0] - mean).abs() <= 1e-12);
        assert!((s.data()[0] - (ss / n).sqrt()).abs() <= 1e-12);
    }

    #[test]
    fn per_channel_over_batch_and_space() {
        let mut rng = RngStream::new(4);
        let t = sample_normal(&mut rng, &[3, 2, 4, 4], 0.0, 1.0);
        let (m, s) = mean_std(&t, &[0, 2, 3]).unwrap();
        assert_eq!(m.shape(), &[2]);
        for c in 0..2 {
            let vals: Vec<f64> = (0..3)
                .flat_map(|n| t.data()[(n * 2 + c) * 16..(n * 2 + c + 1) * 16].to_vec())
                .collect();
            let mean = vals.iter().sum::<f64>() / 48.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 48.0;
            assert!((m.data()[c] - mean).abs() < 1e-12);
            assert!((s.data()[c] - var.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_or_bad_axes() {
        let t = Tensor::zeros(&[2, 2]);
        assert!(mean_std(&t, &[]).is_err());
        assert!(mean_std(&t, &[2]).is_err());
        assert!(mean_std(&t, &[0, 0]).is_err());
    }
}
