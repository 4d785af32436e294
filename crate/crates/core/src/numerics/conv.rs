//! 2-D cross-correlation and pooling on `N×C×H×W` tensors.

use super::tensor::Tensor;
use crate::error::{dim_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn out_hw(&self) -> (usize, usize) {
        (
            (self.h + 2 * self.pad - self.kh) / self.stride + 1,
            (self.w + 2 * self.pad - self.kw) / self.stride + 1,
        )
    }
}

/// Output spatial size, or a dimension error when the kernel does not fit.
pub fn conv_output_size(h: usize, w: usize, kh: usize, kw: usize, stride: usize, pad: usize) -> Result<(usize, usize)> {
    if stride == 0 {
        return dim_err("stride must be at least 1");
    }
    if kh == 0 || kw == 0 || kh > h + 2 * pad || kw > w + 2 * pad {
        return dim_err(format!(
            "kernel {kh}×{kw} does not fit input {h}×{w} with padding {pad}"
        ));
    }
    Ok(((h + 2 * pad - kh) / stride + 1, (w + 2 * pad - kw) / stride + 1))
}

fn geometry(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Result<ConvGeometry> {
    let (&[n, c, h, w], &[f, kc, kh, kw]) = (x.shape(), k.shape()) else {
        return dim_err(format!(
            "conv2d expects 4-D input and kernel, got {:?} and {:?}",
            x.shape(),
            k.shape()
        ));
    };
    if c != kc {
        return dim_err(format!("conv2d channel mismatch: input {c}, kernel {kc}"));
    }
    conv_output_size(h, w, kh, kw, stride, pad)?;
    Ok(ConvGeometry { n, c, h, w, f, kh, kw, stride, pad })
}

/// Cross-correlation (no kernel flip) with zero padding.
pub fn conv2d(x: &Tensor, k: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let g = geometry(x, k, stride, pad)?;
    let (oh, ow) = g.out_hw();
    let (xd, kd) = (x.data(), k.data());
    let mut out = vec![0.0; g.n * g.f * oh * ow];
    for n in 0..g.n {
        for f in 0..g.f {
            let o_base = (n * g.f + f) * oh * ow;
            for c in 0..g.c {
                let x_base = (n * g.c + c) * g.h * g.w;
                let k_base = (f * g.c + c) * g.kh * g.kw;
                for i in 0..g.kh {
                    for j in 0..g.kw {
                        let kv = kd[k_base + i * g.kw + j];
                        for y in 0..oh {
                            let iy = (y * g.stride + i) as isize - g.pad as isize;
                            if iy < 0 || iy >= g.h as isize {
                                continue;
                            }
                            let x_row = x_base + iy as usize * g.w;
                            for xo in 0..ow {
                                let ix = (xo * g.stride + j) as isize - g.pad as isize;
                                if ix < 0 || ix >= g.w as isize {
                                    continue;
                                }
                                out[o_base + y * ow + xo] += kv * xd[x_row + ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![g.n, g.f, oh, ow], out)
}

/// Gradients of `conv2d(x, k)` with respect to `x` and `k`.
pub fn conv2d_backward(
    x: &Tensor,
    k: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    pad: usize,
    need_input_grad: bool,
) -> Result<(Option<Tensor>, Tensor)> {
    let g = geometry(x, k, stride, pad)?;
    let (oh, ow) = g.out_hw();
    if grad_out.shape() != [g.n, g.f, oh, ow] {
        return dim_err(format!(
            "conv2d_backward: grad shape {:?} does not match output {:?}",
            grad_out.shape(),
            [g.n, g.f, oh, ow]
        ));
    }
    let (xd, kd, gd) = (x.data(), k.data(), grad_out.data());
    let mut gk = vec![0.0; k.len()];
    let mut gx = if need_input_grad { vec![0.0; x.len()] } else { Vec::new() };
    for n in 0..g.n {
        for f in 0..g.f {
            let o_base = (n * g.f + f) * oh * ow;
            for c in 0..g.c {
                let x_base = (n * g.c + c) * g.h * g.w;
                let k_base = (f * g.c + c) * g.kh * g.kw;
                for i in 0..g.kh {
                    for j in 0..g.kw {
                        let kv = kd[k_base + i * g.kw + j];
                        let mut acc = 0.0;
                        for y in 0..oh {
                            let iy = (y * g.stride + i) as isize - g.pad as isize;
                            if iy < 0 || iy >= g.h as isize {
                                continue;
                            }
                            let x_row = x_base + iy as usize * g.w;
                            for xo in 0..ow {
                                let ix = (xo * g.stride + j) as isize - g.pad as isize;
                                if ix < 0 || ix >= g.w as isize {
                                    continue;
                                }
                                let go = gd[o_base + y * ow + xo];
                                acc += go * xd[x_row + ix as usize];
                                if need_input_grad {
                                    gx[x_row + ix as usize] += go * kv;
                                }
                            }
                        }
                        gk[k_base + i * g.kw + j] += acc;
                    }
                }
            }
        }
    }
    let gk = Tensor::new(k.shape().to_vec(), gk)?;
    let gx = if need_input_grad {
        Some(Tensor::new(x.shape().to_vec(), gx)?)
    } else {
        None
    };
    Ok((gx, gk))
}

/// 2×2 max pooling with stride 2 (odd trailing rows/columns are dropped).
/// Returns the pooled tensor and the flat argmax index of each output.
pub fn max_pool2x2(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let &[n, c, h, w] = x.shape() else {
        return dim_err(format!("max pool expects a 4-D tensor, got {:?}", x.shape()));
    };
    if h < 2 || w < 2 {
        return dim_err(format!("max pool needs spatial size ≥ 2, got {h}×{w}"));
    }
    let (oh, ow) = (h / 2, w / 2);
    let xd = x.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut arg = Vec::with_capacity(n * c * oh * ow);
    for nc in 0..n * c {
        let base = nc * h * w;
        for y in 0..oh {
            for xo in 0..ow {
                let mut best = base + 2 * y * w + 2 * xo;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * w + 2 * xo + dx;
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                out.push(xd[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![n, c, oh, ow], out)?, arg))
}

pub fn max_pool2x2_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    if argmax.len() != grad_out.len() {
        return dim_err("max pool backward: argmax and gradient lengths differ");
    }
    let mut g = Tensor::zeros(input_shape);
    for (&idx, &go) in argmax.iter().zip(grad_out.data()) {
        g.data_mut()[idx] += go;
    }
    Ok(g)
}

/// Mean over spatial positions: `N×C×H×W → N×C`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    let &[n, c, h, w] = x.shape() else {
        return dim_err(format!("global pool expects a 4-D tensor, got {:?}", x.shape()));
    };
    let hw = h * w;
    let out = x
        .data()
        .chunks_exact(hw)
        .map(|s| s.iter().sum::<f64>() / hw as f64)
        .collect();
    Tensor::new(vec![n, c], out)
}

pub fn global_avg_pool_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let hw: usize = input_shape[2..].iter().product();
    let mut g = Tensor::zeros(input_shape);
    for (chunk, &go) in g.data_mut().chunks_exact_mut(hw).zip(grad_out.data()) {
        chunk.iter_mut().for_each(|v| *v = go / hw as f64);
    }
    Ok(g)
}
