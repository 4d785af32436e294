//! Weight normalization: `w = g · v / ‖v‖` per output unit.
//!
//! Free functions act on a single weight vector; [`WeightNormParam`] applies
//! them row by row to a layer's `[units × fan_in]` direction matrix (a conv
//! layer's `[F × C × kh × kw]` kernel is treated as `F` rows of `C·kh·kw`).

use crate::error::{Error, Result};
use crate::numerics::tensor::{dot, norm, Tensor};

/// Norms below this are rejected as degenerate rather than rescued.
pub const MIN_DIRECTION_NORM: f64 = 1e-30;

fn checked_norm(v: &[f64], unit: usize) -> Result<f64> {
    let n = norm(v);
    if !(n >= MIN_DIRECTION_NORM) {
        return Err(Error::DegenerateDirection { unit, norm: n });
    }
    Ok(n)
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "vector lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// `w = (g/‖v‖) v`, returned with `‖v‖`.
pub fn compose(v: &[f64], g: f64) -> Result<(Vec<f64>, f64)> {
    let nv = checked_norm(v, 0)?;
    let s = g / nv;
    Ok((v.iter().map(|x| s * x).collect(), nv))
}

/// `∇g L = (∇w L · v) / ‖v‖`.
pub fn grad_g(grad_w: &[f64], v: &[f64]) -> Result<f64> {
    check_len(grad_w, v)?;
    let nv = checked_norm(v, 0)?;
    Ok(dot(grad_w, v) / nv)
}

/// `∇v L = (g/‖v‖) ∇w L − (g ∇g L / ‖v‖²) v`.
pub fn grad_v(grad_w: &[f64], v: &[f64], g: f64) -> Result<Vec<f64>> {
    check_len(grad_w, v)?;
    let nv = checked_norm(v, 0)?;
    let gg = dot(grad_w, v) / nv;
    let a = g / nv;
    let b = g * gg / (nv * nv);
    Ok(grad_w.iter().zip(v).map(|(gw, vi)| a * gw - b * vi).collect())
}

/// `∇v L = (g/‖v‖) M_w ∇w L` with `M_w = I − w wᵀ/‖w‖²`, applied without
/// forming the matrix.
pub fn grad_v_projected(grad_w: &[f64], v: &[f64], g: f64) -> Result<Vec<f64>> {
    check_len(grad_w, v)?;
    let nv = checked_norm(v, 0)?;
    let (w, _) = compose(v, g)?;
    // g = 0 collapses w; M_w is then taken along v, which spans the same line
    let axis = if g == 0.0 { v } else { &w };
    let projected = project_complement(grad_w, axis)?;
    let s = g / nv;
    Ok(projected.into_iter().map(|x| s * x).collect())
}

/// `u − w (w·u)/‖w‖²`: the component of `u` orthogonal to `w`.
pub fn project_complement(u: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    check_len(u, w)?;
    let nw = checked_norm(w, 0)?;
    let c = dot(w, u) / (nw * nw);
    Ok(u.iter().zip(w).map(|(ui, wi)| ui - c * wi).collect())
}

/// Chain rule through `g = exp(s)`: `∇s L = g ∇g L`.
pub fn grad_s(grad_g: f64, g: f64) -> Result<f64> {
    if !(g > 0.0) {
        return Err(Error::InvalidScale(g));
    }
    Ok(g * grad_g)
}

/// Relative tolerance for the orthogonality precondition of [`norm_growth_factor`].
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// `‖v + Δv‖ / ‖v‖ = √(1 + c²)` with `c = ‖Δv‖/‖v‖`, valid when `Δv ⟂ v`.
pub fn norm_growth_factor(delta_v: &[f64], v: &[f64]) -> Result<f64> {
    check_len(delta_v, v)?;
    let nv = checked_norm(v, 0)?;
    let nd = norm(delta_v);
    if dot(delta_v, v).abs() > ORTHOGONALITY_TOL * nd * nv {
        return Err(Error::Contract(format!(
            "update is not orthogonal to v: |Δv·v| = {:e}, ‖Δv‖‖v‖ = {:e}",
            dot(delta_v, v).abs(),
            nd * nv
        )));
    }
    let c = nd / nv;
    Ok((1.0 + c * c).sqrt())
}

/// Effective weights of a layer together with the `‖v‖` they were built from.
#[derive(Debug, Clone)]
pub struct ComposedWeight {
    pub w: Tensor,
    pub norm_v: Vec<f64>,
}

/// Direction `v`, scale `g` (optionally `g = exp(s)`) and cached `‖v‖`, one
/// entry per output unit.
#[derive(Debug, Clone)]
pub struct WeightNormParam {
    v: Tensor,
    g: Tensor,
    log_scale: Option<Tensor>,
    norms: Vec<f64>,
}

impl WeightNormParam {
    pub fn new(v: Tensor, g: Tensor) -> Result<Self> {
        Self::build(v, g, None)
    }

    /// Log-scale mode: the trainable scale is `s` and `g = exp(s)`.
    pub fn with_log_scale(v: Tensor, s: Tensor) -> Result<Self> {
        let g = s.map(f64::exp);
        Self::build(v, g, Some(s))
    }

    fn build(v: Tensor, g: Tensor, log_scale: Option<Tensor>) -> Result<Self> {
        if g.len() != v.shape()[0] {
            return Err(Error::Dimension(format!(
                "{} scales for {} units",
                g.len(),
                v.shape()[0]
            )));
        }
        let mut p = Self {
            v,
            g,
            log_scale,
            norms: Vec::new(),
        };
        p.refresh()?;
        Ok(p)
    }

    /// Recomputes `‖v‖` (and `g` from `s` in log-scale mode). Call after
    /// every update to `v` or the scale.
    pub fn refresh(&mut self) -> Result<()> {
        if let Some(s) = &self.log_scale {
            self.g = s.map(f64::exp);
        }
        self.norms = self
            .v
            .rows()
            .enumerate()
            .map(|(i, row)| checked_norm(row, i))
            .collect::<Result<_>>()?;
        Ok(())
    }

    pub fn units(&self) -> usize {
        self.v.shape()[0]
    }

    pub fn fan_in(&self) -> usize {
        self.v.len() / self.units()
    }

    pub fn v(&self) -> &Tensor {
        &self.v
    }

    pub fn g(&self) -> &Tensor {
        &self.g
    }

    pub fn is_log_scale(&self) -> bool {
        self.log_scale.is_some()
    }

    /// `g`, or `s` in log-scale mode: the scale tensor an optimizer updates.
    pub fn scale_param(&self) -> &Tensor {
        self.log_scale.as_ref().unwrap_or(&self.g)
    }

    pub fn norms(&self) -> &[f64] {
        &self.norms
    }

    /// Mutable trainable tensors `(v, g or s)`; call [`refresh`](Self::refresh) afterwards.
    pub fn trainable_mut(&mut self) -> (&mut Tensor, &mut Tensor) {
        let scale = self.log_scale.as_mut().unwrap_or(&mut self.g);
        (&mut self.v, scale)
    }

    /// Sets `g` directly (in log-scale mode, `s = ln g`, which needs `g > 0`).
    pub fn set_g(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.units() {
            return Err(Error::Dimension("scale length mismatch".into()));
        }
        if let Some(s) = &mut self.log_scale {
            for (si, &gi) in s.data_mut().iter_mut().zip(g) {
                if !(gi > 0.0) {
                    return Err(Error::InvalidScale(gi));
                }
                *si = gi.ln();
            }
        } else {
            self.g.data_mut().copy_from_slice(g);
        }
        self.refresh()
    }

    pub fn compose(&self) -> ComposedWeight {
        let mut w = self.v.clone();
        let fan = self.fan_in();
        for (i, row) in w.data_mut().chunks_exact_mut(fan).enumerate() {
            let s = self.g.data()[i] / self.norms[i];
            row.iter_mut().for_each(|x| *x *= s);
        }
        ComposedWeight {
            w,
            norm_v: self.norms.clone(),
        }
    }

    /// Maps `∇w L` (same shape as `v`) to `(∇v L, ∇g L or ∇s L)`.
    pub fn backprop(&self, grad_w: &Tensor) -> Result<(Tensor, Tensor)> {
        self.v.check_same_shape(grad_w)?;
        let fan = self.fan_in();
        let mut gv = Tensor::zeros(self.v.shape());
        let mut gscale = Tensor::zeros(&[self.units()]);
        for (i, (row_v, row_gw)) in self.v.rows().zip(grad_w.rows()).enumerate() {
            let nv = self.norms[i];
            let g = self.g.data()[i];
            let gg = dot(row_gw, row_v) / nv;
            let a = g / nv;
            let b = g * gg / (nv * nv);
            for (out, (gw, vi)) in gv.data_mut()[i * fan..(i + 1) * fan]
                .iter_mut()
                .zip(row_gw.iter().zip(row_v))
            {
                *out = a * gw - b * vi;
            }
            gscale.data_mut()[i] = if self.log_scale.is_some() {
                grad_s(gg, g)?
            } else {
                gg
            };
        }
        Ok((gv, gscale))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::{sample_normal, RngStream};
    use proptest::prelude::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn compose_examples() {
        assert_eq!(compose(&[3.0, 4.0], 10.0).unwrap().0, vec![6.0, 8.0]);
        assert_eq!(compose(&[1.0, 0.0, 0.0], 1.0).unwrap().0, vec![1.0, 0.0, 0.0]);
        let (w, _) = compose(&[1.0, 1.0], -2.0).unwrap();
        let r2 = 2f64.sqrt();
        assert!(close(&w, &[-r2, -r2], 1e-15));
        assert!((norm(&w) - 2.0).abs() < 1e-15);
        assert!(matches!(
            compose(&[0.0, 0.0], 1.0),
            Err(Error::DegenerateDirection { .. })
        ));
    }

    #[test]
    fn grad_g_examples() {
        assert_eq!(grad_g(&[1.0, 0.0], &[0.0, 2.0]).unwrap(), 0.0);
        assert!((grad_g(&[1.0, 1.0], &[1.0, 1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(grad_g(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn grad_v_examples() {
        assert!(close(&grad_v(&[0.0, 1.0], &[1.0, 0.0], 1.0).unwrap(), &[0.0, 1.0], 1e-15));
        let a = grad_v(&[1.0, 1.0], &[1.0, 0.0], 2.0).unwrap();
        let b = grad_v_projected(&[1.0, 1.0], &[1.0, 0.0], 2.0).unwrap();
        assert!(close(&a, &[0.0, 2.0], 1e-15));
        assert!(close(&b, &[0.0, 2.0], 1e-15));
    }

    #[test]
    fn projected_form_special_cases() {
        // grad_w ⟂ w: projection is the identity
        let v = [2.0, 0.0, 0.0];
        let gw = [0.0, 1.5, -3.0];
        let p = grad_v_projected(&gw, &v, 3.0).unwrap();
        assert!(close(&p, &[0.0, 1.5 * 1.5, -3.0 * 1.5], 1e-14));
        // grad_w ∥ w: null space
        let p = grad_v_projected(&[4.0, 0.0, 0.0], &v, 3.0).unwrap();
        assert!(p.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn project_complement_examples() {
        assert_eq!(project_complement(&[1.0, 1.0], &[1.0, 0.0]).unwrap(), vec![0.0, 1.0]);
        let u = [0.3, -1.2, 2.0];
        assert!(project_complement(&u, &u).unwrap().iter().all(|x| x.abs() < 1e-15));
        assert!(project_complement(&u, &[0.0; 3]).is_err());
        let mut rng = RngStream::new(1);
        let u = sample_normal(&mut rng, &[9], 0.0, 1.0);
        let w = sample_normal(&mut rng, &[9], 0.0, 1.0);
        let p = project_complement(u.data(), w.data()).unwrap();
        assert!(dot(&p, w.data()).abs() <= 1e-12 * u.norm() * w.norm());
    }

    #[test]
    fn grad_s_examples() {
        assert_eq!(grad_s(0.0, 2.0).unwrap(), 0.0);
        assert_eq!(grad_s(3.0, 1.0).unwrap(), 3.0);
        assert!(matches!(grad_s(1.0, 0.0), Err(Error::InvalidScale(_))));
        assert!(matches!(grad_s(1.0, -1.0), Err(Error::InvalidScale(_))));
    }

    #[test]
    fn norm_growth_examples() {
        assert_eq!(norm_growth_factor(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert!((norm_growth_factor(&[0.0, 3.0], &[3.0, 0.0]).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert!(matches!(
            norm_growth_factor(&[1.0, 1.0], &[1.0, 0.0]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn random_growth_factor_matches_direct_norm() {
        let mut rng = RngStream::new(31);
        for _ in 0..20 {
            let v = sample_normal(&mut rng, &[12], 0.0, 1.0);
            let raw = sample_normal(&mut rng, &[12], 0.0, 0.3);
            let dv = project_complement(raw.data(), v.data()).unwrap();
            let f = norm_growth_factor(&dv, v.data()).unwrap();
            let moved: Vec<f64> = v.data().iter().zip(&dv).map(|(a, b)| a + b).collect();
            assert!((norm(&moved) / v.norm() - f).abs() <= 1e-12);
        }
    }

    // Finite-difference oracle: L(w) = Σ c_i w_i + ½ Σ w_i² through compose.
    fn loss(v: &[f64], g: f64, c: &[f64]) -> f64 {
        let (w, _) = compose(v, g).unwrap();
        w.iter().zip(c).map(|(wi, ci)| ci * wi + 0.5 * wi * wi).sum()
    }

    fn grad_w_of_loss(v: &[f64], g: f64, c: &[f64]) -> Vec<f64> {
        let (w, _) = compose(v, g).unwrap();
        w.iter().zip(c).map(|(wi, ci)| ci + wi).collect()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-5;
        let mut rng = RngStream::new(17);
        let v = sample_normal(&mut rng, &[16], 0.0, 1.0);
        let c = sample_normal(&mut rng, &[16], 0.0, 1.0);
        let g = 1.7;
        let gw = grad_w_of_loss(v.data(), g, c.data());

        let fd_g = (loss(v.data(), g + h, c.data()) - loss(v.data(), g - h, c.data())) / (2.0 * h);
        assert!(rel_err(grad_g(&gw, v.data()).unwrap(), fd_g) < 1e-6);

        let gv = grad_v(&gw, v.data(), g).unwrap();
        for i in 0..16 {
            let mut vp = v.data().to_vec();
            let mut vm = v.data().to_vec();
            vp[i] += h;
            vm[i] -= h;
            let fd = (loss(&vp, g, c.data()) - loss(&vm, g, c.data())) / (2.0 * h);
            assert!(rel_err(gv[i], fd) < 1e-6, "coord {i}: {} vs {fd}", gv[i]);
        }

        let s = 0.4f64;
        let gs = grad_s(grad_g(&grad_w_of_loss(v.data(), s.exp(), c.data()), v.data()).unwrap(), s.exp()).unwrap();
        let fd_s = (loss(v.data(), (s + h).exp(), c.data()) - loss(v.data(), (s - h).exp(), c.data())) / (2.0 * h);
        assert!(rel_err(gs, fd_s) < 1e-6);
    }

    #[test]
    fn param_matches_free_functions() {
        let mut rng = RngStream::new(3);
        let v = sample_normal(&mut rng, &[4, 5], 0.0, 0.05);
        let g = Tensor::vector(vec![1.0, -0.5, 2.0, 0.25]);
        let p = WeightNormParam::new(v.clone(), g.clone()).unwrap();
        let gw = sample_normal(&mut rng, &[4, 5], 0.0, 1.0);
        let composed = p.compose();
        let (gv, gg) = p.backprop(&gw).unwrap();
        for i in 0..4 {
            let (w, nv) = compose(v.row(i), g.data()[i]).unwrap();
            assert!(close(composed.w.row(i), &w, 1e-15));
            assert_eq!(composed.norm_v[i], nv);
            assert!(close(gv.row(i), &grad_v(gw.row(i), v.row(i), g.data()[i]).unwrap(), 1e-14));
            assert!((gg.data()[i] - grad_g(gw.row(i), v.row(i)).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn log_scale_keeps_g_equal_exp_s() {
        let v = Tensor::from_rows(&[[1.0, 2.0], [0.5, -1.0]]).unwrap();
        let mut p = WeightNormParam::with_log_scale(v, Tensor::vector(vec![0.0, 1.0])).unwrap();
        assert_eq!(p.g().data(), &[1.0, 1f64.exp()]);
        p.trainable_mut().1.data_mut()[0] = -2.0;
        p.refresh().unwrap();
        assert_eq!(p.g().data()[0], (-2f64).exp());
        assert!(p.set_g(&[0.0, 1.0]).is_err());
    }

    #[test]
    fn zero_row_rejected() {
        let v = Tensor::from_rows(&[[1.0, 2.0], [0.0, 0.0]]).unwrap();
        assert!(matches!(
            WeightNormParam::new(v, Tensor::vector(vec![1.0, 1.0])),
            Err(Error::DegenerateDirection { unit: 1, .. })
        ));
    }

    fn vec_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64)> {
        (2usize..24).prop_flat_map(|k| {
            (
                prop::collection::vec(-3.0f64..3.0, k)
                    .prop_filter("non-degenerate", |v| norm(v) > 1e-3),
                prop::collection::vec(-3.0f64..3.0, k),
                -5.0f64..5.0,
            )
        })
    }

    proptest! {
        #[test]
        fn composed_norm_is_abs_g((v, _gw, g) in vec_strategy()) {
            let (w, _) = compose(&v, g).unwrap();
            prop_assert!((norm(&w) - g.abs()).abs() <= 1e-12 * g.abs().max(1.0));
        }

        #[test]
        fn both_gradient_forms_agree((v, gw, g) in vec_strategy()) {
            let a = grad_v(&gw, &v, g).unwrap();
            let b = grad_v_projected(&gw, &v, g).unwrap();
            let scale = norm(&a).max(norm(&b)).max(1e-300);
            let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
            prop_assert!(norm(&diff) <= 1e-10 * scale.max(g.abs() / norm(&v) * norm(&gw)));
        }

        #[test]
        fn v_gradient_is_orthogonal_to_v((v, gw, g) in vec_strategy()) {
            let a = grad_v(&gw, &v, g).unwrap();
            prop_assert!(dot(&a, &v).abs() <= 1e-10 * norm(&a).max(1e-12) * norm(&v) + 1e-14);
        }

        #[test]
        fn direction_is_scale_invariant((v, _gw, g) in vec_strategy(), alpha in 0.01f64..100.0) {
            let scaled: Vec<f64> = v.iter().map(|x| alpha * x).collect();
            let (w1, _) = compose(&v, g).unwrap();
            let (w2, _) = compose(&scaled, g).unwrap();
            prop_assert!(close(&w1, &w2, 1e-12 * g.abs().max(1.0)));
        }
    }
}
