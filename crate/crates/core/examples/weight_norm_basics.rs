//! Composing `w = g·v/‖v‖`, the two forms of `∇v`, log-scale `g` and norm growth.

use weightnorm::numerics::tensor::{dot, norm};
use weightnorm::weight_norm::{compose, grad_g, grad_s, grad_v, grad_v_projected, norm_growth_factor};

fn main() -> weightnorm::Result<()> {
    let v = [3.0, 4.0];
    let g = 2.0;
    let (w, nv) = compose(&v, g)?;
    println!("v = {v:?}, g = {g} -> w = {w:?} (‖v‖ = {nv}, ‖w‖ = {})", norm(&w));

    let grad_w = [0.5, -1.0];
    let gv = grad_v(&grad_w, &v, g)?;
    let gp = grad_v_projected(&grad_w, &v, g)?;
    println!("∇g = {:.6}", grad_g(&grad_w, &v)?);
    println!("∇v (direct)    = {gv:?}");
    println!("∇v (projected) = {gp:?}");
    println!("∇v · v = {:.3e}  (the update is orthogonal to v)", dot(&gv, &v));

    // log-scale parameterization g = exp(s)
    let s = g.ln();
    println!("∇s with g = e^s: {:.6}", grad_s(grad_g(&grad_w, &v)?, s.exp())?);

    // one gradient step grows ‖v‖ by √(1 + c²)
    let lr = 0.5;
    let dv: Vec<f64> = gv.iter().map(|x| -lr * x).collect();
    let v2: Vec<f64> = v.iter().zip(&dv).map(|(a, b)| a + b).collect();
    println!(
        "‖v′‖/‖v‖ = {:.12}, predicted √(1+c²) = {:.12}",
        norm(&v2) / norm(&v),
        norm_growth_factor(&dv, &v)?
    );
    Ok(())
}
