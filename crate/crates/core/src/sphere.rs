//! Small vector helpers, orthonormal frames, Gauss-Legendre nodes and
//! deterministic sampling grids on S^2 and S^3.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn normalized(a: &[f64]) -> Result<Vec<f64>> {
    let n = norm(a);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::ZeroDirection);
    }
    Ok(a.iter().map(|v| v / n).collect())
}

/// H^k of the unit sphere S^k.
pub fn sphere_area(k: usize) -> f64 {
    match k {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (k as f64 - 1.0) * sphere_area(k - 2),
    }
}

/// H^k of the unit ball in R^k.
pub fn ball_volume(k: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        sphere_area(k - 1) / k as f64
    }
}

/// Orthonormal basis of the hyperplane `z^⊥`.
///
/// The basis is the image of the first `n - 1` coordinate axes under the
/// Householder reflection that sends `z/|z|` to `∓e_n`, so it depends only on
/// `z` and is reproducible across runs.
pub fn complement_basis(z: &[f64]) -> Result<Vec<Vec<f64>>> {
    let n = z.len();
    let zh = normalized(z)?;
    let sign = if zh[n - 1] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = zh.clone();
    v[n - 1] += sign;
    let vv = dot(&v, &v);
    let mut basis = Vec::with_capacity(n - 1);
    for i in 0..n - 1 {
        // H e_i = e_i - 2 v_i v / |v|^2
        let c = 2.0 * v[i] / vv;
        let mut col: Vec<f64> = v.iter().map(|vk| -c * vk).collect();
        col[i] += 1.0;
        basis.push(col);
    }
    Ok(basis)
}

/// Gauss-Legendre nodes and weights on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut t = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, t);
            dp = d;
            let dt = p / d;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, t);
        if d != 0.0 {
            dp = d;
        }
        let wi = 2.0 / ((1.0 - t * t) * dp * dp);
        x[i] = -t;
        x[n - 1 - i] = t;
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// P_n(t) and P_n'(t) by the three-term recurrence.
pub fn legendre_with_derivative(n: usize, t: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, t);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * t * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (t * p1 - p0) / (t * t - 1.0);
    (p1, d)
}

/// Deterministic sample of S^m in R^(m+1), flattened (m + 1 values per point).
///
/// m = 2: `res - 1` interior latitudes times `2 res` longitudes plus both poles.
/// m = 3: double-angle coordinates
/// `(cos η cos a, cos η sin a, sin η cos b, sin η sin b)`.
pub fn sample_sphere(m: usize, res: usize) -> Result<Vec<f64>> {
    let res = res.max(2);
    match m {
        2 => {
            let mut pts = Vec::with_capacity(3 * (2 * res * res + 2));
            pts.extend_from_slice(&[0.0, 0.0, 1.0]);
            for i in 1..res {
                let th = PI * i as f64 / res as f64;
                let (st, ct) = th.sin_cos();
                for j in 0..2 * res {
                    let ph = PI * j as f64 / res as f64;
                    let (sp, cp) = ph.sin_cos();
                    pts.extend_from_slice(&[st * cp, st * sp, ct]);
                }
            }
            pts.extend_from_slice(&[0.0, 0.0, -1.0]);
            Ok(pts)
        }
        3 => {
            let half = (res / 2).max(2);
            let mut pts = Vec::new();
            for i in 0..=half {
                let eta = 0.5 * PI * i as f64 / half as f64;
                let (se, ce) = eta.sin_cos();
                let na = if i == half { 1 } else { res };
                let nb = if i == 0 { 1 } else { res };
                for ia in 0..na {
                    let a = 2.0 * PI * ia as f64 / res as f64;
                    for ib in 0..nb {
                        let b = 2.0 * PI * ib as f64 / res as f64;
                        pts.extend_from_slice(&[ce * a.cos(), ce * a.sin(), se * b.cos(), se * b.sin()]);
                    }
                }
            }
            Ok(pts)
        }
        _ => Err(Error::UnsupportedDimension(m)),
    }
}

/// Symmetric eigenvalues in ascending order.
pub fn sym_eigenvalues(mat: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = mat.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    ev
}
