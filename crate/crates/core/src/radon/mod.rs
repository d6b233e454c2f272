//! Spherical Radon (Funk) transform over great subspheres, its
//! (-1)-homogeneous extension to R^(m+1) \ {0} and the contracted
//! differentiation rule
//!
//! ```text
//! |Z|^2 ∂_σ R[g](Z) = -Σ_τ Z^τ R[∂_τ (y^σ g)](Z)
//! ```
//!
//! for (-m)-homogeneous `g`. Inversion on even band-limited functions lives
//! in [`funk`].

pub mod funk;

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricSpec;
use crate::sphere::{complement_basis, dot, gauss_legendre, norm, normalized, sample_sphere, sphere_area};

/// Default quadrature order for m = 2 (nodes on the great circle).
pub const DEFAULT_ORDER: usize = 256;

/// Nodes and weights on the great subsphere `S^m ∩ Z^⊥`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SphereQuadrature {
    pub center: Vec<f64>,
    /// Flattened unit vectors, `m + 1` entries per node.
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub order: usize,
    pub m: usize,
}

impl SphereQuadrature {
    /// m = 2: `order` equispaced nodes on the circle, weights `2π/order`.
    /// m = 3: `order/2` Gauss-Legendre latitudes times `order` longitudes on
    /// the 2-sphere `S^3 ∩ Z^⊥`.
    pub fn great_subsphere(z: &[f64], order: usize, m: usize) -> Result<Self> {
        if z.len() != m + 1 {
            return Err(Error::DimensionMismatch { expected: m + 1, got: z.len() });
        }
        if order < 4 {
            return Err(Error::InvalidArgument(format!("quadrature order {order} < 4")));
        }
        let center = normalized(z)?;
        let basis = complement_basis(&center)?;
        let n = m + 1;
        let (nodes, weights) = match m {
            2 => {
                let mut nodes = Vec::with_capacity(n * order);
                for j in 0..order {
                    let (s, c) = (2.0 * PI * j as f64 / order as f64).sin_cos();
                    nodes.extend((0..n).map(|i| c * basis[0][i] + s * basis[1][i]));
                }
                (nodes, vec![2.0 * PI / order as f64; order])
            }
            3 => {
                let (t, w) = gauss_legendre((order / 2).max(2));
                let mut nodes = Vec::with_capacity(n * t.len() * order);
                let mut weights = Vec::with_capacity(t.len() * order);
                for (ct, wt) in t.iter().zip(&w) {
                    let st = (1.0 - ct * ct).sqrt();
                    for j in 0..order {
                        let (sp, cp) = (2.0 * PI * j as f64 / order as f64).sin_cos();
                        nodes.extend((0..n).map(|i| st * cp * basis[0][i] + st * sp * basis[1][i] + ct * basis[2][i]));
                        weights.push(wt * 2.0 * PI / order as f64);
                    }
                }
                (nodes, weights)
            }
            _ => return Err(Error::UnsupportedDimension(m)),
        };
        Ok(Self { center, nodes, weights, order, m })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, i: usize) -> &[f64] {
        let n = self.m + 1;
        &self.nodes[i * n..(i + 1) * n]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.nodes.chunks(self.m + 1).zip(self.weights.iter().copied())
    }

    /// H^(m-1)(S^(m-1)).
    pub fn measure(&self) -> f64 {
        sphere_area(self.m - 1)
    }

    /// Normalized mean `(1/H^(m-1)) Σ w_j f(ω_j)`.
    pub fn mean(&self, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
        self.iter().map(|(y, w)| w * f(y)).sum::<f64>() / self.measure()
    }

    /// Fallible variant of [`mean`](Self::mean).
    pub fn try_mean(&self, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<f64> {
        let mut acc = 0.0;
        for (y, w) in self.iter() {
            acc += w * f(y)?;
        }
        Ok(acc / self.measure())
    }

    /// Normalized mean of a vector-valued integrand.
    pub fn try_mean_vec(&self, dim: usize, mut f: impl FnMut(&[f64], &mut [f64]) -> Result<()>) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; dim];
        let mut buf = vec![0.0; dim];
        for (y, w) in self.iter() {
            f(y, &mut buf)?;
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += w * b;
            }
        }
        let h = self.measure();
        acc.iter_mut().for_each(|a| *a /= h);
        Ok(acc)
    }
}

/// Spherical Radon transform of a sphere function at the unit direction of `zeta`.
pub fn spherical_radon(f: impl Fn(&[f64]) -> f64, zeta: &[f64], order: usize) -> Result<f64> {
    let m = zeta.len().saturating_sub(1);
    let q = SphereQuadrature::great_subsphere(zeta, order, m)?;
    Ok(q.mean(f))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parity {
    Even,
    Odd,
    None,
}

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A positively q-homogeneous function on R^(m+1) \ {0}.
#[derive(Clone)]
pub struct HomogeneousFunction {
    pub degree: f64,
    pub parity: Parity,
    pub dim: usize,
    eval: ScalarFn,
    gradient: Option<VectorFn>,
}

impl std::fmt::Debug for HomogeneousFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HomogeneousFunction")
            .field("degree", &self.degree)
            .field("parity", &self.parity)
            .field("dim", &self.dim)
            .finish()
    }
}

impl HomogeneousFunction {
    pub fn new(dim: usize, degree: f64, parity: Parity, eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { degree, parity, dim, eval: Arc::new(eval), gradient: None }
    }

    pub fn with_gradient(mut self, grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.gradient = Some(Arc::new(grad));
        self
    }

    /// Extends a sphere function q-homogeneously: `|y|^q f(y/|y|)`.
    pub fn from_sphere(dim: usize, degree: f64, parity: Parity, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self::new(dim, degree, parity, move |y| {
            let r = norm(y);
            let u: Vec<f64> = y.iter().map(|v| v / r).collect();
            r.powf(degree) * f(&u)
        })
    }

    /// `F(x, ·)^q` with its closed-form gradient `q F^(q-1) F_y`.
    pub fn metric_power(spec: &MetricSpec, x: &[f64], q: f64) -> Self {
        let (s1, s2) = (spec.clone(), spec.clone());
        let (x1, x2) = (x.to_vec(), x.to_vec());
        Self::new(spec.dim, q, Parity::None, move |y| s1.eval(&x1, y).map(|f| f.powf(q)).unwrap_or(f64::NAN))
            .with_gradient(move |y| match s2.value_and_gradient(&x2, y) {
                Ok((f, g)) => {
                    let c = q * f.powf(q - 1.0);
                    g.iter().map(|v| c * v).collect()
                }
                Err(_) => vec![f64::NAN; y.len()],
            })
    }

    /// The Euclidean `|y|^q`.
    pub fn euclidean_power(dim: usize, q: f64) -> Self {
        Self::new(dim, q, Parity::Even, move |y| norm(y).powf(q)).with_gradient(move |y| {
            let r = norm(y);
            let c = q * r.powf(q - 2.0);
            y.iter().map(|v| c * v).collect()
        })
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        (self.eval)(y)
    }

    /// Closed-form gradient when supplied, central differences otherwise.
    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        if let Some(g) = &self.gradient {
            return g(y);
        }
        let h = 1e-6 * norm(y);
        let mut p = y.to_vec();
        (0..y.len())
            .map(|i| {
                p[i] = y[i] + h;
                let a = self.eval(&p);
                p[i] = y[i] - h;
                let b = self.eval(&p);
                p[i] = y[i];
                (a - b) / (2.0 * h)
            })
            .collect()
    }

    /// Spot-checks homogeneity and declared parity at the given points.
    pub fn check_invariants(&self, points: &[Vec<f64>], rel_tol: f64) -> bool {
        points.iter().all(|y| {
            let v = self.eval(y);
            let scale = v.abs().max(1e-300);
            let homog = [0.5, 2.0, 7.0].iter().all(|&t| {
                let ty: Vec<f64> = y.iter().map(|c| t * c).collect();
                ((self.eval(&ty) - t.powf(self.degree) * v) / (t.powf(self.degree) * scale)).abs() <= rel_tol
            });
            let neg: Vec<f64> = y.iter().map(|c| -c).collect();
            let parity = match self.parity {
                Parity::Even => ((self.eval(&neg) - v) / scale).abs() <= rel_tol,
                Parity::Odd => ((self.eval(&neg) + v) / scale).abs() <= rel_tol,
                Parity::None => true,
            };
            homog && parity
        })
    }
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::ParamOutOfRange("integrand is not finite on the great subsphere".into()))
    }
}

/// `R[g](Z) = |Z|^-1 R̂[g|_{S^m}](Z/|Z|)`.
pub fn extended_radon(g: &HomogeneousFunction, z: &[f64], order: usize) -> Result<f64> {
    let r = norm(z);
    if r == 0.0 {
        return Err(Error::ZeroDirection);
    }
    let q = SphereQuadrature::great_subsphere(z, order, g.dim - 1)?;
    Ok(q.try_mean(|y| finite(g.eval(y)))? / r)
}

/// The contracted right-hand side `Σ_τ Z^τ R[∂_τ(y^σ g)](Z)` for every σ,
/// i.e. `Z^σ R[g](Z) + R[y^σ (Z·∇g)](Z)`.
pub fn radon_gradient_term(g: &HomogeneousFunction, z: &[f64], order: usize) -> Result<Vec<f64>> {
    let r = norm(z);
    if r == 0.0 {
        return Err(Error::ZeroDirection);
    }
    let n = g.dim;
    let q = SphereQuadrature::great_subsphere(z, order, n - 1)?;
    let mut acc = vec![0.0; n];
    let mut base = 0.0;
    for (y, w) in q.iter() {
        let v = finite(g.eval(y))?;
        let dg = g.gradient(y);
        let zdg = finite(dot(z, &dg))?;
        base += w * v;
        for (a, yi) in acc.iter_mut().zip(y) {
            *a += w * yi * zdg;
        }
    }
    let h = q.measure();
    Ok((0..n).map(|s| (z[s] * base + acc[s]) / (h * r)).collect())
}

/// `∇_Z R[g](Z)` from the contracted differentiation rule.
pub fn extended_radon_gradient(g: &HomogeneousFunction, z: &[f64], order: usize) -> Result<Vec<f64>> {
    let r2 = dot(z, z);
    Ok(radon_gradient_term(g, z, order)?.into_iter().map(|t| -t / r2).collect())
}

/// `ρ_k(f)`: the largest |D^α f| with |α| ≤ k over a sample of S^m (k ≤ 1).
pub fn seminorm_rho(f: impl Fn(&[f64]) -> f64, dim: usize, k: usize, grid_resolution: usize) -> Result<f64> {
    if k > 1 {
        return Err(Error::InvalidArgument(format!("seminorm order {k} > 1 is not supported")));
    }
    let pts = sample_sphere(dim - 1, grid_resolution)?;
    let h = 1e-6;
    let mut best: f64 = 0.0;
    let mut p = vec![0.0; dim];
    for y in pts.chunks(dim) {
        best = best.max(f(y).abs());
        if k == 1 {
            p.copy_from_slice(y);
            for i in 0..dim {
                p[i] = y[i] + h;
                let a = f(&p);
                p[i] = y[i] - h;
                let b = f(&p);
                p[i] = y[i];
                best = best.max(((a - b) / (2.0 * h)).abs());
            }
        }
    }
    Ok(best)
}
