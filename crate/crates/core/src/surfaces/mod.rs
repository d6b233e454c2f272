//! Busemann-Hausdorff area of triangulated surfaces in R^3, boundary
//! measures, Finsler lengths and distances, and the isoperimetric and
//! convex-hull verifiers.

pub mod hull;

use serde::{Deserialize, Serialize};

use crate::cartan::area_integrand;
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::metrics::{check_validity, MetricSpec, ValidityReport};
use crate::sphere::complement_basis;

pub use hull::ConvexHull;
use hull::cross;

/// Piecewise-linear immersed surface.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImmersedPatch {
    pub points: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_loops: Vec<Vec<usize>>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm3(a: [f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

impl ImmersedPatch {
    /// Images of the mesh vertices under `x`.
    pub fn from_mesh(mesh: &TriMesh, x: impl Fn([f64; 2]) -> [f64; 3]) -> Self {
        Self {
            points: mesh.vertices.iter().map(|&u| x(u)).collect(),
            triangles: mesh.triangles.clone(),
            boundary_loops: mesh.boundary_loops(),
        }
    }

    /// Graph `u ↦ (u, f(u))` of vertex values.
    pub fn from_graph(mesh: &TriMesh, f: &[f64]) -> Result<Self> {
        if f.len() != mesh.num_vertices() {
            return Err(Error::DimensionMismatch { expected: mesh.num_vertices(), got: f.len() });
        }
        Ok(Self {
            points: mesh.vertices.iter().zip(f).map(|(u, v)| [u[0], u[1], *v]).collect(),
            triangles: mesh.triangles.clone(),
            boundary_loops: mesh.boundary_loops(),
        })
    }

    /// Flat disk of the given radius centered at `center`, oriented by `normal`.
    pub fn flat_disk(center: [f64; 3], normal: [f64; 3], radius: f64, rings: usize) -> Result<Self> {
        let basis = complement_basis(&normal)?;
        let (mut e1, e2) = ([basis[0][0], basis[0][1], basis[0][2]], [basis[1][0], basis[1][1], basis[1][2]]);
        let c = cross(e1, e2);
        if c[0] * normal[0] + c[1] * normal[1] + c[2] * normal[2] < 0.0 {
            e1 = [-e1[0], -e1[1], -e1[2]];
        }
        let mesh = TriMesh::disk([0.0, 0.0], radius, rings)?;
        Ok(Self::from_mesh(&mesh, |u| std::array::from_fn(|i| center[i] + u[0] * e1[i] + u[1] * e2[i])))
    }

    pub fn scaled(&self, t: f64) -> Self {
        let mut out = self.clone();
        out.points.iter_mut().for_each(|p| p.iter_mut().for_each(|c| *c *= t));
        out
    }

    /// `(X_u1 ∧ X_u2)` times the parameter area of triangle `t`.
    pub fn cell_vector(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|v| self.points[v]);
        let n = cross(sub(b, a), sub(c, a));
        [0.5 * n[0], 0.5 * n[1], 0.5 * n[2]]
    }

    pub fn centroid(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.triangles[t].map(|v| self.points[v]);
        std::array::from_fn(|i| (a[i] + b[i] + c[i]) / 3.0)
    }

    pub fn euclidean_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| norm3(self.cell_vector(t))).sum()
    }

    pub fn boundary_curves(&self) -> Vec<CurveSample> {
        self.boundary_loops
            .iter()
            .map(|lp| CurveSample { points: lp.iter().map(|&v| self.points[v]).collect(), closed: true })
            .collect()
    }

    pub fn boundary_points(&self) -> Vec<[f64; 3]> {
        self.boundary_loops.iter().flatten().map(|&v| self.points[v]).collect()
    }

    fn edge_scale(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in &self.triangles {
            for e in 0..3 {
                h = h.max(norm3(sub(self.points[t[e]], self.points[t[(e + 1) % 3]])));
            }
        }
        h
    }
}

/// Busemann-Hausdorff area: `Σ_T A^F(x_T, N_T)` with `N_T` the cell vector
/// and `x_T` the centroid.
pub fn finsler_area(patch: &ImmersedPatch, spec: &MetricSpec, order: usize) -> Result<f64> {
    if spec.dim != 3 {
        return Err(Error::UnsupportedDimension(spec.dim.saturating_sub(1)));
    }
    let h = patch.edge_scale();
    let mut total = 0.0;
    for t in 0..patch.triangles.len() {
        let n = patch.cell_vector(t);
        if !(norm3(n) > 1e-14 * h * h) {
            return Err(Error::DegenerateCell(t));
        }
        total += area_integrand(spec, &patch.centroid(t), &n, order)?;
    }
    Ok(total)
}

/// Doubles the resolution passed to `build` until the area moves by less
/// than `rel_tol` or `max_resolution` is reached. Returns the last area and
/// resolution.
pub fn finsler_area_refined(
    build: impl Fn(usize) -> Result<ImmersedPatch>,
    spec: &MetricSpec,
    order: usize,
    start_resolution: usize,
    max_resolution: usize,
    rel_tol: f64,
) -> Result<(f64, usize)> {
    let mut res = start_resolution.max(1);
    let mut area = finsler_area(&build(res)?, spec, order)?;
    while res * 2 <= max_resolution {
        res *= 2;
        let next = finsler_area(&build(res)?, spec, order)?;
        let done = (next - area).abs() <= rel_tol * next.abs();
        area = next;
        if done {
            break;
        }
    }
    Ok((area, res))
}

/// Polyline in R^3.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub points: Vec<[f64; 3]>,
    pub closed: bool,
}

impl CurveSample {
    pub fn new(points: Vec<[f64; 3]>, closed: bool) -> Self {
        Self { points, closed }
    }

    pub fn circle(center: [f64; 3], radius: f64, samples: usize) -> Self {
        let points = (0..samples)
            .map(|i| {
                let (s, c) = (2.0 * std::f64::consts::PI * i as f64 / samples as f64).sin_cos();
                [center[0] + radius * c, center[1] + radius * s, center[2]]
            })
            .collect();
        Self { points, closed: true }
    }

    /// Segments `(start, tangent)`; fails on repeated consecutive points.
    pub fn segments(&self) -> Result<Vec<([f64; 3], [f64; 3])>> {
        let n = self.points.len();
        let count = if self.closed { n } else { n.saturating_sub(1) };
        (0..count)
            .map(|i| {
                let (a, b) = (self.points[i], self.points[(i + 1) % n]);
                let t = sub(b, a);
                if norm3(t) == 0.0 {
                    Err(Error::DegenerateSegment(i))
                } else {
                    Ok((a, t))
                }
            })
            .collect()
    }

    pub fn euclidean_length(&self) -> Result<f64> {
        Ok(self.segments()?.iter().map(|(_, t)| norm3(*t)).sum())
    }
}

/// Busemann-Hausdorff length of a curve: the harmonic mean of the forward
/// and backward `F` per segment.
pub fn boundary_area_dsf(curve: &CurveSample, spec: &MetricSpec) -> Result<f64> {
    let mut total = 0.0;
    for (a, t) in curve.segments()? {
        let mid: [f64; 3] = std::array::from_fn(|i| a[i] + 0.5 * t[i]);
        let back = [-t[0], -t[1], -t[2]];
        let (f, b) = (spec.eval(&mid, &t)?, spec.eval(&mid, &back)?);
        total += 2.0 / (1.0 / f + 1.0 / b);
    }
    Ok(total)
}

/// `∫ F(Γ, Γ')` with three-point Gauss-Legendre per segment.
pub fn finsler_length(curve: &CurveSample, spec: &MetricSpec) -> Result<f64> {
    let nodes = [(0.5 - 0.5 * (0.6f64).sqrt(), 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + 0.5 * (0.6f64).sqrt(), 5.0 / 18.0)];
    let mut total = 0.0;
    for (a, t) in curve.segments()? {
        if spec.x_dependent {
            for (s, w) in nodes {
                let p: [f64; 3] = std::array::from_fn(|i| a[i] + s * t[i]);
                total += w * spec.eval(&p, &t)?;
            }
        } else {
            total += spec.eval(&a, &t)?;
        }
    }
    Ok(total)
}

/// `min_{x ∈ Γ} F(x - a)` over the polyline, exact per segment up to the
/// golden-section tolerance since `F` is convex.
pub fn finsler_dist(a: [f64; 3], curve: &CurveSample, spec: &MetricSpec) -> Result<f64> {
    if spec.x_dependent {
        return Err(Error::XDependentDistance);
    }
    let origin = [0.0; 3];
    let f_at = |s: f64, p: [f64; 3], t: [f64; 3]| -> Result<f64> {
        let d: [f64; 3] = std::array::from_fn(|i| p[i] + s * t[i] - a[i]);
        if norm3(d) == 0.0 {
            Ok(0.0)
        } else {
            spec.eval(&origin, &d)
        }
    };
    let mut best = f64::INFINITY;
    for p in &curve.points {
        best = best.min(f_at(0.0, *p, [0.0; 3])?);
    }
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for (p, t) in curve.segments()? {
        let (mut lo, mut hi) = (0.0, 1.0);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let (mut f1, mut f2) = (f_at(x1, p, t)?, f_at(x2, p, t)?);
        for _ in 0..80 {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f_at(x1, p, t)?;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f_at(x2, p, t)?;
            }
        }
        best = best.min(f1.min(f2));
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Isoperimetric {
    Isop1,
    Isop2,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IsopReport {
    pub which: Isoperimetric,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub center: [f64; 3],
    /// `R = max F(X - a)` over the boundary (isop1).
    pub radius: Option<f64>,
    /// `∫dS_F` (isop1) or `Σ L^F` (isop2).
    pub boundary_measure: f64,
    pub m_f: f64,
    pub big_m_f: f64,
    pub lambda_f: f64,
}

/// Both sides of the isoperimetric inequalities for a surface in R^3 and a
/// Minkowski metric; `validity_grid` controls the sampling of `m_F, M_F, Λ(F)`.
pub fn verify_isoperimetric(
    patch: &ImmersedPatch,
    spec: &MetricSpec,
    which: Isoperimetric,
    center: [f64; 3],
    order: usize,
    validity_grid: usize,
) -> Result<IsopReport> {
    if spec.x_dependent {
        return Err(Error::XDependentDistance);
    }
    let rep = check_validity(spec, 2, validity_grid)?;
    verify_isoperimetric_with(patch, spec, which, center, order, &rep)
}

/// As [`verify_isoperimetric`] with precomputed metric constants.
pub fn verify_isoperimetric_with(
    patch: &ImmersedPatch,
    spec: &MetricSpec,
    which: Isoperimetric,
    center: [f64; 3],
    order: usize,
    rep: &ValidityReport,
) -> Result<IsopReport> {
    let (mf, bigm, lam) = (rep.m_f(), rep.big_m_f(), rep.lambda_f);
    let m = 2.0;
    let lhs = finsler_area(patch, spec, order)?;
    let curves = patch.boundary_curves();
    let origin = [0.0; 3];
    let (rhs, radius, boundary_measure) = match which {
        Isoperimetric::Isop1 => {
            let mut r: f64 = 0.0;
            for p in patch.boundary_points() {
                let d = sub(p, center);
                if norm3(d) > 0.0 {
                    r = r.max(spec.eval(&origin, &d)?);
                }
            }
            let mut ds = 0.0;
            for c in &curves {
                ds += boundary_area_dsf(c, spec)?;
            }
            let k = (r / m) * (bigm / mf).powi(2) * (1.0 + lam * (m + 1.0) * (m / mf).powi(2)).sqrt();
            (k * ds, Some(r), ds)
        }
        Isoperimetric::Isop2 => {
            let k = (bigm * bigm / (mf * mf)) * (1.0 + 12.0 * lam / (mf * mf)).sqrt();
            let (mut sum, mut total_len) = (0.0, 0.0);
            for c in &curves {
                let l = finsler_length(c, spec)?;
                let d = finsler_dist(center, c, spec)?;
                sum += l * l / (4.0 * std::f64::consts::PI) + 0.5 * l * d;
                total_len += l;
            }
            (k * sum, None, total_len)
        }
    };
    Ok(IsopReport { which, lhs, rhs, holds: lhs <= rhs, center, radius, boundary_measure, m_f: mf, big_m_f: bigm, lambda_f: lam })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HullReport {
    /// Largest signed distance of a vertex outside the hull of the boundary (≤ 0 inside).
    pub max_outside: f64,
    pub worst_vertex: usize,
    pub boundary_points: usize,
    pub hull_faces: usize,
    pub planar: bool,
}

impl HullReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.max_outside <= tol
    }
}

/// Distance of the patch vertices outside the convex hull of its boundary.
pub fn convex_hull_check(patch: &ImmersedPatch) -> Result<HullReport> {
    let bpts = patch.boundary_points();
    let hull = ConvexHull::new(&bpts)?;
    let mut report = HullReport {
        max_outside: f64::NEG_INFINITY,
        worst_vertex: 0,
        boundary_points: bpts.len(),
        hull_faces: hull.num_faces(),
        planar: hull.is_planar(),
    };
    for (i, p) in patch.points.iter().enumerate() {
        let d = hull.outside_distance(*p);
        if d > report.max_outside {
            report.max_outside = d;
            report.worst_vertex = i;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn flat_disk_areas() {
        let e = MetricSpec::euclidean(3);
        let disk = ImmersedPatch::flat_disk([0.0; 3], [0.0, 0.0, 1.0], 1.0, 64).unwrap();
        assert!((finsler_area(&disk, &e, 16).unwrap() - PI).abs() < 2e-3);
        let r = MetricSpec::randers(&[0.0, 0.0, 0.5]);
        let side = ImmersedPatch::flat_disk([0.0; 3], [1.0, 0.0, 0.0], 1.0, 64).unwrap();
        let a = finsler_area(&side, &r, 64).unwrap();
        assert!((a - PI * 0.75f64.powf(1.5)).abs() < 5e-3);
        assert!((a - 2.0405).abs() < 5e-3);
    }

    #[test]
    fn area_scales_quadratically() {
        let r = MetricSpec::randers(&[0.1, 0.2, 0.3]);
        let mesh = TriMesh::disk([0.0, 0.0], 1.0, 6).unwrap();
        let p = ImmersedPatch::from_mesh(&mesh, |u| [u[0], u[1], 0.3 * u[0] * u[1]]);
        let a = finsler_area(&p, &r, 64).unwrap();
        let b = finsler_area(&p.scaled(2.7), &r, 64).unwrap();
        assert!((b - 2.7 * 2.7 * a).abs() <= 1e-10 * b);
    }

    #[test]
    fn reparametrization_invariance() {
        let r = MetricSpec::randers(&[0.0, 0.3, 0.2]);
        let mesh = TriMesh::disk([0.0, 0.0], 1.0, 40).unwrap();
        let surf = |u: [f64; 2]| [u[0], u[1], 0.4 * u[0] * u[0] - 0.2 * u[1]];
        let a = finsler_area(&ImmersedPatch::from_mesh(&mesh, surf), &r, 64).unwrap();
        // radial reparametrization ρ ↦ ρ(1 + ρ)/2 keeps the unit disk
        let warp = |u: [f64; 2]| {
            let rho = u[0].hypot(u[1]);
            let s = 0.5 * (1.0 + rho);
            surf([u[0] * s, u[1] * s])
        };
        let b = finsler_area(&ImmersedPatch::from_mesh(&mesh, warp), &r, 64).unwrap();
        assert!((a - b).abs() <= 1e-3 * a);
    }

    #[test]
    fn refinement_converges() {
        let e = MetricSpec::euclidean(3);
        let (a, res) = finsler_area_refined(|k| ImmersedPatch::flat_disk([0.0; 3], [0.0, 0.0, 1.0], 1.0, k), &e, 8, 4, 256, 1e-4).unwrap();
        assert!(res <= 256 && (a - PI).abs() < 1e-3);
    }

    #[test]
    fn area_sandwich_random_graphs() {
        let r = MetricSpec::randers(&[0.2, -0.1, 0.3]);
        let rep = check_validity(&r, 2, 64).unwrap();
        let mesh = TriMesh::disk([0.0, 0.0], 1.0, 6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let c: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let p = ImmersedPatch::from_mesh(&mesh, |u| [u[0], u[1], c[0] * u[0] + c[1] * u[1] * u[1] + c[2] * (3.0 * u[0] * u[1]).sin() + c[3]]);
            let (ae, af) = (p.euclidean_area(), finsler_area(&p, &r, 64).unwrap());
            assert!(rep.m_f().powi(2) * ae <= af && af <= rep.big_m_f().powi(2) * ae);
            let c = &p.boundary_curves()[0];
            let (le, lf) = (c.euclidean_length().unwrap(), boundary_area_dsf(c, &r).unwrap());
            assert!(rep.m_f() * le <= lf && lf <= rep.big_m_f() * le);
        }
    }

    #[test]
    fn boundary_measures() {
        let e = MetricSpec::euclidean(3);
        let circle = CurveSample::circle([0.0; 3], 1.0, 4096);
        let n = 4096.0;
        let polygon = n * 2.0 * (PI / n).sin();
        assert!((boundary_area_dsf(&circle, &e).unwrap() - polygon).abs() < 1e-10);
        assert!((boundary_area_dsf(&circle, &e).unwrap() - 2.0 * PI).abs() < 1e-6);
        assert!((finsler_length(&circle, &e).unwrap() - polygon).abs() < 1e-10);
        let r = MetricSpec::randers(&[0.0, 0.0, 0.5]);
        let seg = CurveSample::new(vec![[0.0; 3], [0.0, 0.0, 1.0]], false);
        assert!((boundary_area_dsf(&seg, &r).unwrap() - 0.75).abs() < 1e-14);
        assert!((finsler_length(&seg, &r).unwrap() - 1.5).abs() < 1e-14);
        let q = MetricSpec::perturbed_quartic(3, 1.0, None);
        let c = CurveSample::new(vec![[0.0; 3], [1.0, 0.2, 0.0], [0.5, 1.0, 0.3]], true);
        assert!((boundary_area_dsf(&c, &q).unwrap() - finsler_length(&c, &q).unwrap()).abs() < 1e-10);
        let bad = CurveSample::new(vec![[0.0; 3], [0.0; 3]], false);
        assert_eq!(boundary_area_dsf(&bad, &e), Err(Error::DegenerateSegment(0)));
    }

    #[test]
    fn lengths_and_distances() {
        let r = MetricSpec::randers(&[0.3, 0.0, 0.4]);
        let rep = check_validity(&r, 2, 64).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..10 {
            let pts: Vec<[f64; 3]> = (0..8).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
            let c = CurveSample::new(pts, rng.gen_bool(0.5));
            assert!(c.euclidean_length().unwrap() <= finsler_length(&c, &r).unwrap() / rep.m_f());
            let a = [rng.gen_range(-2.0..2.0), 0.5, 2.0];
            let df = finsler_dist(a, &c, &r).unwrap();
            let mut de = f64::INFINITY;
            for (p, t) in c.segments().unwrap() {
                for k in 0..=1000 {
                    let s = k as f64 / 1000.0;
                    de = de.min(norm(&std::array::from_fn::<f64, 3, _>(|i| p[i] + s * t[i] - a[i])));
                }
            }
            assert!(de <= df / rep.m_f() + 1e-9);
        }
        // point on the segment interior
        let seg = CurveSample::new(vec![[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]], false);
        assert!(finsler_dist([0.0, 0.0, 0.0], &seg, &r).unwrap() < 1e-8);
        let xdep = MetricSpec::custom(3, true, "xdep", |x, y| (1.0 + 0.1 * x[0].sin()) * norm(y));
        assert_eq!(finsler_dist([0.0; 3], &seg, &xdep), Err(Error::XDependentDistance));
    }

    #[test]
    fn isoperimetric_flat_disk() {
        let e = MetricSpec::euclidean(3);
        let disk = ImmersedPatch::flat_disk([0.0; 3], [0.0, 0.0, 1.0], 1.0, 32).unwrap();
        let r1 = verify_isoperimetric(&disk, &e, Isoperimetric::Isop1, [0.0; 3], 16, 32).unwrap();
        assert!(r1.holds);
        assert!((r1.radius.unwrap() - 1.0).abs() < 1e-12);
        let n = 192.0;
        let perimeter = n * 2.0 * (PI / n).sin();
        assert!((r1.rhs - 0.5 * 13f64.sqrt() * perimeter).abs() < 1e-9);
        let r2 = verify_isoperimetric(&disk, &e, Isoperimetric::Isop2, [0.0; 3], 16, 32).unwrap();
        assert!(r2.holds && r2.rhs > r2.lhs);
    }

    #[test]
    fn hull_of_flat_disk() {
        let disk = ImmersedPatch::flat_disk([0.1, 0.2, 0.3], [0.3, -0.2, 1.0], 1.0, 12).unwrap();
        let rep = convex_hull_check(&disk).unwrap();
        assert!(rep.planar);
        assert!(rep.max_outside.abs() < 1e-12);
        let mesh = TriMesh::disk([0.0, 0.0], 1.0, 12).unwrap();
        let bump = ImmersedPatch::from_mesh(&mesh, |u| [u[0], u[1], 1.0 - u[0] * u[0] - u[1] * u[1]]);
        let rep = convex_hull_check(&bump).unwrap();
        assert!((rep.max_outside - 1.0).abs() < 1e-12);
        let saddle = ImmersedPatch::from_mesh(&mesh, |u| [u[0], u[1], u[0] * u[0] - u[1] * u[1]]);
        let rep = convex_hull_check(&saddle).unwrap();
        assert!(!rep.planar && rep.max_outside <= 1e-12);
    }
}
