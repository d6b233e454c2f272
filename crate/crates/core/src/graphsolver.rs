//! Finsler-minimal graphs over planar domains: minimization of the discrete
//! energy `E_h[f] = Σ_T |T| A^F((-∇f_T, 1))` over P1 functions with
//! Dirichlet data by damped Newton.

use std::io::Write;

use nalgebra_sparse::{CooMatrix, CsrMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cartan::{area_gradient, area_integrand, area_value_and_gradient};
use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::metrics::{check_ga, MetricSpec};

/// Quadrature order for the graph energy; spectrally accurate for the zoo at |b| ≤ 0.5.
pub const DEFAULT_QUAD_ORDER: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Stop when the interior gradient max-norm is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// Eigenvalue floor for the per-triangle Hessian blocks.
    pub hessian_floor: f64,
    /// Relative negative curvature that counts as lost ellipticity.
    pub ellipticity_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 100, hessian_floor: 1e-10, ellipticity_tol: 1e-8 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphProblem {
    pub mesh: TriMesh,
    /// One value per vertex; only boundary entries are used.
    pub boundary_values: Vec<f64>,
    pub metric: MetricSpec,
    #[serde(default = "default_quad")]
    pub quad_order: usize,
    #[serde(default)]
    pub options: SolverOptions,
}

fn default_quad() -> usize {
    DEFAULT_QUAD_ORDER
}

#[derive(Clone, Debug, PartialEq)]
pub enum Initial {
    Zero,
    AffineFit,
    Custom(Vec<f64>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphSolution {
    pub values: Vec<f64>,
    pub energy: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub triangle_gradients: Vec<[f64; 2]>,
    pub energy_history: Vec<f64>,
    pub boundary_flags: Vec<bool>,
}

impl GraphSolution {
    /// CSV columns `vertex,f`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["vertex", "f"])?;
        for (i, v) in self.values.iter().enumerate() {
            wr.write_record([i.to_string(), format!("{v:.17e}")])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> SolutionSummary {
        SolutionSummary { energy: self.energy, iterations: self.iterations, residual: self.gradient_norm }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub energy: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl GraphProblem {
    pub fn new(mesh: TriMesh, metric: MetricSpec, data: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let boundary_values = mesh.vertices.iter().zip(&mesh.boundary).map(|(p, b)| if *b { data(*p) } else { 0.0 }).collect();
        let p = Self { mesh, boundary_values, metric, quad_order: DEFAULT_QUAD_ORDER, options: SolverOptions::default() };
        p.validate()?;
        Ok(p)
    }

    pub fn with_quad_order(mut self, n: usize) -> Self {
        self.quad_order = n;
        self
    }

    pub fn with_options(mut self, options: SolverOptions) -> Self {
        self.options = options;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.metric.dim != 3 {
            return Err(Error::UnsupportedDimension(self.metric.dim.saturating_sub(1)));
        }
        if self.metric.x_dependent {
            return Err(Error::InvalidArgument("graph solver requires a Minkowski metric".into()));
        }
        if self.boundary_values.len() != self.mesh.num_vertices() {
            return Err(Error::DimensionMismatch { expected: self.mesh.num_vertices(), got: self.boundary_values.len() });
        }
        if !(self.options.tol > 0.0) || !(self.options.hessian_floor > 0.0) || !(self.options.ellipticity_tol > 0.0) {
            return Err(Error::InvalidArgument("solver tolerances must be positive".into()));
        }
        self.mesh.validate()
    }

    /// Whether the metric and its symmetrization are both Finsler on a grid of the given resolution.
    pub fn ga_holds(&self, grid_resolution: usize) -> Result<bool> {
        Ok(check_ga(&self.metric, 2, grid_resolution)?.holds)
    }

    fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.mesh.num_vertices() {
            return Err(Error::DimensionMismatch { expected: self.mesh.num_vertices(), got: f.len() });
        }
        Ok(())
    }

    fn triangle_gradient(&self, t: usize, f: &[f64]) -> [f64; 2] {
        let g = self.mesh.basis_gradients(t);
        let tri = self.mesh.triangles[t];
        let mut p = [0.0; 2];
        for k in 0..3 {
            p[0] += f[tri[k]] * g[k][0];
            p[1] += f[tri[k]] * g[k][1];
        }
        p
    }

    pub fn triangle_gradients(&self, f: &[f64]) -> Vec<[f64; 2]> {
        (0..self.mesh.num_triangles()).map(|t| self.triangle_gradient(t, f)).collect()
    }

    /// Copy of `f` with boundary entries replaced by the data.
    pub fn impose_boundary(&self, f: &[f64]) -> Vec<f64> {
        f.iter().zip(&self.boundary_values).zip(&self.mesh.boundary).map(|((v, g), b)| if *b { *g } else { *v }).collect()
    }

    /// Initial guess.
    pub fn initial(&self, init: &Initial) -> Result<Vec<f64>> {
        match init {
            Initial::Zero => Ok(self.impose_boundary(&vec![0.0; self.mesh.num_vertices()])),
            Initial::AffineFit => {
                let (a, b, c) = self.affine_fit()?;
                let f: Vec<f64> = self.mesh.vertices.iter().map(|p| a * p[0] + b * p[1] + c).collect();
                Ok(self.impose_boundary(&f))
            }
            Initial::Custom(f) => {
                self.check_len(f)?;
                Ok(self.impose_boundary(f))
            }
        }
    }

    /// Random smooth interior start: affine fit plus seeded low modes and noise.
    pub fn random_initial(&self, seed: u64, amplitude: f64) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-amplitude..amplitude)).collect();
        let mut f = self.initial(&Initial::AffineFit)?;
        for (i, p) in self.mesh.vertices.iter().enumerate() {
            if !self.mesh.boundary[i] {
                f[i] += c[0] * (2.0 * p[0]).sin() + c[1] * (3.0 * p[1]).cos() + c[2] * p[0] * p[1] + c[3] * (p[0] - p[1]).cos()
                    + c[4] * p[1] * p[1]
                    + c[5]
                    + 0.01 * amplitude * rng.gen_range(-1.0..1.0);
            }
        }
        Ok(f)
    }

    /// Least-squares `a u + b v + c` through the boundary data.
    pub fn affine_fit(&self) -> Result<(f64, f64, f64)> {
        let mut ata = nalgebra::Matrix3::zeros();
        let mut atb = nalgebra::Vector3::zeros();
        for (i, p) in self.mesh.vertices.iter().enumerate() {
            if self.mesh.boundary[i] {
                let row = nalgebra::Vector3::new(p[0], p[1], 1.0);
                ata += row * row.transpose();
                atb += row * self.boundary_values[i];
            }
        }
        let sol = ata.lu().solve(&atb).ok_or_else(|| Error::NumericalBreakdown("boundary points are collinear".into()))?;
        Ok((sol[0], sol[1], sol[2]))
    }
}

/// `E_h[f]`.
pub fn discrete_energy(problem: &GraphProblem, f: &[f64]) -> Result<f64> {
    problem.check_len(f)?;
    let x = [0.0; 3];
    let mut e = 0.0;
    for t in 0..problem.mesh.num_triangles() {
        let p = problem.triangle_gradient(t, f);
        e += problem.mesh.area(t) * area_integrand(&problem.metric, &x, &[-p[0], -p[1], 1.0], problem.quad_order)?;
    }
    Ok(e)
}

/// `∂E_h/∂f_i`, zero at boundary vertices.
pub fn discrete_energy_gradient(problem: &GraphProblem, f: &[f64]) -> Result<Vec<f64>> {
    problem.check_len(f)?;
    let x = [0.0; 3];
    let mut grad = vec![0.0; f.len()];
    for t in 0..problem.mesh.num_triangles() {
        let p = problem.triangle_gradient(t, f);
        let az = area_gradient(&problem.metric, &x, &[-p[0], -p[1], 1.0], problem.quad_order)?;
        scatter_gradient(problem, t, &az, &mut grad);
    }
    for (g, b) in grad.iter_mut().zip(&problem.mesh.boundary) {
        if *b {
            *g = 0.0;
        }
    }
    Ok(grad)
}

fn scatter_gradient(problem: &GraphProblem, t: usize, az: &[f64], grad: &mut [f64]) {
    let g = problem.mesh.basis_gradients(t);
    let area = problem.mesh.area(t);
    for (k, v) in problem.mesh.triangles[t].iter().enumerate() {
        grad[*v] -= area * (az[0] * g[k][0] + az[1] * g[k][1]);
    }
}

struct Assembly {
    energy: f64,
    grad: Vec<f64>,
    hessian: CsrMatrix<f64>,
}

/// Energy, gradient and the floored Newton matrix on interior unknowns.
fn assemble(problem: &GraphProblem, f: &[f64], index: &[Option<usize>], n_int: usize) -> Result<Assembly> {
    let x = [0.0; 3];
    let n = problem.quad_order;
    let opts = &problem.options;
    let mut energy = 0.0;
    let mut grad = vec![0.0; f.len()];
    let mut coo = CooMatrix::new(n_int, n_int);
    for t in 0..problem.mesh.num_triangles() {
        let p = problem.triangle_gradient(t, f);
        let z = [-p[0], -p[1], 1.0];
        let (a, az) = area_value_and_gradient(&problem.metric, &x, &z, n)?;
        let area = problem.mesh.area(t);
        energy += area * a;
        scatter_gradient(problem, t, &az, &mut grad);
        // 2×2 block of A_ZZ by central differences of the analytic gradient.
        let h = 1e-5 * (1.0 + p[0] * p[0] + p[1] * p[1]).sqrt();
        let mut k = [[0.0; 2]; 2];
        for j in 0..2 {
            let mut zp = z;
            zp[j] += h;
            let mut zm = z;
            zm[j] -= h;
            let gp = area_gradient(&problem.metric, &x, &zp, n)?;
            let gm = area_gradient(&problem.metric, &x, &zm, n)?;
            for i in 0..2 {
                k[i][j] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        let off = 0.5 * (k[0][1] + k[1][0]);
        let (tr, det) = (k[0][0] + k[1][1], k[0][0] * k[1][1] - off * off);
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        let (l1, l2) = (0.5 * tr - disc, 0.5 * tr + disc);
        if l1 < -opts.ellipticity_tol * l2.abs().max(1.0) {
            return Err(Error::EllipticityLost { triangle: t, lambda: l1 });
        }
        let kf = floor_block([[k[0][0], off], [off, k[1][1]]], l1, l2, opts.hessian_floor);
        let g = problem.mesh.basis_gradients(t);
        let tri = problem.mesh.triangles[t];
        for a_ in 0..3 {
            let Some(ia) = index[tri[a_]] else { continue };
            for b_ in 0..3 {
                let Some(ib) = index[tri[b_]] else { continue };
                let v = area
                    * (g[a_][0] * (kf[0][0] * g[b_][0] + kf[0][1] * g[b_][1]) + g[a_][1] * (kf[1][0] * g[b_][0] + kf[1][1] * g[b_][1]));
                coo.push(ia, ib, v);
            }
        }
    }
    for (gv, b) in grad.iter_mut().zip(&problem.mesh.boundary) {
        if *b {
            *gv = 0.0;
        }
    }
    Ok(Assembly { energy, grad, hessian: CsrMatrix::from(&coo) })
}

fn floor_block(k: [[f64; 2]; 2], l1: f64, l2: f64, floor: f64) -> [[f64; 2]; 2] {
    if l1 >= floor {
        return k;
    }
    // eigenvector of l2
    let (a, b, d) = (k[0][0], k[0][1], k[1][1]);
    let v = if b.abs() > 1e-300 {
        let v = [b, l2 - a];
        let n = v[0].hypot(v[1]);
        [v[0] / n, v[1] / n]
    } else if a >= d {
        [1.0, 0.0]
    } else {
        [0.0, 1.0]
    };
    let w = [-v[1], v[0]];
    let (m1, m2) = (floor, l2.max(floor));
    [
        [m2 * v[0] * v[0] + m1 * w[0] * w[0], m2 * v[0] * v[1] + m1 * w[0] * w[1]],
        [m2 * v[1] * v[0] + m1 * w[1] * w[0], m2 * v[1] * v[1] + m1 * w[1] * w[1]],
    ]
}

fn matvec(a: &CsrMatrix<f64>, x: &[f64], y: &mut [f64]) {
    for (i, row) in a.row_iter().enumerate() {
        y[i] = row.col_indices().iter().zip(row.values()).map(|(j, v)| v * x[*j]).sum();
    }
}

/// Jacobi-preconditioned conjugate gradients.
fn pcg(a: &CsrMatrix<f64>, b: &[f64], rel_tol: f64, max_iter: usize) -> Vec<f64> {
    let n = b.len();
    let mut diag = vec![1.0; n];
    for (i, row) in a.row_iter().enumerate() {
        for (j, v) in row.col_indices().iter().zip(row.values()) {
            if *j == i && *v > 0.0 {
                diag[i] = *v;
            }
        }
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        return x;
    }
    for _ in 0..max_iter {
        matvec(a, &p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if r.iter().map(|v| v * v).sum::<f64>().sqrt() <= rel_tol * bnorm {
            break;
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Damped Newton with backtracking on `E_h`.
pub fn solve(problem: &GraphProblem, init: &Initial) -> Result<GraphSolution> {
    problem.validate()?;
    let mut f = problem.initial(init)?;
    let mut index = vec![None; f.len()];
    let mut n_int = 0;
    for (i, b) in problem.mesh.boundary.iter().enumerate() {
        if !b {
            index[i] = Some(n_int);
            n_int += 1;
        }
    }
    let opts = &problem.options;
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        let asm = assemble(problem, &f, &index, n_int)?;
        history.push(asm.energy);
        let gnorm = max_norm(&asm.grad);
        if gnorm <= opts.tol || n_int == 0 {
            return Ok(GraphSolution {
                triangle_gradients: problem.triangle_gradients(&f),
                values: f,
                energy: asm.energy,
                gradient_norm: gnorm,
                iterations,
                energy_history: history,
                boundary_flags: problem.mesh.boundary.clone(),
            });
        }
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence { iterations, residual: gnorm });
        }
        iterations += 1;
        let rhs: Vec<f64> = (0..f.len()).filter(|i| index[*i].is_some()).map(|i| -asm.grad[i]).collect();
        let d_int = pcg(&asm.hessian, &rhs, 1e-12, 20 * n_int + 100);
        let mut d = vec![0.0; f.len()];
        for (i, slot) in index.iter().enumerate() {
            if let Some(k) = slot {
                d[i] = d_int[*k];
            }
        }
        let slope: f64 = d.iter().zip(&asm.grad).map(|(a, b)| a * b).sum();
        let slack = 1e-13 * asm.energy.abs().max(1.0);
        let mut t = 1.0;
        let mut accepted = false;
        while t >= 1e-12 {
            let trial: Vec<f64> = f.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            match discrete_energy(problem, &trial) {
                Ok(e) if e <= asm.energy + 1e-4 * t * slope + slack => {
                    f = trial;
                    accepted = true;
                    break;
                }
                Ok(_) | Err(Error::NonPositiveDenominator(_)) | Err(Error::ParamOutOfRange(_)) => t *= 0.5,
                Err(e) => return Err(e),
            }
        }
        if !accepted {
            return Err(Error::NonConvergence { iterations, residual: gnorm });
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MaximumPrincipleReport {
    pub boundary_min: f64,
    pub boundary_max: f64,
    pub interior_min: f64,
    pub interior_max: f64,
    /// Largest excursion beyond the boundary range (≤ 0 when inside).
    pub violation: f64,
    pub holds: bool,
}

/// Tolerance for the maximum principle report.
pub const MAX_PRINCIPLE_TOL: f64 = 1e-8;

pub fn maximum_principle_check(solution: &GraphSolution) -> MaximumPrincipleReport {
    let (mut bmin, mut bmax, mut imin, mut imax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (v, b) in solution.values.iter().zip(&solution.boundary_flags) {
        if *b {
            bmin = bmin.min(*v);
            bmax = bmax.max(*v);
        } else {
            imin = imin.min(*v);
            imax = imax.max(*v);
        }
    }
    let violation = if imin.is_finite() { (bmin - imin).max(imax - bmax) } else { f64::NEG_INFINITY };
    MaximumPrincipleReport {
        boundary_min: bmin,
        boundary_max: bmax,
        interior_min: imin,
        interior_max: imax,
        violation,
        holds: violation <= MAX_PRINCIPLE_TOL,
    }
}

/// `Σ_T |T| μ_T |∇f1_T - ∇f2_T|^2` with
/// `μ_T = max(sqrt(1+|∇f1_T|^2), sqrt(1+|∇f2_T|^2))^-3`.
pub fn uniqueness_energy_gap(problem: &GraphProblem, f1: &[f64], f2: &[f64]) -> Result<f64> {
    problem.check_len(f1)?;
    problem.check_len(f2)?;
    let mut gap = 0.0;
    for t in 0..problem.mesh.num_triangles() {
        let (p, q) = (problem.triangle_gradient(t, f1), problem.triangle_gradient(t, f2));
        let w = (1.0 + p[0] * p[0] + p[1] * p[1]).sqrt().max((1.0 + q[0] * q[0] + q[1] * q[1]).sqrt());
        let d = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
        gap += problem.mesh.area(t) * d / (w * w * w);
    }
    Ok(gap)
}

/// Scherk's surface `ln(cos y) - ln(cos x)`, an exact Euclidean minimal graph on `|x|, |y| < π/2`.
pub fn scherk(p: [f64; 2]) -> f64 {
    p[1].cos().ln() - p[0].cos().ln()
}
