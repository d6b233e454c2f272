//! Cartan area integrand `A^F(x, Z) = 1 / R[F(x,·)^-m](Z)`, its derivatives,
//! ellipticity constants and the reversible witness metrics `Ψ_n`.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{MetricSpec, ValidityReport, TOL_POS};
use crate::radon::funk::{funk_inverse, FunkInverse, SphereGrid};
use crate::radon::SphereQuadrature;
use crate::sphere::{ball_volume, complement_basis, dot, norm, normalized, sample_sphere, sym_eigenvalues};

/// Quadrature order used when callers do not choose one.
pub const DEFAULT_ORDER: usize = crate::radon::DEFAULT_ORDER;
/// Default band limit for the witness construction.
pub const WITNESS_DEGREE: usize = 32;

fn surface_dim(spec: &MetricSpec, z: &[f64]) -> Result<usize> {
    if z.len() != spec.dim {
        return Err(Error::DimensionMismatch { expected: spec.dim, got: z.len() });
    }
    if spec.dim < 3 {
        return Err(Error::UnsupportedDimension(spec.dim.saturating_sub(1)));
    }
    Ok(spec.dim - 1)
}

fn denominator(spec: &MetricSpec, x: &[f64], q: &SphereQuadrature, m: usize) -> Result<f64> {
    let mi = m as i32;
    let r0 = q.try_mean(|y| Ok(spec.eval(x, y)?.powi(-mi)))?;
    if !(r0 > 0.0) || !r0.is_finite() {
        return Err(Error::NonPositiveDenominator(r0));
    }
    Ok(r0)
}

/// `A^F(x, Z)`.
pub fn area_integrand(spec: &MetricSpec, x: &[f64], z: &[f64], order: usize) -> Result<f64> {
    let m = surface_dim(spec, z)?;
    let r = norm(z);
    if r == 0.0 {
        return Err(Error::ZeroDirection);
    }
    let q = SphereQuadrature::great_subsphere(z, order, m)?;
    Ok(r / denominator(spec, x, &q, m)?)
}

/// `A^F(x, Z)` and `A^F_Z(x, Z)`; the gradient is 0-homogeneous and is
/// evaluated at `Z/|Z|` as `Z/R_0 - (m/R_0^2) R̂[(Z·F_y) y F^(-m-1)]`.
pub fn area_value_and_gradient(spec: &MetricSpec, x: &[f64], z: &[f64], order: usize) -> Result<(f64, Vec<f64>)> {
    let m = surface_dim(spec, z)?;
    let r = norm(z);
    if r == 0.0 {
        return Err(Error::ZeroDirection);
    }
    let q = SphereQuadrature::great_subsphere(z, order, m)?;
    let zh = &q.center;
    let n = m + 1;
    let mi = m as i32;
    let (mut r0, mut s) = (0.0, vec![0.0; n]);
    for (y, w) in q.iter() {
        let (f, fy) = spec.value_and_gradient(x, y)?;
        let fm = f.powi(-mi);
        r0 += w * fm;
        let c = w * dot(zh, &fy) * fm / f;
        for (si, yi) in s.iter_mut().zip(y) {
            *si += c * yi;
        }
    }
    let h = q.measure();
    r0 /= h;
    if !(r0 > 0.0) || !r0.is_finite() {
        return Err(Error::NonPositiveDenominator(r0));
    }
    let grad = (0..n).map(|i| zh[i] / r0 - m as f64 * s[i] / (h * r0 * r0)).collect();
    Ok((r / r0, grad))
}

pub fn area_gradient(spec: &MetricSpec, x: &[f64], z: &[f64], order: usize) -> Result<Vec<f64>> {
    area_value_and_gradient(spec, x, z, order).map(|(_, g)| g)
}

/// Central differences of [`area_integrand`] with step `h |Z|`.
pub fn area_gradient_fd(spec: &MetricSpec, x: &[f64], z: &[f64], order: usize, h: f64) -> Result<Vec<f64>> {
    let step = h * norm(z);
    let mut p = z.to_vec();
    (0..z.len())
        .map(|i| {
            p[i] = z[i] + step;
            let a = area_integrand(spec, x, &p, order)?;
            p[i] = z[i] - step;
            let b = area_integrand(spec, x, &p, order)?;
            p[i] = z[i];
            Ok((a - b) / (2.0 * step))
        })
        .collect()
}

/// Symmetry defect above which the difference Hessian is rejected.
pub const HESSIAN_SYMMETRY_TOL: f64 = 1e-5;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AreaHessian {
    /// `A^F_ZZ`, symmetrized.
    pub hessian: Vec<Vec<f64>>,
    /// Smallest and largest eigenvalue of `|Z| A^F_ZZ` on `Z^⊥`.
    pub lambda1: f64,
    pub lambda2: f64,
    /// `|A^F_ZZ Z|`.
    pub euler_residual: f64,
    pub symmetry_defect: f64,
}

/// Hessian from central differences of the analytic gradient, step `1e-4 |Z|`.
pub fn area_hessian(spec: &MetricSpec, x: &[f64], z: &[f64], order: usize) -> Result<AreaHessian> {
    let n = z.len();
    let r = norm(z);
    if r == 0.0 {
        return Err(Error::ZeroDirection);
    }
    let h = 1e-4 * r;
    let mut hm = DMatrix::zeros(n, n);
    let mut p = z.to_vec();
    for j in 0..n {
        p[j] = z[j] + h;
        let gp = area_gradient(spec, x, &p, order)?;
        p[j] = z[j] - h;
        let gm = area_gradient(spec, x, &p, order)?;
        p[j] = z[j];
        for i in 0..n {
            hm[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    let scale = hm.amax().max(1e-300);
    let symmetry_defect = (&hm - hm.transpose()).amax() / scale;
    if symmetry_defect > HESSIAN_SYMMETRY_TOL {
        return Err(Error::NumericalBreakdown(format!("area Hessian symmetry defect {symmetry_defect:.3e}")));
    }
    let hm = (&hm + hm.transpose()) * 0.5;
    let zv = nalgebra::DVector::from_column_slice(z);
    let euler_residual = (&hm * &zv).norm();
    let (lambda1, lambda2) = tangential_spectrum(&hm, z, r)?;
    Ok(AreaHessian {
        hessian: hm.row_iter().map(|row| row.iter().copied().collect()).collect(),
        lambda1,
        lambda2,
        euler_residual,
        symmetry_defect,
    })
}

fn tangential_spectrum(hm: &DMatrix<f64>, z: &[f64], r: f64) -> Result<(f64, f64)> {
    let basis = complement_basis(z)?;
    let n = z.len();
    let b = DMatrix::from_fn(n, n - 1, |i, j| basis[j][i]);
    let t = b.transpose() * hm * &b * r;
    let ev = sym_eigenvalues(&t);
    Ok((ev[0], ev[ev.len() - 1]))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntegrandReport {
    pub z: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
    pub lambda1: f64,
    pub lambda2: f64,
    /// `|Z·A_Z - A|`.
    pub euler_gradient_residual: f64,
    /// `|A_ZZ Z|`.
    pub euler_hessian_residual: f64,
    pub quad_order: usize,
}

pub fn integrand_report(spec: &MetricSpec, x: &[f64], z: &[f64], order: usize) -> Result<IntegrandReport> {
    let zh = normalized(z)?;
    let (value, gradient) = area_value_and_gradient(spec, x, &zh, order)?;
    let hess = area_hessian(spec, x, &zh, order)?;
    Ok(IntegrandReport {
        euler_gradient_residual: (dot(&zh, &gradient) - value).abs(),
        euler_hessian_residual: hess.euler_residual,
        z: zh,
        value,
        gradient,
        hessian: hess.hessian,
        lambda1: hess.lambda1,
        lambda2: hess.lambda2,
        quad_order: order,
    })
}

/// Monte Carlo estimate of `A^F` with its standard error.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub acceptance: f64,
}

/// `|Z| ω_m / H^m{T ∈ Z^⊥ : F(x,T) ≤ 1}` by rejection sampling in the cube
/// of half-width `1/m_F` in `Z^⊥` coordinates.
pub fn area_integrand_mc_oracle(spec: &MetricSpec, x: &[f64], z: &[f64], samples: usize, seed: u64) -> Result<McEstimate> {
    let m = surface_dim(spec, z)?;
    let r = norm(z);
    if r == 0.0 {
        return Err(Error::ZeroDirection);
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let basis = complement_basis(z)?;
    // m_F on the subsphere, with margin for nodes missing the true minimum.
    let q = SphereQuadrature::great_subsphere(z, 512, m)?;
    let mut min_f = f64::INFINITY;
    for (y, _) in q.iter() {
        min_f = min_f.min(spec.eval(x, y)?);
    }
    if !(min_f > 0.0) {
        return Err(Error::NonPositive(format!("min F on Z^⊥ is {min_f}")));
    }
    let half = 1.05 / min_f;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = m + 1;
    let mut t = vec![0.0; n];
    let mut hits = 0usize;
    for _ in 0..samples {
        t.iter_mut().for_each(|v| *v = 0.0);
        for b in &basis {
            let c: f64 = rng.gen_range(-half..half);
            for (ti, bi) in t.iter_mut().zip(b) {
                *ti += c * bi;
            }
        }
        if norm(&t) > 0.0 && spec.eval(x, &t)? <= 1.0 {
            hits += 1;
        }
    }
    if hits == 0 {
        return Err(Error::NumericalBreakdown("no Monte Carlo sample hit the unit ball".into()));
    }
    let p = hits as f64 / samples as f64;
    let vol = (2.0 * half).powi(m as i32) * p;
    let value = r * ball_volume(m) / vol;
    let std_error = value * ((1.0 - p) / (samples as f64 * p)).sqrt();
    Ok(McEstimate { value, std_error, samples, acceptance: p })
}

/// `M_F^m sqrt(1 + Λ(F)(m+1) m^2 / m_F^2)`.
pub fn gradient_bound(report: &ValidityReport, m: usize) -> f64 {
    let mf = m as f64;
    report.big_m_f().powi(m as i32) * (1.0 + report.lambda_f * (mf + 1.0) * mf * mf / report.m_f().powi(2)).sqrt()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanPoint {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub value: f64,
    pub lambda1: f64,
    pub lambda2: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EllipticityScan {
    pub metric: String,
    pub m: usize,
    pub grid_resolution: usize,
    pub quad_order: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub argmin: Vec<f64>,
    pub points: Vec<ScanPoint>,
}

impl EllipticityScan {
    /// CSV columns: x components, Z components, A^F, λ1, λ2.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let n = self.m + 1;
        let mut header: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        header.extend((0..n).map(|i| format!("z{i}")));
        header.extend(["area".to_string(), "lambda1".into(), "lambda2".into()]);
        wr.write_record(&header)?;
        for p in &self.points {
            let row: Vec<String> = p
                .x
                .iter()
                .chain(&p.z)
                .chain([p.value, p.lambda1, p.lambda2].iter())
                .map(|v| format!("{v:.17e}"))
                .collect();
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Running min and max of `λ1`, `λ2` over a sphere grid of directions
/// (one hemisphere suffices since `A^F` is even) at each sample `x`.
pub fn ellipticity_scan(spec: &MetricSpec, xs: &[Vec<f64>], grid_resolution: usize, order: usize) -> Result<EllipticityScan> {
    let m = spec.dim - 1;
    let dirs = sample_sphere(m, grid_resolution)?;
    let mut scan = EllipticityScan {
        metric: spec.label(),
        m,
        grid_resolution,
        quad_order: order,
        lambda_min: f64::INFINITY,
        lambda_max: f64::NEG_INFINITY,
        argmin: vec![],
        points: vec![],
    };
    for x in xs {
        for z in dirs.chunks(m + 1) {
            if z[m] < 0.0 || (z[m] == 0.0 && z.iter().take(m).rev().find(|v| **v != 0.0).is_some_and(|v| *v < 0.0)) {
                continue;
            }
            let value = area_integrand(spec, x, z, order)?;
            let h = area_hessian(spec, x, z, order)?;
            if h.lambda1 < scan.lambda_min {
                scan.lambda_min = h.lambda1;
                scan.argmin = z.to_vec();
            }
            scan.lambda_max = scan.lambda_max.max(h.lambda2);
            scan.points.push(ScanPoint { x: x.clone(), z: z.to_vec(), value, lambda1: h.lambda1, lambda2: h.lambda2 });
        }
    }
    Ok(scan)
}

/// Doubles the grid until `lambda_min` moves by less than `tol` or `max_resolution` is reached.
pub fn ellipticity_scan_refined(
    spec: &MetricSpec,
    xs: &[Vec<f64>],
    start_resolution: usize,
    max_resolution: usize,
    order: usize,
    tol: f64,
) -> Result<EllipticityScan> {
    let mut res = start_resolution;
    let mut scan = ellipticity_scan(spec, xs, res, order)?;
    while res * 2 <= max_resolution {
        res *= 2;
        let next = ellipticity_scan(spec, xs, res, order)?;
        let converged = (next.lambda_min - scan.lambda_min).abs() < tol;
        scan = next;
        if converged {
            break;
        }
    }
    Ok(scan)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointwiseBoundsReport {
    pub c1: f64,
    pub c2: f64,
    pub m: usize,
    /// Largest relative shortfall of `A^F2` below `c1^m A^F1`.
    pub lower_violation: f64,
    /// Largest relative excess of `A^F2` above `c2^m A^F1`.
    pub upper_violation: f64,
    /// Smallest relative slack `min(A2/(c1^m A1), c2^m A1/A2) - 1`.
    pub min_slack: f64,
    pub holds: bool,
}

/// Relative tolerance on the pointwise comparison.
pub const BOUNDS_TOL: f64 = 1e-9;

/// `c1^m A^F1 ≤ A^F2 ≤ c2^m A^F1` with `c1, c2` the extremes of `F2/F1` on S^m.
pub fn pointwise_bounds_check(
    spec1: &MetricSpec,
    spec2: &MetricSpec,
    x: &[f64],
    grid_resolution: usize,
    order: usize,
) -> Result<PointwiseBoundsReport> {
    if spec1.dim != spec2.dim {
        return Err(Error::DimensionMismatch { expected: spec1.dim, got: spec2.dim });
    }
    let m = spec1.dim - 1;
    let pts = sample_sphere(m, grid_resolution)?;
    let (mut c1, mut c2) = (f64::INFINITY, 0.0f64);
    for y in pts.chunks(m + 1) {
        let ratio = spec2.eval(x, y)? / spec1.eval(x, y)?;
        c1 = c1.min(ratio);
        c2 = c2.max(ratio);
    }
    let mi = m as i32;
    let (mut lower_violation, mut upper_violation, mut min_slack) = (0.0f64, 0.0f64, f64::INFINITY);
    let zres = (grid_resolution / 2).max(4);
    for z in sample_sphere(m, zres)?.chunks(m + 1) {
        let a1 = area_integrand(spec1, x, z, order)?;
        let a2 = area_integrand(spec2, x, z, order)?;
        let lo = c1.powi(mi) * a1;
        let hi = c2.powi(mi) * a1;
        lower_violation = lower_violation.max((lo - a2) / a2);
        upper_violation = upper_violation.max((a2 - hi) / a2);
        min_slack = min_slack.min((a2 / lo - 1.0).min(hi / a2 - 1.0));
    }
    let holds = lower_violation <= BOUNDS_TOL && upper_violation <= BOUNDS_TOL;
    Ok(PointwiseBoundsReport { c1, c2, m, lower_violation, upper_violation, min_slack, holds })
}

/// `Ψ_n = (T[1/Φ_n])^(-1/2)` with `Φ_n = A^F - |Z|/n`, so that `A^{Ψ_n} = Φ_n`.
#[derive(Clone, Debug)]
pub struct EllipticityWitness {
    pub metric: MetricSpec,
    pub n: usize,
    pub inverse: Arc<FunkInverse>,
}

/// Builds the witness metric for a reversible Minkowski metric on R^3.
pub fn ellipticity_witness(spec: &MetricSpec, n: usize, max_degree: usize, order: usize) -> Result<EllipticityWitness> {
    if spec.dim != 3 {
        return Err(Error::UnsupportedDimension(spec.dim.saturating_sub(1)));
    }
    if spec.x_dependent {
        return Err(Error::InvalidArgument("witness requires a Minkowski metric".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("witness index must be positive".into()));
    }
    let x = [0.0; 3];
    for y in sample_sphere(2, 16)?.chunks(3) {
        let neg = [-y[0], -y[1], -y[2]];
        let (a, b) = (spec.eval(&x, y)?, spec.eval(&x, &neg)?);
        if (a - b).abs() > 1e-12 * a {
            return Err(Error::InvalidArgument(format!("{} is not reversible", spec.label())));
        }
    }
    let inv_n = 1.0 / n as f64;
    let (nlat, nlon) = (2 * (max_degree + 1), 4 * (max_degree + 1));
    let area = SphereGrid::sample(|y| area_integrand(spec, &x, y, order).unwrap_or(f64::NAN), nlat, nlon);
    if area.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalBreakdown("area integrand is not finite".into()));
    }
    let min_phi = area.values.iter().fold(f64::INFINITY, |a, v| a.min(v - inv_n));
    if min_phi <= TOL_POS {
        return Err(Error::NonPositive(format!("Φ_n has minimum {min_phi:.3e} for n = {n}")));
    }
    let inv = funk_inverse(&area.map(|_, a| 1.0 / (a - inv_n)).analyze(max_degree))?;
    let check = SphereGrid::sample(|y| inv.eval(y), nlat, nlon);
    let min_t = check.values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_t <= TOL_POS {
        return Err(Error::NonPositive(format!("T[1/Φ_n] has minimum {min_t:.3e} for n = {n}")));
    }
    let inverse = Arc::new(inv);
    let shared = inverse.clone();
    let metric = MetricSpec::custom(3, false, format!("witness{n}({})", spec.label()), move |_, y| {
        let t = shared.eval(y);
        if t > 0.0 {
            norm(y) / t.sqrt()
        } else {
            f64::NAN
        }
    });
    Ok(EllipticityWitness { metric, n, inverse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{check_validity, symmetrize, Phi};
    use crate::radon::seminorm_rho;

    const X: [f64; 3] = [0.0; 3];
    const N: usize = DEFAULT_ORDER;

    fn rand_dir(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = norm(&v);
            if r > 0.1 && r <= 1.0 {
                return v;
            }
        }
    }

    #[test]
    fn euclidean_integrand() {
        let e = MetricSpec::euclidean(3);
        for z in [[0.0, 0.0, 1.0], [1.0, 2.0, -2.0], [0.3, 0.0, 0.0]] {
            let a = area_integrand(&e, &X, &z, N).unwrap();
            assert!((a - norm(&z)).abs() <= 1e-12 * norm(&z));
            let g = area_gradient(&e, &X, &z, N).unwrap();
            for i in 0..3 {
                assert!((g[i] - z[i] / norm(&z)).abs() < 1e-12);
            }
        }
        let e4 = MetricSpec::euclidean(4);
        let a = area_integrand(&e4, &[0.0; 4], &[0.0, 2.0, 0.0, 0.0], 64).unwrap();
        assert!((a - 2.0).abs() < 1e-12);
        assert_eq!(area_integrand(&e, &X, &[0.0; 3], N), Err(Error::ZeroDirection));
    }

    #[test]
    fn randers_closed_form() {
        let spec = MetricSpec::randers(&[0.0, 0.0, 0.5]);
        assert!((area_integrand(&spec, &X, &[0.0, 0.0, 1.0], N).unwrap() - 1.0).abs() < 1e-12);
        let a = area_integrand(&spec, &X, &[1.0, 0.0, 0.0], N).unwrap();
        assert!((a - 0.75f64.powf(1.5)).abs() < 1e-9);
        assert!((a - 0.64952).abs() < 1e-5);
    }

    #[test]
    fn symmetrization_preserves_area() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for spec in [MetricSpec::randers(&[0.2, -0.3, 0.4]), MetricSpec::matsumoto(&[0.1, 0.2, 0.0])] {
            let sym = symmetrize(&spec, 2);
            for _ in 0..30 {
                let z = rand_dir(&mut rng, 3);
                let a = area_integrand(&spec, &X, &z, N).unwrap();
                let b = area_integrand(&sym, &X, &z, N).unwrap();
                assert!((a - b).abs() <= 1e-10 * a);
            }
        }
    }

    #[test]
    fn homogeneity_and_evenness() {
        let spec = MetricSpec::randers(&[0.3, 0.1, -0.2]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let z = rand_dir(&mut rng, 3);
            let a = area_integrand(&spec, &X, &z, N).unwrap();
            let t: f64 = rng.gen_range(0.01..10.0);
            let tz: Vec<f64> = z.iter().map(|v| t * v).collect();
            assert!((area_integrand(&spec, &X, &tz, N).unwrap() - t * a).abs() <= 1e-12 * t * a);
            let nz: Vec<f64> = z.iter().map(|v| -v).collect();
            assert!((area_integrand(&spec, &X, &nz, N).unwrap() - a).abs() <= 1e-12 * a);
        }
    }

    #[test]
    fn gradient_matches_differences_and_euler() {
        let spec = MetricSpec::randers(&[0.0, 0.4, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let z = rand_dir(&mut rng, 3);
            let (a, g) = area_value_and_gradient(&spec, &X, &z, N).unwrap();
            let fd = area_gradient_fd(&spec, &X, &z, N, 1e-5).unwrap();
            let gn = norm(&g);
            for i in 0..3 {
                assert!((g[i] - fd[i]).abs() <= 1e-6 * gn);
            }
            assert!((dot(&z, &g) - a).abs() <= 1e-10 * a);
        }
    }

    #[test]
    fn gradient_bound_holds() {
        for b in [0.1, 0.3, 0.5] {
            let spec = MetricSpec::randers(&[0.0, 0.0, b]);
            let rep = check_validity(&spec, 2, 64).unwrap();
            let bound = gradient_bound(&rep, 2);
            for z in sample_sphere(2, 12).unwrap().chunks(3) {
                assert!(norm(&area_gradient(&spec, &X, z, N).unwrap()) <= bound);
            }
        }
    }

    #[test]
    fn euclidean_hessian_is_projection() {
        let e = MetricSpec::euclidean(3);
        let z = [0.3, -0.5, 0.8];
        let h = area_hessian(&e, &X, &z, 64).unwrap();
        assert!((h.lambda1 - 1.0).abs() < 1e-6 && (h.lambda2 - 1.0).abs() < 1e-6);
        let r = norm(&z);
        let xi = [0.7, 0.1, -0.4];
        let hxi: f64 = (0..3).map(|i| (0..3).map(|j| xi[i] * h.hessian[i][j] * xi[j]).sum::<f64>()).sum();
        let proj = dot(&xi, &xi) - dot(&xi, &z).powi(2) / (r * r);
        assert!((r * hxi - proj).abs() < 1e-6);
        assert!(h.euler_residual < 1e-6);
    }

    #[test]
    fn ellipticity_flips_for_randers() {
        let xs = vec![X.to_vec()];
        let ok = ellipticity_scan(&MetricSpec::randers(&[0.0, 0.0, 0.5]), &xs, 16, 128).unwrap();
        assert!(ok.lambda_min > 0.0, "{}", ok.lambda_min);
        let bad = ellipticity_scan(&MetricSpec::randers(&[0.0, 0.0, 0.65]), &xs, 16, 128).unwrap();
        assert!(bad.lambda_min < 0.0, "{}", bad.lambda_min);
        let mut buf = Vec::new();
        ok.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x0,x1,x2,z0,z1,z2,area,lambda1,lambda2"));
        assert_eq!(text.lines().count(), ok.points.len() + 1);
    }

    #[test]
    fn report_euler_residuals() {
        let spec = MetricSpec::alpha_beta(Phi::TanhOdd { amplitude: 0.5, m: 2 }, &[0.2, 0.0, 0.3]);
        let rep = integrand_report(&spec, &X, &[0.2, 0.7, -0.1], N).unwrap();
        assert!(rep.value > 0.0);
        assert!(rep.euler_gradient_residual < 1e-10);
        assert!(rep.euler_hessian_residual < 1e-6);
        assert!(rep.lambda1 <= rep.lambda2);
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("lambda1"));
    }

    #[test]
    fn ellipticity_sandwich() {
        let spec = MetricSpec::randers(&[0.1, 0.2, 0.3]);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let scan = ellipticity_scan(&spec, &[X.to_vec()], 16, 128).unwrap();
        for _ in 0..20 {
            let z = rand_dir(&mut rng, 3);
            let xi = rand_dir(&mut rng, 3);
            let r = norm(&z);
            let h = area_hessian(&spec, &X, &z, 128).unwrap();
            let q: f64 = (0..3).map(|i| (0..3).map(|j| xi[i] * h.hessian[i][j] * xi[j]).sum::<f64>()).sum();
            let pe = (dot(&xi, &xi) - dot(&xi, &z).powi(2) / (r * r)) / r;
            assert!(h.lambda1 * pe <= q + 1e-6 && q <= h.lambda2 * pe + 1e-6);
            assert!(scan.lambda_min <= h.lambda1 + 1e-3);
        }
    }

    #[test]
    fn midpoint_convexity() {
        let spec = MetricSpec::perturbed_quartic(3, 1.0, None);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..2000 {
            let z1 = rand_dir(&mut rng, 3);
            let z2 = rand_dir(&mut rng, 3);
            let mid: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| 0.5 * (a + b)).collect();
            if norm(&mid) < 1e-6 {
                continue;
            }
            let a = area_integrand(&spec, &X, &mid, 64).unwrap();
            let b = 0.5 * (area_integrand(&spec, &X, &z1, 64).unwrap() + area_integrand(&spec, &X, &z2, 64).unwrap());
            assert!(a <= b + 1e-12);
        }
    }

    #[test]
    fn pointwise_bounds() {
        let e = MetricSpec::euclidean(3);
        let r = MetricSpec::randers(&[0.0, 0.0, 0.5]);
        let rep = pointwise_bounds_check(&e, &r, &X, 32, 128).unwrap();
        assert!((rep.c1 - 0.5).abs() < 1e-12 && (rep.c2 - 1.5).abs() < 1e-12);
        assert!(rep.holds && rep.min_slack > 0.0);
        let same = pointwise_bounds_check(&r, &r, &X, 32, 128).unwrap();
        assert!((same.c1 - 1.0).abs() < 1e-15 && (same.c2 - 1.0).abs() < 1e-15);
        assert!(same.holds && same.min_slack.abs() < 1e-12);
        let rep = check_validity(&r, 2, 64).unwrap();
        for z in sample_sphere(2, 8).unwrap().chunks(3) {
            let a = area_integrand(&r, &X, z, N).unwrap();
            assert!(rep.m_f().powi(2) <= a && a <= rep.big_m_f().powi(2));
        }
    }

    #[test]
    fn mc_oracle() {
        let e = MetricSpec::euclidean(3);
        let est = area_integrand_mc_oracle(&e, &X, &[0.0, 3.0, 4.0], 200_000, 1).unwrap();
        assert!((est.value - 5.0).abs() < 0.05);
        let r = MetricSpec::randers(&[0.0, 0.0, 0.5]);
        let est = area_integrand_mc_oracle(&r, &X, &[1.0, 0.0, 0.0], 200_000, 2).unwrap();
        let exact = area_integrand(&r, &X, &[1.0, 0.0, 0.0], N).unwrap();
        assert!((est.value - exact).abs() <= 3.0 * est.std_error);
        let twice = area_integrand_mc_oracle(&r.scaled(2.0), &X, &[1.0, 0.0, 0.0], 200_000, 2).unwrap();
        assert!((twice.value / est.value - 4.0).abs() < 0.05);
        let a = area_integrand_mc_oracle(&r, &X, &[1.0, 0.0, 0.0], 1000, 5).unwrap();
        let b = area_integrand_mc_oracle(&r, &X, &[1.0, 0.0, 0.0], 1000, 5).unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn euclidean_witness() {
        let e = MetricSpec::euclidean(3);
        let w = ellipticity_witness(&e, 10, 8, 128).unwrap();
        let y = [0.3, -0.2, 0.9];
        assert!((w.metric.eval(&X, &y).unwrap() - 0.9f64.sqrt() * norm(&y)).abs() < 1e-12);
        assert!(check_validity(&w.metric, 2, 16).unwrap().is_finsler());
        assert!(matches!(ellipticity_witness(&e, 1, 8, 128), Err(Error::NonPositive(_))));
        assert!(ellipticity_witness(&MetricSpec::randers(&[0.0, 0.0, 0.3]), 10, 8, 128).is_err());
    }

    #[test]
    fn quartic_witness_reproduces_phi() {
        let f = MetricSpec::perturbed_quartic(3, 1.0, None);
        let w = ellipticity_witness(&f, 50, WITNESS_DEGREE, 128).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..5 {
            let z = rand_dir(&mut rng, 3);
            let phi = area_integrand(&f, &X, &z, 128).unwrap() - norm(&z) / 50.0;
            let a = area_integrand(&w.metric, &X, &z, 128).unwrap();
            assert!((a - phi).abs() <= 1e-6 * phi, "{a} vs {phi}");
        }
        let d = |w: &EllipticityWitness| seminorm_rho(|y| w.metric.eval(&X, y).unwrap() - f.eval(&X, y).unwrap(), 3, 0, 8).unwrap();
        let w200 = ellipticity_witness(&f, 200, 16, 64).unwrap();
        let w50 = ellipticity_witness(&f, 50, 16, 64).unwrap();
        assert!(d(&w200) < d(&w50));
    }
}
