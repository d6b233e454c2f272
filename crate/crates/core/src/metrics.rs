//! Finsler metric candidates on R^(m+1): evaluation, gradients, fundamental
//! tensors, m-harmonic symmetrization and sampled validity checks.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{dot, norm, sample_sphere, sym_eigenvalues};

/// Positivity tolerance used by every verdict.
pub const TOL_POS: f64 = 1e-8;

/// Largest admissible `β/α` for φ with a pole at s = 1.
const POLE_GUARD: f64 = 1.0 - 1e-6;

pub type Evaluator = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// A user supplied `F(x, y)`. Non-finite return values are reported as
/// [`Error::ParamOutOfRange`].
#[derive(Clone)]
pub struct CustomMetric {
    pub label: String,
    eval: Evaluator,
}

impl CustomMetric {
    pub fn new(label: impl Into<String>, eval: Evaluator) -> Self {
        Self { label: label.into(), eval }
    }
}

impl fmt::Debug for CustomMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomMetric({})", self.label)
    }
}

impl PartialEq for CustomMetric {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.eval, &other.eval)
    }
}

/// Scalar profile φ of an (α,β)-metric `F = α φ(β/α)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Phi {
    /// φ(s) = 1 + s
    Randers,
    /// φ(s) = 1 / (1 - s)
    Matsumoto,
    /// φ(s) = (1 + s)^2
    TwoOrder,
    /// φ(s) = Σ c_k s^k
    Polynomial { coeffs: Vec<f64> },
    /// φ(s) = (1 + a tanh s)^(-1/m), |a| < 1
    TanhOdd { amplitude: f64, m: u32 },
}

impl Phi {
    /// (φ, φ', φ'') at s.
    pub fn jet(&self, s: f64) -> Result<(f64, f64, f64)> {
        match self {
            Phi::Randers => Ok((1.0 + s, 1.0, 0.0)),
            Phi::Matsumoto => {
                if s > POLE_GUARD {
                    return Err(Error::ParamOutOfRange(format!(
                        "matsumoto profile evaluated at s = {s} >= 1"
                    )));
                }
                let r = 1.0 / (1.0 - s);
                Ok((r, r * r, 2.0 * r * r * r))
            }
            Phi::TwoOrder => Ok(((1.0 + s) * (1.0 + s), 2.0 * (1.0 + s), 2.0)),
            Phi::Polynomial { coeffs } => {
                let (mut p, mut d1, mut d2) = (0.0, 0.0, 0.0);
                for &c in coeffs.iter().rev() {
                    d2 = d2 * s + 2.0 * d1;
                    d1 = d1 * s + p;
                    p = p * s + c;
                }
                Ok((p, d1, d2))
            }
            Phi::TanhOdd { amplitude, m } => {
                let a = *amplitude;
                if a.abs() >= 1.0 || *m == 0 {
                    return Err(Error::ParamOutOfRange(format!(
                        "tanh profile needs |a| < 1 and m > 0 (a = {a}, m = {m})"
                    )));
                }
                let q = 1.0 / *m as f64;
                let t = s.tanh();
                let t1 = 1.0 - t * t;
                let t2 = -2.0 * t * t1;
                let u = 1.0 + a * t;
                let p = u.powf(-q);
                let d1 = -q * u.powf(-q - 1.0) * a * t1;
                let d2 = q * (q + 1.0) * u.powf(-q - 2.0) * a * a * t1 * t1 - q * u.powf(-q - 1.0) * a * t2;
                Ok((p, d1, d2))
            }
        }
    }
}

/// The kinds of metric the toolkit knows in closed form, plus user supplied ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum MetricKind {
    Euclidean,
    Randers { b: Vec<f64> },
    AlphaBeta { phi: Phi, b: Vec<f64> },
    Matsumoto { b: Vec<f64> },
    TwoOrder { b: Vec<f64> },
    PerturbedQuartic {
        epsilon: f64,
        #[serde(default)]
        b: Option<Vec<f64>>,
    },
    #[serde(skip)]
    Custom(CustomMetric),
}

/// A metric candidate `F(x, y)` on R^dim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    #[serde(flatten)]
    pub kind: MetricKind,
    pub dim: usize,
    #[serde(default)]
    pub x_dependent: bool,
}

/// Value, gradient and (when known in closed form) Hessian of F at y.
struct Jet {
    f: f64,
    grad: Vec<f64>,
    hess: Option<DMatrix<f64>>,
}

impl MetricSpec {
    pub fn euclidean(dim: usize) -> Self {
        Self { kind: MetricKind::Euclidean, dim, x_dependent: false }
    }

    pub fn randers(b: &[f64]) -> Self {
        Self { kind: MetricKind::Randers { b: b.to_vec() }, dim: b.len(), x_dependent: false }
    }

    pub fn matsumoto(b: &[f64]) -> Self {
        Self { kind: MetricKind::Matsumoto { b: b.to_vec() }, dim: b.len(), x_dependent: false }
    }

    pub fn two_order(b: &[f64]) -> Self {
        Self { kind: MetricKind::TwoOrder { b: b.to_vec() }, dim: b.len(), x_dependent: false }
    }

    pub fn alpha_beta(phi: Phi, b: &[f64]) -> Self {
        Self { kind: MetricKind::AlphaBeta { phi, b: b.to_vec() }, dim: b.len(), x_dependent: false }
    }

    pub fn perturbed_quartic(dim: usize, epsilon: f64, b: Option<&[f64]>) -> Self {
        Self {
            kind: MetricKind::PerturbedQuartic { epsilon, b: b.map(|v| v.to_vec()) },
            dim,
            x_dependent: false,
        }
    }

    pub fn custom(
        dim: usize,
        x_dependent: bool,
        label: impl Into<String>,
        eval: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            kind: MetricKind::Custom(CustomMetric::new(label, Arc::new(eval))),
            dim,
            x_dependent,
        }
    }

    /// `t · F` as a custom metric.
    pub fn scaled(&self, t: f64) -> Self {
        let inner = self.clone();
        Self::custom(self.dim, self.x_dependent, format!("{t}*({})", self.label()), move |x, y| {
            inner.eval(x, y).map(|v| t * v).unwrap_or(f64::NAN)
        })
    }

    pub fn label(&self) -> String {
        match &self.kind {
            MetricKind::Euclidean => "euclidean".into(),
            MetricKind::Randers { .. } => "randers".into(),
            MetricKind::AlphaBeta { .. } => "alpha_beta".into(),
            MetricKind::Matsumoto { .. } => "matsumoto".into(),
            MetricKind::TwoOrder { .. } => "two_order".into(),
            MetricKind::PerturbedQuartic { .. } => "perturbed_quartic".into(),
            MetricKind::Custom(c) => c.label.clone(),
        }
    }

    pub fn is_minkowski(&self) -> bool {
        !self.x_dependent
    }

    /// Checks dimensions and closed-form parameter ranges.
    pub fn validate(&self) -> Result<()> {
        if self.dim < 3 {
            return Err(Error::InvalidArgument(format!("ambient dimension {} < 3", self.dim)));
        }
        let check_b = |b: &[f64]| -> Result<()> {
            if b.len() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, got: b.len() });
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::ParamOutOfRange("non-finite b".into()));
            }
            Ok(())
        };
        match &self.kind {
            MetricKind::Euclidean | MetricKind::Custom(_) => Ok(()),
            MetricKind::Randers { b } => {
                check_b(b)?;
                if norm(b) >= 1.0 {
                    return Err(Error::ParamOutOfRange(format!("randers needs |b| < 1, got {}", norm(b))));
                }
                Ok(())
            }
            MetricKind::Matsumoto { b } => {
                check_b(b)?;
                if norm(b) > POLE_GUARD {
                    return Err(Error::ParamOutOfRange(format!(
                        "matsumoto needs |b| <= 1 - 1e-6, got {}",
                        norm(b)
                    )));
                }
                Ok(())
            }
            MetricKind::TwoOrder { b } | MetricKind::AlphaBeta { b, .. } => check_b(b),
            MetricKind::PerturbedQuartic { epsilon, b } => {
                if *epsilon <= 0.0 {
                    return Err(Error::ParamOutOfRange(format!("epsilon must be positive, got {epsilon}")));
                }
                if let Some(b) = b {
                    check_b(b)?;
                }
                Ok(())
            }
        }
    }

    fn check_y(&self, y: &[f64]) -> Result<f64> {
        if y.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: y.len() });
        }
        let a = norm(y);
        if a == 0.0 {
            return Err(Error::ZeroDirection);
        }
        Ok(a)
    }

    /// F(x, y).
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let alpha = self.check_y(y)?;
        let v = match &self.kind {
            MetricKind::Euclidean => alpha,
            MetricKind::Randers { b } => alpha + dot(b, y),
            MetricKind::AlphaBeta { phi, b } => alpha * phi.jet(dot(b, y) / alpha)?.0,
            MetricKind::Matsumoto { b } => alpha * Phi::Matsumoto.jet(dot(b, y) / alpha)?.0,
            MetricKind::TwoOrder { b } => alpha * Phi::TwoOrder.jet(dot(b, y) / alpha)?.0,
            MetricKind::PerturbedQuartic { epsilon, b } => {
                let q = y.iter().map(|v| v.powi(4)).sum::<f64>().sqrt();
                (q + epsilon * alpha * alpha).sqrt() + b.as_deref().map_or(0.0, |b| dot(b, y))
            }
            MetricKind::Custom(c) => (c.eval)(x, y),
        };
        if !v.is_finite() {
            return Err(Error::ParamOutOfRange(format!("{} is not finite at y = {y:?}", self.label())));
        }
        Ok(v)
    }

    fn jet(&self, x: &[f64], y: &[f64]) -> Result<Jet> {
        let alpha = self.check_y(y)?;
        let n = self.dim;
        let yh: Vec<f64> = y.iter().map(|v| v / alpha).collect();
        let alpha_beta = |phi: &Phi, b: &[f64]| -> Result<Jet> {
            let s = dot(b, &yh);
            let (p, p1, p2) = phi.jet(s)?;
            let grad: Vec<f64> = (0..n).map(|i| (p - s * p1) * yh[i] + p1 * b[i]).collect();
            let w: Vec<f64> = (0..n).map(|i| b[i] - s * yh[i]).collect();
            let hess = DMatrix::from_fn(n, n, |i, j| {
                let proj = if i == j { 1.0 } else { 0.0 } - yh[i] * yh[j];
                ((p - s * p1) * proj + p2 * w[i] * w[j]) / alpha
            });
            Ok(Jet { f: alpha * p, grad, hess: Some(hess) })
        };
        match &self.kind {
            MetricKind::Euclidean => {
                let hess = DMatrix::from_fn(n, n, |i, j| {
                    (if i == j { 1.0 } else { 0.0 } - yh[i] * yh[j]) / alpha
                });
                Ok(Jet { f: alpha, grad: yh, hess: Some(hess) })
            }
            MetricKind::Randers { b } => alpha_beta(&Phi::Randers, b),
            MetricKind::AlphaBeta { phi, b } => alpha_beta(phi, b),
            MetricKind::Matsumoto { b } => alpha_beta(&Phi::Matsumoto, b),
            MetricKind::TwoOrder { b } => alpha_beta(&Phi::TwoOrder, b),
            MetricKind::PerturbedQuartic { epsilon, b } => {
                let p4: f64 = y.iter().map(|v| v.powi(4)).sum();
                let q = p4.sqrt();
                let g = q + epsilon * alpha * alpha;
                let r = g.sqrt();
                let dq: Vec<f64> = y.iter().map(|v| 2.0 * v.powi(3) / q).collect();
                let dg: Vec<f64> = (0..n).map(|i| dq[i] + 2.0 * epsilon * y[i]).collect();
                let mut grad: Vec<f64> = dg.iter().map(|d| d / (2.0 * r)).collect();
                let hess = DMatrix::from_fn(n, n, |i, j| {
                    let mut ddq = -4.0 * y[i].powi(3) * y[j].powi(3) / (q * q * q);
                    if i == j {
                        ddq += 6.0 * y[i] * y[i] / q + 2.0 * epsilon;
                    }
                    ddq / (2.0 * r) - dg[i] * dg[j] / (4.0 * r * r * r)
                });
                let mut f = r;
                if let Some(b) = b {
                    f += dot(b, y);
                    for (gi, bi) in grad.iter_mut().zip(b) {
                        *gi += bi;
                    }
                }
                Ok(Jet { f, grad, hess: Some(hess) })
            }
            MetricKind::Custom(_) => {
                let f = self.eval(x, y)?;
                let grad = self.gradient_fd(x, y)?;
                Ok(Jet { f, grad, hess: None })
            }
        }
    }

    /// F_y(x, y), positively 0-homogeneous in y.
    pub fn gradient(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        Ok(self.jet(x, y)?.grad)
    }

    /// Value and gradient in one pass.
    pub fn value_and_gradient(&self, x: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>)> {
        let j = self.jet(x, y)?;
        Ok((j.f, j.grad))
    }

    /// Central differences with step `1e-5 |y|`.
    pub fn gradient_fd(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let alpha = self.check_y(y)?;
        let h = 1e-5 * alpha;
        let mut yp = y.to_vec();
        let mut grad = vec![0.0; self.dim];
        for i in 0..self.dim {
            yp[i] = y[i] + h;
            let fp = self.eval(x, &yp)?;
            yp[i] = y[i] - h;
            let fm = self.eval(x, &yp)?;
            yp[i] = y[i];
            grad[i] = (fp - fm) / (2.0 * h);
        }
        Ok(grad)
    }

    /// g_ij = (F^2/2)_{y^i y^j} at y/|y|; closed form for the zoo, finite
    /// differences for custom metrics.
    pub fn fundamental_tensor(&self, x: &[f64], y: &[f64]) -> Result<FundamentalTensor> {
        let alpha = self.check_y(y)?;
        let yh: Vec<f64> = y.iter().map(|v| v / alpha).collect();
        let jet = self.jet(x, &yh)?;
        match jet.hess {
            Some(h) => {
                let n = self.dim;
                let g = DMatrix::from_fn(n, n, |i, j| jet.grad[i] * jet.grad[j] + jet.f * h[(i, j)]);
                Ok(FundamentalTensor::from_matrix(g, x, &yh))
            }
            None => self.fundamental_tensor_fd(x, &yh),
        }
    }

    /// Second differences of F^2/2 on the unit sphere (h = 1e-3) with one
    /// Richardson step.
    pub fn fundamental_tensor_fd(&self, x: &[f64], y: &[f64]) -> Result<FundamentalTensor> {
        let alpha = self.check_y(y)?;
        let yh: Vec<f64> = y.iter().map(|v| v / alpha).collect();
        let n = self.dim;
        let half_sq = |v: &[f64]| -> Result<f64> {
            let f = self.eval(x, v)?;
            Ok(0.5 * f * f)
        };
        let g0 = half_sq(&yh)?;
        let second = |h: f64| -> Result<DMatrix<f64>> {
            let mut d = DMatrix::zeros(n, n);
            let mut p = yh.clone();
            for i in 0..n {
                p[i] = yh[i] + h;
                let fp = half_sq(&p)?;
                p[i] = yh[i] - h;
                let fm = half_sq(&p)?;
                p[i] = yh[i];
                d[(i, i)] = (fp - 2.0 * g0 + fm) / (h * h);
                for j in i + 1..n {
                    let mut acc = 0.0;
                    for (si, sj, w) in [(1.0, 1.0, 1.0), (1.0, -1.0, -1.0), (-1.0, 1.0, -1.0), (-1.0, -1.0, 1.0)] {
                        p[i] = yh[i] + si * h;
                        p[j] = yh[j] + sj * h;
                        acc += w * half_sq(&p)?;
                    }
                    p[i] = yh[i];
                    p[j] = yh[j];
                    d[(i, j)] = acc / (4.0 * h * h);
                    d[(j, i)] = d[(i, j)];
                }
            }
            Ok(d)
        };
        let h = 1e-3;
        let coarse = second(h)?;
        let fine = second(0.5 * h)?;
        let g = (&fine * 4.0 - &coarse) / 3.0;
        let scale = g.amax().max(1e-300);
        let defect = (&fine - &coarse).amax() / scale;
        if !defect.is_finite() || defect > 1e-4 {
            return Err(Error::NumericalBreakdown(format!(
                "finite-difference tensor unstable at y = {yh:?} (defect {defect:.2e})"
            )));
        }
        Ok(FundamentalTensor::from_matrix(g, x, &yh))
    }
}

/// The fundamental tensor at a unit direction together with its spectrum.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FundamentalTensor {
    pub g: Vec<Vec<f64>>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub eigen_min: f64,
    pub eigen_max: f64,
}

impl FundamentalTensor {
    fn from_matrix(g: DMatrix<f64>, x: &[f64], y: &[f64]) -> Self {
        let g = (&g + g.transpose()) * 0.5;
        let ev = sym_eigenvalues(&g);
        Self {
            g: g.row_iter().map(|r| r.iter().copied().collect()).collect(),
            x: x.to_vec(),
            y: y.to_vec(),
            eigen_min: ev[0],
            eigen_max: *ev.last().unwrap(),
        }
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        let n = self.g.len();
        DMatrix::from_fn(n, n, |i, j| self.g[i][j])
    }
}

/// `F_sym = [2 / (F(x,y)^-m + F(x,-y)^-m)]^(1/m)` as a custom metric.
pub fn symmetrize(spec: &MetricSpec, m: usize) -> MetricSpec {
    let inner = spec.clone();
    let mf = m as f64;
    MetricSpec::custom(spec.dim, spec.x_dependent, format!("sym{m}({})", spec.label()), move |x, y| {
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        match (inner.eval(x, y), inner.eval(x, &neg)) {
            (Ok(a), Ok(b)) if a > 0.0 && b > 0.0 => (2.0 / (a.powf(-mf) + b.powf(-mf))).powf(1.0 / mf),
            _ => f64::NAN,
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Finsler,
    Degenerate,
    Indefinite,
}

/// Sampled Finsler validity of a metric over S^m (and an x box when needed).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidityReport {
    pub metric: String,
    pub is_homogeneous: bool,
    pub min_f_on_sphere: f64,
    pub max_f_on_sphere: f64,
    pub min_g_eigenvalue: f64,
    pub lambda_f: f64,
    pub verdict: Verdict,
    pub grid_resolution: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl ValidityReport {
    pub fn is_finsler(&self) -> bool {
        self.verdict == Verdict::Finsler
    }
    pub fn m_f(&self) -> f64 {
        self.min_f_on_sphere
    }
    pub fn big_m_f(&self) -> f64 {
        self.max_f_on_sphere
    }
}

/// Sampling options for [`check_validity_with`].
#[derive(Clone, Debug)]
pub struct ValidityOptions {
    pub grid_resolution: usize,
    /// Axis-aligned box for x-dependent metrics.
    pub x_box: (f64, f64),
    pub x_points_per_axis: usize,
}

impl ValidityOptions {
    pub fn new(grid_resolution: usize) -> Self {
        Self { grid_resolution, x_box: (-1.0, 1.0), x_points_per_axis: 3 }
    }
}

fn x_samples(spec: &MetricSpec, opts: &ValidityOptions) -> Vec<Vec<f64>> {
    let n = spec.dim;
    if !spec.x_dependent {
        return vec![vec![0.0; n]];
    }
    let k = opts.x_points_per_axis.max(1);
    let (lo, hi) = opts.x_box;
    let coord = |i: usize| if k == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (k - 1) as f64 };
    let total = k.pow(n as u32);
    (0..total)
        .map(|mut idx| {
            (0..n)
                .map(|_| {
                    let c = coord(idx % k);
                    idx /= k;
                    c
                })
                .collect()
        })
        .collect()
}

pub fn check_validity(spec: &MetricSpec, m: usize, grid_resolution: usize) -> Result<ValidityReport> {
    check_validity_with(spec, m, &ValidityOptions::new(grid_resolution))
}

/// Samples F and its fundamental tensor over S^m.
pub fn check_validity_with(spec: &MetricSpec, m: usize, opts: &ValidityOptions) -> Result<ValidityReport> {
    if opts.grid_resolution < 16 {
        return Err(Error::InvalidArgument(format!(
            "grid resolution {} < 16",
            opts.grid_resolution
        )));
    }
    if spec.dim != m + 1 {
        return Err(Error::DimensionMismatch { expected: m + 1, got: spec.dim });
    }
    spec.validate()?;
    let pts = sample_sphere(m, opts.grid_resolution)?;
    let xs = x_samples(spec, opts);
    let mut report = ValidityReport {
        metric: spec.label(),
        is_homogeneous: true,
        min_f_on_sphere: f64::INFINITY,
        max_f_on_sphere: f64::NEG_INFINITY,
        min_g_eigenvalue: f64::INFINITY,
        lambda_f: f64::NEG_INFINITY,
        verdict: Verdict::Finsler,
        grid_resolution: opts.grid_resolution,
        failure: None,
    };
    let n = m + 1;
    let degenerate = |report: &mut ValidityReport, why: String| {
        report.verdict = Verdict::Degenerate;
        report.min_f_on_sphere = report.min_f_on_sphere.min(0.0);
        report.failure.get_or_insert(why);
    };
    for x in &xs {
        for (k, y) in pts.chunks(n).enumerate() {
            let f = match spec.eval(x, y) {
                Ok(f) => f,
                Err(e) => {
                    degenerate(&mut report, e.to_string());
                    continue;
                }
            };
            report.min_f_on_sphere = report.min_f_on_sphere.min(f);
            report.max_f_on_sphere = report.max_f_on_sphere.max(f);
            if k % 97 == 0 {
                let t = 3.7;
                let ty: Vec<f64> = y.iter().map(|v| t * v).collect();
                match spec.eval(x, &ty) {
                    Ok(ft) if ((ft - t * f) / (t * f.abs().max(1e-300))).abs() <= 1e-9 => {}
                    _ => report.is_homogeneous = false,
                }
            }
            match spec.fundamental_tensor(x, y) {
                Ok(g) => {
                    report.min_g_eigenvalue = report.min_g_eigenvalue.min(g.eigen_min);
                    report.lambda_f = report.lambda_f.max(g.eigen_max);
                }
                Err(e) => degenerate(&mut report, e.to_string()),
            }
        }
    }
    if report.verdict == Verdict::Finsler {
        report.verdict = if report.min_f_on_sphere <= TOL_POS || !report.is_homogeneous {
            Verdict::Degenerate
        } else if report.min_g_eigenvalue > TOL_POS {
            Verdict::Finsler
        } else if report.min_g_eigenvalue >= -TOL_POS {
            Verdict::Degenerate
        } else {
            Verdict::Indefinite
        };
    }
    Ok(report)
}

/// Outcome of the joint test: F and its m-harmonic symmetrization are both Finsler.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GaReport {
    pub base: ValidityReport,
    pub symmetrized: ValidityReport,
    pub holds: bool,
}

pub fn check_ga(spec: &MetricSpec, m: usize, grid_resolution: usize) -> Result<GaReport> {
    let base = check_validity(spec, m, grid_resolution)?;
    let symmetrized = check_validity(&symmetrize(spec, m), m, grid_resolution)?;
    let holds = base.is_finsler() && symmetrized.is_finsler();
    Ok(GaReport { base, symmetrized, holds })
}

/// One-parameter families scanned by [`bisect_threshold`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdFamily {
    Randers,
    TwoOrder,
    Matsumoto,
    AlphaBeta(Phi),
}

impl ThresholdFamily {
    pub fn metric(&self, b: &[f64]) -> MetricSpec {
        match self {
            ThresholdFamily::Randers => MetricSpec::randers(b),
            ThresholdFamily::TwoOrder => MetricSpec::two_order(b),
            ThresholdFamily::Matsumoto => MetricSpec::matsumoto(b),
            ThresholdFamily::AlphaBeta(phi) => MetricSpec::alpha_beta(phi.clone(), b),
        }
    }

    /// Right end of the scan interval, kept inside the parameter domain.
    pub fn b_max(&self) -> f64 {
        0.999
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub family: ThresholdFamily,
    pub m: usize,
    pub direction: Vec<f64>,
    pub threshold: f64,
    /// Largest |b| verified to pass the joint test.
    pub passes_at: f64,
    /// Smallest |b| verified to fail the joint test.
    pub fails_at: f64,
    pub ga_evaluations: usize,
    pub grid_resolution: usize,
}

/// Bisects the |b| at which the joint Finsler test of F and F_sym stops passing along `direction`.
pub fn bisect_threshold(
    family: &ThresholdFamily,
    m: usize,
    direction: &[f64],
    tol: f64,
    grid_resolution: usize,
) -> Result<ThresholdReport> {
    if tol <= 0.0 {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let dir = crate::sphere::normalized(direction)?;
    if dir.len() != m + 1 {
        return Err(Error::DimensionMismatch { expected: m + 1, got: dir.len() });
    }
    let mut evaluations = 0;
    let mut ga = |t: f64| -> Result<bool> {
        evaluations += 1;
        let b: Vec<f64> = dir.iter().map(|d| d * t).collect();
        Ok(check_ga(&family.metric(&b), m, grid_resolution)?.holds)
    };
    let (lo0, hi0) = (0.0, family.b_max());
    // Coarse scan: the verdict must change exactly once.
    let coarse = 12;
    let verdicts: Vec<bool> = (0..=coarse)
        .map(|i| ga(lo0 + (hi0 - lo0) * i as f64 / coarse as f64))
        .collect::<Result<_>>()?;
    let changes = verdicts.windows(2).filter(|w| w[0] != w[1]).count();
    if changes == 0 || !verdicts[0] {
        return Err(Error::NoTransition { lo: lo0, hi: hi0 });
    }
    if changes > 1 {
        return Err(Error::NumericalBreakdown(format!(
            "verdict changes {changes} times on [{lo0}, {hi0}]"
        )));
    }
    let k = verdicts.windows(2).position(|w| w[0] != w[1]).unwrap();
    let mut lo = lo0 + (hi0 - lo0) * k as f64 / coarse as f64;
    let mut hi = lo0 + (hi0 - lo0) * (k + 1) as f64 / coarse as f64;
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if ga(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(ThresholdReport {
        family: family.clone(),
        m,
        direction: dir,
        threshold: 0.5 * (lo + hi),
        passes_at: lo,
        fails_at: hi,
        ga_evaluations: evaluations,
        grid_resolution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const X: [f64; 3] = [0.0; 3];

    fn zoo() -> Vec<MetricSpec> {
        vec![
            MetricSpec::euclidean(3),
            MetricSpec::randers(&[0.1, -0.2, 0.5]),
            MetricSpec::matsumoto(&[0.0, 0.3, 0.1]),
            MetricSpec::two_order(&[0.2, 0.0, 0.1]),
            MetricSpec::alpha_beta(Phi::TanhOdd { amplitude: 0.5, m: 2 }, &[0.0, 0.4, 0.0]),
            MetricSpec::alpha_beta(Phi::Polynomial { coeffs: vec![1.0, 0.3, 0.2] }, &[0.3, 0.0, 0.0]),
            MetricSpec::perturbed_quartic(3, 1.0, None),
            MetricSpec::perturbed_quartic(3, 0.5, Some(&[0.0, 0.1, 0.2])),
        ]
    }

    #[test]
    fn closed_form_values() {
        assert_eq!(MetricSpec::euclidean(3).eval(&X, &[3.0, 4.0, 0.0]).unwrap(), 5.0);
        let r = MetricSpec::randers(&[0.0, 0.0, 0.5]);
        assert!((r.eval(&X, &[0.0, 0.0, 1.0]).unwrap() - 1.5).abs() < 1e-15);
        let mt = MetricSpec::matsumoto(&[0.0, 0.0, 0.4]);
        assert!((mt.eval(&X, &[0.0, 0.0, 1.0]).unwrap() - 1.0 / 0.6).abs() < 1e-14);
    }

    #[test]
    fn closed_form_gradients() {
        let g = MetricSpec::euclidean(3).gradient(&X, &[0.0, 0.0, 2.0]).unwrap();
        assert_eq!(g, vec![0.0, 0.0, 1.0]);
        let g = MetricSpec::randers(&[0.0, 0.0, 0.5]).gradient(&X, &[1.0, 0.0, 0.0]).unwrap();
        for (a, b) in g.iter().zip([1.0, 0.0, 0.5]) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn errors() {
        let e = MetricSpec::euclidean(3);
        assert_eq!(e.eval(&X, &[0.0; 3]), Err(Error::ZeroDirection));
        assert_eq!(e.gradient(&X, &[0.0; 3]).unwrap_err(), Error::ZeroDirection);
        let mt = MetricSpec::matsumoto(&[0.0, 0.0, 1.0]);
        assert!(matches!(mt.eval(&X, &[0.0, 0.0, 1.0]), Err(Error::ParamOutOfRange(_))));
        assert!(MetricSpec::randers(&[0.0, 0.0, 1.2]).validate().is_err());
        assert!(MetricSpec::perturbed_quartic(3, -1.0, None).validate().is_err());
    }

    #[test]
    fn euler_identities_across_zoo() {
        let dirs = [[0.3, -0.7, 0.2], [1.0, 0.0, 0.0], [-0.2, -0.1, -0.9], [0.5, 0.5, -0.5]];
        for spec in zoo() {
            for d in dirs {
                let y: Vec<f64> = d.iter().map(|v| v / norm(&d)).collect();
                let (f, g) = spec.value_and_gradient(&X, &y).unwrap();
                assert!((dot(&y, &g) - f).abs() < 1e-10, "{}", spec.label());
                let t = spec.fundamental_tensor(&X, &y).unwrap().matrix();
                let yv = nalgebra::DVector::from_column_slice(&y);
                let q = yv.dot(&(&t * &yv));
                assert!(((q - f * f) / (f * f)).abs() < 1e-8, "{}", spec.label());
            }
        }
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        for spec in zoo() {
            let y = [0.3, -0.7, 0.2];
            let a = spec.gradient(&X, &y).unwrap();
            let b = spec.gradient_fd(&X, &y).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-8, "{}: {a:?} vs {b:?}", spec.label());
            }
        }
    }

    #[test]
    fn tensor_analytic_vs_fd() {
        for spec in zoo() {
            for y in [[0.3, -0.7, 0.2], [0.0, 0.0, 1.0], [0.6, 0.8, 0.0]] {
                let a = spec.fundamental_tensor(&X, &y).unwrap().matrix();
                let b = spec.fundamental_tensor_fd(&X, &y).unwrap().matrix();
                assert!((&a - &b).amax() <= 1e-7, "{} at {y:?}: {}", spec.label(), (&a - &b).amax());
            }
        }
    }

    #[test]
    fn euclidean_tensor_is_identity() {
        let t = MetricSpec::euclidean(3).fundamental_tensor(&X, &[0.0, 3.0, 4.0]).unwrap();
        assert!((t.matrix() - DMatrix::<f64>::identity(3, 3)).amax() < 1e-14);
        assert!((t.eigen_min - 1.0).abs() < 1e-14 && (t.eigen_max - 1.0).abs() < 1e-14);
        let r = MetricSpec::randers(&[0.0, 0.0, 0.5]).fundamental_tensor(&X, &[0.0, 0.0, 1.0]).unwrap();
        assert!(r.eigen_min > 0.0);
        for i in 0..3 {
            for j in 0..3 {
                assert!((r.g[i][j] - r.g[j][i]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn symmetrization_values() {
        let r = MetricSpec::randers(&[0.0, 0.0, 0.5]);
        let s = symmetrize(&r, 2);
        let v = s.eval(&X, &[0.0, 0.0, 1.0]).unwrap();
        let expect = (2.0 / (1.5f64.powi(-2) + 0.5f64.powi(-2))).sqrt();
        assert!((v - expect).abs() < 1e-14);
        assert!((v - 0.6708).abs() < 1e-4);
        for rev in [MetricSpec::euclidean(3), MetricSpec::perturbed_quartic(3, 1.0, None)] {
            let s = symmetrize(&rev, 2);
            for y in [[0.3, -0.7, 0.2], [1.0, 2.0, 3.0]] {
                assert!((s.eval(&X, &y).unwrap() - rev.eval(&X, &y).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tanh_profile_gives_euclidean_symmetrization() {
        let spec = MetricSpec::alpha_beta(Phi::TanhOdd { amplitude: 0.5, m: 2 }, &[0.0, 0.3, 0.2]);
        let s = symmetrize(&spec, 2);
        let y = [0.4, -0.1, 0.7];
        assert!((s.eval(&X, &y).unwrap() - norm(&y)).abs() < 1e-12);
    }

    #[test]
    fn validity_of_euclidean() {
        let r = check_validity(&MetricSpec::euclidean(3), 2, 32).unwrap();
        assert_eq!(r.verdict, Verdict::Finsler);
        for v in [r.min_f_on_sphere, r.max_f_on_sphere, r.lambda_f, r.min_g_eigenvalue] {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert!(check_validity(&MetricSpec::euclidean(3), 2, 8).is_err());
        assert!(check_validity(&MetricSpec::euclidean(4), 2, 32).is_err());
    }

    #[test]
    fn ga_randers_around_threshold() {
        assert!(check_ga(&MetricSpec::randers(&[0.0, 0.0, 0.5]), 2, 32).unwrap().holds);
        let bad = check_ga(&MetricSpec::randers(&[0.0, 0.0, 0.7]), 2, 32).unwrap();
        assert!(bad.base.is_finsler());
        assert!(!bad.holds);
        assert_ne!(bad.symmetrized.verdict, Verdict::Finsler);
    }

    #[test]
    fn ga_equivalence_for_reversible_metrics() {
        for spec in [MetricSpec::euclidean(3), MetricSpec::perturbed_quartic(3, 1.0, None)] {
            let a = check_validity(&spec, 2, 24).unwrap();
            let b = check_ga(&spec, 2, 24).unwrap();
            assert_eq!(a.verdict, b.symmetrized.verdict);
            assert_eq!(a.is_finsler(), b.holds);
        }
    }

    #[test]
    fn tanh_family_satisfies_ga() {
        let spec = MetricSpec::alpha_beta(Phi::TanhOdd { amplitude: 0.5, m: 2 }, &[0.0, 0.0, 0.3]);
        assert!(check_ga(&spec, 2, 32).unwrap().holds);
    }

    #[test]
    fn x_dependent_metric_is_box_sampled() {
        let spec = MetricSpec::custom(3, true, "randers-x", |x, y| norm(y) + 0.2 * (1.0 + x[0]) * y[2]);
        let r = check_validity(&spec, 2, 16).unwrap();
        assert!(r.is_finsler());
        // at x0 = 1 the drift is 0.4, so F ranges over [0.6, 1.4]
        assert!((r.min_f_on_sphere - 0.6).abs() < 1e-9);
        assert!((r.max_f_on_sphere - 1.4).abs() < 1e-9);
    }

    #[test]
    fn non_homogeneous_custom_is_rejected() {
        let spec = MetricSpec::custom(3, false, "bad", |_, y| norm(y) + 0.1 * dot(y, y));
        let r = check_validity(&spec, 2, 16).unwrap();
        assert!(!r.is_homogeneous);
        assert_eq!(r.verdict, Verdict::Degenerate);
    }

    #[test]
    fn no_transition_is_reported() {
        let phi = Phi::TanhOdd { amplitude: 0.1, m: 2 };
        let e = bisect_threshold(&ThresholdFamily::AlphaBeta(phi), 2, &[0.0, 0.0, 1.0], 0.05, 16);
        assert!(matches!(e, Err(Error::NoTransition { .. })), "{e:?}");
    }

    #[test]
    fn json_round_trip() {
        let spec = MetricSpec::randers(&[0.0, 0.0, 0.5]);
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(s, r#"{"kind":"randers","params":{"b":[0.0,0.0,0.5]},"dim":3,"x_dependent":false}"#);
        let back: MetricSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(back, spec);
        let e: MetricSpec = serde_json::from_str(r#"{"kind":"euclidean","dim":3}"#).unwrap();
        assert_eq!(e, MetricSpec::euclidean(3));
        let q: MetricSpec =
            serde_json::from_str(r#"{"kind":"perturbed_quartic","params":{"epsilon":1.0},"dim":3}"#).unwrap();
        assert_eq!(q, MetricSpec::perturbed_quartic(3, 1.0, None));
    }

    proptest! {
        #[test]
        fn homogeneity(y in prop::array::uniform3(-2.0f64..2.0), t in 0.01f64..10.0) {
            prop_assume!(norm(&y) > 1e-3);
            let ty: Vec<f64> = y.iter().map(|v| t * v).collect();
            for spec in zoo() {
                let a = spec.eval(&X, &ty).unwrap();
                let b = t * spec.eval(&X, &y).unwrap();
                prop_assert!(((a - b) / b).abs() <= 1e-12);
            }
            let s = symmetrize(&MetricSpec::randers(&[0.1, 0.2, 0.3]), 2);
            let a = s.eval(&X, &ty).unwrap();
            let b = t * s.eval(&X, &y).unwrap();
            prop_assert!(((a - b) / b).abs() <= 1e-9);
        }

        #[test]
        fn symmetrization_is_even_and_idempotent(y in prop::array::uniform3(-2.0f64..2.0)) {
            prop_assume!(norm(&y) > 1e-3);
            let r = MetricSpec::randers(&[0.2, -0.3, 0.4]);
            let s = symmetrize(&r, 2);
            let ss = symmetrize(&s, 2);
            let neg: Vec<f64> = y.iter().map(|v| -v).collect();
            let v = s.eval(&X, &y).unwrap();
            prop_assert!((v - s.eval(&X, &neg).unwrap()).abs() <= 1e-12 * v);
            prop_assert!((v - ss.eval(&X, &y).unwrap()).abs() <= 1e-12 * v);
        }
    }
}
