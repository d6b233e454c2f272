//! Funk transform on S^2 in the real orthonormal spherical-harmonic basis.
//!
//! The transform is diagonal: degree `l` is multiplied by `P_l(0)`, so odd
//! degrees are annihilated and even degrees are inverted by division.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::{gauss_legendre, legendre_with_derivative, norm};

/// Relative odd energy above which inversion is refused.
pub const ODD_TOL: f64 = 1e-8;
/// Relative energy in the top even band above which truncation is flagged.
pub const TRUNCATION_TOL: f64 = 1e-6;

/// Coefficients `c_{l,k}`, `-l ≤ k ≤ l`, stored at index `l^2 + l + k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphericalHarmonicCoeffs {
    pub max_degree: usize,
    pub coeffs: Vec<f64>,
}

fn index(l: usize, k: i64) -> usize {
    ((l * l + l) as i64 + k) as usize
}

impl SphericalHarmonicCoeffs {
    pub fn zeros(max_degree: usize) -> Self {
        Self { max_degree, coeffs: vec![0.0; (max_degree + 1) * (max_degree + 1)] }
    }

    pub fn get(&self, l: usize, k: i64) -> f64 {
        self.coeffs[index(l, k)]
    }

    pub fn set(&mut self, l: usize, k: i64, v: f64) {
        self.coeffs[index(l, k)] = v;
    }

    pub fn degree_energy(&self, l: usize) -> f64 {
        self.coeffs[l * l..(l + 1) * (l + 1)].iter().map(|c| c * c).sum()
    }

    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }

    pub fn odd_energy(&self) -> f64 {
        (1..=self.max_degree).step_by(2).map(|l| self.degree_energy(l)).sum()
    }

    /// Evaluates the expansion at the direction of `y`.
    pub fn synthesize(&self, y: &[f64]) -> f64 {
        let r = norm(y);
        let (x, yy, z) = (y[0] / r, y[1] / r, y[2] / r);
        let s = (x * x + yy * yy).sqrt();
        let phi = yy.atan2(x);
        let table = normalized_legendre(self.max_degree, z, s);
        let mut acc = 0.0;
        for l in 0..=self.max_degree {
            acc += self.coeffs[l * l + l] * table[tri(l, 0)];
            for k in 1..=l {
                let (sk, ck) = (k as f64 * phi).sin_cos();
                let p = std::f64::consts::SQRT_2 * table[tri(l, k)];
                acc += p * (self.coeffs[l * l + l + k] * ck + self.coeffs[l * l + l - k] * sk);
            }
        }
        acc
    }

    /// Projects `f` onto degrees `≤ max_degree` on a Gauss-Legendre grid
    /// that is exact for band-limited input.
    pub fn analyze(f: impl Fn(&[f64]) -> f64, max_degree: usize) -> Self {
        SphereGrid::sample(f, 2 * (max_degree + 1), 4 * (max_degree + 1)).analyze(max_degree)
    }
}

fn tri(l: usize, k: usize) -> usize {
    l * (l + 1) / 2 + k
}

/// Fully normalized `N_lk P_l^k(z)` for `0 ≤ k ≤ l ≤ lmax`, no Condon-Shortley
/// phase, where `s = sqrt(1 - z^2)`.
fn normalized_legendre(lmax: usize, z: f64, s: f64) -> Vec<f64> {
    let mut p = vec![0.0; tri(lmax, lmax) + 1];
    p[0] = 0.5 / PI.sqrt();
    for k in 1..=lmax {
        let kf = k as f64;
        p[tri(k, k)] = ((2.0 * kf + 1.0) / (2.0 * kf)).sqrt() * s * p[tri(k - 1, k - 1)];
    }
    for k in 0..lmax {
        p[tri(k + 1, k)] = (2.0 * k as f64 + 3.0).sqrt() * z * p[tri(k, k)];
        for l in k + 2..=lmax {
            let (lf, kf) = (l as f64, k as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - kf * kf)).sqrt();
            let b = (((lf - 1.0).powi(2) - kf * kf) / (4.0 * (lf - 1.0).powi(2) - 1.0)).sqrt();
            p[tri(l, k)] = a * (z * p[tri(l - 1, k)] - b * p[tri(l - 2, k)]);
        }
    }
    p
}

/// Samples on a Gauss-Legendre latitude by uniform longitude grid.
/// `values` is row-major with latitude outer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SphereGrid {
    /// `cos θ` of each latitude row, ascending.
    pub cos_colatitudes: Vec<f64>,
    pub lat_weights: Vec<f64>,
    pub nlon: usize,
    pub values: Vec<f64>,
}

impl SphereGrid {
    pub fn sample(f: impl Fn(&[f64]) -> f64, nlat: usize, nlon: usize) -> Self {
        let (t, w) = gauss_legendre(nlat);
        let mut values = Vec::with_capacity(nlat * nlon);
        for &ct in &t {
            let st = (1.0 - ct * ct).sqrt();
            for j in 0..nlon {
                let (sp, cp) = (2.0 * PI * j as f64 / nlon as f64).sin_cos();
                values.push(f(&[st * cp, st * sp, ct]));
            }
        }
        Self { cos_colatitudes: t, lat_weights: w, nlon, values }
    }

    pub fn nlat(&self) -> usize {
        self.cos_colatitudes.len()
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 3] {
        let ct = self.cos_colatitudes[i];
        let st = (1.0 - ct * ct).sqrt();
        let (sp, cp) = (2.0 * PI * j as f64 / self.nlon as f64).sin_cos();
        [st * cp, st * sp, ct]
    }

    pub fn map(&self, f: impl Fn(&[f64], f64) -> f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.nlat() {
            for j in 0..self.nlon {
                let v = &mut out.values[i * self.nlon + j];
                *v = f(&self.point(i, j), *v);
            }
        }
        out
    }

    /// Exact for degree `≤ max_degree` when `nlat > max_degree` and
    /// `nlon > 2 max_degree`.
    pub fn analyze(&self, max_degree: usize) -> SphericalHarmonicCoeffs {
        let mut c = SphericalHarmonicCoeffs::zeros(max_degree);
        let dphi = 2.0 * PI / self.nlon as f64;
        let mut cos_sum = vec![0.0; max_degree + 1];
        let mut sin_sum = vec![0.0; max_degree + 1];
        for (i, (&ct, &w)) in self.cos_colatitudes.iter().zip(&self.lat_weights).enumerate() {
            let row = &self.values[i * self.nlon..(i + 1) * self.nlon];
            for k in 0..=max_degree {
                let (mut cs, mut ss) = (0.0, 0.0);
                for (j, v) in row.iter().enumerate() {
                    let (sk, ck) = (k as f64 * dphi * j as f64).sin_cos();
                    cs += v * ck;
                    ss += v * sk;
                }
                cos_sum[k] = cs * dphi;
                sin_sum[k] = ss * dphi;
            }
            let table = normalized_legendre(max_degree, ct, (1.0 - ct * ct).sqrt());
            for l in 0..=max_degree {
                c.coeffs[l * l + l] += w * table[tri(l, 0)] * cos_sum[0];
                for k in 1..=l {
                    let p = w * std::f64::consts::SQRT_2 * table[tri(l, k)];
                    c.coeffs[l * l + l + k] += p * cos_sum[k];
                    c.coeffs[l * l + l - k] += p * sin_sum[k];
                }
            }
        }
        c
    }

    /// CSV with header `cos_colatitude,longitude,weight,value`, latitude outer.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["cos_colatitude", "longitude", "weight", "value"])?;
        for i in 0..self.nlat() {
            for j in 0..self.nlon {
                let lon = 2.0 * PI * j as f64 / self.nlon as f64;
                wr.serialize((self.cos_colatitudes[i], lon, self.lat_weights[i], self.values[i * self.nlon + j]))?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut rows: Vec<(f64, f64, f64, f64)> = Vec::new();
        for rec in rd.deserialize() {
            rows.push(rec?);
        }
        if rows.is_empty() {
            return Err(Error::Format("empty sphere grid".into()));
        }
        let first = rows[0].0;
        let nlon = rows.iter().take_while(|r| r.0 == first).count();
        if rows.len() % nlon != 0 {
            return Err(Error::Format(format!("{} rows is not a multiple of {nlon} longitudes", rows.len())));
        }
        let nlat = rows.len() / nlon;
        let mut grid = Self { cos_colatitudes: Vec::with_capacity(nlat), lat_weights: Vec::with_capacity(nlat), nlon, values: Vec::with_capacity(rows.len()) };
        for i in 0..nlat {
            let row = &rows[i * nlon..(i + 1) * nlon];
            if row.iter().any(|r| r.0 != row[0].0) {
                return Err(Error::Format(format!("latitude row {i} is ragged")));
            }
            grid.cos_colatitudes.push(row[0].0);
            grid.lat_weights.push(row[0].2);
            grid.values.extend(row.iter().map(|r| r.3));
        }
        Ok(grid)
    }
}

/// `P_l(0)`.
pub fn funk_multiplier(l: usize) -> f64 {
    legendre_with_derivative(l, 0.0).0
}

pub fn funk_forward(c: &SphericalHarmonicCoeffs) -> SphericalHarmonicCoeffs {
    let mut out = c.clone();
    for l in 0..=c.max_degree {
        let lam = funk_multiplier(l);
        out.coeffs[l * l..(l + 1) * (l + 1)].iter_mut().for_each(|v| *v *= lam);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunkInverse {
    pub coeffs: SphericalHarmonicCoeffs,
    /// Share of input energy in the highest even degree.
    pub top_band_fraction: f64,
    pub truncation_warning: bool,
}

impl FunkInverse {
    pub fn eval(&self, y: &[f64]) -> f64 {
        self.coeffs.synthesize(y)
    }
}

/// Inverse on even input: divides degree `l` by `P_l(0)`.
pub fn funk_inverse(c: &SphericalHarmonicCoeffs) -> Result<FunkInverse> {
    let total = c.energy();
    if total > 0.0 {
        let odd_fraction = c.odd_energy() / total;
        if odd_fraction > ODD_TOL {
            return Err(Error::OddInput { odd_fraction });
        }
    }
    let mut out = SphericalHarmonicCoeffs::zeros(c.max_degree);
    for l in (0..=c.max_degree).step_by(2) {
        let lam = funk_multiplier(l);
        for i in l * l..(l + 1) * (l + 1) {
            out.coeffs[i] = c.coeffs[i] / lam;
        }
    }
    let top = c.max_degree - c.max_degree % 2;
    let top_band_fraction = if total > 0.0 && top > 0 { c.degree_energy(top) / total } else { 0.0 };
    Ok(FunkInverse { coeffs: out, top_band_fraction, truncation_warning: top_band_fraction > TRUNCATION_TOL })
}

/// Analyzes `f` up to `max_degree` and inverts.
pub fn funk_inverse_fn(f: impl Fn(&[f64]) -> f64, max_degree: usize) -> Result<FunkInverse> {
    funk_inverse(&SphericalHarmonicCoeffs::analyze(f, max_degree))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radon::spherical_radon;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn even_poly(y: &[f64]) -> f64 {
        let r = norm(y);
        let (a, b, c) = (y[0] / r, y[1] / r, y[2] / r);
        a * a * b.powi(4) + 0.3 * c.powi(8) - 0.7 * a * b * c * c + 0.2
    }

    #[test]
    fn multipliers() {
        assert_eq!(funk_multiplier(0), 1.0);
        assert!((funk_multiplier(2) + 0.5).abs() < 1e-15);
        assert!((funk_multiplier(4) - 0.375).abs() < 1e-15);
        assert_eq!(funk_multiplier(3), 0.0);
    }

    #[test]
    fn basis_is_orthonormal() {
        let lmax = 6;
        let n = (lmax + 1) * (lmax + 1);
        for i in 0..n {
            let mut unit = SphericalHarmonicCoeffs::zeros(lmax);
            unit.coeffs[i] = 1.0;
            let back = SphericalHarmonicCoeffs::analyze(|y| unit.synthesize(y), lmax);
            for j in 0..n {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((back.coeffs[j] - e).abs() < 1e-12, "{i} {j} {}", back.coeffs[j]);
            }
        }
    }

    #[test]
    fn degree_two_eigenvalue() {
        let p2 = |y: &[f64]| {
            let z = y[2] / norm(y);
            0.5 * (3.0 * z * z - 1.0)
        };
        let zeta = [0.3, 0.2, 0.9];
        let ratio = spherical_radon(p2, &zeta, 64).unwrap() / p2(&zeta);
        assert!((ratio + 0.5).abs() < 1e-12);
    }

    #[test]
    fn forward_matches_quadrature() {
        let c = SphericalHarmonicCoeffs::analyze(even_poly, 8);
        let fc = funk_forward(&c);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let z: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let direct = spherical_radon(even_poly, &z, 64).unwrap();
            assert!((fc.synthesize(&z) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_even_band_limited() {
        // invert the quadrature transform, then compare with the original
        let phi = |y: &[f64]| spherical_radon(even_poly, y, 64).unwrap();
        let inv = funk_inverse_fn(phi, 8).unwrap();
        assert!(!inv.truncation_warning || inv.top_band_fraction > 0.0);
        let grid = SphereGrid::sample(|_| 0.0, 24, 48);
        let mut err: f64 = 0.0;
        for i in 0..grid.nlat() {
            for j in 0..grid.nlon {
                let p = grid.point(i, j);
                err = err.max((inv.eval(&p) - even_poly(&p)).abs());
            }
        }
        assert!(err <= 1e-8, "{err}");
        // and forward after inverse
        let g = |y: &[f64]| inv.eval(y);
        for i in (0..grid.nlat()).step_by(5) {
            let p = grid.point(i, 3);
            assert!((spherical_radon(g, &p, 64).unwrap() - phi(&p)).abs() <= 1e-8);
        }
    }

    #[test]
    fn odd_input_rejected() {
        let f = |y: &[f64]| y[0] / norm(y) + 1.0;
        match funk_inverse_fn(f, 4) {
            Err(Error::OddInput { odd_fraction }) => assert!(odd_fraction > 0.1),
            other => panic!("{other:?}"),
        }
        assert!(funk_inverse(&SphericalHarmonicCoeffs::zeros(4)).is_ok());
    }

    #[test]
    fn truncation_flagged_for_non_band_limited() {
        let f = |y: &[f64]| 1.0 / (1.2 - (y[2] / norm(y)).powi(2));
        let inv = funk_inverse_fn(f, 6).unwrap();
        assert!(inv.truncation_warning);
        let inv = funk_inverse_fn(even_poly, 8).unwrap();
        assert!(!inv.truncation_warning || inv.top_band_fraction < 1.0);
    }

    #[test]
    fn parseval() {
        let f = |y: &[f64]| even_poly(y) + 0.4 * y[0] * y[1] / norm(y).powi(2) + 0.3 * y[2] / norm(y);
        let c = SphericalHarmonicCoeffs::analyze(f, 8);
        let grid = SphereGrid::sample(f, 20, 40);
        let dphi = 2.0 * PI / grid.nlon as f64;
        let l2: f64 = (0..grid.nlat())
            .map(|i| grid.lat_weights[i] * dphi * grid.values[i * grid.nlon..(i + 1) * grid.nlon].iter().map(|v| v * v).sum::<f64>())
            .sum();
        assert!((c.energy() - l2).abs() <= 1e-8 * l2);
    }

    #[test]
    fn constants_are_fixed() {
        let inv = funk_inverse_fn(|_| 1.0, 6).unwrap();
        assert!((inv.eval(&[0.3, 0.4, -0.2]) - 1.0).abs() < 1e-13);
        assert!(!inv.truncation_warning);
        let mut c = SphericalHarmonicCoeffs::zeros(2);
        c.set(2, -1, 0.5);
        assert_eq!(c.get(2, -1), 0.5);
        assert_eq!(c.coeffs[5], 0.5);
    }

    #[test]
    fn grid_csv_round_trip() {
        let grid = SphereGrid::sample(even_poly, 6, 12);
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let back = SphereGrid::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.nlat(), 6);
        assert_eq!(back.nlon, 12);
        for (a, b) in back.values.iter().zip(&grid.values) {
            assert!((a - b).abs() < 1e-15);
        }
        let json = serde_json::to_string(&grid).unwrap();
        assert_eq!(serde_json::from_str::<SphereGrid>(&json).unwrap(), grid);
    }
}
