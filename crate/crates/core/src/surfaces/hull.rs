//! Euclidean convex hull of a point cloud in R^3 with a planar fallback.

use crate::error::{Error, Result};

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn len3(a: [f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

fn unit(a: [f64; 3]) -> [f64; 3] {
    let l = len3(a);
    [a[0] / l, a[1] / l, a[2] / l]
}

#[derive(Clone, Debug)]
struct Plane {
    normal: [f64; 3],
    offset: f64,
}

impl Plane {
    fn through(a: [f64; 3], b: [f64; 3], c: [f64; 3]) -> Self {
        let normal = unit(cross(sub(b, a), sub(c, a)));
        Self { offset: dot3(normal, a), normal }
    }

    fn distance(&self, p: [f64; 3]) -> f64 {
        dot3(self.normal, p) - self.offset
    }
}

#[derive(Clone, Debug)]
enum Shape {
    Solid { faces: Vec<[usize; 3]>, planes: Vec<Plane> },
    Flat { plane: Plane, origin: [f64; 3], u: [f64; 3], v: [f64; 3], polygon: Vec<[f64; 2]> },
}

/// Convex hull supporting signed outside distances.
#[derive(Clone, Debug)]
pub struct ConvexHull {
    pub points: Vec<[f64; 3]>,
    shape: Shape,
}

impl ConvexHull {
    pub fn new(points: &[[f64; 3]]) -> Result<Self> {
        if points.len() < 3 {
            return Err(Error::InvalidArgument("convex hull needs at least 3 points".into()));
        }
        let scale = points.iter().map(|p| len3(sub(*p, points[0]))).fold(0.0, f64::max);
        if !(scale > 0.0) {
            return Err(Error::InvalidArgument("convex hull of coincident points".into()));
        }
        let eps = 1e-12 * scale;
        let i0 = 0;
        let i1 = argmax(points, |p| len3(sub(p, points[i0])));
        let d01 = unit(sub(points[i1], points[i0]));
        let i2 = argmax(points, |p| {
            let w = sub(p, points[i0]);
            len3(cross(w, d01))
        });
        if len3(cross(sub(points[i2], points[i0]), d01)) <= eps {
            return Err(Error::InvalidArgument("convex hull of collinear points".into()));
        }
        let base = Plane::through(points[i0], points[i1], points[i2]);
        let i3 = argmax(points, |p| base.distance(p).abs());
        if base.distance(points[i3]).abs() <= eps {
            return Ok(Self { points: points.to_vec(), shape: flat(points, base, points[i0], d01) });
        }
        let centroid = {
            let s = [points[i0], points[i1], points[i2], points[i3]]
                .iter()
                .fold([0.0; 3], |a, p| [a[0] + p[0], a[1] + p[1], a[2] + p[2]]);
            [s[0] / 4.0, s[1] / 4.0, s[2] / 4.0]
        };
        let mut faces: Vec<[usize; 3]> = Vec::new();
        for f in [[i0, i1, i2], [i0, i1, i3], [i0, i2, i3], [i1, i2, i3]] {
            let pl = Plane::through(points[f[0]], points[f[1]], points[f[2]]);
            faces.push(if pl.distance(centroid) > 0.0 { [f[0], f[2], f[1]] } else { f });
        }
        let mut planes: Vec<Plane> = faces.iter().map(|f| Plane::through(points[f[0]], points[f[1]], points[f[2]])).collect();
        for (pi, &p) in points.iter().enumerate() {
            if [i0, i1, i2, i3].contains(&pi) {
                continue;
            }
            let visible: Vec<bool> = planes.iter().map(|pl| pl.distance(p) > eps).collect();
            if !visible.iter().any(|v| *v) {
                continue;
            }
            let mut edges = std::collections::HashSet::new();
            for (f, vis) in faces.iter().zip(&visible) {
                if *vis {
                    for e in 0..3 {
                        edges.insert((f[e], f[(e + 1) % 3]));
                    }
                }
            }
            let mut horizon: Vec<(usize, usize)> = edges.iter().filter(|(a, b)| !edges.contains(&(*b, *a))).copied().collect();
            horizon.sort_unstable();
            let mut kept_faces = Vec::with_capacity(faces.len());
            let mut kept_planes = Vec::with_capacity(faces.len());
            for ((f, pl), vis) in faces.into_iter().zip(planes).zip(visible) {
                if !vis {
                    kept_faces.push(f);
                    kept_planes.push(pl);
                }
            }
            for (a, b) in horizon {
                kept_faces.push([a, b, pi]);
                kept_planes.push(Plane::through(points[a], points[b], p));
            }
            faces = kept_faces;
            planes = kept_planes;
        }
        Ok(Self { points: points.to_vec(), shape: Shape::Solid { faces, planes } })
    }

    pub fn is_planar(&self) -> bool {
        matches!(self.shape, Shape::Flat { .. })
    }

    pub fn num_faces(&self) -> usize {
        match &self.shape {
            Shape::Solid { faces, .. } => faces.len(),
            Shape::Flat { polygon, .. } => polygon.len(),
        }
    }

    /// Largest signed distance of `p` past a supporting plane (or, for a
    /// planar hull, past an edge or off the plane); negative inside.
    pub fn outside_distance(&self, p: [f64; 3]) -> f64 {
        match &self.shape {
            Shape::Solid { planes, .. } => planes.iter().map(|pl| pl.distance(p)).fold(f64::NEG_INFINITY, f64::max),
            Shape::Flat { plane, origin, u, v, polygon } => {
                let w = sub(p, *origin);
                let q = [dot3(w, *u), dot3(w, *v)];
                let mut d = f64::NEG_INFINITY;
                for i in 0..polygon.len() {
                    let (a, b) = (polygon[i], polygon[(i + 1) % polygon.len()]);
                    let e = [b[0] - a[0], b[1] - a[1]];
                    let l = e[0].hypot(e[1]);
                    // outward normal of a counter-clockwise polygon
                    d = d.max(((q[0] - a[0]) * e[1] - (q[1] - a[1]) * e[0]) / l);
                }
                d.max(plane.distance(p).abs())
            }
        }
    }
}

fn argmax(points: &[[f64; 3]], f: impl Fn([f64; 3]) -> f64) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, p) in points.iter().enumerate() {
        let v = f(*p);
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn flat(points: &[[f64; 3]], plane: Plane, origin: [f64; 3], u: [f64; 3]) -> Shape {
    let v = cross(plane.normal, u);
    let mut pts: Vec<[f64; 2]> = points
        .iter()
        .map(|p| {
            let w = sub(*p, origin);
            [dot3(w, u), dot3(w, v)]
        })
        .collect();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    pts.dedup();
    let turn = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 { Box::new(pts.iter()) } else { Box::new(pts.iter().rev()) };
        for &p in iter {
            while hull.len() >= start + 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    Shape::Flat { plane, origin, u, v, polygon: hull }
}
