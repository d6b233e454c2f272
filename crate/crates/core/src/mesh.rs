//! Planar triangle meshes for parameter domains and graph problems.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Conforming planar triangulation, counter-clockwise triangles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TriMesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// One flag per vertex.
    pub boundary: Vec<bool>,
}

fn signed_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

impl TriMesh {
    /// Builds a mesh, orients triangles counter-clockwise and derives the
    /// boundary flags from edges used by a single triangle.
    pub fn new(vertices: Vec<[f64; 2]>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mut mesh = Self { boundary: vec![false; vertices.len()], vertices, triangles };
        for (i, t) in mesh.triangles.iter_mut().enumerate() {
            if t.iter().any(|&v| v >= mesh.vertices.len()) {
                return Err(Error::MeshDegenerate(i));
            }
            if signed_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]) < 0.0 {
                t.swap(1, 2);
            }
        }
        for (a, b) in mesh.boundary_edges() {
            mesh.boundary[a] = true;
            mesh.boundary[b] = true;
        }
        mesh.validate()?;
        Ok(mesh)
    }

    /// `[x0,x1] × [y0,y1]` split into `nx × ny` cells, each cut along a diagonal
    /// alternating in a checkerboard.
    pub fn rectangle(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 || !(x1 > x0) || !(y1 > y0) {
            return Err(Error::InvalidArgument("rectangle needs positive extent and cell counts".into()));
        }
        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([x0 + (x1 - x0) * i as f64 / nx as f64, y0 + (y1 - y0) * j as f64 / ny as f64]);
            }
        }
        let id = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                if (i + j) % 2 == 0 {
                    triangles.push([a, b, c]);
                    triangles.push([a, c, d]);
                } else {
                    triangles.push([a, b, d]);
                    triangles.push([b, c, d]);
                }
            }
        }
        Self::new(vertices, triangles)
    }

    pub fn unit_square(n: usize) -> Result<Self> {
        Self::rectangle(0.0, 1.0, 0.0, 1.0, n, n)
    }

    /// Disk from `rings` concentric rings; ring `k` carries `6k` vertices,
    /// giving `6 rings^2` triangles.
    pub fn disk(center: [f64; 2], radius: f64, rings: usize) -> Result<Self> {
        if rings == 0 || !(radius > 0.0) {
            return Err(Error::InvalidArgument("disk needs a positive radius and at least one ring".into()));
        }
        let mut vertices = vec![center];
        let mut ring_start = vec![0usize];
        for k in 1..=rings {
            ring_start.push(vertices.len());
            let r = radius * k as f64 / rings as f64;
            for j in 0..6 * k {
                let (s, c) = (2.0 * PI * j as f64 / (6 * k) as f64).sin_cos();
                vertices.push([center[0] + r * c, center[1] + r * s]);
            }
        }
        let mut triangles = Vec::with_capacity(6 * rings * rings);
        for j in 0..6 {
            triangles.push([0, 1 + j, 1 + (j + 1) % 6]);
        }
        for k in 2..=rings {
            let (ni, no) = (6 * (k - 1), 6 * k);
            let inner = |i: usize| ring_start[k - 1] + i % ni;
            let outer = |j: usize| ring_start[k] + j % no;
            let (mut i, mut j) = (0, 0);
            while i < ni || j < no {
                let next_in = (i + 1) as f64 / ni as f64;
                let next_out = (j + 1) as f64 / no as f64;
                if j < no && (i == ni || next_out <= next_in) {
                    triangles.push([inner(i), outer(j), outer(j + 1)]);
                    j += 1;
                } else {
                    triangles.push([inner(i), outer(j), inner(i + 1)]);
                    i += 1;
                }
            }
        }
        Self::new(vertices, triangles)
    }

    /// Unit-radius disk with at least `target` triangles.
    pub fn disk_with_triangles(target: usize) -> Result<Self> {
        let rings = ((target as f64 / 6.0).sqrt().ceil() as usize).max(1);
        Self::disk([0.0, 0.0], 1.0, rings)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        signed_area(self.vertices[a], self.vertices[b], self.vertices[c])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.area(t)).sum()
    }

    /// Largest edge length.
    pub fn mesh_size(&self) -> f64 {
        let mut h: f64 = 0.0;
        for t in &self.triangles {
            for e in 0..3 {
                let (p, q) = (self.vertices[t[e]], self.vertices[t[(e + 1) % 3]]);
                h = h.max((p[0] - q[0]).hypot(p[1] - q[1]));
            }
        }
        h
    }

    pub fn validate(&self) -> Result<()> {
        let scale = self.mesh_size().max(1e-300);
        for t in 0..self.num_triangles() {
            if !(self.area(t) > 1e-14 * scale * scale) {
                return Err(Error::MeshDegenerate(t));
            }
        }
        Ok(())
    }

    /// Gradients of the three P1 basis functions on triangle `t`.
    pub fn basis_gradients(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t].map(|v| self.vertices[v]);
        let two_area = 2.0 * signed_area(a, b, c);
        [
            [(b[1] - c[1]) / two_area, (c[0] - b[0]) / two_area],
            [(c[1] - a[1]) / two_area, (a[0] - c[0]) / two_area],
            [(a[1] - b[1]) / two_area, (b[0] - a[0]) / two_area],
        ]
    }

    /// Directed edges of counter-clockwise triangles that have no twin.
    pub fn boundary_edges(&self) -> Vec<(usize, usize)> {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let mut edges = Vec::new();
        for t in &self.triangles {
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                if count[&(a.min(b), a.max(b))] == 1 {
                    edges.push((a, b));
                }
            }
        }
        edges.sort_unstable();
        edges
    }

    /// Closed boundary loops, each counter-clockwise about the domain.
    pub fn boundary_loops(&self) -> Vec<Vec<usize>> {
        let edges = self.boundary_edges();
        let next: HashMap<usize, usize> = edges.iter().copied().collect();
        let mut seen = vec![false; self.num_vertices()];
        let mut loops = Vec::new();
        for &(start, _) in &edges {
            if seen[start] {
                continue;
            }
            let mut lp = vec![start];
            seen[start] = true;
            let mut v = next[&start];
            while v != start {
                seen[v] = true;
                lp.push(v);
                v = match next.get(&v) {
                    Some(&w) => w,
                    None => break,
                };
            }
            loops.push(lp);
        }
        loops
    }

    pub fn interior_vertices(&self) -> Vec<usize> {
        (0..self.num_vertices()).filter(|&v| !self.boundary[v]).collect()
    }
}
