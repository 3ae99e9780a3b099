//! Fixed background triangulation of a rectangular domain.
//!
//! The solver never remeshes: all fields live on one quasiuniform
//! triangulation (and its uniform refinement, which carries the level set).
//! Meshes are immutable after construction and safe to share across workers.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::vec2::Vec2;

/// Orientation of the cell diagonals in the structured mesh.
///
/// The convergence orders are insensitive to this choice; `Uniform` is the
/// default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DiagonalRule {
    /// Every cell split along the lower-left to upper-right diagonal.
    #[default]
    Uniform,
    /// Diagonal direction flips with the parity of the cell index.
    Alternating,
}

/// Axis-aligned rectangle [x0, x1] × [y0, y1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Rect { x0, x1, y0, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Vec2, tol: f64) -> bool {
        p.x >= self.x0 - tol && p.x <= self.x1 + tol && p.y >= self.y0 - tol && p.y <= self.y1 + tol
    }
}

/// Mesh edge with its one or two adjacent triangles.
#[derive(Clone, Copy, Debug)]
pub struct Edge {
    /// Endpoint vertex indices, smaller first.
    pub vertices: (usize, usize),
    /// Adjacent triangle indices; `tris[1]` is `None` on the boundary.
    pub tris: [Option<usize>; 2],
}

impl Edge {
    pub fn is_interior(&self) -> bool {
        self.tris[1].is_some()
    }
}

/// Per-triangle P1 basis data: constant shape-function gradients and area.
///
/// Barycentric value of shape i at p is `1 + grads[i] · (p - vertex_i)`.
#[derive(Clone, Copy, Debug)]
pub struct TriBasis {
    pub grads: [Vec2; 3],
    pub area: f64,
}

/// Fixed conforming triangulation of a rectangle with P1 basis data.
#[derive(Debug)]
pub struct BackgroundMesh {
    pub vertices: Vec<Vec2>,
    /// Vertex index triples, counter-clockwise.
    pub triangles: Vec<[usize; 3]>,
    pub edges: Vec<Edge>,
    /// Edge indices of each triangle (opposite orderings not tracked).
    pub tri_edges: Vec<[usize; 3]>,
    pub domain_box: Rect,
    /// Characteristic edge length: the larger of the two axis spacings.
    pub h: f64,
    /// Child → parent triangle map for refined meshes.
    pub parent: Option<Vec<usize>>,
    basis: Vec<TriBasis>,
    buckets: Buckets,
}

#[derive(Debug)]
struct Buckets {
    nx: usize,
    ny: usize,
    cells: Vec<Vec<u32>>,
}

impl BackgroundMesh {
    /// Structured triangulation of `nx` × `ny` cells, two triangles each.
    pub fn uniform(box_: Rect, nx: usize, ny: usize, rule: DiagonalRule) -> Result<Self> {
        if nx < 1 || ny < 1 {
            return Err(Error::InvalidInput(format!(
                "mesh needs at least one cell per direction, got {nx} x {ny}"
            )));
        }
        if !(box_.width() > 0.0 && box_.height() > 0.0) || !box_.area().is_finite() {
            return Err(Error::InvalidInput(format!("degenerate domain box {box_:?}")));
        }

        let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
        for j in 0..=ny {
            for i in 0..=nx {
                // Direct formula per index avoids cumulative drift.
                let x = box_.x0 + i as f64 * box_.width() / nx as f64;
                let y = box_.y0 + j as f64 * box_.height() / ny as f64;
                vertices.push(Vec2::new(x, y));
            }
        }

        let vid = |i: usize, j: usize| j * (nx + 1) + i;
        let mut triangles = Vec::with_capacity(2 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let (v00, v10) = (vid(i, j), vid(i + 1, j));
                let (v01, v11) = (vid(i, j + 1), vid(i + 1, j + 1));
                let main_diag = match rule {
                    DiagonalRule::Uniform => true,
                    DiagonalRule::Alternating => (i + j) % 2 == 0,
                };
                if main_diag {
                    triangles.push([v00, v10, v11]);
                    triangles.push([v00, v11, v01]);
                } else {
                    triangles.push([v00, v10, v01]);
                    triangles.push([v10, v11, v01]);
                }
            }
        }

        let h = (box_.width() / nx as f64).max(box_.height() / ny as f64);
        Self::assemble(vertices, triangles, box_, h, None)
    }

    /// Splits every triangle into four through the edge midpoints.
    pub fn refine_uniform(&self) -> Result<BackgroundMesh> {
        let mut vertices = self.vertices.clone();
        let mut edge_mid = vec![0usize; self.edges.len()];
        for (e, edge) in self.edges.iter().enumerate() {
            let (a, b) = edge.vertices;
            edge_mid[e] = vertices.len();
            vertices.push((self.vertices[a] + self.vertices[b]) * 0.5);
        }

        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        let mut parent = Vec::with_capacity(4 * self.triangles.len());
        for (t, tri) in self.triangles.iter().enumerate() {
            let [a, b, c] = *tri;
            let [eab, ebc, eca] = self.tri_edges[t];
            let (mab, mbc, mca) = (edge_mid[eab], edge_mid[ebc], edge_mid[eca]);
            triangles.push([a, mab, mca]);
            triangles.push([mab, b, mbc]);
            triangles.push([mca, mbc, c]);
            triangles.push([mab, mbc, mca]);
            parent.extend_from_slice(&[t, t, t, t]);
        }

        Self::assemble(vertices, triangles, self.domain_box, self.h / 2.0, Some(parent))
    }

    fn assemble(
        vertices: Vec<Vec2>,
        triangles: Vec<[usize; 3]>,
        box_: Rect,
        h: f64,
        parent: Option<Vec<usize>>,
    ) -> Result<Self> {
        let mut basis = Vec::with_capacity(triangles.len());
        for tri in &triangles {
            let [a, b, c] = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
            let area2 = (b - a).cross(c - a);
            if area2 <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "triangle {tri:?} is degenerate or clockwise"
                )));
            }
            let grads = [
                Vec2::new(b.y - c.y, c.x - b.x) / area2,
                Vec2::new(c.y - a.y, a.x - c.x) / area2,
                Vec2::new(a.y - b.y, b.x - a.x) / area2,
            ];
            basis.push(TriBasis { grads, area: 0.5 * area2 });
        }

        let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges: Vec<Edge> = Vec::new();
        let mut tri_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut ids = [0usize; 3];
            for (slot, (a, b)) in [(tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])]
                .into_iter()
                .enumerate()
            {
                let key = (a.min(b), a.max(b));
                let id = *edge_map.entry(key).or_insert_with(|| {
                    edges.push(Edge { vertices: key, tris: [None, None] });
                    edges.len() - 1
                });
                let e = &mut edges[id];
                if e.tris[0].is_none() {
                    e.tris[0] = Some(t);
                } else if e.tris[1].is_none() {
                    e.tris[1] = Some(t);
                } else {
                    return Err(Error::InvalidInput(format!(
                        "edge {key:?} shared by more than two triangles"
                    )));
                }
                ids[slot] = id;
            }
            tri_edges.push(ids);
        }

        let buckets = Buckets::build(&vertices, &triangles, box_);
        Ok(BackgroundMesh {
            vertices,
            triangles,
            edges,
            tri_edges,
            domain_box: box_,
            h,
            parent,
            basis,
            buckets,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn basis(&self, tri: usize) -> &TriBasis {
        &self.basis[tri]
    }

    pub fn tri_vertices(&self, tri: usize) -> [Vec2; 3] {
        let [a, b, c] = self.triangles[tri];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn tri_area(&self, tri: usize) -> f64 {
        self.basis[tri].area
    }

    pub fn total_area(&self) -> f64 {
        self.basis.iter().map(|b| b.area).sum()
    }

    /// Barycentric coordinates of `p` in triangle `tri`.
    pub fn barycentric(&self, tri: usize, p: Vec2) -> [f64; 3] {
        let verts = self.triangles[tri];
        let b = &self.basis[tri];
        let mut lam = [0.0; 3];
        for i in 0..3 {
            lam[i] = 1.0 + b.grads[i].dot(p - self.vertices[verts[i]]);
        }
        lam
    }

    /// Finds the triangle containing `p` together with its barycentric
    /// coordinates. Points within 1e-12·h of the domain box are accepted.
    pub fn locate_point(&self, p: Vec2) -> Result<(usize, [f64; 3])> {
        let tol = 1e-12 * self.h;
        if !self.domain_box.contains(p, tol) {
            return Err(Error::OutOfDomain(p.x, p.y));
        }
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in self.buckets.candidates(p, self.domain_box) {
            let lam = self.barycentric(t as usize, p);
            let min = lam[0].min(lam[1]).min(lam[2]);
            if best.is_none_or(|(_, _, m)| min > m) {
                best = Some((t as usize, lam, min));
            }
            if min >= 0.0 {
                break;
            }
        }
        match best {
            Some((t, lam, min)) if min >= -1e-10 => Ok((t, lam)),
            _ => Err(Error::OutOfDomain(p.x, p.y)),
        }
    }

    /// P1 interpolation of a nodal field at `p`.
    pub fn interpolate(&self, nodal: &[f64], p: Vec2) -> Result<f64> {
        let (t, lam) = self.locate_point(p)?;
        let verts = self.triangles[t];
        Ok((0..3).map(|i| lam[i] * nodal[verts[i]]).sum())
    }

    /// Plain-text dump of vertices and triangles, one record per line.
    pub fn dump(&self, out: &mut dyn Write) -> std::io::Result<()> {
        for (i, v) in self.vertices.iter().enumerate() {
            writeln!(out, "v {} {} {}", i, v.x, v.y)?;
        }
        for (i, t) in self.triangles.iter().enumerate() {
            writeln!(out, "t {} {} {} {}", i, t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

impl Buckets {
    fn build(vertices: &[Vec2], triangles: &[[usize; 3]], box_: Rect) -> Buckets {
        let n = triangles.len().max(1);
        let aspect = box_.width() / box_.height();
        let nx = ((n as f64 / 2.0 * aspect).sqrt().ceil() as usize).max(1);
        let ny = ((n as f64 / 2.0 / aspect).sqrt().ceil() as usize).max(1);
        let mut cells = vec![Vec::new(); nx * ny];
        let clampi = |v: f64, hi: usize| (v.floor().max(0.0) as usize).min(hi - 1);
        for (t, tri) in triangles.iter().enumerate() {
            let vs = [vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]];
            let (xmin, xmax) = vs.iter().fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v.x), hi.max(v.x)));
            let (ymin, ymax) = vs.iter().fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(v.y), hi.max(v.y)));
            let i0 = clampi((xmin - box_.x0) / box_.width() * nx as f64, nx);
            let i1 = clampi((xmax - box_.x0) / box_.width() * nx as f64, nx);
            let j0 = clampi((ymin - box_.y0) / box_.height() * ny as f64, ny);
            let j1 = clampi((ymax - box_.y0) / box_.height() * ny as f64, ny);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    cells[j * nx + i].push(t as u32);
                }
            }
        }
        Buckets { nx, ny, cells }
    }

    fn candidates(&self, p: Vec2, box_: Rect) -> &[u32] {
        let clampi = |v: f64, hi: usize| (v.floor().max(0.0) as usize).min(hi - 1);
        let i = clampi((p.x - box_.x0) / box_.width() * self.nx as f64, self.nx);
        let j = clampi((p.y - box_.y0) / box_.height() * self.ny as f64, self.ny);
        &self.cells[j * self.nx + i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn unit_square(n: usize) -> BackgroundMesh {
        BackgroundMesh::uniform(Rect::new(0.0, 1.0, 0.0, 1.0), n, n, DiagonalRule::Uniform).unwrap()
    }

    #[test]
    fn smallest_mesh() {
        let m = unit_square(1);
        assert_eq!(m.n_vertices(), 4);
        assert_eq!(m.n_triangles(), 2);
        assert!((m.total_area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn channel_mesh_size_for_insoluble_benchmark() {
        let m = BackgroundMesh::uniform(
            Rect::new(-2.0, 6.4, -2.0, 2.0),
            147,
            70,
            DiagonalRule::Uniform,
        )
        .unwrap();
        assert_eq!(m.n_vertices(), 148 * 71);
        assert!((0.05..0.07).contains(&m.h), "h = {}", m.h);
    }

    #[test]
    fn vertex_and_triangle_counts() {
        let m = unit_square(40);
        assert_eq!(m.n_triangles(), 3200);
        assert_eq!(m.n_vertices(), 1681);
        assert!((m.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_box() {
        let r = BackgroundMesh::uniform(Rect::new(0.0, 0.0, 0.0, 1.0), 2, 2, DiagonalRule::Uniform);
        assert!(r.is_err());
    }

    #[test]
    fn edge_adjacency_is_consistent() {
        for rule in [DiagonalRule::Uniform, DiagonalRule::Alternating] {
            let m = BackgroundMesh::uniform(Rect::new(0.0, 1.0, 0.0, 1.0), 5, 4, rule).unwrap();
            let n_boundary = m.edges.iter().filter(|e| !e.is_interior()).count();
            assert_eq!(n_boundary, 2 * 5 + 2 * 4);
            // Euler: V - E + F = 1 for a disk triangulation (F = triangles).
            assert_eq!(
                m.n_vertices() as i64 - m.edges.len() as i64 + m.n_triangles() as i64,
                1
            );
        }
    }

    #[test]
    fn refine_doubles_resolution() {
        let m = unit_square(1);
        let r = m.refine_uniform().unwrap();
        assert_eq!(r.n_triangles(), 8);
        assert_eq!(r.n_vertices(), 9);
        assert!((r.total_area() - m.total_area()).abs() < 1e-12);
        assert!((r.h - m.h / 2.0).abs() < 1e-15);
    }

    #[test]
    fn refine_parent_map_has_multiplicity_four() {
        let m = unit_square(4);
        let r = m.refine_uniform().unwrap();
        let mut count = vec![0usize; m.n_triangles()];
        for &p in r.parent.as_ref().unwrap() {
            count[p] += 1;
        }
        assert!(count.iter().all(|&c| c == 4));
        assert!((r.total_area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn locate_vertex_and_centroid() {
        let m = unit_square(7);
        let (t, lam) = m.locate_point(m.vertices[10]).unwrap();
        let local = m.triangles[t].iter().position(|&v| v == 10).unwrap();
        assert!((lam[local] - 1.0).abs() < 1e-12);

        let c = (m.tri_vertices(3)[0] + m.tri_vertices(3)[1] + m.tri_vertices(3)[2]) / 3.0;
        let (t, lam) = m.locate_point(c).unwrap();
        assert_eq!(t, 3);
        for l in lam {
            assert!((l - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn locate_rejects_outside_points() {
        let m = unit_square(4);
        assert!(m.locate_point(Vec2::new(1.2, 0.5)).is_err());
        assert!(m.locate_point(Vec2::new(0.5, -0.1)).is_err());
    }

    #[test]
    fn linear_reproduction_at_random_points() {
        // P1 interpolation reproduces globally linear fields exactly.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for rule in [DiagonalRule::Uniform, DiagonalRule::Alternating] {
            let m =
                BackgroundMesh::uniform(Rect::new(-1.0, 2.0, 0.5, 3.0), 13, 9, rule).unwrap();
            let f = |p: Vec2| p.x + 2.0 * p.y;
            let nodal: Vec<f64> = m.vertices.iter().map(|&v| f(v)).collect();
            for _ in 0..1000 {
                let p = Vec2::new(rng.gen_range(-1.0..2.0), rng.gen_range(0.5..3.0));
                let got = m.interpolate(&nodal, p).unwrap();
                assert!((got - f(p)).abs() < 1e-12, "at {p:?}: {got} vs {}", f(p));
            }
        }
    }

    #[test]
    fn structured_regularity() {
        let m = unit_square(12);
        let areas: Vec<f64> = (0..m.n_triangles()).map(|t| m.tri_area(t)).collect();
        let (lo, hi) = areas
            .iter()
            .fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        assert!((hi - lo).abs() < 1e-15, "congruent triangles expected");
    }

    #[test]
    fn gradients_sum_to_zero_and_partition_unity() {
        let m = unit_square(3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for t in 0..m.n_triangles() {
            let b = m.basis(t);
            let g = b.grads[0] + b.grads[1] + b.grads[2];
            assert!(g.norm() < 1e-12);
            let p = Vec2::new(rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0));
            let lam = m.barycentric(t, p);
            assert!((lam.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dump_is_line_per_record() {
        let m = unit_square(1);
        let mut buf = Vec::new();
        m.dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4 + 2);
        assert!(text.lines().next().unwrap().starts_with("v 0 "));
    }
}
