//! Interface extraction and cut-cell decomposition.
//!
//! From a nodal level set on the refined mesh this module extracts the
//! piecewise-linear interface (one segment per sign-changing refined
//! triangle), sub-triangulates the bulk side Ω₁ of every cut element,
//! classifies coarse background elements and builds the per-slab active
//! element and stabilization face sets.

use std::collections::HashMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::levelset::LevelSetField;
use crate::mesh::BackgroundMesh;
use crate::quadrature::segment_rule;
use crate::vec2::Vec2;

/// Classification of a coarse background element against Ω₁ and Γ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementClass {
    /// Entirely inside the bulk phase Ω₁.
    Interior,
    /// No part inside Ω₁.
    Exterior,
    /// Crossed by the interface.
    Cut,
}

/// One linear interface segment inside a refined triangle.
#[derive(Clone, Copy, Debug)]
pub struct InterfaceSegment {
    pub a: Vec2,
    pub b: Vec2,
    /// Unit normal, oriented out of Ω₁ (toward the drop).
    pub normal: Vec2,
    pub coarse_tri: usize,
    pub refined_tri: usize,
    /// Refined-mesh edges carrying the endpoints, used for chaining.
    pub edge_a: usize,
    pub edge_b: usize,
}

impl InterfaceSegment {
    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }
}

/// Sub-triangle of a cut or interior cell, with positive area.
#[derive(Clone, Copy, Debug)]
pub struct SubCell {
    pub v: [Vec2; 3],
    pub area: f64,
}

/// Complete per-instant cut geometry.
pub struct CutGeometry {
    pub time: f64,
    pub segments: Vec<InterfaceSegment>,
    /// Sub-triangles covering K ∩ Ω₁ for every coarse element K.
    pub bulk_cells: Vec<Vec<SubCell>>,
    pub classification: Vec<ElementClass>,
    /// Area of the complement Ω₂, summed from its own sub-triangulation
    /// (independent of `bulk_cells`, which makes the partition identity a
    /// real check).
    pub exterior_area: f64,
}

fn subcell(v: [Vec2; 3]) -> SubCell {
    let area = 0.5 * (v[1] - v[0]).cross(v[2] - v[0]).abs();
    SubCell { v, area }
}

/// Splits a convex quad given in cyclic order along its shorter diagonal.
fn split_quad(q: [Vec2; 4]) -> [SubCell; 2] {
    if (q[0] - q[2]).norm_squared() <= (q[1] - q[3]).norm_squared() {
        [subcell([q[0], q[1], q[2]]), subcell([q[0], q[2], q[3]])]
    } else {
        [subcell([q[1], q[2], q[3]]), subcell([q[1], q[3], q[0]])]
    }
}

impl CutGeometry {
    /// Builds the cut geometry for the zero set of `levelset`. The level set
    /// lives on `coarse` itself or on its uniform refinement.
    pub fn build(levelset: &LevelSetField, coarse: &BackgroundMesh) -> Result<CutGeometry> {
        let fine = &levelset.mesh;
        if let Some(parent) = &fine.parent {
            if parent.iter().copied().max().unwrap_or(0) >= coarse.n_triangles() {
                return Err(Error::InvalidInput(
                    "refined mesh does not belong to the given coarse mesh".into(),
                ));
            }
        } else if fine.n_triangles() != coarse.n_triangles() {
            return Err(Error::InvalidInput(
                "level-set mesh is unrelated to the coarse mesh".into(),
            ));
        }
        let parents = fine.parent.as_deref();
        let parent_of = |t: usize| parents.map_or(t, |p| p[t]);

        // Zero-node policy: nudge near-zero nodal values to the bulk side so
        // no interface vertex coincides with a mesh vertex.
        let eps = 1e-12 * fine.h;
        let vals: Vec<f64> = levelset
            .values
            .iter()
            .map(|&v| if v.abs() < eps { eps } else { v })
            .collect();

        let n_coarse = coarse.n_triangles();
        let mut segments = Vec::new();
        let mut bulk_cells = vec![Vec::new(); n_coarse];
        let mut exterior_area = 0.0;
        let mut has_cut = vec![false; n_coarse];
        let mut has_bulk = vec![false; n_coarse];
        let mut has_exterior = vec![false; n_coarse];

        for (t, tri) in fine.triangles.iter().enumerate() {
            let parent = parent_of(t);
            let p = fine.tri_vertices(t);
            let v = [vals[tri[0]], vals[tri[1]], vals[tri[2]]];
            let pos = [v[0] > 0.0, v[1] > 0.0, v[2] > 0.0];
            let n_pos = pos.iter().filter(|&&b| b).count();

            if n_pos == 3 {
                bulk_cells[parent].push(subcell(p));
                has_bulk[parent] = true;
                continue;
            }
            if n_pos == 0 {
                exterior_area += fine.tri_area(t);
                has_exterior[parent] = true;
                continue;
            }

            // one vertex is alone on its side of the interface
            let lone = if n_pos == 1 {
                pos.iter().position(|&b| b).unwrap()
            } else {
                pos.iter().position(|&b| !b).unwrap()
            };
            let (i_p, i_q) = ((lone + 1) % 3, (lone + 2) % 3);
            let cut = |i: usize, j: usize| {
                let s = v[i] / (v[i] - v[j]);
                p[i] + (p[j] - p[i]) * s
            };
            let x_lp = cut(lone, i_p);
            let x_lq = cut(lone, i_q);
            let local_edge = |i: usize, j: usize| {
                let slot = match (i, j) {
                    (0, 1) | (1, 0) => 0,
                    (1, 2) | (2, 1) => 1,
                    _ => 2,
                };
                fine.tri_edges[t][slot]
            };

            let basis = fine.basis(t);
            let grad = basis.grads[0] * v[0] + basis.grads[1] * v[1] + basis.grads[2] * v[2];
            segments.push(InterfaceSegment {
                a: x_lp,
                b: x_lq,
                normal: -grad.normalized(),
                coarse_tri: parent,
                refined_tri: t,
                edge_a: local_edge(lone, i_p),
                edge_b: local_edge(lone, i_q),
            });
            has_cut[parent] = true;

            let lone_tri = subcell([p[lone], x_lp, x_lq]);
            let quad = split_quad([x_lp, p[i_p], p[i_q], x_lq]);
            if pos[lone] {
                bulk_cells[parent].push(lone_tri);
                exterior_area += quad[0].area + quad[1].area;
                has_exterior[parent] = true;
            } else {
                bulk_cells[parent].push(quad[0]);
                bulk_cells[parent].push(quad[1]);
                exterior_area += lone_tri.area;
            }
            has_bulk[parent] = true;
        }

        let classification = (0..n_coarse)
            .map(|e| {
                if has_cut[e] {
                    ElementClass::Cut
                } else if has_bulk[e] {
                    debug_assert!(!has_exterior[e]);
                    ElementClass::Interior
                } else {
                    ElementClass::Exterior
                }
            })
            .collect();

        Ok(CutGeometry { time: levelset.time, segments, bulk_cells, classification, exterior_area })
    }

    /// Total area of the discrete bulk domain Ω₁.
    pub fn bulk_area(&self) -> f64 {
        self.bulk_cells
            .iter()
            .map(|cells| cells.iter().map(|c| c.area).sum::<f64>())
            .sum()
    }

    /// Total length of the discrete interface.
    pub fn interface_length(&self) -> f64 {
        self.segments.iter().map(|s| s.length()).sum()
    }

    /// Area enclosed by the interface polylines (shoelace over the chained
    /// loops). Errors if the segments do not close up.
    pub fn enclosed_area(&self) -> Result<f64> {
        if self.segments.is_empty() {
            return Ok(0.0);
        }
        let mut on_edge: HashMap<usize, Vec<(usize, bool)>> = HashMap::new();
        for (i, s) in self.segments.iter().enumerate() {
            on_edge.entry(s.edge_a).or_default().push((i, false));
            on_edge.entry(s.edge_b).or_default().push((i, true));
        }
        for (edge, touch) in &on_edge {
            if touch.len() != 2 {
                return Err(Error::Geometry(format!(
                    "open interface polyline: edge {edge} touched by {} segment(s)",
                    touch.len()
                )));
            }
        }
        let mut visited = vec![false; self.segments.len()];
        let mut total = 0.0;
        for start in 0..self.segments.len() {
            if visited[start] {
                continue;
            }
            let mut area2 = 0.0;
            let mut seg = start;
            let mut leave_by_b = true;
            loop {
                visited[seg] = true;
                let s = &self.segments[seg];
                let (from, to, exit_edge) = if leave_by_b {
                    (s.a, s.b, s.edge_b)
                } else {
                    (s.b, s.a, s.edge_a)
                };
                area2 += from.cross(to);
                let pair = &on_edge[&exit_edge];
                let (next, next_entered_by_b) = if pair[0].0 == seg { pair[1] } else { pair[0] };
                if next == start {
                    break;
                }
                if visited[next] {
                    return Err(Error::Geometry("interface polyline is tangled".into()));
                }
                seg = next;
                // continue out through the segment's other endpoint
                leave_by_b = !next_entered_by_b;
            }
            total += 0.5 * area2.abs();
        }
        Ok(total)
    }

    /// Max distance of interface quadrature points to the exact interface
    /// and max angle (radians) between discrete and exact normals.
    pub fn interface_fit(
        &self,
        exact_distance: impl Fn(Vec2) -> f64,
        exact_normal: impl Fn(Vec2) -> Vec2,
    ) -> (f64, f64) {
        let mut d = 0.0f64;
        let mut ang = 0.0f64;
        for s in &self.segments {
            for (x, _) in segment_rule(s.a, s.b) {
                d = d.max(exact_distance(x).abs());
                let dot = s.normal.dot(exact_normal(x)).clamp(-1.0, 1.0);
                ang = ang.max(dot.acos());
            }
        }
        (d, ang)
    }

    /// One CSV record per segment: `t,x0,y0,x1,y1,nx,ny`.
    pub fn write_interface_csv(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(out, "t,x0,y0,x1,y1,nx,ny")?;
        for s in &self.segments {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                self.time, s.a.x, s.a.y, s.b.x, s.b.y, s.normal.x, s.normal.y
            )?;
        }
        Ok(())
    }
}

/// Active element and stabilization face sets of one space-time slab,
/// unioned over the geometries at its time-quadrature points.
pub struct SlabSets {
    pub active_bulk: Vec<bool>,
    pub active_surface: Vec<bool>,
    /// Coarse-mesh edges interior to the bulk patch that touch a
    /// surface-patch element.
    pub faces_bulk: Vec<usize>,
    /// Coarse-mesh edges interior to the surface patch.
    pub faces_surface: Vec<usize>,
    pub quadrature_times: Vec<f64>,
}

impl SlabSets {
    pub fn bulk_elements(&self) -> impl Iterator<Item = usize> + '_ {
        self.active_bulk.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }

    pub fn surface_elements(&self) -> impl Iterator<Item = usize> + '_ {
        self.active_surface.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }
}

/// Unions per-time classifications into slab-level active sets and derives
/// the ghost-penalty face sets.
pub fn build_slab_sets(geoms: &[&CutGeometry], mesh: &BackgroundMesh) -> Result<SlabSets> {
    if geoms.is_empty() {
        return Err(Error::InvalidInput("no geometries for slab set union".into()));
    }
    let n = mesh.n_triangles();
    let mut active_bulk = vec![false; n];
    let mut active_surface = vec![false; n];
    for g in geoms {
        if g.classification.len() != n {
            return Err(Error::InvalidInput("geometry/mesh element count mismatch".into()));
        }
        for (e, class) in g.classification.iter().enumerate() {
            match class {
                ElementClass::Cut => {
                    active_surface[e] = true;
                    active_bulk[e] = true;
                }
                ElementClass::Interior => active_bulk[e] = true,
                ElementClass::Exterior => {}
            }
        }
    }
    if !active_surface.iter().any(|&b| b) {
        return Err(Error::Geometry(
            "no element intersects the interface (interface left the domain)".into(),
        ));
    }
    for e in 0..n {
        assert!(!active_surface[e] || active_bulk[e], "surface patch must sit inside bulk patch");
    }

    let mut faces_bulk = Vec::new();
    let mut faces_surface = Vec::new();
    for (eid, edge) in mesh.edges.iter().enumerate() {
        let (t1, t2) = match edge.tris {
            [Some(a), Some(b)] => (a, b),
            _ => continue,
        };
        if active_surface[t1] && active_surface[t2] {
            faces_surface.push(eid);
        }
        if active_bulk[t1] && active_bulk[t2] && (active_surface[t1] || active_surface[t2]) {
            faces_bulk.push(eid);
        }
    }

    Ok(SlabSets {
        active_bulk,
        active_surface,
        faces_bulk,
        faces_surface,
        quadrature_times: geoms.iter().map(|g| g.time).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{DiagonalRule, Rect};
    use rand::Rng;
    use rand::SeedableRng;
    use std::sync::Arc;

    fn unit_mesh(n: usize) -> Arc<BackgroundMesh> {
        Arc::new(
            BackgroundMesh::uniform(Rect::new(0.0, 1.0, 0.0, 1.0), n, n, DiagonalRule::Uniform)
                .unwrap(),
        )
    }

    fn refined(m: &BackgroundMesh) -> Arc<BackgroundMesh> {
        Arc::new(m.refine_uniform().unwrap())
    }

    fn circle_geometry(n: usize, center: Vec2, r: f64) -> (Arc<BackgroundMesh>, CutGeometry) {
        let coarse = unit_mesh(n);
        let fine = refined(&coarse);
        let ls = LevelSetField::circle(fine, center, r, 0.0).unwrap();
        let geom = CutGeometry::build(&ls, &coarse).unwrap();
        (coarse, geom)
    }

    #[test]
    fn single_corner_cut() {
        // 1x1 mesh: vertices (0,0) (1,0) (0,1) (1,1); negative only at (0,0)
        let mesh = unit_mesh(1);
        let ls = LevelSetField::new(mesh.clone(), vec![-1.0, 1.0, 1.0, 1.0], 0.0).unwrap();
        let geom = CutGeometry::build(&ls, &mesh).unwrap();
        // both triangles touch vertex 0, each carries one segment
        assert_eq!(geom.segments.len(), 2);
        for s in &geom.segments {
            assert!((s.normal.norm() - 1.0).abs() < 1e-12);
            let along = (s.b - s.a).normalized();
            assert!(s.normal.dot(along).abs() < 1e-12, "normal must be orthogonal");
        }
        // the negative corner region is one midpoint triangle per mesh
        // triangle, 1/8 each
        assert!((geom.exterior_area - 0.25).abs() < 1e-12);
        assert!((geom.bulk_area() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn quad_side_area_of_reference_triangle() {
        // values (-1,1,1) at (0,0),(1,0),(0,1): bulk side is a quad of area
        // 1/2 - 1/8 = 3/8
        let a = Vec2::new(0.0, 0.0);
        let b = Vec2::new(1.0, 0.0);
        let c = Vec2::new(0.0, 1.0);
        let quad = split_quad([(a + b) * 0.5, b, c, (a + c) * 0.5]);
        let area = quad[0].area + quad[1].area;
        assert!((area - 0.375).abs() < 1e-15);
    }

    #[test]
    fn no_sign_change_gives_empty_interface() {
        let coarse = unit_mesh(4);
        let fine = refined(&coarse);
        let vals = vec![1.0; fine.n_vertices()];
        let ls = LevelSetField::new(fine, vals, 0.0).unwrap();
        let geom = CutGeometry::build(&ls, &coarse).unwrap();
        assert!(geom.segments.is_empty());
        assert!((geom.bulk_area() - 1.0).abs() < 1e-12);
        assert!(geom.classification.iter().all(|&c| c == ElementClass::Interior));
    }

    #[test]
    fn circle_perimeter_and_area() {
        let r = 0.17;
        let (_, geom) = circle_geometry(40, Vec2::new(0.5, 0.22), r);
        let exact_len = 2.0 * std::f64::consts::PI * r;
        assert!(
            (geom.interface_length() - exact_len).abs() <= 2e-3,
            "perimeter {} vs {exact_len}",
            geom.interface_length()
        );
        let exact_bulk = 1.0 - std::f64::consts::PI * r * r;
        assert!(
            (geom.bulk_area() - exact_bulk).abs() <= 5e-4,
            "bulk area {} vs {exact_bulk}",
            geom.bulk_area()
        );
        let shoelace = geom.enclosed_area().unwrap();
        assert!((shoelace - std::f64::consts::PI * r * r).abs() <= 5e-4);
        // chained shoelace and the complement sub-triangulation agree tightly
        assert!((shoelace - geom.exterior_area).abs() < 1e-12);
    }

    #[test]
    fn perimeter_and_area_converge_at_second_order() {
        let r = 0.31;
        let c = Vec2::new(0.51, 0.49);
        let mut errs_len = Vec::new();
        let mut errs_area = Vec::new();
        for n in [10, 20, 40, 80] {
            let (_, geom) = circle_geometry(n, c, r);
            errs_len.push((geom.interface_length() - 2.0 * std::f64::consts::PI * r).abs());
            errs_area.push((geom.exterior_area - std::f64::consts::PI * r * r).abs());
        }
        let slope = |e: &[f64]| (e[0] / e[e.len() - 1]).ln() / ((e.len() - 1) as f64 * 2f64.ln());
        let s_len = slope(&errs_len);
        let s_area = slope(&errs_area);
        assert!((1.8..=2.2).contains(&s_len), "perimeter order {s_len}: {errs_len:?}");
        assert!((1.8..=2.2).contains(&s_area), "area order {s_area}: {errs_area:?}");
    }

    #[test]
    fn partition_of_areas_for_random_circles() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
        let coarse = unit_mesh(16);
        let fine = refined(&coarse);
        for _ in 0..100 {
            let c = Vec2::new(rng.gen_range(0.3..0.7), rng.gen_range(0.3..0.7));
            let r = rng.gen_range(0.1..0.25);
            let ls = LevelSetField::circle(fine.clone(), c, r, 0.0).unwrap();
            let geom = CutGeometry::build(&ls, &coarse).unwrap();
            let total = geom.bulk_area() + geom.exterior_area;
            assert!((total - 1.0).abs() < 1e-10, "partition violated: {total}");
        }
    }

    #[test]
    fn segment_endpoints_sit_on_the_zero_set() {
        let coarse = unit_mesh(20);
        let fine = refined(&coarse);
        let ls = LevelSetField::circle(fine.clone(), Vec2::new(0.48, 0.52), 0.23, 0.0).unwrap();
        let geom = CutGeometry::build(&ls, &coarse).unwrap();
        for s in &geom.segments {
            for p in [s.a, s.b] {
                let v = ls.value_at(p).unwrap();
                assert!(v.abs() <= 1e-10 * fine.h, "rho at endpoint = {v:.3e}");
            }
        }
    }

    #[test]
    fn normals_point_out_of_the_bulk_phase() {
        let coarse = unit_mesh(20);
        let fine = refined(&coarse);
        let ls = LevelSetField::circle(fine.clone(), Vec2::new(0.5, 0.5), 0.27, 0.0).unwrap();
        let geom = CutGeometry::build(&ls, &coarse).unwrap();
        let eps = 1e-3 * fine.h;
        for s in &geom.segments {
            let mid = (s.a + s.b) * 0.5;
            let base = ls.value_at(mid).unwrap();
            let moved = ls.value_at(mid + s.normal * eps).unwrap();
            assert!(moved < base, "displacing along the normal must decrease rho");
        }
    }

    #[test]
    fn classification_of_contained_interface() {
        // an interface loop around a single refined vertex interior to the
        // closure of one coarse element cuts exactly that element
        let coarse = unit_mesh(2);
        let fine = refined(&coarse);
        let lone = fine
            .vertices
            .iter()
            .position(|&v| (v - Vec2::new(0.25, 0.0)).norm() < 1e-12)
            .unwrap();
        let mut vals = vec![1.0; fine.n_vertices()];
        vals[lone] = -1.0;
        let ls = LevelSetField::new(fine, vals, 0.0).unwrap();
        let geom = CutGeometry::build(&ls, &coarse).unwrap();
        let cut: Vec<usize> = geom
            .classification
            .iter()
            .enumerate()
            .filter(|(_, &cl)| cl == ElementClass::Cut)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(cut, vec![0]);
    }

    #[test]
    fn cut_elements_surround_the_interface() {
        let (coarse, geom) = circle_geometry(10, Vec2::new(0.5, 0.22), 0.17);
        let cut: Vec<usize> = geom
            .classification
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == ElementClass::Cut)
            .map(|(i, _)| i)
            .collect();
        assert!(cut.len() >= 8, "cut elements: {}", cut.len());
        for e in cut {
            let c = (coarse.tri_vertices(e)[0] + coarse.tri_vertices(e)[1]
                + coarse.tri_vertices(e)[2])
                / 3.0;
            assert!((c - Vec2::new(0.5, 0.22)).norm() <= 0.17 + 2.0 * coarse.h);
        }
    }

    #[test]
    fn slab_sets_single_time_equal_classification() {
        let (coarse, geom) = circle_geometry(20, Vec2::new(0.5, 0.5), 0.2);
        let sets = build_slab_sets(&[&geom], &coarse).unwrap();
        for (e, &class) in geom.classification.iter().enumerate() {
            assert_eq!(sets.active_surface[e], class == ElementClass::Cut);
            assert_eq!(sets.active_bulk[e], class != ElementClass::Exterior);
        }
    }

    #[test]
    fn union_of_translated_interfaces_is_larger() {
        let coarse = unit_mesh(20);
        let fine = refined(&coarse);
        let ls0 = LevelSetField::circle(fine.clone(), Vec2::new(0.35, 0.5), 0.15, 0.0).unwrap();
        let ls1 = LevelSetField::circle(fine.clone(), Vec2::new(0.55, 0.5), 0.15, 0.1).unwrap();
        let g0 = CutGeometry::build(&ls0, &coarse).unwrap();
        let g1 = CutGeometry::build(&ls1, &coarse).unwrap();
        let s0 = build_slab_sets(&[&g0], &coarse).unwrap();
        let s1 = build_slab_sets(&[&g1], &coarse).unwrap();
        let both = build_slab_sets(&[&g0, &g1], &coarse).unwrap();
        let count = |v: &[bool]| v.iter().filter(|&&b| b).count();
        assert!(count(&both.active_surface) > count(&s0.active_surface));
        assert!(count(&both.active_surface) > count(&s1.active_surface));
        assert_eq!(both.quadrature_times, vec![0.0, 0.1]);
    }

    #[test]
    fn face_sets_match_brute_force_adjacency() {
        let (coarse, geom) = circle_geometry(20, Vec2::new(0.45, 0.55), 0.22);
        let sets = build_slab_sets(&[&geom], &coarse).unwrap();
        let mut expect_surface = Vec::new();
        let mut expect_bulk = Vec::new();
        for (eid, edge) in coarse.edges.iter().enumerate() {
            if let [Some(a), Some(b)] = edge.tris {
                if sets.active_surface[a] && sets.active_surface[b] {
                    expect_surface.push(eid);
                }
                if sets.active_bulk[a]
                    && sets.active_bulk[b]
                    && (sets.active_surface[a] || sets.active_surface[b])
                {
                    expect_bulk.push(eid);
                }
            }
        }
        assert_eq!(sets.faces_surface, expect_surface);
        assert_eq!(sets.faces_bulk, expect_bulk);
        assert!(sets.faces_bulk.len() > sets.faces_surface.len());
    }

    #[test]
    fn empty_surface_union_is_an_error() {
        let coarse = unit_mesh(4);
        let fine = refined(&coarse);
        let vals = vec![0.5; fine.n_vertices()];
        let ls = LevelSetField::new(fine, vals, 0.0).unwrap();
        let geom = CutGeometry::build(&ls, &coarse).unwrap();
        assert!(build_slab_sets(&[&geom], &coarse).is_err());
    }

    #[test]
    fn interface_fit_of_discrete_circles() {
        // geometric assumptions: distance O(h^2), normal deviation O(h)
        let c = Vec2::new(0.5, 0.5);
        let r = 0.3;
        let mut prev: Option<(f64, f64)> = None;
        for n in [10, 20, 40] {
            let (_, geom) = circle_geometry(n, c, r);
            let (d, a) =
                geom.interface_fit(|p| (p - c).norm() - r, |p| -(p - c).normalized());
            let h = 1.0 / n as f64;
            assert!(d <= 1.5 * h * h, "distance {d} vs h^2 = {}", h * h);
            assert!(a <= 2.0 * h, "normal angle {a} vs h = {h}");
            if let Some((dp, ap)) = prev {
                assert!(d < dp && a < ap, "fit must improve under refinement");
            }
            prev = Some((d, a));
        }
    }

    #[test]
    fn perturbation_policy_handles_exact_zero_nodes() {
        // interface running exactly through mesh vertices
        let coarse = unit_mesh(4);
        let fine = refined(&coarse);
        let vals: Vec<f64> = fine.vertices.iter().map(|v| v.y - 0.5).collect();
        let ls = LevelSetField::new(fine, vals, 0.0).unwrap();
        let geom = CutGeometry::build(&ls, &coarse).unwrap();
        assert!(!geom.segments.is_empty());
        for s in &geom.segments {
            assert!((s.a.y - 0.5).abs() < 1e-10 && (s.b.y - 0.5).abs() < 1e-10);
        }
        let total = geom.bulk_area() + geom.exterior_area;
        assert!((total - 1.0).abs() < 1e-10);
    }
}
