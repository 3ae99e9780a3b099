//! Degree-of-freedom management for one space-time slab.
//!
//! Trial and test functions are P1 in space on the active patches and linear
//! in time, discontinuous across slabs: v(t,x) = v₀(x) + v₁(x)·(t−tₙ₋₁)/k.
//! The global unknown ordering is (bulk₀, surface₀, bulk₁, surface₁, λ).

use std::sync::Arc;

use crate::cutgeom::{CutGeometry, ElementClass, SlabSets};
use crate::error::{Error, Result};
use crate::mesh::BackgroundMesh;
use crate::vec2::Vec2;

/// Map between mesh vertices and dense dof indices of one field.
#[derive(Clone, Debug, Default)]
pub struct DofMap {
    vertex_to_dof: Vec<Option<u32>>,
    dof_to_vertex: Vec<usize>,
}

impl DofMap {
    /// Enumerates the vertices of the selected elements in ascending vertex
    /// order, so identical patches always produce identical maps.
    pub fn from_elements(mesh: &BackgroundMesh, elements: impl Iterator<Item = usize>) -> DofMap {
        let mut included = vec![false; mesh.n_vertices()];
        for e in elements {
            for &v in &mesh.triangles[e] {
                included[v] = true;
            }
        }
        let mut vertex_to_dof = vec![None; mesh.n_vertices()];
        let mut dof_to_vertex = Vec::new();
        for (v, &inc) in included.iter().enumerate() {
            if inc {
                vertex_to_dof[v] = Some(dof_to_vertex.len() as u32);
                dof_to_vertex.push(v);
            }
        }
        DofMap { vertex_to_dof, dof_to_vertex }
    }

    pub fn len(&self) -> usize {
        self.dof_to_vertex.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dof_to_vertex.is_empty()
    }

    pub fn dof(&self, vertex: usize) -> Option<usize> {
        self.vertex_to_dof.get(vertex).copied().flatten().map(|d| d as usize)
    }

    pub fn vertex(&self, dof: usize) -> usize {
        self.dof_to_vertex[dof]
    }

    pub fn vertices(&self) -> &[usize] {
        &self.dof_to_vertex
    }
}

/// Which of the two coupled fields a value belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Field {
    Bulk,
    Surface,
}

/// Unknown layout of one slab: restricted P1 spaces for both fields, two
/// time components each, plus an optional trailing mass multiplier.
pub struct SlabSpace {
    pub interval: (f64, f64),
    pub bulk_dofs: DofMap,
    pub surface_dofs: DofMap,
    pub active_bulk: Vec<bool>,
    pub active_surface: Vec<bool>,
    pub multiplier: bool,
}

impl SlabSpace {
    pub fn build(
        sets: &SlabSets,
        mesh: &BackgroundMesh,
        interval: (f64, f64),
        include_bulk: bool,
        multiplier: bool,
    ) -> Result<SlabSpace> {
        if !sets.active_surface.iter().any(|&b| b) {
            return Err(Error::Geometry("empty surface patch".into()));
        }
        let bulk_dofs = if include_bulk {
            DofMap::from_elements(mesh, sets.bulk_elements())
        } else {
            DofMap::default()
        };
        let surface_dofs = DofMap::from_elements(mesh, sets.surface_elements());
        Ok(SlabSpace {
            interval,
            bulk_dofs,
            surface_dofs,
            active_bulk: if include_bulk {
                sets.active_bulk.clone()
            } else {
                vec![false; mesh.n_triangles()]
            },
            active_surface: sets.active_surface.clone(),
            multiplier,
        })
    }

    pub fn step(&self) -> f64 {
        self.interval.1 - self.interval.0
    }

    pub fn n_bulk(&self) -> usize {
        self.bulk_dofs.len()
    }

    pub fn n_surface(&self) -> usize {
        self.surface_dofs.len()
    }

    /// Total number of unknowns: 2(N_B + N_S), plus one for the multiplier.
    pub fn size(&self) -> usize {
        2 * (self.n_bulk() + self.n_surface()) + usize::from(self.multiplier)
    }

    /// Index of a bulk dof, time component `comp` ∈ {0, 1}.
    pub fn bulk_index(&self, dof: usize, comp: usize) -> usize {
        comp * (self.n_bulk() + self.n_surface()) + dof
    }

    /// Index of a surface dof, time component `comp` ∈ {0, 1}.
    pub fn surface_index(&self, dof: usize, comp: usize) -> usize {
        comp * (self.n_bulk() + self.n_surface()) + self.n_bulk() + dof
    }

    pub fn multiplier_index(&self) -> Option<usize> {
        self.multiplier.then(|| 2 * (self.n_bulk() + self.n_surface()))
    }

    pub fn index(&self, field: Field, dof: usize, comp: usize) -> usize {
        match field {
            Field::Bulk => self.bulk_index(dof, comp),
            Field::Surface => self.surface_index(dof, comp),
        }
    }

    pub fn dof_map(&self, field: Field) -> &DofMap {
        match field {
            Field::Bulk => &self.bulk_dofs,
            Field::Surface => &self.surface_dofs,
        }
    }

    /// Normalized slab time s = (t − tₙ₋₁)/k ∈ [0, 1].
    pub fn normalized_time(&self, t: f64) -> f64 {
        (t - self.interval.0) / self.step()
    }

    /// Space-time evaluation of a coefficient vector at (t, p). The point
    /// must lie in an element active for the requested field.
    pub fn evaluate(
        &self,
        mesh: &BackgroundMesh,
        coeffs: &[f64],
        field: Field,
        t: f64,
        p: Vec2,
    ) -> Result<f64> {
        let (el, lam) = mesh.locate_point(p)?;
        let active = match field {
            Field::Bulk => &self.active_bulk,
            Field::Surface => &self.active_surface,
        };
        if !active.get(el).copied().unwrap_or(false) {
            return Err(Error::OutOfPatch(p.x, p.y));
        }
        let s = self.normalized_time(t);
        let map = self.dof_map(field);
        let mut value = 0.0;
        for (i, &v) in mesh.triangles[el].iter().enumerate() {
            let dof = map.dof(v).expect("active element vertex must carry a dof");
            value += lam[i]
                * (coeffs[self.index(field, dof, 0)] + s * coeffs[self.index(field, dof, 1)]);
        }
        Ok(value)
    }

    /// Nodal trace u(tₙ⁻) = u₀ + u₁ of one field.
    pub fn end_trace(&self, coeffs: &[f64], field: Field) -> Vec<f64> {
        let map = self.dof_map(field);
        (0..map.len())
            .map(|d| coeffs[self.index(field, d, 0)] + coeffs[self.index(field, d, 1)])
            .collect()
    }

    /// Nodal trace u(tₙ₋₁⁺) = u₀ of one field.
    pub fn start_trace(&self, coeffs: &[f64], field: Field) -> Vec<f64> {
        let map = self.dof_map(field);
        (0..map.len()).map(|d| coeffs[self.index(field, d, 0)]).collect()
    }
}

/// Nodal solution trace carried from one slab to the next, together with the
/// patch masks it is defined on. Jump terms of the next slab integrate this
/// field over the shared endpoint geometry, which the masks always cover.
#[derive(Clone)]
pub struct TraceField {
    pub time: f64,
    pub bulk: DofMap,
    pub bulk_values: Vec<f64>,
    pub surface: DofMap,
    pub surface_values: Vec<f64>,
    pub active_bulk: Vec<bool>,
    pub active_surface: Vec<bool>,
    pub geometry: Arc<CutGeometry>,
}

impl TraceField {
    /// Interpolates the initial data on the t = 0 active patches.
    pub fn from_initial(
        mesh: &BackgroundMesh,
        geometry: Arc<CutGeometry>,
        u_bulk: impl Fn(Vec2) -> f64,
        u_surface: impl Fn(Vec2) -> f64,
        include_bulk: bool,
    ) -> TraceField {
        let active_bulk: Vec<bool> = geometry
            .classification
            .iter()
            .map(|&c| include_bulk && c != ElementClass::Exterior)
            .collect();
        let active_surface: Vec<bool> =
            geometry.classification.iter().map(|&c| c == ElementClass::Cut).collect();
        let bulk = DofMap::from_elements(
            mesh,
            active_bulk.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i),
        );
        let surface = DofMap::from_elements(
            mesh,
            active_surface.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i),
        );
        let bulk_values = bulk.vertices().iter().map(|&v| u_bulk(mesh.vertices[v])).collect();
        let surface_values =
            surface.vertices().iter().map(|&v| u_surface(mesh.vertices[v])).collect();
        TraceField {
            time: geometry.time,
            bulk,
            bulk_values,
            surface,
            surface_values,
            active_bulk,
            active_surface,
            geometry,
        }
    }

    /// Captures the end trace of a solved slab.
    pub fn from_slab(space: &SlabSpace, coeffs: &[f64], geometry: Arc<CutGeometry>) -> TraceField {
        TraceField {
            time: space.interval.1,
            bulk: space.bulk_dofs.clone(),
            bulk_values: space.end_trace(coeffs, Field::Bulk),
            surface: space.surface_dofs.clone(),
            surface_values: space.end_trace(coeffs, Field::Surface),
            active_bulk: space.active_bulk.clone(),
            active_surface: space.active_surface.clone(),
            geometry,
        }
    }

    /// P1 value inside element `el`, which must have been active when the
    /// trace was recorded.
    pub fn value_in_element(&self, mesh: &BackgroundMesh, field: Field, el: usize, p: Vec2) -> f64 {
        let (map, values) = match field {
            Field::Bulk => (&self.bulk, &self.bulk_values),
            Field::Surface => (&self.surface, &self.surface_values),
        };
        let lam = mesh.barycentric(el, p);
        let mut out = 0.0;
        for (i, &v) in mesh.triangles[el].iter().enumerate() {
            let dof = map.dof(v).expect("trace evaluated outside its patch");
            out += lam[i] * values[dof];
        }
        out
    }

    /// Nodal value at `vertex` if it carried a dof, otherwise the value at
    /// the nearest recorded vertex. Used only to extend the Newton initial
    /// guess onto freshly activated dofs.
    pub fn value_at_vertex_or_nearest(
        &self,
        mesh: &BackgroundMesh,
        field: Field,
        vertex: usize,
    ) -> f64 {
        let (map, values) = match field {
            Field::Bulk => (&self.bulk, &self.bulk_values),
            Field::Surface => (&self.surface, &self.surface_values),
        };
        if let Some(d) = map.dof(vertex) {
            return values[d];
        }
        let p = mesh.vertices[vertex];
        let mut best = (f64::MAX, 0.0);
        for (d, &v) in map.vertices().iter().enumerate() {
            let dist = (mesh.vertices[v] - p).norm_squared();
            if dist < best.0 {
                best = (dist, values[d]);
            }
        }
        best.1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutgeom::build_slab_sets;
    use crate::levelset::LevelSetField;
    use crate::mesh::{DiagonalRule, Rect};
    use rand::Rng;
    use rand::SeedableRng;

    fn slab_fixture(n: usize) -> (Arc<BackgroundMesh>, SlabSpace) {
        let coarse = Arc::new(
            BackgroundMesh::uniform(Rect::new(0.0, 1.0, 0.0, 1.0), n, n, DiagonalRule::Uniform)
                .unwrap(),
        );
        let fine = Arc::new(coarse.refine_uniform().unwrap());
        let ls = LevelSetField::circle(fine, Vec2::new(0.5, 0.5), 0.25, 0.0).unwrap();
        let geom = CutGeometry::build(&ls, &coarse).unwrap();
        let sets = build_slab_sets(&[&geom], &coarse).unwrap();
        let space = SlabSpace::build(&sets, &coarse, (0.0, 0.1), true, true).unwrap();
        (coarse, space)
    }

    #[test]
    fn two_triangle_patch_has_four_dofs() {
        let mesh =
            BackgroundMesh::uniform(Rect::new(0.0, 1.0, 0.0, 1.0), 1, 1, DiagonalRule::Uniform)
                .unwrap();
        let map = DofMap::from_elements(&mesh, [0usize, 1].into_iter());
        assert_eq!(map.len(), 4);
    }

    #[test]
    fn global_size_matches_counting_formula() {
        let (coarse, space) = slab_fixture(20);
        let mut bulk_verts = std::collections::HashSet::new();
        let mut surf_verts = std::collections::HashSet::new();
        for e in 0..coarse.n_triangles() {
            if space.active_bulk[e] {
                bulk_verts.extend(coarse.triangles[e]);
            }
            if space.active_surface[e] {
                surf_verts.extend(coarse.triangles[e]);
            }
        }
        assert_eq!(space.n_bulk(), bulk_verts.len());
        assert_eq!(space.n_surface(), surf_verts.len());
        assert_eq!(space.size(), 2 * (bulk_verts.len() + surf_verts.len()) + 1);
    }

    #[test]
    fn benchmark_mesh_system_size() {
        // drop of radius 0.5 at (0, 1) in [-1,1] x [0,2], 50x50 cells
        let coarse = Arc::new(
            BackgroundMesh::uniform(Rect::new(-1.0, 1.0, 0.0, 2.0), 50, 50, DiagonalRule::Uniform)
                .unwrap(),
        );
        let fine = Arc::new(coarse.refine_uniform().unwrap());
        let ls = LevelSetField::circle(fine, Vec2::new(0.0, 1.0), 0.5, 0.0).unwrap();
        let geom = CutGeometry::build(&ls, &coarse).unwrap();
        let sets = build_slab_sets(&[&geom], &coarse).unwrap();
        let space = SlabSpace::build(&sets, &coarse, (0.0, 0.025), true, true).unwrap();
        assert!(space.n_bulk() > 0 && space.n_surface() > 0);
        assert_eq!(space.size(), 2 * (space.n_bulk() + space.n_surface()) + 1);
        assert_eq!(space.multiplier_index().unwrap(), space.size() - 1);
    }

    #[test]
    fn deterministic_rebuild() {
        let (_, s1) = slab_fixture(12);
        let (_, s2) = slab_fixture(12);
        assert_eq!(s1.bulk_dofs.vertices(), s2.bulk_dofs.vertices());
        assert_eq!(s1.surface_dofs.vertices(), s2.surface_dofs.vertices());
    }

    #[test]
    fn trace_identities_for_random_coefficients() {
        let (_, space) = slab_fixture(10);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let coeffs: Vec<f64> = (0..space.size()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        for field in [Field::Bulk, Field::Surface] {
            let start = space.start_trace(&coeffs, field);
            let end = space.end_trace(&coeffs, field);
            for d in 0..space.dof_map(field).len() {
                let c0 = coeffs[space.index(field, d, 0)];
                let c1 = coeffs[space.index(field, d, 1)];
                assert!((start[d] - c0).abs() < 1e-14);
                assert!((end[d] - (c0 + c1)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn evaluation_is_linear_in_time() {
        let (mesh, space) = slab_fixture(10);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let coeffs: Vec<f64> = (0..space.size()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (t0, t1) = space.interval;
        let el = space.active_surface.iter().position(|&b| b).unwrap();
        let vs = mesh.tri_vertices(el);
        let p = (vs[0] + vs[1] + vs[2]) / 3.0;
        for field in [Field::Bulk, Field::Surface] {
            let a = space.evaluate(&mesh, &coeffs, field, t0, p).unwrap();
            let b = space.evaluate(&mesh, &coeffs, field, t1, p).unwrap();
            let mid = space.evaluate(&mesh, &coeffs, field, 0.5 * (t0 + t1), p).unwrap();
            assert!((mid - 0.5 * (a + b)).abs() < 1e-13);
        }
    }

    #[test]
    fn slope_free_evaluation_is_time_independent() {
        let (mesh, space) = slab_fixture(8);
        let mut coeffs = vec![0.0; space.size()];
        for d in 0..space.n_bulk() {
            coeffs[space.bulk_index(d, 0)] = 3.25;
        }
        let el = space.active_bulk.iter().position(|&b| b).unwrap();
        let vs = mesh.tri_vertices(el);
        let p = (vs[0] + vs[1] + vs[2]) / 3.0;
        for frac in [0.0, 0.3, 1.0] {
            let t = space.interval.0 + frac * space.step();
            let v = space.evaluate(&mesh, &coeffs, Field::Bulk, t, p).unwrap();
            assert!((v - 3.25).abs() < 1e-14);
        }
    }

    #[test]
    fn evaluation_outside_patch_errors() {
        let (mesh, space) = slab_fixture(10);
        let coeffs = vec![0.0; space.size()];
        // the drop center is far from the surface patch for r = 0.25
        let err = space.evaluate(&mesh, &coeffs, Field::Surface, 0.05, Vec2::new(0.5, 0.5));
        assert!(matches!(err, Err(Error::OutOfPatch(_, _))));
    }

    #[test]
    fn initial_trace_interpolates_data() {
        let coarse = Arc::new(
            BackgroundMesh::uniform(Rect::new(0.0, 1.0, 0.0, 1.0), 16, 16, DiagonalRule::Uniform)
                .unwrap(),
        );
        let fine = Arc::new(coarse.refine_uniform().unwrap());
        let ls = LevelSetField::circle(fine, Vec2::new(0.5, 0.5), 0.3, 0.0).unwrap();
        let geom = Arc::new(CutGeometry::build(&ls, &coarse).unwrap());
        let trace = TraceField::from_initial(&coarse, geom, |p| p.x + p.y, |p| 2.0 * p.x, true);
        for (d, &v) in trace.bulk.vertices().iter().enumerate() {
            let p = coarse.vertices[v];
            assert!((trace.bulk_values[d] - (p.x + p.y)).abs() < 1e-14);
        }
        for (d, &v) in trace.surface.vertices().iter().enumerate() {
            let p = coarse.vertices[v];
            assert!((trace.surface_values[d] - 2.0 * p.x).abs() < 1e-14);
        }
        let v = trace.value_at_vertex_or_nearest(&coarse, Field::Surface, 0);
        assert!(v.is_finite());
    }
}
