//! Assembly of the space-time residual and Jacobian for one slab.
//!
//! Every term is integrated in time with a trapezoid or Simpson rule; at
//! each quadrature instant the spatial integrals run over the cut geometry
//! of that instant. Face-jump ghost penalties use slab-level face sets, and
//! a scalar Lagrange multiplier can pin the total surfactant mass at the
//! slab endpoint.

use std::sync::Arc;

use crate::cutgeom::{CutGeometry, SlabSets};
use crate::error::{Error, Result};
use crate::levelset::VelocityField;
use crate::mesh::BackgroundMesh;
use crate::quadrature::{segment_rule, triangle_rule};
use crate::slabspace::{Field, SlabSpace, TraceField};
use crate::solver::{SparseLu, Triplet};
use crate::vec2::Vec2;

/// Adsorption-desorption exchange law between bulk and surface surfactant.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingKind {
    /// Bilinear saturation: f = b_B u_B − b_S u_S − b_BS u_B u_S.
    Langmuir,
    /// Linear: b_BS = 0.
    Henry,
    /// Exponential desorption correction:
    /// f = b_B u_B − b_S e^(A u_S) u_S − b_BS u_B u_S.
    Frumkin,
}

/// Exchange flux model with its rate constants.
#[derive(Clone, Copy, Debug)]
pub struct CouplingModel {
    pub kind: CouplingKind,
    /// Coefficient of u_B (b_B; k_a·u_S^∞ in Langmuir form).
    pub bulk_rate: f64,
    /// Coefficient of u_S (b_S = k_d).
    pub surf_rate: f64,
    /// Coefficient of u_B·u_S (b_BS = k_a).
    pub bilinear_rate: f64,
    /// Frumkin exponent A.
    pub exponent: f64,
}

impl CouplingModel {
    pub fn langmuir(adsorption: f64, desorption: f64, max_concentration: f64) -> Self {
        CouplingModel {
            kind: CouplingKind::Langmuir,
            bulk_rate: adsorption * max_concentration,
            surf_rate: desorption,
            bilinear_rate: adsorption,
            exponent: 0.0,
        }
    }

    pub fn langmuir_rates(bulk_rate: f64, surf_rate: f64, bilinear_rate: f64) -> Self {
        CouplingModel {
            kind: CouplingKind::Langmuir,
            bulk_rate,
            surf_rate,
            bilinear_rate,
            exponent: 0.0,
        }
    }

    pub fn henry(adsorption: f64, desorption: f64) -> Self {
        CouplingModel {
            kind: CouplingKind::Henry,
            bulk_rate: adsorption,
            surf_rate: desorption,
            bilinear_rate: 0.0,
            exponent: 0.0,
        }
    }

    pub fn frumkin(bulk_rate: f64, surf_rate: f64, bilinear_rate: f64, exponent: f64) -> Self {
        CouplingModel { kind: CouplingKind::Frumkin, bulk_rate, surf_rate, bilinear_rate, exponent }
    }

    /// No exchange at all (insoluble surfactant or decoupled runs).
    pub fn none() -> Self {
        CouplingModel {
            kind: CouplingKind::Henry,
            bulk_rate: 0.0,
            surf_rate: 0.0,
            bilinear_rate: 0.0,
            exponent: 0.0,
        }
    }

    pub fn is_active(&self) -> bool {
        self.bulk_rate != 0.0 || self.surf_rate != 0.0 || self.bilinear_rate != 0.0
    }

    pub fn flux(&self, u_bulk: f64, u_surf: f64) -> f64 {
        match self.kind {
            CouplingKind::Langmuir | CouplingKind::Henry => {
                self.bulk_rate * u_bulk
                    - self.surf_rate * u_surf
                    - self.bilinear_rate * u_bulk * u_surf
            }
            CouplingKind::Frumkin => {
                self.bulk_rate * u_bulk
                    - self.surf_rate * (self.exponent * u_surf).exp() * u_surf
                    - self.bilinear_rate * u_bulk * u_surf
            }
        }
    }

    pub fn flux_du_bulk(&self, _u_bulk: f64, u_surf: f64) -> f64 {
        self.bulk_rate - self.bilinear_rate * u_surf
    }

    pub fn flux_du_surf(&self, u_bulk: f64, u_surf: f64) -> f64 {
        match self.kind {
            CouplingKind::Langmuir | CouplingKind::Henry => {
                -self.surf_rate - self.bilinear_rate * u_bulk
            }
            CouplingKind::Frumkin => {
                let e = (self.exponent * u_surf).exp();
                -self.surf_rate * (self.exponent * e * u_surf + e) - self.bilinear_rate * u_bulk
            }
        }
    }
}

/// Resolved weights of the weak form, covering the dimensional form, the
/// non-dimensional form (bulk terms scaled by b_B/Da, diffusivities 1/Pe)
/// and the surface-only insoluble reduction.
#[derive(Clone, Copy, Debug)]
pub struct ProblemCoefficients {
    pub coupling: CouplingModel,
    /// Weight of every bulk-PDE term (time derivative, transport, jump,
    /// bulk source): b_B, or b_B/Da in non-dimensional mode.
    pub bulk_test_weight: f64,
    /// Weight of every surface-PDE term: b_S.
    pub surf_test_weight: f64,
    pub k_bulk: f64,
    pub k_surf: f64,
    /// Weight of the surface integral in the conserved mass: 1 or Da.
    pub surf_mass_weight: f64,
    pub include_bulk: bool,
}

impl ProblemCoefficients {
    pub fn dimensional(coupling: CouplingModel, k_bulk: f64, k_surf: f64) -> Result<Self> {
        let (bw, sw) = if coupling.is_active() {
            if coupling.bulk_rate <= 0.0 || coupling.surf_rate <= 0.0 {
                return Err(Error::Config(
                    "active coupling needs positive bulk and surface rates".into(),
                ));
            }
            (coupling.bulk_rate, coupling.surf_rate)
        } else {
            (1.0, 1.0)
        };
        Ok(ProblemCoefficients {
            coupling,
            bulk_test_weight: bw,
            surf_test_weight: sw,
            k_bulk,
            k_surf,
            surf_mass_weight: 1.0,
            include_bulk: true,
        })
    }

    /// Non-dimensional groups: bulk/surface Peclet, Damkohler, Biot and the
    /// adsorption number. The exchange flux is α·u_B(1−u_S) − Bi·u_S.
    pub fn nondimensional(pe: f64, pe_s: f64, da: f64, bi: f64, alpha: f64) -> Result<Self> {
        if pe <= 0.0 || pe_s <= 0.0 || da <= 0.0 || bi <= 0.0 || alpha <= 0.0 {
            return Err(Error::Config("non-dimensional groups must be positive".into()));
        }
        let coupling = CouplingModel::langmuir_rates(alpha, bi, alpha);
        Ok(ProblemCoefficients {
            coupling,
            bulk_test_weight: alpha / da,
            surf_test_weight: bi,
            k_bulk: 1.0 / pe,
            k_surf: 1.0 / pe_s,
            surf_mass_weight: da,
            include_bulk: true,
        })
    }

    /// Surface-only transport of an insoluble surfactant.
    pub fn insoluble(k_surf: f64) -> Self {
        ProblemCoefficients {
            coupling: CouplingModel::none(),
            bulk_test_weight: 1.0,
            surf_test_weight: 1.0,
            k_bulk: 0.0,
            k_surf,
            surf_mass_weight: 1.0,
            include_bulk: false,
        }
    }

    fn exchange_active(&self) -> bool {
        self.include_bulk && self.coupling.is_active()
    }
}

/// Quadrature rule for the time integrals over one slab.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeRule {
    Trapezoid,
    Simpson,
}

/// Time-quadrature points of one slab, with normalized coordinates
/// s = (t − tₙ₋₁)/k.
#[derive(Clone, Debug)]
pub struct TimeQuadrature {
    pub rule: TimeRule,
    pub times: Vec<f64>,
    pub normalized: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn time_quadrature(rule: TimeRule, interval: (f64, f64)) -> TimeQuadrature {
    let (t0, t1) = interval;
    let k = t1 - t0;
    match rule {
        TimeRule::Trapezoid => TimeQuadrature {
            rule,
            times: vec![t0, t1],
            normalized: vec![0.0, 1.0],
            weights: vec![k / 2.0, k / 2.0],
        },
        TimeRule::Simpson => TimeQuadrature {
            rule,
            times: vec![t0, 0.5 * (t0 + t1), t1],
            normalized: vec![0.0, 0.5, 1.0],
            weights: vec![k / 6.0, 4.0 * k / 6.0, k / 6.0],
        },
    }
}

impl TimeQuadrature {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Σ w_q s_qᵐ, the time moments entering the tensor-product blocks.
    pub fn moment(&self, m: usize) -> f64 {
        self.weights
            .iter()
            .zip(&self.normalized)
            .map(|(w, s)| w * s.powi(m as i32))
            .sum()
    }
}

/// Manufactured right-hand sides of the two transport equations.
pub trait SourceTerms: Send + Sync {
    fn bulk(&self, t: f64, p: Vec2) -> f64;
    fn surface(&self, t: f64, p: Vec2) -> f64;
}

/// Ghost-penalty weights: j = τ_B·h·j_B + τ_S·j_S.
#[derive(Clone, Copy, Debug)]
pub struct Stabilization {
    pub tau_bulk: f64,
    pub tau_surf: f64,
    /// Coarse mesh size entering the bulk penalty scaling.
    pub h: f64,
}

/// Jump of the normal gradient across one face, reduced to per-vertex
/// coefficients: [n·∇v] = Σ g_i v_i over the (up to four) patch vertices.
struct FaceJump {
    dofs: [usize; 4],
    g: [f64; 4],
    len: f64,
}

fn face_jumps(
    mesh: &BackgroundMesh,
    faces: &[usize],
    dof_of: impl Fn(usize) -> usize,
) -> Vec<FaceJump> {
    let mut out = Vec::with_capacity(faces.len());
    for &eid in faces {
        let edge = &mesh.edges[eid];
        let (t1, t2) = match edge.tris {
            [Some(a), Some(b)] => (a, b),
            _ => continue,
        };
        let (va, vb) = edge.vertices;
        let tangent = mesh.vertices[vb] - mesh.vertices[va];
        let len = tangent.norm();
        let normal = tangent.perp() / len;
        let mut dofs = [usize::MAX; 4];
        let mut g = [0.0f64; 4];
        let mut n_entries = 0usize;
        let mut add = |vertex: usize, coeff: f64, dofs: &mut [usize; 4], g: &mut [f64; 4]| {
            let dof = dof_of(vertex);
            for i in 0..n_entries {
                if dofs[i] == dof {
                    g[i] += coeff;
                    return;
                }
            }
            dofs[n_entries] = dof;
            g[n_entries] = coeff;
            n_entries += 1;
        };
        for (tri, sign) in [(t1, 1.0), (t2, -1.0)] {
            let basis = mesh.basis(tri);
            for (i, &v) in mesh.triangles[tri].iter().enumerate() {
                add(v, sign * normal.dot(basis.grads[i]), &mut dofs, &mut g);
            }
        }
        debug_assert_eq!(n_entries, 4);
        out.push(FaceJump { dofs, g, len });
    }
    out
}

/// Everything needed to evaluate the residual F and Jacobian DF of one slab
/// at any state vector.
pub struct SlabAssembler<'a> {
    pub mesh: &'a BackgroundMesh,
    pub space: &'a SlabSpace,
    pub geoms: &'a [Arc<CutGeometry>],
    pub quad: TimeQuadrature,
    pub velocity: &'a VelocityField,
    pub coeffs: &'a ProblemCoefficients,
    pub prev: &'a TraceField,
    pub sources: Option<&'a dyn SourceTerms>,
    pub stab: Stabilization,
    /// Prescribed total mass at the slab endpoint; None disables the
    /// multiplier row entirely.
    pub mass_target: Option<f64>,
    bulk_faces: Vec<FaceJump>,
    surf_faces: Vec<FaceJump>,
    mass_vec_bulk: Vec<f64>,
    mass_vec_surf: Vec<f64>,
    moments: [f64; 3],
    /// Slope components fixed to zero: their dof is integrated at no more
    /// than one quadrature time and touches no penalty face, which makes the
    /// two time-component test rows proportional. Pinning the slope picks
    /// the piecewise-constant representative of that slab-local null space.
    pinned_slopes: Vec<usize>,
}

impl<'a> SlabAssembler<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mesh: &'a BackgroundMesh,
        space: &'a SlabSpace,
        sets: &'a SlabSets,
        geoms: &'a [Arc<CutGeometry>],
        rule: TimeRule,
        velocity: &'a VelocityField,
        coeffs: &'a ProblemCoefficients,
        prev: &'a TraceField,
        sources: Option<&'a dyn SourceTerms>,
        stab: Stabilization,
        mass_target: Option<f64>,
    ) -> Result<SlabAssembler<'a>> {
        let quad = time_quadrature(rule, space.interval);
        if geoms.len() != quad.len() {
            return Err(Error::Config(format!(
                "{} geometries supplied for {} time-quadrature points",
                geoms.len(),
                quad.len()
            )));
        }
        for (g, t) in geoms.iter().zip(&quad.times) {
            if (g.time - t).abs() > 1e-9 * space.step().max(1.0) {
                return Err(Error::Config(format!(
                    "geometry at t = {} does not match quadrature time {t}",
                    g.time
                )));
            }
        }
        if space.multiplier != mass_target.is_some() {
            return Err(Error::Config(
                "multiplier layout and mass target must be enabled together".into(),
            ));
        }
        if (prev.time - space.interval.0).abs() > 1e-9 * space.step().max(1.0) {
            return Err(Error::Config("previous trace is not at the slab start time".into()));
        }

        let bulk_faces = if coeffs.include_bulk {
            face_jumps(mesh, &sets.faces_bulk, |v| {
                space.bulk_dofs.dof(v).expect("bulk face vertex without dof")
            })
        } else {
            Vec::new()
        };
        let surf_faces = face_jumps(mesh, &sets.faces_surface, |v| {
            space.surface_dofs.dof(v).expect("surface face vertex without dof")
        });

        // mass functionals (φ_i, 1) on the endpoint geometry
        let end = geoms.last().expect("at least one geometry");
        let mut mass_vec_bulk = vec![0.0; space.n_bulk()];
        if coeffs.include_bulk {
            for (el, cells) in end.bulk_cells.iter().enumerate() {
                if cells.is_empty() {
                    continue;
                }
                let verts = mesh.triangles[el];
                for cell in cells {
                    for (x, w) in triangle_rule(&cell.v, cell.area) {
                        let lam = mesh.barycentric(el, x);
                        for i in 0..3 {
                            let d = space.bulk_dofs.dof(verts[i]).expect("bulk dof");
                            mass_vec_bulk[d] += w * lam[i];
                        }
                    }
                }
            }
        }
        let mut mass_vec_surf = vec![0.0; space.n_surface()];
        for seg in &end.segments {
            let verts = mesh.triangles[seg.coarse_tri];
            for (x, w) in segment_rule(seg.a, seg.b) {
                let lam = mesh.barycentric(seg.coarse_tri, x);
                for i in 0..3 {
                    let d = space.surface_dofs.dof(verts[i]).expect("surface dof");
                    mass_vec_surf[d] += w * lam[i];
                }
            }
        }

        let mut bulk_times = vec![0u8; space.n_bulk()];
        let mut surf_times = vec![0u8; space.n_surface()];
        for (q, geom) in geoms.iter().enumerate() {
            let bit = 1u8 << q;
            if coeffs.include_bulk {
                for (el, cells) in geom.bulk_cells.iter().enumerate() {
                    if cells.is_empty() {
                        continue;
                    }
                    for &v in &mesh.triangles[el] {
                        bulk_times[space.bulk_dofs.dof(v).expect("bulk dof")] |= bit;
                    }
                }
            }
            for seg in &geom.segments {
                for &v in &mesh.triangles[seg.coarse_tri] {
                    surf_times[space.surface_dofs.dof(v).expect("surface dof")] |= bit;
                }
            }
        }
        let mut stabilized = vec![false; space.size()];
        for fj in &bulk_faces {
            for &d in &fj.dofs {
                stabilized[space.bulk_index(d, 1)] = true;
            }
        }
        for fj in &surf_faces {
            for &d in &fj.dofs {
                stabilized[space.surface_index(d, 1)] = true;
            }
        }
        let mut pinned_slopes = Vec::new();
        for (d, mask) in bulk_times.iter().enumerate() {
            let idx = space.bulk_index(d, 1);
            if mask.count_ones() <= 1 && !stabilized[idx] {
                pinned_slopes.push(idx);
            }
        }
        for (d, mask) in surf_times.iter().enumerate() {
            let idx = space.surface_index(d, 1);
            if mask.count_ones() <= 1 && !stabilized[idx] {
                pinned_slopes.push(idx);
            }
        }

        let quad_moments = [quad.moment(0), quad.moment(1), quad.moment(2)];
        Ok(SlabAssembler {
            mesh,
            space,
            geoms,
            quad,
            velocity,
            coeffs,
            prev,
            sources,
            stab,
            mass_target,
            bulk_faces,
            surf_faces,
            mass_vec_bulk,
            mass_vec_surf,
            moments: quad_moments,
            pinned_slopes,
        })
    }

    /// Number of slope components pinned by the degeneracy guard.
    pub fn pinned_slope_count(&self) -> usize {
        self.pinned_slopes.len()
    }

    /// Residual F(u, λ) as one dense vector over the slab layout.
    pub fn residual(&self, state: &[f64]) -> Vec<f64> {
        let sp = self.space;
        let mesh = self.mesh;
        let k = sp.step();
        let cb = self.coeffs.bulk_test_weight;
        let cs = self.coeffs.surf_test_weight;
        let mut f = vec![0.0; sp.size()];

        for (q, geom) in self.geoms.iter().enumerate() {
            let (tq, sq, wq) = (self.quad.times[q], self.quad.normalized[q], self.quad.weights[q]);
            let spow = [1.0, sq];

            if self.coeffs.include_bulk {
                for (el, cells) in geom.bulk_cells.iter().enumerate() {
                    if cells.is_empty() {
                        continue;
                    }
                    let verts = mesh.triangles[el];
                    let grads = mesh.basis(el).grads;
                    let mut dofs = [0usize; 3];
                    let mut c0 = [0.0; 3];
                    let mut c1 = [0.0; 3];
                    for i in 0..3 {
                        dofs[i] = sp.bulk_dofs.dof(verts[i]).expect("bulk dof");
                        c0[i] = state[sp.bulk_index(dofs[i], 0)];
                        c1[i] = state[sp.bulk_index(dofs[i], 1)];
                    }
                    let grad_t: Vec2 = (0..3)
                        .fold(Vec2::ZERO, |g, i| g + grads[i] * (c0[i] + sq * c1[i]));
                    for cell in cells {
                        for (x, w) in triangle_rule(&cell.v, cell.area) {
                            let lam = mesh.barycentric(el, x);
                            let beta = self.velocity.at(tq, x);
                            let du_dt: f64 = (0..3).map(|i| lam[i] * c1[i]).sum::<f64>() / k;
                            let conv = beta.dot(grad_t);
                            let src = self.sources.map_or(0.0, |s| s.bulk(tq, x));
                            for i in 0..3 {
                                let cell_val = du_dt * lam[i]
                                    + conv * lam[i]
                                    + self.coeffs.k_bulk * grad_t.dot(grads[i])
                                    - src * lam[i];
                                let contrib = wq * w * cb * cell_val;
                                for m in 0..2 {
                                    f[sp.bulk_index(dofs[i], m)] += contrib * spow[m];
                                }
                            }
                        }
                    }
                }
            }

            for seg in &geom.segments {
                let el = seg.coarse_tri;
                let verts = mesh.triangles[el];
                let grads = mesh.basis(el).grads;
                let n = seg.normal;
                let mut sdofs = [0usize; 3];
                let mut s0 = [0.0; 3];
                let mut s1 = [0.0; 3];
                for i in 0..3 {
                    sdofs[i] = sp.surface_dofs.dof(verts[i]).expect("surface dof");
                    s0[i] = state[sp.surface_index(sdofs[i], 0)];
                    s1[i] = state[sp.surface_index(sdofs[i], 1)];
                }
                let exchange = self.coeffs.exchange_active();
                let mut bdofs = [0usize; 3];
                let mut b0 = [0.0; 3];
                let mut b1 = [0.0; 3];
                if exchange {
                    for i in 0..3 {
                        bdofs[i] = sp.bulk_dofs.dof(verts[i]).expect("bulk dof on cut element");
                        b0[i] = state[sp.bulk_index(bdofs[i], 0)];
                        b1[i] = state[sp.bulk_index(bdofs[i], 1)];
                    }
                }
                let grad_s: Vec2 =
                    (0..3).fold(Vec2::ZERO, |g, i| g + grads[i] * (s0[i] + sq * s1[i]));
                let tang_grad_s = grad_s - n * n.dot(grad_s);
                for (x, w) in segment_rule(seg.a, seg.b) {
                    let lam = mesh.barycentric(el, x);
                    let beta = self.velocity.at(tq, x);
                    let div_g = self.velocity.tangential_divergence(tq, x, n);
                    let u_s: f64 = (0..3).map(|i| lam[i] * (s0[i] + sq * s1[i])).sum();
                    let dus_dt: f64 = (0..3).map(|i| lam[i] * s1[i]).sum::<f64>() / k;
                    let conv = beta.dot(grad_s);
                    let src = self.sources.map_or(0.0, |s| s.surface(tq, x));
                    for i in 0..3 {
                        let tgi = grads[i] - n * n.dot(grads[i]);
                        let val = dus_dt * lam[i]
                            + conv * lam[i]
                            + div_g * u_s * lam[i]
                            + self.coeffs.k_surf * tang_grad_s.dot(tgi)
                            - src * lam[i];
                        let contrib = wq * w * cs * val;
                        for m in 0..2 {
                            f[sp.surface_index(sdofs[i], m)] += contrib * spow[m];
                        }
                    }
                    if exchange {
                        let u_b: f64 = (0..3).map(|i| lam[i] * (b0[i] + sq * b1[i])).sum();
                        let flux = self.coeffs.coupling.flux(u_b, u_s);
                        let bb = self.coeffs.coupling.bulk_rate;
                        let bs = self.coeffs.coupling.surf_rate;
                        for i in 0..3 {
                            let base = wq * w * flux * lam[i];
                            for m in 0..2 {
                                f[sp.bulk_index(bdofs[i], m)] += base * bb * spow[m];
                                f[sp.surface_index(sdofs[i], m)] -= base * bs * spow[m];
                            }
                        }
                    }
                }
            }
        }

        // jump terms at the slab start, over the shared endpoint geometry
        let start = &self.geoms[0];
        if self.coeffs.include_bulk {
            for (el, cells) in start.bulk_cells.iter().enumerate() {
                if cells.is_empty() {
                    continue;
                }
                let verts = mesh.triangles[el];
                let mut dofs = [0usize; 3];
                let mut c0 = [0.0; 3];
                for i in 0..3 {
                    dofs[i] = sp.bulk_dofs.dof(verts[i]).expect("bulk dof");
                    c0[i] = state[sp.bulk_index(dofs[i], 0)];
                }
                for cell in cells {
                    for (x, w) in triangle_rule(&cell.v, cell.area) {
                        let lam = mesh.barycentric(el, x);
                        let here: f64 = (0..3).map(|i| lam[i] * c0[i]).sum();
                        let before = self.prev.value_in_element(mesh, Field::Bulk, el, x);
                        for i in 0..3 {
                            f[sp.bulk_index(dofs[i], 0)] += w * cb * (here - before) * lam[i];
                        }
                    }
                }
            }
        }
        for seg in &start.segments {
            let el = seg.coarse_tri;
            let verts = mesh.triangles[el];
            let mut dofs = [0usize; 3];
            let mut c0 = [0.0; 3];
            for i in 0..3 {
                dofs[i] = sp.surface_dofs.dof(verts[i]).expect("surface dof");
                c0[i] = state[sp.surface_index(dofs[i], 0)];
            }
            for (x, w) in segment_rule(seg.a, seg.b) {
                let lam = mesh.barycentric(el, x);
                let here: f64 = (0..3).map(|i| lam[i] * c0[i]).sum();
                let before = self.prev.value_in_element(mesh, Field::Surface, el, x);
                for i in 0..3 {
                    f[sp.surface_index(dofs[i], 0)] += w * cs * (here - before) * lam[i];
                }
            }
        }

        // ghost penalties, integrated in time with the same rule
        let mom = &self.moments;
        for (faces, field, tau) in [
            (&self.bulk_faces, Field::Bulk, self.stab.tau_bulk * self.stab.h),
            (&self.surf_faces, Field::Surface, self.stab.tau_surf),
        ] {
            if tau == 0.0 {
                continue;
            }
            for fj in faces.iter() {
                let mut j0 = 0.0;
                let mut j1 = 0.0;
                for i in 0..4 {
                    j0 += fj.g[i] * state[sp.index(field, fj.dofs[i], 0)];
                    j1 += fj.g[i] * state[sp.index(field, fj.dofs[i], 1)];
                }
                for i in 0..4 {
                    for m in 0..2 {
                        f[sp.index(field, fj.dofs[i], m)] +=
                            tau * fj.len * fj.g[i] * (mom[m] * j0 + mom[m + 1] * j1);
                    }
                }
            }
        }

        // mass constraint at the slab endpoint
        if let (Some(target), Some(li)) = (self.mass_target, sp.multiplier_index()) {
            let lambda = state[li];
            let wm = self.coeffs.surf_mass_weight;
            let mut mass = 0.0;
            for (d, &mv) in self.mass_vec_bulk.iter().enumerate() {
                let end_val = state[sp.bulk_index(d, 0)] + state[sp.bulk_index(d, 1)];
                mass += mv * end_val;
                f[sp.bulk_index(d, 0)] += lambda * mv;
                f[sp.bulk_index(d, 1)] += lambda * mv;
            }
            for (d, &mv) in self.mass_vec_surf.iter().enumerate() {
                let end_val = state[sp.surface_index(d, 0)] + state[sp.surface_index(d, 1)];
                mass += wm * mv * end_val;
                f[sp.surface_index(d, 0)] += lambda * wm * mv;
                f[sp.surface_index(d, 1)] += lambda * wm * mv;
            }
            f[li] = mass - target;
        }

        for &idx in &self.pinned_slopes {
            f[idx] = state[idx];
        }

        f
    }

    /// Jacobian DF(u, λ) in coordinate form.
    pub fn jacobian_triplets(&self, state: &[f64]) -> Vec<Triplet> {
        let sp = self.space;
        let mesh = self.mesh;
        let k = sp.step();
        let cb = self.coeffs.bulk_test_weight;
        let cs = self.coeffs.surf_test_weight;
        let mut trips: Vec<Triplet> = Vec::new();

        for (q, geom) in self.geoms.iter().enumerate() {
            let (tq, sq, wq) = (self.quad.times[q], self.quad.normalized[q], self.quad.weights[q]);
            let spow = [1.0, sq];

            if self.coeffs.include_bulk {
                for (el, cells) in geom.bulk_cells.iter().enumerate() {
                    if cells.is_empty() {
                        continue;
                    }
                    let verts = mesh.triangles[el];
                    let grads = mesh.basis(el).grads;
                    let dofs: Vec<usize> =
                        verts.iter().map(|&v| sp.bulk_dofs.dof(v).expect("bulk dof")).collect();
                    // spatial kernels accumulated over the cell quadrature
                    let mut mass = [[0.0f64; 3]; 3];
                    let mut a_form = [[0.0f64; 3]; 3];
                    for cell in cells {
                        for (x, w) in triangle_rule(&cell.v, cell.area) {
                            let lam = mesh.barycentric(el, x);
                            let beta = self.velocity.at(tq, x);
                            for j in 0..3 {
                                let conv_j = beta.dot(grads[j]);
                                for i in 0..3 {
                                    mass[i][j] += w * lam[i] * lam[j];
                                    a_form[i][j] += w
                                        * (conv_j * lam[i]
                                            + self.coeffs.k_bulk * grads[j].dot(grads[i]));
                                }
                            }
                        }
                    }
                    for i in 0..3 {
                        for j in 0..3 {
                            for m in 0..2 {
                                let row = sp.bulk_index(dofs[i], m);
                                for l in 0..2 {
                                    let col = sp.bulk_index(dofs[j], l);
                                    let mut v = wq * spow[m] * spow[l] * cb * a_form[i][j];
                                    if l == 1 {
                                        v += wq * spow[m] * cb * mass[i][j] / k;
                                    }
                                    if v != 0.0 {
                                        trips.push(Triplet::new(row, col, v));
                                    }
                                }
                            }
                        }
                    }
                }
            }

            for seg in &geom.segments {
                let el = seg.coarse_tri;
                let verts = mesh.triangles[el];
                let grads = mesh.basis(el).grads;
                let n = seg.normal;
                let sdofs: Vec<usize> =
                    verts.iter().map(|&v| sp.surface_dofs.dof(v).expect("surface dof")).collect();
                let exchange = self.coeffs.exchange_active();
                let bdofs: Vec<usize> = if exchange {
                    verts.iter().map(|&v| sp.bulk_dofs.dof(v).expect("bulk dof")).collect()
                } else {
                    Vec::new()
                };
                let tg: Vec<Vec2> = grads.iter().map(|&g| g - n * n.dot(g)).collect();

                let mut a_surf = [[0.0f64; 3]; 3];
                let mut mass_surf = [[0.0f64; 3]; 3];
                let mut exch_b = [[0.0f64; 3]; 3];
                let mut exch_s = [[0.0f64; 3]; 3];
                for (x, w) in segment_rule(seg.a, seg.b) {
                    let lam = mesh.barycentric(el, x);
                    let beta = self.velocity.at(tq, x);
                    let div_g = self.velocity.tangential_divergence(tq, x, n);
                    for i in 0..3 {
                        for j in 0..3 {
                            a_surf[i][j] += w
                                * (beta.dot(grads[j]) * lam[i]
                                    + div_g * lam[j] * lam[i]
                                    + self.coeffs.k_surf * tg[j].dot(tg[i]));
                            mass_surf[i][j] += w * lam[i] * lam[j];
                        }
                    }
                    if exchange {
                        let u_b: f64 = (0..3)
                            .map(|i| {
                                lam[i]
                                    * (state[sp.bulk_index(bdofs[i], 0)]
                                        + sq * state[sp.bulk_index(bdofs[i], 1)])
                            })
                            .sum();
                        let u_s: f64 = (0..3)
                            .map(|i| {
                                lam[i]
                                    * (state[sp.surface_index(sdofs[i], 0)]
                                        + sq * state[sp.surface_index(sdofs[i], 1)])
                            })
                            .sum();
                        let dfb = self.coeffs.coupling.flux_du_bulk(u_b, u_s);
                        let dfs = self.coeffs.coupling.flux_du_surf(u_b, u_s);
                        for i in 0..3 {
                            for j in 0..3 {
                                let pair = w * lam[i] * lam[j];
                                exch_b[i][j] += pair * dfb;
                                exch_s[i][j] += pair * dfs;
                            }
                        }
                    }
                }
                let bb = self.coeffs.coupling.bulk_rate;
                let bs = self.coeffs.coupling.surf_rate;
                for i in 0..3 {
                    for j in 0..3 {
                        for m in 0..2 {
                            let srow = sp.surface_index(sdofs[i], m);
                            for l in 0..2 {
                                let scol = sp.surface_index(sdofs[j], l);
                                let tfac = wq * spow[m] * spow[l];
                                let mut v = tfac * cs * a_surf[i][j];
                                if l == 1 {
                                    v += wq * spow[m] * cs * mass_surf[i][j] / k;
                                }
                                if exchange {
                                    let brow = sp.bulk_index(bdofs[i], m);
                                    let bcol = sp.bulk_index(bdofs[j], l);
                                    trips.push(Triplet::new(brow, bcol, tfac * bb * exch_b[i][j]));
                                    trips.push(Triplet::new(brow, scol, tfac * bb * exch_s[i][j]));
                                    trips.push(Triplet::new(srow, bcol, -tfac * bs * exch_b[i][j]));
                                    v -= tfac * bs * exch_s[i][j];
                                }
                                if v != 0.0 {
                                    trips.push(Triplet::new(srow, scol, v));
                                }
                            }
                        }
                    }
                }
            }
        }

        // jump terms: mass matrices on the start geometry hit (0,0) blocks
        let start = &self.geoms[0];
        if self.coeffs.include_bulk {
            for (el, cells) in start.bulk_cells.iter().enumerate() {
                if cells.is_empty() {
                    continue;
                }
                let verts = mesh.triangles[el];
                let mut local = [[0.0f64; 3]; 3];
                for cell in cells {
                    for (x, w) in triangle_rule(&cell.v, cell.area) {
                        let lam = mesh.barycentric(el, x);
                        for i in 0..3 {
                            for j in 0..3 {
                                local[i][j] += w * lam[i] * lam[j];
                            }
                        }
                    }
                }
                for i in 0..3 {
                    let di = sp.bulk_dofs.dof(verts[i]).expect("bulk dof");
                    for j in 0..3 {
                        let dj = sp.bulk_dofs.dof(verts[j]).expect("bulk dof");
                        trips.push(Triplet::new(
                            sp.bulk_index(di, 0),
                            sp.bulk_index(dj, 0),
                            cb * local[i][j],
                        ));
                    }
                }
            }
        }
        for seg in &start.segments {
            let el = seg.coarse_tri;
            let verts = mesh.triangles[el];
            let mut local = [[0.0f64; 3]; 3];
            for (x, w) in segment_rule(seg.a, seg.b) {
                let lam = mesh.barycentric(el, x);
                for i in 0..3 {
                    for j in 0..3 {
                        local[i][j] += w * lam[i] * lam[j];
                    }
                }
            }
            for i in 0..3 {
                let di = sp.surface_dofs.dof(verts[i]).expect("surface dof");
                for j in 0..3 {
                    let dj = sp.surface_dofs.dof(verts[j]).expect("surface dof");
                    trips.push(Triplet::new(
                        sp.surface_index(di, 0),
                        sp.surface_index(dj, 0),
                        cs * local[i][j],
                    ));
                }
            }
        }

        let mom = &self.moments;
        for (faces, field, tau) in [
            (&self.bulk_faces, Field::Bulk, self.stab.tau_bulk * self.stab.h),
            (&self.surf_faces, Field::Surface, self.stab.tau_surf),
        ] {
            if tau == 0.0 {
                continue;
            }
            for fj in faces.iter() {
                for i in 0..4 {
                    for j in 0..4 {
                        let gij = tau * fj.len * fj.g[i] * fj.g[j];
                        if gij == 0.0 {
                            continue;
                        }
                        for m in 0..2 {
                            for l in 0..2 {
                                trips.push(Triplet::new(
                                    sp.index(field, fj.dofs[i], m),
                                    sp.index(field, fj.dofs[j], l),
                                    gij * mom[m + l],
                                ));
                            }
                        }
                    }
                }
            }
        }

        if let Some(li) = sp.multiplier_index() {
            let wm = self.coeffs.surf_mass_weight;
            for (d, &mv) in self.mass_vec_bulk.iter().enumerate() {
                for m in 0..2 {
                    trips.push(Triplet::new(sp.bulk_index(d, m), li, mv));
                    trips.push(Triplet::new(li, sp.bulk_index(d, m), mv));
                }
            }
            for (d, &mv) in self.mass_vec_surf.iter().enumerate() {
                for m in 0..2 {
                    trips.push(Triplet::new(sp.surface_index(d, m), li, wm * mv));
                    trips.push(Triplet::new(li, sp.surface_index(d, m), wm * mv));
                }
            }
        }

        trips
    }

    /// Factorized Jacobian. Systems with the mass multiplier use the
    /// bordered factorization to keep the dense constraint row out of the
    /// sparse ordering.
    ///
    /// With very large time steps a slope dof can decouple entirely (its
    /// element is active only at the s = 0 quadrature time, so every term
    /// carries a vanishing s factor). Such dofs do not enter the residual at
    /// all; they are pinned with a unit diagonal entry so the factorization
    /// stays regular.
    pub fn jacobian(&self, state: &[f64]) -> Result<SparseLu> {
        let mut trips = self.jacobian_triplets(state);
        let n = self.space.size();
        if !self.pinned_slopes.is_empty() {
            let mut pinned = vec![false; n];
            for &idx in &self.pinned_slopes {
                pinned[idx] = true;
            }
            trips.retain(|t| !pinned[t.row]);
            for &idx in &self.pinned_slopes {
                trips.push(Triplet::new(idx, idx, 1.0));
            }
        }
        let multiplier = self.space.multiplier_index();
        let mut touched = vec![false; n];
        for t in &trips {
            // the constraint column alone cannot regularize an interior row
            if t.val != 0.0 && Some(t.col) != multiplier {
                touched[t.row] = true;
            }
        }
        if let Some(li) = multiplier {
            touched[li] = true;
        }
        for (i, &seen) in touched.iter().enumerate() {
            if !seen {
                trips.push(Triplet::new(i, i, 1.0));
            }
        }
        match self.space.multiplier_index() {
            Some(li) => SparseLu::factor_bordered(n, &trips, li),
            None => SparseLu::factor(n, &trips),
        }
    }

    /// Total mass of the end trace over the endpoint geometry:
    /// ∫ u_B + w·∫ u_S with the configured surface mass weight.
    pub fn mass_at_end(&self, state: &[f64]) -> f64 {
        let sp = self.space;
        let mut mass = 0.0;
        for (d, &mv) in self.mass_vec_bulk.iter().enumerate() {
            mass += mv * (state[sp.bulk_index(d, 0)] + state[sp.bulk_index(d, 1)]);
        }
        for (d, &mv) in self.mass_vec_surf.iter().enumerate() {
            mass += self.coeffs.surf_mass_weight
                * mv
                * (state[sp.surface_index(d, 0)] + state[sp.surface_index(d, 1)]);
        }
        mass
    }

    /// Initial Newton guess: the previous trace held constant in time, with
    /// nearest-value extension onto freshly activated dofs, and λ = 0.
    pub fn initial_guess(&self) -> Vec<f64> {
        let sp = self.space;
        let mut state = vec![0.0; sp.size()];
        for d in 0..sp.n_bulk() {
            let v = sp.bulk_dofs.vertex(d);
            state[sp.bulk_index(d, 0)] =
                self.prev.value_at_vertex_or_nearest(self.mesh, Field::Bulk, v);
        }
        for d in 0..sp.n_surface() {
            let v = sp.surface_dofs.vertex(d);
            state[sp.surface_index(d, 0)] =
                self.prev.value_at_vertex_or_nearest(self.mesh, Field::Surface, v);
        }
        state
    }
}

/// Total surfactant mass of nodal fields over one geometry:
/// ∫_Ω₁ u_B + w·∫_Γ u_S.
pub fn mass_functional(
    geom: &CutGeometry,
    u_bulk: impl Fn(Vec2) -> f64,
    u_surf: impl Fn(Vec2) -> f64,
    surf_weight: f64,
) -> f64 {
    let mut mass = 0.0;
    for cells in geom.bulk_cells.iter() {
        for cell in cells {
            for (x, w) in triangle_rule(&cell.v, cell.area) {
                mass += w * u_bulk(x);
            }
        }
    }
    for seg in &geom.segments {
        for (x, w) in segment_rule(seg.a, seg.b) {
            mass += surf_weight * w * u_surf(x);
        }
    }
    mass
}

/// Total surfactant mass of a recorded trace over its own geometry.
pub fn mass_of_trace(trace: &TraceField, mesh: &BackgroundMesh, surf_weight: f64) -> f64 {
    let geom = &trace.geometry;
    let mut mass = 0.0;
    if !trace.bulk.is_empty() {
        for (el, cells) in geom.bulk_cells.iter().enumerate() {
            if cells.is_empty() {
                continue;
            }
            for cell in cells {
                for (x, w) in triangle_rule(&cell.v, cell.area) {
                    mass += w * trace.value_in_element(mesh, Field::Bulk, el, x);
                }
            }
        }
    }
    for seg in &geom.segments {
        for (x, w) in segment_rule(seg.a, seg.b) {
            mass += surf_weight * w * trace.value_in_element(mesh, Field::Surface, seg.coarse_tri, x);
        }
    }
    mass
}

/// Bulk form a_B(u, v) = (β·∇u, v) + (k∇u, ∇v) over Ω₁ for nodal fields.
pub fn bulk_form(
    geom: &CutGeometry,
    mesh: &BackgroundMesh,
    velocity: &VelocityField,
    t: f64,
    k_bulk: f64,
    u: &[f64],
    v: &[f64],
) -> f64 {
    let mut out = 0.0;
    for (el, cells) in geom.bulk_cells.iter().enumerate() {
        if cells.is_empty() {
            continue;
        }
        let verts = mesh.triangles[el];
        let grads = mesh.basis(el).grads;
        let grad_u: Vec2 = (0..3).fold(Vec2::ZERO, |g, i| g + grads[i] * u[verts[i]]);
        let grad_v: Vec2 = (0..3).fold(Vec2::ZERO, |g, i| g + grads[i] * v[verts[i]]);
        for cell in cells {
            for (x, w) in triangle_rule(&cell.v, cell.area) {
                let lam = mesh.barycentric(el, x);
                let v_val: f64 = (0..3).map(|i| lam[i] * v[verts[i]]).sum();
                let beta = velocity.at(t, x);
                out += w * (beta.dot(grad_u) * v_val + k_bulk * grad_u.dot(grad_v));
            }
        }
    }
    out
}

/// Surface form a_S(u, v) = (β·∇u, v) + ((div_Γ β)u, v) + (k∇_Γu, ∇_Γv)
/// over Γ for nodal fields.
pub fn surface_form(
    geom: &CutGeometry,
    mesh: &BackgroundMesh,
    velocity: &VelocityField,
    t: f64,
    k_surf: f64,
    u: &[f64],
    v: &[f64],
) -> f64 {
    let mut out = 0.0;
    for seg in &geom.segments {
        let el = seg.coarse_tri;
        let verts = mesh.triangles[el];
        let grads = mesh.basis(el).grads;
        let n = seg.normal;
        let grad_u: Vec2 = (0..3).fold(Vec2::ZERO, |g, i| g + grads[i] * u[verts[i]]);
        let grad_v: Vec2 = (0..3).fold(Vec2::ZERO, |g, i| g + grads[i] * v[verts[i]]);
        let tu = grad_u - n * n.dot(grad_u);
        let tv = grad_v - n * n.dot(grad_v);
        for (x, w) in segment_rule(seg.a, seg.b) {
            let lam = mesh.barycentric(el, x);
            let u_val: f64 = (0..3).map(|i| lam[i] * u[verts[i]]).sum();
            let v_val: f64 = (0..3).map(|i| lam[i] * v[verts[i]]).sum();
            let beta = velocity.at(t, x);
            let div_g = velocity.tangential_divergence(t, x, n);
            out += w * (beta.dot(grad_u) * v_val + div_g * u_val * v_val + k_surf * tu.dot(tv));
        }
    }
    out
}

/// Linear exchange form a_BS(u, v) = (b_B u_B − b_S u_S, b_B v_B − b_S v_S)
/// over Γ for nodal fields.
#[allow(clippy::too_many_arguments)]
pub fn coupling_form(
    geom: &CutGeometry,
    mesh: &BackgroundMesh,
    bulk_rate: f64,
    surf_rate: f64,
    u_bulk: &[f64],
    u_surf: &[f64],
    v_bulk: &[f64],
    v_surf: &[f64],
) -> f64 {
    let mut out = 0.0;
    for seg in &geom.segments {
        let el = seg.coarse_tri;
        let verts = mesh.triangles[el];
        for (x, w) in segment_rule(seg.a, seg.b) {
            let lam = mesh.barycentric(el, x);
            let ub: f64 = (0..3).map(|i| lam[i] * u_bulk[verts[i]]).sum();
            let us: f64 = (0..3).map(|i| lam[i] * u_surf[verts[i]]).sum();
            let vb: f64 = (0..3).map(|i| lam[i] * v_bulk[verts[i]]).sum();
            let vs: f64 = (0..3).map(|i| lam[i] * v_surf[verts[i]]).sum();
            out += w * (bulk_rate * ub - surf_rate * us) * (bulk_rate * vb - surf_rate * vs);
        }
    }
    out
}

/// Raw face-jump penalty Σ_F ([n·∇u], [n·∇v])_F for nodal fields, without
/// the τ and h scalings.
pub fn ghost_penalty_form(mesh: &BackgroundMesh, faces: &[usize], u: &[f64], v: &[f64]) -> f64 {
    let jumps = face_jumps(mesh, faces, |vertex| vertex);
    let mut out = 0.0;
    for fj in jumps {
        let ju: f64 = (0..4).map(|i| fj.g[i] * u[fj.dofs[i]]).sum();
        let jv: f64 = (0..4).map(|i| fj.g[i] * v[fj.dofs[i]]).sum();
        out += fj.len * ju * jv;
    }
    out
}
