//! Fast cross-module oracle checks: independent routes (analytic geometry,
//! finite differences, brute-force enumeration) validating the discrete
//! operators. The whole file runs in seconds.

use std::f64::consts::PI;
use std::sync::Arc;

use bulksurf::cutgeom::{build_slab_sets, CutGeometry};
use bulksurf::forms::{
    ghost_penalty_form, time_quadrature, CouplingModel, ProblemCoefficients, SlabAssembler,
    Stabilization, TimeRule,
};
use bulksurf::levelset::{streamline_diffusion_parameter, LevelSetField, VelocityField};
use bulksurf::mesh::{BackgroundMesh, DiagonalRule, Rect};
use bulksurf::slabspace::{SlabSpace, TraceField};
use bulksurf::solver::{newton_solve, NewtonConfig, SparseLu, Triplet};
use bulksurf::Vec2;

use rand::Rng;
use rand::SeedableRng;

fn unit_mesh(n: usize) -> Arc<BackgroundMesh> {
    Arc::new(
        BackgroundMesh::uniform(Rect::new(0.0, 1.0, 0.0, 1.0), n, n, DiagonalRule::Uniform)
            .unwrap(),
    )
}

fn circle_geometry(n: usize, c: Vec2, r: f64) -> (Arc<BackgroundMesh>, Arc<CutGeometry>) {
    let coarse = unit_mesh(n);
    let fine = Arc::new(coarse.refine_uniform().unwrap());
    let ls = LevelSetField::circle(fine, c, r, 0.0).unwrap();
    let geom = Arc::new(CutGeometry::build(&ls, &coarse).unwrap());
    (coarse, geom)
}

#[test]
fn discrete_circle_geometry_converges_at_second_order() {
    let c = Vec2::new(0.53, 0.48);
    let r = 0.28;
    let mut perim_err = Vec::new();
    let mut area_err = Vec::new();
    for n in [10, 20, 40, 80] {
        let (_, geom) = circle_geometry(n, c, r);
        perim_err.push((geom.interface_length() - 2.0 * PI * r).abs());
        area_err.push((geom.exterior_area - PI * r * r).abs());
    }
    let slope = |e: &[f64]| (e[0] / e[e.len() - 1]).ln() / ((e.len() - 1) as f64 * 2f64.ln());
    assert!(
        (1.8..=2.2).contains(&slope(&perim_err)),
        "perimeter slope {} from {perim_err:?}",
        slope(&perim_err)
    );
    assert!(
        (1.8..=2.2).contains(&slope(&area_err)),
        "area slope {} from {area_err:?}",
        slope(&area_err)
    );
}

struct SlabFixture {
    mesh: Arc<BackgroundMesh>,
    geoms: Vec<Arc<CutGeometry>>,
    sets: bulksurf::cutgeom::SlabSets,
    space: SlabSpace,
    prev: TraceField,
    velocity: VelocityField,
}

fn rotating_fixture(n: usize, rule: TimeRule, interval: (f64, f64), multiplier: bool) -> SlabFixture {
    let coarse = unit_mesh(n);
    let fine = Arc::new(coarse.refine_uniform().unwrap());
    let center =
        |t: f64| Vec2::new(0.5 + 0.28 * (PI * t).sin(), 0.5 - 0.28 * (PI * t).cos());
    let quad = time_quadrature(rule, interval);
    let geoms: Vec<Arc<CutGeometry>> = quad
        .times
        .iter()
        .map(|&t| {
            let ls = LevelSetField::circle(fine.clone(), center(t), 0.17, t).unwrap();
            Arc::new(CutGeometry::build(&ls, &coarse).unwrap())
        })
        .collect();
    let refs: Vec<&CutGeometry> = geoms.iter().map(|g| g.as_ref()).collect();
    let sets = build_slab_sets(&refs, &coarse).unwrap();
    let space = SlabSpace::build(&sets, &coarse, interval, true, multiplier).unwrap();
    let prev = TraceField::from_initial(
        &coarse,
        geoms[0].clone(),
        |p| 0.45 + 0.1 * p.x,
        |p| 0.3 - 0.05 * p.y,
        true,
    );
    let velocity = VelocityField::new(
        |_, p| Vec2::new(PI * (0.5 - p.y), PI * (p.x - 0.5)),
        |_, _| [[0.0, -PI], [PI, 0.0]],
        true,
    );
    SlabFixture { mesh: coarse, geoms, sets, space, prev, velocity }
}

fn triplet_matvec(trips: &[Triplet], x: &[f64], n: usize) -> Vec<f64> {
    let mut y = vec![0.0; n];
    for t in trips {
        y[t.row] += t.val * x[t.col];
    }
    y
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn jacobian_finite_difference_check_for_all_coupling_models() {
    let models = [
        CouplingModel::langmuir_rates(1.0, 1.0, 1.0),
        CouplingModel::henry(0.8, 1.2),
        CouplingModel::frumkin(0.9, 1.1, 0.7, 0.6),
    ];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    for model in models {
        let f = rotating_fixture(8, TimeRule::Simpson, (0.0, 0.04), true);
        let coeffs = ProblemCoefficients::dimensional(model, 0.01, 1.0).unwrap();
        let asm = SlabAssembler::new(
            &f.mesh,
            &f.space,
            &f.sets,
            &f.geoms,
            TimeRule::Simpson,
            &f.velocity,
            &coeffs,
            &f.prev,
            None,
            Stabilization { tau_bulk: 1e-2, tau_surf: 1e-2, h: f.mesh.h },
            Some(0.8),
        )
        .unwrap();
        let nn = f.space.size();
        let u: Vec<f64> = (0..nn).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let w: Vec<f64> = (0..nn).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let f0 = asm.residual(&u);
        let dfw = triplet_matvec(&asm.jacobian_triplets(&u), &w, nn);
        let mut errs = Vec::new();
        for eps in [1e-3, 1e-4, 1e-5] {
            let up: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a + eps * b).collect();
            let fd: Vec<f64> =
                asm.residual(&up).iter().zip(&f0).map(|(a, b)| (a - b) / eps).collect();
            errs.push(norm(&fd.iter().zip(&dfw).map(|(a, b)| a - b).collect::<Vec<_>>()));
        }
        let scale = norm(&dfw).max(1.0);
        let affine_exact = errs.iter().all(|e| *e <= 1e-9 * scale);
        assert!(
            affine_exact || (errs[1] <= errs[0] / 5.0 && errs[2] <= errs[1] / 5.0),
            "{model:?}: fd errors {errs:?}"
        );
    }
}

#[test]
fn henry_model_converges_in_one_newton_iteration() {
    let f = rotating_fixture(10, TimeRule::Simpson, (0.0, 0.05), true);
    let coeffs =
        ProblemCoefficients::dimensional(CouplingModel::henry(1.0, 1.0), 0.01, 1.0).unwrap();
    let target = bulksurf::forms::mass_of_trace(&f.prev, &f.mesh, 1.0);
    let asm = SlabAssembler::new(
        &f.mesh,
        &f.space,
        &f.sets,
        &f.geoms,
        TimeRule::Simpson,
        &f.velocity,
        &coeffs,
        &f.prev,
        None,
        Stabilization { tau_bulk: 1e-2, tau_surf: 1e-2, h: f.mesh.h },
        Some(target),
    )
    .unwrap();
    let out = newton_solve(
        |u| asm.residual(u),
        |u| asm.jacobian(u),
        asm.initial_guess(),
        &NewtonConfig::default(),
    )
    .unwrap();
    assert_eq!(out.iterations, 1, "affine problem must converge in one iteration");
}

#[test]
fn ghost_penalty_vanishes_on_linear_fields_and_is_nonnegative() {
    let f = rotating_fixture(10, TimeRule::Trapezoid, (0.0, 0.05), false);
    let linear: Vec<f64> =
        f.mesh.vertices.iter().map(|v| 1.7 * v.x - 0.4 * v.y + 0.2).collect();
    for faces in [&f.sets.faces_bulk, &f.sets.faces_surface] {
        let j = ghost_penalty_form(&f.mesh, faces, &linear, &linear);
        assert!(j.abs() < 1e-24, "penalty on a linear field: {j}");
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1000 {
        let u: Vec<f64> = (0..f.mesh.n_vertices()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let j = ghost_penalty_form(&f.mesh, &f.sets.faces_bulk, &u, &u);
        assert!(j >= 0.0);
    }
}

#[test]
fn partition_of_areas_for_random_interfaces() {
    let coarse = unit_mesh(16);
    let fine = Arc::new(coarse.refine_uniform().unwrap());
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2025);
    for _ in 0..100 {
        let c = Vec2::new(rng.gen_range(0.3..0.7), rng.gen_range(0.3..0.7));
        let r = rng.gen_range(0.08..0.27);
        let ls = LevelSetField::circle(fine.clone(), c, r, 0.0).unwrap();
        let geom = CutGeometry::build(&ls, &coarse).unwrap();
        let total = geom.bulk_area() + geom.exterior_area;
        assert!((total - 1.0).abs() < 1e-10, "partition off by {}", total - 1.0);
    }
}

#[test]
fn closed_forms_of_stabilization_parameter_and_simpson_weights() {
    for (k, b, h) in [(0.01, 0.0, 0.1), (0.02, 1.3, 0.05), (0.4, 7.0, 0.25)] {
        let tau = streamline_diffusion_parameter(k, b, h);
        let expect = 2.0 / (1.0 / (k * k) + b * b / (h * h)).sqrt();
        assert!((tau - expect).abs() <= 1e-15 * expect);
    }
    let q = time_quadrature(TimeRule::Simpson, (0.3, 0.3 + 0.12));
    assert_eq!(q.times.len(), 3);
    assert!((q.weights[0] - 0.12 / 6.0).abs() < 1e-16);
    assert!((q.weights[1] - 0.48 / 6.0).abs() < 1e-16);
    assert!((q.weights[2] - 0.12 / 6.0).abs() < 1e-16);
    assert!((q.times[1] - 0.36).abs() < 1e-15);
}

#[test]
fn small_slab_condition_estimate_matches_dense_cross_check() {
    // stationary interface on a coarse mesh: Hager estimate within a small
    // factor of the exact 1-norm condition number
    let f = rotating_fixture(10, TimeRule::Trapezoid, (0.0, 0.05), false);
    let coeffs =
        ProblemCoefficients::dimensional(CouplingModel::henry(1.0, 1.0), 0.01, 1.0).unwrap();
    let asm = SlabAssembler::new(
        &f.mesh,
        &f.space,
        &f.sets,
        &f.geoms,
        TimeRule::Trapezoid,
        &f.velocity,
        &coeffs,
        &f.prev,
        None,
        Stabilization { tau_bulk: 1e-2, tau_surf: 1e-2, h: f.mesh.h },
        None,
    )
    .unwrap();
    let state = vec![0.0; f.space.size()];
    let lu = asm.jacobian(&state).unwrap();
    assert!(lu.dimension() < 2000, "meant as a dense-checkable case");
    let exact = lu.one_norm() * lu.exact_inverse_one_norm();
    let est = lu.condition_estimate();
    assert!(est <= exact * 1.0001);
    assert!(est >= exact / 3.0, "estimate {est} vs exact {exact}");
}

#[test]
fn identity_matrix_norm_helpers() {
    let trips: Vec<Triplet> = (0..5).map(|i| Triplet::new(i, i, 1.0)).collect();
    let lu = SparseLu::factor(5, &trips).unwrap();
    assert!((lu.condition_estimate() - 1.0).abs() < 1e-12);
}
