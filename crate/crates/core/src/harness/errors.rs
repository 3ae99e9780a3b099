//! Error norms at a fixed evaluation time.
//!
//! Against an exact solution the integrand is evaluated directly at the
//! fine run's quadrature points. Between two refinement levels the coarser
//! solution is evaluated at the fine quadrature points, mapping surface
//! points (and bulk points that fall outside the coarse bulk domain) to the
//! closest point on the coarser discrete interface.

use crate::cutgeom::InterfaceSegment;
use crate::error::{Error, Result};
use crate::quadrature::{segment_rule, triangle_rule};
use crate::slabspace::Field;
use crate::vec2::Vec2;

use super::SolutionSnapshot;

/// L2 and L1 errors of both fields over the fine Ω₁ and Γ.
#[derive(Clone, Copy, Debug, Default)]
pub struct ErrorNorms {
    pub l2_bulk: f64,
    pub l1_bulk: f64,
    pub l2_surf: f64,
    pub l1_surf: f64,
}

/// One row of a convergence table.
#[derive(Clone, Copy, Debug)]
pub struct ErrorRow {
    pub h: f64,
    pub k: f64,
    pub norms: ErrorNorms,
    pub order_l2_bulk: Option<f64>,
    pub order_l1_bulk: Option<f64>,
    pub order_l2_surf: Option<f64>,
    pub order_l1_surf: Option<f64>,
}

/// What the fine solution is compared against.
pub enum Reference<'a> {
    Exact {
        bulk: &'a dyn Fn(f64, Vec2) -> f64,
        surface: &'a dyn Fn(f64, Vec2) -> f64,
    },
    Coarser(&'a SolutionSnapshot),
}

/// Closest point on a set of segments, with the segment index.
pub fn closest_point_on_interface(segments: &[InterfaceSegment], p: Vec2) -> (Vec2, usize) {
    let mut best = (f64::MAX, Vec2::ZERO, 0usize);
    for (i, s) in segments.iter().enumerate() {
        let d = s.b - s.a;
        let len2 = d.norm_squared();
        let t = if len2 > 0.0 { ((p - s.a).dot(d) / len2).clamp(0.0, 1.0) } else { 0.0 };
        let q = s.a + d * t;
        let dist = (p - q).norm_squared();
        if dist < best.0 {
            best = (dist, q, i);
        }
    }
    (best.1, best.2)
}

fn eval_coarse_bulk(snap: &SolutionSnapshot, p: Vec2) -> f64 {
    if let Ok((el, _)) = snap.mesh.locate_point(p) {
        if snap.trace.active_bulk.get(el).copied().unwrap_or(false) {
            let inside = snap.levelset.value_at(p).map_or(true, |rho| rho >= 0.0);
            if inside {
                return snap.trace.value_in_element(&snap.mesh, Field::Bulk, el, p);
            }
        }
    }
    let (q, seg) = closest_point_on_interface(&snap.trace.geometry.segments, p);
    let el = snap.trace.geometry.segments[seg].coarse_tri;
    snap.trace.value_in_element(&snap.mesh, Field::Bulk, el, q)
}

fn eval_coarse_surface(snap: &SolutionSnapshot, p: Vec2) -> f64 {
    let (q, seg) = closest_point_on_interface(&snap.trace.geometry.segments, p);
    let el = snap.trace.geometry.segments[seg].coarse_tri;
    snap.trace.value_in_element(&snap.mesh, Field::Surface, el, q)
}

/// Error norms of a fine snapshot against a reference at the same time.
pub fn compute_errors(fine: &SolutionSnapshot, reference: &Reference) -> Result<ErrorNorms> {
    if let Reference::Coarser(c) = reference {
        if (c.time - fine.time).abs() > 1e-9 * fine.time.max(1.0) {
            return Err(Error::Config(format!(
                "snapshots at different times: {} vs {}",
                c.time, fine.time
            )));
        }
    }
    let t = fine.time;
    let mesh = &fine.mesh;
    let geom = &fine.trace.geometry;
    let mut n = ErrorNorms::default();

    if !fine.trace.bulk.is_empty() {
        for (el, cells) in geom.bulk_cells.iter().enumerate() {
            if cells.is_empty() {
                continue;
            }
            for cell in cells {
                for (x, w) in triangle_rule(&cell.v, cell.area) {
                    let mine = fine.trace.value_in_element(mesh, Field::Bulk, el, x);
                    let other = match reference {
                        Reference::Exact { bulk, .. } => bulk(t, x),
                        Reference::Coarser(c) => eval_coarse_bulk(c, x),
                    };
                    let d = mine - other;
                    n.l2_bulk += w * d * d;
                    n.l1_bulk += w * d.abs();
                }
            }
        }
    }
    for seg in &geom.segments {
        for (x, w) in segment_rule(seg.a, seg.b) {
            let mine = fine.trace.value_in_element(mesh, Field::Surface, seg.coarse_tri, x);
            let other = match reference {
                Reference::Exact { surface, .. } => surface(t, x),
                Reference::Coarser(c) => eval_coarse_surface(c, x),
            };
            let d = mine - other;
            n.l2_surf += w * d * d;
            n.l1_surf += w * d.abs();
        }
    }
    n.l2_bulk = n.l2_bulk.sqrt();
    n.l2_surf = n.l2_surf.sqrt();
    Ok(n)
}

/// Builds convergence-table rows from per-level norms, attaching observed
/// orders log2(e_prev/e_this) between consecutive rows.
pub fn convergence_rows(levels: &[(f64, f64, ErrorNorms)]) -> Vec<ErrorRow> {
    let order = |prev: f64, cur: f64| {
        (prev > 0.0 && cur > 0.0).then(|| (prev / cur).log2())
    };
    levels
        .iter()
        .enumerate()
        .map(|(i, &(h, k, norms))| {
            let prev = (i > 0).then(|| levels[i - 1].2);
            ErrorRow {
                h,
                k,
                norms,
                order_l2_bulk: prev.and_then(|p| order(p.l2_bulk, norms.l2_bulk)),
                order_l1_bulk: prev.and_then(|p| order(p.l1_bulk, norms.l1_bulk)),
                order_l2_surf: prev.and_then(|p| order(p.l2_surf, norms.l2_surf)),
                order_l1_surf: prev.and_then(|p| order(p.l1_surf, norms.l1_surf)),
            }
        })
        .collect()
}
