//! Spatial quadrature rules for cut cells and interface segments.
//!
//! All spatial integrands are products of piecewise-linear functions (degree
//! ≤ 2 in space), so an order-2 triangle rule and a 2-point Gauss segment
//! rule integrate them exactly.

use crate::vec2::Vec2;

/// Order-2 rule on a triangle: the three edge midpoints, each with weight
/// area/3. Exact for quadratics.
pub fn triangle_rule(v: &[Vec2; 3], area: f64) -> [(Vec2, f64); 3] {
    let w = area / 3.0;
    [
        ((v[0] + v[1]) * 0.5, w),
        ((v[1] + v[2]) * 0.5, w),
        ((v[2] + v[0]) * 0.5, w),
    ]
}

/// 2-point Gauss rule on a segment. Exact for cubics along the segment.
pub fn segment_rule(a: Vec2, b: Vec2) -> [(Vec2, f64); 2] {
    let mid = (a + b) * 0.5;
    let half = (b - a) * 0.5;
    let g = 1.0 / 3.0_f64.sqrt();
    let len = (b - a).norm();
    [(mid - half * g, 0.5 * len), (mid + half * g, 0.5 * len)]
}
