//! Generated closed-form source terms for the rotating-circle benchmark
//! (offline computer-algebra derivation; do not edit by hand).

#![allow(unused_parens)]
#![allow(clippy::neg_multiply)]

use std::f64::consts::PI;

/// Bulk convection-diffusion residual of the exact bulk field.
pub(crate) fn bulk_source(t: f64, x: f64, y: f64) -> f64 {
    let x0 = (2.0 * PI * t);
    let x1 = (PI * x);
    let x2 = x1.cos();
    let x3 = (PI * y);
    let x4 = x3.cos();
    let x5 = x0.cos();
    (0.008 * PI * ((-100.0 * x2 * x4 * x0.sin()) + (PI * x2 * x4 * x5) + (-25.0 * PI * x2 * x5 * (-1.0 + (2.0 * x)) * x3.sin()) + (25.0 * PI * x4 * x5 * (-1.0 + (2.0 * y)) * x1.sin())))
}

/// Surface transport residual of the exact surface field, on the circle
/// at angle `theta` about the moving center, minus the exchange flux.
pub(crate) fn surface_source(t: f64, theta: f64) -> f64 {
    let x0 = (PI * t);
    let x1 = (2.0 * x0);
    let x2 = x1.cos();
    let x3 = theta.sin();
    let x4 = x0.cos();
    let x5 = (PI * (0.5 + (-0.28 * x4) + (0.17 * x3)));
    let x6 = x5.cos();
    let x7 = theta.cos();
    let x8 = x0.sin();
    let x9 = (PI * (0.5 + (0.28 * x8) + (0.17 * x7)));
    let x10 = x9.cos();
    let x11 = (x10 * x6);
    let x12 = (x11 * x2);
    let x13 = (4.0 * x12);
    let x14 = (15.0 + x13);
    let x15 = x14.powi(-1);
    let x16 = x5.sin();
    let x17 = (x10 * x16);
    let x18 = (x17 * x3);
    let x19 = x3.powi(2);
    let x20 = x7.powi(2);
    let x21 = (x19 + x20);
    let x22 = x21.sqrt().recip();
    let x23 = (PI * x22);
    let x24 = (x2 * x23);
    let x25 = x9.sin();
    let x26 = (x25 * x6);
    let x27 = (x26 * x7);
    let x28 = (125.0 + (100.0 * x12) + (x18 * x24) + (x24 * x27));
    let x29 = (x15 * x28);
    let x30 = x1.sin();
    let x31 = (PI * x11);
    let x32 = (1700.0 * x11);
    let x33 = (17.0 * x3);
    let x34 = (x23 * x30);
    let x35 = (17.0 * x7);
    let x36 = (14.0 * x24);
    let x37 = x21.powf(-1.5);
    let x38 = (14.0 * PI * x2 * x37 * ((x3 * x8) + (x4 * x7)));
    let x39 = (PI * x15);
    let x40 = (100.0 * x22);
    let x41 = (x16 * x25);
    let x42 = (x23 * x41);
    let x43 = (x22 * x31);
    let x44 = (100.0 * x37);
    let x45 = (x17 * x7);
    let x46 = (68.0 * x29);
    let x47 = PI.powi(2);
    let x48 = (17.0 * x15 * x2 * x47);
    let x49 = (x26 * x3);
    let x50 = (28900.0 * x31);
    let x51 = (x3 * x41 * x7);
    let x52 = (PI * x51);
    let x53 = (10000.0 * x22);
    let x54 = (x23 * x32);
    let x55 = (289.0 * x22 * x47);
    let x56 = (x49 + (-1.0 * x45));
    let x57 = (17.0 * x42);
    let x58 = (x2 * x39);
    let x59 = (136.0 * x58);
    let x60 = (17.0 * x31);
    (-0.5 + (-0.4 * x12) + (0.04 * x29) + (-0.004705882352941176 * x39 * ((x30 * x32) + (-1.0 * x18 * x38) + (-1.0 * x27 * x38) + (x17 * x33 * x34) + (x17 * x36 * x8) + (x26 * x34 * x35) + (x26 * x36 * x4))) + (0.004 * x29 * (5.0 + x13)) + (0.0001384083044982699 * x58 * ((-170000.0 * x18) + (-170000.0 * x27) + (57800.0 * x52) + (x18 * x53) + (x19 * x50) + (x20 * x50) + (x27 * x53) + (-1.0 * x19 * x54) + (-1.0 * x20 * x54) + (-1.0 * x46 * ((-100.0 * x18) + (-100.0 * x27) + (34.0 * x52) + (x19 * x60) + (x20 * x60) + (x59 * x56.powi(2)))) + (-10200.0 * x23 * x51) + (x17 * x55 * x3.powi(3)) + (x26 * x55 * x7.powi(3)) + (x56 * x59 * ((-1700.0 * x45) + (1700.0 * x49) + (x19 * x57) + (x40 * x45) + (-1.0 * x20 * x57) + (-1.0 * x40 * x49))) + (-1.0 * x18 * x20 * x55) + (-1.0 * x19 * x27 * x55))) + (-1.384083044982699e-06 * x48 * (x35 + (28.0 * x8)) * ((1700.0 * x17) + (x35 * x42) + (-1.0 * x17 * x40) + (-1.0 * x17 * x46) + (-1.0 * x33 * x43) + (x17 * x19 * x44) + (x44 * x49 * x7))) + (1.384083044982699e-06 * x48 * (x33 + (-28.0 * x4)) * ((1700.0 * x26) + (x33 * x42) + (-1.0 * x26 * x40) + (-1.0 * x26 * x46) + (-1.0 * x35 * x43) + (x20 * x26 * x44) + (x3 * x44 * x45))) + (0.32 * x28 * x30 * x31 * x14.powi(-2)))
}
