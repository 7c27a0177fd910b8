//! Closed-form gate matrices and their θ-derivatives.
//!
//! With δ = cos(θ/2) and γ = sin(θ/2):
//! RX = [[δ, -iγ], [-iγ, δ]], RY = [[δ, -γ], [γ, δ]],
//! XX has δ on the diagonal and -iγ on the anti-diagonal,
//! CRX = DIAG(I₂, RX(θ)) with the first qubit of the pair as control.

use num_complex::Complex64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn ci(im: f64) -> Complex64 {
    Complex64::new(0.0, im)
}

pub fn rx_matrix(theta: f64) -> [Complex64; 4] {
    let (d, g) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    [c(d), ci(-g), ci(-g), c(d)]
}

pub fn ry_matrix(theta: f64) -> [Complex64; 4] {
    let (d, g) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    [c(d), c(-g), c(g), c(d)]
}

pub fn xx_matrix(theta: f64) -> [Complex64; 16] {
    let (d, g) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    [
        c(d),   ZERO,   ZERO,   ci(-g),
        ZERO,   c(d),   ci(-g), ZERO,
        ZERO,   ci(-g), c(d),   ZERO,
        ci(-g), ZERO,   ZERO,   c(d),
    ]
}

pub fn crx_matrix(theta: f64) -> [Complex64; 16] {
    let (d, g) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    [
        c(1.0), ZERO,   ZERO,   ZERO,
        ZERO,   c(1.0), ZERO,   ZERO,
        ZERO,   ZERO,   c(d),   ci(-g),
        ZERO,   ZERO,   ci(-g), c(d),
    ]
}

pub(crate) fn rx_deriv(theta: f64) -> [Complex64; 4] {
    let (d, g) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    [c(-g / 2.0), ci(-d / 2.0), ci(-d / 2.0), c(-g / 2.0)]
}

pub(crate) fn ry_deriv(theta: f64) -> [Complex64; 4] {
    let (d, g) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    [c(-g / 2.0), c(-d / 2.0), c(d / 2.0), c(-g / 2.0)]
}

pub(crate) fn xx_deriv(theta: f64) -> [Complex64; 16] {
    let (d, g) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let (dd, dg) = (-g / 2.0, -d / 2.0);
    [
        c(dd),  ZERO,   ZERO,   ci(dg),
        ZERO,   c(dd),  ci(dg), ZERO,
        ZERO,   ci(dg), c(dd),  ZERO,
        ci(dg), ZERO,   ZERO,   c(dd),
    ]
}

pub(crate) fn crx_deriv(theta: f64) -> [Complex64; 16] {
    let (d, g) = ((theta / 2.0).cos(), (theta / 2.0).sin());
    let (dd, dg) = (-g / 2.0, -d / 2.0);
    [
        ZERO, ZERO, ZERO,   ZERO,
        ZERO, ZERO, ZERO,   ZERO,
        ZERO, ZERO, c(dd),  ci(dg),
        ZERO, ZERO, ci(dg), c(dd),
    ]
}
