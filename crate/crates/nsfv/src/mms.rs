//! Manufactured steady solution and its analytic forcing.
//!
//! The target fields on the unit torus (2D) are
//!
//! ```text
//! rho   = 2 + 0.1 sin(2 pi x) sin(2 pi y)
//! u     = (0.1 sin(2 pi y), 0.1 sin(2 pi x))        (divergence free)
//! theta = 1 + 0.1 cos(2 pi x)
//! ```
//!
//! and the forcing triple makes them an exact steady solution of the
//! governing system. The closed forms below were derived symbolically
//! offline (`tools/derive_mms_forcing.py`) and are evaluated directly; the
//! unit tests check them against finite differences of the analytic flux
//! divergences, so the algebra cannot silently drift from the equations.
//!
//! The same fields double as the generic smooth initial data for unforced
//! runs (with a `sin(2 pi z)` factor on the density perturbation and a
//! rotated velocity pattern in 3D).

use crate::thermo::GasParams;
use std::f64::consts::PI;

/// Density of the manufactured solution.
pub fn rho(x: &[f64]) -> f64 {
    2.0 + 0.1 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin()
}

/// Velocity component `j` of the manufactured solution.
pub fn velocity(x: &[f64], j: usize) -> f64 {
    match j {
        0 => 0.1 * (2.0 * PI * x[1]).sin(),
        1 => 0.1 * (2.0 * PI * x[0]).sin(),
        _ => 0.0,
    }
}

/// Temperature of the manufactured solution.
pub fn theta(x: &[f64]) -> f64 {
    1.0 + 0.1 * (2.0 * PI * x[0]).cos()
}

/// Mass forcing `div(rho u)`.
pub fn g_rho(x: &[f64]) -> f64 {
    let (s2x, c2x) = (2.0 * PI * x[0]).sin_cos();
    let (s2y, c2y) = (2.0 * PI * x[1]).sin_cos();
    let u1 = 0.1 * s2y;
    let u2 = 0.1 * s2x;
    let drho_dx = 0.2 * PI * c2x * s2y;
    let drho_dy = 0.2 * PI * s2x * c2y;
    u1 * drho_dx + u2 * drho_dy
}

/// Momentum forcing `div(rho u x u) + grad p - div S`, component `j`.
/// The velocity is divergence free, so the bulk-viscosity part drops out.
pub fn g_momentum(gas: &GasParams, x: &[f64], j: usize) -> f64 {
    let (s2x, c2x) = (2.0 * PI * x[0]).sin_cos();
    let (s2y, c2y) = (2.0 * PI * x[1]).sin_cos();
    let rho_v = 2.0 + 0.1 * s2x * s2y;
    let theta_v = 1.0 + 0.1 * c2x;
    let u1 = 0.1 * s2y;
    let u2 = 0.1 * s2x;
    let drho_dx = 0.2 * PI * c2x * s2y;
    let drho_dy = 0.2 * PI * s2x * c2y;
    let dtheta_dx = -0.2 * PI * s2x;
    let du1_dy = 0.2 * PI * c2y;
    let du2_dx = 0.2 * PI * c2x;
    let g_rho_v = u1 * drho_dx + u2 * drho_dy;
    match j {
        0 => {
            let lap_u1 = -0.4 * PI * PI * s2y;
            let dp_dx = theta_v * drho_dx + rho_v * dtheta_dx;
            u1 * g_rho_v + rho_v * u2 * du1_dy + dp_dx - gas.mu * lap_u1
        }
        1 => {
            let lap_u2 = -0.4 * PI * PI * s2x;
            let dp_dy = theta_v * drho_dy;
            u2 * g_rho_v + rho_v * u1 * du2_dx + dp_dy - gas.mu * lap_u2
        }
        _ => 0.0,
    }
}

/// Internal-energy forcing
/// `c_v div(rho theta u) - kappa lap theta - (2 mu |D(u)|^2 + lambda |div u|^2 - p div u)`.
pub fn g_energy(gas: &GasParams, x: &[f64]) -> f64 {
    let (s2x, c2x) = (2.0 * PI * x[0]).sin_cos();
    let (s2y, c2y) = (2.0 * PI * x[1]).sin_cos();
    let rho_v = 2.0 + 0.1 * s2x * s2y;
    let theta_v = 1.0 + 0.1 * c2x;
    let u1 = 0.1 * s2y;
    let dtheta_dx = -0.2 * PI * s2x;
    let lap_theta = -0.4 * PI * PI * c2x;
    let g_rho_v = g_rho(x);
    let du1_dy = 0.2 * PI * c2y;
    let du2_dx = 0.2 * PI * c2x;
    let d12 = 0.5 * (du1_dy + du2_dx);
    let dissipation = 2.0 * gas.mu * (2.0 * d12 * d12);
    gas.c_v * (theta_v * g_rho_v + rho_v * u1 * dtheta_dx) - gas.kappa * lap_theta - dissipation
}

/// Smooth positive initial data for unforced runs; coincides with the
/// manufactured fields in 2D.
pub fn smooth_rho(dim: usize, x: &[f64]) -> f64 {
    let mut perturbation = 0.1 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin();
    if dim == 3 {
        perturbation *= (2.0 * PI * x[2]).sin();
    }
    2.0 + perturbation
}

pub fn smooth_velocity(dim: usize, x: &[f64], j: usize) -> f64 {
    if dim == 2 {
        velocity(x, j)
    } else {
        // Rotate through the axes so every component is active.
        0.1 * (2.0 * PI * x[(j + 1) % 3]).sin()
    }
}

pub fn smooth_theta(_dim: usize, x: &[f64]) -> f64 {
    theta(x)
}
