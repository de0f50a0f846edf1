//! Upwind and diffusive numerical fluxes.
//!
//! The upwind flux takes the donor-cell value according to the sign of the
//! face-normal average velocity; the diffusive flux subtracts `h^eps` times
//! the jump, which acts as an artificial diffusion of order `h^(eps + 1)` in
//! the assembled scheme. The exponent is restricted to `0 < eps < 1`.

use std::fmt;

/// Invalid diffusion exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct BadEpsilon(pub f64);

impl fmt::Display for BadEpsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epsilon must lie in (0,1), got {}", self.0)
    }
}

impl std::error::Error for BadEpsilon {}

/// Diffusion exponent and mesh size with the cached factor `h^eps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxParams {
    pub epsilon: f64,
    pub h: f64,
    h_eps: f64,
}

impl FluxParams {
    pub fn new(epsilon: f64, h: f64) -> Result<Self, BadEpsilon> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(BadEpsilon(epsilon));
        }
        Ok(FluxParams {
            epsilon,
            h,
            h_eps: h.powf(epsilon),
        })
    }

    /// The artificial diffusion coefficient `h^eps`.
    #[inline]
    pub fn h_eps(&self) -> f64 {
        self.h_eps
    }
}

/// Positive part `(f + |f|) / 2`.
#[inline]
pub fn pos_part(f: f64) -> f64 {
    0.5 * (f + f.abs())
}

/// Negative part `(f - |f|) / 2`.
#[inline]
pub fn neg_part(f: f64) -> f64 {
    0.5 * (f - f.abs())
}

/// Upwind flux `r_in [ubar_n]^+ + r_out [ubar_n]^-` for the oriented trace
/// pair `(r_in, r_out)` and face-normal average velocity `ubar_n`.
/// Both brackets vanish at `ubar_n = 0`.
#[inline]
pub fn upwind(r_in: f64, r_out: f64, ubar_n: f64) -> f64 {
    r_in * pos_part(ubar_n) + r_out * neg_part(ubar_n)
}

/// Diffusive upwind flux `upwind - h^eps (r_out - r_in)`.
#[inline]
pub fn diffusive_flux(r_in: f64, r_out: f64, ubar_n: f64, params: &FluxParams) -> f64 {
    upwind(r_in, r_out, ubar_n) - params.h_eps * (r_out - r_in)
}

/// Componentwise diffusive flux of a vector quantity (used with the
/// momentum components `r = rho u`). `out` receives one flux per component.
pub fn vector_flux(r_in: &[f64], r_out: &[f64], ubar_n: f64, params: &FluxParams, out: &mut [f64]) {
    debug_assert_eq!(r_in.len(), r_out.len());
    debug_assert_eq!(r_in.len(), out.len());
    for ((o, &a), &b) in out.iter_mut().zip(r_in).zip(r_out) {
        *o = diffusive_flux(a, b, ubar_n, params);
    }
}
