//! Perfect-gas constitutive laws and the entropy calculus.
//!
//! The gas law is `p = rho * theta`, internal energy `e = c_v * theta`,
//! specific entropy `s = c_v log(theta) - log(rho)`. The map
//! `(rho, p) -> -rho s(rho, p)` is convex with partials `c_v + 1 - s` and
//! `-c_v / theta`; those two fields drive the entropy-production terms.
//!
//! Mean-value remainders in the stability identities are evaluated as exact
//! second-order Taylor (Bregman) remainders `B(a) - B(b) - B'(b)(a - b)`,
//! which makes the discrete entropy budget close to machine precision instead
//! of depending on non-constructive intermediate points.

use std::fmt;

/// Positivity violation in a thermodynamic evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct NonPositive {
    pub what: &'static str,
    pub value: f64,
}

impl fmt::Display for NonPositive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} must be positive, got {}", self.what, self.value)
    }
}

impl std::error::Error for NonPositive {}

fn require_positive(what: &'static str, value: f64) -> Result<(), NonPositive> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(NonPositive { what, value })
    }
}

/// Material parameters of the gas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GasParams {
    /// Specific heat at constant volume.
    pub c_v: f64,
    /// Shear viscosity.
    pub mu: f64,
    /// Bulk-type viscosity coefficient.
    pub lambda: f64,
    /// Heat conductivity.
    pub kappa: f64,
}

impl GasParams {
    pub fn new(c_v: f64, mu: f64, lambda: f64, kappa: f64) -> Result<Self, NonPositive> {
        require_positive("c_v", c_v)?;
        require_positive("mu", mu)?;
        require_positive("kappa", kappa)?;
        if !(lambda >= 0.0) {
            return Err(NonPositive {
                what: "lambda (>= 0)",
                value: lambda,
            });
        }
        Ok(GasParams {
            c_v,
            mu,
            lambda,
            kappa,
        })
    }

    /// Adiabatic exponent, always derived: `gamma = 1/c_v + 1`.
    pub fn gamma(&self) -> f64 {
        1.0 / self.c_v + 1.0
    }
}

impl Default for GasParams {
    fn default() -> Self {
        GasParams {
            c_v: 1.5,
            mu: 0.01,
            lambda: 0.0,
            kappa: 0.01,
        }
    }
}

/// Gas pressure `p = rho * theta`.
pub fn pressure(rho: f64, theta: f64) -> Result<f64, NonPositive> {
    require_positive("rho", rho)?;
    require_positive("theta", theta)?;
    Ok(rho * theta)
}

/// Specific entropy `s = c_v log(theta) - log(rho)`.
pub fn entropy(c_v: f64, rho: f64, theta: f64) -> Result<f64, NonPositive> {
    require_positive("rho", rho)?;
    require_positive("theta", theta)?;
    Ok(c_v * theta.ln() - rho.ln())
}

/// Entropy in `(rho, p)` variables: `s = log(p / rho^gamma) / (gamma - 1)`.
pub fn entropy_rho_p(c_v: f64, rho: f64, p: f64) -> Result<f64, NonPositive> {
    require_positive("rho", rho)?;
    require_positive("p", p)?;
    let gamma = 1.0 / c_v + 1.0;
    Ok((p / rho.powf(gamma)).ln() / (gamma - 1.0))
}

/// Partials of `-rho s` in the `(rho, p)` variables:
/// `(c_v + 1 - s, -c_v / theta)`.
pub fn neg_rho_s_derivatives(c_v: f64, rho: f64, theta: f64) -> Result<(f64, f64), NonPositive> {
    let s = entropy(c_v, rho, theta)?;
    Ok((c_v + 1.0 - s, -c_v / theta))
}

/// Convex/concave weight functions whose Bregman remainders appear in the
/// renormalized equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BregmanKind {
    /// `B(x) = x log x` (convex; remainder >= 0).
    RhoLogRho,
    /// `chi(x) = log x` (concave; remainder <= 0).
    LogTheta,
}

/// Exact second-order Taylor remainder `B(a) - B(b) - B'(b)(a - b)` around
/// the expansion point `b`.
pub fn bregman_remainder(kind: BregmanKind, a: f64, b: f64) -> Result<f64, NonPositive> {
    require_positive("a", a)?;
    require_positive("b", b)?;
    Ok(match kind {
        BregmanKind::RhoLogRho => a * a.ln() - b * b.ln() - (b.ln() + 1.0) * (a - b),
        BregmanKind::LogTheta => a.ln() - b.ln() - (a - b) / b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pressure_values_and_positivity() {
        assert_eq!(pressure(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(pressure(2.0, 3.0).unwrap(), 6.0);
        assert!(pressure(2.0, 0.0).is_err());
        assert!(pressure(-1.0, 1.0).is_err());
    }

    #[test]
    fn entropy_values() {
        assert_eq!(entropy(1.5, 1.0, 1.0).unwrap(), 0.0);
        let s = entropy(1.5, 2.0, 1.0).unwrap();
        assert!((s - (-std::f64::consts::LN_2)).abs() < 1e-15);
        assert!(entropy(1.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn gamma_is_derived() {
        let g = GasParams::new(1.5, 0.01, 0.0, 0.01).unwrap();
        assert!((g.gamma() - (1.0 / 1.5 + 1.0)).abs() < 1e-15);
        assert!(GasParams::new(1.5, 0.01, -0.1, 0.01).is_err());
        assert!(GasParams::new(0.0, 0.01, 0.0, 0.01).is_err());
    }

    #[test]
    fn derivative_pair_at_reference_point() {
        let c_v = 1.5;
        let (drho, dp) = neg_rho_s_derivatives(c_v, 1.0, 1.0).unwrap();
        assert!((drho - (c_v + 1.0)).abs() < 1e-15);
        assert!((dp - (-c_v)).abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        // Central differences of -rho s(rho, p) at (1.3, 0.7), h_fd = 1e-6.
        let c_v = 1.5;
        let f = |rho: f64, p: f64| -rho * entropy_rho_p(c_v, rho, p).unwrap();
        let (rho, p) = (1.3, 0.7);
        let theta = p / rho;
        let h_fd = 1e-6;
        let fd_rho = (f(rho + h_fd, p) - f(rho - h_fd, p)) / (2.0 * h_fd);
        let fd_p = (f(rho, p + h_fd) - f(rho, p - h_fd)) / (2.0 * h_fd);
        let (drho, dp) = neg_rho_s_derivatives(c_v, rho, theta).unwrap();
        assert!(
            (fd_rho - drho).abs() < 1e-6,
            "d/drho: fd {fd_rho} vs {drho}"
        );
        assert!((fd_p - dp).abs() < 1e-6, "d/dp: fd {fd_p} vs {dp}");
    }

    #[test]
    fn entropy_forms_agree_and_hessian_is_psd() {
        let c_v = 1.5;
        let mut state = 0x853c49e6748fea9bu64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let rho = 0.1 + 3.0 * next();
            let theta = 0.1 + 3.0 * next();
            let p = rho * theta;
            let a = entropy(c_v, rho, theta).unwrap();
            let b = entropy_rho_p(c_v, rho, p).unwrap();
            assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()), "{a} vs {b}");

            // Hessian of -rho s(rho, p) by finite differences; PSD check via
            // determinant and trace of the 2x2 matrix.
            let f = |r: f64, pp: f64| -r * entropy_rho_p(c_v, r, pp).unwrap();
            let h_fd = 1e-4 * rho.min(p);
            let f00 = (f(rho + h_fd, p) - 2.0 * f(rho, p) + f(rho - h_fd, p)) / (h_fd * h_fd);
            let f11 = (f(rho, p + h_fd) - 2.0 * f(rho, p) + f(rho, p - h_fd)) / (h_fd * h_fd);
            let f01 = (f(rho + h_fd, p + h_fd) - f(rho + h_fd, p - h_fd) - f(rho - h_fd, p + h_fd)
                + f(rho - h_fd, p - h_fd))
                / (4.0 * h_fd * h_fd);
            let det = f00 * f11 - f01 * f01;
            assert!(
                f00 >= -1e-8 && f11 >= -1e-8 && det >= -1e-8,
                "Hessian not PSD at rho={rho} p={p}: [{f00} {f01}; {f01} {f11}]"
            );
        }
    }

    #[test]
    fn bregman_hand_values() {
        assert_eq!(
            bregman_remainder(BregmanKind::RhoLogRho, 1.0, 1.0).unwrap(),
            0.0
        );
        let e = std::f64::consts::E;
        let r = bregman_remainder(BregmanKind::RhoLogRho, e, 1.0).unwrap();
        assert!(
            (r - 1.0).abs() < 1e-15,
            "e log e - 0 - (e - 1) = 1, got {r}"
        );
        let r = bregman_remainder(BregmanKind::LogTheta, 2.0, 1.0).unwrap();
        let expect = std::f64::consts::LN_2 - 1.0;
        assert!((r - expect).abs() < 1e-15, "log 2 - 1 = {expect}, got {r}");
        assert!(bregman_remainder(BregmanKind::LogTheta, -1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn bregman_signs_follow_convexity(a in 1e-3..1e3f64, b in 1e-3..1e3f64) {
            let convex = bregman_remainder(BregmanKind::RhoLogRho, a, b).unwrap();
            prop_assert!(convex >= -1e-12 * (1.0 + a.abs() + b.abs()));
            let concave = bregman_remainder(BregmanKind::LogTheta, a, b).unwrap();
            prop_assert!(concave <= 1e-12 * (1.0 + a.abs() + b.abs()));
        }

        #[test]
        fn pressure_entropy_smooth_region(rho in 1e-2..1e2f64, theta in 1e-2..1e2f64) {
            let p = pressure(rho, theta).unwrap();
            prop_assert!(p > 0.0);
            let s = entropy(1.5, rho, theta).unwrap();
            let s2 = entropy_rho_p(1.5, rho, p).unwrap();
            prop_assert!((s - s2).abs() <= 1e-12 * (1.0 + s.abs()));
        }
    }
}
