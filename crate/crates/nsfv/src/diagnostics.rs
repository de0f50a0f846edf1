//! Conserved quantities, identity residuals and a priori monitors.
//!
//! Everything here is a pure reduction over a converged step pair, with the
//! deterministic summation order of [`crate::par`].
//!
//! The energy balance terms are
//!
//! ```text
//! T_dt      = D_t integral( rho |u|^2 / 2 + c_v rho theta )
//! T_hdiff   = h^eps  sum_sigma |sigma| avg(rho) |jump(u)|^2
//! T_dtdiss  = (dt/2) integral( rho_old |D_t u|^2 )
//! T_upwdiss = (1/2)  sum_sigma |sigma| rho_up |avg(u).n| |jump(u)|^2
//! ```
//!
//! and their sum vanishes when the three scheme equations hold exactly, so
//! the reported residual is a direct measure of the solver tolerance.
//!
//! The entropy budget evaluates the production terms through exact Bregman
//! remainders instead of mean-value points: with `R_B(a,b) = B(a) - B(b) -
//! B'(b)(a-b)` for `B = rho log rho` (and `R_chi` for `chi = log theta`),
//! the four nonnegative `D1` summands are the time remainders per cell and,
//! per face, the remainder of the upwind value expanded at the receiving-side
//! value, weighted by `|avg(u).n|` (continuity part) and by
//! `c_v rho_up |avg(u).n|` (energy part). `D2` pairs the face jumps of
//! `(rho, p)` with the jumps of the convexity derivatives of `-rho s`; `D3`
//! is the flux-form counterpart paired with averages. With this evaluation
//! the discrete entropy balance closes to the solver tolerance.

use crate::fields::{avg, jump, sum_cells, sum_faces, CellField, FaceField};
use crate::ops;
use crate::stepper::{State, StepError, StepReport, Stepper};
use crate::thermo::{bregman_remainder, BregmanKind};

/// The four terms of the discrete energy balance and their sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct EnergyBalance {
    pub t_dt: f64,
    pub t_hdiff: f64,
    pub t_dtdiss: f64,
    pub t_upwdiss: f64,
    /// `t_dt + t_hdiff + t_dtdiss + t_upwdiss`; zero up to solver tolerance
    /// on unforced runs.
    pub residual: f64,
}

/// Entropy-equation terms with `phi = 1`.
#[derive(Debug, Clone)]
pub struct EntropyBudget {
    /// Integral of the four nonnegative remainder terms.
    pub d1_int: f64,
    /// Integral of the jump-pairing production term.
    pub d2_int: f64,
    /// Flux-form production per face and direction.
    pub d3: FaceField,
    /// `integral over directions of |D3|` on the dual grids.
    pub d3_l1: f64,
    /// `-kappa integral( grad_E theta . grad_E (1/theta) )`, nonnegative.
    pub kappa_production: f64,
    /// `integral( (2 mu |D_h u|^2 + lambda |div_h u|^2) / theta )`.
    pub viscous_production: f64,
    /// `D_t integral(rho s) - physical - D1 - D2`; zero up to solver
    /// tolerance on unforced runs.
    pub residual: f64,
}

impl EntropyBudget {
    /// Numerical entropy production `B_h = integral(D1 + D2)`.
    pub fn bh(&self) -> f64 {
        self.d1_int + self.d2_int
    }
}

/// A priori estimate monitors of one state.
#[derive(Debug, Clone, Copy, Default)]
pub struct Monitors {
    pub min_rho: f64,
    pub max_rho: f64,
    pub min_theta: f64,
    pub max_theta: f64,
    pub max_speed: f64,
    /// `h^eps sum_sigma |sigma| |jump(u)|^2`.
    pub jump_u_sq_heps: f64,
    /// `sum_sigma |sigma| |avg(u).n| jump(rho)^2`.
    pub upw_diss_rho: f64,
    /// `sum_sigma |sigma| rho_up |avg(u).n| |jump(u)|^2`.
    pub upw_diss_u: f64,
    /// `|grad_E theta|_{L^2}^2` summed over directions.
    pub grad_theta_l2_sq: f64,
    /// `|D_h u|_{L^2}^2`.
    pub dh_u_l2_sq: f64,
    /// `|u|_{L^6}`.
    pub u_l6: f64,
}

/// One row of the per-step diagnostics series.
#[derive(Debug, Clone, Default)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub kinetic_energy: f64,
    pub internal_energy: f64,
    pub total_energy: f64,
    pub total_entropy: f64,
    pub energy_residual: f64,
    pub t_hdiff: f64,
    pub t_dtdiss: f64,
    pub t_upwdiss: f64,
    pub bh: f64,
    pub d1_int: f64,
    pub d2_int: f64,
    pub d3_l1: f64,
    pub entropy_residual: f64,
    pub kappa_production: f64,
    pub viscous_production: f64,
    pub monitors: Monitors,
    pub picard_iters: usize,
    pub linear_iters: usize,
    pub wall_ms: f64,
}

/// Upwind trace value under the face orientation: the `in` side for
/// `ubar_n >= 0`, the `out` side otherwise.
#[inline]
fn upwind_value(v_in: f64, v_out: f64, ubar_n: f64) -> f64 {
    if ubar_n >= 0.0 {
        v_in
    } else {
        v_out
    }
}

/// Total mass `integral(rho)`.
pub fn total_mass(state: &State) -> f64 {
    state.rho.integrate()
}

/// Kinetic and internal energy integrals.
pub fn energies(c_v: f64, state: &State) -> (f64, f64) {
    let kinetic = sum_cells(state.mesh(), |c| {
        0.5 * state.rho.get(c) * state.u.norm_sq_at(c)
    });
    let internal = sum_cells(state.mesh(), |c| {
        c_v * state.rho.get(c) * state.theta.get(c)
    });
    (kinetic, internal)
}

/// Total entropy `integral(rho s)`.
pub fn total_entropy(c_v: f64, state: &State) -> f64 {
    sum_cells(state.mesh(), |c| {
        let rho = state.rho.get(c);
        rho * (c_v * state.theta.get(c).ln() - rho.ln())
    })
}

/// The discrete energy balance of one step pair.
pub fn energy_balance(stepper: &Stepper, new: &State, old: &State) -> EnergyBalance {
    let mesh = stepper.mesh();
    let dim = mesh.dim();
    let c_v = stepper.gas().c_v;
    let dt = stepper.dt();
    let h_eps = stepper.flux_params().h_eps();

    let energy = |s: &State| {
        sum_cells(mesh, |c| {
            0.5 * s.rho.get(c) * s.u.norm_sq_at(c) + c_v * s.rho.get(c) * s.theta.get(c)
        })
    };
    let t_dt = (energy(new) - energy(old)) / dt;

    let jump_u_sq = |d: usize, f: usize| {
        (0..dim)
            .map(|j| {
                let (vin, vout) = new.u.component(j).face_trace(d, f);
                let dj = jump(vin, vout);
                dj * dj
            })
            .sum::<f64>()
    };

    let t_hdiff = h_eps
        * sum_faces(mesh, |d, f| {
            let (rin, rout) = new.rho.face_trace(d, f);
            avg(rin, rout) * jump_u_sq(d, f)
        });

    let t_dtdiss = (0.5 / dt)
        * sum_cells(mesh, |c| {
            let mut acc = 0.0;
            for j in 0..dim {
                let du = new.u.component(j).get(c) - old.u.component(j).get(c);
                acc += du * du;
            }
            old.rho.get(c) * acc
        });

    let t_upwdiss = 0.5
        * sum_faces(mesh, |d, f| {
            let ubar = new.u.normal_velocity(d, f);
            let (rin, rout) = new.rho.face_trace(d, f);
            upwind_value(rin, rout, ubar) * ubar.abs() * jump_u_sq(d, f)
        });

    let residual = t_dt + t_hdiff + t_dtdiss + t_upwdiss;
    EnergyBalance {
        t_dt,
        t_hdiff,
        t_dtdiss,
        t_upwdiss,
        residual,
    }
}

/// The discrete entropy budget of one step pair with `phi = 1`.
pub fn entropy_budget(
    stepper: &Stepper,
    new: &State,
    old: &State,
) -> Result<EntropyBudget, StepError> {
    let mesh = stepper.mesh();
    let c_v = stepper.gas().c_v;
    let dt = stepper.dt();
    let h = mesh.h();
    let h_eps = stepper.flux_params().h_eps();

    for (what, value) in [
        ("rho", new.rho.min().min(old.rho.min())),
        ("theta", new.theta.min().min(old.theta.min())),
    ] {
        if value <= 0.0 {
            return Err(StepError::PositivityLoss {
                what,
                min_value: value,
                step: new.step_index,
            });
        }
    }

    // Time remainders per cell.
    let d1_time = sum_cells(mesh, |c| {
        let r_b = bregman_remainder(BregmanKind::RhoLogRho, old.rho.get(c), new.rho.get(c))
            .expect("positivity checked");
        let r_chi = bregman_remainder(BregmanKind::LogTheta, old.theta.get(c), new.theta.get(c))
            .expect("positivity checked");
        r_b / dt - (c_v / dt) * old.rho.get(c) * r_chi
    });

    // Face remainders: upwind value expanded at the receiving side, weighted
    // by |avg(u).n| (and by c_v rho_up for the temperature part).
    let d1_face = sum_faces(mesh, |d, f| {
        let ubar = new.u.normal_velocity(d, f);
        if ubar == 0.0 {
            return 0.0;
        }
        let (rho_in, rho_out) = new.rho.face_trace(d, f);
        let (th_in, th_out) = new.theta.face_trace(d, f);
        let (rho_up, rho_dw, th_up, th_dw) = if ubar > 0.0 {
            (rho_in, rho_out, th_in, th_out)
        } else {
            (rho_out, rho_in, th_out, th_in)
        };
        let r_b =
            bregman_remainder(BregmanKind::RhoLogRho, rho_up, rho_dw).expect("positivity checked");
        let r_chi =
            bregman_remainder(BregmanKind::LogTheta, th_up, th_dw).expect("positivity checked");
        ubar.abs() * (r_b - c_v * rho_up * r_chi)
    });
    let d1_int = d1_time + d1_face;

    // Convexity-derivative fields of -rho s.
    let s = new.entropy(c_v);
    let g_rho = CellField::from_fn(mesh, |c| c_v + 1.0 - s.get(c));
    let g_p = CellField::from_fn(mesh, |c| -c_v / new.theta.get(c));
    let p = new.pressure();

    let d2_int = h_eps
        * sum_faces(mesh, |d, f| {
            let (ri, ro) = new.rho.face_trace(d, f);
            let (pi, po) = p.face_trace(d, f);
            let (gri, gro) = g_rho.face_trace(d, f);
            let (gpi, gpo) = g_p.face_trace(d, f);
            jump(ri, ro) * jump(gri, gro) + jump(pi, po) * jump(gpi, gpo)
        });

    let h_eps1 = h_eps * h;
    let inv_h = 1.0 / h;
    let d3 = FaceField::from_fn(mesh, |d, f| {
        let (ri, ro) = new.rho.face_trace(d, f);
        let (pi, po) = p.face_trace(d, f);
        let (gri, gro) = g_rho.face_trace(d, f);
        let (gpi, gpo) = g_p.face_trace(d, f);
        h_eps1 * (jump(ri, ro) * inv_h * avg(gri, gro) + jump(pi, po) * inv_h * avg(gpi, gpo))
    });
    let dual_vol = mesh.dual_volume();
    let d3_l1 = (0..mesh.dim())
        .map(|d| dual_vol * crate::par::tree_sum_by(mesh.faces_per_dir(), |f| d3.get(d, f).abs()))
        .sum::<f64>();

    let kappa_production = -stepper.gas().kappa
        * dual_vol
        * (0..mesh.dim())
            .map(|d| {
                crate::par::tree_sum_by(mesh.faces_per_dir(), |f| {
                    let (ti, to) = new.theta.face_trace(d, f);
                    (jump(ti, to) * inv_h) * (jump(1.0 / ti, 1.0 / to) * inv_h)
                })
            })
            .sum::<f64>();

    let d_h = ops::sym_grad(&new.u);
    let div_u = ops::div_h(&new.u);
    let (mu, lambda) = (stepper.gas().mu, stepper.gas().lambda);
    let viscous_production = sum_cells(mesh, |c| {
        (2.0 * mu * d_h.frobenius_sq_at(c) + lambda * div_u.get(c) * div_u.get(c))
            / new.theta.get(c)
    });

    let ds_dt = (total_entropy(c_v, new) - total_entropy(c_v, old)) / dt;
    let residual = ds_dt - kappa_production - viscous_production - d1_int - d2_int;

    Ok(EntropyBudget {
        d1_int,
        d2_int,
        d3,
        d3_l1,
        kappa_production,
        viscous_production,
        residual,
    })
}

/// Monitor values of one state.
pub fn apriori_monitors(stepper: &Stepper, state: &State) -> Monitors {
    let mesh = stepper.mesh();
    let dim = mesh.dim();
    let h_eps = stepper.flux_params().h_eps();
    let jump_u_sq = |d: usize, f: usize| {
        (0..dim)
            .map(|j| {
                let (vin, vout) = state.u.component(j).face_trace(d, f);
                let dj = jump(vin, vout);
                dj * dj
            })
            .sum::<f64>()
    };

    let jump_u_sq_heps = h_eps * sum_faces(mesh, jump_u_sq);
    let upw_diss_rho = sum_faces(mesh, |d, f| {
        let ubar = state.u.normal_velocity(d, f);
        let (ri, ro) = state.rho.face_trace(d, f);
        let dj = jump(ri, ro);
        ubar.abs() * dj * dj
    });
    let upw_diss_u = sum_faces(mesh, |d, f| {
        let ubar = state.u.normal_velocity(d, f);
        let (ri, ro) = state.rho.face_trace(d, f);
        upwind_value(ri, ro, ubar) * ubar.abs() * jump_u_sq(d, f)
    });
    let grad_theta = ops::grad_edge(&state.theta);
    let grad_theta_l2_sq = grad_theta.l2_norm_sq();
    let d_h = ops::sym_grad(&state.u);
    let dh_u_l2_sq = sum_cells(mesh, |c| d_h.frobenius_sq_at(c));

    Monitors {
        min_rho: state.rho.min(),
        max_rho: state.rho.max(),
        min_theta: state.theta.min(),
        max_theta: state.theta.max(),
        max_speed: state.u.max_speed(),
        jump_u_sq_heps,
        upw_diss_rho,
        upw_diss_u,
        grad_theta_l2_sq,
        dh_u_l2_sq,
        u_l6: state.u.lp_norm(6.0),
    }
}

impl DiagnosticsRecord {
    /// Record for the initial state: conserved quantities and monitors only,
    /// identity terms zero.
    pub fn initial(stepper: &Stepper, state: &State) -> Self {
        let c_v = stepper.gas().c_v;
        let (kinetic, internal) = energies(c_v, state);
        DiagnosticsRecord {
            step: state.step_index,
            time: state.time,
            mass: total_mass(state),
            kinetic_energy: kinetic,
            internal_energy: internal,
            total_energy: kinetic + internal,
            total_entropy: total_entropy(c_v, state),
            monitors: apriori_monitors(stepper, state),
            ..DiagnosticsRecord::default()
        }
    }

    /// Full record for a converged step pair.
    pub fn from_step(stepper: &Stepper, new: &State, old: &State, report: &StepReport) -> Self {
        let c_v = stepper.gas().c_v;
        let (kinetic, internal) = energies(c_v, new);
        let energy = energy_balance(stepper, new, old);
        let entropy = entropy_budget(stepper, new, old)
            .expect("converged states are positive by the step contract");
        DiagnosticsRecord {
            step: new.step_index,
            time: new.time,
            mass: total_mass(new),
            kinetic_energy: kinetic,
            internal_energy: internal,
            total_energy: kinetic + internal,
            total_entropy: total_entropy(c_v, new),
            energy_residual: energy.residual,
            t_hdiff: energy.t_hdiff,
            t_dtdiss: energy.t_dtdiss,
            t_upwdiss: energy.t_upwdiss,
            bh: entropy.bh(),
            d1_int: entropy.d1_int,
            d2_int: entropy.d2_int,
            d3_l1: entropy.d3_l1,
            entropy_residual: entropy.residual,
            kappa_production: entropy.kappa_production,
            viscous_production: entropy.viscous_production,
            monitors: apriori_monitors(stepper, new),
            picard_iters: report.picard_iterations,
            linear_iters: report.linear_solver_iterations,
            wall_ms: report.wall_time * 1e3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stepper::{InitKind, RunConfig, Stepper};

    fn smooth_pair(n: usize) -> (Stepper, State, State) {
        let config = RunConfig {
            n,
            ..RunConfig::default()
        };
        let stepper = Stepper::new(&config).unwrap();
        let s0 = stepper.init_from_kind(InitKind::Smooth).unwrap();
        let (s1, _) = stepper.step(&s0).unwrap();
        (stepper, s1, s0)
    }

    #[test]
    fn constant_state_has_zero_budget() {
        let config = RunConfig {
            n: 4,
            init: InitKind::Constant {
                rho: 1.3,
                velocity: [0.0; 3],
                theta: 0.9,
            },
            ..RunConfig::default()
        };
        let stepper = Stepper::new(&config).unwrap();
        let s = stepper.init_from_kind(config.init).unwrap();
        let e = energy_balance(&stepper, &s, &s);
        assert_eq!(e.t_dt, 0.0);
        assert_eq!(e.t_hdiff, 0.0);
        assert_eq!(e.t_dtdiss, 0.0);
        assert_eq!(e.t_upwdiss, 0.0);
        let b = entropy_budget(&stepper, &s, &s).unwrap();
        assert_eq!(b.d1_int, 0.0);
        assert_eq!(b.d2_int, 0.0);
        assert_eq!(b.d3_l1, 0.0);
        assert_eq!(b.kappa_production, 0.0);
        assert_eq!(b.viscous_production, 0.0);
        assert_eq!(b.residual, 0.0);
        let m = apriori_monitors(&stepper, &s);
        assert_eq!(m.jump_u_sq_heps, 0.0);
        assert_eq!(m.grad_theta_l2_sq, 0.0);
    }

    #[test]
    fn energy_identity_closes_on_converged_steps() {
        let (stepper, s1, s0) = smooth_pair(12);
        let e = energy_balance(&stepper, &s1, &s0);
        let e_h = s1.rho.integrate(); // order-one scale
        let tol = 10.0 * 1e-10 * (1.0 + e_h);
        assert!(
            e.residual.abs() <= tol,
            "energy residual {:.3e}",
            e.residual
        );
        // Each dissipation term is a sum of squares.
        assert!(e.t_hdiff >= 0.0 && e.t_dtdiss >= 0.0 && e.t_upwdiss >= 0.0);
    }

    #[test]
    fn entropy_identity_closes_with_nonnegative_production() {
        let (stepper, s1, s0) = smooth_pair(12);
        let b = entropy_budget(&stepper, &s1, &s0).unwrap();
        let scale = 1.0 + total_entropy(stepper.gas().c_v, &s1).abs();
        assert!(
            b.residual.abs() <= 10.0 * 1e-10 * scale,
            "entropy residual {:.3e}",
            b.residual
        );
        assert!(b.d1_int >= -1e-13, "D1 = {:.3e}", b.d1_int);
        assert!(b.d2_int >= -1e-13, "D2 = {:.3e}", b.d2_int);
        assert!(b.kappa_production >= 0.0);
        assert!(b.viscous_production >= 0.0);
    }

    #[test]
    fn entropy_budget_rejects_nonpositive_states() {
        let (stepper, s1, s0) = smooth_pair(4);
        let mut bad = s1.clone();
        bad.theta.values_mut()[0] = -0.1;
        assert!(matches!(
            entropy_budget(&stepper, &bad, &s0),
            Err(StepError::PositivityLoss { what: "theta", .. })
        ));
    }

    #[test]
    fn records_carry_conserved_quantities() {
        let (stepper, s1, s0) = smooth_pair(8);
        let r0 = DiagnosticsRecord::initial(&stepper, &s0);
        assert_eq!(r0.step, 0);
        assert_eq!(r0.energy_residual, 0.0);
        assert!((r0.mass - 2.0).abs() < 1e-12);
        let report = StepReport::default();
        let r1 = DiagnosticsRecord::from_step(&stepper, &s1, &s0, &report);
        assert_eq!(r1.step, 1);
        assert!(((r1.mass - r0.mass) / r0.mass).abs() <= 1e-13);
        assert!(r1.total_energy <= r0.total_energy + 1e-9);
        assert!(r1.total_entropy >= r0.total_entropy - 1e-9);
        assert!(r1.monitors.min_rho > 0.9 * r0.monitors.min_rho);
    }
}
