//! The fully implicit time step and the run loop.
//!
//! One step advances `(rho, u, theta)` by the backward difference in time
//! with every flux and operator evaluated at the new level:
//!
//! ```text
//! D_t rho_K            + (1/h) sum_sigma F(rho, u)                    = g_rho
//! D_t (rho u)_K        + (1/h) sum_sigma F(rho u, u) + grad_h p
//!                      - 2 mu div_h D_h(u) - lambda grad_h div_h u    = g_m
//! c_v D_t (rho theta)_K + c_v (1/h) sum_sigma F(rho theta, u)
//!                      - kappa lap_h theta
//!                      - (2 mu |D_h u|^2 + lambda |div_h u|^2
//!                         - p div_h u)                                = g_e
//! ```
//!
//! The nonlinear system is solved by Picard iteration: each sweep freezes the
//! advecting velocity (hence the upwind directions) and the coefficient
//! fields, then solves the three resulting linear systems sequentially
//! (continuity -> momentum -> energy) with the freshest fields, optionally
//! under-relaxed. The flux modulus `|avg(u).n|` is nondifferentiable, which
//! rules out plain Newton; the fixed point of the sweep is exactly the
//! nonlinear scheme, which the convergence test measures directly through the
//! true equation residuals.
//!
//! Convergence metric: the infinity norm of each equation residual scaled by
//! `1 + |field|_inf` of the corresponding unknown; the step is accepted when
//! the largest of the three drops below `picard_tol`.
//!
//! The continuity solve is pushed to the rounding floor rather than the user
//! tolerance: the mass balance of the accepted step telescopes through the
//! linear system, so total mass drifts only by the final linear residual, not
//! by `picard_tol`.

use crate::fields::{CellField, CellVectorField, FaceField};
use crate::flux::{self, FluxParams};
use crate::linsolve::{self, LinearOp, SolveFailure};
use crate::mesh::{Mesh, MeshError};
use crate::mms;
use crate::ops;
use crate::thermo::GasParams;
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

/// One time level of the discrete solution.
#[derive(Debug, Clone)]
pub struct State {
    pub rho: CellField,
    pub u: CellVectorField,
    pub theta: CellField,
    pub time: f64,
    pub step_index: usize,
}

impl State {
    pub fn mesh(&self) -> &Arc<Mesh> {
        self.rho.mesh()
    }

    /// Pressure field `p = rho theta`.
    pub fn pressure(&self) -> CellField {
        CellField::from_fn(self.mesh(), |c| self.rho.get(c) * self.theta.get(c))
    }

    /// Specific entropy field `s = c_v log theta - log rho`.
    pub fn entropy(&self, c_v: f64) -> CellField {
        CellField::from_fn(self.mesh(), |c| {
            c_v * self.theta.get(c).ln() - self.rho.get(c).ln()
        })
    }

    fn min_positive(&self) -> (f64, f64) {
        (self.rho.min(), self.theta.min())
    }
}

/// Nonlinear and linear solver knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverParams {
    pub picard_tol: f64,
    pub max_picard: usize,
    /// Under-relaxation factor in (0, 1].
    pub omega: f64,
    pub linear_tol: f64,
    pub max_linear: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            picard_tol: 1e-10,
            max_picard: 200,
            omega: 1.0,
            linear_tol: 1e-12,
            max_linear: 600,
        }
    }
}

/// Built-in initial data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind {
    Constant {
        rho: f64,
        velocity: [f64; 3],
        theta: f64,
    },
    Smooth,
    Mms,
}

/// Analytic source terms added to the right-hand sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForcingKind {
    None,
    Mms,
}

/// Output cadence knobs; interpreted by the CLI layer.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub diagnostics_path: String,
    /// Write a snapshot every this many steps; 0 disables snapshots.
    pub snapshot_every: usize,
    pub snapshot_prefix: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            diagnostics_path: "diagnostics.csv".to_string(),
            snapshot_every: 0,
            snapshot_prefix: "snapshot".to_string(),
        }
    }
}

/// Full run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
    pub gas: GasParams,
    pub epsilon: f64,
    /// Time step rule `dt = c_dt * h`.
    pub c_dt: f64,
    pub t_end: f64,
    pub solver: SolverParams,
    pub init: InitKind,
    pub forcing: ForcingKind,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dim: 2,
            n: 32,
            length: 1.0,
            gas: GasParams::default(),
            epsilon: 0.6,
            c_dt: 0.1,
            t_end: 0.1,
            solver: SolverParams::default(),
            init: InitKind::Smooth,
            forcing: ForcingKind::None,
            output: OutputConfig::default(),
        }
    }
}

/// Per-step solver report.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepReport {
    pub picard_iterations: usize,
    /// Largest scaled equation residual at acceptance.
    pub final_residual_norm: f64,
    /// Krylov iterations summed over all linear solves of the step.
    pub linear_solver_iterations: usize,
    pub wall_time: f64,
}

/// Errors raised by the step and run loops.
#[derive(Debug, Clone)]
pub enum StepError {
    /// Picard iteration exhausted `max_picard` without meeting the tolerance.
    NonConvergence {
        iterations: usize,
        residual: f64,
    },
    /// A density or temperature iterate lost positivity.
    PositivityLoss {
        what: &'static str,
        min_value: f64,
        step: usize,
    },
    LinearSolveFailure(SolveFailure),
    Mesh(MeshError),
    /// Invalid configuration (bad epsilon, forcing/dimension mismatch, ...).
    Config(String),
}

impl fmt::Display for StepError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepError::NonConvergence { iterations, residual } => write!(
                f,
                "Picard iteration did not converge: {iterations} iterations, scaled residual {residual:.3e}"
            ),
            StepError::PositivityLoss { what, min_value, step } => write!(
                f,
                "positivity lost in {what} at step {step}: min value {min_value:.6e}"
            ),
            StepError::LinearSolveFailure(e) => write!(f, "{e}"),
            StepError::Mesh(e) => write!(f, "{e}"),
            StepError::Config(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for StepError {}

impl From<SolveFailure> for StepError {
    fn from(e: SolveFailure) -> Self {
        StepError::LinearSolveFailure(e)
    }
}

impl From<MeshError> for StepError {
    fn from(e: MeshError) -> Self {
        StepError::Mesh(e)
    }
}

/// Cell-projected source terms (the forcing is steady, so projecting once is
/// exact for the whole run).
#[derive(Debug, Clone)]
pub struct ProjectedForcing {
    pub mass: CellField,
    pub momentum: CellVectorField,
    pub energy: CellField,
}

/// Per-cell residuals of the three equations.
#[derive(Debug, Clone)]
pub struct ResidualFields {
    pub mass: CellField,
    pub momentum: CellVectorField,
    pub energy: CellField,
}

impl ResidualFields {
    /// Largest residual scaled by `1 + |field|_inf` per equation.
    pub fn scaled_norm(&self, state: &State) -> f64 {
        let mass = self.mass.max_abs() / (1.0 + state.rho.max_abs());
        let mom = (0..state.u.dim())
            .map(|j| self.momentum.component(j).max_abs())
            .fold(0.0, f64::max)
            / (1.0 + state.u.max_speed());
        let energy = self.energy.max_abs() / (1.0 + state.theta.max_abs());
        mass.max(mom).max(energy)
    }
}

/// Configured stepper: mesh, parameters and projected forcing.
pub struct Stepper {
    mesh: Arc<Mesh>,
    gas: GasParams,
    flux: FluxParams,
    dt: f64,
    solver: SolverParams,
    forcing: Option<ProjectedForcing>,
}

impl Stepper {
    pub fn new(config: &RunConfig) -> Result<Self, StepError> {
        let mesh = Mesh::new(config.dim, config.n, &vec![config.length; config.dim])?;
        let flux = FluxParams::new(config.epsilon, mesh.h())
            .map_err(|e| StepError::Config(e.to_string()))?;
        if !(config.c_dt > 0.0) {
            return Err(StepError::Config(format!(
                "c_dt must be positive, got {}",
                config.c_dt
            )));
        }
        if !(config.solver.omega > 0.0 && config.solver.omega <= 1.0) {
            return Err(StepError::Config(format!(
                "under_relaxation must lie in (0,1], got {}",
                config.solver.omega
            )));
        }
        let forcing = match config.forcing {
            ForcingKind::None => None,
            ForcingKind::Mms => {
                if config.dim != 2 {
                    return Err(StepError::Config(
                        "mms forcing is defined for dim = 2 only".to_string(),
                    ));
                }
                let gas = config.gas;
                Some(ProjectedForcing {
                    mass: crate::fields::project_cell(&mesh, mms::g_rho),
                    momentum: crate::fields::project_cell_vector(&mesh, |x, j| {
                        mms::g_momentum(&gas, x, j)
                    }),
                    energy: crate::fields::project_cell(&mesh, |x| mms::g_energy(&gas, x)),
                })
            }
        };
        let dt = config.c_dt * mesh.h();
        Ok(Stepper {
            mesh,
            gas: config.gas,
            flux,
            dt,
            solver: config.solver,
            forcing,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn gas(&self) -> &GasParams {
        &self.gas
    }

    pub fn flux_params(&self) -> &FluxParams {
        &self.flux
    }

    pub fn forcing(&self) -> Option<&ProjectedForcing> {
        self.forcing.as_ref()
    }

    /// Project analytic initial data, rejecting nonpositive cells.
    pub fn init_state<R, V, T>(&self, rho0: R, u0: V, theta0: T) -> Result<State, StepError>
    where
        R: Fn(&[f64]) -> f64 + Sync,
        V: Fn(&[f64], usize) -> f64 + Sync,
        T: Fn(&[f64]) -> f64 + Sync,
    {
        let rho = crate::fields::project_cell(&self.mesh, rho0);
        let u = crate::fields::project_cell_vector(&self.mesh, u0);
        let theta = crate::fields::project_cell(&self.mesh, theta0);
        let state = State {
            rho,
            u,
            theta,
            time: 0.0,
            step_index: 0,
        };
        let (min_rho, min_theta) = state.min_positive();
        if min_rho <= 0.0 {
            return Err(StepError::PositivityLoss {
                what: "rho",
                min_value: min_rho,
                step: 0,
            });
        }
        if min_theta <= 0.0 {
            return Err(StepError::PositivityLoss {
                what: "theta",
                min_value: min_theta,
                step: 0,
            });
        }
        Ok(state)
    }

    /// Initial state for a configured [`InitKind`].
    pub fn init_from_kind(&self, kind: InitKind) -> Result<State, StepError> {
        let dim = self.mesh.dim();
        match kind {
            InitKind::Constant {
                rho,
                velocity,
                theta,
            } => self.init_state(|_| rho, |_, j| velocity[j], |_| theta),
            InitKind::Smooth => self.init_state(
                |x| mms::smooth_rho(dim, x),
                |x, j| mms::smooth_velocity(dim, x, j),
                |x| mms::smooth_theta(dim, x),
            ),
            InitKind::Mms => {
                if dim != 2 {
                    return Err(StepError::Config(
                        "mms initial data is defined for dim = 2 only".to_string(),
                    ));
                }
                self.init_state(mms::rho, mms::velocity, mms::theta)
            }
        }
    }

    /// Face-normal average velocities of `u`, one value per face.
    pub fn normal_velocities(&self, u: &CellVectorField) -> FaceField {
        FaceField::from_fn(&self.mesh, |d, f| u.normal_velocity(d, f))
    }

    /// `(1/h) sum over faces of K` of the outward diffusive upwind flux of
    /// the cell quantity `r` advected by the frozen face velocities.
    pub fn flux_divergence(&self, r: &CellField, normal_vel: &FaceField) -> CellField {
        let mesh = &self.mesh;
        let params = self.flux;
        let face_flux = FaceField::from_fn(mesh, |d, f| {
            let (rin, rout) = r.face_trace(d, f);
            flux::diffusive_flux(rin, rout, normal_vel.get(d, f), &params)
        });
        let inv_h = 1.0 / mesh.h();
        CellField::from_fn(mesh, |c| {
            let mut acc = 0.0;
            for d in 0..mesh.dim() {
                acc += face_flux.get(d, c) - face_flux.get(d, mesh.neighbor(c, d, -1));
            }
            inv_h * acc
        })
    }

    /// Residuals of the three equations at the pair `(new, old)`, every flux
    /// and operator evaluated at the new level.
    pub fn residual(&self, new: &State, old: &State) -> ResidualFields {
        let mesh = &self.mesh;
        let dt = self.dt;
        let gas = &self.gas;
        let nv = self.normal_velocities(&new.u);

        let mass_flux = self.flux_divergence(&new.rho, &nv);
        let mass = CellField::from_fn(mesh, |c| {
            let mut r = (new.rho.get(c) - old.rho.get(c)) / dt + mass_flux.get(c);
            if let Some(f) = &self.forcing {
                r -= f.mass.get(c);
            }
            r
        });

        let pressure = new.pressure();
        let grad_p = ops::grad_h(&pressure);
        let viscous = ops::viscous(&new.u, gas.mu, gas.lambda);
        let momentum = CellVectorField::from_components(
            (0..mesh.dim())
                .map(|j| {
                    let rho_u =
                        CellField::from_fn(mesh, |c| new.rho.get(c) * new.u.component(j).get(c));
                    let conv = self.flux_divergence(&rho_u, &nv);
                    CellField::from_fn(mesh, |c| {
                        let dt_term = (new.rho.get(c) * new.u.component(j).get(c)
                            - old.rho.get(c) * old.u.component(j).get(c))
                            / dt;
                        let mut r = dt_term + conv.get(c) + grad_p.component(j).get(c)
                            - viscous.component(j).get(c);
                        if let Some(f) = &self.forcing {
                            r -= f.momentum.component(j).get(c);
                        }
                        r
                    })
                })
                .collect(),
        );

        let rho_theta = CellField::from_fn(mesh, |c| new.rho.get(c) * new.theta.get(c));
        let energy_conv = self.flux_divergence(&rho_theta, &nv);
        let lap_theta = ops::laplace_h(&new.theta);
        let d_h = ops::sym_grad(&new.u);
        let div_u = ops::div_h(&new.u);
        let energy = CellField::from_fn(mesh, |c| {
            let dt_term = gas.c_v
                * (new.rho.get(c) * new.theta.get(c) - old.rho.get(c) * old.theta.get(c))
                / dt;
            let dissipation =
                2.0 * gas.mu * d_h.frobenius_sq_at(c) + gas.lambda * div_u.get(c) * div_u.get(c);
            let mut r = dt_term + gas.c_v * energy_conv.get(c)
                - gas.kappa * lap_theta.get(c)
                - (dissipation - pressure.get(c) * div_u.get(c));
            if let Some(f) = &self.forcing {
                r -= f.energy.get(c);
            }
            r
        });

        ResidualFields {
            mass,
            momentum,
            energy,
        }
    }

    /// One implicit step from `old`. Returns the new state and a report, or
    /// an error if the iteration fails to converge, a linear solve stalls, or
    /// positivity is lost.
    pub fn step(&self, old: &State) -> Result<(State, StepReport), StepError> {
        let start = Instant::now();
        let mesh = &self.mesh;
        let dim = mesh.dim();
        let cells = mesh.cell_count();
        let omega = self.solver.omega;

        let mut rho = old.rho.clone();
        let mut u = old.u.clone();
        let mut theta = old.theta.clone();
        let mut linear_iterations = 0usize;
        let mut last_residual = f64::INFINITY;

        // The nonlinear residual cannot drop below the linear solve
        // residuals, so each solve gets an absolute target safely under the
        // Picard target of its equation. The mass balance additionally
        // telescopes through the continuity solve, so that one is pushed to
        // the rounding floor regardless of the user tolerance.
        let continuity_rel = self.solver.linear_tol.min(1e-15);

        for iteration in 1..=self.solver.max_picard {
            let nv = self.normal_velocities(&u);
            let transport = Transport::new(mesh, &nv, self.flux.h_eps());

            // Continuity.
            let continuity = ContinuityOp {
                mesh,
                transport: &transport,
                inv_dt: 1.0 / self.dt,
            };
            let mut rho_next = rho.values().to_vec();
            let b_mass: Vec<f64> = crate::par::map_vec(cells, |c| {
                let mut b = old.rho.get(c) / self.dt;
                if let Some(f) = &self.forcing {
                    b += f.mass.get(c);
                }
                b
            });
            let target = continuity_rel * crate::par::max_by(b_mass.len(), |i| b_mass[i].abs());
            linear_iterations += linsolve::solve(
                &continuity,
                &b_mass,
                &mut rho_next,
                target,
                self.solver.max_linear,
            )?
            .iterations;
            relax_into(rho.values_mut(), &rho_next, omega);

            // Momentum, with the freshly advanced density in the mass term
            // and the frozen pressure p = rho_new * theta_cur.
            let transport_rho = transport.scaled_by(mesh, &rho);
            let momentum_op = MomentumOp {
                mesh,
                transport: &transport_rho,
                rho: &rho,
                inv_dt: 1.0 / self.dt,
                mu: self.gas.mu,
                mu_lambda: self.gas.mu + self.gas.lambda,
            };
            let p_frozen = CellField::from_fn(mesh, |c| rho.get(c) * theta.get(c));
            let grad_p = ops::grad_h(&p_frozen);
            let mut u_next = vec![0.0; dim * cells];
            for j in 0..dim {
                u_next[j * cells..(j + 1) * cells].copy_from_slice(u.component(j).values());
            }
            let b_mom: Vec<f64> = crate::par::map_vec(dim * cells, |idx| {
                let (j, c) = (idx / cells, idx % cells);
                let mut b = old.rho.get(c) * old.u.component(j).get(c) / self.dt
                    - grad_p.component(j).get(c);
                if let Some(f) = &self.forcing {
                    b += f.momentum.component(j).get(c);
                }
                b
            });
            let target = (self.solver.linear_tol
                * crate::par::max_by(b_mom.len(), |i| b_mom[i].abs()))
            .min(0.05 * self.solver.picard_tol * (1.0 + u.max_speed()));
            linear_iterations += linsolve::solve(
                &momentum_op,
                &b_mom,
                &mut u_next,
                target,
                self.solver.max_linear,
            )?
            .iterations;
            for j in 0..dim {
                relax_into(
                    u.component_mut(j).values_mut(),
                    &u_next[j * cells..(j + 1) * cells],
                    omega,
                );
            }

            // Internal energy with the new velocity; the pressure-work term
            // p div u = rho theta div u stays implicit in theta.
            let nv_new = self.normal_velocities(&u);
            let transport_new = Transport::new(mesh, &nv_new, self.flux.h_eps());
            let transport_rho_new = transport_new.scaled_by(mesh, &rho);
            let div_u = ops::div_h(&u);
            let d_h = ops::sym_grad(&u);
            let energy_op = EnergyOp {
                mesh,
                transport: &transport_rho_new,
                rho: &rho,
                c_v: self.gas.c_v,
                inv_dt: 1.0 / self.dt,
                kappa: self.gas.kappa,
                rho_div_u: crate::par::map_vec(cells, |c| rho.get(c) * div_u.get(c)),
            };
            let mut theta_next = theta.values().to_vec();
            let b_energy: Vec<f64> = crate::par::map_vec(cells, |c| {
                let dissipation = 2.0 * self.gas.mu * d_h.frobenius_sq_at(c)
                    + self.gas.lambda * div_u.get(c) * div_u.get(c);
                let mut b =
                    self.gas.c_v * old.rho.get(c) * old.theta.get(c) / self.dt + dissipation;
                if let Some(f) = &self.forcing {
                    b += f.energy.get(c);
                }
                b
            });
            let target = (self.solver.linear_tol
                * crate::par::max_by(b_energy.len(), |i| b_energy[i].abs()))
            .min(0.05 * self.solver.picard_tol * (1.0 + theta.max_abs()));
            linear_iterations += linsolve::solve(
                &energy_op,
                &b_energy,
                &mut theta_next,
                target,
                self.solver.max_linear,
            )?
            .iterations;
            relax_into(theta.values_mut(), &theta_next, omega);

            // Positivity of the iterate (assumptions on density/temperature).
            let min_rho = rho.min();
            if min_rho <= 0.0 {
                return Err(StepError::PositivityLoss {
                    what: "rho",
                    min_value: min_rho,
                    step: old.step_index + 1,
                });
            }
            let min_theta = theta.min();
            if min_theta <= 0.0 {
                return Err(StepError::PositivityLoss {
                    what: "theta",
                    min_value: min_theta,
                    step: old.step_index + 1,
                });
            }

            // True nonlinear residual of the current iterate.
            let candidate = State {
                rho: rho.clone(),
                u: u.clone(),
                theta: theta.clone(),
                time: old.time + self.dt,
                step_index: old.step_index + 1,
            };
            last_residual = self.residual(&candidate, old).scaled_norm(&candidate);
            if last_residual <= self.solver.picard_tol {
                return Ok((
                    candidate,
                    StepReport {
                        picard_iterations: iteration,
                        final_residual_norm: last_residual,
                        linear_solver_iterations: linear_iterations,
                        wall_time: start.elapsed().as_secs_f64(),
                    },
                ));
            }
        }

        Err(StepError::NonConvergence {
            iterations: self.solver.max_picard,
            residual: last_residual,
        })
    }
}

fn relax_into(current: &mut [f64], solved: &[f64], omega: f64) {
    if omega == 1.0 {
        current.copy_from_slice(solved);
    } else {
        for (c, &s) in current.iter_mut().zip(solved) {
            *c = omega * s + (1.0 - omega) * *c;
        }
    }
}

/// Per-face stencil coefficients of the linearized diffusive upwind flux:
/// `flux = co_in * x_K + co_out * x_L` for frozen face velocities.
struct Transport {
    co_in: Vec<Vec<f64>>,
    co_out: Vec<Vec<f64>>,
}

impl Transport {
    fn new(mesh: &Mesh, normal_vel: &FaceField, h_eps: f64) -> Self {
        let co_in = (0..mesh.dim())
            .map(|d| {
                crate::par::map_vec(mesh.faces_per_dir(), |f| {
                    flux::pos_part(normal_vel.get(d, f)) + h_eps
                })
            })
            .collect();
        let co_out = (0..mesh.dim())
            .map(|d| {
                crate::par::map_vec(mesh.faces_per_dir(), |f| {
                    flux::neg_part(normal_vel.get(d, f)) - h_eps
                })
            })
            .collect();
        Transport { co_in, co_out }
    }

    /// Coefficients for transporting `rho * x`: fold the frozen density of
    /// the trace cell into each coefficient.
    fn scaled_by(&self, mesh: &Mesh, rho: &CellField) -> Transport {
        let co_in = (0..mesh.dim())
            .map(|d| {
                crate::par::map_vec(mesh.faces_per_dir(), |f| {
                    let (k, _) = mesh.face_cells(d, f);
                    self.co_in[d][f] * rho.get(k)
                })
            })
            .collect();
        let co_out = (0..mesh.dim())
            .map(|d| {
                crate::par::map_vec(mesh.faces_per_dir(), |f| {
                    let (_, l) = mesh.face_cells(d, f);
                    self.co_out[d][f] * rho.get(l)
                })
            })
            .collect();
        Transport { co_in, co_out }
    }

    /// `(1/h) sum over faces of K` of the linear face flux of `x`.
    #[inline]
    fn divergence_at(&self, mesh: &Mesh, x: &[f64], c: usize) -> f64 {
        let mut acc = 0.0;
        for d in 0..mesh.dim() {
            let l = mesh.neighbor(c, d, 1);
            let m = mesh.neighbor(c, d, -1);
            // Outgoing face (d, c): K = c, L = l; incoming face (d, m): K = m, L = c.
            acc += self.co_in[d][c] * x[c] + self.co_out[d][c] * x[l];
            acc -= self.co_in[d][m] * x[m] + self.co_out[d][m] * x[c];
        }
        acc / mesh.h()
    }

    /// Diagonal coefficient of [`Transport::divergence_at`] in cell `c`.
    #[inline]
    fn divergence_diag(&self, mesh: &Mesh, c: usize) -> f64 {
        let mut acc = 0.0;
        for d in 0..mesh.dim() {
            let m = mesh.neighbor(c, d, -1);
            acc += self.co_in[d][c] - self.co_out[d][m];
        }
        acc / mesh.h()
    }
}

struct ContinuityOp<'a> {
    mesh: &'a Mesh,
    transport: &'a Transport,
    inv_dt: f64,
}

impl LinearOp for ContinuityOp<'_> {
    fn len(&self) -> usize {
        self.mesh.cell_count()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mesh = self.mesh;
        crate::par::map_into(y, |c| {
            self.inv_dt * x[c] + self.transport.divergence_at(mesh, x, c)
        });
    }

    fn diagonal(&self) -> Vec<f64> {
        let mesh = self.mesh;
        crate::par::map_vec(mesh.cell_count(), |c| {
            self.inv_dt + self.transport.divergence_diag(mesh, c)
        })
    }
}

/// Momentum operator on the component-major vector `[w_0 cells, w_1 cells, ...]`.
struct MomentumOp<'a> {
    mesh: &'a Mesh,
    /// Transport with the frozen density folded in.
    transport: &'a Transport,
    rho: &'a CellField,
    inv_dt: f64,
    mu: f64,
    mu_lambda: f64,
}

impl LinearOp for MomentumOp<'_> {
    fn len(&self) -> usize {
        self.mesh.dim() * self.mesh.cell_count()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mesh = self.mesh;
        let dim = mesh.dim();
        let cells = mesh.cell_count();
        let inv2h = 0.5 / mesh.h();
        let inv4h2 = 0.25 / (mesh.h() * mesh.h());

        // div_h of the candidate velocity, shared by all components.
        let div: Vec<f64> = crate::par::map_vec(cells, |c| {
            let mut acc = 0.0;
            for i in 0..dim {
                let comp = &x[i * cells..(i + 1) * cells];
                acc += comp[mesh.neighbor(c, i, 1)] - comp[mesh.neighbor(c, i, -1)];
            }
            inv2h * acc
        });

        crate::par::map_into(y, |idx| {
            let (j, c) = (idx / cells, idx % cells);
            let comp = &x[j * cells..(j + 1) * cells];
            let mut acc = self.rho.get(c) * comp[c] * self.inv_dt
                + self.transport.divergence_at(mesh, comp, c);
            // mu Lap_c w_j + (mu + lambda) d_j div w, central differences.
            let mut wide = 0.0;
            for d in 0..dim {
                wide +=
                    comp[mesh.neighbor(c, d, 2)] + comp[mesh.neighbor(c, d, -2)] - 2.0 * comp[c];
            }
            acc -= self.mu * inv4h2 * wide;
            acc -= self.mu_lambda
                * inv2h
                * (div[mesh.neighbor(c, j, 1)] - div[mesh.neighbor(c, j, -1)]);
            acc
        });
    }

    fn diagonal(&self) -> Vec<f64> {
        let mesh = self.mesh;
        let dim = mesh.dim();
        let cells = mesh.cell_count();
        let inv4h2 = 0.25 / (mesh.h() * mesh.h());
        // On a 2-cell axis every central difference collapses, so both
        // viscous contributions vanish there; otherwise the self coefficient
        // of the wide Laplacian is -2 per direction and of d_j(div w)_j
        // it is -2/(4 h^2).
        let collapsed = mesh.cells_per_dim() == 2;
        crate::par::map_vec(dim * cells, |idx| {
            let (_, c) = (idx / cells, idx % cells);
            let mut diag = self.rho.get(c) * self.inv_dt + self.transport.divergence_diag(mesh, c);
            if !collapsed {
                diag += self.mu * inv4h2 * 2.0 * dim as f64;
                diag += self.mu_lambda * inv4h2 * 2.0;
            }
            diag
        })
    }
}

struct EnergyOp<'a> {
    mesh: &'a Mesh,
    /// Transport with the frozen density folded in.
    transport: &'a Transport,
    rho: &'a CellField,
    c_v: f64,
    inv_dt: f64,
    kappa: f64,
    rho_div_u: Vec<f64>,
}

impl LinearOp for EnergyOp<'_> {
    fn len(&self) -> usize {
        self.mesh.cell_count()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let mesh = self.mesh;
        let dim = mesh.dim();
        let inv_h2 = 1.0 / (mesh.h() * mesh.h());
        crate::par::map_into(y, |c| {
            let acc = self.c_v * self.rho.get(c) * x[c] * self.inv_dt
                + self.c_v * self.transport.divergence_at(mesh, x, c)
                + self.rho_div_u[c] * x[c];
            let mut lap = 0.0;
            for d in 0..dim {
                lap += x[mesh.neighbor(c, d, 1)] + x[mesh.neighbor(c, d, -1)] - 2.0 * x[c];
            }
            acc - self.kappa * inv_h2 * lap
        });
    }

    fn diagonal(&self) -> Vec<f64> {
        let mesh = self.mesh;
        let dim = mesh.dim();
        let inv_h2 = 1.0 / (mesh.h() * mesh.h());
        crate::par::map_vec(mesh.cell_count(), |c| {
            self.c_v * self.rho.get(c) * self.inv_dt
                + self.c_v * self.transport.divergence_diag(mesh, c)
                + self.rho_div_u[c]
                + self.kappa * inv_h2 * 2.0 * dim as f64
        })
    }
}

/// Result bundle of a full run.
#[derive(Debug)]
pub struct RunArtifacts {
    pub final_state: State,
    pub records: Vec<crate::diagnostics::DiagnosticsRecord>,
    /// States captured every `snapshot_every` steps (empty when disabled).
    pub snapshots: Vec<State>,
}

/// Advance from the configured initial state to `t_end`, emitting one
/// diagnostics record per step (plus the initial record). The number of
/// steps is `round(t_end / dt)` when that is within rounding of an integer,
/// otherwise `ceil`; all steps use the fixed `dt = c_dt * h`.
pub fn run(config: &RunConfig) -> Result<RunArtifacts, StepError> {
    let stepper = Stepper::new(config)?;
    let state0 = stepper.init_from_kind(config.init)?;
    let steps = step_count(config.t_end, stepper.dt());

    let mut records = Vec::with_capacity(steps + 1);
    records.push(crate::diagnostics::DiagnosticsRecord::initial(
        &stepper, &state0,
    ));
    let mut snapshots = Vec::new();
    let mut state = state0;
    for k in 1..=steps {
        let (next, report) = stepper.step(&state)?;
        records.push(crate::diagnostics::DiagnosticsRecord::from_step(
            &stepper, &next, &state, &report,
        ));
        if config.output.snapshot_every > 0 && k % config.output.snapshot_every == 0 {
            snapshots.push(next.clone());
        }
        state = next;
    }
    Ok(RunArtifacts {
        final_state: state,
        records,
        snapshots,
    })
}

/// Number of fixed-size steps to reach `t_end`.
pub fn step_count(t_end: f64, dt: f64) -> usize {
    if t_end <= 0.0 {
        return 0;
    }
    let ratio = t_end / dt;
    if (ratio - ratio.round()).abs() < 1e-9 * ratio.max(1.0) {
        ratio.round() as usize
    } else {
        ratio.ceil() as usize
    }
}
