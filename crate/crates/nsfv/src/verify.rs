//! Structural test battery and convergence harness.
//!
//! [`check_identities`] certifies the exact discrete-calculus identities on
//! random fields: the face product rule and average identity, grad-div
//! duality, both integration by parts formulae, the projection relations
//! `grad_h = Pi_T grad_E` / `dT Pi_E = Pi_T dE`, and
//! `lap_h = div_dual grad_edge`. These hold to rounding on any grid, so the
//! pass threshold is `1e-12` relative.
//!
//! [`check_convective_reformulation`] verifies the convective-term
//! reformulation against a smooth test function, using one shared quadrature
//! for the cell means of `grad phi` on both sides so the check is algebraic
//! rather than `O(h)`-approximate.
//!
//! [`check_renormalized_continuity`] and [`check_renormalized_energy`]
//! evaluate the renormalized balances of `B(rho) = rho log rho` and
//! `chi(theta) = log theta` on a converged step pair, with the mean-value
//! remainders replaced by exact Bregman remainders; their residuals are
//! bounded by the nonlinear solver tolerance.
//!
//! [`convergence_study`] runs a refinement sweep and reports `L^1`/`L^2`
//! errors and observed orders against the manufactured solution, a finer
//! grid (Cauchy), or a fixed reference run.

use crate::fields::{avg, jump, sum_cells, sum_faces, CellField, CellVectorField};
use crate::flux::{self, neg_part, FluxParams};
use crate::mesh::Mesh;
use crate::stepper::{ForcingKind, InitKind, RunConfig, State, StepError, Stepper};
use crate::thermo::{bregman_remainder, BregmanKind};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Maximum relative residual per identity over all trials.
#[derive(Debug, Clone)]
pub struct IdentityReport {
    pub entries: Vec<(&'static str, f64)>,
}

impl IdentityReport {
    pub fn max_residual(&self) -> f64 {
        self.entries.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn all_pass(&self, tol: f64) -> bool {
        self.max_residual() <= tol
    }
}

fn random_cell(mesh: &Arc<Mesh>, rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> CellField {
    CellField::from_values(
        mesh,
        (0..mesh.cell_count())
            .map(|_| rng.gen_range(lo..hi))
            .collect(),
    )
}

fn random_vector(mesh: &Arc<Mesh>, rng: &mut ChaCha8Rng) -> CellVectorField {
    CellVectorField::from_components(
        (0..mesh.dim())
            .map(|_| random_cell(mesh, rng, -1.0, 1.0))
            .collect(),
    )
}

fn rel(diff: f64, scale: f64) -> f64 {
    diff.abs() / (1.0 + scale.abs())
}

/// Run the exact-identity battery with `trials` random field draws.
pub fn check_identities(mesh: &Arc<Mesh>, trials: usize, seed: u64) -> IdentityReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = mesh.dim();
    let mut worst = [0.0f64; 8];

    for _ in 0..trials {
        let r = random_cell(mesh, &mut rng, -1.0, 1.0);
        let phi = random_cell(mesh, &mut rng, -1.0, 1.0);
        let v = random_vector(mesh, &mut rng);
        let q_data: Vec<Vec<f64>> = (0..dim)
            .map(|_| {
                (0..mesh.faces_per_dir())
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        let q = crate::fields::FaceField::from_fn(mesh, |d, f| q_data[d][f]);

        // Product rule and average identity, per face.
        for d in 0..dim {
            for f in 0..mesh.faces_per_dir() {
                let (ui, uo) = r.face_trace(d, f);
                let (vi, vo) = phi.face_trace(d, f);
                let lhs = jump(ui * vi, uo * vo);
                let rhs = avg(ui, uo) * jump(vi, vo) + jump(ui, uo) * avg(vi, vo);
                worst[0] = worst[0].max(rel(lhs - rhs, lhs));
                let lhs2 = avg(ui * vi, uo * vo) - avg(ui, uo) * avg(vi, vo);
                let rhs2 = 0.25 * jump(ui, uo) * jump(vi, vo);
                worst[1] = worst[1].max(rel(lhs2 - rhs2, lhs2));
            }
        }

        // Grad-div duality.
        let grad_r = crate::ops::grad_h(&r);
        let div_v = crate::ops::div_h(&v);
        let a = (0..dim)
            .map(|d| sum_cells(mesh, |c| grad_r.component(d).get(c) * v.component(d).get(c)))
            .sum::<f64>();
        let b = sum_cells(mesh, |c| r.get(c) * div_v.get(c));
        worst[2] = worst[2].max(rel(a + b, a));

        // The face-sum form of grad-div duality:
        // sum of (avg(r) jump(v) + avg(v) jump(r)) . n over faces is 0.
        let face_sum = sum_faces(mesh, |d, f| {
            let (ri, ro) = r.face_trace(d, f);
            let (vi, vo) = v.component(d).face_trace(d, f);
            avg(ri, ro) * jump(vi, vo) + avg(vi, vo) * jump(ri, ro)
        });
        let face_sum_scale = sum_faces(mesh, |d, f| {
            let (ri, ro) = r.face_trace(d, f);
            let (vi, vo) = v.component(d).face_trace(d, f);
            (avg(ri, ro) * jump(vi, vo)).abs() + (avg(vi, vo) * jump(ri, ro)).abs()
        });
        worst[3] = worst[3].max(rel(face_sum, face_sum_scale));

        // Integration by parts for the Laplacian, both forms.
        let lap_r = crate::ops::laplace_h(&r);
        let lap_phi = crate::ops::laplace_h(&phi);
        let ge_r = crate::ops::grad_edge(&r);
        let ge_phi = crate::ops::grad_edge(&phi);
        let ia = sum_cells(mesh, |c| lap_r.get(c) * phi.get(c));
        let ib = sum_cells(mesh, |c| r.get(c) * lap_phi.get(c));
        let ic: f64 = (0..dim)
            .map(|d| {
                mesh.dual_volume()
                    * crate::par::tree_sum_by(mesh.faces_per_dir(), |f| {
                        ge_r.get(d, f) * ge_phi.get(d, f)
                    })
            })
            .sum();
        worst[4] = worst[4].max(rel(ia - ib, ia).max(rel(ia + ic, ia)));

        // Integration by parts between the grids, per direction.
        let div_q = crate::ops::div_dual(&q);
        for d in 0..dim {
            let lhs = mesh.dual_volume()
                * crate::par::tree_sum_by(mesh.faces_per_dir(), |f| q.get(d, f) * ge_r.get(d, f));
            let rhs = sum_cells(mesh, |c| {
                // Isolate the direction-d part of div_dual.
                let plus = q.get(d, c);
                let minus = q.get(d, mesh.neighbor(c, d, -1));
                r.get(c) * (plus - minus) / mesh.h()
            });
            worst[5] = worst[5].max(rel(lhs + rhs, lhs));
        }
        let _ = div_q;

        // Projection relations: grad_h = Pi_T grad_E and dT Pi_E = Pi_T dE.
        let pi_t_ge = ge_r.project_to_cells();
        let pi_e_r = r.project_to_faces();
        let dt_pi_e = crate::ops::div_dual_per_dir(&pi_e_r);
        for d in 0..dim {
            for c in 0..mesh.cell_count() {
                let g = grad_r.component(d).get(c);
                worst[6] = worst[6]
                    .max(rel(g - pi_t_ge.component(d).get(c), g))
                    .max(rel(g - dt_pi_e.component(d).get(c), g));
            }
        }

        // lap_h = div_dual grad_edge.
        let composed = crate::ops::div_dual(&ge_r);
        for c in 0..mesh.cell_count() {
            worst[7] = worst[7].max(rel(lap_r.get(c) - composed.get(c), lap_r.get(c)));
        }
    }

    IdentityReport {
        entries: vec![
            ("product rule", worst[0]),
            ("average identity", worst[1]),
            ("grad-div duality", worst[2]),
            ("face-sum duality", worst[3]),
            ("laplace integration by parts", worst[4]),
            ("dual integration by parts", worst[5]),
            ("projection relations", worst[6]),
            ("laplace factorization", worst[7]),
        ],
    }
}

/// Verify the convective reformulation for a smooth test function `phi`
/// (given with its analytic gradient). Both occurrences of the cell means of
/// `grad phi` use the same quadrature, which makes the identity exact up to
/// rounding; returns the relative residual.
pub fn check_convective_reformulation<P, G>(
    mesh: &Arc<Mesh>,
    epsilon: f64,
    seed: u64,
    phi: P,
    grad_phi: G,
) -> f64
where
    P: Fn(&[f64]) -> f64 + Sync,
    G: Fn(&[f64], usize) -> f64 + Sync,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = mesh.dim();
    let params = FluxParams::new(epsilon, mesh.h()).expect("epsilon validated by caller");
    let r = random_cell(mesh, &mut rng, -1.0, 1.0);
    let v = random_vector(mesh, &mut rng);
    let phi_h = crate::fields::project_cell(mesh, &phi);
    // Shared cell means of the analytic gradient.
    let grad_mean = crate::fields::project_cell_vector(mesh, &grad_phi);
    let grad_pi = crate::ops::grad_h(&phi_h);

    let transport = sum_cells(mesh, |c| {
        (0..dim)
            .map(|d| r.get(c) * v.component(d).get(c) * grad_mean.component(d).get(c))
            .sum::<f64>()
    });
    let flux_sum = sum_faces(mesh, |d, f| {
        let (ri, ro) = r.face_trace(d, f);
        let ubar = v.normal_velocity(d, f);
        let (pi, po) = phi_h.face_trace(d, f);
        flux::diffusive_flux(ri, ro, ubar, &params) * jump(pi, po)
    });
    let lhs = transport - flux_sum;

    let face_term = sum_faces(mesh, |d, f| {
        let (ri, ro) = r.face_trace(d, f);
        let ubar = v.normal_velocity(d, f);
        let (vi, vo) = v.component(d).face_trace(d, f);
        let (pi, po) = phi_h.face_trace(d, f);
        (0.5 * ubar.abs() + params.h_eps() + 0.25 * jump(vi, vo)) * jump(ri, ro) * jump(pi, po)
    });
    let defect_term = sum_cells(mesh, |c| {
        (0..dim)
            .map(|d| {
                r.get(c)
                    * v.component(d).get(c)
                    * (grad_mean.component(d).get(c) - grad_pi.component(d).get(c))
            })
            .sum::<f64>()
    });
    let rhs = face_term + defect_term;
    (lhs - rhs).abs() / (1.0 + lhs.abs() + rhs.abs())
}

/// Residual of the renormalized continuity equation with `B = rho log rho`
/// and the exact Bregman remainders, against an arbitrary test field.
/// Bounded by the solver tolerance on converged step pairs.
pub fn check_renormalized_continuity(
    stepper: &Stepper,
    new: &State,
    old: &State,
    phi: &CellField,
) -> Result<f64, StepError> {
    require_positive_pair(new, old)?;
    let mesh = stepper.mesh();
    let dt = stepper.dt();
    let h_eps = stepper.flux_params().h_eps();

    let b = |x: f64| x * x.ln();
    let b_prime = |x: f64| x.ln() + 1.0;

    let lhs = sum_cells(mesh, |c| {
        (b(new.rho.get(c)) - b(old.rho.get(c))) / dt * phi.get(c)
    }) - sum_faces(mesh, |d, f| {
        let (ri, ro) = new.rho.face_trace(d, f);
        let ubar = new.u.normal_velocity(d, f);
        let (pi, po) = phi.face_trace(d, f);
        flux::upwind(b(ri), b(ro), ubar) * jump(pi, po)
    }) + {
        let div_u = crate::ops::div_h(&new.u);
        sum_cells(mesh, |c| {
            // B'(rho) rho - B(rho) = rho for B = rho log rho.
            phi.get(c) * new.rho.get(c) * div_u.get(c)
        })
    };

    let time_remainder = -sum_cells(mesh, |c| {
        bregman_remainder(BregmanKind::RhoLogRho, old.rho.get(c), new.rho.get(c))
            .expect("positivity checked")
            / dt
            * phi.get(c)
    });
    let face_remainder = sum_faces(mesh, |d, f| {
        let (rk, rl) = new.rho.face_trace(d, f);
        let ubar = new.u.normal_velocity(d, f);
        let (pk, pl) = phi.face_trace(d, f);
        // Both cell-side views: the receiving side carries [ubar . n]^- .
        pk * bregman_remainder(BregmanKind::RhoLogRho, rl, rk).expect("positive") * neg_part(ubar)
            + pl * bregman_remainder(BregmanKind::RhoLogRho, rk, rl).expect("positive")
                * neg_part(-ubar)
    });
    let diffusion = -h_eps
        * sum_faces(mesh, |d, f| {
            let (ri, ro) = new.rho.face_trace(d, f);
            let (pi, po) = phi.face_trace(d, f);
            jump(ri, ro) * jump(b_prime(ri) * pi, b_prime(ro) * po)
        });
    let forcing = match stepper.forcing() {
        Some(f) => sum_cells(mesh, |c| {
            b_prime(new.rho.get(c)) * phi.get(c) * f.mass.get(c)
        }),
        None => 0.0,
    };
    let rhs = time_remainder + face_remainder + diffusion + forcing;
    Ok((lhs - rhs).abs() / (1.0 + lhs.abs() + rhs.abs()))
}

/// Residual of the renormalized internal energy equation with
/// `chi = log theta` and exact Bregman remainders.
pub fn check_renormalized_energy(
    stepper: &Stepper,
    new: &State,
    old: &State,
    phi: &CellField,
) -> Result<f64, StepError> {
    require_positive_pair(new, old)?;
    let mesh = stepper.mesh();
    let gas = stepper.gas();
    let c_v = gas.c_v;
    let dt = stepper.dt();
    let h = mesh.h();
    let h_eps = stepper.flux_params().h_eps();

    let chi = |x: f64| x.ln();
    let chi_prime = |x: f64| 1.0 / x;

    let lhs =
        c_v * sum_cells(mesh, |c| {
            (new.rho.get(c) * chi(new.theta.get(c)) - old.rho.get(c) * chi(old.theta.get(c))) / dt
                * phi.get(c)
        }) - c_v
            * sum_faces(mesh, |d, f| {
                let (rk, rl) = new.rho.face_trace(d, f);
                let (tk, tl) = new.theta.face_trace(d, f);
                let ubar = new.u.normal_velocity(d, f);
                let (pk, pl) = phi.face_trace(d, f);
                flux::upwind(rk * chi(tk), rl * chi(tl), ubar) * jump(pk, pl)
            })
            + (gas.kappa / h)
                * sum_faces(mesh, |d, f| {
                    let (tk, tl) = new.theta.face_trace(d, f);
                    let (pk, pl) = phi.face_trace(d, f);
                    jump(tk, tl) * jump(chi_prime(tk) * pk, chi_prime(tl) * pl)
                });

    let d_h = crate::ops::sym_grad(&new.u);
    let div_u = crate::ops::div_h(&new.u);
    let p = new.pressure();
    let source = sum_cells(mesh, |c| {
        let q = 2.0 * gas.mu * d_h.frobenius_sq_at(c) + gas.lambda * div_u.get(c) * div_u.get(c)
            - p.get(c) * div_u.get(c);
        q * chi_prime(new.theta.get(c)) * phi.get(c)
    });
    let time_remainder = -(c_v / dt)
        * sum_cells(mesh, |c| {
            old.rho.get(c)
                * bregman_remainder(BregmanKind::LogTheta, old.theta.get(c), new.theta.get(c))
                    .expect("positive")
                * phi.get(c)
        });
    let face_remainder = c_v
        * sum_faces(mesh, |d, f| {
            let (rk, rl) = new.rho.face_trace(d, f);
            let (tk, tl) = new.theta.face_trace(d, f);
            let ubar = new.u.normal_velocity(d, f);
            let (pk, pl) = phi.face_trace(d, f);
            pk * rl
                * bregman_remainder(BregmanKind::LogTheta, tl, tk).expect("positive")
                * neg_part(ubar)
                + pl * rk
                    * bregman_remainder(BregmanKind::LogTheta, tk, tl).expect("positive")
                    * neg_part(-ubar)
        });
    let diffusion_rho = -c_v
        * h_eps
        * sum_faces(mesh, |d, f| {
            let (rk, rl) = new.rho.face_trace(d, f);
            let (tk, tl) = new.theta.face_trace(d, f);
            let (pk, pl) = phi.face_trace(d, f);
            // chi(theta) - chi'(theta) theta = log theta - 1.
            jump(rk, rl) * jump((chi(tk) - 1.0) * pk, (chi(tl) - 1.0) * pl)
        });
    let diffusion_rho_theta = -c_v
        * h_eps
        * sum_faces(mesh, |d, f| {
            let (rk, rl) = new.rho.face_trace(d, f);
            let (tk, tl) = new.theta.face_trace(d, f);
            let (pk, pl) = phi.face_trace(d, f);
            jump(rk * tk, rl * tl) * jump(chi_prime(tk) * pk, chi_prime(tl) * pl)
        });
    let forcing = match stepper.forcing() {
        Some(f) => {
            sum_cells(mesh, |c| {
                chi_prime(new.theta.get(c)) * phi.get(c) * f.energy.get(c)
            }) - c_v
                * sum_cells(mesh, |c| {
                    let th = new.theta.get(c);
                    (chi_prime(th) * th - chi(th)) * phi.get(c) * f.mass.get(c)
                })
        }
        None => 0.0,
    };
    let rhs =
        source + time_remainder + face_remainder + diffusion_rho + diffusion_rho_theta + forcing;
    Ok((lhs - rhs).abs() / (1.0 + lhs.abs() + rhs.abs()))
}

fn require_positive_pair(new: &State, old: &State) -> Result<(), StepError> {
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
    Ok(())
}

/// Error reference for a convergence study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyMode {
    /// Compare each grid against the next finer grid in the list.
    Cauchy,
    /// Compare against the projected manufactured solution (forcing on).
    Mms,
    /// Compare against a dedicated fine-grid run.
    Reference { n_ref: usize },
}

/// Per-grid errors and observed orders.
#[derive(Debug, Clone, Copy)]
pub struct StudyRow {
    pub n: usize,
    pub h: f64,
    /// `L^1` errors of (rho, u, theta).
    pub l1: [f64; 3],
    /// `L^2` errors of (rho, u, theta).
    pub l2: [f64; 3],
    /// Observed `L^2` orders vs the previous row.
    pub order: [Option<f64>; 3],
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub mode: StudyMode,
    pub rows: Vec<StudyRow>,
}

/// Run the refinement sweep. Grid sizes must be increasing; in `Cauchy`
/// and `Reference` modes every coarser grid must divide the finer one.
pub fn convergence_study(
    template: &RunConfig,
    grids: &[usize],
    mode: StudyMode,
) -> Result<StudyResult, StepError> {
    if grids.len() < 2 && matches!(mode, StudyMode::Cauchy) {
        return Err(StepError::Config(
            "cauchy study needs at least two grids".to_string(),
        ));
    }
    let mut states = Vec::new();
    for &n in grids {
        let mut config = template.clone();
        config.n = n;
        if matches!(mode, StudyMode::Mms) {
            config.init = InitKind::Mms;
            config.forcing = ForcingKind::Mms;
        }
        let artifacts = crate::stepper::run(&config)?;
        states.push(artifacts.final_state);
    }

    let reference = match mode {
        StudyMode::Reference { n_ref } => {
            let mut config = template.clone();
            config.n = n_ref;
            Some(crate::stepper::run(&config)?.final_state)
        }
        _ => None,
    };

    let mut rows: Vec<StudyRow> = Vec::new();
    for (i, &n) in grids.iter().enumerate() {
        let coarse = &states[i];
        let errs = match mode {
            StudyMode::Mms => {
                let mesh = coarse.mesh();
                let exact_rho = crate::fields::project_cell(mesh, crate::mms::rho);
                let exact_u = crate::fields::project_cell_vector(mesh, crate::mms::velocity);
                let exact_theta = crate::fields::project_cell(mesh, crate::mms::theta);
                field_errors(coarse, &exact_rho, &exact_u, &exact_theta)
            }
            StudyMode::Cauchy => {
                if i + 1 >= states.len() {
                    break;
                }
                let (r, u, t) = restrict(&states[i + 1], coarse.mesh())?;
                field_errors(coarse, &r, &u, &t)
            }
            StudyMode::Reference { .. } => {
                let fine = reference.as_ref().expect("reference run exists");
                let (r, u, t) = restrict(fine, coarse.mesh())?;
                field_errors(coarse, &r, &u, &t)
            }
        };
        let order = match rows.last() {
            Some(prev) => {
                let mut o = [None; 3];
                for (slot, (&err, &prev_err)) in o.iter_mut().zip(errs.1.iter().zip(&prev.l2)) {
                    if err > 0.0 && prev_err > 0.0 {
                        *slot = Some((prev_err / err).log2());
                    }
                }
                o
            }
            None => [None; 3],
        };
        rows.push(StudyRow {
            n,
            h: coarse.mesh().h(),
            l1: errs.0,
            l2: errs.1,
            order,
        });
    }
    Ok(StudyResult { mode, rows })
}

/// `(L^1, L^2)` errors of (rho, u, theta) against reference fields on the
/// same mesh.
fn field_errors(
    state: &State,
    ref_rho: &CellField,
    ref_u: &CellVectorField,
    ref_theta: &CellField,
) -> ([f64; 3], [f64; 3]) {
    let mesh = state.mesh();
    let dim = mesh.dim();
    let scalar = |a: &CellField, b: &CellField| {
        let l1 = sum_cells(mesh, |c| (a.get(c) - b.get(c)).abs());
        let l2 = sum_cells(mesh, |c| {
            let d = a.get(c) - b.get(c);
            d * d
        })
        .sqrt();
        (l1, l2)
    };
    let (r1, r2) = scalar(&state.rho, ref_rho);
    let (t1, t2) = scalar(&state.theta, ref_theta);
    let u1 = sum_cells(mesh, |c| {
        (0..dim)
            .map(|j| (state.u.component(j).get(c) - ref_u.component(j).get(c)).powi(2))
            .sum::<f64>()
            .sqrt()
    });
    let u2 = sum_cells(mesh, |c| {
        (0..dim)
            .map(|j| (state.u.component(j).get(c) - ref_u.component(j).get(c)).powi(2))
            .sum::<f64>()
    })
    .sqrt();
    ([r1, u1, t1], [r2, u2, t2])
}

/// Cell-average restriction of a finer state onto a coarser mesh (exact for
/// piecewise constants; the grids must nest).
fn restrict(
    fine: &State,
    coarse: &Arc<Mesh>,
) -> Result<(CellField, CellVectorField, CellField), StepError> {
    let fm = fine.mesh();
    let (nf, nc) = (fm.cells_per_dim(), coarse.cells_per_dim());
    if nf % nc != 0 {
        return Err(StepError::Config(format!(
            "grids do not nest: {nf} not a multiple of {nc}"
        )));
    }
    let ratio = nf / nc;
    let dim = coarse.dim();
    let project = |field: &CellField| {
        CellField::from_fn(coarse, |c| {
            let base = coarse.cell_coords(c);
            let mut acc = 0.0;
            let sub = ratio.pow(dim as u32);
            for s in 0..sub {
                let mut idx = s;
                let mut fine_coords = [0usize; 3];
                for d in 0..dim {
                    fine_coords[d] = base[d] * ratio + idx % ratio;
                    idx /= ratio;
                }
                acc += field.get(fm.cell_id(&fine_coords[..dim]));
            }
            acc / sub as f64
        })
    };
    let rho = project(&fine.rho);
    let theta = project(&fine.theta);
    let u =
        CellVectorField::from_components((0..dim).map(|j| project(fine.u.component(j))).collect());
    Ok((rho, u, theta))
}
