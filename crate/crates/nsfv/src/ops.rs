//! Discrete differential operators on the primal and dual grids.
//!
//! On cell fields: `grad_h` / `div_h` (face-average form, equal to central
//! differences), the compact Laplacian `laplace_h`, and the symmetric
//! gradient `sym_grad`. Between grids: `grad_edge` (per-face differences,
//! valued on dual cells) and `div_dual` (its adjoint back to cells). The
//! algebraic relations between them (grad-div duality, the two integration by
//! parts formulae, `laplace_h = div_dual o grad_edge`, `grad_h` as the cell
//! mean of `grad_edge`) are exact and covered by the identity battery in
//! [`crate::verify`].
//!
//! Everything here is matrix-free: operators are pure functions over
//! immutable inputs, parallel over cells and faces.

use crate::fields::{CellField, CellVectorField, FaceField};
use crate::mesh::Mesh;
use crate::par;
use std::sync::Arc;

/// `(grad_h r)_K = (1/|K|) sum over faces of |sigma| avg(r) n`.
///
/// Evaluated in the equivalent jump form `(1/2h) sum of jump(r) n` (the
/// outward normals of a cell sum to zero), which reduces to one central
/// difference per direction.
pub fn grad_h(r: &CellField) -> CellVectorField {
    let mesh = r.mesh().clone();
    let inv2h = 0.5 / mesh.h();
    CellVectorField::from_fn(&mesh, |d, c| {
        let plus = r.get(mesh.neighbor(c, d, 1));
        let minus = r.get(mesh.neighbor(c, d, -1));
        inv2h * (plus - minus)
    })
}

/// `(div_h v)_K = (1/|K|) sum over faces of |sigma| avg(v) . n`.
pub fn div_h(v: &CellVectorField) -> CellField {
    let mesh = v.mesh().clone();
    let inv2h = 0.5 / mesh.h();
    CellField::from_fn(&mesh, |c| {
        let mut acc = 0.0;
        for d in 0..mesh.dim() {
            let comp = v.component(d);
            acc += comp.get(mesh.neighbor(c, d, 1)) - comp.get(mesh.neighbor(c, d, -1));
        }
        inv2h * acc
    })
}

/// Face differences `(r_L - r_K) / h` on every oriented face: the dual-grid
/// gradient, one component per direction.
pub fn grad_edge(r: &CellField) -> FaceField {
    let mesh = r.mesh().clone();
    let inv_h = 1.0 / mesh.h();
    FaceField::from_fn(&mesh, |d, f| {
        let (vin, vout) = r.face_trace(d, f);
        inv_h * (vout - vin)
    })
}

/// Per-direction dual differences: component `d` is `(q at +face - q at
/// -face) / h` for the direction-`d` face family alone, so that `div_dual`
/// is the trace of this map.
pub fn div_dual_per_dir(q: &FaceField) -> CellVectorField {
    let mesh = q.mesh().clone();
    let inv_h = 1.0 / mesh.h();
    CellVectorField::from_fn(&mesh, |d, c| {
        inv_h * (q.get(d, c) - q.get(d, mesh.neighbor(c, d, -1)))
    })
}

/// Dual divergence: per cell, `sum over d of (q at +face - q at -face) / h`.
pub fn div_dual(q: &FaceField) -> CellField {
    let mesh = q.mesh().clone();
    let inv_h = 1.0 / mesh.h();
    CellField::from_fn(&mesh, |c| {
        let mut acc = 0.0;
        for d in 0..mesh.dim() {
            acc += q.get(d, c) - q.get(d, mesh.neighbor(c, d, -1));
        }
        inv_h * acc
    })
}

/// Compact Laplacian `(1/h^2) sum over faces of (r_nb - r_K)`.
pub fn laplace_h(r: &CellField) -> CellField {
    let mesh = r.mesh().clone();
    let inv_h2 = 1.0 / (mesh.h() * mesh.h());
    CellField::from_fn(&mesh, |c| {
        let mut acc = 0.0;
        for d in 0..mesh.dim() {
            acc += r.get(mesh.neighbor(c, d, 1)) + r.get(mesh.neighbor(c, d, -1)) - 2.0 * r.get(c);
        }
        inv_h2 * acc
    })
}

/// Cell-constant symmetric matrix field, `dim x dim` entries per cell.
#[derive(Debug, Clone)]
pub struct CellMatrixField {
    mesh: Arc<Mesh>,
    dim: usize,
    /// Cell-major storage, `dim*dim` entries per cell, row-major within a cell.
    data: Vec<f64>,
}

impl CellMatrixField {
    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    #[inline]
    pub fn get(&self, cell: usize, row: usize, col: usize) -> f64 {
        self.data[cell * self.dim * self.dim + row * self.dim + col]
    }

    /// Squared Frobenius norm of the matrix in one cell.
    #[inline]
    pub fn frobenius_sq_at(&self, cell: usize) -> f64 {
        let dd = self.dim * self.dim;
        let base = cell * dd;
        self.data[base..base + dd].iter().map(|v| v * v).sum()
    }

    /// Trace of the matrix in one cell.
    #[inline]
    pub fn trace_at(&self, cell: usize) -> f64 {
        (0..self.dim).map(|j| self.get(cell, j, j)).sum()
    }

    /// `integral of A : B` over the domain.
    pub fn contract(&self, other: &CellMatrixField) -> f64 {
        let vol = self.mesh.cell_volume();
        vol * par::tree_sum_by(self.data.len(), |i| self.data[i] * other.data[i])
    }
}

/// Symmetric velocity gradient `D_h(v) = (grad_h v + grad_h v^T) / 2`.
pub fn sym_grad(v: &CellVectorField) -> CellMatrixField {
    let mesh = v.mesh().clone();
    let dim = mesh.dim();
    let inv2h = 0.5 / mesh.h();
    let dd = dim * dim;
    let data = par::map_vec(mesh.cell_count() * dd, |idx| {
        let cell = idx / dd;
        let row = (idx % dd) / dim;
        let col = idx % dim;
        // (d_col v_row + d_row v_col) / 2 with central differences.
        let a = inv2h
            * (v.component(row).get(mesh.neighbor(cell, col, 1))
                - v.component(row).get(mesh.neighbor(cell, col, -1)));
        let b = inv2h
            * (v.component(col).get(mesh.neighbor(cell, row, 1))
                - v.component(col).get(mesh.neighbor(cell, row, -1)));
        0.5 * (a + b)
    });
    CellMatrixField { mesh, dim, data }
}

/// Row-wise divergence of a cell matrix field: component `j` is
/// `div_h` of the `j`-th row.
pub fn div_matrix(m: &CellMatrixField) -> CellVectorField {
    let mesh = m.mesh().clone();
    let inv2h = 0.5 / mesh.h();
    CellVectorField::from_fn(&mesh, |j, c| {
        let mut acc = 0.0;
        for d in 0..mesh.dim() {
            acc += m.get(mesh.neighbor(c, d, 1), j, d) - m.get(mesh.neighbor(c, d, -1), j, d);
        }
        inv2h * acc
    })
}

/// Viscous momentum operator `2 mu div_h(D_h(v)) + lambda grad_h(div_h v)`,
/// in the fused form `mu Lap_c v + (mu + lambda) grad_h(div_h v)` where
/// `Lap_c` is the composition of central differences (stencil `+-2` cells).
/// The fused and literal forms agree exactly because central differences
/// commute on a periodic lattice.
pub fn viscous(v: &CellVectorField, mu: f64, lambda: f64) -> CellVectorField {
    let mesh = v.mesh().clone();
    let div = div_h(v);
    let grad_div = grad_h(&div);
    let inv4h2 = 0.25 / (mesh.h() * mesh.h());
    CellVectorField::from_fn(&mesh, |j, c| {
        let comp = v.component(j);
        let mut wide_lap = 0.0;
        for d in 0..mesh.dim() {
            wide_lap += comp.get(mesh.neighbor(c, d, 2)) + comp.get(mesh.neighbor(c, d, -2))
                - 2.0 * comp.get(c);
        }
        mu * inv4h2 * wide_lap + (mu + lambda) * grad_div.component(j).get(c)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::project_cell;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_cell_field(mesh: &Arc<Mesh>, rng: &mut ChaCha8Rng) -> CellField {
        let data = (0..mesh.cell_count())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        CellField::from_values(mesh, data)
    }

    fn random_vector_field(mesh: &Arc<Mesh>, rng: &mut ChaCha8Rng) -> CellVectorField {
        CellVectorField::from_components(
            (0..mesh.dim())
                .map(|_| random_cell_field(mesh, rng))
                .collect(),
        )
    }

    #[test]
    fn operators_annihilate_constants() {
        let m = Mesh::unit(3, 4).unwrap();
        let r = CellField::constant(&m, 7.5);
        let v = CellVectorField::from_fn(&m, |_, _| 1.25);
        assert!(grad_h(&r).component(0).max_abs() == 0.0);
        assert!(div_h(&v).max_abs() == 0.0);
        assert!(laplace_h(&r).max_abs() == 0.0);
        let ge = grad_edge(&r);
        assert!(ge.dir(0).iter().all(|&x| x == 0.0));
        let d = sym_grad(&v);
        assert!((0..m.cell_count()).all(|c| d.frobenius_sq_at(c) == 0.0));
        let q = FaceField::from_fn(&m, |_, _| 3.0);
        assert!(div_dual(&q).max_abs() == 0.0);
    }

    #[test]
    fn grad_h_vanishes_on_two_cell_grids() {
        // On a 2-per-dim periodic grid both direction faces of a cell see the
        // same neighbor with opposite normals.
        let m = Mesh::unit(2, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = random_cell_field(&m, &mut rng);
        let g = grad_h(&r);
        assert_eq!(g.component(0).max_abs(), 0.0);
        assert_eq!(g.component(1).max_abs(), 0.0);
    }

    #[test]
    fn grad_edge_hand_value() {
        // 2x2 grid, h = 0.5, r(0,0)=1, r(1,0)=3: face between them gives 4.
        let m = Mesh::unit(2, 2).unwrap();
        let mut r = CellField::zeros(&m);
        r.values_mut()[m.cell_id(&[0, 0])] = 1.0;
        r.values_mut()[m.cell_id(&[1, 0])] = 3.0;
        let ge = grad_edge(&r);
        assert_eq!(ge.get(0, m.cell_id(&[0, 0])), 4.0);
    }

    #[test]
    fn laplace_hand_value() {
        // 2x2 grid, h = 0.5, r = {1,3;2,4}: at (0,0) the jump sum is 6, /h^2 = 24.
        let m = Mesh::unit(2, 2).unwrap();
        let mut r = CellField::zeros(&m);
        r.values_mut()[m.cell_id(&[0, 0])] = 1.0;
        r.values_mut()[m.cell_id(&[1, 0])] = 3.0;
        r.values_mut()[m.cell_id(&[0, 1])] = 2.0;
        r.values_mut()[m.cell_id(&[1, 1])] = 4.0;
        let lap = laplace_h(&r);
        assert!((lap.get(m.cell_id(&[0, 0])) - 24.0).abs() < 1e-12);
    }

    #[test]
    fn laplace_equals_dual_divergence_of_edge_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (dim, n) in [(2usize, 8usize), (3, 4)] {
            let m = Mesh::unit(dim, n).unwrap();
            let r = random_cell_field(&m, &mut rng);
            let a = laplace_h(&r);
            let b = div_dual(&grad_edge(&r));
            let scale = a.max_abs().max(1.0);
            for c in 0..m.cell_count() {
                assert!((a.get(c) - b.get(c)).abs() <= 1e-13 * scale);
            }
        }
    }

    #[test]
    fn grad_h_is_cell_mean_of_grad_edge() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = Mesh::unit(2, 8).unwrap();
        let r = random_cell_field(&m, &mut rng);
        let g = grad_h(&r);
        let pi_t = grad_edge(&r).project_to_cells();
        for d in 0..2 {
            for c in 0..m.cell_count() {
                let diff = (g.component(d).get(c) - pi_t.component(d).get(c)).abs();
                assert!(diff <= 1e-13 * (1.0 + g.component(d).max_abs()));
            }
        }
    }

    #[test]
    fn duality_and_integration_by_parts_on_random_fields() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (dim, n) in [(2usize, 8usize), (3, 4)] {
            let m = Mesh::unit(dim, n).unwrap();
            let r = random_cell_field(&m, &mut rng);
            let phi = random_cell_field(&m, &mut rng);
            let v = random_vector_field(&m, &mut rng);

            // grad-div duality.
            let g = grad_h(&r);
            let lhs: f64 = (0..dim)
                .map(|d| {
                    crate::fields::sum_cells(&m, |c| g.component(d).get(c) * v.component(d).get(c))
                })
                .sum();
            let rhs = crate::fields::sum_cells(&m, |c| r.get(c) * div_h(&v).get(c));
            assert!((lhs + rhs).abs() <= 1e-13 * (1.0 + lhs.abs()));

            // Laplace symmetry and the edge-gradient form.
            let lap_r = laplace_h(&r);
            let lap_phi = laplace_h(&phi);
            let a = crate::fields::sum_cells(&m, |c| lap_r.get(c) * phi.get(c));
            let b = crate::fields::sum_cells(&m, |c| r.get(c) * lap_phi.get(c));
            let ge_r = grad_edge(&r);
            let ge_phi = grad_edge(&phi);
            let vol = m.dual_volume();
            let c_: f64 = (0..dim)
                .map(|d| {
                    vol * crate::par::tree_sum_by(m.faces_per_dir(), |f| {
                        ge_r.get(d, f) * ge_phi.get(d, f)
                    })
                })
                .sum();
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
            assert!((a + c_).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn sym_grad_is_symmetric_with_trace_div() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Mesh::unit(3, 4).unwrap();
        let v = random_vector_field(&m, &mut rng);
        let d = sym_grad(&v);
        let div = div_h(&v);
        for c in 0..m.cell_count() {
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(d.get(c, i, j), d.get(c, j, i));
                }
            }
            assert!((d.trace_at(c) - div.get(c)).abs() <= 1e-13 * (1.0 + div.get(c).abs()));
        }
    }

    #[test]
    fn fused_viscous_operator_matches_literal_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for (dim, n) in [(2usize, 6usize), (3, 4)] {
            let m = Mesh::unit(dim, n).unwrap();
            let v = random_vector_field(&m, &mut rng);
            let (mu, lambda) = (0.013, 0.004);
            let fused = viscous(&v, mu, lambda);
            let literal_a = div_matrix(&sym_grad(&v));
            let literal_b = grad_h(&div_h(&v));
            for j in 0..dim {
                for c in 0..m.cell_count() {
                    let lit = 2.0 * mu * literal_a.component(j).get(c)
                        + lambda * literal_b.component(j).get(c);
                    let diff = (fused.component(j).get(c) - lit).abs();
                    assert!(
                        diff <= 1e-12 * (1.0 + lit.abs()),
                        "fused vs literal viscous mismatch: {diff}"
                    );
                }
            }
        }
    }

    #[test]
    fn operators_commute_with_grid_translations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = Mesh::unit(2, 6).unwrap();
        let r = random_cell_field(&m, &mut rng);
        let shifted = CellField::from_fn(&m, |c| r.get(m.neighbor(c, 0, 1)));
        let lap_then_shift = {
            let lap = laplace_h(&r);
            CellField::from_fn(&m, |c| lap.get(m.neighbor(c, 0, 1)))
        };
        let shift_then_lap = laplace_h(&shifted);
        for c in 0..m.cell_count() {
            assert_eq!(lap_then_shift.get(c), shift_then_lap.get(c));
        }
    }

    #[test]
    fn refinement_study_of_interpolation_errors() {
        // grad_h(Pi_T f), grad_edge(Pi_T f) and div_h(Pi_T v) approach the
        // analytic derivatives with observed order >= 0.9.
        let f = |x: &[f64]| (2.0 * PI * x[0]).sin();
        let dfdx = |x: f64| 2.0 * PI * (2.0 * PI * x).cos();
        let mut errs_grad = Vec::new();
        let mut errs_edge = Vec::new();
        let mut errs_div = Vec::new();
        for n in [16usize, 32, 64] {
            let m = Mesh::unit(2, n).unwrap();
            let r = project_cell(&m, f);
            let g = grad_h(&r);
            let e = crate::fields::sum_cells(&m, |c| {
                let x = m.cell_center(c);
                let d = g.component(0).get(c) - dfdx(x[0]);
                d * d
            })
            .sqrt();
            errs_grad.push(e);

            let ge = grad_edge(&r);
            // x-faces of (0, c) sit at the +x cell boundary.
            let ee = (m.dual_volume()
                * crate::par::tree_sum_by(m.faces_per_dir(), |fc| {
                    let coords = m.cell_coords(fc);
                    let xf = (coords[0] as f64 + 1.0) * m.h();
                    let d = ge.get(0, fc) - dfdx(xf);
                    d * d
                }))
            .sqrt();
            errs_edge.push(ee);

            let v = crate::fields::project_cell_vector(&m, |x, j| if j == 0 { f(x) } else { 0.0 });
            let dv = div_h(&v);
            let ed = crate::fields::sum_cells(&m, |c| {
                let x = m.cell_center(c);
                let d = dv.get(c) - dfdx(x[0]);
                d * d
            })
            .sqrt();
            errs_div.push(ed);
        }
        for errs in [&errs_grad, &errs_edge, &errs_div] {
            for pair in errs.windows(2) {
                let order = (pair[0] / pair[1]).log2();
                assert!(
                    order >= 0.9,
                    "interpolation order too low: {order} ({errs:?})"
                );
            }
        }
    }
}
