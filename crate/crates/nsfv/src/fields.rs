//! Piecewise-constant fields on the primal and dual grids.
//!
//! [`CellField`] holds one value per cell (the space of cell-constant
//! functions), [`CellVectorField`] one such field per component, and
//! [`FaceField`] one value per face and direction (functions that are constant
//! on the dual cells of each direction). Projections of analytic functions use
//! a tensor 3-point Gauss rule per cell, which reproduces constants exactly
//! and integrates cubics exactly.
//!
//! Face traces follow the mesh orientation: `in` is the owning cell of the
//! face, `out` its `+e_dir` neighbor, `avg = (in + out) / 2` and
//! `jump = out - in`. Every jump/average in the crate goes through these two
//! functions so the sign convention lives in one place.

use crate::mesh::Mesh;
use crate::par;
use std::sync::Arc;

/// Gauss-Legendre nodes on [0, 1].
const GAUSS_X: [f64; 3] = [
    0.5 - 0.387_298_334_620_741_7,
    0.5,
    0.5 + 0.387_298_334_620_741_7,
];
/// Matching weights, summing to 1.
const GAUSS_W: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

/// Average of the oriented pair `(v_in, v_out)`.
#[inline]
pub fn avg(v_in: f64, v_out: f64) -> f64 {
    0.5 * (v_in + v_out)
}

/// Jump of the oriented pair: `v_out - v_in`.
#[inline]
pub fn jump(v_in: f64, v_out: f64) -> f64 {
    v_out - v_in
}

/// Scalar field, one value per cell.
#[derive(Debug, Clone)]
pub struct CellField {
    mesh: Arc<Mesh>,
    data: Vec<f64>,
}

impl CellField {
    pub fn constant(mesh: &Arc<Mesh>, value: f64) -> Self {
        CellField {
            mesh: mesh.clone(),
            data: vec![value; mesh.cell_count()],
        }
    }

    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        Self::constant(mesh, 0.0)
    }

    /// Build from a per-cell closure (evaluated in parallel when enabled).
    pub fn from_fn<F>(mesh: &Arc<Mesh>, f: F) -> Self
    where
        F: Fn(usize) -> f64 + Sync,
    {
        CellField {
            mesh: mesh.clone(),
            data: par::map_vec(mesh.cell_count(), f),
        }
    }

    pub fn from_values(mesh: &Arc<Mesh>, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), mesh.cell_count(), "value count != cell count");
        CellField {
            mesh: mesh.clone(),
            data,
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, cell: usize) -> f64 {
        self.data[cell]
    }

    /// Oriented face trace `(v_in, v_out)` of the face `(dir, cell)`.
    #[inline]
    pub fn face_trace(&self, dir: usize, face: usize) -> (f64, f64) {
        let (k, l) = self.mesh.face_cells(dir, face);
        (self.data[k], self.data[l])
    }

    /// `integral over Omega = sum over K of |K| v_K` (deterministic tree sum).
    pub fn integrate(&self) -> f64 {
        self.mesh.cell_volume() * par::tree_sum(&self.data)
    }

    /// Discrete `L^p` norm, `p >= 1`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let vol = self.mesh.cell_volume();
        (vol * par::tree_sum_by(self.data.len(), |i| self.data[i].abs().powf(p))).powf(1.0 / p)
    }

    pub fn l2_norm(&self) -> f64 {
        let vol = self.mesh.cell_volume();
        (vol * par::tree_sum_by(self.data.len(), |i| self.data[i] * self.data[i])).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        par::max_by(self.data.len(), |i| self.data[i].abs())
    }

    pub fn min(&self) -> f64 {
        par::min_by(self.data.len(), |i| self.data[i])
    }

    pub fn max(&self) -> f64 {
        par::max_by(self.data.len(), |i| self.data[i])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Projection of this cell field onto the dual grids: the dual-cell mean
    /// of a cell-constant function is exactly the face average.
    pub fn project_to_faces(&self) -> FaceField {
        let mesh = self.mesh.clone();
        let per_dir = (0..mesh.dim())
            .map(|d| {
                par::map_vec(mesh.faces_per_dir(), |f| {
                    let (vin, vout) = self.face_trace(d, f);
                    avg(vin, vout)
                })
            })
            .collect();
        FaceField { mesh, per_dir }
    }
}

/// Vector field with one [`CellField`] per spatial component.
#[derive(Debug, Clone)]
pub struct CellVectorField {
    components: Vec<CellField>,
}

impl CellVectorField {
    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        CellVectorField {
            components: (0..mesh.dim()).map(|_| CellField::zeros(mesh)).collect(),
        }
    }

    pub fn from_components(components: Vec<CellField>) -> Self {
        assert_eq!(
            components.len(),
            components[0].mesh().dim(),
            "component count != dim"
        );
        CellVectorField { components }
    }

    pub fn from_fn<F>(mesh: &Arc<Mesh>, f: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        CellVectorField {
            components: (0..mesh.dim())
                .map(|j| CellField::from_fn(mesh, |c| f(j, c)))
                .collect(),
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        self.components[0].mesh()
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn component(&self, j: usize) -> &CellField {
        &self.components[j]
    }

    pub fn component_mut(&mut self, j: usize) -> &mut CellField {
        &mut self.components[j]
    }

    /// Squared Euclidean magnitude in one cell.
    #[inline]
    pub fn norm_sq_at(&self, cell: usize) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let v = c.get(cell);
                v * v
            })
            .sum()
    }

    pub fn max_speed(&self) -> f64 {
        par::max_by(self.mesh().cell_count(), |c| self.norm_sq_at(c).sqrt())
    }

    /// Face-normal average velocity `avg(u) . n` on the face `(dir, face)`.
    #[inline]
    pub fn normal_velocity(&self, dir: usize, face: usize) -> f64 {
        let (vin, vout) = self.components[dir].face_trace(dir, face);
        avg(vin, vout)
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.is_finite())
    }

    /// `(integral of |u|^p)^(1/p)`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let mesh = self.mesh();
        let vol = mesh.cell_volume();
        (vol * par::tree_sum_by(mesh.cell_count(), |c| self.norm_sq_at(c).powf(0.5 * p)))
            .powf(1.0 / p)
    }
}

/// Field with one value per face, per direction: data on the dual grids.
#[derive(Debug, Clone)]
pub struct FaceField {
    mesh: Arc<Mesh>,
    per_dir: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn zeros(mesh: &Arc<Mesh>) -> Self {
        FaceField {
            mesh: mesh.clone(),
            per_dir: vec![vec![0.0; mesh.faces_per_dir()]; mesh.dim()],
        }
    }

    pub fn from_fn<F>(mesh: &Arc<Mesh>, f: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync,
    {
        FaceField {
            mesh: mesh.clone(),
            per_dir: (0..mesh.dim())
                .map(|d| par::map_vec(mesh.faces_per_dir(), |i| f(d, i)))
                .collect(),
        }
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn dir(&self, d: usize) -> &[f64] {
        &self.per_dir[d]
    }

    pub fn dir_mut(&mut self, d: usize) -> &mut [f64] {
        &mut self.per_dir[d]
    }

    #[inline]
    pub fn get(&self, dir: usize, face: usize) -> f64 {
        self.per_dir[dir][face]
    }

    pub fn is_finite(&self) -> bool {
        self.per_dir.iter().flatten().all(|v| v.is_finite())
    }

    /// Integral over the dual grid of direction `d`: `sum of |D_sigma| q_sigma`.
    pub fn integrate_dir(&self, d: usize) -> f64 {
        self.mesh.dual_volume() * par::tree_sum(&self.per_dir[d])
    }

    /// Sum over all directions of the per-direction integrals.
    pub fn integrate(&self) -> f64 {
        (0..self.per_dir.len()).map(|d| self.integrate_dir(d)).sum()
    }

    /// Squared `L^2` norm summed over directions (the norm of a `W_h` vector).
    pub fn l2_norm_sq(&self) -> f64 {
        let vol = self.mesh.dual_volume();
        (0..self.per_dir.len())
            .map(|d| {
                let q = &self.per_dir[d];
                vol * par::tree_sum_by(q.len(), |i| q[i] * q[i])
            })
            .sum()
    }

    /// Cell means per direction: the primal projection of dual-grid data.
    /// Each cell is covered by halves of its two direction-`d` dual cells,
    /// so the mean is the average of the two face values.
    pub fn project_to_cells(&self) -> CellVectorField {
        let mesh = &self.mesh;
        CellVectorField::from_fn(mesh, |d, c| {
            let plus = self.per_dir[d][c];
            let minus = self.per_dir[d][mesh.neighbor(c, d, -1)];
            0.5 * (plus + minus)
        })
    }
}

/// Weighted face sum `sum over dirs, faces of |sigma| f(dir, face)`, with the
/// deterministic tree reduction.
pub fn sum_faces<F>(mesh: &Mesh, f: F) -> f64
where
    F: Fn(usize, usize) -> f64 + Sync,
{
    let per_face = mesh.face_measure();
    let nf = mesh.faces_per_dir();
    per_face
        * (0..mesh.dim())
            .map(|d| par::tree_sum_by(nf, |i| f(d, i)))
            .sum::<f64>()
}

/// Cell sum `sum over K of |K| f(K)`.
pub fn sum_cells<F>(mesh: &Mesh, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    mesh.cell_volume() * par::tree_sum_by(mesh.cell_count(), f)
}

/// Cell-mean projection of an analytic function (tensor 3-point Gauss).
pub fn project_cell<F>(mesh: &Arc<Mesh>, f: F) -> CellField
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let h = mesh.h();
    let dim = mesh.dim();
    let field = CellField::from_fn(mesh, |c| {
        let coords = mesh.cell_coords(c);
        let mut origin = [0.0f64; 3];
        for d in 0..dim {
            origin[d] = coords[d] as f64 * h;
        }
        cell_mean(&f, &origin, &[h; 3], dim)
    });
    assert!(field.is_finite(), "projection produced non-finite samples");
    field
}

/// Component-wise cell-mean projection of an analytic vector function.
pub fn project_cell_vector<F>(mesh: &Arc<Mesh>, f: F) -> CellVectorField
where
    F: Fn(&[f64], usize) -> f64 + Sync,
{
    CellVectorField::from_components(
        (0..mesh.dim())
            .map(|j| project_cell(mesh, |x| f(x, j)))
            .collect(),
    )
}

/// Dual-cell-mean projection of an analytic function. The dual cell of face
/// `(d, k)` is the `+e_d` half of cell `k` together with the `-e_d` half of
/// its neighbor `l`; the wrapped half is evaluated at its own physical
/// location on the torus.
pub fn project_face<F>(mesh: &Arc<Mesh>, f: F) -> FaceField
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let h = mesh.h();
    let dim = mesh.dim();
    let field = FaceField::from_fn(mesh, |d, face| {
        let (k, l) = mesh.face_cells(d, face);
        let ck = mesh.cell_coords(k);
        let cl = mesh.cell_coords(l);
        let mut ok = [0.0f64; 3];
        let mut ol = [0.0f64; 3];
        for dd in 0..dim {
            ok[dd] = ck[dd] as f64 * h;
            ol[dd] = cl[dd] as f64 * h;
        }
        // Half of k touching the face, half of l on the other side.
        let mut ext = [h; 3];
        ext[d] = 0.5 * h;
        ok[d] += 0.5 * h;
        let mean_k = cell_mean(&f, &ok, &ext, dim);
        let mean_l = cell_mean(&f, &ol, &ext, dim);
        0.5 * (mean_k + mean_l)
    });
    assert!(field.is_finite(), "projection produced non-finite samples");
    field
}

/// Mean of `f` over the box `origin + [0, ext]^dim` by tensor Gauss quadrature.
fn cell_mean<F>(f: &F, origin: &[f64; 3], ext: &[f64; 3], dim: usize) -> f64
where
    F: Fn(&[f64]) -> f64,
{
    let mut acc = 0.0;
    let npts = 3usize.pow(dim as u32);
    for q in 0..npts {
        let mut idx = q;
        let mut x = [0.0f64; 3];
        let mut w = 1.0;
        for d in 0..dim {
            let g = idx % 3;
            idx /= 3;
            x[d] = origin[d] + GAUSS_X[g] * ext[d];
            w *= GAUSS_W[g];
        }
        acc += w * f(&x[..dim]);
    }
    acc
}
