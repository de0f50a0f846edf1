//! Uniform periodic Cartesian grid in 2 or 3 dimensions.
//!
//! Cells are squares/cubes of edge `h = length / n`, indexed row-major
//! lexicographically (x fastest). A face is identified by `(dir, cell)` where
//! `cell` is the element on the negative side of the face: the face `(d, k)`
//! separates cell `k` from its `+e_d` neighbor `l`, and the face normal is
//! `+e_d`. Under this convention the oriented pair of a face is always
//! `(k, l)` with `x_l = x_k + h e_d` modulo periodicity, and there are exactly
//! `n^dim` faces per direction.
//!
//! The grid owns no large arrays; neighbor lookups are O(1) index arithmetic,
//! so the mesh is trivially shareable across threads.

use std::fmt;
use std::sync::Arc;

/// Construction errors for [`Mesh`].
#[derive(Debug, Clone, PartialEq)]
pub enum MeshError {
    /// Spatial dimension outside {2, 3}.
    BadDimension(usize),
    /// Fewer than two cells per axis.
    TooCoarse(usize),
    /// Nonpositive or per-axis unequal extents (cells must stay square/cubic).
    BadExtents(Vec<f64>),
    /// Extent list length does not match the dimension.
    ExtentCount { dim: usize, got: usize },
}

impl fmt::Display for MeshError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeshError::BadDimension(d) => write!(f, "dimension must be 2 or 3, got {d}"),
            MeshError::TooCoarse(n) => write!(f, "need at least 2 cells per axis, got {n}"),
            MeshError::BadExtents(l) => {
                write!(f, "extents must be positive and equal per axis, got {l:?}")
            }
            MeshError::ExtentCount { dim, got } => {
                write!(f, "expected {dim} extents, got {got}")
            }
        }
    }
}

impl std::error::Error for MeshError {}

/// Uniform periodic Cartesian mesh on `[0, L]^dim`.
#[derive(Debug)]
pub struct Mesh {
    dim: usize,
    n: usize,
    h: f64,
    length: f64,
    cell_count: usize,
}

impl Mesh {
    /// Build a mesh with `n` cells per axis on a torus of per-axis extent
    /// `lengths` (all entries must be equal and positive).
    pub fn new(dim: usize, n: usize, lengths: &[f64]) -> Result<Arc<Mesh>, MeshError> {
        if dim != 2 && dim != 3 {
            return Err(MeshError::BadDimension(dim));
        }
        if n < 2 {
            return Err(MeshError::TooCoarse(n));
        }
        if lengths.len() != dim {
            return Err(MeshError::ExtentCount {
                dim,
                got: lengths.len(),
            });
        }
        let length = lengths[0];
        if !(length > 0.0) || lengths.iter().any(|&l| l != length) {
            return Err(MeshError::BadExtents(lengths.to_vec()));
        }
        Ok(Arc::new(Mesh {
            dim,
            n,
            h: length / n as f64,
            length,
            cell_count: n.pow(dim as u32),
        }))
    }

    /// Unit torus, the common case.
    pub fn unit(dim: usize, n: usize) -> Result<Arc<Mesh>, MeshError> {
        Mesh::new(dim, n, &vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_dim(&self) -> usize {
        self.n
    }

    /// Cell edge length.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn cell_count(&self) -> usize {
        self.cell_count
    }

    /// Faces orthogonal to each direction; equals the cell count on a torus.
    pub fn faces_per_dir(&self) -> usize {
        self.cell_count
    }

    /// Cell volume `h^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    /// Face measure `h^(dim-1)`.
    pub fn face_measure(&self) -> f64 {
        self.h.powi(self.dim as i32 - 1)
    }

    /// Volume of a dual cell: two half-cells, i.e. `h^dim`.
    pub fn dual_volume(&self) -> f64 {
        self.cell_volume()
    }

    /// Multi-index of a cell id.
    pub fn cell_coords(&self, cell: usize) -> [usize; 3] {
        debug_assert!(cell < self.cell_count);
        let mut c = [0usize; 3];
        let mut rest = cell;
        for slot in c.iter_mut().take(self.dim) {
            *slot = rest % self.n;
            rest /= self.n;
        }
        c
    }

    /// Cell id from a multi-index (entries taken mod `n`).
    pub fn cell_id(&self, coords: &[usize]) -> usize {
        let mut id = 0usize;
        for d in (0..self.dim).rev() {
            id = id * self.n + coords[d] % self.n;
        }
        id
    }

    /// Center of a cell.
    pub fn cell_center(&self, cell: usize) -> [f64; 3] {
        let c = self.cell_coords(cell);
        let mut x = [0.0; 3];
        for d in 0..self.dim {
            x[d] = (c[d] as f64 + 0.5) * self.h;
        }
        x
    }

    /// Periodic neighbor of `cell` one step along `dir` (`step` = +1 or -1).
    #[inline]
    pub fn neighbor(&self, cell: usize, dir: usize, step: isize) -> usize {
        debug_assert!(dir < self.dim);
        let n = self.n;
        let stride = n.pow(dir as u32);
        let coord = (cell / stride) % n;
        let new_coord = (coord as isize + step).rem_euclid(n as isize) as usize;
        (cell as isize + (new_coord as isize - coord as isize) * stride as isize) as usize
    }

    /// Oriented pair `(k, l)` of the face `(dir, cell)`: `k = cell`,
    /// `l` its `+e_dir` neighbor.
    #[inline]
    pub fn face_cells(&self, dir: usize, cell: usize) -> (usize, usize) {
        (cell, self.neighbor(cell, dir, 1))
    }

    /// Validated variant of [`Mesh::face_cells`] that also reports the
    /// direction, for callers holding a raw `(dir, cell)` pair.
    pub fn face_neighbors(
        &self,
        dir: usize,
        cell: usize,
    ) -> Result<(usize, usize, usize), MeshError> {
        if dir >= self.dim {
            return Err(MeshError::BadDimension(dir));
        }
        if cell >= self.cell_count {
            return Err(MeshError::TooCoarse(cell));
        }
        let (k, l) = self.face_cells(dir, cell);
        Ok((k, l, dir))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_h() {
        let m = Mesh::new(2, 4, &[1.0, 1.0]).unwrap();
        assert_eq!(m.cell_count(), 16);
        assert_eq!(m.faces_per_dir(), 16);
        assert_eq!(m.h(), 0.25);

        let m = Mesh::new(3, 2, &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(m.cell_count(), 8);
        assert_eq!(m.faces_per_dir(), 8);
        assert_eq!(m.h(), 0.5);
    }

    #[test]
    fn degenerate_and_anisotropic_rejected() {
        assert!(matches!(
            Mesh::new(2, 1, &[1.0, 1.0]),
            Err(MeshError::TooCoarse(1))
        ));
        assert!(matches!(
            Mesh::new(1, 4, &[1.0]),
            Err(MeshError::BadDimension(1))
        ));
        assert!(matches!(
            Mesh::new(4, 4, &[1.0; 4]),
            Err(MeshError::BadDimension(4))
        ));
        assert!(matches!(
            Mesh::new(2, 4, &[1.0, 2.0]),
            Err(MeshError::BadExtents(_))
        ));
        assert!(matches!(
            Mesh::new(2, 4, &[0.0, 0.0]),
            Err(MeshError::BadExtents(_))
        ));
        assert!(matches!(
            Mesh::new(2, 4, &[1.0]),
            Err(MeshError::ExtentCount { .. })
        ));
    }

    #[test]
    fn oriented_pairs_follow_the_owning_cell_convention() {
        // 2x2 grid: the x-face right of cell (0,0) is (dir 0, cell 0).
        let m = Mesh::unit(2, 2).unwrap();
        assert_eq!(m.face_cells(0, m.cell_id(&[0, 0])), (0, 1));
        // The x-face left of (0,0) is owned by (1,0) and wraps around.
        assert_eq!(m.face_cells(0, m.cell_id(&[1, 0])), (1, 0));

        // 4x4 grid: the y-face above (3,3) wraps to (3,0).
        let m = Mesh::unit(2, 4).unwrap();
        let k = m.cell_id(&[3, 3]);
        let l = m.cell_id(&[3, 0]);
        assert_eq!(m.face_cells(1, k), (k, l));
    }

    #[test]
    fn face_pairing_is_a_perfect_matching() {
        // Every cell appears in exactly 2*dim oriented pairs.
        for (dim, n) in [(2usize, 3usize), (3, 2)] {
            let m = Mesh::unit(dim, n).unwrap();
            let mut incidence = vec![0usize; m.cell_count()];
            for d in 0..dim {
                for c in 0..m.faces_per_dir() {
                    let (k, l) = m.face_cells(d, c);
                    incidence[k] += 1;
                    incidence[l] += 1;
                }
            }
            assert!(incidence.iter().all(|&c| c == 2 * dim));
        }
    }

    #[test]
    fn outward_normals_sum_to_zero() {
        // sum over the faces of a cell of |sigma| * n is the zero vector.
        let m = Mesh::unit(3, 4).unwrap();
        let cell = 11;
        let mut total = [0.0f64; 3];
        for (d, slot) in total.iter_mut().enumerate() {
            // +e_d face owned by the cell, -e_d face owned by the neighbor.
            *slot += m.face_measure();
            *slot -= m.face_measure();
            let _ = m.neighbor(cell, d, -1);
        }
        assert_eq!(total, [0.0; 3]);
    }

    #[test]
    fn face_neighbors_validates_ids() {
        let m = Mesh::unit(2, 2).unwrap();
        assert!(m.face_neighbors(0, 3).is_ok());
        assert!(m.face_neighbors(2, 0).is_err());
        assert!(m.face_neighbors(0, 99).is_err());
    }
}
