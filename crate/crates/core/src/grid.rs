//! Tensor grids over the box (lo, lo + 2L)^N.

use crate::error::{Error, Result};

/// A face node of the closed box: lies on exactly one face and has exactly
/// one interior neighbour along the face normal.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryNode {
    pub position: Vec<f64>,
    /// Axis the outward normal is aligned with.
    pub axis: usize,
    /// +1.0 or -1.0.
    pub sign: f64,
    /// Flat index of the interior node at distance h.
    pub neighbor: usize,
    /// Flat index of the interior node at distance 2h.
    pub second_neighbor: usize,
}

impl BoundaryNode {
    pub fn normal(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.position.len()];
        v[self.axis] = self.sign;
        v
    }

    /// x . nu
    pub fn radial_normal(&self) -> f64 {
        self.position[self.axis] * self.sign
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dimension: usize,
    n: usize,
    half_width: f64,
    lower: Vec<f64>,
    h: f64,
    boundary: Vec<BoundaryNode>,
}

impl Grid {
    /// Grid on the centered box (-L, L)^N with `n` interior nodes per axis.
    pub fn new(dimension: usize, n: usize, half_width: f64) -> Result<Self> {
        Self::with_lower_corner(dimension, n, half_width, vec![-half_width; dimension])
    }

    /// Grid on (lower, lower + 2L) per axis. Used for off-center boxes.
    pub fn with_lower_corner(
        dimension: usize,
        n: usize,
        half_width: f64,
        lower: Vec<f64>,
    ) -> Result<Self> {
        if !(2..=3).contains(&dimension) {
            return Err(Error::InvalidParameter(format!(
                "dimension must be 2 or 3, got {dimension}"
            )));
        }
        if n < 3 {
            return Err(Error::InvalidParameter(format!(
                "need at least 3 interior nodes per axis, got {n}"
            )));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "half width must be positive, got {half_width}"
            )));
        }
        if lower.len() != dimension {
            return Err(Error::DimensionMismatch {
                what: "lower corner",
                expected: dimension,
                got: lower.len(),
            });
        }
        let h = 2.0 * half_width / (n as f64 + 1.0);
        let mut grid = Grid {
            dimension,
            n,
            half_width,
            lower,
            h,
            boundary: Vec::new(),
        };
        grid.boundary = grid.enumerate_faces();
        Ok(grid)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn interior_count(&self) -> usize {
        self.n.pow(self.dimension as u32)
    }

    /// h^N, the cell volume of the discrete L^2 product.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dimension as i32)
    }

    /// h^{N-1}, the face measure of a boundary node.
    pub fn face_measure(&self) -> f64 {
        self.h.powi(self.dimension as i32 - 1)
    }

    /// Coordinate along `axis` of closed-grid index `i` in 0..=n+1. The end
    /// indices land exactly on the faces.
    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        let lo = self.lower[axis];
        if i == 0 {
            lo
        } else if i == self.n + 1 {
            lo + 2.0 * self.half_width
        } else {
            lo + i as f64 * self.h
        }
    }

    /// Flat index of an interior multi-index (entries in 0..n, last axis fastest).
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().fold(0, |acc, &i| acc * self.n + i)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut m = vec![0; self.dimension];
        for d in (0..self.dimension).rev() {
            m[d] = flat % self.n;
            flat /= self.n;
        }
        m
    }

    /// Stride of `axis` in the flat ordering.
    pub fn stride(&self, axis: usize) -> usize {
        self.n.pow((self.dimension - 1 - axis) as u32)
    }

    pub fn interior_point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(d, &i)| self.coordinate(d, i + 1))
            .collect()
    }

    pub fn interior_points(&self) -> Vec<Vec<f64>> {
        (0..self.interior_count())
            .map(|k| self.interior_point(k))
            .collect()
    }

    /// Every node of the closed box, faces, edges and corners included.
    pub fn closed_points(&self) -> Vec<Vec<f64>> {
        let m = self.n + 2;
        let total = m.pow(self.dimension as u32);
        (0..total)
            .map(|mut k| {
                let mut p = vec![0.0; self.dimension];
                for d in (0..self.dimension).rev() {
                    p[d] = self.coordinate(d, k % m);
                    k /= m;
                }
                p
            })
            .collect()
    }

    pub fn boundary_nodes(&self) -> &[BoundaryNode] {
        &self.boundary
    }

    pub fn boundary_count(&self) -> usize {
        self.boundary.len()
    }

    fn enumerate_faces(&self) -> Vec<BoundaryNode> {
        let nd = self.dimension;
        let n = self.n;
        let mut out = Vec::new();
        for axis in 0..nd {
            for &sign in &[-1.0, 1.0] {
                let tangential = n.pow(nd as u32 - 1);
                for t in 0..tangential {
                    // Decompose t over the other axes, last axis fastest.
                    let mut rest = t;
                    let mut multi = vec![0usize; nd];
                    for d in (0..nd).rev() {
                        if d == axis {
                            continue;
                        }
                        multi[d] = rest % n;
                        rest /= n;
                    }
                    let (i1, i2) = if sign > 0.0 { (n - 1, n - 2) } else { (0, 1) };
                    multi[axis] = i1;
                    let neighbor = self.flat_index(&multi);
                    multi[axis] = i2;
                    let second_neighbor = self.flat_index(&multi);
                    let position = (0..nd)
                        .map(|d| {
                            if d == axis {
                                self.coordinate(d, if sign > 0.0 { n + 1 } else { 0 })
                            } else {
                                self.coordinate(d, multi[d] + 1)
                            }
                        })
                        .collect();
                    out.push(BoundaryNode {
                        position,
                        axis,
                        sign,
                        neighbor,
                        second_neighbor,
                    });
                }
            }
        }
        out
    }

    /// L^2_h inner product.
    pub fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.cell_volume() * crate::linalg::dot(a, b)
    }

    pub fn l2_norm(&self, a: &[f64]) -> f64 {
        self.dot(a, a).sqrt()
    }

    /// Indicator of interior nodes at least `layers` nodes away from every face.
    pub fn interior_mask(&self, layers: usize) -> Vec<bool> {
        (0..self.interior_count())
            .map(|k| {
                self.multi_index(k)
                    .iter()
                    .all(|&i| i >= layers && i + layers < self.n)
            })
            .collect()
    }

    /// Sample a function at the interior nodes.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.interior_count())
            .map(|k| f(&self.interior_point(k)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_grid_arithmetic() {
        let g = Grid::new(2, 3, 1.0).unwrap();
        assert_eq!(g.spacing(), 0.5);
        assert_eq!(g.interior_count(), 9);
        let g = Grid::new(2, 61, 1.0).unwrap();
        assert!((g.spacing() - 2.0 / 62.0).abs() < 1e-16);
        assert_eq!(g.interior_count(), 3721);
        assert_eq!(Grid::new(3, 15, 1.0).unwrap().interior_count(), 3375);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Grid::new(2, 2, 1.0).is_err());
        assert!(Grid::new(4, 5, 1.0).is_err());
        assert!(Grid::new(1, 5, 1.0).is_err());
    }

    #[test]
    fn faces_are_exact_and_interior_strict() {
        let g = Grid::new(2, 7, 1.0).unwrap();
        assert_eq!(g.boundary_count(), 4 * 7);
        for b in g.boundary_nodes() {
            assert_eq!(b.position[b.axis].abs(), 1.0);
            let p = g.interior_point(b.neighbor);
            let q = g.interior_point(b.second_neighbor);
            assert!((b.position[b.axis] - p[b.axis]).abs() - g.spacing() < 1e-15);
            assert!((b.position[b.axis] - q[b.axis]).abs() - 2.0 * g.spacing() < 1e-15);
        }
        for p in g.interior_points() {
            assert!(p.iter().all(|x| x.abs() < 1.0));
        }
        assert_eq!(g.coordinate(0, 8), 1.0);
        let g3 = Grid::new(3, 4, 1.0).unwrap();
        assert_eq!(g3.boundary_count(), 6 * 16);
    }

    #[test]
    fn index_roundtrip() {
        let g = Grid::new(3, 5, 1.0).unwrap();
        for k in 0..g.interior_count() {
            assert_eq!(g.flat_index(&g.multi_index(k)), k);
        }
        assert_eq!(g.stride(0), 25);
        assert_eq!(g.stride(2), 1);
    }

    #[test]
    fn odd_grid_has_origin_node() {
        let g = Grid::new(2, 5, 1.0).unwrap();
        assert!(g.interior_points().iter().any(|p| p.iter().all(|x| x.abs() < 1e-15)));
        assert_eq!(g.closed_points().len(), 49);
    }
}
