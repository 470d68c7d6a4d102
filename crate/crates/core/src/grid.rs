//! Uniform axis-aligned grids. Cell (i_0, ..., i_{N-1}) covers the box
//! [origin + i*spacing, origin + (i+1)*spacing); values attach to cell
//! centers. Flat indices are row-major with the last axis fastest, so
//! iteration order is deterministic.

use crate::error::{Result, WolffError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub shape: Vec<usize>,
}

impl GridSpec {
    pub fn new(origin: Vec<f64>, spacing: Vec<f64>, shape: Vec<usize>) -> Result<Self> {
        if origin.len() != spacing.len() || origin.len() != shape.len() {
            return Err(WolffError::invalid_param("grid", "origin/spacing/shape rank mismatch"));
        }
        if origin.is_empty() || origin.len() > crate::geom::MAX_DIM {
            return Err(WolffError::invalid_param(
                "grid",
                format!("dimension must be in 1..={}", crate::geom::MAX_DIM),
            ));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(WolffError::invalid_param("grid", "spacing must be positive and finite"));
        }
        if shape.iter().any(|&n| n == 0) {
            return Err(WolffError::invalid_param("grid", "empty axis"));
        }
        Ok(GridSpec { origin, spacing, shape })
    }

    /// Cube grid of `n` cells per axis covering [center - half, center + half]^N.
    pub fn cube(center: &[f64], half_extent: f64, n: usize) -> Result<Self> {
        let dim = center.len();
        let spacing = 2.0 * half_extent / n as f64;
        GridSpec::new(
            center.iter().map(|c| c - half_extent).collect(),
            vec![spacing; dim],
            vec![n; dim],
        )
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn cell_center(&self, flat: usize) -> Vec<f64> {
        let idx = self.unflatten(flat);
        idx.iter()
            .enumerate()
            .map(|(d, &i)| self.origin[d] + (i as f64 + 0.5) * self.spacing[d])
            .collect()
    }

    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0usize; self.dim()];
        for d in (0..self.dim()).rev() {
            idx[d] = flat % self.shape[d];
            flat /= self.shape[d];
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        let mut flat = 0usize;
        for d in 0..self.dim() {
            flat = flat * self.shape[d] + idx[d];
        }
        flat
    }

    /// Centers of all cells, in flat order.
    pub fn centers(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.cell_center(i)).collect()
    }

    /// Farthest corner distance from `x` to the grid's bounding box.
    pub fn far_corner_distance(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for d in 0..self.dim() {
            let lo = self.origin[d];
            let hi = self.origin[d] + self.spacing[d] * self.shape[d] as f64;
            let e = (x[d] - lo).abs().max((x[d] - hi).abs());
            acc += e * e;
        }
        f64::sqrt(acc)
    }

    /// Grid with doubled resolution over the same box.
    pub fn refined(&self) -> GridSpec {
        GridSpec {
            origin: self.origin.clone(),
            spacing: self.spacing.iter().map(|s| s / 2.0).collect(),
            shape: self.shape.iter().map(|n| n * 2).collect(),
        }
    }

    /// Half of the cell diagonal; any point of a cell is within this distance
    /// of the cell center.
    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.spacing.iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    /// Multilinear interpolation of cell-center values at `x`, clamped to
    /// the lattice hull.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let d = self.dim();
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0f64; d];
        for a in 0..d {
            if self.shape[a] < 2 {
                continue;
            }
            let t = ((x[a] - self.origin[a]) / self.spacing[a] - 0.5)
                .clamp(0.0, (self.shape[a] - 1) as f64);
            let i = (t.floor() as usize).min(self.shape[a] - 2);
            base[a] = i;
            frac[a] = t - i as f64;
        }
        let mut acc = 0.0;
        let mut idx = vec![0usize; d];
        for corner in 0..(1usize << d) {
            let mut weight = 1.0;
            for a in 0..d {
                if corner >> a & 1 == 1 {
                    idx[a] = (base[a] + 1).min(self.shape[a] - 1);
                    weight *= frac[a];
                } else {
                    idx[a] = base[a];
                    weight *= 1.0 - frac[a];
                }
            }
            if weight > 0.0 {
                acc += weight * values[self.flatten(&idx)];
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let g = GridSpec::new(vec![0.0, 0.0, 0.0], vec![0.5, 0.5, 0.5], vec![3, 4, 5]).unwrap();
        for flat in 0..g.len() {
            assert_eq!(g.flatten(&g.unflatten(flat)), flat);
        }
    }

    #[test]
    fn centers_inside_box() {
        let g = GridSpec::cube(&[1.0, -1.0], 2.0, 8).unwrap();
        for c in g.centers() {
            assert!(c[0] > -1.0 && c[0] < 3.0);
            assert!(c[1] > -3.0 && c[1] < 1.0);
        }
        assert!((g.cell_volume() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(GridSpec::new(vec![0.0], vec![0.0], vec![4]).is_err());
        assert!(GridSpec::new(vec![0.0; 7], vec![1.0; 7], vec![2; 7]).is_err());
    }
}
