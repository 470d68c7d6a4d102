//! Scalar fields sampled on an evaluation set: the output container of
//! every potential evaluator and the state of the fixed-point solver.

use crate::error::{Result, WolffError};
use crate::grid::GridSpec;
use crate::measure::Measure;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "samples", rename_all = "snake_case")]
pub enum SampleSet {
    Scattered { points: Vec<Vec<f64>> },
    Grid { grid: GridSpec },
}

impl SampleSet {
    pub fn len(&self) -> usize {
        match self {
            SampleSet::Scattered { points } => points.len(),
            SampleSet::Grid { grid } => grid.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        match self {
            SampleSet::Scattered { points } => points[i].clone(),
            SampleSet::Grid { grid } => grid.cell_center(i),
        }
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub samples: SampleSet,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(samples: SampleSet, values: Vec<f64>) -> Result<Self> {
        if samples.len() != values.len() {
            return Err(WolffError::MismatchedSamples(format!(
                "{} samples vs {} values",
                samples.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(WolffError::invalid_param("values", "field values must be >= 0 and not NaN"));
        }
        Ok(Field { samples, values })
    }

    pub fn zeros(samples: SampleSet) -> Self {
        let n = samples.len();
        Field { samples, values: vec![0.0; n] }
    }

    pub fn on_grid(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        Field::new(SampleSet::Grid { grid }, values)
    }

    pub fn grid(&self) -> Option<&GridSpec> {
        match &self.samples {
            SampleSet::Grid { grid } => Some(grid),
            SampleSet::Scattered { .. } => None,
        }
    }

    /// Interpret a grid field as the density of the measure f dx.
    pub fn as_measure(&self) -> Result<Measure> {
        let grid = self.grid().ok_or_else(|| {
            WolffError::Unsupported("only grid fields convert to measures".into())
        })?;
        Measure::grid_density(grid.clone(), self.values.clone())
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, &b| a.max(b))
    }

    pub fn scaled(&self, factor: f64) -> Field {
        Field {
            samples: self.samples.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    /// Relative sup-norm distance, normalized by the sup of `other`.
    pub fn rel_sup_distance(&self, other: &Field) -> f64 {
        let denom = other.sup().max(f64::MIN_POSITIVE);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
            / denom
    }
}

/// Pointwise U^q1 * V^q2 on a shared sample set. A zero factor wins over an
/// infinite one, so mollified inputs never produce NaN.
pub fn power_product(u: &Field, v: &Field, q1: f64, q2: f64) -> Result<Field> {
    if u.samples != v.samples {
        return Err(WolffError::MismatchedSamples("power_product operands".into()));
    }
    let values = u
        .values
        .iter()
        .zip(&v.values)
        .map(|(&a, &b)| {
            let fa = if q1 == 0.0 { 1.0 } else { a.powf(q1) };
            let fb = if q2 == 0.0 { 1.0 } else { b.powf(q2) };
            if fa == 0.0 || fb == 0.0 {
                0.0
            } else {
                fa * fb
            }
        })
        .collect();
    Field::new(u.samples.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scattered(points: Vec<Vec<f64>>, values: Vec<f64>) -> Field {
        Field::new(SampleSet::Scattered { points }, values).unwrap()
    }

    #[test]
    fn power_product_examples() {
        let pts = vec![vec![0.0], vec![1.0]];
        let u = scattered(pts.clone(), vec![1.0, 4.0]);
        let v = scattered(pts.clone(), vec![1.0, 9.0]);
        // U = V = 1: any exponents give 1
        let ones = power_product(&scattered(pts.clone(), vec![1.0, 1.0]), &v, 2.3, 0.0).unwrap();
        assert_eq!(ones.values, vec![1.0, 1.0]);
        // q1 = 1, q2 = 0 returns U
        let just_u = power_product(&u, &v, 1.0, 0.0).unwrap();
        assert_eq!(just_u.values, u.values);
        // U=4, V=9 with exponents 1/2: 2 * 3 = 6
        let prod = power_product(&u, &v, 0.5, 0.5).unwrap();
        assert!((prod.values[1] - 6.0).abs() < 1e-14);
    }

    #[test]
    fn power_product_rejects_mismatch() {
        let u = scattered(vec![vec![0.0]], vec![1.0]);
        let v = scattered(vec![vec![1.0]], vec![1.0]);
        assert!(power_product(&u, &v, 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_beats_infinity() {
        let pts = vec![vec![0.0]];
        let u = scattered(pts.clone(), vec![f64::INFINITY]);
        let v = scattered(pts.clone(), vec![0.0]);
        let prod = power_product(&u, &v, 1.0, 2.0).unwrap();
        assert_eq!(prod.values, vec![0.0]);
    }
}
