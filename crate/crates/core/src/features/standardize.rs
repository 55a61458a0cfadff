use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column training statistics. Pass-through columns (the one-hot block)
/// keep mean 0 and std 1 so application leaves them unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizerStats {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    pub passthrough: Vec<bool>,
    /// Columns with zero training variance; their std is forced to 1.
    pub constant: Vec<bool>,
}

const CONSTANT_STD: f64 = 1e-12;

impl StandardizerStats {
    pub fn width(&self) -> usize {
        self.means.len()
    }

    /// Identity transform over `width` columns.
    pub fn identity(width: usize) -> Self {
        Self {
            means: vec![0.0; width],
            stds: vec![1.0; width],
            passthrough: vec![true; width],
            constant: vec![false; width],
        }
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.width() {
            return Err(Error::Shape(format!(
                "row has {} columns, standardizer {}",
                row.len(),
                self.width()
            )));
        }
        Ok(row
            .iter()
            .enumerate()
            .map(|(j, &x)| (x - self.means[j]) / self.stds[j])
            .collect())
    }

    pub fn invert(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &z)| z * self.stds[j] + self.means[j])
            .collect()
    }
}

/// Population mean/std per column over `rows`; columns flagged in
/// `passthrough` are left untouched.
pub fn fit_standardizer(rows: &[Vec<f64>], passthrough: &[bool]) -> Result<StandardizerStats> {
    let first = rows.first().ok_or(Error::Empty("standardizer rows"))?;
    let width = first.len();
    if passthrough.len() != width || rows.iter().any(|r| r.len() != width) {
        return Err(Error::Shape("ragged rows or passthrough mask".into()));
    }
    let n = rows.len() as f64;
    let mut stats = StandardizerStats::identity(width);
    for j in 0..width {
        stats.passthrough[j] = passthrough[j];
        if passthrough[j] {
            continue;
        }
        let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
        let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        stats.means[j] = mean;
        if std > CONSTANT_STD * (1.0 + mean.abs()) {
            stats.stds[j] = std;
        } else {
            stats.constant[j] = true;
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_rows() {
        let s = fit_standardizer(&[vec![1.0], vec![3.0]], &[false]).unwrap();
        assert_eq!((s.means[0], s.stds[0]), (2.0, 1.0));
        assert_eq!(s.apply(&[1.0]).unwrap(), vec![-1.0]);
        assert_eq!(s.apply(&[3.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn constant_column() {
        let s = fit_standardizer(&[vec![5.0, 0.0], vec![5.0, 1.0]], &[false, true]).unwrap();
        assert!(s.constant[0]);
        assert_eq!(s.stds[0], 1.0);
        assert_eq!(s.apply(&[5.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert!(!s.constant[1]);
    }

    #[test]
    fn errors() {
        assert!(fit_standardizer(&[], &[]).is_err());
        assert!(fit_standardizer(&[vec![1.0], vec![1.0, 2.0]], &[false]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn standardized_columns(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..40)) {
                let s = fit_standardizer(&rows, &[false, false, true]).unwrap();
                let z: Vec<Vec<f64>> = rows.iter().map(|r| s.apply(r).unwrap()).collect();
                for j in 0..2 {
                    let n = z.len() as f64;
                    let mean = z.iter().map(|r| r[j]).sum::<f64>() / n;
                    prop_assert!(mean.abs() < 1e-9);
                    if !s.constant[j] {
                        let var = z.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
                        prop_assert!((var.sqrt() - 1.0).abs() < 1e-9);
                    }
                }
                for (r, zr) in rows.iter().zip(&z) {
                    prop_assert_eq!(zr[2], r[2]);
                    for (a, b) in s.invert(zr).iter().zip(r) {
                        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
                    }
                }
            }
        }
    }
}
