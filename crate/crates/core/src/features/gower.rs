use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    /// Range-normalized absolute difference. A zero range contributes 0.
    Numeric { range: f64 },
    /// Mismatch: 0 if equal, 1 otherwise.
    Binary,
}

/// Column kinds and training ranges for Gower's dissimilarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GowerSpace {
    pub columns: Vec<ColumnKind>,
}

impl GowerSpace {
    /// Learns numeric ranges from `rows`; `binary[j]` marks dichotomous columns.
    pub fn fit(rows: &[Vec<f64>], binary: &[bool]) -> Result<Self> {
        let width = binary.len();
        let mut lo = vec![f64::INFINITY; width];
        let mut hi = vec![f64::NEG_INFINITY; width];
        for row in rows {
            if row.len() != width {
                return Err(Error::Dimension(format!(
                    "row has {} columns, expected {width}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        let columns = binary
            .iter()
            .enumerate()
            .map(|(j, &is_binary)| {
                if is_binary {
                    ColumnKind::Binary
                } else {
                    let range = hi[j] - lo[j];
                    ColumnKind::Numeric {
                        range: if range.is_finite() { range } else { 0.0 },
                    }
                }
            })
            .collect();
        Ok(GowerSpace { columns })
    }

    /// Layout of a window feature row: `p` numeric scores then `p` indicators.
    pub fn fit_feature_rows(rows: &[Vec<f64>], n_variables: usize) -> Result<Self> {
        let binary: Vec<bool> = (0..2 * n_variables).map(|j| j >= n_variables).collect();
        Self::fit(rows, &binary)
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != self.width() || b.len() != self.width() {
            return Err(Error::Dimension(format!(
                "gower rows of length {} and {} against {} columns",
                a.len(),
                b.len(),
                self.width()
            )));
        }
        Ok(self.distance_unchecked(a, b))
    }

    pub(crate) fn distance_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        if self.columns.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .columns
            .iter()
            .zip(a.iter().zip(b))
            .map(|(kind, (&x, &y))| match *kind {
                // Rows scored after training may fall outside the training
                // range; cap each column at 1.
                ColumnKind::Numeric { range } if range > 0.0 => ((x - y).abs() / range).min(1.0),
                ColumnKind::Numeric { .. } => 0.0,
                ColumnKind::Binary => {
                    if x == y {
                        0.0
                    } else {
                        1.0
                    }
                }
            })
            .sum();
        total / self.columns.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identical_rows_are_zero() {
        let rows = vec![vec![1.0, 5.0, 1.0, 0.0], vec![3.0, 2.0, 0.0, 1.0]];
        let g = GowerSpace::fit_feature_rows(&rows, 2).unwrap();
        assert_eq!(g.distance(&rows[0], &rows[0]).unwrap(), 0.0);
    }

    #[test]
    fn binary_mismatch_fraction() {
        let a = vec![2.0, 4.0, 1.0, 1.0];
        let b = vec![2.0, 4.0, 0.0, 0.0];
        let g = GowerSpace::fit_feature_rows(&[a.clone(), b.clone()], 2).unwrap();
        assert_eq!(g.distance(&a, &b).unwrap(), 2.0 / 4.0);
    }

    #[test]
    fn single_numeric_column() {
        let g = GowerSpace::fit(&[vec![0.0], vec![10.0]], &[false]).unwrap();
        assert_eq!(g.distance(&[3.0], &[8.0]).unwrap(), 0.5);
    }

    #[test]
    fn zero_range_contributes_nothing() {
        let g = GowerSpace::fit(&[vec![1.0, 0.0], vec![1.0, 4.0]], &[false, false]).unwrap();
        assert_eq!(g.distance(&[1.0, 0.0], &[1.0, 4.0]).unwrap(), 0.5);
    }

    #[test]
    fn length_mismatch_errors() {
        let g = GowerSpace::fit(&[vec![0.0], vec![10.0]], &[false]).unwrap();
        assert!(g.distance(&[1.0, 2.0], &[1.0]).is_err());
    }

    fn rows_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(
            (prop::collection::vec(0u32..10, 3), prop::collection::vec(0u32..2, 3)).prop_map(
                |(y, b)| y.into_iter().chain(b).map(f64::from).collect::<Vec<f64>>(),
            ),
            2..12,
        )
    }

    proptest! {
        #[test]
        fn symmetric_bounded_and_zero_iff_equal(rows in rows_strategy()) {
            let g = GowerSpace::fit_feature_rows(&rows, 3).unwrap();
            for a in &rows {
                for b in &rows {
                    let d = g.distance(a, b).unwrap();
                    prop_assert_eq!(d, g.distance(b, a).unwrap());
                    prop_assert!((0.0..=1.0).contains(&d));
                    let same_on_live_columns = g.columns.iter().enumerate().all(|(j, k)| {
                        matches!(k, ColumnKind::Numeric { range } if *range == 0.0) || a[j] == b[j]
                    });
                    prop_assert_eq!(d == 0.0, same_on_live_columns);
                }
            }
        }
    }
}
