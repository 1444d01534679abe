use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension box from central quantiles of the bank unit vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OtbBox {
    pub p: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Linear-interpolated quantile of ascending `sorted`.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Bank unit vectors column by column, each column sorted ascending.
pub(crate) fn sorted_columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = rows[0].len();
    (0..dim)
        .map(|c| {
            let mut col: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            col.sort_by(f64::total_cmp);
            col
        })
        .collect()
}

impl OtbBox {
    pub fn fit(rows: &[Vec<f64>], p: f64) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::invalid("box fit needs at least one sample"));
        }
        Self::from_sorted_columns(&sorted_columns(rows), p)
    }

    pub(crate) fn from_sorted_columns(columns: &[Vec<f64>], p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::invalid(format!("box quantile p = {p} must lie in (0, 1]")));
        }
        let tail = (1.0 - p) / 2.0;
        let lower = columns.iter().map(|c| quantile_sorted(c, tail)).collect();
        let upper = columns.iter().map(|c| quantile_sorted(c, 1.0 - tail)).collect();
        Ok(Self { p, lower, upper })
    }

    /// Fraction of coordinates inside the box.
    pub fn score(&self, unit: &[f64]) -> f64 {
        let inside = unit
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .filter(|(v, (lo, hi))| **v >= **lo && **v <= **hi)
            .count();
        inside as f64 / unit.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_box_spans_min_max_and_contains_members() {
        let rows = vec![vec![0.6, 0.8], vec![1.0, 0.0], vec![0.0, -1.0]];
        let b = OtbBox::fit(&rows, 1.0).unwrap();
        assert_eq!(b.lower, vec![0.0, -1.0]);
        assert_eq!(b.upper, vec![1.0, 0.8]);
        for r in &rows {
            assert_eq!(b.score(r), 1.0);
        }
        assert_eq!(b.score(&[-1.0, 0.0]), 0.5);
        assert!(b.lower.iter().zip(&b.upper).all(|(l, u)| l <= u));
    }

    #[test]
    fn quantile_interpolates() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&s, 0.5), 2.0);
        assert_eq!(quantile_sorted(&s, 0.1), 0.4);
        let b = OtbBox::from_sorted_columns(&[s.to_vec()], 0.8).unwrap();
        assert!((b.lower[0] - 0.4).abs() < 1e-12 && (b.upper[0] - 3.6).abs() < 1e-12);
        assert!(OtbBox::fit(&[vec![1.0]], 0.0).is_err());
    }
}
