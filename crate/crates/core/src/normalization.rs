//! Per-dimension normalization: median/IQR (robust) and z-score.
//!
//! Source and target sets each get their own fitted [`NormalizationStats`].

use serde::{Deserialize, Serialize};

use crate::dataio::{dim_stats_of, RepresentationSet};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Raw scales below this are treated as degenerate and replaced by 1.
pub const DEGENERATE_SCALE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormMethod {
    MedianIqr,
    Zscore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub method: NormMethod,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub degenerate_dims: Vec<usize>,
}

impl NormalizationStats {
    pub fn fit(method: NormMethod, set: &RepresentationSet) -> Result<Self> {
        Self::fit_matrix(method, set.data())
    }

    pub fn fit_matrix(method: NormMethod, x: &Matrix) -> Result<Self> {
        let stats = dim_stats_of(x)?;
        let (center, raw_scale) = match method {
            NormMethod::MedianIqr => {
                let iqr = stats.q75.iter().zip(&stats.q25).map(|(hi, lo)| hi - lo).collect();
                (stats.median, iqr)
            }
            NormMethod::Zscore => (stats.mean, stats.std),
        };
        let mut degenerate_dims = Vec::new();
        let scale = raw_scale
            .into_iter()
            .enumerate()
            .map(|(k, s): (usize, f64)| {
                if s < DEGENERATE_SCALE {
                    degenerate_dims.push(k);
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self {
            method,
            center,
            scale,
            degenerate_dims,
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    fn check_dim(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "normalization",
                expected: self.dim(),
                got: x.cols(),
            });
        }
        Ok(())
    }

    /// `(x − center) / scale`, per dimension.
    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        self.check_dim(x)?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            self.transform_row_in_place(out.row_mut(i));
        }
        Ok(out)
    }

    /// `x̃ · scale + center`, per dimension.
    pub fn inverse_transform(&self, x: &Matrix) -> Result<Matrix> {
        self.check_dim(x)?;
        let mut out = x.clone();
        for i in 0..out.rows() {
            self.inverse_row_in_place(out.row_mut(i));
        }
        Ok(out)
    }

    pub(crate) fn transform_row_in_place(&self, row: &mut [f64]) {
        for ((v, c), s) in row.iter_mut().zip(&self.center).zip(&self.scale) {
            *v = (*v - c) / s;
        }
    }

    pub(crate) fn inverse_row_in_place(&self, row: &mut [f64]) {
        for ((v, c), s) in row.iter_mut().zip(&self.center).zip(&self.scale) {
            *v = *v * s + c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(values: &[f64]) -> Matrix {
        let rows: Vec<[f64; 1]> = values.iter().map(|&v| [v]).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn median_iqr_fit_and_transform() {
        let x = column(&[1.0, 2.0, 3.0, 4.0, 100.0]);
        let st = NormalizationStats::fit_matrix(NormMethod::MedianIqr, &x).unwrap();
        assert_eq!(st.center, vec![3.0]);
        assert_eq!(st.scale, vec![2.0]);
        assert!(st.degenerate_dims.is_empty());
        let t = st.transform(&x).unwrap();
        assert_eq!(t[(4, 0)], 48.5);
        assert_eq!(t[(2, 0)], 0.0);
    }

    #[test]
    fn constant_column_is_degenerate() {
        let x = Matrix::from_rows(&[[1.0, 4.0], [2.0, 4.0], [3.0, 4.0]]).unwrap();
        let st = NormalizationStats::fit_matrix(NormMethod::MedianIqr, &x).unwrap();
        assert_eq!(st.scale[1], 1.0);
        assert_eq!(st.degenerate_dims, vec![1]);
    }

    #[test]
    fn zscore_fit() {
        let st = NormalizationStats::fit_matrix(NormMethod::Zscore, &column(&[0.0, 10.0])).unwrap();
        assert_eq!(st.center, vec![5.0]);
        assert!((st.scale[0] - 7.0711).abs() < 1e-4);
    }

    #[test]
    fn inverse_examples() {
        let st = NormalizationStats {
            method: NormMethod::MedianIqr,
            center: vec![3.0, -1.0],
            scale: vec![2.0, 0.5],
            degenerate_dims: vec![],
        };
        let zero = Matrix::zeros(1, 2);
        assert_eq!(st.inverse_transform(&zero).unwrap().row(0), &[3.0, -1.0]);
        let one = Matrix::from_rows(&[[1.0, 0.0]]).unwrap();
        assert_eq!(st.inverse_transform(&one).unwrap()[(0, 0)], 5.0);
    }

    #[test]
    fn dimension_mismatch() {
        let st = NormalizationStats::fit_matrix(NormMethod::Zscore, &column(&[0.0, 1.0])).unwrap();
        assert!(st.transform(&Matrix::zeros(2, 3)).is_err());
        assert!(st.inverse_transform(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn fit_needs_two_rows() {
        assert!(NormalizationStats::fit_matrix(NormMethod::MedianIqr, &column(&[1.0])).is_err());
    }
}
