//! Representation sets, their on-disk formats, per-dimension statistics and
//! synthetic scenario generators.

mod fsrp;
mod scenario;

pub use fsrp::{read_csv, read_repset, write_csv, write_repset, FSRP_MAGIC, FSRP_VERSION};
pub use scenario::{gen_scenario, Scenario, ScenarioSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{quantile_sorted, Matrix};

/// Which side of the transport problem a set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Source,
    Target,
    Steered,
}

impl Role {
    pub fn code(self) -> u8 {
        match self {
            Role::Source => 0,
            Role::Target => 1,
            Role::Steered => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Role::Source),
            1 => Some(Role::Target),
            2 => Some(Role::Steered),
            _ => None,
        }
    }
}

/// `N × d` activations with a fixed role.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationSet {
    role: Role,
    data: Matrix,
}

impl RepresentationSet {
    pub fn new(role: Role, data: Matrix) -> Result<Self> {
        if data.rows() == 0 {
            return Err(Error::Empty("representation set rows"));
        }
        if data.cols() == 0 {
            return Err(Error::Empty("representation set columns"));
        }
        Ok(Self { role, data })
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn into_data(self) -> Matrix {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    /// Subset of rows keeping the role.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        Self::new(self.role, self.data.select_rows(indices))
    }
}

/// Robust and moment statistics per dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimStats {
    pub n: usize,
    pub median: Vec<f64>,
    pub q25: Vec<f64>,
    pub q75: Vec<f64>,
    pub mean: Vec<f64>,
    /// Sample standard deviation (N − 1 denominator).
    pub std: Vec<f64>,
}

pub fn compute_dim_stats(set: &RepresentationSet) -> Result<DimStats> {
    dim_stats_of(set.data())
}

pub(crate) fn dim_stats_of(x: &Matrix) -> Result<DimStats> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    if !x.all_finite() {
        return Err(Error::NonFinite("dim stats input"));
    }
    let d = x.cols();
    let mut stats = DimStats {
        n,
        median: Vec::with_capacity(d),
        q25: Vec::with_capacity(d),
        q75: Vec::with_capacity(d),
        mean: Vec::with_capacity(d),
        std: Vec::with_capacity(d),
    };
    for k in 0..d {
        let mut col = x.column(k);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        col.sort_by(f64::total_cmp);
        stats.median.push(quantile_sorted(&col, 0.5));
        stats.q25.push(quantile_sorted(&col, 0.25));
        stats.q75.push(quantile_sorted(&col, 0.75));
        stats.mean.push(mean);
        stats.std.push(var.sqrt());
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column_set(values: &[f64]) -> RepresentationSet {
        let rows: Vec<[f64; 1]> = values.iter().map(|&v| [v]).collect();
        RepresentationSet::new(Role::Source, Matrix::from_rows(&rows).unwrap()).unwrap()
    }

    #[test]
    fn stats_with_outlier() {
        let s = compute_dim_stats(&column_set(&[1.0, 2.0, 3.0, 4.0, 100.0])).unwrap();
        assert_eq!(s.median, vec![3.0]);
        assert_eq!(s.q25, vec![2.0]);
        assert_eq!(s.q75, vec![4.0]);
    }

    #[test]
    fn stats_constant_column() {
        let s = compute_dim_stats(&column_set(&[2.5; 6])).unwrap();
        assert_eq!(s.median[0], 2.5);
        assert_eq!(s.mean[0], 2.5);
        assert_eq!(s.std[0], 0.0);
        assert_eq!(s.q75[0] - s.q25[0], 0.0);
    }

    #[test]
    fn stats_sample_std() {
        let s = compute_dim_stats(&column_set(&[0.0, 10.0])).unwrap();
        assert_eq!(s.mean[0], 5.0);
        assert!((s.std[0] - 50f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn stats_need_two_rows() {
        assert!(matches!(
            compute_dim_stats(&column_set(&[1.0])),
            Err(Error::TooFewRows { .. })
        ));
    }

    #[test]
    fn empty_set_rejected() {
        assert!(RepresentationSet::new(Role::Target, Matrix::zeros(0, 3)).is_err());
        assert!(RepresentationSet::new(Role::Target, Matrix::zeros(3, 0)).is_err());
    }
}
