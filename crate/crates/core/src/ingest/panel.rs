use chrono::NaiveDate;
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Daily log-returns of assets and factors on a shared date index.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<NaiveDate>,
    asset_returns: DMatrix<f64>,
    factor_returns: DMatrix<f64>,
    asset_labels: Vec<String>,
    factor_labels: Vec<String>,
}

impl ReturnPanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        asset_returns: DMatrix<f64>,
        factor_returns: DMatrix<f64>,
        asset_labels: Vec<String>,
        factor_labels: Vec<String>,
    ) -> Result<Self> {
        let t = dates.len();
        if asset_returns.nrows() != t || factor_returns.nrows() != t {
            return Err(Error::DimensionMismatch {
                expected: t,
                actual: if asset_returns.nrows() != t {
                    asset_returns.nrows()
                } else {
                    factor_returns.nrows()
                },
                context: "return rows vs dates",
            });
        }
        if asset_returns.ncols() != asset_labels.len() {
            return Err(Error::DimensionMismatch {
                expected: asset_labels.len(),
                actual: asset_returns.ncols(),
                context: "asset columns vs labels",
            });
        }
        if factor_returns.ncols() != factor_labels.len() {
            return Err(Error::DimensionMismatch {
                expected: factor_labels.len(),
                actual: factor_returns.ncols(),
                context: "factor columns vs labels",
            });
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::invalid(format!(
                "dates must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if asset_returns
            .iter()
            .chain(factor_returns.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("returns must be finite"));
        }
        Ok(Self {
            dates,
            asset_returns,
            factor_returns,
            asset_labels,
            factor_labels,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.dates.len()
    }
    pub fn n_assets(&self) -> usize {
        self.asset_labels.len()
    }
    pub fn n_factors(&self) -> usize {
        self.factor_labels.len()
    }
    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }
    pub fn asset_returns(&self) -> &DMatrix<f64> {
        &self.asset_returns
    }
    pub fn factor_returns(&self) -> &DMatrix<f64> {
        &self.factor_returns
    }
    pub fn asset_labels(&self) -> &[String] {
        &self.asset_labels
    }
    pub fn factor_labels(&self) -> &[String] {
        &self.factor_labels
    }

    /// Rows `start..end`.
    pub fn rows(&self, start: usize, end: usize) -> Self {
        assert!(start <= end && end <= self.n_obs(), "row range out of bounds");
        let n = end - start;
        Self {
            dates: self.dates[start..end].to_vec(),
            asset_returns: self.asset_returns.rows(start, n).into_owned(),
            factor_returns: self.factor_returns.rows(start, n).into_owned(),
            asset_labels: self.asset_labels.clone(),
            factor_labels: self.factor_labels.clone(),
        }
    }

    /// Number of rows dated strictly before `date`.
    pub fn count_before(&self, date: NaiveDate) -> usize {
        self.dates.partition_point(|d| *d < date)
    }

    /// The `length` rows ending at the last date strictly before `end_date`.
    pub fn window_slice(&self, end_date: NaiveDate, length: usize) -> Result<Self> {
        if length == 0 {
            return Err(Error::invalid("window length must be positive"));
        }
        let end = self.count_before(end_date);
        if end < length {
            let hint = match self.dates.first() {
                Some(first) if end_date > *first => {
                    format!("; the window needs {length} rows before {end_date} but only {end} exist from {first}")
                }
                _ => format!("; {end_date} is not after the first date"),
            };
            return Err(Error::invalid(format!("insufficient history{hint}")));
        }
        Ok(self.rows(end - length, end))
    }
}

/// Keeps elements `0, stride, 2 stride, ...`.
pub fn thin<T: Clone>(series: &[T], stride: usize) -> Result<Vec<T>> {
    if stride == 0 {
        return Err(Error::invalid("thinning stride must be at least 1"));
    }
    Ok(series.iter().step_by(stride).cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(t: usize) -> ReturnPanel {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dates = (0..t).map(|i| start + chrono::Days::new(i as u64)).collect();
        ReturnPanel::new(
            dates,
            DMatrix::from_fn(t, 2, |i, j| (i * 2 + j) as f64),
            DMatrix::from_fn(t, 1, |i, _| -(i as f64)),
            vec!["A".into(), "B".into()],
            vec!["F".into()],
        )
        .unwrap()
    }

    #[test]
    fn full_length_window_is_whole_panel() {
        let p = panel(10);
        let after = *p.dates().last().unwrap() + chrono::Days::new(1);
        assert_eq!(p.window_slice(after, 10).unwrap(), p);
    }

    #[test]
    fn window_excludes_end_date() {
        let p = panel(251);
        let last = *p.dates().last().unwrap();
        let w = p.window_slice(last, 250).unwrap();
        assert_eq!(w.n_obs(), 250);
        assert_eq!(w.dates()[0], p.dates()[0]);
        assert_eq!(w.dates()[249], p.dates()[249]);
        assert_eq!(w.asset_returns()[(0, 1)], 1.0);
    }

    #[test]
    fn window_before_start_is_error() {
        let p = panel(5);
        assert!(p.window_slice(p.dates()[0], 1).is_err());
        assert!(p.window_slice(p.dates()[3], 4).is_err());
    }

    #[test]
    fn thinning() {
        let v: Vec<usize> = (0..5520).collect();
        assert_eq!(thin(&v, 10).unwrap().len(), 552);
        assert_eq!(thin(&v, 1).unwrap(), v);
        assert_eq!(thin(&v[..7], 10).unwrap(), vec![0]);
        assert!(thin(&v, 0).is_err());
    }

    #[test]
    fn rejects_unsorted_dates() {
        let d = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let r = ReturnPanel::new(
            vec![d, d],
            DMatrix::zeros(2, 1),
            DMatrix::zeros(2, 1),
            vec!["A".into()],
            vec!["F".into()],
        );
        assert!(r.is_err());
    }
}
