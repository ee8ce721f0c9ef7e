use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 250;
pub const DEFAULT_SELECTION_WINDOW: usize = 63;
pub const MIN_WINDOW: usize = 30;

/// Daily calibration dates and the quarterly factor re-selection dates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub calibration_dates: Vec<NaiveDate>,
    pub selection_dates: Vec<NaiveDate>,
    pub window: usize,
    pub selection_window: usize,
}

fn quarter(d: NaiveDate) -> (i32, u32) {
    (d.year(), d.month0() / 3)
}

impl Schedule {
    /// Every date with `window` earlier observations is a calibration date; the
    /// first calibration date of each calendar quarter is a selection date.
    pub fn build(dates: &[NaiveDate], window: usize, selection_window: usize) -> Result<Self> {
        if window < MIN_WINDOW {
            return Err(Error::invalid(format!(
                "window {window} is below the minimum {MIN_WINDOW}"
            )));
        }
        if selection_window == 0 || selection_window > window {
            return Err(Error::invalid(format!(
                "selection window {selection_window} must be in 1..={window}"
            )));
        }
        if dates.len() <= window {
            return Err(Error::invalid(format!(
                "{} observations cannot fill a {window}-day window",
                dates.len()
            )));
        }
        let calibration_dates = dates[window..].to_vec();
        let mut selection_dates: Vec<NaiveDate> = Vec::new();
        for &d in &calibration_dates {
            if selection_dates.last().is_none_or(|&s| quarter(s) != quarter(d)) {
                selection_dates.push(d);
            }
        }
        Ok(Self {
            calibration_dates,
            selection_dates,
            window,
            selection_window,
        })
    }

    /// Selection date in force on `date`: the latest one not after it.
    pub fn selection_for(&self, date: NaiveDate) -> Option<NaiveDate> {
        let k = self.selection_dates.partition_point(|s| *s <= date);
        k.checked_sub(1).map(|i| self.selection_dates[i])
    }
}
