//! Price files to aligned log-return panels, rolling windows, thinning and
//! the daily/quarterly calibration schedule.

mod load;
mod panel;
mod schedule;

pub use load::{load_prices, load_prices_from_paths, ColumnRole, LoadReport, Manifest, RejectedRow};
pub use panel::{thin, ReturnPanel};
pub use schedule::{Schedule, DEFAULT_SELECTION_WINDOW, DEFAULT_WINDOW, MIN_WINDOW};
