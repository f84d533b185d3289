mod analyze;
mod estimate;
mod simulate;
mod threshold;

pub use analyze::analyze;
pub use estimate::estimate;
pub use simulate::simulate;
pub use threshold::{tau_grid, threshold};
