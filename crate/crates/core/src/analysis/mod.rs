//! Population, visibility, concurrence and fitting analyses.

pub mod entanglement;
pub mod fit;
pub mod stats;
pub mod visibility;
pub mod windows;

pub use entanglement::*;
pub use fit::{fit_g2, fit_lifetime, levenberg_marquardt, G2Fit, LifetimeFit, LifetimePoint, LmFit, RhoMode};
pub use stats::{bootstrap_counts, delta_method};
pub use visibility::{default_scan_angles, visibility_from_scan, ScanPoint, VisibilityResult};
pub use windows::{estimate_from_counts, window_grid, window_populations, WindowPopulationCounter};
