//! Rogue-event statistics over space-time records.

pub mod extreme;
pub mod histogram;
pub mod moments;
pub mod scaling;
pub mod threshold;

pub use extreme::{
    block_maxima, fit_gumbel, fit_gumbel_with, BlockMaximaSeries, FamilyComparison, FamilyFit, GumbelFit,
    GumbelMethod, LeastSquaresOptions,
};
pub use histogram::{BinSpec, Histogram};
pub use moments::{mean, skewness, variance};
pub use scaling::{fit_power_law, PowerLawFit};
pub use threshold::{detect_events, significant_threshold, Event, EventSet, ThresholdResult};
