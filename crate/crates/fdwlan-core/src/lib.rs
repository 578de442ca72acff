//! Saturation throughput of full-duplex capable WLANs running unmodified DCF
//! with hidden terminals.
//!
//! * [`geometry`]: hidden-region areas and the annulus decomposition.
//! * [`model`]: the `2M + 2` unknown fixed point for transmission and
//!   conditional collision probabilities.
//! * [`throughput`]: slot probabilities, frame durations, saturation throughput.
//! * [`simulator`]: slot-synchronised Monte Carlo of the same protocol, used
//!   as an independent check of the analytical path.

pub mod error;
pub mod geometry;
pub mod model;
pub mod simulator;
pub mod throughput;

pub use error::{Error, Result};
pub use geometry::{AnnulusLayout, GeometryConfig, HiddenCounts, HiddenNormalization};
pub use model::{ApSuccessTerm, BackoffParams, FixedPointSolution, Model, ModelOptions, Regime, SolverSettings};
pub use simulator::{SimConfig, SimResult, TopologyMode};
pub use throughput::{
    compare_regimes, evaluate, AnalysisOptions, MacPhyParams, PayloadMode, RegimeComparison, RhoSource, SlotDurations,
    ThroughputReport,
};
