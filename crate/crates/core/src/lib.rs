//! Battery remaining-useful-life (RUL) toolkit.
//!
//! The crate covers the whole chain from raw cycling logs to an online RUL
//! estimate:
//!
//! * [`ingest`] parses canonical cell CSV logs and segments them into charge,
//!   discharge and rest intervals.
//! * [`simulate`] produces synthetic cells with a known capacity-fade law, so
//!   every downstream stage has an exact oracle.
//! * [`labeling`] measures capacity by coulomb counting reference discharges,
//!   converts it to state of health and derives amp-hour throughput RUL targets.
//! * [`features`] resamples V/I/T onto a uniform grid, normalizes it and cuts
//!   causal moving windows aligned to the RUL targets.
//! * [`neural`] holds hand-written dense, autoencoder and LSTM blocks with
//!   exact gradients, Adam, and a finite-difference gradient checker.
//! * [`pipeline`] trains the autoencoder and the LSTM regressor, evaluates,
//!   checkpoints, and runs streaming prediction.
//!
//! Only voltage, current and temperature ever reach the estimator. RUL is
//! measured in amp-hours of discharge throughput left before end of life, not
//! in cycles.

pub mod features;
pub mod ingest;
pub mod labeling;
pub mod neural;
pub mod pipeline;
pub mod simulate;

pub use features::{FeatureFrame, NormStats, SplitSpec, WindowSet};
pub use ingest::{CellSeries, CycleSegment, RawSample, SegmentKind};
pub use labeling::{CapacityPoint, RulTarget, SohPoint};
pub use pipeline::{EvalReport, ModelBundle, TrainConfig};
pub use simulate::{SimConfig, SimResult};
