//! Inference energy benchmarking: power-trace metering, serving-log
//! telemetry, steady-state energy accounting, a discrete-event serving
//! simulator, configuration sweeps, and time-energy optimization.

pub mod accounting;
pub mod meter;
pub mod metrics;
pub mod optimizer;
pub mod simulator;
pub mod sweep;
pub mod task;
pub mod telemetry;

pub use task::{LatencyMetric, PreemptionMode, Task};
