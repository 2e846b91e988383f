//! Forecasting-task engine: task language, sample store, pipeline and
//! benchmark harness on top of `aggcast-core`.

pub mod bench;
pub mod cli;
pub mod pipeline;
pub mod store;
pub mod synth;
pub mod task;
