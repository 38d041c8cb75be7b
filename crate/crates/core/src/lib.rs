pub mod cli;
pub mod data;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod tensor;
pub mod train;

mod codec;
