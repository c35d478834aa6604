pub mod cae;
pub mod config;
pub mod data;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod neighborhoods;
pub mod numerics;
pub mod scae;
pub mod alignment;
pub mod archive;
pub mod oos;
pub mod pipeline;
pub mod plot;
