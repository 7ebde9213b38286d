//! File formats, seeded density quantization, parallel tensor assembly and
//! the batch commands built on [`hbary_core`].

pub mod assemble;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod report;
pub mod sample;

pub use assemble::assemble_parallel;
pub use config::RunConfig;
pub use error::{CliError, CliResult, ErrorReport};
pub use io::{load_measure, save_measure, MeasureFormat};
pub use sample::{sample_density, DensitySpec, SampleMode};
