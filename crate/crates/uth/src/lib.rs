//! Loaders, file formats and the `uth` command line on top of [`uth_core`].
//!
//! * [`idx`] and [`cifar`] read the MNIST and CIFAR-10 binary distributions.
//! * [`params_file`] and [`codes_file`] are the versioned binary formats for
//!   trained networks and code databases.
//! * [`report`] writes training logs, evaluation reports and search results.
//! * [`config`] is the JSON run configuration shared by all subcommands.

pub mod cifar;
pub mod cli;
pub mod codes_file;
pub mod config;
pub mod error;
pub mod idx;
pub mod params_file;
pub mod report;

pub use error::{Error, Result};
pub use uth_core;
