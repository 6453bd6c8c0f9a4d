//! File formats, synthetic data, reports, and the command-line harness for
//! the SEDNet engine.
//!
//! The numerics live in `sednet-core`; this crate owns everything that
//! touches the filesystem: the `.sedvol` volume container, the `.sedw`
//! weight archive, CSV/JSON reports, PGM/PPM image emission, run manifests,
//! and the `sednet` binary.

pub mod cli;
pub mod error;
pub mod images;
pub mod manifest;
pub mod reports;
pub mod synth;
pub mod volume_file;
pub mod weights_file;

pub use error::{IoError, Result};

/// Re-exported so CLI code and tests share one entry point for evaluation.
pub use sednet_core::metrics::evaluate as metrics_eval;
