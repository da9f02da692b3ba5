//! Inter-city workforce migration analysis.
//!
//! The crate reconstructs city-pair migration flux from geotagged message
//! logs, fits and evaluates a family of gravity-law models of that flux,
//! clusters trajectories into migration patterns and derives city and
//! province development indices from the pattern structure.
//!
//! Pipeline stages map onto the modules:
//!
//! 1. [`ingest`] — message logs to per-user trajectories and flux matrices
//! 2. [`geo`] — great-circle distance and ingested travel cost tables
//! 3. [`gravity`] — log-linear fits, predictions, SSI model comparison
//! 4. [`clustering`] — cosine K-means patterns with k diagnostics
//! 5. [`indices`] — DI, province pattern ratios, locality and GDP-match curves
//! 6. [`pipeline`] — reproducible CLI runs over CSV inputs and outputs
//!
//! [`synth`] provides forward generators used by the test oracles and the
//! `synth` subcommand.

pub mod clustering;
pub mod error;
pub mod geo;
pub mod gravity;
pub mod indices;
pub mod ingest;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};

/// Version string recorded in every output's metadata header.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
