//! Vibration condition-monitoring benchmark pipeline.
//!
//! The crate goes from synthetic two-sensor accelerometer campaigns
//! ([`simgen`]) over a checksummed UDP telemetry link ([`wire`]) into
//! windowed feature extraction ([`features`]), train-fitted normalization and
//! PCA ([`reduce`]), from-scratch classifiers ([`models`]) and finally the
//! interval × reduction × model sweep with its feature-throughput accounting
//! ([`eval`]).
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.

pub mod error;
pub mod eval;
pub mod features;
pub mod models;
pub mod par;
pub mod reduce;
pub mod simgen;
pub mod wire;

pub use error::{Error, Result};
pub use simgen::ConditionClass;
