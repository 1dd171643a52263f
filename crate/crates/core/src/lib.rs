//! Data-context informed wrangling: matching, mapping, transformation and
//! repair of source data into a user-defined target schema.

pub mod config;
pub mod error;
pub mod evaluate;
pub mod ingest;
pub mod mapper;
pub mod matcher;
pub mod model;
pub mod pipeline;
pub mod profiler;
pub mod repairer;
pub mod text;
pub mod transformer;

pub use error::{Error, Result};
