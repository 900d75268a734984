//! Vehicle-class traffic volume imputation on road links and census-block
//! traffic density.

pub mod density;
pub mod error;
pub mod forest;
pub mod geo;
pub mod impute;
pub mod ingest;
pub mod model;
pub mod seed;
pub mod synth;
pub mod tune;
pub mod validate;

pub use error::{Error, Result};
