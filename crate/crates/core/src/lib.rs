//! Feature selection for one or many regression tasks by minimum
//! description length, with multi-task, feature-class and transfer codes.

pub mod cli;
pub mod codes;
pub mod dataio;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fit;
pub mod mic;
pub mod model;
pub mod replay;
pub mod select;
pub mod synth;
pub mod tpc;
pub mod transfer;

pub use dataset::{ClassMap, Dataset};
pub use error::{Error, Result};
pub use model::{Event, FeatureRef, Scheme, SelectionModel, TransferSetting};
