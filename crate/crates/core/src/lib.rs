pub mod baselines;
pub mod bench;
pub mod error;
pub mod page_mapper;
pub mod physical_store;
pub mod query_engine;
pub mod update_engine;
pub mod view_index;
pub mod views;
pub mod workload;

pub use error::{Error, Result};
