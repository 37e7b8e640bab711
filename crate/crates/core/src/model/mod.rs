//! The SchNet architecture and its persistence.

pub mod checkpoint;
mod config;
mod filters;
pub mod layers;
mod params;
mod schnet;

pub use checkpoint::{load_model, save_model, Container};
pub use config::ModelConfig;
pub use filters::{export_filters, filter_grid};
pub use layers::PairList;
pub use params::{layout, BlockVars, Dense, ModelVars, ParamStore};
pub use schnet::{Forward, Prediction, SchNet};
