pub mod cli;
pub mod config;
pub mod corpus;
pub mod embed;
pub mod enrich;
pub mod error;
pub mod fixtures;
pub mod eval;
pub mod hash;
mod http;
pub mod matcher;
pub mod model;
pub mod service;
pub mod text;
pub mod view;

pub use error::{Error, Result};
