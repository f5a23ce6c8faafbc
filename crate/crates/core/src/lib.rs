pub mod dynamics;
pub mod error;
pub mod model;

pub use error::{Error, Result};
pub mod alip;
pub mod optimizer;
pub mod surface;
pub mod pattern;
pub mod control;
pub mod sim;
pub mod config;
pub mod verify;
