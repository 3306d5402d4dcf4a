pub mod commcost;
pub mod error;
pub mod netspec;
pub mod planner;

pub use error::{Error, ParseError, Result};
pub mod cli;
pub mod simarray;
pub mod zoo;
