pub mod cli;
pub mod error;
pub mod forcing;
pub mod frequency;
pub mod mode;
pub mod resummation;
pub mod scales;
pub mod series;
pub mod solver;
pub mod trees;
pub mod trig;

pub use error::{Error, Result};
pub use mode::Mode;
