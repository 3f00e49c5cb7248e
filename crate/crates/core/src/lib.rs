pub mod asymptotics;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod gibbs;
pub mod mde;
pub mod numerics;

pub use error::{Error, Result};
