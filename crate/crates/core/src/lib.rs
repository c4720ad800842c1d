//! Per-element value functions learned by continuous-time actor-critic with a
//! GP approximator, composed online through barrier constraints.

pub mod env;
pub mod error;
pub mod gp;
pub mod io;
pub mod model;
pub mod safety;
pub mod scene;
pub mod trainer;
pub mod validation;

pub use error::{Error, Result};
