//! Joint attribute forecasting and link prediction on dynamic attributed graphs.

pub mod autodiff;
pub mod dataio;
pub mod synth;
pub mod model;
pub mod inference;
pub mod training;
pub mod eval;
