//! Methodology backends.

pub mod arma;
pub mod linear;
pub mod var;
pub mod kalman;
pub mod dfm;
pub mod midas;
pub mod trees;
pub mod neural;
