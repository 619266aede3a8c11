pub mod algebra_core;
pub mod linalg;
pub mod tower;
pub mod qfa;
pub mod channel;
pub mod rng;
pub mod spectral;
pub mod harness;
