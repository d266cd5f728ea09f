pub mod error;
pub mod linalg;
pub mod dynamics;
pub mod geometry;
pub mod measurement;
pub mod spin;
pub mod runner;
