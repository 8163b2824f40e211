//! Testing the Poisson-Voronoi hypothesis on planar sections of
//! microstructures.
//!
//! The crate simulates 3D Poisson-Voronoi diagrams and their planar sections,
//! estimates the generating intensity from a section, computes area-based and
//! persistence-landscape test statistics, and approximates their null
//! distributions conditional on the number of observed section cells.

pub mod cli;
pub mod error;
pub mod geometry;
pub mod nulldist;
pub mod rng;
pub mod stereology;
pub mod statistics;
pub mod tda;

pub use error::{Error, Result};
