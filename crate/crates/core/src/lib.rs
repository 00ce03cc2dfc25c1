//! Growth/epidemic particle system on random 3-regular graphs and tori,
//! its limiting interval maps, and numerical checks of their chaotic
//! behaviour.
//!
//! The interval-map layer ([`dynsys`]) is generic over the scalar type
//! ([`Real`]: `f32` or `f64`); the aliases below fix the common choices.

pub mod dynsys;
pub mod error;
pub mod graph;
pub mod percolation;
pub mod rng;
mod scalar;
pub mod sim;
pub mod torus;

pub use error::{Error, Result};
pub use scalar::Real;

pub type TreeMap = dynsys::tree::TreeMap<f64>;
pub type TreeMapF32 = dynsys::tree::TreeMap<f32>;
pub type TreeMapLandmarks = dynsys::tree::TreeMapLandmarks<f64>;
pub type LiYorkeWitness = dynsys::tree::LiYorkeWitness<f64>;
pub type PhiCheck = dynsys::tree::PhiCheck<f64>;

pub use dynsys::lattice::{LatticeMap, ThetaTable};
pub use sim::{ModelConfig, Simulation, TrajectoryRecord};
