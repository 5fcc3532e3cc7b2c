//! Hierarchical loiter-circle packing, Dubins transitions and decentralized
//! drop recovery for a multi-level UAV coverage fleet.

pub mod fixtures;
pub mod geometry;
pub mod packing;
pub mod dubins;
pub mod fleet;
pub mod coverage;
pub mod protocol;
pub mod engine;
