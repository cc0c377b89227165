//! Toolkit for the Trajectory Visualization Language (TVL).

pub mod datagen;
pub mod geo;
pub mod metrics;
pub mod sqlgen;
pub mod testgen;
pub mod tvl;
pub mod visgen;
