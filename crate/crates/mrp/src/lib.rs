//! File formats, the layer driver and the command-line interface around
//! [`mrp_core`].

pub mod cli;
pub mod config;
pub mod manifest;
pub mod model;
pub mod npy;
pub mod report;
pub mod sweep;
pub mod synth;
pub mod verify;

pub use mrp_core;
