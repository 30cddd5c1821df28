//! Desk-scale workbench for learning sparse-foothold locomotion.

pub mod env;
pub mod foothold;
pub mod geom;
pub mod harness;
pub mod nn;
pub mod rl;
pub mod rng;
pub mod sensor;
pub mod terrain;
