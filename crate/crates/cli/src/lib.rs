//! Scenario files, result export, and the command-line front end for the
//! traffic-game engine.

pub mod cli;
pub mod export;
pub mod plot;
pub mod scenario;

pub use cli::run;
