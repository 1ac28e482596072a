pub mod analytics;
pub mod barring;
pub mod config;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod output;
pub mod powermap;
pub mod protocols;
pub mod rng;
pub mod sim;
