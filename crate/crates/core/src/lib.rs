//! Simulation framework for quantum federated learning under circuit-level
//! backdoor attacks.
//!
//! The crate trains hybrid quantum-classical classifiers across simulated
//! clients, injects four circuit-level attacks plus a stealth update-crafting
//! pipeline on the malicious side, defends with six aggregation rules on the
//! server side, and checks the accompanying stealth/deviation bounds at
//! runtime.

pub mod aggregators;
pub mod analysis;
pub mod attacks;
pub mod config;
pub mod crafting;
pub mod data;
pub mod error;
pub mod experiment;
pub mod federation;
pub mod linalg;
pub mod model;
pub mod qsim;
pub mod rng;

pub use error::{Error, Result};
