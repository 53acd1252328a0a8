//! Discrete-event simulation toolkit for multicomponent dynamic systems.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod billiards;
pub mod circuitnet;
pub mod config;
pub mod deposition;
pub mod dispenser;
pub mod error;
pub mod event;
pub mod ising;
pub mod parallel;
pub mod rng;
pub mod run;
pub mod stats;
pub mod telecom;
pub mod verify;

pub use error::{Result, SimError};
pub use event::{EventQueue, EventTime, SimTime};
pub use rng::RandomStream;
