//! Sampling-theory toolkit for studying how interpolating ReLU networks
//! behave on band-limited targets.

pub mod analysis;
pub mod bandlimited;
pub mod config;
pub mod error;
pub mod experiments;
pub mod lattice;
pub mod linalg;
pub mod map;
pub mod network;
pub mod sampling;
pub mod textio;

pub use bandlimited::{random_bandlimited, BandlimitedFn, SpectrumKind, SpectrumProfile};
pub use error::{Error, Result};
pub use lattice::Lattice;
pub use map::{FnMap, RealMap};
pub use sampling::{SampleSet, Scheme};
