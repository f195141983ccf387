//! Flow matching with temporal pair consistency.
//!
//! A velocity field is regressed onto conditional path velocities while a
//! pair term ties its predictions at two times along the same trajectory.

pub mod config;
pub mod error;
pub mod eval;
pub mod field;
pub mod grad;
pub mod io;
pub mod loss;
pub mod model;
pub mod nn;
pub mod pairing;
pub mod params;
pub mod paths;
pub mod optim;
pub mod rng;
pub mod sampler;
pub mod trainer;
pub mod variance;
pub mod velocity;

pub use config::{OptimizerConfig, TrainConfig};
pub use error::{Error, Result};
pub use field::VelocityField;
pub use grad::DifferentiableProgram;
pub use loss::{Objective, Telemetry, TpcBatch};
pub use model::{Checkpoint, FlowModel};
pub use pairing::{PairingMode, PairingSpec};
pub use params::{ParamVector, Segment};
pub use paths::{DataSource, EndpointPair, NoiseSharing, PathKind, PathSample};
pub use velocity::Arch;
