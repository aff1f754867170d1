//! Sum-rate maximization for downlink NOMA with a movable-antenna array.
//!
//! Beamformers and antenna positions are optimized alternately. The
//! beamforming step is an SDP over rank-relaxed covariances. Each antenna
//! position step is an SOCP built from quadratic channel-gain surrogates.
//! The schemes compared are MA-NOMA, fixed-array NOMA and fixed-array OMA.

// Links the system OpenBLAS used by the SDP cone.
use openblas_src as _;

pub mod baselines;
pub mod channel;
pub mod config;
pub mod conic;
pub mod error;
pub mod experiments;
pub mod noma;
pub mod optimizer;
pub mod rng;
pub mod subproblems;
pub mod surrogate;

pub use config::{OrderPolicy, ScenarioConfig, Tolerances};
pub use error::{Error, Result};
