//! Simulation and analysis of blinding attacks on entanglement-based QKD.
//!
//! Eve blinds the detectors of both parties and replaces the entangled source
//! with pairs of bright classical pulses of hidden polarization `λ`. Tuned to
//! twice the detector threshold the pulses reproduce the perfect
//! anticorrelation a BBM92 session checks; with one pulse weakened they show
//! the maximal CHSH value on the detected subsample at 85.3% detection
//! efficiency.
//!
//! The numeric core is generic over [`num::Scalar`]. The aliases at the crate
//! root fix the scalar to `f64`, which is what the CLI and the tests use.

pub mod analysis;
pub mod error;
pub mod num;
pub mod optics;
pub mod protocol;
pub mod records;
pub mod sources;
pub mod summary;
pub mod tally;

pub use error::{Error, Result};
pub use num::Scalar;
pub use optics::{malus_split, measure_pulse, threshold_click, Outcome};
pub use protocol::Protocol;
pub use sources::{ScenarioKind, Side, WeakSidePolicy};
pub use summary::SessionSummary;

pub type PolarizationAngle = optics::PolarizationAngle<f64>;
pub type Intensity = optics::Intensity<f64>;
pub type Pulse = optics::Pulse<f64>;
pub type DetectorStation = optics::DetectorStation<f64>;
pub type ScenarioConfig = sources::ScenarioConfig<f64>;
pub type EmittedRound = sources::EmittedRound<f64>;
pub type ProtocolConfig = protocol::ProtocolConfig<f64>;
pub type RoundRecord = protocol::RoundRecord<f64>;
pub type SiftedKey = protocol::SiftedKey<f64>;
pub type SessionStats = protocol::SessionStats<f64>;
pub type SessionTally = tally::SessionTally<f64>;
pub type EfficiencyReport = analysis::EfficiencyReport<f64>;
