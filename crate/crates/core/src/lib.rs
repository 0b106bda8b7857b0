//! Security analysis of measurement-device-independent QKD with flawed
//! sources: fidelity of the flawed states, asymptotic and finite-size key
//! rates, calibration of the flaw parameters and a pulse-level simulator.

pub mod calibration;
pub mod corenum;
pub mod error;
pub mod finitekey;
pub mod flawmodel;
pub mod montecarlo;
pub mod security;

pub use corenum::{binary_entropy, coherent_overlap, CoherentAmplitude, ComplexAmp, Phase};
pub use error::{Error, Result};
pub use flawmodel::{fidelity_flawed, FidelityResult, FlawParams, PhaseDeviation};
pub use security::{ChannelParams, KeyRateReport, ProtocolParams};
