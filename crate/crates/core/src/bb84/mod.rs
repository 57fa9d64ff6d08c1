//! One decoy-state BB84 session between a transmitter and a receiver.
//!
//! The stages run in order: [`prepare_pulse_train`] and
//! [`run_quantum_phase`] produce the raw records, [`sift`] keeps basis-matched
//! clicks per pulse class, [`estimate_stats`] measures gains and error rates,
//! [`error_correct`] reconciles the signal key with Cascade and
//! [`privacy_amplify`] compresses it to the secure length. [`run_session`]
//! drives all of them over a chunked pulse stream.

mod amplify;
mod cascade;
mod estimate;
mod pulse;
mod session;
mod sift;
mod transcript;

pub use amplify::{privacy_amplify, secure_length, toeplitz_hash};
pub use cascade::{error_correct, CascadeConfig, Reconciled};
pub use estimate::{estimate_stats, QberSample};
pub use pulse::{prepare_pulse_train, prepare_pulse_train_from, run_quantum_phase};
pub use session::{run_session, session_stream, SessionConfig, SessionKeys, SessionOutcome};
pub use sift::{sift, SiftedBlock, SiftedBlocks};
pub use transcript::{Direction, Phase, Transcript, TranscriptEvent};

use thiserror::Error;

use crate::decoy::AnalysisError;
use crate::phys::PhysError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("desynchronized session: {0}")]
    Desynchronized(&'static str),
    #[error("insufficient decoy statistics: {0}")]
    InsufficientDecoyStatistics(&'static str),
    #[error("invalid session input: {0}")]
    InvalidInput(&'static str),
    #[error("reconciliation failed after {rounds} rounds")]
    ReconciliationFailed { rounds: u32 },
    #[error("no secure key: privacy amplification leaves {available} bits")]
    NoSecureKey { available: i64 },
    #[error(transparent)]
    Phys(#[from] PhysError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

/// Polarization basis: H/V or +45/-45.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Basis {
    Rectilinear,
    Diagonal,
}

/// Intensity class of an emitted pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PulseClass {
    Signal,
    Decoy,
    Vacuum,
}

impl PulseClass {
    pub const ALL: [PulseClass; 3] = [PulseClass::Signal, PulseClass::Decoy, PulseClass::Vacuum];

    pub fn index(self) -> usize {
        match self {
            PulseClass::Signal => 0,
            PulseClass::Decoy => 1,
            PulseClass::Vacuum => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PulseClass::Signal => "signal",
            PulseClass::Decoy => "decoy",
            PulseClass::Vacuum => "vacuum",
        }
    }
}

/// What the transmitter emitted in one time slot. The bit of a vacuum pulse
/// is meaningless.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PulseRecord {
    pub index: u64,
    pub bit: bool,
    pub basis: Basis,
    pub class: PulseClass,
}

/// What the receiver saw in one gate. `bit` and `basis` only mean something
/// when `clicked`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionRecord {
    pub index: u64,
    pub basis: Basis,
    pub bit: bool,
    pub clicked: bool,
    pub double_click: bool,
}

impl DetectionRecord {
    pub fn silent(index: u64) -> Self {
        Self {
            index,
            basis: Basis::Rectilinear,
            bit: false,
            clicked: false,
            double_click: false,
        }
    }
}
