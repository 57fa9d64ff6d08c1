use alloc::vec::Vec;

/// Protocol phase a classical message belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Sifting,
    Estimation,
    Reconciliation,
    Verification,
    Amplification,
    Relay,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Sifting => "sifting",
            Phase::Estimation => "estimation",
            Phase::Reconciliation => "reconciliation",
            Phase::Verification => "verification",
            Phase::Amplification => "amplification",
            Phase::Relay => "relay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    SenderToReceiver,
    ReceiverToSender,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::SenderToReceiver => "sender->receiver",
            Direction::ReceiverToSender => "receiver->sender",
        }
    }
}

/// One message on the classical channel. `payload_bits` counts the key
/// dependent bits it carries (parities, hash outputs); everything else is
/// public bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TranscriptEvent {
    pub phase: Phase,
    pub direction: Direction,
    pub bytes: u64,
    pub payload_bits: u64,
}

/// Append-only log of the classical channel.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transcript {
    events: Vec<TranscriptEvent>,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, phase: Phase, direction: Direction, bytes: u64, payload_bits: u64) {
        self.events.push(TranscriptEvent {
            phase,
            direction,
            bytes,
            payload_bits,
        });
    }

    pub fn events(&self) -> &[TranscriptEvent] {
        &self.events
    }

    pub fn bytes_in(&self, phase: Phase) -> u64 {
        self.events.iter().filter(|e| e.phase == phase).map(|e| e.bytes).sum()
    }

    /// Key-dependent bits the sender put on the wire in the given phases.
    pub fn disclosed_bits(&self, phases: &[Phase]) -> u64 {
        self.events
            .iter()
            .filter(|e| e.direction == Direction::SenderToReceiver && phases.contains(&e.phase))
            .map(|e| e.payload_bits)
            .sum()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}
