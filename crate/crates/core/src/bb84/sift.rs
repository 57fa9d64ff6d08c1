use alloc::vec::Vec;

use super::{DetectionRecord, ProtocolError, PulseClass, PulseRecord};

/// Basis-matched detections of one pulse class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiftedBlock {
    pub class: PulseClass,
    pub sender_bits: Vec<bool>,
    pub receiver_bits: Vec<bool>,
    /// Pulses of this class that were emitted.
    pub sent_count: u64,
    /// Gates with any click, before basis reconciliation.
    pub clicked: u64,
    pub double_clicks: u64,
    pub sifted_indices: Vec<u64>,
}

impl SiftedBlock {
    pub fn new(class: PulseClass) -> Self {
        Self {
            class,
            sender_bits: Vec::new(),
            receiver_bits: Vec::new(),
            sent_count: 0,
            clicked: 0,
            double_clicks: 0,
            sifted_indices: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.sender_bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sender_bits.is_empty()
    }

    pub fn gain(&self) -> f64 {
        if self.sent_count == 0 {
            0.0
        } else {
            self.clicked as f64 / self.sent_count as f64
        }
    }

    pub fn errors(&self) -> usize {
        crate::bits::hamming(&self.sender_bits, &self.receiver_bits)
    }
}

/// Sifted blocks of all three classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SiftedBlocks {
    blocks: [SiftedBlock; 3],
}

impl Default for SiftedBlocks {
    fn default() -> Self {
        Self {
            blocks: PulseClass::ALL.map(SiftedBlock::new),
        }
    }
}

impl SiftedBlocks {
    pub fn get(&self, class: PulseClass) -> &SiftedBlock {
        &self.blocks[class.index()]
    }

    pub fn get_mut(&mut self, class: PulseClass) -> &mut SiftedBlock {
        &mut self.blocks[class.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = &SiftedBlock> {
        self.blocks.iter()
    }

    /// Sifts one more chunk of the session into the running blocks.
    pub fn absorb(&mut self, train: &[PulseRecord], detections: &[DetectionRecord]) -> Result<(), ProtocolError> {
        if train.len() != detections.len() {
            return Err(ProtocolError::Desynchronized("record counts differ"));
        }
        for (p, d) in train.iter().zip(detections) {
            if p.index != d.index {
                return Err(ProtocolError::Desynchronized("pulse and gate indices differ"));
            }
            let block = &mut self.blocks[p.class.index()];
            block.sent_count += 1;
            if !d.clicked {
                continue;
            }
            block.clicked += 1;
            block.double_clicks += d.double_click as u64;
            if p.class == PulseClass::Vacuum || p.basis != d.basis {
                continue;
            }
            block.sender_bits.push(p.bit);
            block.receiver_bits.push(d.bit);
            block.sifted_indices.push(p.index);
        }
        Ok(())
    }
}

/// Basis reconciliation: keeps clicked gates whose basis matches the
/// transmitter's. Vacuum pulses only contribute click counts.
pub fn sift(train: &[PulseRecord], detections: &[DetectionRecord]) -> Result<SiftedBlocks, ProtocolError> {
    let mut blocks = SiftedBlocks::default();
    blocks.absorb(train, detections)?;
    Ok(blocks)
}
