//! Cascade reconciliation.
//!
//! The receiver drives; the sender only answers parity queries over ranges
//! of publicly agreed permutations of the key. Each answered parity bit is
//! leaked information and is counted. A pass splits the permuted key into
//! blocks, compares block parities and bisects every mismatching block down
//! to a single error. Fixing a bit toggles the parity of the block holding
//! it in every earlier pass, which may expose further errors there
//! ("cascading"). After the passes a random-subset parity hash checks the
//! whole key.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use super::transcript::{Direction, Phase, Transcript};
use super::ProtocolError;
use crate::bits::PackedBits;
use crate::decoy::binary_entropy;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CascadeConfig {
    /// Expected QBER; sets the first-pass block size `0.73 / qber`. Zero
    /// means "probably error free": the verification hash is tried first.
    pub qber_hint: f64,
    pub passes: u32,
    /// Random-subset parities in the final check (collision prob. `2^-bits`).
    pub verification_bits: u32,
    /// Rounds of (passes + verification) before giving up. Rounds after the
    /// first add two passes each.
    pub max_rounds: u32,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        Self {
            qber_hint: 0.02,
            passes: 4,
            verification_bits: 32,
            max_rounds: 4,
        }
    }
}

impl CascadeConfig {
    pub fn with_hint(qber_hint: f64) -> Self {
        Self {
            qber_hint,
            ..Default::default()
        }
    }
}

/// Result of a successful reconciliation.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconciled {
    /// Receiver's corrected key; equals the sender's key.
    pub corrected: Vec<bool>,
    /// Every key-dependent bit the sender disclosed, verification included.
    pub leakage_bits: u64,
    pub corrected_errors: usize,
    pub rounds: u32,
}

impl Reconciled {
    /// `leakage / (n * H2(E))` with `E` the error rate actually corrected;
    /// `None` without errors.
    pub fn realized_efficiency(&self) -> Option<f64> {
        let n = self.corrected.len();
        if n == 0 || self.corrected_errors == 0 {
            return None;
        }
        let h = binary_entropy(self.corrected_errors as f64 / n as f64).ok()?;
        Some(self.leakage_bits as f64 / (n as f64 * h))
    }
}

/// The sender's half of the channel: answers parity queries and logs both
/// directions.
struct SenderEndpoint<'a> {
    bits: &'a [bool],
    transcript: &'a mut Transcript,
    leaked: u64,
}

impl SenderEndpoint<'_> {
    fn range_parities(&mut self, phase: Phase, perm: &[u32], ranges: &[(usize, usize)]) -> Vec<bool> {
        self.transcript
            .record(phase, Direction::ReceiverToSender, 4 + 8 * ranges.len() as u64, 0);
        let answers: Vec<bool> = ranges
            .iter()
            .map(|&(lo, hi)| perm[lo..hi].iter().fold(false, |acc, &i| acc ^ self.bits[i as usize]))
            .collect();
        self.respond(phase, answers.len() as u64);
        answers
    }

    fn hash(&mut self, masks: &[PackedBits]) -> Vec<bool> {
        self.transcript
            .record(Phase::Verification, Direction::ReceiverToSender, 8, 0);
        let key = PackedBits::from_bools(self.bits);
        let out: Vec<bool> = masks.iter().map(|m| m.and_parity(&key)).collect();
        self.respond(Phase::Verification, out.len() as u64);
        out
    }

    fn respond(&mut self, phase: Phase, bits: u64) {
        self.leaked += bits;
        self.transcript
            .record(phase, Direction::SenderToReceiver, bits.div_ceil(8), bits);
    }
}

struct Pass {
    perm: Vec<u32>,
    /// Inverse of `perm`.
    position: Vec<u32>,
    block: usize,
    sender_parity: Vec<bool>,
    receiver_parity: Vec<bool>,
    pending: Vec<usize>,
}

impl Pass {
    fn block_of(&self, bit: usize) -> usize {
        self.position[bit] as usize / self.block
    }

    fn range(&self, b: usize) -> (usize, usize) {
        let lo = b * self.block;
        (lo, (lo + self.block).min(self.perm.len()))
    }

    fn mismatched(&self, b: usize) -> bool {
        self.sender_parity[b] != self.receiver_parity[b]
    }
}

struct Receiver {
    bits: Vec<bool>,
    passes: Vec<Pass>,
    fixed: usize,
}

impl Receiver {
    fn parity(&self, perm: &[u32]) -> bool {
        perm.iter().fold(false, |acc, &i| acc ^ self.bits[i as usize])
    }

    fn add_pass<R: Rng + ?Sized>(&mut self, block: usize, sender: &mut SenderEndpoint<'_>, rng: &mut R) {
        let n = self.bits.len();
        let mut perm: Vec<u32> = (0..n as u32).collect();
        perm.shuffle(rng);
        let mut position = vec![0u32; n];
        for (p, &i) in perm.iter().enumerate() {
            position[i as usize] = p as u32;
        }
        let blocks = n.div_ceil(block);
        let ranges: Vec<(usize, usize)> = (0..blocks).map(|b| (b * block, ((b + 1) * block).min(n))).collect();
        let receiver_parity = ranges.iter().map(|&(lo, hi)| self.parity(&perm[lo..hi])).collect();
        let sender_parity = sender.range_parities(Phase::Reconciliation, &perm, &ranges);
        let mut pass = Pass {
            perm,
            position,
            block,
            sender_parity,
            receiver_parity,
            pending: Vec::new(),
        };
        pass.pending = (0..blocks).filter(|&b| pass.mismatched(b)).collect();
        self.passes.push(pass);
        self.settle(sender);
    }

    /// Bisects mismatching blocks until every pass agrees, smallest blocks
    /// (earliest passes) first.
    fn settle(&mut self, sender: &mut SenderEndpoint<'_>) {
        loop {
            let Some((p, b)) = self.next_mismatch() else {
                return;
            };
            let bit = self.bisect(p, b, sender);
            self.flip(bit);
        }
    }

    fn next_mismatch(&mut self) -> Option<(usize, usize)> {
        for (p, pass) in self.passes.iter_mut().enumerate() {
            while let Some(b) = pass.pending.pop() {
                if pass.mismatched(b) {
                    return Some((p, b));
                }
            }
        }
        None
    }

    fn bisect(&self, p: usize, b: usize, sender: &mut SenderEndpoint<'_>) -> usize {
        let pass = &self.passes[p];
        let (mut lo, mut hi) = pass.range(b);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            let theirs = sender.range_parities(Phase::Reconciliation, &pass.perm, &[(lo, mid)])[0];
            if theirs != self.parity(&pass.perm[lo..mid]) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        pass.perm[lo] as usize
    }

    fn flip(&mut self, bit: usize) {
        self.bits[bit] ^= true;
        self.fixed += 1;
        for pass in &mut self.passes {
            let b = pass.block_of(bit);
            pass.receiver_parity[b] ^= true;
            if pass.mismatched(b) {
                pass.pending.push(b);
            }
        }
    }

    fn verify<R: Rng + ?Sized>(&self, bits: u32, sender: &mut SenderEndpoint<'_>, rng: &mut R) -> bool {
        let n = self.bits.len();
        let masks: Vec<PackedBits> = (0..bits)
            .map(|_| {
                let words = (0..n.div_ceil(64)).map(|_| rng.gen()).collect();
                PackedBits::from_words(words, n)
            })
            .collect();
        let key = PackedBits::from_bools(&self.bits);
        let ours: Vec<bool> = masks.iter().map(|m| m.and_parity(&key)).collect();
        sender.hash(&masks) == ours
    }
}

/// Reconciles `receiver` to `sender`. `rng` is the public stream both
/// parties share (permutations, hash masks); every message is appended to
/// `transcript`.
pub fn error_correct<R: Rng + ?Sized>(
    sender: &[bool],
    receiver: &[bool],
    config: &CascadeConfig,
    rng: &mut R,
    transcript: &mut Transcript,
) -> Result<Reconciled, ProtocolError> {
    if sender.len() != receiver.len() {
        return Err(ProtocolError::InvalidInput("keys differ in length"));
    }
    let n = sender.len();
    let mut endpoint = SenderEndpoint {
        bits: sender,
        transcript,
        leaked: 0,
    };
    let mut rx = Receiver {
        bits: receiver.to_vec(),
        passes: Vec::new(),
        fixed: 0,
    };
    let done = |rx: Receiver, endpoint: SenderEndpoint<'_>, rounds| Reconciled {
        corrected: rx.bits,
        leakage_bits: endpoint.leaked,
        corrected_errors: rx.fixed,
        rounds,
    };
    if n == 0 {
        return Ok(done(rx, endpoint, 0));
    }
    if !(config.qber_hint > 0.0) && rx.verify(config.verification_bits, &mut endpoint, rng) {
        return Ok(done(rx, endpoint, 0));
    }

    // A failed verify-first falls back to a typical link QBER.
    let hint = if config.qber_hint > 0.0 { config.qber_hint } else { 0.01 };
    let hint = hint.max(1.0 / n as f64);
    let first_block = (libm::ceil(0.73 / hint) as usize).clamp(1, n);
    for round in 0..config.max_rounds {
        let passes = if round == 0 { config.passes } else { 2 };
        for _ in 0..passes {
            let shift = rx.passes.len().min(usize::BITS as usize - 1) as u32;
            let block = first_block.saturating_mul(1usize << shift).min(n);
            rx.add_pass(block, &mut endpoint, rng);
        }
        if rx.verify(config.verification_bits, &mut endpoint, rng) {
            return Ok(done(rx, endpoint, round + 1));
        }
    }
    Err(ProtocolError::ReconciliationFailed {
        rounds: config.max_rounds,
    })
}
