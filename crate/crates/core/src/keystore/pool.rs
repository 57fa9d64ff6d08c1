use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::KeyError;

/// Unordered pair of node names, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodePair {
    a: String,
    b: String,
}

impl NodePair {
    pub fn new(x: &str, y: &str) -> Result<Self, KeyError> {
        if x == y {
            return Err(KeyError::NotAnEndpoint(x.to_string()));
        }
        let (a, b) = if x < y { (x, y) } else { (y, x) };
        Ok(Self {
            a: a.to_string(),
            b: b.to_string(),
        })
    }

    pub fn a(&self) -> &str {
        &self.a
    }

    pub fn b(&self) -> &str {
        &self.b
    }

    pub fn contains(&self, name: &str) -> bool {
        self.a == name || self.b == name
    }

    pub fn peer(&self, name: &str) -> Option<&str> {
        if name == self.a {
            Some(&self.b)
        } else if name == self.b {
            Some(&self.a)
        } else {
            None
        }
    }

    /// Lane used by `sender` when it encrypts towards its peer.
    pub fn lane_of(&self, sender: &str) -> Option<Lane> {
        if sender == self.a {
            Some(Lane::Forward)
        } else if sender == self.b {
            Some(Lane::Backward)
        } else {
            None
        }
    }
}

impl core::fmt::Display for NodePair {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "{}<->{}", self.a, self.b)
    }
}

/// Direction partition of a pool: `Forward` (a -> b) owns the even byte
/// offsets, `Backward` (b -> a) the odd ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Lane {
    Forward,
    Backward,
}

impl Lane {
    pub fn index(self) -> usize {
        match self {
            Lane::Forward => 0,
            Lane::Backward => 1,
        }
    }

    pub fn from_offset(offset: u64) -> Self {
        if offset.is_multiple_of(2) {
            Lane::Forward
        } else {
            Lane::Backward
        }
    }
}

/// Where a deposited block of key came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyBlock {
    pub start: u64,
    pub len: u64,
    pub provenance: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UseKind {
    Send,
    Receive,
    /// Destroyed unused because a later offset arrived first.
    Skipped,
}

/// One consumption of lane bytes `offset, offset + 2, ..` (`len` of them).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyUse {
    pub lane: Lane,
    pub offset: u64,
    pub len: u64,
    pub kind: UseKind,
}

/// One endpoint's copy of the key shared by a node pair.
///
/// Bytes are addressed by absolute offset since the pool was created. Each
/// direction consumes its own lane in order; consumed bytes are zeroed
/// immediately and dropped from memory by [`KeyPool::compact`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPool {
    pair: NodePair,
    owner: String,
    base: u64,
    bytes: Vec<u8>,
    blocks: Vec<KeyBlock>,
    cursors: [u64; 2],
    log: Vec<KeyUse>,
}

impl KeyPool {
    pub fn new(pair: NodePair, owner: &str) -> Result<Self, KeyError> {
        if !pair.contains(owner) {
            return Err(KeyError::NotAnEndpoint(owner.to_string()));
        }
        Ok(Self {
            pair,
            owner: owner.to_string(),
            base: 0,
            bytes: Vec::new(),
            blocks: Vec::new(),
            cursors: [0, 1],
            log: Vec::new(),
        })
    }

    /// Rebuilds a pool from persisted parts. `bytes` holds offsets
    /// `base..base + bytes.len()`.
    pub fn from_parts(
        pair: NodePair,
        owner: &str,
        base: u64,
        bytes: Vec<u8>,
        blocks: Vec<KeyBlock>,
        cursors: [u64; 2],
    ) -> Result<Self, KeyError> {
        let mut pool = Self::new(pair, owner)?;
        let total = base + bytes.len() as u64;
        if !cursors[0].is_multiple_of(2) || cursors[1].is_multiple_of(2) {
            return Err(KeyError::DesynchronizedPools("lane cursor parity"));
        }
        if cursors.iter().any(|&c| c < base || c > total + 1) {
            return Err(KeyError::DesynchronizedPools("lane cursor outside stored range"));
        }
        pool.base = base;
        pool.bytes = bytes;
        pool.blocks = blocks;
        pool.cursors = cursors;
        Ok(pool)
    }

    pub fn pair(&self) -> &NodePair {
        &self.pair
    }

    pub fn owner(&self) -> &str {
        &self.owner
    }

    /// Absolute offset one past the last deposited byte.
    pub fn total(&self) -> u64 {
        self.base + self.bytes.len() as u64
    }

    /// Every byte below this offset has been consumed in both lanes.
    pub fn consumed(&self) -> u64 {
        self.cursors[0].min(self.cursors[1]).min(self.total())
    }

    /// Highest lane cursor: no byte at or above it has been handed out.
    pub fn reserved(&self) -> u64 {
        self.cursors[0].max(self.cursors[1]).min(self.total())
    }

    pub fn cursor(&self, lane: Lane) -> u64 {
        self.cursors[lane.index()]
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    /// Stored bytes from [`KeyPool::base`] on; consumed ones read as zero.
    pub fn stored_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn blocks(&self) -> &[KeyBlock] {
        &self.blocks
    }

    pub fn usage(&self) -> &[KeyUse] {
        &self.log
    }

    /// Bytes handed out or destroyed so far, over both lanes.
    pub fn spent(&self) -> u64 {
        self.log.iter().map(|u| u.len).sum()
    }

    /// Unused bytes left in a lane.
    pub fn available(&self, lane: Lane) -> u64 {
        let cursor = self.cursors[lane.index()];
        self.total().saturating_sub(cursor).div_ceil(2)
    }

    /// Lane this endpoint encrypts with.
    pub fn send_lane(&self) -> Lane {
        self.pair.lane_of(&self.owner).expect("owner is an endpoint")
    }

    pub fn receive_lane(&self) -> Lane {
        match self.send_lane() {
            Lane::Forward => Lane::Backward,
            Lane::Backward => Lane::Forward,
        }
    }

    /// Appends a block of key. Empty blocks are ignored.
    pub fn deposit(&mut self, key: &[u8], provenance: u64) {
        if key.is_empty() {
            return;
        }
        self.blocks.push(KeyBlock {
            start: self.total(),
            len: key.len() as u64,
            provenance,
        });
        self.bytes.extend_from_slice(key);
    }

    /// Hands out the next `len` bytes of this endpoint's send lane.
    pub fn take_send(&mut self, len: usize) -> Result<(u64, Vec<u8>), KeyError> {
        let lane = self.send_lane();
        self.take_lane(lane, len)
    }

    /// Hands out the next `len` bytes of `lane` regardless of ownership
    /// (used by a relay forwarding on behalf of the pair).
    pub fn take_lane(&mut self, lane: Lane, len: usize) -> Result<(u64, Vec<u8>), KeyError> {
        let have = self.available(lane);
        if (len as u64) > have {
            return Err(KeyError::KeyExhausted {
                pair: self.pair.to_string(),
                shortfall: len as u64 - have,
            });
        }
        let offset = self.cursors[lane.index()];
        let key = self.consume(lane, offset, len, UseKind::Send);
        Ok((offset, key))
    }

    /// Consumes the peer's lane bytes at `offset` to decrypt a message.
    pub fn take_receive(&mut self, lane: Lane, offset: u64, len: usize) -> Result<Vec<u8>, KeyError> {
        if Lane::from_offset(offset) != lane {
            return Err(KeyError::DesynchronizedPools("offset is not in the sender's lane"));
        }
        let cursor = self.cursors[lane.index()];
        if offset < cursor {
            return Err(KeyError::KeyReuseRefused { offset });
        }
        if len > 0 && offset + 2 * (len as u64 - 1) >= self.total() {
            return Err(KeyError::DesynchronizedPools("message offset beyond deposited key"));
        }
        if offset > cursor {
            let skipped = ((offset - cursor) / 2) as usize;
            self.consume(lane, cursor, skipped, UseKind::Skipped);
        }
        Ok(self.consume(lane, offset, len, UseKind::Receive))
    }

    fn consume(&mut self, lane: Lane, offset: u64, len: usize, kind: UseKind) -> Vec<u8> {
        let mut out = Vec::with_capacity(len);
        for k in 0..len as u64 {
            let i = (offset + 2 * k - self.base) as usize;
            out.push(self.bytes[i]);
            self.bytes[i] = 0;
        }
        self.cursors[lane.index()] = offset + 2 * len as u64;
        if len > 0 {
            self.log.push(KeyUse {
                lane,
                offset,
                len: len as u64,
                kind,
            });
        }
        out
    }

    /// Frees bytes below [`KeyPool::consumed`] (already zeroed).
    pub fn compact(&mut self) {
        let cut = self.consumed().max(self.base);
        let drop = (cut - self.base) as usize;
        self.bytes.drain(..drop);
        self.base = cut;
        self.blocks.retain(|b| b.start + b.len > cut);
    }

    /// Raw stored byte at an absolute offset, for checking zeroization.
    #[cfg(debug_assertions)]
    pub fn raw_byte(&self, offset: u64) -> Option<u8> {
        offset
            .checked_sub(self.base)
            .and_then(|i| self.bytes.get(i as usize).copied())
    }
}

/// Both endpoint copies of one pair's pool, as a simulation holds them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairPools {
    pub a: KeyPool,
    pub b: KeyPool,
}

impl PairPools {
    pub fn new(pair: NodePair) -> Self {
        let a = KeyPool::new(pair.clone(), pair.a()).expect("endpoint a");
        let b = KeyPool::new(pair.clone(), pair.b()).expect("endpoint b");
        Self { a, b }
    }

    pub fn pair(&self) -> &NodePair {
        self.a.pair()
    }

    /// Deposits the same key (e.g. both sides' output of one session) into
    /// both copies.
    pub fn deposit(&mut self, sender_copy: &[u8], receiver_copy: &[u8], provenance: u64) {
        self.a.deposit(sender_copy, provenance);
        self.b.deposit(receiver_copy, provenance);
    }

    pub fn endpoint(&self, name: &str) -> Option<&KeyPool> {
        if self.a.owner() == name {
            Some(&self.a)
        } else if self.b.owner() == name {
            Some(&self.b)
        } else {
            None
        }
    }

    pub fn endpoint_mut(&mut self, name: &str) -> Option<&mut KeyPool> {
        if self.a.owner() == name {
            Some(&mut self.a)
        } else if self.b.owner() == name {
            Some(&mut self.b)
        } else {
            None
        }
    }

    /// Sender copy and receiver copy for a message from `sender`.
    pub fn split_for(&mut self, sender: &str) -> Option<(&mut KeyPool, &mut KeyPool)> {
        if self.a.owner() == sender {
            Some((&mut self.a, &mut self.b))
        } else if self.b.owner() == sender {
            Some((&mut self.b, &mut self.a))
        } else {
            None
        }
    }
}
