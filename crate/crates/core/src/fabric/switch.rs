use alloc::vec;
use alloc::vec::Vec;

use super::FabricError;

pub const DEFAULT_PORT_COUNT: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PortStatus {
    Idle,
    Busy,
    Offline,
}

/// All-pass optical switch: any two ports can be joined, each port belongs
/// to at most one pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchState {
    partner: Vec<Option<usize>>,
    offline: Vec<bool>,
}

impl Default for SwitchState {
    fn default() -> Self {
        Self::new(DEFAULT_PORT_COUNT)
    }
}

impl SwitchState {
    pub fn new(port_count: usize) -> Self {
        Self {
            partner: vec![None; port_count],
            offline: vec![false; port_count],
        }
    }

    pub fn port_count(&self) -> usize {
        self.partner.len()
    }

    fn check(&self, port: usize) -> Result<(), FabricError> {
        if port >= self.port_count() {
            Err(FabricError::PortOutOfRange { port })
        } else {
            Ok(())
        }
    }

    pub fn status(&self, port: usize) -> Result<PortStatus, FabricError> {
        self.check(port)?;
        Ok(if self.offline[port] {
            PortStatus::Offline
        } else if self.partner[port].is_some() {
            PortStatus::Busy
        } else {
            PortStatus::Idle
        })
    }

    pub fn is_idle(&self, port: usize) -> bool {
        matches!(self.status(port), Ok(PortStatus::Idle))
    }

    pub fn partner(&self, port: usize) -> Option<usize> {
        self.partner.get(port).copied().flatten()
    }

    pub fn connect(&mut self, a: usize, b: usize) -> Result<(), FabricError> {
        self.check(a)?;
        self.check(b)?;
        if a == b {
            return Err(FabricError::SelfConnection { port: a });
        }
        for p in [a, b] {
            match self.status(p)? {
                PortStatus::Idle => {}
                PortStatus::Busy => return Err(FabricError::PortBusy { port: p }),
                PortStatus::Offline => return Err(FabricError::PortOffline { port: p }),
            }
        }
        self.partner[a] = Some(b);
        self.partner[b] = Some(a);
        Ok(())
    }

    /// Breaks the pair containing `port`; returns the former partner.
    pub fn disconnect(&mut self, port: usize) -> Result<usize, FabricError> {
        self.check(port)?;
        let other = self.partner[port].ok_or(FabricError::NotConnected { port })?;
        self.partner[port] = None;
        self.partner[other] = None;
        Ok(other)
    }

    /// Takes a port out of service or back. Only idle ports can go offline.
    pub fn set_offline(&mut self, port: usize, offline: bool) -> Result<(), FabricError> {
        self.check(port)?;
        if offline && self.partner[port].is_some() {
            return Err(FabricError::PortBusy { port });
        }
        self.offline[port] = offline;
        Ok(())
    }

    /// Current pairs, each as `(low, high)`, sorted.
    pub fn matching(&self) -> Vec<(usize, usize)> {
        self.partner
            .iter()
            .enumerate()
            .filter_map(|(p, q)| q.filter(|&q| p < q).map(|q| (p, q)))
            .collect()
    }

    /// Partner links are symmetric, irreflexive and never touch an offline port.
    pub fn is_consistent(&self) -> bool {
        self.partner.iter().enumerate().all(|(p, q)| match q {
            None => true,
            Some(q) => *q != p && !self.offline[p] && self.partner.get(*q) == Some(&Some(p)),
        })
    }
}
