//! Per-pair key inventory and one-time-pad messaging.
//!
//! Each pair's pool is split by direction: the lexicographically smaller
//! endpoint encrypts with the even byte offsets, the other with the odd ones,
//! so traffic in both directions never draws the same byte. Every byte is
//! zeroed the moment it is handed out.

mod otp;
mod pool;

pub use otp::{otp_decrypt, otp_encrypt, OtpMessage};
pub use pool::{KeyBlock, KeyPool, KeyUse, Lane, NodePair, PairPools, UseKind};

use alloc::string::String;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KeyError {
    #[error("key exhausted in pool {pair}: short by {shortfall} bytes")]
    KeyExhausted { pair: String, shortfall: u64 },
    #[error("key reuse refused at offset {offset}")]
    KeyReuseRefused { offset: u64 },
    #[error("desynchronized pools: {0}")]
    DesynchronizedPools(&'static str),
    #[error("{0} is not an endpoint of this pair")]
    NotAnEndpoint(String),
}
