use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::FabricError;
use crate::keystore::{KeyError, PairPools};

/// What the relay publishes on the classical channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelayMessage {
    pub relay: String,
    /// Offset of K1 in the first pool and of K2 in the second.
    pub offsets: (u64, u64),
    /// `K1 xor K2`.
    pub masked: Vec<u8>,
}

/// Bytes drawn from one endpoint's copy of a pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Consumption {
    pub pair: String,
    pub holder: String,
    pub offset: u64,
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelayOutcome {
    pub key_a: Vec<u8>,
    pub key_b: Vec<u8>,
    pub message: RelayMessage,
    pub ledger: Vec<Consumption>,
}

/// Builds an end-to-end key between the far ends of `ar` and `rb` through
/// `relay`. The relay draws K1 from its lane of `ar` and K2 from its lane of
/// `rb` and publishes `K1 xor K2`; the far end of `ar` reads K1 from its copy,
/// the far end of `rb` recovers it by xoring K2 back out. Both pools are
/// checked before anything is consumed.
pub fn relay_compose(
    ar: &mut PairPools,
    rb: &mut PairPools,
    relay: &str,
    length: usize,
) -> Result<RelayOutcome, FabricError> {
    let a = ar
        .pair()
        .peer(relay)
        .ok_or_else(|| FabricError::Key(KeyError::NotAnEndpoint(relay.to_string())))?
        .to_string();
    let b = rb
        .pair()
        .peer(relay)
        .ok_or_else(|| FabricError::Key(KeyError::NotAnEndpoint(relay.to_string())))?
        .to_string();
    if a == b {
        return Err(FabricError::InvalidRequest("relay legs end at the same node"));
    }
    for pools in [&*ar, &*rb] {
        let r = pools.endpoint(relay).expect("relay is an endpoint");
        let have = r.available(r.send_lane());
        if (length as u64) > have {
            return Err(FabricError::Key(KeyError::KeyExhausted {
                pair: pools.pair().to_string(),
                shortfall: length as u64 - have,
            }));
        }
    }

    let (r1, a_copy) = ar.split_for(relay).expect("relay is an endpoint");
    let lane1 = r1.send_lane();
    let (off1, k1) = r1.take_send(length)?;
    let key_a = a_copy.take_receive(lane1, off1, length)?;

    let (r2, b_copy) = rb.split_for(relay).expect("relay is an endpoint");
    let lane2 = r2.send_lane();
    let (off2, k2) = r2.take_send(length)?;
    let masked: Vec<u8> = k1.iter().zip(&k2).map(|(x, y)| x ^ y).collect();
    let k2_b = b_copy.take_receive(lane2, off2, length)?;
    let key_b = masked.iter().zip(&k2_b).map(|(m, y)| m ^ y).collect();

    let entry = |pools: &PairPools, holder: &str, offset| Consumption {
        pair: pools.pair().to_string(),
        holder: holder.to_string(),
        offset,
        len: length as u64,
    };
    let ledger = Vec::from([
        entry(ar, relay, off1),
        entry(ar, &a, off1),
        entry(rb, relay, off2),
        entry(rb, &b, off2),
    ]);
    Ok(RelayOutcome {
        key_a,
        key_b,
        message: RelayMessage {
            relay: relay.to_string(),
            offsets: (off1, off2),
            masked,
        },
        ledger,
    })
}
