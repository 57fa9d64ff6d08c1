use alloc::string::String;
use alloc::vec::Vec;

use super::{KeyError, KeyPool, NodePair};

/// Ciphertext plus the pool offset of its first key byte. Key bytes sit at
/// `offset, offset + 2, ..` in the sender's lane.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OtpMessage {
    pub pair: NodePair,
    pub from: String,
    pub offset: u64,
    pub ciphertext: Vec<u8>,
}

fn xor_into(data: &mut [u8], key: &[u8]) {
    for (d, k) in data.iter_mut().zip(key) {
        *d ^= k;
    }
}

/// Encrypts with the next unused bytes of the owner's send lane.
pub fn otp_encrypt(pool: &mut KeyPool, plaintext: &[u8]) -> Result<OtpMessage, KeyError> {
    let (offset, key) = pool.take_send(plaintext.len())?;
    let mut ciphertext = plaintext.to_vec();
    xor_into(&mut ciphertext, &key);
    Ok(OtpMessage {
        pair: pool.pair().clone(),
        from: pool.owner().into(),
        offset,
        ciphertext,
    })
}

/// Decrypts on the receiving copy, consuming the referenced key bytes.
pub fn otp_decrypt(pool: &mut KeyPool, message: &OtpMessage) -> Result<Vec<u8>, KeyError> {
    if &message.pair != pool.pair() {
        return Err(KeyError::DesynchronizedPools("message belongs to another pair"));
    }
    if message.from == pool.owner() {
        return Err(KeyError::NotAnEndpoint(message.from.clone()));
    }
    let lane = pool
        .pair()
        .lane_of(&message.from)
        .ok_or_else(|| KeyError::NotAnEndpoint(message.from.clone()))?;
    let key = pool.take_receive(lane, message.offset, message.ciphertext.len())?;
    let mut plaintext = message.ciphertext.clone();
    xor_into(&mut plaintext, &key);
    Ok(plaintext)
}
