//! Thread-safe handle on one pair's pools.

use std::sync::{Mutex, MutexGuard};

use qkdnet_core::keystore::{otp_decrypt, otp_encrypt, KeyError, NodePair, OtpMessage, PairPools};

/// Both endpoint copies of a pair's pool behind one lock. Operations on
/// different pairs never contend.
#[derive(Debug)]
pub struct SharedPool {
    inner: Mutex<PairPools>,
}

impl SharedPool {
    pub fn new(pair: NodePair) -> Self {
        Self::from_pools(PairPools::new(pair))
    }

    pub fn from_pools(pools: PairPools) -> Self {
        Self {
            inner: Mutex::new(pools),
        }
    }

    pub fn lock(&self) -> MutexGuard<'_, PairPools> {
        self.inner.lock().expect("key pool lock poisoned")
    }

    pub fn snapshot(&self) -> PairPools {
        self.lock().clone()
    }

    pub fn into_inner(self) -> PairPools {
        self.inner.into_inner().expect("key pool lock poisoned")
    }

    /// Deposits each side's copy of a freshly produced key.
    pub fn deposit(
        &self,
        sender: &str,
        sender_key: &[u8],
        receiver_key: &[u8],
        provenance: u64,
    ) -> Result<(), KeyError> {
        let mut pools = self.lock();
        let (s, r) = pools
            .split_for(sender)
            .ok_or_else(|| KeyError::NotAnEndpoint(sender.to_string()))?;
        s.deposit(sender_key, provenance);
        r.deposit(receiver_key, provenance);
        Ok(())
    }

    pub fn encrypt(&self, from: &str, plaintext: &[u8]) -> Result<OtpMessage, KeyError> {
        let mut pools = self.lock();
        let pool = pools
            .endpoint_mut(from)
            .ok_or_else(|| KeyError::NotAnEndpoint(from.to_string()))?;
        otp_encrypt(pool, plaintext)
    }

    pub fn decrypt(&self, to: &str, message: &OtpMessage) -> Result<Vec<u8>, KeyError> {
        let mut pools = self.lock();
        let pool = pools
            .endpoint_mut(to)
            .ok_or_else(|| KeyError::NotAnEndpoint(to.to_string()))?;
        otp_decrypt(pool, message)
    }
}
