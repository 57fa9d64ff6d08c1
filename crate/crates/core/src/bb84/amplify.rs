use alloc::vec::Vec;

use libm::floor;
use rand::Rng;

use super::ProtocolError;
use crate::bits::PackedBits;
use crate::decoy::{binary_entropy, DecoyEstimate, MeasuredStats};

/// Secure output length for `n` reconciled bits:
/// `n * (Q1_L / Q_mu) * (1 - H2(e1_U)) - leakage - margin`, floored. May be
/// negative.
pub fn secure_length(n: usize, est: &DecoyEstimate, stats: &MeasuredStats, leakage_bits: u64, margin_bits: u64) -> i64 {
    if !(stats.q_mu > 0.0) {
        return -(leakage_bits as i64) - margin_bits as i64;
    }
    let h = binary_entropy(est.e1_u.clamp(0.0, 1.0)).unwrap_or(1.0);
    let single_photon_bits = n as f64 * (est.q1_l / stats.q_mu) * (1.0 - h);
    floor(single_photon_bits - leakage_bits as f64 - margin_bits as f64) as i64
}

/// Multiplies `input` by the `out_len x n` Toeplitz matrix whose diagonals
/// are given by `seed` (`n + out_len - 1` bits): `T[i][j] = seed[j - i + out_len - 1]`.
pub fn toeplitz_hash(input: &PackedBits, out_len: usize, seed: &PackedBits) -> PackedBits {
    let n = input.len();
    assert!(out_len == 0 || seed.len() >= n + out_len - 1, "Toeplitz seed too short");
    let mut out = PackedBits::zeros(out_len);
    for i in 0..out_len {
        let base = out_len - 1 - i;
        let acc = input
            .words()
            .iter()
            .enumerate()
            .fold(0u64, |acc, (w, &x)| acc ^ (seed.window64(base + 64 * w) & x));
        out.set(i, acc.count_ones() & 1 == 1);
    }
    out
}

/// Compresses the reconciled key to its secure length with a Toeplitz
/// matrix drawn from the shared public stream `rng`. The result is whole
/// bytes; a partial trailing byte is dropped.
pub fn privacy_amplify<R: Rng + ?Sized>(
    corrected: &[bool],
    leakage_bits: u64,
    est: &DecoyEstimate,
    stats: &MeasuredStats,
    margin_bits: u64,
    rng: &mut R,
) -> Result<Vec<u8>, ProtocolError> {
    if !(est.q1_l > 0.0) {
        return Err(ProtocolError::NoSecureKey { available: 0 });
    }
    let n = corrected.len();
    let m = secure_length(n, est, stats, leakage_bits, margin_bits).min(n as i64);
    if m < 8 {
        return Err(ProtocolError::NoSecureKey { available: m });
    }
    let m = (m as usize) / 8 * 8;
    let seed_len = n + m - 1;
    let words = (0..seed_len.div_ceil(64)).map(|_| rng.gen()).collect();
    let seed = PackedBits::from_words(words, seed_len);
    Ok(toeplitz_hash(&PackedBits::from_bools(corrected), m, &seed).to_bytes_truncated())
}
