use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use super::{ProtocolError, PulseClass, SiftedBlock, SiftedBlocks};
use crate::decoy::MeasuredStats;
use crate::phys::IntensitySettings;

/// Error counts on the publicly compared test subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct QberSample {
    pub signal_tested: usize,
    pub signal_errors: usize,
    pub decoy_tested: usize,
    pub decoy_errors: usize,
}

/// Measures gains per class and error rates on a random `test_fraction` of
/// the sifted signal and decoy bits. Tested bits are disclosed, so they are
/// removed from the blocks.
pub fn estimate_stats<R: Rng + ?Sized>(
    blocks: &mut SiftedBlocks,
    settings: &IntensitySettings,
    test_fraction: f64,
    rng: &mut R,
) -> Result<(MeasuredStats, QberSample), ProtocolError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(ProtocolError::InvalidInput("test fraction must lie in (0, 1)"));
    }
    if blocks.get(PulseClass::Signal).is_empty() {
        return Err(ProtocolError::InvalidInput("no sifted signal bits"));
    }
    if blocks.get(PulseClass::Decoy).sent_count == 0 {
        return Err(ProtocolError::InsufficientDecoyStatistics("no decoy pulses"));
    }
    if blocks.get(PulseClass::Vacuum).sent_count == 0 {
        return Err(ProtocolError::InsufficientDecoyStatistics("no vacuum pulses"));
    }

    let (signal_tested, signal_errors) = disclose_subset(blocks.get_mut(PulseClass::Signal), test_fraction, rng);
    let (decoy_tested, decoy_errors) = disclose_subset(blocks.get_mut(PulseClass::Decoy), test_fraction, rng);
    let rate = |errors: usize, tested: usize| {
        if tested == 0 {
            0.0
        } else {
            errors as f64 / tested as f64
        }
    };

    let signal = blocks.get(PulseClass::Signal);
    let decoy = blocks.get(PulseClass::Decoy);
    let vacuum = blocks.get(PulseClass::Vacuum);
    let stats = MeasuredStats {
        mu: settings.mu,
        nu: settings.nu,
        q_mu: signal.gain(),
        e_mu: rate(signal_errors, signal_tested),
        q_nu: decoy.gain(),
        e_nu: rate(decoy_errors, decoy_tested),
        y0: vacuum.gain(),
        n_mu: signal.sent_count,
        n_nu: decoy.sent_count,
        n_0: vacuum.sent_count,
    };
    Ok((
        stats,
        QberSample {
            signal_tested,
            signal_errors,
            decoy_tested,
            decoy_errors,
        },
    ))
}

/// Compares a random subset of `fraction` of the block's pairs and drops it.
fn disclose_subset<R: Rng + ?Sized>(block: &mut SiftedBlock, fraction: f64, rng: &mut R) -> (usize, usize) {
    let n = block.len();
    let k = libm::round((n as f64) * fraction) as usize;
    let k = k.clamp(usize::from(n > 0), n);
    let mut tested = vec![false; n];
    for i in index::sample(rng, n, k) {
        tested[i] = true;
    }
    let errors = (0..n)
        .filter(|&i| tested[i] && block.sender_bits[i] != block.receiver_bits[i])
        .count();
    retain_untested(&mut block.sender_bits, &tested);
    retain_untested(&mut block.receiver_bits, &tested);
    retain_untested(&mut block.sifted_indices, &tested);
    (k, errors)
}

fn retain_untested<T>(v: &mut Vec<T>, tested: &[bool]) {
    let mut i = 0;
    v.retain(|_| {
        let keep = !tested[i];
        i += 1;
        keep
    });
}
