use alloc::vec::Vec;

use rand::Rng;

use super::{Basis, DetectionRecord, PulseClass, PulseRecord};
use crate::phys::{ChannelModel, IntensitySettings, LinkParams};

/// `n` pulses with independent class (by occupancy weight), bit and basis.
pub fn prepare_pulse_train<R: Rng + ?Sized>(n: usize, settings: &IntensitySettings, rng: &mut R) -> Vec<PulseRecord> {
    prepare_pulse_train_from(0, n, settings, rng)
}

/// As [`prepare_pulse_train`], numbering pulses from `start`.
pub fn prepare_pulse_train_from<R: Rng + ?Sized>(
    start: u64,
    n: usize,
    settings: &IntensitySettings,
    rng: &mut R,
) -> Vec<PulseRecord> {
    let [ws, wd, wv] = settings.occupancy;
    let total = ws + wd + wv;
    assert!(total > 0, "occupancy weights are all zero");
    (0..n as u64)
        .map(|i| {
            let pick = rng.gen_range(0..total);
            let class = if pick < ws {
                PulseClass::Signal
            } else if pick < ws + wd {
                PulseClass::Decoy
            } else {
                PulseClass::Vacuum
            };
            let r: u8 = rng.gen();
            PulseRecord {
                index: start + i,
                bit: r & 1 == 1,
                basis: if r & 2 == 2 {
                    Basis::Diagonal
                } else {
                    Basis::Rectilinear
                },
                class,
            }
        })
        .collect()
}

/// Sends every pulse of the train through the link, preserving indices.
pub fn run_quantum_phase<R: Rng + ?Sized>(
    train: &[PulseRecord],
    link: &LinkParams,
    settings: &IntensitySettings,
    rng: &mut R,
) -> Vec<DetectionRecord> {
    let model = ChannelModel::new(link, settings);
    train.iter().map(|p| model.sample(p, rng)).collect()
}
