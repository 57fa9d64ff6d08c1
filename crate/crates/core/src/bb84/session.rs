use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::amplify::privacy_amplify;
use super::cascade::{error_correct, CascadeConfig};
use super::estimate::{estimate_stats, QberSample};
use super::pulse::{prepare_pulse_train_from, run_quantum_phase};
use super::sift::SiftedBlocks;
use super::transcript::{Direction, Phase, Transcript};
use super::{ProtocolError, PulseClass};
use crate::decoy::{key_rate, DecoyEstimate, MeasuredStats, PulseBudget, RateSettings};
use crate::phys::{IntensitySettings, LinkParams};

const SENDER_STREAM: u64 = 1;
const CHANNEL_STREAM: u64 = 2;
const PUBLIC_STREAM: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    /// Pulses actually simulated.
    pub pulses: u64,
    /// Pulses generated and sifted per batch.
    pub chunk: usize,
    pub test_fraction: f64,
    pub cascade: CascadeConfig,
    pub safety_margin_bits: u64,
    pub rate: RateSettings,
    /// Pulse counts of the full-length session the simulated one stands in
    /// for; used for the fluctuation bounds. `None` uses the simulated counts.
    pub budget: Option<PulseBudget>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            pulses: 10_000_000,
            chunk: 1 << 16,
            test_fraction: 0.1,
            cascade: CascadeConfig::default(),
            safety_margin_bits: 64,
            rate: RateSettings::default(),
            budget: None,
        }
    }
}

/// Key material at each stage of one session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionKeys {
    /// Sender's sifted signal bits left after parameter estimation.
    pub raw_sifted: Vec<bool>,
    /// Receiver's key after reconciliation.
    pub corrected: Vec<bool>,
    pub leakage_bits: u64,
    /// Sender's secure key.
    pub final_key: Vec<u8>,
    /// Receiver's secure key; equal to `final_key`.
    pub receiver_final_key: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub pulses: u64,
    /// Observables of the simulated session. `e_mu` counts every error among
    /// the sifted signal bits (test sample plus corrected errors).
    pub measured: MeasuredStats,
    /// What the public test sample alone showed.
    pub sample: QberSample,
    pub sample_e_mu: f64,
    /// `measured` with pulse counts replaced by the budget, if any.
    pub analysed: MeasuredStats,
    pub estimate: DecoyEstimate,
    pub keys: SessionKeys,
    pub corrected_errors: usize,
    pub realized_f: Option<f64>,
    /// Why `final_key` is empty, if it is.
    pub no_key: Option<ProtocolError>,
    pub transcript: Transcript,
}

impl SessionOutcome {
    pub fn sifted_signal_bits(&self) -> usize {
        self.sample.signal_tested + self.keys.raw_sifted.len()
    }
}

/// Derives one party's stream from the session seed.
pub fn session_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs a complete session over `link`. Randomness comes from three
/// streams derived from `seed`: the sender's source, the channel with the
/// receiver's basis choice, and the public discussion.
pub fn run_session(
    link: &LinkParams,
    settings: &IntensitySettings,
    config: &SessionConfig,
    seed: u64,
) -> Result<SessionOutcome, ProtocolError> {
    link.validate()?;
    settings.validate()?;
    if config.chunk == 0 {
        return Err(ProtocolError::InvalidInput("chunk size must be positive"));
    }
    let mut sender_rng = session_stream(seed, SENDER_STREAM);
    let mut channel_rng = session_stream(seed, CHANNEL_STREAM);
    let mut public = session_stream(seed, PUBLIC_STREAM);
    let mut transcript = Transcript::new();

    let mut blocks = SiftedBlocks::default();
    let mut produced = 0u64;
    while produced < config.pulses {
        let n = (config.pulses - produced).min(config.chunk as u64) as usize;
        let train = prepare_pulse_train_from(produced, n, settings, &mut sender_rng);
        let detections = run_quantum_phase(&train, link, settings, &mut channel_rng);
        let clicks = detections.iter().filter(|d| d.clicked).count() as u64;
        // receiver: clicked indices and bases; sender: keep/drop flags and classes
        transcript.record(Phase::Sifting, Direction::ReceiverToSender, 9 * clicks, 0);
        transcript.record(Phase::Sifting, Direction::SenderToReceiver, clicks.div_ceil(4), 0);
        blocks.absorb(&train, &detections)?;
        produced += n as u64;
    }

    let (sampled, sample) = estimate_stats(&mut blocks, settings, config.test_fraction, &mut public)?;
    let tested = (sample.signal_tested + sample.decoy_tested) as u64;
    transcript.record(Phase::Estimation, Direction::SenderToReceiver, 9 * tested, tested);
    transcript.record(
        Phase::Estimation,
        Direction::ReceiverToSender,
        tested.div_ceil(8),
        tested,
    );

    let signal = blocks.get(PulseClass::Signal);
    let cascade = CascadeConfig {
        qber_hint: sampled.e_mu,
        ..config.cascade
    };
    let reconciled = error_correct(
        &signal.sender_bits,
        &signal.receiver_bits,
        &cascade,
        &mut public,
        &mut transcript,
    )?;

    let mut measured = sampled;
    let sifted = sample.signal_tested + signal.len();
    measured.e_mu = (sample.signal_errors + reconciled.corrected_errors) as f64 / sifted as f64;
    let analysed = match config.budget {
        Some(budget) => measured.with_counts(budget),
        None => measured,
    };
    let estimate = key_rate(&analysed, &config.rate)?;

    let mut receiver_public = public.clone();
    let amplified = privacy_amplify(
        &signal.sender_bits,
        reconciled.leakage_bits,
        &estimate,
        &analysed,
        config.safety_margin_bits,
        &mut public,
    );
    let (final_key, receiver_final_key, no_key) = match amplified {
        Ok(key) => {
            let theirs = privacy_amplify(
                &reconciled.corrected,
                reconciled.leakage_bits,
                &estimate,
                &analysed,
                config.safety_margin_bits,
                &mut receiver_public,
            )?;
            transcript.record(Phase::Amplification, Direction::SenderToReceiver, 16, 0);
            (key, theirs, None)
        }
        Err(e @ ProtocolError::NoSecureKey { .. }) => (Vec::new(), Vec::new(), Some(e)),
        Err(e) => return Err(e),
    };

    Ok(SessionOutcome {
        pulses: produced,
        measured,
        sample,
        sample_e_mu: sampled.e_mu,
        analysed,
        estimate,
        corrected_errors: reconciled.corrected_errors,
        realized_f: reconciled.realized_efficiency(),
        keys: SessionKeys {
            raw_sifted: signal.sender_bits.clone(),
            corrected: reconciled.corrected,
            leakage_bits: reconciled.leakage_bits,
            final_key,
            receiver_final_key,
        },
        no_key,
        transcript,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_link_session() {
        let link = LinkParams {
            fiber_loss_db: 10.0,
            ..LinkParams::ideal("ideal")
        };
        let config = SessionConfig {
            pulses: 2_000_000,
            ..Default::default()
        };
        let out = run_session(&link, &IntensitySettings::default(), &config, 42).unwrap();
        assert_eq!(out.measured.e_mu, 0.0);
        assert_eq!(out.measured.y0, 0.0);
        assert_eq!(out.keys.leakage_bits, 32);
        assert!(!out.keys.final_key.is_empty());
        assert_eq!(out.keys.final_key, out.keys.receiver_final_key);
    }

    #[test]
    fn same_seed_same_session() {
        let mut link = LinkParams {
            fiber_loss_db: 6.0,
            ..LinkParams::ideal("noisy")
        };
        link.detector_efficiency = 0.1;
        link.misalignment = 0.02;
        link.dark_count_prob = 1e-4;
        let config = SessionConfig {
            pulses: 300_000,
            ..Default::default()
        };
        let a = run_session(&link, &IntensitySettings::default(), &config, 7).unwrap();
        let b = run_session(&link, &IntensitySettings::default(), &config, 7).unwrap();
        assert_eq!(a, b);
        let c = run_session(&link, &IntensitySettings::default(), &config, 8).unwrap();
        assert_ne!(a.keys.raw_sifted, c.keys.raw_sifted);
    }
}
