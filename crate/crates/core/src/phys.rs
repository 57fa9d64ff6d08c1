//! Optical channel and detector model.
//!
//! A link is reduced to an overall transmittance `eta`, a per-gate background
//! click probability `Y0` and a misalignment probability. For a weak coherent
//! pulse of mean photon number `m`:
//!
//! ```text
//! Q(m)    = Y0 + (1 - Y0) (1 - exp(-eta m))
//! E(m) Q  = Y0 / 2 + misalignment (Q(m) - Y0)
//! ```
//!
//! A gate with a background click always yields a random bit (alone, or
//! squashed from a double click when a photon also arrived); a photon-only
//! click is flipped with the misalignment probability. [`ChannelModel`]
//! samples exactly this distribution.

use alloc::string::String;

use libm::{log10, log1p, pow, sqrt};
use rand::Rng;
use thiserror::Error;

use crate::bb84::{Basis, DetectionRecord, PulseClass, PulseRecord};
use crate::decoy::{MeasuredStats, PulseBudget};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PhysError {
    #[error("invalid link parameters: {0}")]
    InvalidLink(&'static str),
    #[error("invalid intensity settings: {0}")]
    InvalidIntensity(&'static str),
    #[error("undefined QBER: expected gain is zero")]
    UndefinedQber,
    #[error("unphysical statistics: {0}")]
    UnphysicalStatistics(&'static str),
}

/// Physical description of one fiber link and the receiving detector set.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkParams {
    pub name: String,
    pub distance_km: f64,
    pub fiber_loss_db: f64,
    /// Receiver optics, switch and anything else between fiber and detector.
    pub insertion_loss_db: f64,
    pub detector_efficiency: f64,
    /// Dark-count probability per gate of one detector.
    pub dark_count_prob: f64,
    /// Probability that a detected photon lands in the wrong detector.
    pub misalignment: f64,
    pub clock_hz: f64,
    /// Fraction of wall time spent generating key (the rest is feedback).
    pub duty_cycle: f64,
}

impl LinkParams {
    /// Lossless, noiseless link with a perfect detector.
    pub fn ideal(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            distance_km: 0.0,
            fiber_loss_db: 0.0,
            insertion_loss_db: 0.0,
            detector_efficiency: 1.0,
            dark_count_prob: 0.0,
            misalignment: 0.0,
            clock_hz: 4e6,
            duty_cycle: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), PhysError> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(self.fiber_loss_db >= 0.0 && self.insertion_loss_db >= 0.0) {
            return Err(PhysError::InvalidLink("losses must be >= 0 dB"));
        }
        if !(self.distance_km >= 0.0) {
            return Err(PhysError::InvalidLink("distance must be >= 0"));
        }
        if !(unit(self.detector_efficiency) && unit(self.dark_count_prob) && unit(self.misalignment)) {
            return Err(PhysError::InvalidLink("probabilities must lie in [0, 1]"));
        }
        if !(self.clock_hz > 0.0) {
            return Err(PhysError::InvalidLink("clock must be positive"));
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle <= 1.0) {
            return Err(PhysError::InvalidLink("duty cycle must lie in (0, 1]"));
        }
        if !(transmittance(self) > 0.0) {
            return Err(PhysError::InvalidLink("total transmittance is zero"));
        }
        Ok(())
    }

    pub fn total_loss_db(&self) -> f64 {
        self.fiber_loss_db + self.insertion_loss_db
    }
}

/// Mean photon numbers and class weights of the pulse source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensitySettings {
    pub mu: f64,
    pub nu: f64,
    /// Relative weights of (signal, decoy, vacuum).
    pub occupancy: [u32; 3],
}

impl Default for IntensitySettings {
    fn default() -> Self {
        Self {
            mu: 0.6,
            nu: 0.2,
            occupancy: [6, 1, 1],
        }
    }
}

impl IntensitySettings {
    pub fn validate(&self) -> Result<(), PhysError> {
        if !(self.nu > 0.0 && self.mu > self.nu) {
            return Err(PhysError::InvalidIntensity("need mu > nu > 0"));
        }
        if self.occupancy.iter().sum::<u32>() == 0 {
            return Err(PhysError::InvalidIntensity("occupancy weights are all zero"));
        }
        Ok(())
    }

    pub fn mean_photon(&self, class: PulseClass) -> f64 {
        match class {
            PulseClass::Signal => self.mu,
            PulseClass::Decoy => self.nu,
            PulseClass::Vacuum => 0.0,
        }
    }

    pub fn fraction(&self, class: PulseClass) -> f64 {
        let total: u32 = self.occupancy.iter().sum();
        self.occupancy[class.index()] as f64 / total as f64
    }
}

/// `10^(-(fiber + insertion)/10) * detector_efficiency`.
pub fn transmittance(link: &LinkParams) -> f64 {
    pow(10.0, -link.total_loss_db() / 10.0) * link.detector_efficiency
}

/// Background click probability per gate: either of the two detectors of
/// the measuring arm fires on its own.
pub fn background_yield(link: &LinkParams) -> f64 {
    let quiet = 1.0 - link.dark_count_prob;
    1.0 - quiet * quiet
}

pub fn expected_gain(mean_photon: f64, link: &LinkParams) -> f64 {
    gain_from(mean_photon, transmittance(link), background_yield(link))
}

fn gain_from(mean_photon: f64, eta: f64, y0: f64) -> f64 {
    y0 + (1.0 - y0) * photon_click(eta * mean_photon)
}

/// `1 - exp(-x)` without cancellation for small `x`.
fn photon_click(x: f64) -> f64 {
    -libm::expm1(-x)
}

pub fn expected_qber(mean_photon: f64, link: &LinkParams) -> Result<f64, PhysError> {
    let y0 = background_yield(link);
    let q = gain_from(mean_photon, transmittance(link), y0);
    if !(q > 0.0) {
        return Err(PhysError::UndefinedQber);
    }
    Ok((0.5 * y0 + link.misalignment * (q - y0)) / q)
}

/// Analytic session statistics of a link, with pulse counts from `budget`.
pub fn expected_stats(
    link: &LinkParams,
    settings: &IntensitySettings,
    budget: PulseBudget,
) -> Result<MeasuredStats, PhysError> {
    Ok(MeasuredStats {
        mu: settings.mu,
        nu: settings.nu,
        q_mu: expected_gain(settings.mu, link),
        e_mu: expected_qber(settings.mu, link)?,
        q_nu: expected_gain(settings.nu, link),
        e_nu: expected_qber(settings.nu, link)?,
        y0: background_yield(link),
        n_mu: budget.n_mu,
        n_nu: budget.n_nu,
        n_0: budget.n_0,
    })
}

/// Fits `insertion_loss_db`, `dark_count_prob` and `misalignment` of `base`
/// so that the model reproduces the measured `Q_mu`, `E_mu` and `Y0`
/// exactly. Fiber loss and detector efficiency are taken from `base`.
pub fn calibrate_link(measured: &MeasuredStats, base: &LinkParams) -> Result<LinkParams, PhysError> {
    let (q, y0, mu) = (measured.q_mu, measured.y0, measured.mu);
    if !(q > y0) {
        return Err(PhysError::UnphysicalStatistics(
            "signal gain does not exceed background",
        ));
    }
    if !(mu > 0.0 && q < 1.0 && y0 >= 0.0) {
        return Err(PhysError::UnphysicalStatistics("gain or intensity out of range"));
    }
    if !(base.detector_efficiency > 0.0) {
        return Err(PhysError::InvalidLink("detector efficiency must be positive"));
    }
    let eta = -log1p(-(q - y0) / (1.0 - y0)) / mu;
    let mut insertion = -10.0 * log10(eta / base.detector_efficiency) - base.fiber_loss_db;
    // round-off around a lossless fit
    if insertion.abs() < 1e-9 {
        insertion = 0.0;
    }
    if insertion < 0.0 {
        return Err(PhysError::UnphysicalStatistics(
            "gain exceeds what the base link's fiber and detector allow",
        ));
    }
    let misalignment = (measured.e_mu * q - 0.5 * y0) / (q - y0);
    if !(0.0..=0.5).contains(&misalignment) {
        return Err(PhysError::UnphysicalStatistics("QBER is below the background floor"));
    }
    let mut link = base.clone();
    link.insertion_loss_db = insertion;
    link.dark_count_prob = 1.0 - sqrt(1.0 - y0);
    link.misalignment = misalignment;
    Ok(link)
}

/// Per-class click thresholds of a link, precomputed for sampling.
#[derive(Debug, Clone, Copy)]
pub struct ChannelModel {
    /// Indexed by [`PulseClass::index`].
    classes: [ClassThresholds; 3],
    misalignment: f64,
}

#[derive(Debug, Clone, Copy)]
struct ClassThresholds {
    gain: f64,
    background: f64,
    coincidence: f64,
}

impl ChannelModel {
    pub fn new(link: &LinkParams, settings: &IntensitySettings) -> Self {
        let eta = transmittance(link);
        let y0 = background_yield(link);
        let thresholds = |class: PulseClass| {
            let p_photon = photon_click(eta * settings.mean_photon(class));
            ClassThresholds {
                gain: gain_from(settings.mean_photon(class), eta, y0),
                background: y0,
                coincidence: y0 * p_photon,
            }
        };
        Self {
            classes: [
                thresholds(PulseClass::Signal),
                thresholds(PulseClass::Decoy),
                thresholds(PulseClass::Vacuum),
            ],
            misalignment: link.misalignment,
        }
    }

    pub fn gain(&self, class: PulseClass) -> f64 {
        self.classes[class.index()].gain
    }

    /// One gate: a single uniform draw decides whether anything clicked and
    /// why (`[0, Y0*p)` both, `[Y0*p, Y0)` background only,
    /// `[Y0, Q)` photon only).
    pub fn sample<R: Rng + ?Sized>(&self, pulse: &PulseRecord, rng: &mut R) -> DetectionRecord {
        let t = &self.classes[pulse.class.index()];
        let u: f64 = rng.gen();
        if u >= t.gain {
            return DetectionRecord::silent(pulse.index);
        }
        let basis = if rng.gen::<bool>() {
            Basis::Diagonal
        } else {
            Basis::Rectilinear
        };
        let (bit, double_click) = if u < t.background {
            (rng.gen::<bool>(), u < t.coincidence)
        } else if basis == pulse.basis {
            (pulse.bit ^ rng.gen_bool(self.misalignment), false)
        } else {
            (rng.gen::<bool>(), false)
        };
        DetectionRecord {
            index: pulse.index,
            basis,
            bit,
            clicked: true,
            double_click,
        }
    }
}

/// Samples the receiver's outcome for one pulse. For long trains build a
/// [`ChannelModel`] once instead.
pub fn sample_detection<R: Rng + ?Sized>(
    pulse: &PulseRecord,
    link: &LinkParams,
    settings: &IntensitySettings,
    rng: &mut R,
) -> DetectionRecord {
    ChannelModel::new(link, settings).sample(pulse, rng)
}

/// Binomial standard error of a proportion `p` over `n` trials.
pub fn binomial_se(p: f64, n: f64) -> f64 {
    sqrt(p * (1.0 - p) / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn link(fiber: f64, eff: f64) -> LinkParams {
        LinkParams {
            fiber_loss_db: fiber,
            detector_efficiency: eff,
            ..LinkParams::ideal("t")
        }
    }

    fn meilan_stats() -> MeasuredStats {
        MeasuredStats {
            mu: 0.6,
            nu: 0.2,
            q_mu: 8.21e-3,
            e_mu: 0.0158,
            q_nu: 2.71e-3,
            e_nu: 0.04,
            y0: 2.03e-4,
            n_mu: 0,
            n_nu: 0,
            n_0: 0,
        }
    }

    #[test]
    fn transmittance_examples() {
        assert_eq!(transmittance(&link(0.0, 1.0)), 1.0);
        // 0.1 * 10^-0.286 and 0.1 * 10^-2.9 (mpmath)
        assert!((transmittance(&link(2.86, 0.1)) - 0.051_760_683_195_057).abs() < 1e-14);
        assert!((transmittance(&link(29.0, 0.1)) - 1.258_925_411_794_17e-4).abs() < 1e-16);
    }

    #[test]
    fn gain_limits() {
        let mut l = link(3.0, 0.1);
        l.dark_count_prob = 1e-4;
        assert_eq!(expected_gain(0.0, &l), background_yield(&l));
        assert!((expected_gain(1e3, &LinkParams::ideal("x")) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn qber_limits() {
        let l = link(3.0, 0.1);
        assert_eq!(expected_qber(0.6, &l).unwrap(), 0.0);
        let mut noisy = link(3.0, 0.1);
        noisy.dark_count_prob = 1e-3;
        assert!((expected_qber(1e-12, &noisy).unwrap() - 0.5).abs() < 1e-6);
        assert!(matches!(expected_qber(0.0, &l), Err(PhysError::UndefinedQber)));
    }

    #[test]
    fn calibrate_meilan() {
        let cal = calibrate_link(&meilan_stats(), &link(2.86, 0.1)).unwrap();
        let eta = transmittance(&cal);
        assert!((eta - 0.013_401_445_081_007).abs() < 1e-14);
        assert!((cal.insertion_loss_db - 5.868_483_690_330).abs() < 1e-9);
        assert!((expected_gain(0.6, &cal) - 8.21e-3).abs() < 1e-12);
        assert!((expected_qber(0.6, &cal).unwrap() - 0.0158).abs() < 1e-12);
        assert!((background_yield(&cal) - 2.03e-4).abs() < 1e-15);
        // derived Meilan gain at mu = 0.6 from the calibrated numbers
        assert!((expected_gain(0.6, &cal) - 8.2e-3).abs() < 1e-4);
    }

    #[test]
    fn calibrate_rejects_degenerate_stats() {
        let mut s = meilan_stats();
        s.q_mu = s.y0;
        assert!(matches!(
            calibrate_link(&s, &link(2.86, 0.1)),
            Err(PhysError::UnphysicalStatistics(_))
        ));
    }

    #[test]
    fn calibrate_identity() {
        let s = MeasuredStats {
            q_mu: 1.0 - libm::exp(-0.6),
            e_mu: 0.0,
            y0: 0.0,
            ..meilan_stats()
        };
        let cal = calibrate_link(&s, &link(0.0, 1.0)).unwrap();
        assert_eq!(cal.insertion_loss_db, 0.0);
        assert_eq!(cal.misalignment, 0.0);
        assert_eq!(cal.dark_count_prob, 0.0);
    }

    #[test]
    fn noiseless_limit_returns_sender_bit() {
        let l = LinkParams::ideal("ideal");
        let settings = IntensitySettings {
            mu: 50.0,
            nu: 0.2,
            occupancy: [1, 0, 0],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = ChannelModel::new(&l, &settings);
        for i in 0..1000 {
            let pulse = PulseRecord {
                index: i,
                bit: i % 3 == 0,
                basis: Basis::Rectilinear,
                class: PulseClass::Signal,
            };
            let d = model.sample(&pulse, &mut rng);
            assert!(d.clicked);
            if d.basis == pulse.basis {
                assert_eq!(d.bit, pulse.bit);
            }
        }
    }

    #[test]
    fn vacuum_without_dark_counts_never_clicks() {
        let l = link(3.0, 0.1);
        let s = IntensitySettings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..10_000 {
            let pulse = PulseRecord {
                index: i,
                bit: false,
                basis: Basis::Diagonal,
                class: PulseClass::Vacuum,
            };
            assert!(!sample_detection(&pulse, &l, &s, &mut rng).clicked);
        }
    }
}
