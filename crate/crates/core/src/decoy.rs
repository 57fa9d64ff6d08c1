//! Decoy-state security analysis.
//!
//! Given the observed gains and error rates of the signal (`mu`), decoy
//! (`nu`) and vacuum classes, bound the gain `Q1` and error rate `e1` of the
//! single-photon part of the signal class and turn them into a secure key
//! rate per emitted pulse:
//!
//! ```text
//! R = q * ( -Q_mu * f * H2(E_mu) + Q1_L * (1 - H2(e1_U)) )
//! ```
//!
//! Statistical fluctuations of the decoy gain and the vacuum yield are
//! handled by widening each point estimate by `k_sigma` binomial standard
//! deviations before it enters the bounds.

use libm::{erfc, exp, log2, sqrt};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum AnalysisError {
    #[error("binary entropy argument {0} outside [0, 1]")]
    Domain(f64),
    #[error("invalid intensity ordering: mu {mu} must exceed nu {nu} > 0")]
    InvalidIntensityOrdering { mu: f64, nu: f64 },
    #[error("insufficient decoy data: {0}")]
    InsufficientDecoyData(&'static str),
    #[error("invalid statistics: {0}")]
    InvalidStatistics(&'static str),
    #[error("invalid rate settings: {0}")]
    InvalidSettings(&'static str),
}

/// Per-session observables: gains, error rates and pulse counts per class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredStats {
    pub mu: f64,
    pub nu: f64,
    pub q_mu: f64,
    pub e_mu: f64,
    pub q_nu: f64,
    pub e_nu: f64,
    pub y0: f64,
    pub n_mu: u64,
    pub n_nu: u64,
    pub n_0: u64,
}

impl MeasuredStats {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.nu > 0.0 && self.mu > self.nu) {
            return Err(AnalysisError::InvalidIntensityOrdering {
                mu: self.mu,
                nu: self.nu,
            });
        }
        let prob = |x: f64| (0.0..=1.0).contains(&x);
        if !(prob(self.q_mu) && prob(self.q_nu) && prob(self.y0)) {
            return Err(AnalysisError::InvalidStatistics("gain outside [0, 1]"));
        }
        if !((0.0..=0.5).contains(&self.e_mu) && (0.0..=0.5).contains(&self.e_nu)) {
            return Err(AnalysisError::InvalidStatistics("error rate outside [0, 0.5]"));
        }
        Ok(())
    }

    /// Replaces the pulse counts, e.g. to extrapolate a desk-scale run to the
    /// full session length.
    pub fn with_counts(mut self, budget: PulseBudget) -> Self {
        self.n_mu = budget.n_mu;
        self.n_nu = budget.n_nu;
        self.n_0 = budget.n_0;
        self
    }
}

/// Parameters of the key-rate formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSettings {
    /// Error-correction inefficiency (leaked bits / Shannon limit).
    pub f: f64,
    /// Protocol efficiency: basis sifting times signal occupancy.
    pub q: f64,
    /// Width of the fluctuation bounds in standard deviations.
    pub k_sigma: f64,
}

impl Default for RateSettings {
    fn default() -> Self {
        Self {
            f: 1.22,
            q: 3.0 / 8.0,
            k_sigma: 10.0,
        }
    }
}

impl RateSettings {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.f >= 1.0) {
            return Err(AnalysisError::InvalidSettings("f must be >= 1"));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            return Err(AnalysisError::InvalidSettings("q must lie in (0, 1]"));
        }
        if !(self.k_sigma >= 0.0) {
            return Err(AnalysisError::InvalidSettings("k_sigma must be >= 0"));
        }
        Ok(())
    }
}

/// Pulse counts per class for a session of given length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PulseBudget {
    pub n_mu: u64,
    pub n_nu: u64,
    pub n_0: u64,
}

impl PulseBudget {
    /// `seconds * clock_hz * duty_cycle` pulses split by `occupancy`
    /// (signal, decoy, vacuum) weights.
    pub fn from_run(seconds: f64, clock_hz: f64, duty_cycle: f64, occupancy: [u32; 3]) -> Self {
        let total = seconds * clock_hz * duty_cycle;
        let weight: u32 = occupancy.iter().sum();
        let share = |w: u32| libm::round(total * w as f64 / weight as f64) as u64;
        Self {
            n_mu: share(occupancy[0]),
            n_nu: share(occupancy[1]),
            n_0: share(occupancy[2]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluctuationBounds {
    pub q_nu_l: f64,
    pub y0_l: f64,
    pub y0_u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePhotonBounds {
    pub fluctuation: FluctuationBounds,
    pub q1_l: f64,
    pub e1_u: f64,
}

/// Everything the analysis derives from one set of [`MeasuredStats`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoyEstimate {
    pub q_nu_l: f64,
    pub y0_l: f64,
    pub y0_u: f64,
    pub q1_l: f64,
    pub e1_u: f64,
    /// Secure bits per emitted pulse, clamped at 0.
    pub r_per_pulse: f64,
    /// One-sided normal confidence of the `k_sigma` bounds.
    pub confidence: f64,
    /// Upper-tail probability matching `confidence` (kept separately since
    /// `1 - tail` rounds to 1.0 for large `k_sigma`).
    pub confidence_tail: f64,
}

impl DecoyEstimate {
    /// Secure bits per wall-clock second.
    pub fn bits_per_second(&self, clock_hz: f64, duty_cycle: f64) -> f64 {
        self.r_per_pulse * clock_hz * duty_cycle
    }

    /// Secure bits per second of protocol-active time (feedback excluded).
    pub fn active_bits_per_second(&self, clock_hz: f64) -> f64 {
        self.r_per_pulse * clock_hz
    }
}

/// `H2(x) = -x log2 x - (1-x) log2 (1-x)`, with `H2(0) = H2(1) = 0`.
pub fn binary_entropy(x: f64) -> Result<f64, AnalysisError> {
    if !(0.0..=1.0).contains(&x) {
        return Err(AnalysisError::Domain(x));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * log2(x) - (1.0 - x) * log2(1.0 - x))
}

/// Widens the decoy gain and the vacuum yield by `k_sigma` standard
/// deviations. With no vacuum clicks at all the yield is bracketed by
/// `[0, k^2 / N_0]`.
pub fn fluctuation_bounds(stats: &MeasuredStats, k_sigma: f64) -> Result<FluctuationBounds, AnalysisError> {
    let decoy_clicks = stats.n_nu as f64 * stats.q_nu;
    if !(decoy_clicks > 0.0) {
        return Err(AnalysisError::InsufficientDecoyData("no decoy detections"));
    }
    let q_nu_l = (stats.q_nu * (1.0 - k_sigma / sqrt(decoy_clicks))).max(0.0);

    let (y0_l, y0_u) = if stats.y0 > 0.0 {
        let vacuum_clicks = stats.n_0 as f64 * stats.y0;
        if !(vacuum_clicks > 0.0) {
            return Err(AnalysisError::InsufficientDecoyData("no vacuum pulses"));
        }
        let spread = k_sigma / sqrt(vacuum_clicks);
        ((stats.y0 * (1.0 - spread)).max(0.0), stats.y0 * (1.0 + spread))
    } else {
        if stats.n_0 == 0 {
            return Err(AnalysisError::InsufficientDecoyData("no vacuum pulses"));
        }
        (0.0, k_sigma * k_sigma / stats.n_0 as f64)
    };
    Ok(FluctuationBounds { q_nu_l, y0_l, y0_u })
}

/// Lower bound on the single-photon gain and upper bound on its error rate.
///
/// `Q1_L` is clamped at 0 and `e1_U` to `[0, 0.5]`; a vanishing `Q1_L`
/// forces the worst case `e1_U = 0.5`.
pub fn single_photon_bounds(
    stats: &MeasuredStats,
    settings: &RateSettings,
) -> Result<SinglePhotonBounds, AnalysisError> {
    let (mu, nu) = (stats.mu, stats.nu);
    if !(nu > 0.0 && mu > nu) {
        return Err(AnalysisError::InvalidIntensityOrdering { mu, nu });
    }
    let fl = fluctuation_bounds(stats, settings.k_sigma)?;

    let prefactor = mu * mu * exp(-mu) / (mu * nu - nu * nu);
    let ratio = (nu * nu) / (mu * mu);
    let q1_l = prefactor * (fl.q_nu_l * exp(nu) - stats.q_mu * exp(mu) * ratio - fl.y0_u * (1.0 - ratio));
    let q1_l = q1_l.max(0.0);

    let e1_u = if q1_l > 0.0 {
        ((stats.e_mu * stats.q_mu - fl.y0_l * exp(-mu) / 2.0) / q1_l).clamp(0.0, 0.5)
    } else {
        0.5
    };
    Ok(SinglePhotonBounds {
        fluctuation: fl,
        q1_l,
        e1_u,
    })
}

/// Secure key rate per emitted pulse plus all intermediate bounds.
pub fn key_rate(stats: &MeasuredStats, settings: &RateSettings) -> Result<DecoyEstimate, AnalysisError> {
    stats.validate()?;
    settings.validate()?;
    let b = single_photon_bounds(stats, settings)?;
    let leak = stats.q_mu * settings.f * binary_entropy(stats.e_mu)?;
    let secret = b.q1_l * (1.0 - binary_entropy(b.e1_u)?);
    let r = (settings.q * (secret - leak)).max(0.0);
    Ok(DecoyEstimate {
        q_nu_l: b.fluctuation.q_nu_l,
        y0_l: b.fluctuation.y0_l,
        y0_u: b.fluctuation.y0_u,
        q1_l: b.q1_l,
        e1_u: b.e1_u,
        r_per_pulse: r,
        confidence: confidence_level(settings.k_sigma),
        confidence_tail: confidence_tail(settings.k_sigma),
    })
}

/// Standard normal upper tail `P(Z > k)`.
pub fn confidence_tail(k_sigma: f64) -> f64 {
    0.5 * erfc(k_sigma / core::f64::consts::SQRT_2)
}

/// `1 - P(Z > k)`: the confidence attached to a `k_sigma` bound.
pub fn confidence_level(k_sigma: f64) -> f64 {
    1.0 - confidence_tail(k_sigma)
}
