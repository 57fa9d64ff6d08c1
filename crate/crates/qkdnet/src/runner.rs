//! Single-link experiments: simulate, analyse, calibrate.

use std::io::Write;

use anyhow::{Context, Result};
use serde::Serialize;

use qkdnet_core::bb84::{run_session, CascadeConfig, SessionConfig, SessionOutcome, Transcript};
use qkdnet_core::decoy::{key_rate, RateSettings};
use qkdnet_core::phys::{calibrate_link, expected_stats, LinkParams};
use qkdnet_core::PulseClass;

use crate::config::{Scenario, ScenarioLink};
use crate::report::{sifted_rate, LinkRow};
use crate::stats_file::StatsRecord;

/// Mixes labels into a seed (splitmix64 finaliser per step).
pub fn derive_seed(seed: u64, labels: &[u64]) -> u64 {
    let mut x = seed;
    for &l in labels {
        x ^= l.wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
        x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^= x >> 31;
    }
    x
}

pub fn session_config(scenario: &Scenario, link: &ScenarioLink) -> SessionConfig {
    SessionConfig {
        pulses: scenario.session_pulses(link),
        chunk: scenario.session.chunk,
        test_fraction: scenario.session.test_fraction,
        cascade: CascadeConfig::default(),
        safety_margin_bits: scenario.session.safety_margin_bits,
        rate: scenario.rate,
        budget: Some(scenario.budget(&link.params)),
    }
}

/// Seed of the session run by `run-link` on the link at `index`.
pub fn link_seed(scenario: &Scenario, index: usize) -> u64 {
    derive_seed(scenario.seed, &[0x11, index as u64])
}

#[derive(Debug, Clone)]
pub struct LinkRun {
    pub row: LinkRow,
    pub outcome: SessionOutcome,
}

/// Runs one capped session on the named link and analyses it with the
/// pulse counts of a full `run_seconds` run.
pub fn run_link(scenario: &Scenario, name: &str) -> Result<LinkRun> {
    let index = scenario
        .links
        .iter()
        .position(|l| l.params.name == name)
        .with_context(|| format!("no link named {name}"))?;
    run_link_at(scenario, index)
}

pub fn run_link_at(scenario: &Scenario, index: usize) -> Result<LinkRun> {
    let link = &scenario.links[index];
    let config = session_config(scenario, link);
    let outcome = run_session(&link.params, &scenario.intensity, &config, link_seed(scenario, index))
        .with_context(|| format!("session on {}", link.params.name))?;
    let row = link_row(scenario, link, &outcome)?;
    Ok(LinkRun { row, outcome })
}

/// Runs every link of the scenario, each on its own thread; rows come back
/// in scenario order.
pub fn run_all_links(scenario: &Scenario) -> Result<Vec<LinkRun>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..scenario.links.len())
            .map(|i| s.spawn(move || run_link_at(scenario, i)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("link thread panicked"))
            .collect()
    })
}

/// Secure rate the link model predicts for a full run, bit/s of wall time.
pub fn model_rate(scenario: &Scenario, link: &LinkParams) -> Result<f64> {
    let stats = expected_stats(link, &scenario.intensity, scenario.budget(link))?;
    let est = key_rate(&stats, &scenario.rate)?;
    Ok(est.bits_per_second(link.clock_hz, link.duty_cycle))
}

fn link_row(scenario: &Scenario, link: &ScenarioLink, out: &SessionOutcome) -> Result<LinkRow> {
    let p = &link.params;
    let m = &out.measured;
    let signal_fraction = scenario.intensity.fraction(PulseClass::Signal);
    Ok(LinkRow {
        link: p.name.clone(),
        clock_hz: p.clock_hz,
        duty_cycle: p.duty_cycle,
        run_seconds: scenario.run_seconds,
        pulse_cap: scenario.session_pulses(link),
        pulses_simulated: out.pulses,
        q_mu: m.q_mu,
        e_mu: m.e_mu,
        q_nu: m.q_nu,
        e_nu: m.e_nu,
        y0: m.y0,
        q1_l: out.estimate.q1_l,
        e1_u: out.estimate.e1_u,
        r_per_pulse: out.estimate.r_per_pulse,
        sifted_bps: sifted_rate(m.q_mu, p.clock_hz, p.duty_cycle, signal_fraction),
        final_bps: out.estimate.bits_per_second(p.clock_hz, p.duty_cycle),
        final_bps_active: out.estimate.active_bits_per_second(p.clock_hz),
        model_final_bps: model_rate(scenario, p)?,
        sifted_bits: out.sifted_signal_bits() as u64,
        leakage_bits: out.keys.leakage_bits,
        realized_f: out.realized_f,
        final_key_bytes: out.keys.final_key.len() as u64,
        keys_match: out.keys.final_key == out.keys.receiver_final_key,
        note: out.no_key.as_ref().map(|e| e.to_string()).unwrap_or_default(),
    })
}

#[derive(Serialize)]
struct TranscriptLine<'a> {
    link: &'a str,
    seq: usize,
    phase: &'static str,
    direction: &'static str,
    bytes: u64,
    payload_bits: u64,
}

/// One JSON object per classical message of a session.
pub fn write_transcript<W: Write>(link: &str, transcript: &Transcript, mut out: W) -> Result<()> {
    for (seq, e) in transcript.events().iter().enumerate() {
        let line = TranscriptLine {
            link,
            seq,
            phase: e.phase.name(),
            direction: e.direction.name(),
            bytes: e.bytes,
            payload_bits: e.payload_bits,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Fitted receiver parameters for one stats record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRow {
    pub name: String,
    pub status: String,
    pub fiber_loss_db: f64,
    pub detector_efficiency: f64,
    pub insertion_loss_db: Option<f64>,
    pub dark_count_prob: Option<f64>,
    pub misalignment: Option<f64>,
}

/// Fits each record. Fiber loss and efficiency come from the record, else
/// from the built-in geometry for links named `From-To`, else 0 dB / 10%.
pub fn calibrate_records(records: &[StatsRecord]) -> Vec<CalibrationRow> {
    records
        .iter()
        .map(|r| {
            let known = r
                .name
                .split_once('-')
                .and_then(|(a, b)| qkdnet_core::fixtures::path_fiber(a, b));
            let base = LinkParams {
                name: r.name.clone(),
                distance_km: known.map_or(0.0, |k| k.0),
                fiber_loss_db: r.fiber_loss_db.or(known.map(|k| k.1)).unwrap_or(0.0),
                insertion_loss_db: 0.0,
                detector_efficiency: r
                    .detector_efficiency
                    .unwrap_or(qkdnet_core::fixtures::DETECTOR_EFFICIENCY),
                dark_count_prob: 0.0,
                misalignment: 0.0,
                clock_hz: r.clock_hz,
                duty_cycle: r.duty_cycle,
            };
            let mut row = CalibrationRow {
                name: r.name.clone(),
                status: "ok".into(),
                fiber_loss_db: base.fiber_loss_db,
                detector_efficiency: base.detector_efficiency,
                insertion_loss_db: None,
                dark_count_prob: None,
                misalignment: None,
            };
            match calibrate_link(&r.stats, &base) {
                Ok(l) => {
                    row.insertion_loss_db = Some(l.insertion_loss_db);
                    row.dark_count_prob = Some(l.dark_count_prob);
                    row.misalignment = Some(l.misalignment);
                }
                Err(e) => row.status = e.to_string(),
            }
            row
        })
        .collect()
}

/// Settings used by `analyze` when no scenario is given.
pub fn default_rate() -> RateSettings {
    RateSettings::default()
}
