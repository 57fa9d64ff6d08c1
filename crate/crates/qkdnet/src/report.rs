//! Delimited output tables. Column layouts are documented in
//! `docs/FORMATS.md`; floats are written in shortest round-trip form so the
//! files are byte-identical across runs.

use std::io::Write;

use anyhow::Result;
use serde::Serialize;

use qkdnet_core::decoy::{key_rate, RateSettings};

use crate::stats_file::StatsRecord;

/// One row of the `analyze` table. Numeric columns are empty when the
/// record could not be analysed; `status` then says why.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisRow {
    pub name: String,
    pub line: u64,
    pub status: String,
    pub q_nu_l: Option<f64>,
    pub y0_l: Option<f64>,
    pub y0_u: Option<f64>,
    pub q1_l: Option<f64>,
    pub e1_u: Option<f64>,
    pub r_per_pulse: Option<f64>,
    pub final_bps: Option<f64>,
    pub final_bps_active: Option<f64>,
    pub sifted_bps: f64,
}

/// Sifted signal bits per wall second implied by a signal gain.
pub fn sifted_rate(q_mu: f64, clock_hz: f64, duty_cycle: f64, signal_fraction: f64) -> f64 {
    clock_hz * duty_cycle * signal_fraction * q_mu * 0.5
}

pub fn analyze_records(records: &[StatsRecord], rate: &RateSettings) -> Vec<AnalysisRow> {
    records
        .iter()
        .map(|r| {
            let total: u64 = r.stats.n_mu + r.stats.n_nu + r.stats.n_0;
            let signal_fraction = if total > 0 {
                r.stats.n_mu as f64 / total as f64
            } else {
                0.0
            };
            let mut row = AnalysisRow {
                name: r.name.clone(),
                line: r.line,
                status: "ok".into(),
                q_nu_l: None,
                y0_l: None,
                y0_u: None,
                q1_l: None,
                e1_u: None,
                r_per_pulse: None,
                final_bps: None,
                final_bps_active: None,
                sifted_bps: sifted_rate(r.stats.q_mu, r.clock_hz, r.duty_cycle, signal_fraction),
            };
            match key_rate(&r.stats, rate) {
                Ok(est) => {
                    row.q_nu_l = Some(est.q_nu_l);
                    row.y0_l = Some(est.y0_l);
                    row.y0_u = Some(est.y0_u);
                    row.q1_l = Some(est.q1_l);
                    row.e1_u = Some(est.e1_u);
                    row.r_per_pulse = Some(est.r_per_pulse);
                    row.final_bps = Some(est.bits_per_second(r.clock_hz, r.duty_cycle));
                    row.final_bps_active = Some(est.active_bits_per_second(r.clock_hz));
                }
                Err(e) => row.status = e.to_string(),
            }
            row
        })
        .collect()
}

/// Result of one simulated link session, as reported by `run-link` and
/// `report`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkRow {
    pub link: String,
    pub clock_hz: f64,
    pub duty_cycle: f64,
    pub run_seconds: f64,
    pub pulse_cap: u64,
    pub pulses_simulated: u64,
    pub q_mu: f64,
    pub e_mu: f64,
    pub q_nu: f64,
    pub e_nu: f64,
    pub y0: f64,
    pub q1_l: f64,
    pub e1_u: f64,
    pub r_per_pulse: f64,
    pub sifted_bps: f64,
    pub final_bps: f64,
    pub final_bps_active: f64,
    /// Rate from the link model's exact expected statistics.
    pub model_final_bps: f64,
    pub sifted_bits: u64,
    pub leakage_bits: u64,
    pub realized_f: Option<f64>,
    pub final_key_bytes: u64,
    pub keys_match: bool,
    pub note: String,
}

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the header even when there are no rows.
pub fn write_analysis<W: Write>(rows: &[AnalysisRow], out: W) -> Result<()> {
    if rows.is_empty() {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "name",
            "line",
            "status",
            "q_nu_l",
            "y0_l",
            "y0_u",
            "q1_l",
            "e1_u",
            "r_per_pulse",
            "final_bps",
            "final_bps_active",
            "sifted_bps",
        ])?;
        w.flush()?;
        return Ok(());
    }
    write_csv(rows, out)
}
