//! Measured-statistics files: CSV with a header row, `#` comment lines.
//! Format documented in `docs/FORMATS.md`.

use std::io::Read;

use serde::Deserialize;
use thiserror::Error;

use qkdnet_core::decoy::{MeasuredStats, PulseBudget};
use qkdnet_core::fixtures;

#[derive(Debug, Error)]
pub enum StatsFileError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Deserialize)]
struct Row {
    name: String,
    mu: f64,
    nu: f64,
    q_mu: f64,
    e_mu: f64,
    q_nu: f64,
    e_nu: f64,
    y0: f64,
    clock_hz: f64,
    #[serde(default)]
    duty_cycle: Option<f64>,
    #[serde(default)]
    n_mu: Option<u64>,
    #[serde(default)]
    n_nu: Option<u64>,
    #[serde(default)]
    n_0: Option<u64>,
    #[serde(default)]
    fiber_loss_db: Option<f64>,
    #[serde(default)]
    detector_efficiency: Option<f64>,
}

/// One record of a stats file, with pulse counts filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct StatsRecord {
    pub line: u64,
    pub name: String,
    pub stats: MeasuredStats,
    pub clock_hz: f64,
    pub duty_cycle: f64,
    pub fiber_loss_db: Option<f64>,
    pub detector_efficiency: Option<f64>,
}

// A record's position is where the comment lines before it start, so step
// over those and count lines by hand.
fn line_at(text: &[u8], pos: Option<&csv::Position>) -> u64 {
    pos.map_or(0, |p| {
        let mut at = (p.byte() as usize).min(text.len());
        while text.get(at) == Some(&b'#') {
            at = text[at..]
                .iter()
                .position(|&b| b == b'\n')
                .map_or(text.len(), |i| at + i + 1);
        }
        1 + text[..at].iter().filter(|&&b| b == b'\n').count() as u64
    })
}

fn parse_error(text: &[u8], e: &csv::Error) -> StatsFileError {
    StatsFileError::Parse {
        line: line_at(text, e.position()),
        message: e.to_string(),
    }
}

/// Reads every record. Missing pulse counts come from a `run_seconds` run at
/// the record's clock and duty cycle with the given class weights.
pub fn read_stats<R: Read>(
    mut input: R,
    run_seconds: f64,
    occupancy: [u32; 3],
) -> Result<Vec<StatsRecord>, StatsFileError> {
    let mut text = Vec::new();
    input.read_to_end(&mut text)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_slice());
    let headers = reader.headers().map_err(|e| parse_error(&text, &e))?.clone();
    let mut out = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| parse_error(&text, &e))?;
        let line = line_at(&text, record.position());
        let row: Row = record.deserialize(Some(&headers)).map_err(|e| StatsFileError::Parse {
            line,
            message: match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => e.to_string(),
            },
        })?;
        let duty_cycle = row.duty_cycle.unwrap_or(fixtures::DUTY_CYCLE);
        let budget = PulseBudget::from_run(run_seconds, row.clock_hz, duty_cycle, occupancy);
        let counts = [row.n_mu, row.n_nu, row.n_0];
        let given = counts.iter().filter(|c| c.is_some()).count();
        if given != 0 && given != 3 {
            return Err(StatsFileError::Parse {
                line,
                message: "give all of n_mu, n_nu, n_0 or none".into(),
            });
        }
        out.push(StatsRecord {
            line,
            name: row.name,
            stats: MeasuredStats {
                mu: row.mu,
                nu: row.nu,
                q_mu: row.q_mu,
                e_mu: row.e_mu,
                q_nu: row.q_nu,
                e_nu: row.e_nu,
                y0: row.y0,
                n_mu: row.n_mu.unwrap_or(budget.n_mu),
                n_nu: row.n_nu.unwrap_or(budget.n_nu),
                n_0: row.n_0.unwrap_or(budget.n_0),
            },
            clock_hz: row.clock_hz,
            duty_cycle,
            fiber_loss_db: row.fiber_loss_db,
            detector_efficiency: row.detector_efficiency,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "name,mu,nu,q_mu,e_mu,q_nu,e_nu,y0,clock_hz\n";

    #[test]
    fn empty_file_gives_nothing() {
        assert!(read_stats(HEADER.as_bytes(), 400.0, [6, 1, 1]).unwrap().is_empty());
        assert!(read_stats("".as_bytes(), 400.0, [6, 1, 1]).unwrap().is_empty());
    }

    #[test]
    fn counts_default_to_budget() {
        let text = format!("# comment\n{HEADER}a,0.6,0.2,8.21e-3,0.0158,2.71e-3,0.04,2.03e-4,4e6\n");
        let r = read_stats(text.as_bytes(), 400.0, [6, 1, 1]).unwrap();
        assert_eq!(r[0].stats.n_nu, 160_000_000);
        assert_eq!(r[0].line, 3);
    }

    #[test]
    fn bad_number_reports_line() {
        let text = format!("{HEADER}a,0.6,0.2,8e-3,0.01,2e-3,0.04,2e-4,4e6\nb,0.6,zero,8e-3,0.01,2e-3,0.04,2e-4,4e6\n");
        match read_stats(text.as_bytes(), 400.0, [6, 1, 1]) {
            Err(StatsFileError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
