use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use qkdnet::config::Scenario;
use qkdnet::network::run_network;
use qkdnet::poolfile::{read_pool, write_pool};
use qkdnet::report::{analyze_records, write_analysis, write_csv, LinkRow};
use qkdnet::runner::{calibrate_records, default_rate, run_all_links, run_link, write_transcript, LinkRun};
use qkdnet::stats_file::read_stats;
use qkdnet_core::fixtures;
use qkdnet_core::keystore::{KeyPool, NodePair, PairPools};

#[derive(Parser)]
#[command(name = "qkdnet", version, about = "Decoy-state BB84 network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files; tables go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one link (or every link) of a scenario and analyse it.
    RunLink {
        #[command(flatten)]
        common: Common,
        /// Link name, `From-To`. All links when omitted.
        #[arg(long)]
        link: Option<String>,
    },
    /// Run requests, sessions, relays and OTP traffic of a scenario.
    RunNetwork {
        #[command(flatten)]
        common: Common,
        /// Directory of pool files to start from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Secure key rates for every record of a stats file.
    Analyze {
        /// Stats file (CSV).
        #[arg(long)]
        stats: PathBuf,
        /// Take rate settings, intensities and run length from a scenario.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit insertion loss, dark counts and misalignment to a stats file.
    Calibrate {
        #[arg(long)]
        stats: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate every link and print the measured table, one column per link.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

fn load(common: &Common) -> Result<Scenario> {
    let mut s = Scenario::from_path(&common.scenario)?;
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    Ok(s)
}

fn sink(out: &Option<PathBuf>, file: &str) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(file);
            Box::new(BufWriter::new(
                File::create(&path).with_context(|| format!("creating {}", path.display()))?,
            ))
        }
        None => Box::new(io::stdout().lock()),
    })
}

fn run_links(common: &Common, link: &Option<String>) -> Result<bool> {
    let scenario = load(common)?;
    let runs: Vec<LinkRun> = match link {
        Some(name) => vec![run_link(&scenario, name)?],
        None => run_all_links(&scenario)?,
    };
    let rows: Vec<LinkRow> = runs.iter().map(|r| r.row.clone()).collect();
    write_csv(&rows, sink(&common.out, "links.csv")?)?;
    if common.out.is_some() {
        let mut t = sink(&common.out, "transcript.jsonl")?;
        for r in &runs {
            write_transcript(&r.row.link, &r.outcome.transcript, &mut t)?;
        }
        t.flush()?;
    }
    Ok(rows.iter().all(|r| r.keys_match))
}

fn load_pools(dir: &Path) -> Result<Vec<PairPools>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "qkpl"))
        .collect();
    paths.sort();
    let mut copies: Vec<KeyPool> = Vec::new();
    for p in &paths {
        let pool = read_pool(File::open(p)?).with_context(|| format!("reading {}", p.display()))?;
        copies.push(pool);
    }
    let mut out = Vec::new();
    let pairs: std::collections::BTreeSet<NodePair> = copies.iter().map(|c| c.pair().clone()).collect();
    for pair in pairs {
        let find = |owner: &str| {
            copies
                .iter()
                .find(|c| c.pair() == &pair && c.owner() == owner)
                .cloned()
                .with_context(|| format!("missing {owner}'s copy of pool {pair}"))
        };
        out.push(PairPools {
            a: find(pair.a())?,
            b: find(pair.b())?,
        });
    }
    Ok(out)
}

fn network(common: &Common, resume: &Option<PathBuf>) -> Result<bool> {
    let scenario = load(common)?;
    let initial = match resume {
        Some(dir) => load_pools(dir)?,
        None => Vec::new(),
    };
    let outcome = run_network(&scenario, initial)?;
    match &common.out {
        Some(dir) => {
            let mut ev = sink(&common.out, "events.jsonl")?;
            outcome.write_events(&mut ev)?;
            ev.flush()?;
            write_csv(&outcome.messages, sink(&common.out, "messages.csv")?)?;
            write_csv(&outcome.budgets, sink(&common.out, "budgets.csv")?)?;
            let pool_dir = dir.join("pools");
            fs::create_dir_all(&pool_dir)?;
            for p in outcome.pools.values() {
                for copy in [&p.a, &p.b] {
                    let name = format!("{}__{}.{}.qkpl", p.pair().a(), p.pair().b(), copy.owner());
                    write_pool(copy, BufWriter::new(File::create(pool_dir.join(name))?))?;
                }
            }
        }
        None => write_csv(&outcome.budgets, io::stdout().lock())?,
    }
    let ok_messages = outcome.messages.iter().filter(|m| m.ok).count();
    eprintln!(
        "{}: {} events, {}/{} messages delivered, {}/{} replays refused, audit {} ({} key bytes), {} failures",
        scenario.name,
        outcome.events.len(),
        ok_messages,
        outcome.messages.len(),
        outcome.replays_refused,
        outcome.replays_attempted,
        if outcome.audit.clean() { "clean" } else { "FAILED" },
        outcome.audit.bytes_checked,
        outcome.failures.len()
    );
    for f in &outcome.failures {
        eprintln!("  {f}");
    }
    Ok(outcome.passed())
}

fn analyze(stats: &Path, scenario: &Option<PathBuf>, out: &Option<PathBuf>) -> Result<bool> {
    let (rate, run_seconds, occupancy) = match scenario {
        Some(p) => {
            let s = Scenario::from_path(p)?;
            (s.rate, s.run_seconds, s.intensity.occupancy)
        }
        None => (default_rate(), fixtures::RUN_SECONDS, [6, 1, 1]),
    };
    let file = File::open(stats).with_context(|| format!("opening {}", stats.display()))?;
    let records = read_stats(file, run_seconds, occupancy).with_context(|| format!("in {}", stats.display()))?;
    let rows = analyze_records(&records, &rate);
    write_analysis(&rows, sink(out, "analysis.csv")?)?;
    Ok(true)
}

fn calibrate(stats: &Path, out: &Option<PathBuf>) -> Result<bool> {
    let file = File::open(stats).with_context(|| format!("opening {}", stats.display()))?;
    let records = read_stats(file, fixtures::RUN_SECONDS, [6, 1, 1])?;
    let rows = calibrate_records(&records);
    write_csv(&rows, sink(out, "calibration.csv")?)?;
    Ok(rows.iter().all(|r| r.status == "ok"))
}

fn report(common: &Common) -> Result<bool> {
    let scenario = load(common)?;
    let runs = run_all_links(&scenario)?;
    let mut w = csv::Writer::from_writer(sink(&common.out, "report.csv")?);
    let mut header = vec!["param".to_string()];
    header.extend(runs.iter().map(|r| r.row.link.clone()));
    w.write_record(&header)?;
    #[allow(clippy::type_complexity)]
    let lines: [(&str, fn(&LinkRow) -> String); 9] = [
        ("sifted_bps", |r| format!("{:.0}", r.sifted_bps)),
        ("final_bps", |r| format!("{:.0}", r.final_bps)),
        ("e_mu", |r| format!("{:.4}", r.e_mu)),
        ("e_nu", |r| format!("{:.4}", r.e_nu)),
        ("q_mu", |r| format!("{:.3e}", r.q_mu)),
        ("q_nu", |r| format!("{:.3e}", r.q_nu)),
        ("y0", |r| format!("{:.3e}", r.y0)),
        ("model_final_bps", |r| format!("{:.0}", r.model_final_bps)),
        ("pulses_simulated", |r| r.pulses_simulated.to_string()),
    ];
    for (name, f) in lines {
        let mut rec = vec![name.to_string()];
        rec.extend(runs.iter().map(|r| f(&r.row)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(runs.iter().all(|r| r.row.keys_match))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::RunLink { common, link } => run_links(common, link),
        Command::RunNetwork { common, resume } => network(common, resume),
        Command::Analyze { stats, scenario, out } => analyze(stats, scenario, out),
        Command::Calibrate { stats, out } => calibrate(stats, out),
        Command::Report { common } => report(common),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
