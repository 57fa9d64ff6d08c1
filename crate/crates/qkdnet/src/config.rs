//! Scenario files (TOML). The grammar is documented in `docs/SCENARIO.md`.

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use qkdnet_core::decoy::{PulseBudget, RateSettings};
use qkdnet_core::fabric::{ConnectionRequest, NetworkTopology, Node, SwitchState, DEFAULT_RECONFIG_MS};
use qkdnet_core::fixtures;
use qkdnet_core::phys::{calibrate_link, IntensitySettings, LinkParams};

/// Bytes per millisecond of a voice stream (8 kB/s).
pub const VOICE_BYTES_PER_MS: u64 = 8;
/// Voice is sent in 20 ms frames.
pub const VOICE_FRAME_MS: u64 = 20;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    seed: u64,
    #[serde(default = "default_run_seconds")]
    run_seconds: f64,
    #[serde(default = "default_pulse_cap")]
    pulse_cap: u64,
    #[serde(default)]
    intensity: RawIntensity,
    #[serde(default)]
    rate: RawRate,
    #[serde(default)]
    session: RawSession,
    #[serde(default)]
    switch: RawSwitch,
    #[serde(default, rename = "node")]
    nodes: Vec<RawNode>,
    #[serde(default, rename = "link")]
    links: Vec<RawLink>,
    #[serde(default, rename = "request")]
    requests: Vec<RawRequest>,
    #[serde(default, rename = "traffic")]
    traffic: Vec<RawTraffic>,
}

fn default_run_seconds() -> f64 {
    fixtures::RUN_SECONDS
}

fn default_pulse_cap() -> u64 {
    10_000_000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntensity {
    mu: f64,
    nu: f64,
    occupancy: [u32; 3],
}

impl Default for RawIntensity {
    fn default() -> Self {
        let d = IntensitySettings::default();
        Self {
            mu: d.mu,
            nu: d.nu,
            occupancy: d.occupancy,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRate {
    f: f64,
    q: f64,
    k_sigma: f64,
}

impl Default for RawRate {
    fn default() -> Self {
        let d = RateSettings::default();
        Self {
            f: d.f,
            q: d.q,
            k_sigma: d.k_sigma,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSession {
    test_fraction: f64,
    safety_margin_bits: u64,
    chunk: usize,
}

impl Default for RawSession {
    fn default() -> Self {
        Self {
            test_fraction: 0.1,
            safety_margin_bits: 64,
            chunk: 1 << 16,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSwitch {
    ports: usize,
    reconfig_ms: u64,
    #[serde(default)]
    offline: Vec<usize>,
}

impl Default for RawSwitch {
    fn default() -> Self {
        Self {
            ports: qkdnet_core::fabric::DEFAULT_PORT_COUNT,
            reconfig_ms: DEFAULT_RECONFIG_MS,
            offline: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    name: String,
    port: Option<usize>,
    #[serde(default)]
    relay: bool,
    #[serde(default = "yes")]
    terminal: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    from: String,
    to: String,
    calibrate_to: Option<String>,
    receiver_like: Option<String>,
    pulses: Option<u64>,
    distance_km: Option<f64>,
    fiber_loss_db: Option<f64>,
    insertion_loss_db: Option<f64>,
    detector_efficiency: Option<f64>,
    dark_count_prob: Option<f64>,
    misalignment: Option<f64>,
    clock_hz: Option<f64>,
    duty_cycle: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRequest {
    src: String,
    dst: String,
    at_ms: u64,
    #[serde(default)]
    priority: u32,
    #[serde(default = "one")]
    sessions: u32,
    #[serde(default = "default_relay_bytes")]
    relay_bytes: usize,
}

fn one() -> u32 {
    1
}

fn default_relay_bytes() -> usize {
    256
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraffic {
    from: String,
    to: String,
    at_ms: u64,
    bytes: Option<usize>,
    #[serde(default = "one")]
    count: u32,
    #[serde(default)]
    interval_ms: u64,
    voice_ms: Option<u64>,
    #[serde(default = "yes")]
    replay_check: bool,
}

/// A directed QKD link of the scenario: `from` transmits, `to` receives.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioLink {
    pub from: String,
    pub to: String,
    pub params: LinkParams,
    /// Pulses per simulated session; `None` uses the scenario cap.
    pub pulses: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRequest {
    pub request: ConnectionRequest,
    pub sessions: u32,
    pub relay_bytes: usize,
}

/// A scripted stream of OTP messages of `bytes` each.
#[derive(Debug, Clone, PartialEq)]
pub struct Traffic {
    pub from: String,
    pub to: String,
    pub at_ms: u64,
    pub bytes: usize,
    pub count: u32,
    pub interval_ms: u64,
    pub replay_check: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSettings {
    pub test_fraction: f64,
    pub safety_margin_bits: u64,
    pub chunk: usize,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub run_seconds: f64,
    pub pulse_cap: u64,
    pub intensity: IntensitySettings,
    pub rate: RateSettings,
    pub session: SessionSettings,
    pub switch: SwitchState,
    pub reconfig_ms: u64,
    pub topology: NetworkTopology,
    pub links: Vec<ScenarioLink>,
    pub requests: Vec<ScenarioRequest>,
    pub traffic: Vec<Traffic>,
}

impl Scenario {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let fallback = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
        Self::parse(&text, fallback).with_context(|| format!("in scenario {}", path.display()))
    }

    pub fn parse(text: &str, fallback_name: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text)?;
        build(raw, fallback_name)
    }

    pub fn link(&self, name: &str) -> Option<&ScenarioLink> {
        self.links.iter().find(|l| l.params.name == name)
    }

    /// Pulse counts of a full `run_seconds` session on `link`.
    pub fn budget(&self, link: &LinkParams) -> PulseBudget {
        PulseBudget::from_run(
            self.run_seconds,
            link.clock_hz,
            link.duty_cycle,
            self.intensity.occupancy,
        )
    }

    pub fn session_pulses(&self, link: &ScenarioLink) -> u64 {
        link.pulses.unwrap_or(self.pulse_cap)
    }
}

fn build(raw: RawScenario, fallback_name: &str) -> Result<Scenario> {
    let intensity = IntensitySettings {
        mu: raw.intensity.mu,
        nu: raw.intensity.nu,
        occupancy: raw.intensity.occupancy,
    };
    intensity.validate()?;
    let rate = RateSettings {
        f: raw.rate.f,
        q: raw.rate.q,
        k_sigma: raw.rate.k_sigma,
    };
    rate.validate()?;
    if !(raw.run_seconds > 0.0) {
        bail!("run_seconds must be positive");
    }
    if raw.pulse_cap == 0 {
        bail!("pulse_cap must be positive");
    }
    if !(0.0..1.0).contains(&raw.session.test_fraction) || raw.session.chunk == 0 {
        bail!("session.test_fraction must lie in [0, 1) and session.chunk be positive");
    }

    let mut switch = SwitchState::new(raw.switch.ports);
    for &p in &raw.switch.offline {
        switch.set_offline(p, true)?;
    }

    let mut topology = NetworkTopology::new();
    for n in &raw.nodes {
        if let Some(p) = n.port {
            if p >= raw.switch.ports {
                bail!("node {}: port {p} outside a {}-port switch", n.name, raw.switch.ports);
            }
        }
        topology.add_node(Node {
            name: n.name.clone(),
            terminal: n.terminal,
            relay: n.relay,
            switch_port: n.port,
        })?;
    }

    let mut links = Vec::new();
    for l in &raw.links {
        let params = resolve_link(l, &intensity).with_context(|| format!("link {}-{}", l.from, l.to))?;
        topology
            .add_link(&l.from, &l.to, params.clone())
            .with_context(|| format!("link {}-{}", l.from, l.to))?;
        links.push(ScenarioLink {
            from: l.from.clone(),
            to: l.to.clone(),
            params,
            pulses: l.pulses,
        });
    }

    let mut requests = Vec::new();
    for (id, r) in raw.requests.iter().enumerate() {
        for n in [&r.src, &r.dst] {
            topology.require(n).with_context(|| format!("request {id}"))?;
        }
        if r.src == r.dst {
            bail!("request {id}: source equals destination");
        }
        requests.push(ScenarioRequest {
            request: ConnectionRequest {
                id: id as u64,
                src: r.src.clone(),
                dst: r.dst.clone(),
                arrival_ms: r.at_ms,
                priority: r.priority,
            },
            sessions: r.sessions,
            relay_bytes: r.relay_bytes,
        });
    }

    let mut traffic = Vec::new();
    for (i, t) in raw.traffic.iter().enumerate() {
        for n in [&t.from, &t.to] {
            topology.require(n).with_context(|| format!("traffic {i}"))?;
        }
        if t.from == t.to {
            bail!("traffic {i}: sender equals receiver");
        }
        let (bytes, count, interval_ms) = match (t.voice_ms, t.bytes) {
            (Some(ms), None) => (
                (VOICE_BYTES_PER_MS * VOICE_FRAME_MS) as usize,
                ms.div_ceil(VOICE_FRAME_MS) as u32,
                VOICE_FRAME_MS,
            ),
            (None, Some(b)) => (b, t.count, t.interval_ms),
            _ => bail!("traffic {i}: give exactly one of `bytes` or `voice_ms`"),
        };
        traffic.push(Traffic {
            from: t.from.clone(),
            to: t.to.clone(),
            at_ms: t.at_ms,
            bytes,
            count,
            interval_ms,
            replay_check: t.replay_check,
        });
    }

    let names: BTreeSet<&str> = links.iter().map(|l| l.params.name.as_str()).collect();
    if names.len() != links.len() {
        bail!("two links share a name");
    }

    Ok(Scenario {
        name: raw.name.unwrap_or_else(|| fallback_name.to_string()),
        seed: raw.seed,
        run_seconds: raw.run_seconds,
        pulse_cap: raw.pulse_cap,
        intensity,
        rate,
        session: SessionSettings {
            test_fraction: raw.session.test_fraction,
            safety_margin_bits: raw.session.safety_margin_bits,
            chunk: raw.session.chunk,
        },
        switch,
        reconfig_ms: raw.switch.reconfig_ms,
        topology,
        links,
        requests,
        traffic,
    })
}

fn fixture(name: &str) -> Result<&'static fixtures::MeasuredLink> {
    fixtures::MEASURED_LINKS
        .iter()
        .find(|m| m.name() == name)
        .with_context(|| format!("no measured link named {name}"))
}

/// Starts from the measured geometry (if the link is in the fixtures),
/// applies `calibrate_to` / `receiver_like`, then explicit fields.
fn resolve_link(l: &RawLink, intensity: &IntensitySettings) -> Result<LinkParams> {
    let name = format!("{}-{}", l.from, l.to);
    let mut params = match fixtures::measured_link(&l.from, &l.to) {
        Some(m) => m.base_params(),
        None => LinkParams {
            name: name.clone(),
            distance_km: 0.0,
            fiber_loss_db: 0.0,
            insertion_loss_db: 0.0,
            detector_efficiency: fixtures::DETECTOR_EFFICIENCY,
            dark_count_prob: fixtures::LONG_HAUL_DARK_COUNT,
            misalignment: 0.0,
            clock_hz: fixtures::METRO_CLOCK_HZ,
            duty_cycle: fixtures::DUTY_CYCLE,
        },
    };
    if l.calibrate_to.is_some() && l.receiver_like.is_some() {
        bail!("give at most one of `calibrate_to` and `receiver_like`");
    }
    if let Some(target) = &l.calibrate_to {
        let m = fixture(target)?;
        let mut base = m.base_params();
        base.name = name.clone();
        override_fields(&mut base, l);
        params = calibrate_link(&m.stats(intensity), &base)?;
    } else if let Some(target) = &l.receiver_like {
        let m = fixture(target)?;
        let cal = calibrate_link(&m.stats(intensity), &m.base_params())?;
        params.insertion_loss_db = cal.insertion_loss_db;
        params.misalignment = cal.misalignment;
        params.detector_efficiency = cal.detector_efficiency;
        params.clock_hz = cal.clock_hz;
    }
    params.name = name;
    override_fields(&mut params, l);
    params.validate()?;
    Ok(params)
}

fn override_fields(p: &mut LinkParams, l: &RawLink) {
    let set = |dst: &mut f64, src: Option<f64>| {
        if let Some(v) = src {
            *dst = v;
        }
    };
    set(&mut p.distance_km, l.distance_km);
    set(&mut p.fiber_loss_db, l.fiber_loss_db);
    set(&mut p.insertion_loss_db, l.insertion_loss_db);
    set(&mut p.detector_efficiency, l.detector_efficiency);
    set(&mut p.dark_count_prob, l.dark_count_prob);
    set(&mut p.misalignment, l.misalignment);
    set(&mut p.clock_hz, l.clock_hz);
    set(&mut p.duty_cycle, l.duty_cycle);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_scenario() {
        let s = Scenario::parse(
            r#"
            seed = 1
            [[node]]
            name = "A"
            port = 0
            [[node]]
            name = "B"
            port = 1
            [[link]]
            from = "A"
            to = "B"
            fiber_loss_db = 3.0
            dark_count_prob = 0.0
            "#,
            "mini",
        )
        .unwrap();
        assert_eq!(s.name, "mini");
        assert_eq!(s.run_seconds, 400.0);
        assert_eq!(s.links[0].params.name, "A-B");
        assert_eq!(s.links[0].params.fiber_loss_db, 3.0);
        assert_eq!(s.intensity, IntensitySettings::default());
    }

    #[test]
    fn calibrated_link_reproduces_fixture() {
        let s = Scenario::parse(
            r#"
            seed = 1
            [[node]]
            name = "Meilan"
            port = 2
            [[node]]
            name = "USTC"
            port = 0
            [[link]]
            from = "Meilan"
            to = "USTC"
            calibrate_to = "Meilan-USTC"
            "#,
            "x",
        )
        .unwrap();
        let p = &s.links[0].params;
        assert!((p.fiber_loss_db - 5.68).abs() < 1e-12);
        let q = qkdnet_core::phys::expected_gain(0.6, p);
        assert!((q / 8.21e-3 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(Scenario::parse("run_seconds = 10", "x").is_err());
    }

    #[test]
    fn unknown_node_rejected() {
        let err = Scenario::parse(
            r#"
            seed = 1
            [[node]]
            name = "A"
            [[request]]
            src = "A"
            dst = "Z"
            at_ms = 0
            "#,
            "x",
        )
        .unwrap_err();
        assert!(format!("{err:#}").contains("unroutable: Z"), "{err:#}");
    }

    #[test]
    fn voice_traffic_is_framed() {
        let s = Scenario::parse(
            r#"
            seed = 1
            [[node]]
            name = "A"
            [[node]]
            name = "B"
            [[traffic]]
            from = "A"
            to = "B"
            at_ms = 5
            voice_ms = 100
            "#,
            "x",
        )
        .unwrap();
        assert_eq!(s.traffic[0].bytes, 160);
        assert_eq!(s.traffic[0].count, 5);
    }
}
