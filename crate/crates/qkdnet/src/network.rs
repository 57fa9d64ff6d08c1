//! Whole-network run: a discrete-event loop over connection requests,
//! QKD sessions, relay composition and scripted one-time-pad traffic.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::io::Write;

use anyhow::{Context, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use qkdnet_core::bb84::{run_session, SessionOutcome};
use qkdnet_core::fabric::{relay_compose, Action, FabricError, Grant, Scheduler};
use qkdnet_core::keystore::{KeyError, Lane, NodePair, PairPools, UseKind};

use crate::config::{Scenario, ScenarioLink};
use crate::pools::SharedPool;
use crate::runner::{derive_seed, session_config};

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NetEvent {
    Request {
        t_ms: u64,
        request: u64,
        src: String,
        dst: String,
        priority: u32,
    },
    Schedule {
        t_ms: u64,
        request: u64,
        action: String,
    },
    Session {
        t_ms: u64,
        request: u64,
        link: String,
        pulses: u64,
        qber: f64,
        key_bytes: u64,
        keys_match: bool,
        note: String,
    },
    Release {
        t_ms: u64,
        request: u64,
    },
    Relay {
        t_ms: u64,
        request: u64,
        relay: String,
        pair: String,
        bytes: u64,
    },
    KeyExhausted {
        t_ms: u64,
        pair: String,
        shortfall: u64,
        context: String,
    },
    Message {
        t_ms: u64,
        traffic: usize,
        seq: u32,
        from: String,
        to: String,
        bytes: u64,
        offset: u64,
        ok: bool,
    },
    Replay {
        t_ms: u64,
        traffic: usize,
        seq: u32,
        refused: bool,
    },
    Failure {
        t_ms: u64,
        what: String,
    },
}

/// Key produced and spent per pair, in bytes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairBudget {
    pub pair: String,
    pub deposited: u64,
    pub spent_a: u64,
    pub spent_b: u64,
    pub left_forward: u64,
    pub left_backward: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MessageRow {
    pub traffic: usize,
    pub seq: u32,
    pub t_ms: u64,
    pub from: String,
    pub to: String,
    pub bytes: u64,
    pub offset: Option<u64>,
    pub ok: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Audit {
    /// Key bytes handed out, counted per endpoint copy.
    pub bytes_checked: u64,
    /// Byte offsets handed out twice by the same copy.
    pub reused: u64,
    /// Pairs whose endpoint copies disagree on a lane cursor.
    pub desynchronized: Vec<String>,
    /// Message offsets that appear in two messages of the same pair.
    pub message_collisions: u64,
}

impl Audit {
    pub fn clean(&self) -> bool {
        self.reused == 0 && self.desynchronized.is_empty() && self.message_collisions == 0
    }
}

#[derive(Debug)]
pub struct NetworkOutcome {
    pub events: Vec<NetEvent>,
    pub messages: Vec<MessageRow>,
    pub budgets: Vec<PairBudget>,
    pub audit: Audit,
    pub replays_attempted: u64,
    pub replays_refused: u64,
    pub failures: Vec<String>,
    pub pools: BTreeMap<NodePair, PairPools>,
    pub end_ms: u64,
}

impl NetworkOutcome {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
            && self.audit.clean()
            && self.replays_attempted == self.replays_refused
            && self.messages.iter().all(|m| m.ok)
    }

    /// Unordered pairs that exchanged at least one message successfully in
    /// each direction.
    pub fn pairs_with_traffic_both_ways(&self) -> BTreeSet<NodePair> {
        let mut dirs: BTreeMap<NodePair, [bool; 2]> = BTreeMap::new();
        for m in self.messages.iter().filter(|m| m.ok) {
            let pair = NodePair::new(&m.from, &m.to).expect("distinct endpoints");
            let lane = pair.lane_of(&m.from).expect("endpoint").index();
            dirs.entry(pair).or_default()[lane] = true;
        }
        dirs.into_iter().filter(|(_, d)| d[0] && d[1]).map(|(p, _)| p).collect()
    }

    pub fn write_events<W: Write>(&self, mut out: W) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Ev {
    // at equal times: finished sessions first, then arrivals, then traffic
    Done(usize),
    Arrival(usize),
    Message(usize, u32),
}

struct Running {
    grant: Grant,
    sessions: Vec<(usize, SessionOutcome)>,
    relay: Option<String>,
    relay_bytes: usize,
}

struct Net<'a> {
    scenario: &'a Scenario,
    scheduler: Scheduler,
    pools: BTreeMap<NodePair, SharedPool>,
    queue: BinaryHeap<Reverse<(u64, Ev, u64)>>,
    seq: u64,
    running: Vec<Option<Running>>,
    events: Vec<NetEvent>,
    messages: Vec<MessageRow>,
    failures: Vec<String>,
    replays_attempted: u64,
    replays_refused: u64,
    next_provenance: u64,
    now: u64,
}

fn ms_for(pulses: u64, link: &ScenarioLink) -> u64 {
    (pulses as f64 / (link.params.clock_hz * link.params.duty_cycle) * 1e3).ceil() as u64
}

impl<'a> Net<'a> {
    fn push(&mut self, t: u64, ev: Ev) {
        self.seq += 1;
        self.queue.push(Reverse((t, ev, self.seq)));
    }

    fn pool(&mut self, a: &str, b: &str) -> &SharedPool {
        let pair = NodePair::new(a, b).expect("distinct endpoints");
        self.pools.entry(pair.clone()).or_insert_with(|| SharedPool::new(pair))
    }

    fn fail(&mut self, what: String) {
        self.events.push(NetEvent::Failure {
            t_ms: self.now,
            what: what.clone(),
        });
        self.failures.push(what);
    }

    fn link_index(&self, a: &str, b: &str) -> Option<usize> {
        self.scenario
            .links
            .iter()
            .position(|l| (l.from == a && l.to == b) || (l.from == b && l.to == a))
    }

    fn dispatch(&mut self) -> Result<()> {
        let grants = self.scheduler.dispatch(&self.scenario.topology, self.now)?;
        for grant in grants {
            self.start(grant)?;
        }
        Ok(())
    }

    fn start(&mut self, grant: Grant) -> Result<()> {
        let req = &grant.request;
        let spec = &self.scenario.requests[req.id as usize];
        self.events.push(NetEvent::Schedule {
            t_ms: self.now,
            request: req.id,
            action: grant.action.to_string(),
        });
        let (legs, relay) = match &grant.action {
            Action::Connect { .. } | Action::Dedicated => (vec![(req.src.clone(), req.dst.clone())], None),
            Action::RouteViaRelay { relay, .. } => (
                vec![(req.src.clone(), relay.clone()), (relay.clone(), req.dst.clone())],
                Some(relay.clone()),
            ),
            Action::Wait => unreachable!("waiting requests are not granted"),
        };
        let mut jobs = Vec::new();
        for (leg, (a, b)) in legs.iter().enumerate() {
            match self.link_index(a, b) {
                Some(i) => {
                    for k in 0..spec.sessions {
                        jobs.push((
                            i,
                            derive_seed(self.scenario.seed, &[0x22, req.id, leg as u64, k as u64]),
                        ));
                    }
                }
                None => self.fail(format!("request {}: no link between {a} and {b}", req.id)),
            }
        }
        let scenario = self.scenario;
        let results: Vec<Result<(usize, SessionOutcome)>> = std::thread::scope(|s| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|&(i, seed)| {
                    s.spawn(move || {
                        let link = &scenario.links[i];
                        run_session(&link.params, &scenario.intensity, &session_config(scenario, link), seed)
                            .map(|o| (i, o))
                            .with_context(|| format!("session on {}", link.params.name))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("session thread panicked"))
                .collect()
        });
        let mut sessions = Vec::new();
        for r in results {
            sessions.push(r?);
        }
        // legs run side by side, sessions on one leg back to back
        let mut per_link: BTreeMap<usize, u64> = BTreeMap::new();
        for (i, out) in &sessions {
            *per_link.entry(*i).or_default() += ms_for(out.pulses, &self.scenario.links[*i]);
        }
        let done_at = grant.ready_ms + per_link.values().copied().max().unwrap_or(0);
        let slot = self.running.len();
        self.running.push(Some(Running {
            grant,
            sessions,
            relay,
            relay_bytes: spec.relay_bytes,
        }));
        self.push(done_at, Ev::Done(slot));
        Ok(())
    }

    fn finish(&mut self, slot: usize) -> Result<()> {
        let run = self.running[slot].take().expect("grant finishes once");
        let id = run.grant.request.id;
        for (i, out) in &run.sessions {
            let link = &self.scenario.links[*i];
            self.next_provenance += 1;
            let provenance = self.next_provenance;
            self.events.push(NetEvent::Session {
                t_ms: self.now,
                request: id,
                link: link.params.name.clone(),
                pulses: out.pulses,
                qber: out.measured.e_mu,
                key_bytes: out.keys.final_key.len() as u64,
                keys_match: out.keys.final_key == out.keys.receiver_final_key,
                note: out.no_key.as_ref().map(|e| e.to_string()).unwrap_or_default(),
            });
            if out.keys.final_key != out.keys.receiver_final_key {
                self.fail(format!(
                    "request {id}: session on {} ended with unequal keys",
                    link.params.name
                ));
                continue;
            }
            let (from, to) = (link.from.clone(), link.to.clone());
            self.pool(&from, &to)
                .deposit(&from, &out.keys.final_key, &out.keys.receiver_final_key, provenance)?;
        }
        if let Some(relay) = &run.relay {
            let (src, dst) = (run.grant.request.src.clone(), run.grant.request.dst.clone());
            self.pool(&src, relay);
            self.pool(relay, &dst);
            self.pool(&src, &dst);
            let ar = &self.pools[&NodePair::new(&src, relay)?];
            let rb = &self.pools[&NodePair::new(relay, &dst)?];
            let composed = {
                let (mut g1, mut g2) = (ar.lock(), rb.lock());
                relay_compose(&mut g1, &mut g2, relay, run.relay_bytes)
            };
            match composed {
                Ok(outcome) => {
                    let end = &self.pools[&NodePair::new(&src, &dst)?];
                    let mut g = end.lock();
                    g.endpoint_mut(&src).expect("endpoint").deposit(&outcome.key_a, id);
                    g.endpoint_mut(&dst).expect("endpoint").deposit(&outcome.key_b, id);
                    drop(g);
                    self.events.push(NetEvent::Relay {
                        t_ms: self.now,
                        request: id,
                        relay: relay.clone(),
                        pair: NodePair::new(&src, &dst)?.to_string(),
                        bytes: outcome.key_a.len() as u64,
                    });
                }
                Err(FabricError::Key(KeyError::KeyExhausted { pair, shortfall })) => {
                    self.events.push(NetEvent::KeyExhausted {
                        t_ms: self.now,
                        pair,
                        shortfall,
                        context: format!("relay for request {id}"),
                    });
                }
                Err(e) => return Err(e.into()),
            }
        }
        self.scheduler.release(&run.grant)?;
        self.events.push(NetEvent::Release {
            t_ms: self.now,
            request: id,
        });
        self.dispatch()
    }

    fn message(&mut self, index: usize, seq: u32) -> Result<()> {
        let t = &self.scenario.traffic[index];
        let mut plaintext = vec![0u8; t.bytes];
        ChaCha8Rng::seed_from_u64(derive_seed(self.scenario.seed, &[0x33, index as u64, seq as u64]))
            .fill_bytes(&mut plaintext);
        let (from, to) = (t.from.clone(), t.to.clone());
        let replay_check = t.replay_check;
        let now = self.now;
        self.pool(&from, &to);
        let pool = &self.pools[&NodePair::new(&from, &to)?];
        let mut row = MessageRow {
            traffic: index,
            seq,
            t_ms: now,
            from: from.clone(),
            to: to.clone(),
            bytes: plaintext.len() as u64,
            offset: None,
            ok: false,
        };
        let mut replay = None;
        let mut exhausted = None;
        match pool.encrypt(&from, &plaintext) {
            Ok(msg) => {
                row.offset = Some(msg.offset);
                match pool.decrypt(&to, &msg) {
                    Ok(back) => row.ok = back == plaintext,
                    Err(e) => {
                        self.failures.push(format!("traffic {index}/{seq}: {e}"));
                    }
                }
                if replay_check {
                    let refused = matches!(pool.decrypt(&to, &msg), Err(KeyError::KeyReuseRefused { .. }));
                    replay = Some(refused);
                }
            }
            Err(KeyError::KeyExhausted { pair, shortfall }) => exhausted = Some((pair, shortfall)),
            Err(e) => self.failures.push(format!("traffic {index}/{seq}: {e}")),
        }
        if let Some((pair, shortfall)) = exhausted {
            self.events.push(NetEvent::KeyExhausted {
                t_ms: now,
                pair,
                shortfall,
                context: format!("traffic {index}/{seq}"),
            });
        }
        self.events.push(NetEvent::Message {
            t_ms: now,
            traffic: index,
            seq,
            from,
            to,
            bytes: row.bytes,
            offset: row.offset.unwrap_or(0),
            ok: row.ok,
        });
        if let Some(refused) = replay {
            self.replays_attempted += 1;
            if refused {
                self.replays_refused += 1;
            }
            self.events.push(NetEvent::Replay {
                t_ms: now,
                traffic: index,
                seq,
                refused,
            });
        }
        self.messages.push(row);
        Ok(())
    }
}

/// Runs the scenario to completion. `initial` pools (e.g. loaded from a
/// previous run) are used as the starting inventory.
pub fn run_network(scenario: &Scenario, initial: Vec<PairPools>) -> Result<NetworkOutcome> {
    let mut net = Net {
        scenario,
        scheduler: Scheduler::new(scenario.switch.clone(), scenario.reconfig_ms),
        pools: initial
            .into_iter()
            .map(|p| (p.pair().clone(), SharedPool::from_pools(p)))
            .collect(),
        queue: BinaryHeap::new(),
        seq: 0,
        running: Vec::new(),
        events: Vec::new(),
        messages: Vec::new(),
        failures: Vec::new(),
        replays_attempted: 0,
        replays_refused: 0,
        next_provenance: 0,
        now: 0,
    };
    for (i, r) in scenario.requests.iter().enumerate() {
        net.push(r.request.arrival_ms, Ev::Arrival(i));
    }
    for (i, t) in scenario.traffic.iter().enumerate() {
        for k in 0..t.count {
            net.push(t.at_ms + k as u64 * t.interval_ms, Ev::Message(i, k));
        }
    }
    while let Some(Reverse((t, ev, _))) = net.queue.pop() {
        net.now = t;
        match ev {
            Ev::Arrival(i) => {
                let req = scenario.requests[i].request.clone();
                net.events.push(NetEvent::Request {
                    t_ms: t,
                    request: req.id,
                    src: req.src.clone(),
                    dst: req.dst.clone(),
                    priority: req.priority,
                });
                if let Err(e) = net.scheduler.submit(&scenario.topology, req) {
                    net.fail(format!("request {i}: {e}"));
                    continue;
                }
                net.dispatch()?;
            }
            Ev::Done(slot) => net.finish(slot)?,
            Ev::Message(i, k) => net.message(i, k)?,
        }
    }
    for r in net.scheduler.pending().to_vec() {
        net.fail(format!("request {} was never scheduled", r.id));
    }

    let pools: BTreeMap<NodePair, PairPools> = net.pools.into_iter().map(|(k, v)| (k, v.into_inner())).collect();
    let audit = audit(&pools, &net.messages);
    let budgets = pools.values().map(budget).collect();
    Ok(NetworkOutcome {
        events: net.events,
        messages: net.messages,
        budgets,
        audit,
        replays_attempted: net.replays_attempted,
        replays_refused: net.replays_refused,
        failures: net.failures,
        pools,
        end_ms: net.now,
    })
}

fn budget(p: &PairPools) -> PairBudget {
    PairBudget {
        pair: p.pair().to_string(),
        deposited: p.a.total(),
        spent_a: p.a.spent(),
        spent_b: p.b.spent(),
        left_forward: p.a.available(Lane::Forward),
        left_backward: p.a.available(Lane::Backward),
    }
}

/// Checks every endpoint copy's usage log for a byte handed out twice,
/// that both copies of each pool agree, and that no two messages of a pair
/// claim the same offset.
pub fn audit(pools: &BTreeMap<NodePair, PairPools>, messages: &[MessageRow]) -> Audit {
    let mut a = Audit::default();
    for p in pools.values() {
        for copy in [&p.a, &p.b] {
            let mut seen = BTreeSet::new();
            for u in copy.usage() {
                for j in 0..u.len {
                    a.bytes_checked += 1;
                    if !seen.insert(u.offset + 2 * j) {
                        a.reused += 1;
                    }
                }
            }
        }
        let sent = |copy: &qkdnet_core::keystore::KeyPool, kind| {
            copy.usage()
                .iter()
                .filter(|u| u.kind == kind)
                .map(|u| (u.lane, u.offset, u.len))
                .collect::<Vec<_>>()
        };
        let agree = [Lane::Forward, Lane::Backward]
            .iter()
            .all(|&l| p.a.cursor(l) == p.b.cursor(l));
        let mut a_sent = sent(&p.a, UseKind::Send);
        let mut b_recv = sent(&p.b, UseKind::Receive);
        let mut b_sent = sent(&p.b, UseKind::Send);
        let mut a_recv = sent(&p.a, UseKind::Receive);
        for v in [&mut a_sent, &mut b_recv, &mut b_sent, &mut a_recv] {
            v.sort();
        }
        // relay draws appear as sends on the relay's copy and receives on the peer's
        if !agree || a_sent != b_recv || b_sent != a_recv {
            a.desynchronized.push(p.pair().to_string());
        }
    }
    let mut claimed = BTreeSet::new();
    for m in messages {
        if let Some(off) = m.offset {
            let pair = NodePair::new(&m.from, &m.to).expect("distinct endpoints");
            for j in 0..m.bytes {
                if !claimed.insert((pair.clone(), off + 2 * j)) {
                    a.message_collisions += 1;
                }
            }
        }
    }
    a
}
