use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use super::{FabricError, NetworkTopology, SwitchState};

pub const DEFAULT_RECONFIG_MS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectionRequest {
    pub id: u64,
    pub src: String,
    pub dst: String,
    pub arrival_ms: u64,
    /// Larger is served first.
    pub priority: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Join the two nodes' switch ports.
    Connect {
        ports: (usize, usize),
    },
    /// The nodes share a line that does not pass through the switch.
    Dedicated,
    /// Generate key on both legs and compose at `relay`. `ports` is the
    /// switch pair needed by the switched leg, if there is one.
    RouteViaRelay {
        relay: String,
        loss_db: f64,
        ports: Option<(usize, usize)>,
    },
    Wait,
}

impl Action {
    pub fn ports(&self) -> Option<(usize, usize)> {
        match self {
            Action::Connect { ports } => Some(*ports),
            Action::RouteViaRelay { ports, .. } => *ports,
            _ => None,
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Connect { ports } => write!(f, "connect {}-{}", ports.0, ports.1),
            Action::Dedicated => write!(f, "dedicated"),
            Action::RouteViaRelay { relay, loss_db, ports } => {
                write!(f, "relay {relay} ({loss_db:.2} dB)")?;
                if let Some((a, b)) = ports {
                    write!(f, " connect {a}-{b}")?;
                }
                Ok(())
            }
            Action::Wait => write!(f, "wait"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Planned {
    pub request: ConnectionRequest,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq)]
enum Route {
    Switched((usize, usize)),
    Dedicated,
    Relay {
        relay: String,
        loss_db: f64,
        ports: Option<(usize, usize)>,
    },
}

fn validate(req: &ConnectionRequest, topo: &NetworkTopology) -> Result<(), FabricError> {
    topo.require(&req.src)?;
    topo.require(&req.dst)?;
    if req.src == req.dst {
        return Err(FabricError::InvalidRequest("source equals destination"));
    }
    Ok(())
}

/// Candidate routes in preference order.
fn routes(req: &ConnectionRequest, topo: &NetworkTopology) -> Result<Vec<Route>, FabricError> {
    let (src, dst) = (topo.require(&req.src)?, topo.require(&req.dst)?);
    if let (Some(a), Some(b)) = (src.switch_port, dst.switch_port) {
        return Ok(Vec::from([Route::Switched((a.min(b), a.max(b)))]));
    }
    if topo.link(&src.name, &dst.name).is_some() {
        return Ok(Vec::from([Route::Dedicated]));
    }
    let mut out = Vec::new();
    for relay in topo.nodes().iter().filter(|n| n.relay) {
        if relay.name == src.name || relay.name == dst.name {
            continue;
        }
        let (Some(l1), Some(l2)) = (topo.link(&src.name, &relay.name), topo.link(&relay.name, &dst.name)) else {
            continue;
        };
        let legs = [(src, l1), (dst, l2)];
        let mut ports = None;
        for (end, _) in legs {
            if let (Some(p), Some(q)) = (end.switch_port, relay.switch_port) {
                ports = Some((p.min(q), p.max(q)));
            }
        }
        out.push(Route::Relay {
            relay: relay.name.clone(),
            loss_db: l1.params.total_loss_db() + l2.params.total_loss_db(),
            ports,
        });
    }
    out.sort_by(|a, b| match (a, b) {
        (
            Route::Relay {
                relay: ra, loss_db: la, ..
            },
            Route::Relay {
                relay: rb, loss_db: lb, ..
            },
        ) => la.total_cmp(lb).then_with(|| ra.cmp(rb)),
        _ => core::cmp::Ordering::Equal,
    });
    if out.is_empty() {
        return Err(FabricError::Unroutable(req.dst.to_string()));
    }
    Ok(out)
}

fn order(queue: &[ConnectionRequest]) -> Vec<&ConnectionRequest> {
    let mut sorted: Vec<&ConnectionRequest> = queue.iter().collect();
    sorted.sort_by(|a, b| {
        b.priority
            .cmp(&a.priority)
            .then(a.arrival_ms.cmp(&b.arrival_ms))
            .then(a.id.cmp(&b.id))
    });
    sorted
}

/// Plans every queued request against the current switch state, highest
/// priority first and FIFO within a priority. Each request takes its ports
/// as soon as both are idle; a request whose ports are taken waits without
/// blocking later ones. Among relay routes the one with least total loss
/// whose ports are free is taken.
pub fn schedule(
    queue: &[ConnectionRequest],
    topo: &NetworkTopology,
    switch: &SwitchState,
) -> Result<Vec<Planned>, FabricError> {
    for req in queue {
        validate(req, topo)?;
    }
    let mut sw = switch.clone();
    let mut plan = Vec::with_capacity(queue.len());
    for req in order(queue) {
        let candidates = routes(req, topo)?;
        let mut chosen = None;
        for route in &candidates {
            let ports = match route {
                Route::Switched(p) => Some(*p),
                Route::Relay { ports, .. } => *ports,
                Route::Dedicated => None,
            };
            if ports.is_none_or(|(a, b)| sw.is_idle(a) && sw.is_idle(b)) {
                chosen = Some(route.clone());
                break;
            }
        }
        let action = match chosen {
            Some(Route::Switched(ports)) => Action::Connect { ports },
            Some(Route::Dedicated) => Action::Dedicated,
            Some(Route::Relay { relay, loss_db, ports }) => Action::RouteViaRelay { relay, loss_db, ports },
            None => Action::Wait,
        };
        if let Some((a, b)) = action.ports() {
            sw.connect(a, b)?;
        }
        plan.push(Planned {
            request: req.clone(),
            action,
        });
    }
    Ok(plan)
}

/// One scheduling decision, as written to the event log.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleEvent {
    pub time_ms: u64,
    pub request: ConnectionRequest,
    pub action: Action,
}

/// A granted request. The channel is usable from `ready_ms`, after the
/// switch has been reconfigured.
#[derive(Debug, Clone, PartialEq)]
pub struct Grant {
    pub request: ConnectionRequest,
    pub action: Action,
    pub ready_ms: u64,
}

/// The single authority over the switch: requests come in, grants go out,
/// finished sessions release their ports.
#[derive(Debug, Clone)]
pub struct Scheduler {
    switch: SwitchState,
    reconfig_ms: u64,
    pending: Vec<ConnectionRequest>,
    waiting_logged: Vec<u64>,
    log: Vec<ScheduleEvent>,
}

impl Scheduler {
    pub fn new(switch: SwitchState, reconfig_ms: u64) -> Self {
        Self {
            switch,
            reconfig_ms,
            pending: Vec::new(),
            waiting_logged: Vec::new(),
            log: Vec::new(),
        }
    }

    pub fn switch(&self) -> &SwitchState {
        &self.switch
    }

    pub fn switch_mut(&mut self) -> &mut SwitchState {
        &mut self.switch
    }

    pub fn pending(&self) -> &[ConnectionRequest] {
        &self.pending
    }

    pub fn log(&self) -> &[ScheduleEvent] {
        &self.log
    }

    pub fn submit(&mut self, topo: &NetworkTopology, request: ConnectionRequest) -> Result<(), FabricError> {
        validate(&request, topo)?;
        routes(&request, topo)?;
        self.pending.push(request);
        Ok(())
    }

    /// Plans the queue at `now_ms` and applies the grants to the switch.
    pub fn dispatch(&mut self, topo: &NetworkTopology, now_ms: u64) -> Result<Vec<Grant>, FabricError> {
        let plan = schedule(&self.pending, topo, &self.switch)?;
        let mut grants = Vec::new();
        let mut still = Vec::new();
        for Planned { request, action } in plan {
            if action == Action::Wait {
                if !self.waiting_logged.contains(&request.id) {
                    self.waiting_logged.push(request.id);
                    self.log.push(ScheduleEvent {
                        time_ms: now_ms,
                        request: request.clone(),
                        action: Action::Wait,
                    });
                }
                still.push(request);
                continue;
            }
            let ready_ms = match action.ports() {
                Some((a, b)) => {
                    self.switch.connect(a, b)?;
                    now_ms + self.reconfig_ms
                }
                None => now_ms,
            };
            self.log.push(ScheduleEvent {
                time_ms: now_ms,
                request: request.clone(),
                action: action.clone(),
            });
            grants.push(Grant {
                request,
                action,
                ready_ms,
            });
        }
        // keep arrival order among the waiting
        still.sort_by(|a, b| a.arrival_ms.cmp(&b.arrival_ms).then(a.id.cmp(&b.id)));
        self.pending = still;
        Ok(grants)
    }

    /// Frees the switch ports held by a finished grant.
    pub fn release(&mut self, grant: &Grant) -> Result<(), FabricError> {
        if let Some((a, _)) = grant.action.ports() {
            self.switch.disconnect(a)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::Node;
    use crate::phys::LinkParams;

    fn topo() -> NetworkTopology {
        let mut t = NetworkTopology::new();
        for (i, n) in ["USTC", "Wanan", "Meilan", "Wanxi"].iter().enumerate() {
            t.add_node(Node {
                relay: *n == "USTC",
                ..Node::terminal(n, Some(i))
            })
            .unwrap();
        }
        t.add_node(Node::terminal("Feixi", None)).unwrap();
        let mut link = |a: &str, b: &str, db: f64| {
            let p = LinkParams {
                fiber_loss_db: db,
                ..LinkParams::ideal(alloc::format!("{a}-{b}"))
            };
            t.add_link(a, b, p).unwrap();
        };
        link("Feixi", "USTC", 17.0);
        link("USTC", "Wanxi", 5.6);
        link("Wanan", "Meilan", 5.5);
        t
    }

    fn req(id: u64, src: &str, dst: &str, priority: u32) -> ConnectionRequest {
        ConnectionRequest {
            id,
            src: src.into(),
            dst: dst.into(),
            arrival_ms: id,
            priority,
        }
    }

    #[test]
    fn direct_connect() {
        let plan = schedule(&[req(0, "Wanan", "Meilan", 0)], &topo(), &SwitchState::default()).unwrap();
        assert_eq!(plan[0].action, Action::Connect { ports: (1, 2) });
    }

    #[test]
    fn feixi_goes_through_ustc() {
        let plan = schedule(&[req(0, "Feixi", "Wanxi", 0)], &topo(), &SwitchState::default()).unwrap();
        match &plan[0].action {
            Action::RouteViaRelay { relay, loss_db, ports } => {
                assert_eq!(relay, "USTC");
                assert!((loss_db - 22.6).abs() < 1e-9);
                assert_eq!(*ports, Some((0, 3)));
            }
            other => panic!("unexpected {other:?}"),
        }
        let plan = schedule(&[req(0, "Feixi", "USTC", 0)], &topo(), &SwitchState::default()).unwrap();
        assert_eq!(plan[0].action, Action::Dedicated);
    }

    #[test]
    fn shared_port_waits() {
        let plan = schedule(
            &[req(0, "Wanan", "Wanxi", 0), req(1, "Meilan", "Wanxi", 0)],
            &topo(),
            &SwitchState::default(),
        )
        .unwrap();
        assert_eq!(plan[0].action, Action::Connect { ports: (1, 3) });
        assert_eq!(plan[1].action, Action::Wait);
    }

    #[test]
    fn priority_beats_arrival() {
        let plan = schedule(
            &[req(0, "Wanan", "Wanxi", 0), req(1, "Meilan", "Wanxi", 5)],
            &topo(),
            &SwitchState::default(),
        )
        .unwrap();
        assert_eq!(plan[0].request.id, 1);
        assert_eq!(plan[0].action, Action::Connect { ports: (2, 3) });
        assert_eq!(plan[1].action, Action::Wait);
    }

    #[test]
    fn waiting_request_does_not_block_idle_ports() {
        let mut sw = SwitchState::default();
        sw.connect(3, 7).unwrap();
        let plan = schedule(
            &[req(0, "Wanan", "Wanxi", 0), req(1, "Wanan", "Meilan", 0)],
            &topo(),
            &sw,
        )
        .unwrap();
        assert_eq!(plan[0].action, Action::Wait);
        assert_eq!(plan[1].action, Action::Connect { ports: (1, 2) });
    }

    #[test]
    fn unknown_node_is_unroutable() {
        let err = schedule(&[req(0, "Hefei", "USTC", 0)], &topo(), &SwitchState::default()).unwrap_err();
        assert_eq!(err, FabricError::Unroutable("Hefei".into()));
    }

    #[test]
    fn scheduler_grants_after_release() {
        let t = topo();
        let mut s = Scheduler::new(SwitchState::default(), DEFAULT_RECONFIG_MS);
        s.submit(&t, req(0, "Wanan", "Wanxi", 0)).unwrap();
        s.submit(&t, req(1, "Meilan", "Wanxi", 0)).unwrap();
        let g = s.dispatch(&t, 100).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].ready_ms, 110);
        assert_eq!(s.pending().len(), 1);
        s.release(&g[0]).unwrap();
        let g2 = s.dispatch(&t, 500).unwrap();
        assert_eq!(g2[0].request.id, 1);
        assert!(s.pending().is_empty());
        assert_eq!(s.log().len(), 3);
    }
}
