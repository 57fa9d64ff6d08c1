//! Network layer: topology, the all-pass switch, connection scheduling and
//! trusted-relay key composition.

mod relay;
mod schedule;
mod switch;
mod topology;

pub use relay::{relay_compose, Consumption, RelayMessage, RelayOutcome};
pub use schedule::{
    schedule, Action, ConnectionRequest, Grant, Planned, ScheduleEvent, Scheduler, DEFAULT_RECONFIG_MS,
};
pub use switch::{PortStatus, SwitchState, DEFAULT_PORT_COUNT};
pub use topology::{FabricLink, NetworkTopology, Node};

use alloc::string::String;
use thiserror::Error;

use crate::keystore::KeyError;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FabricError {
    #[error("port {port} does not exist")]
    PortOutOfRange { port: usize },
    #[error("port busy: {port}")]
    PortBusy { port: usize },
    #[error("port offline: {port}")]
    PortOffline { port: usize },
    #[error("cannot connect port {port} to itself")]
    SelfConnection { port: usize },
    #[error("port {port} is not connected")]
    NotConnected { port: usize },
    #[error("unroutable: {0}")]
    Unroutable(String),
    #[error("invalid request: {0}")]
    InvalidRequest(&'static str),
    #[error("invalid topology: {0}")]
    InvalidTopology(&'static str),
    #[error(transparent)]
    Key(#[from] KeyError),
}
