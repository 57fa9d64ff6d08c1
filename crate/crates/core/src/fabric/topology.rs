use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::FabricError;
use crate::keystore::NodePair;
use crate::phys::LinkParams;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub terminal: bool,
    pub relay: bool,
    pub switch_port: Option<usize>,
}

impl Node {
    pub fn terminal(name: &str, switch_port: Option<usize>) -> Self {
        Self {
            name: name.to_string(),
            terminal: true,
            relay: false,
            switch_port,
        }
    }
}

/// A fiber path between two nodes. For switch-attached nodes it runs through
/// the switch; otherwise it is a dedicated line.
#[derive(Debug, Clone, PartialEq)]
pub struct FabricLink {
    pub pair: NodePair,
    pub params: LinkParams,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NetworkTopology {
    nodes: Vec<Node>,
    links: Vec<FabricLink>,
}

impl NetworkTopology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self, node: Node) -> Result<(), FabricError> {
        if self.node(&node.name).is_some() {
            return Err(FabricError::InvalidTopology("duplicate node name"));
        }
        if let Some(port) = node.switch_port {
            if self.nodes.iter().any(|n| n.switch_port == Some(port)) {
                return Err(FabricError::InvalidTopology("switch port attached to two nodes"));
            }
        }
        self.nodes.push(node);
        Ok(())
    }

    pub fn add_link(&mut self, a: &str, b: &str, params: LinkParams) -> Result<(), FabricError> {
        for n in [a, b] {
            if self.node(n).is_none() {
                return Err(FabricError::Unroutable(n.to_string()));
            }
        }
        let pair = NodePair::new(a, b).map_err(|_| FabricError::InvalidTopology("link from a node to itself"))?;
        if self.link(a, b).is_some() {
            return Err(FabricError::InvalidTopology("duplicate link"));
        }
        params
            .validate()
            .map_err(|_| FabricError::InvalidTopology("invalid link parameters"))?;
        self.links.push(FabricLink { pair, params });
        Ok(())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[FabricLink] {
        &self.links
    }

    pub fn node(&self, name: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&Node, FabricError> {
        self.node(name).ok_or_else(|| FabricError::Unroutable(name.to_string()))
    }

    pub fn link(&self, a: &str, b: &str) -> Option<&FabricLink> {
        let pair = NodePair::new(a, b).ok()?;
        self.links.iter().find(|l| l.pair == pair)
    }

    pub fn port_of(&self, name: &str) -> Option<usize> {
        self.node(name).and_then(|n| n.switch_port)
    }

    pub fn node_at_port(&self, port: usize) -> Option<&Node> {
        self.nodes.iter().find(|n| n.switch_port == Some(port))
    }
}
