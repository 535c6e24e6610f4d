//! Directed tree networks: one source, junctions with a single ingoing arc,
//! and demand nodes as leaves.

use crate::damping::DampingShape;
use crate::timefuncs::TimeFunction;
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Source,
    Junction,
    Demand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub kind: NodeKind,
}

impl NodeSpec {
    pub fn new(id: impl Into<String>, kind: NodeKind) -> Self {
        Self {
            id: id.into(),
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArcSpec {
    pub id: String,
    pub tail: String,
    pub head: String,
    pub length: f64,
    pub velocity: TimeFunction,
    pub damping_factor: TimeFunction,
    pub damping: DampingShape,
}

impl ArcSpec {
    /// Unit-length arc without damping.
    pub fn new(
        id: impl Into<String>,
        tail: impl Into<String>,
        head: impl Into<String>,
        velocity: TimeFunction,
    ) -> Self {
        Self {
            id: id.into(),
            tail: tail.into(),
            head: head.into(),
            length: 1.0,
            velocity,
            damping_factor: TimeFunction::constant(0.0),
            damping: DampingShape::None,
        }
    }

    pub fn with_damping(mut self, factor: TimeFunction, shape: DampingShape) -> Self {
        self.damping_factor = factor;
        self.damping = shape;
        self
    }

    pub fn with_length(mut self, length: f64) -> Self {
        self.length = length;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    DuplicateNode(String),
    DuplicateArc(String),
    UnknownNode { arc: String, node: String },
    SourceCount(usize),
    SourceInDegree { node: String, degree: usize },
    SourceOutDegree { node: String, degree: usize },
    JunctionInDegree { node: String, degree: usize },
    JunctionWithoutOutgoing { node: String },
    DemandInDegree { node: String, degree: usize },
    DemandWithOutgoing { node: String, degree: usize },
    NoDemandNodes,
    Cycle { node: String },
    Unreachable { node: String },
    NonPositiveLength { arc: String, length: f64 },
    VelocityNotPositive { arc: String, lower_bound: f64 },
    NegativeDampingFactor { arc: String, lower_bound: f64 },
    NonFiniteCoefficients { arc: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            DuplicateNode(id) => write!(f, "duplicate node id {id}"),
            DuplicateArc(id) => write!(f, "duplicate arc id {id}"),
            UnknownNode { arc, node } => write!(f, "arc {arc} references unknown node {node}"),
            SourceCount(n) => write!(f, "network must have exactly one source, found {n}"),
            SourceInDegree { node, degree } => {
                write!(f, "source {node} has {degree} ingoing arcs, expected 0")
            }
            SourceOutDegree { node, degree } => {
                write!(f, "source {node} has {degree} outgoing arcs, expected 1")
            }
            JunctionInDegree { node, degree } => {
                write!(
                    f,
                    "junction in-degree ≠ 1: {node} has {degree} ingoing arcs"
                )
            }
            JunctionWithoutOutgoing { node } => write!(f, "junction {node} has no outgoing arc"),
            DemandInDegree { node, degree } => {
                write!(
                    f,
                    "demand node {node} has {degree} ingoing arcs, expected 1"
                )
            }
            DemandWithOutgoing { node, degree } => {
                write!(
                    f,
                    "demand node {node} has {degree} outgoing arcs, expected none"
                )
            }
            NoDemandNodes => write!(f, "network has no demand nodes"),
            Cycle { node } => write!(f, "cycle through node {node}"),
            Unreachable { node } => write!(f, "node {node} is not reachable from the source"),
            NonPositiveLength { arc, length } => {
                write!(f, "arc {arc} has non-positive length {length}")
            }
            VelocityNotPositive { arc, lower_bound } => write!(
                f,
                "velocity on arc {arc} is not provably positive (lower bound {lower_bound})"
            ),
            NegativeDampingFactor { arc, lower_bound } => write!(
                f,
                "damping factor on arc {arc} may become negative (lower bound {lower_bound})"
            ),
            NonFiniteCoefficients { arc } => write!(f, "arc {arc} has non-finite coefficients"),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network validation failed: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("unknown {kind} id {id}")]
    UnknownId { kind: &'static str, id: String },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Unvalidated network description.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TreeNetwork {
    pub nodes: Vec<NodeSpec>,
    pub arcs: Vec<ArcSpec>,
}

impl TreeNetwork {
    pub fn new(nodes: Vec<NodeSpec>, arcs: Vec<ArcSpec>) -> Self {
        Self { nodes, arcs }
    }

    /// All structural and coefficient violations, reported together.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut index: HashMap<&str, usize> = HashMap::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if index.insert(n.id.as_str(), i).is_some() {
                out.push(Violation::DuplicateNode(n.id.clone()));
            }
        }
        let mut arc_ids: HashMap<&str, ()> = HashMap::new();
        let mut indeg = vec![0usize; self.nodes.len()];
        let mut outdeg = vec![0usize; self.nodes.len()];
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); self.nodes.len()];

        for a in &self.arcs {
            if arc_ids.insert(a.id.as_str(), ()).is_some() {
                out.push(Violation::DuplicateArc(a.id.clone()));
            }
            let tail = index.get(a.tail.as_str()).copied();
            let head = index.get(a.head.as_str()).copied();
            if tail.is_none() {
                out.push(Violation::UnknownNode {
                    arc: a.id.clone(),
                    node: a.tail.clone(),
                });
            }
            if head.is_none() {
                out.push(Violation::UnknownNode {
                    arc: a.id.clone(),
                    node: a.head.clone(),
                });
            }
            if let (Some(t), Some(h)) = (tail, head) {
                outdeg[t] += 1;
                indeg[h] += 1;
                succ[t].push(h);
            }
            if !a.velocity.is_finite() || !a.damping_factor.is_finite() || !a.length.is_finite() {
                out.push(Violation::NonFiniteCoefficients { arc: a.id.clone() });
                continue;
            }
            if !(a.length > 0.0) {
                out.push(Violation::NonPositiveLength {
                    arc: a.id.clone(),
                    length: a.length,
                });
            }
            let vb = a.velocity.lower_bound();
            if !(vb > 0.0) {
                out.push(Violation::VelocityNotPositive {
                    arc: a.id.clone(),
                    lower_bound: vb,
                });
            }
            let mb = a.damping_factor.lower_bound();
            if !(mb >= 0.0) {
                out.push(Violation::NegativeDampingFactor {
                    arc: a.id.clone(),
                    lower_bound: mb,
                });
            }
        }

        let sources: Vec<usize> = (0..self.nodes.len())
            .filter(|&i| self.nodes[i].kind == NodeKind::Source)
            .collect();
        if sources.len() != 1 {
            out.push(Violation::SourceCount(sources.len()));
        }
        if !self.nodes.iter().any(|n| n.kind == NodeKind::Demand) {
            out.push(Violation::NoDemandNodes);
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let id = n.id.clone();
            match n.kind {
                NodeKind::Source => {
                    if indeg[i] != 0 {
                        out.push(Violation::SourceInDegree {
                            node: id.clone(),
                            degree: indeg[i],
                        });
                    }
                    if outdeg[i] != 1 {
                        out.push(Violation::SourceOutDegree {
                            node: id,
                            degree: outdeg[i],
                        });
                    }
                }
                NodeKind::Junction => {
                    if indeg[i] != 1 {
                        out.push(Violation::JunctionInDegree {
                            node: id.clone(),
                            degree: indeg[i],
                        });
                    }
                    if outdeg[i] == 0 {
                        out.push(Violation::JunctionWithoutOutgoing { node: id });
                    }
                }
                NodeKind::Demand => {
                    if indeg[i] != 1 {
                        out.push(Violation::DemandInDegree {
                            node: id.clone(),
                            degree: indeg[i],
                        });
                    }
                    if outdeg[i] != 0 {
                        out.push(Violation::DemandWithOutgoing {
                            node: id,
                            degree: outdeg[i],
                        });
                    }
                }
            }
        }

        // Cycle detection by iterative three-colour DFS.
        let mut colour = vec![0u8; self.nodes.len()];
        for start in 0..self.nodes.len() {
            if colour[start] != 0 {
                continue;
            }
            let mut stack = vec![(start, 0usize)];
            colour[start] = 1;
            while let Some(&mut (v, ref mut next)) = stack.last_mut() {
                if *next < succ[v].len() {
                    let w = succ[v][*next];
                    *next += 1;
                    match colour[w] {
                        0 => {
                            colour[w] = 1;
                            stack.push((w, 0));
                        }
                        1 => {
                            let node = self.nodes[w].id.clone();
                            if !out
                                .iter()
                                .any(|x| matches!(x, Violation::Cycle { node: n } if *n == node))
                            {
                                out.push(Violation::Cycle { node });
                            }
                        }
                        _ => {}
                    }
                } else {
                    colour[v] = 2;
                    stack.pop();
                }
            }
        }

        if let [source] = sources[..] {
            let mut seen = vec![false; self.nodes.len()];
            let mut queue = VecDeque::from([source]);
            seen[source] = true;
            while let Some(v) = queue.pop_front() {
                for &w in &succ[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
            for (i, n) in self.nodes.iter().enumerate() {
                if !seen[i] {
                    out.push(Violation::Unreachable { node: n.id.clone() });
                }
            }
        }
        out
    }

    pub fn into_validated(self) -> Result<Network, NetworkError> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(NetworkError::Invalid(violations));
        }
        Ok(Network::build(self))
    }
}

/// A validated tree network with index-based adjacency.
#[derive(Debug, Clone)]
pub struct Network {
    spec: TreeNetwork,
    node_index: HashMap<String, usize>,
    arc_tail: Vec<usize>,
    arc_head: Vec<usize>,
    out_arcs: Vec<Vec<usize>>,
    in_arc: Vec<Option<usize>>,
    source: usize,
    root_arc: usize,
    arc_order: Vec<usize>,
    node_order: Vec<usize>,
    demand_nodes: Vec<usize>,
    paths: Vec<Vec<usize>>,
}

impl Network {
    fn build(spec: TreeNetwork) -> Self {
        let node_index: HashMap<String, usize> = spec
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.id.clone(), i))
            .collect();
        let n = spec.nodes.len();
        let mut out_arcs = vec![Vec::new(); n];
        let mut in_arc = vec![None; n];
        let mut arc_tail = Vec::with_capacity(spec.arcs.len());
        let mut arc_head = Vec::with_capacity(spec.arcs.len());
        for (k, a) in spec.arcs.iter().enumerate() {
            let t = node_index[&a.tail];
            let h = node_index[&a.head];
            arc_tail.push(t);
            arc_head.push(h);
            out_arcs[t].push(k);
            in_arc[h] = Some(k);
        }
        let source = spec
            .nodes
            .iter()
            .position(|x| x.kind == NodeKind::Source)
            .expect("validated network has a source");
        let root_arc = out_arcs[source][0];

        // Breadth-first order: every arc comes after its parent arc.
        let mut arc_order = Vec::with_capacity(spec.arcs.len());
        let mut node_order = vec![source];
        let mut queue = VecDeque::from([root_arc]);
        while let Some(a) = queue.pop_front() {
            arc_order.push(a);
            let h = arc_head[a];
            node_order.push(h);
            queue.extend(out_arcs[h].iter().copied());
        }

        let demand_nodes: Vec<usize> = node_order
            .iter()
            .copied()
            .filter(|&v| spec.nodes[v].kind == NodeKind::Demand)
            .collect();
        let paths = demand_nodes
            .iter()
            .map(|&d| {
                let mut path = Vec::new();
                let mut v = d;
                while let Some(a) = in_arc[v] {
                    path.push(a);
                    v = arc_tail[a];
                }
                path.reverse();
                path
            })
            .collect();

        Self {
            spec,
            node_index,
            arc_tail,
            arc_head,
            out_arcs,
            in_arc,
            source,
            root_arc,
            arc_order,
            node_order,
            demand_nodes,
            paths,
        }
    }

    pub fn spec(&self) -> &TreeNetwork {
        &self.spec
    }

    pub fn arc(&self, k: usize) -> &ArcSpec {
        &self.spec.arcs[k]
    }

    pub fn arcs(&self) -> &[ArcSpec] {
        &self.spec.arcs
    }

    pub fn node(&self, v: usize) -> &NodeSpec {
        &self.spec.nodes[v]
    }

    pub fn node_count(&self) -> usize {
        self.spec.nodes.len()
    }

    pub fn node_id(&self, id: &str) -> Result<usize, NetworkError> {
        self.node_index
            .get(id)
            .copied()
            .ok_or_else(|| NetworkError::UnknownId {
                kind: "node",
                id: id.to_string(),
            })
    }

    pub fn arc_id(&self, id: &str) -> Result<usize, NetworkError> {
        self.spec
            .arcs
            .iter()
            .position(|a| a.id == id)
            .ok_or_else(|| NetworkError::UnknownId {
                kind: "arc",
                id: id.to_string(),
            })
    }

    pub fn source(&self) -> usize {
        self.source
    }

    pub fn root_arc(&self) -> usize {
        self.root_arc
    }

    pub fn tail(&self, arc: usize) -> usize {
        self.arc_tail[arc]
    }

    pub fn head(&self, arc: usize) -> usize {
        self.arc_head[arc]
    }

    pub fn out_arcs(&self, node: usize) -> &[usize] {
        &self.out_arcs[node]
    }

    pub fn in_arc(&self, node: usize) -> Option<usize> {
        self.in_arc[node]
    }

    pub fn is_demand(&self, node: usize) -> bool {
        self.spec.nodes[node].kind == NodeKind::Demand
    }

    /// Demand nodes in breadth-first order; this order defines demand slots.
    pub fn demand_nodes(&self) -> &[usize] {
        &self.demand_nodes
    }

    pub fn demand_slot(&self, node: usize) -> Option<usize> {
        self.demand_nodes.iter().position(|&d| d == node)
    }

    /// Junction nodes (nodes with an ingoing and at least one outgoing arc).
    pub fn junctions(&self) -> Vec<usize> {
        self.node_order
            .iter()
            .copied()
            .filter(|&v| self.spec.nodes[v].kind == NodeKind::Junction)
            .collect()
    }

    /// Arc sequences from the source to each demand node, in slot order.
    pub fn root_to_leaf_paths(&self) -> &[Vec<usize>] {
        &self.paths
    }

    /// Arcs from the source down to `node` (empty for the source).
    pub fn path_to(&self, node: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut v = node;
        while let Some(a) = self.in_arc[v] {
            path.push(a);
            v = self.arc_tail[a];
        }
        path.reverse();
        path
    }

    /// Nodes with every node after its parent.
    pub fn topological_order(&self) -> &[usize] {
        &self.node_order
    }

    /// Arcs with every arc after the arc feeding its tail.
    pub fn arc_order(&self) -> &[usize] {
        &self.arc_order
    }

    /// The same network with every arc's damping shape replaced.
    pub fn with_damping(&self, shape: DampingShape) -> Network {
        let mut copy = self.clone();
        for a in &mut copy.spec.arcs {
            a.damping = shape;
        }
        copy
    }
}
