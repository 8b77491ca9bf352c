//! Grow graphs past a model's size ceiling by joining valid subgraphs.
//!
//! Each new subgraph is linked to the graph built so far through junction
//! edges between two node types that may be adjacent. Adding an allowed
//! edge can only satisfy requirements, never break them, so valid parts
//! joined this way stay valid.

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::graph::{GraphState, TypeCode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct JunctionRule {
    /// Type of the endpoint inside the new subgraph.
    pub from_type: TypeCode,
    /// Type of the endpoint in the graph built so far.
    pub to_type: TypeCode,
    pub edges_per_subgraph: usize,
}

impl JunctionRule {
    pub fn new(cs: &ConstraintSet, from_type: TypeCode, to_type: TypeCode) -> Result<Self> {
        let rule = Self { from_type, to_type, edges_per_subgraph: 1 };
        rule.check(cs)?;
        Ok(rule)
    }

    /// Rule from type names or aliases, e.g. `("Converter", "Pool")`.
    pub fn by_name(cs: &ConstraintSet, from: &str, to: &str) -> Result<Self> {
        let code = |name: &str| {
            cs.type_code(name)
                .ok_or_else(|| Error::Composition(format!("unknown node type `{name}` in junction rule")))
        };
        Self::new(cs, code(from)?, code(to)?)
    }

    pub fn with_edges(mut self, edges: usize) -> Self {
        self.edges_per_subgraph = edges;
        self
    }

    pub fn check(&self, cs: &ConstraintSet) -> Result<()> {
        let k = cs.num_types() as TypeCode;
        if self.from_type >= k || self.to_type >= k {
            return Err(Error::Composition("junction rule names a type outside the constraint set".into()));
        }
        if !cs.edge_allowed(self.from_type, self.to_type) {
            return Err(Error::Composition(format!(
                "junction {} - {} is not an allowed edge",
                cs.type_name(self.from_type),
                cs.type_name(self.to_type)
            )));
        }
        if self.edges_per_subgraph == 0 {
            return Err(Error::Composition("a junction rule must add at least one edge".into()));
        }
        Ok(())
    }
}

/// Node address inside a composite: (subgraph index, node index), both 0-based.
pub type NodeRef = (usize, usize);

/// Subgraphs (padding stripped) plus the junction edges between them.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositeGraph {
    pub subgraphs: Vec<GraphState>,
    pub junctions: Vec<(NodeRef, NodeRef)>,
}

/// Display name of a node: 1-based subgraph and node numbers joined by `-`.
pub fn node_name(node: NodeRef) -> String {
    format!("{}-{}", node.0 + 1, node.1 + 1)
}

/// Drops padding nodes. Edges touching padding are refused, since they
/// would vanish silently.
fn strip_padding(g: &GraphState) -> Result<GraphState> {
    let keep: Vec<usize> = (0..g.n()).filter(|&i| !g.is_empty_node(i)).collect();
    if keep.is_empty() {
        return Err(Error::Composition("subgraph has no nodes".into()));
    }
    if g.edges().any(|c| g.is_empty_node(c.row) || g.is_empty_node(c.col)) {
        return Err(Error::Composition("subgraph has edges to padding nodes".into()));
    }
    let mut pos = vec![usize::MAX; g.n()];
    for (p, &i) in keep.iter().enumerate() {
        pos[i] = p;
    }
    let diagonal = keep.iter().map(|&i| g.node_type(i)).collect();
    GraphState::from_edges(diagonal, g.empty_code(), g.edges().map(|c| (pos[c.row], pos[c.col])))
}

impl CompositeGraph {
    pub fn new(base: &GraphState) -> Result<Self> {
        Ok(Self {
            subgraphs: vec![strip_padding(base)?],
            junctions: Vec::new(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.subgraphs.iter().map(|g| g.n()).sum()
    }

    fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.subgraphs
            .iter()
            .map(|g| {
                let o = acc;
                acc += g.n();
                o
            })
            .collect()
    }

    /// Every node in flattening order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeRef> + '_ {
        self.subgraphs
            .iter()
            .enumerate()
            .flat_map(|(s, g)| (0..g.n()).map(move |i| (s, i)))
    }

    pub fn node_type(&self, node: NodeRef) -> TypeCode {
        self.subgraphs[node.0].node_type(node.1)
    }

    /// One graph holding every subgraph's nodes in order, their internal
    /// edges and the junction edges.
    pub fn flatten(&self) -> Result<GraphState> {
        let offsets = self.offsets();
        let empty = self.subgraphs[0].empty_code();
        let diagonal: Vec<TypeCode> = self.subgraphs.iter().flat_map(|g| g.diagonal().iter().copied()).collect();
        let inner = self
            .subgraphs
            .iter()
            .zip(&offsets)
            .flat_map(|(g, &o)| g.edges().map(move |c| (c.row + o, c.col + o)));
        let mut edges: Vec<(usize, usize)> = inner.collect();
        for &(a, b) in &self.junctions {
            if a.0 >= self.subgraphs.len() || b.0 >= self.subgraphs.len() || a.1 >= self.subgraphs[a.0].n() || b.1 >= self.subgraphs[b.0].n() {
                return Err(Error::Composition(format!(
                    "junction {} - {} references a missing node",
                    node_name(a),
                    node_name(b)
                )));
            }
            edges.push((offsets[a.0] + a.1, offsets[b.0] + b.1));
        }
        GraphState::from_edges(diagonal, empty, edges)
    }

    /// Index of each node in [`flatten`](Self::flatten)'s output.
    pub fn flat_index(&self, node: NodeRef) -> usize {
        self.offsets()[node.0] + node.1
    }
}

/// Appends `sub` and links it to the existing graph with
/// `rule.edges_per_subgraph` distinct junction edges drawn uniformly.
pub fn concatenate(
    base: &CompositeGraph,
    sub: &GraphState,
    rule: &JunctionRule,
    cs: &ConstraintSet,
    seed: u64,
) -> Result<CompositeGraph> {
    rule.check(cs)?;
    if base.subgraphs.is_empty() {
        return Err(Error::Composition("base composite is empty".into()));
    }
    if !cs.is_valid(sub) {
        return Err(Error::Composition("subgraph does not satisfy the constraints".into()));
    }
    let sub = strip_padding(sub)?;
    let from: Vec<usize> = (0..sub.n()).filter(|&i| sub.node_type(i) == rule.from_type).collect();
    let to: Vec<NodeRef> = base.nodes().filter(|&n| base.node_type(n) == rule.to_type).collect();
    if from.is_empty() {
        return Err(Error::Composition(format!(
            "subgraph has no {} node to attach",
            cs.type_name(rule.from_type)
        )));
    }
    if to.is_empty() {
        return Err(Error::Composition(format!(
            "base graph has no {} node to attach to",
            cs.type_name(rule.to_type)
        )));
    }
    if rule.edges_per_subgraph > from.len() * to.len() {
        return Err(Error::Composition(format!(
            "{} junction edges requested but only {} distinct pairs exist",
            rule.edges_per_subgraph,
            from.len() * to.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let new_index = base.subgraphs.len();
    let mut out = base.clone();
    let mut added = Vec::with_capacity(rule.edges_per_subgraph);
    while added.len() < rule.edges_per_subgraph {
        let a = (new_index, *from.choose(&mut rng).expect("nonempty"));
        let b = *to.choose(&mut rng).expect("nonempty");
        if !added.contains(&(a, b)) {
            added.push((a, b));
        }
    }
    out.subgraphs.push(sub);
    out.junctions.extend(added);
    Ok(out)
}

/// True iff the flattened composite satisfies `cs`.
pub fn validate_composite(c: &CompositeGraph, cs: &ConstraintSet) -> bool {
    c.flatten().map(|g| cs.is_valid(&g)).unwrap_or(false)
}
