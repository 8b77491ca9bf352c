//! Graph files: JSON for exchange, Graphviz DOT for viewing.
//!
//! Padding nodes never appear in either format.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::composer::{node_name, CompositeGraph};
use crate::constraints::ConstraintSet;
use crate::error::{Error, Result};
use crate::graph::{GraphState, TypeCode};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JsonNode {
    pub id: usize,
    #[serde(rename = "type")]
    pub node_type: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subgraph: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub nodes: Vec<JsonNode>,
    /// `[row, col]` pairs with `row > col`.
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub junctions: Vec<[usize; 2]>,
}

pub fn graph_to_json(g: &GraphState, cs: &ConstraintSet) -> GraphJson {
    let nodes = (0..g.n())
        .filter(|&i| !g.is_empty_node(i))
        .map(|i| JsonNode {
            id: i,
            node_type: cs.type_name(g.node_type(i)).to_string(),
            name: None,
            subgraph: None,
        })
        .collect();
    let edges = g
        .edges()
        .filter(|c| !g.is_empty_node(c.row) && !g.is_empty_node(c.col))
        .map(|c| [c.row, c.col])
        .collect();
    GraphJson { nodes, edges, junctions: Vec::new() }
}

pub fn graph_to_json_string(g: &GraphState, cs: &ConstraintSet) -> Result<String> {
    json_string(&graph_to_json(g, cs))
}

/// One node or edge per line.
pub fn json_string(doc: &GraphJson) -> Result<String> {
    let mut out = String::from("{\n  \"nodes\": [");
    let list = |items: Vec<String>| {
        if items.is_empty() {
            String::from("]")
        } else {
            format!("\n    {}\n  ]", items.join(",\n    "))
        }
    };
    let nodes = doc.nodes.iter().map(serde_json::to_string).collect::<std::result::Result<Vec<_>, _>>()?;
    out.push_str(&list(nodes));
    let edges = |e: &[[usize; 2]]| e.iter().map(|[a, b]| format!("[{a}, {b}]")).collect::<Vec<_>>();
    out.push_str(",\n  \"edges\": [");
    out.push_str(&list(edges(&doc.edges)));
    if !doc.junctions.is_empty() {
        out.push_str(",\n  \"junctions\": [");
        out.push_str(&list(edges(&doc.junctions)));
    }
    out.push_str("\n}\n");
    Ok(out)
}

/// Rebuilds a graph from JSON. Nodes are placed in ascending id order;
/// type names may be symbols or aliases.
pub fn graph_from_json(doc: &GraphJson, cs: &ConstraintSet) -> Result<GraphState> {
    let mut by_id = BTreeMap::new();
    for node in &doc.nodes {
        let t = cs.type_code(&node.node_type).ok_or_else(|| {
            Error::Parse(format!("node {} has type `{}`, which the constraints do not declare", node.id, node.node_type))
        })?;
        if by_id.insert(node.id, t).is_some() {
            return Err(Error::Parse(format!("node id {} appears twice", node.id)));
        }
    }
    let pos: BTreeMap<usize, usize> = by_id.keys().enumerate().map(|(p, &id)| (id, p)).collect();
    let diagonal: Vec<TypeCode> = by_id.values().copied().collect();
    let mut edges = Vec::with_capacity(doc.edges.len());
    for &[a, b] in doc.edges.iter().chain(&doc.junctions) {
        let (pa, pb) = match (pos.get(&a), pos.get(&b)) {
            (Some(&x), Some(&y)) => (x, y),
            _ => return Err(Error::Parse(format!("edge [{a}, {b}] references an unknown node"))),
        };
        if pa == pb {
            return Err(Error::Parse(format!("self-loop on node {a}")));
        }
        edges.push((pa, pb));
    }
    GraphState::from_edges(diagonal, cs.empty_code(), edges)
}

pub fn graph_from_json_str(text: &str, cs: &ConstraintSet) -> Result<GraphState> {
    let doc: GraphJson = serde_json::from_str(text).map_err(|e| Error::Parse(format!("graph file: {e}")))?;
    graph_from_json(&doc, cs)
}

/// Composite JSON: the flattened graph, each node carrying its
/// `subgraph-node` name and 1-based subgraph number.
pub fn composite_to_json(c: &CompositeGraph, cs: &ConstraintSet) -> Result<GraphJson> {
    let flat = c.flatten()?;
    let nodes = c
        .nodes()
        .enumerate()
        .map(|(id, r)| JsonNode {
            id,
            node_type: cs.type_name(c.node_type(r)).to_string(),
            name: Some(node_name(r)),
            subgraph: Some(r.0 + 1),
        })
        .collect();
    let mut junctions: Vec<[usize; 2]> = c
        .junctions
        .iter()
        .map(|&(a, b)| {
            let (x, y) = (c.flat_index(a), c.flat_index(b));
            [x.max(y), x.min(y)]
        })
        .collect();
    junctions.sort_unstable();
    let edges = flat
        .edges()
        .map(|e| [e.row, e.col])
        .filter(|e| junctions.binary_search(e).is_err())
        .collect();
    Ok(GraphJson { nodes, edges, junctions })
}

const SHAPES: [&str; 8] = ["box", "ellipse", "diamond", "hexagon", "triangle", "octagon", "parallelogram", "house"];
const COLORS: [&str; 8] = ["#9ecae1", "#fdae6b", "#a1d99b", "#bcbddc", "#fc9272", "#fdd0a2", "#c7e9c0", "#d9d9d9"];

/// Presentation options for DOT output.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DotOptions {
    /// Draw edges as arrows from earlier to later types in this order
    /// (e.g. Source, Converter, Pool). Pairs of equal or unlisted types
    /// stay undirected.
    pub direction: Option<Vec<TypeCode>>,
}

impl DotOptions {
    pub fn with_direction(cs: &ConstraintSet, names: &[&str]) -> Result<Self> {
        let order = names
            .iter()
            .map(|n| cs.type_code(n).ok_or_else(|| Error::Parse(format!("unknown type `{n}` in direction order"))))
            .collect::<Result<_>>()?;
        Ok(Self { direction: Some(order) })
    }

    fn rank(&self, t: TypeCode) -> Option<usize> {
        self.direction.as_ref()?.iter().position(|&x| x == t)
    }
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// `(from, to, directed)` for one undirected edge.
fn orient(opts: &DotOptions, a: (usize, TypeCode), b: (usize, TypeCode)) -> (usize, usize, bool) {
    match (opts.rank(a.1), opts.rank(b.1)) {
        (Some(x), Some(y)) if x < y => (a.0, b.0, true),
        (Some(x), Some(y)) if x > y => (b.0, a.0, true),
        _ => (b.0.min(a.0), b.0.max(a.0), false),
    }
}

struct DotNode {
    id: usize,
    label: String,
    t: TypeCode,
    subgraph: usize,
}

fn render_dot(nodes: &[DotNode], edges: &[(usize, usize)], cs: &ConstraintSet, opts: &DotOptions) -> String {
    let mut out = String::from("digraph G {\n  node [style=filled];\n");
    let types: BTreeMap<usize, TypeCode> = nodes.iter().map(|n| (n.id, n.t)).collect();
    for n in nodes {
        let _ = writeln!(
            out,
            "  n{} [label=\"{}\\n{}\", shape={}, fillcolor=\"{}\"];",
            n.id,
            escape(&n.label),
            escape(cs.type_name(n.t)),
            SHAPES[n.t as usize % SHAPES.len()],
            COLORS[n.subgraph % COLORS.len()]
        );
    }
    for &(a, b) in edges {
        let (from, to, directed) = orient(opts, (a, types[&a]), (b, types[&b]));
        let attr = if directed { "" } else { " [dir=none]" };
        let _ = writeln!(out, "  n{from} -> n{to}{attr};");
    }
    out.push_str("}\n");
    out
}

/// DOT for a single graph; labels are node indices.
pub fn graph_to_dot(g: &GraphState, cs: &ConstraintSet, opts: &DotOptions) -> String {
    let nodes: Vec<DotNode> = (0..g.n())
        .filter(|&i| !g.is_empty_node(i))
        .map(|i| DotNode { id: i, label: i.to_string(), t: g.node_type(i), subgraph: 0 })
        .collect();
    let edges: Vec<(usize, usize)> = g
        .edges()
        .filter(|c| !g.is_empty_node(c.row) && !g.is_empty_node(c.col))
        .map(|c| (c.row, c.col))
        .collect();
    render_dot(&nodes, &edges, cs, opts)
}

/// DOT for a composite, colored by subgraph and labeled `subgraph-node`.
pub fn composite_to_dot(c: &CompositeGraph, cs: &ConstraintSet, opts: &DotOptions) -> Result<String> {
    json_to_dot(&composite_to_json(c, cs)?, cs, opts)
}

/// DOT straight from a graph file, keeping composite names and subgraph
/// colors when present.
pub fn json_to_dot(doc: &GraphJson, cs: &ConstraintSet, opts: &DotOptions) -> Result<String> {
    // validates types, ids and edges
    graph_from_json(doc, cs)?;
    let nodes: Vec<DotNode> = doc
        .nodes
        .iter()
        .map(|n| DotNode {
            id: n.id,
            label: n.name.clone().unwrap_or_else(|| n.id.to_string()),
            t: cs.type_code(&n.node_type).expect("checked above"),
            subgraph: n.subgraph.map_or(0, |s| s.saturating_sub(1)),
        })
        .collect();
    let edges: Vec<(usize, usize)> = doc.edges.iter().chain(&doc.junctions).map(|&[a, b]| (a, b)).collect();
    Ok(render_dot(&nodes, &edges, cs, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composer::{concatenate, JunctionRule};
    use crate::constraints::builtin;
    use crate::graph::init_random;
    use proptest::prelude::*;

    #[test]
    fn padding_is_omitted() {
        let cs = builtin::set(1).unwrap();
        let g = GraphState::from_edges(vec![0, 1, 2, 0, 3], 3, [(1, 0), (2, 1), (3, 1)]).unwrap();
        let j = graph_to_json(&g, &cs);
        assert_eq!(j.nodes.len(), 4);
        assert_eq!(j.edges, vec![[1, 0], [2, 1], [3, 1]]);
        let text = graph_to_json_string(&g, &cs).unwrap();
        assert!(text.contains("\"type\":\"U\""));
        assert!(!text.contains("\"E\""));
        let back = graph_from_json_str(&text, &cs).unwrap();
        assert_eq!(back.diagonal(), &[0, 1, 2, 0]);
        assert_eq!(back.edge_count(), 3);
    }

    #[test]
    fn aliases_are_written_and_read() {
        let cs = builtin::set1_economy();
        let g = GraphState::from_edges(vec![0, 1, 2], 3, [(1, 0), (2, 1)]).unwrap();
        let text = graph_to_json_string(&g, &cs).unwrap();
        assert!(text.contains("Source") && text.contains("Converter") && text.contains("Pool"));
        assert_eq!(graph_from_json_str(&text, &cs).unwrap(), g);
        let sym = r#"{"nodes":[{"id":0,"type":"U"},{"id":1,"type":"V"}],"edges":[[0,1]]}"#;
        assert!(graph_from_json_str(sym, &cs).unwrap().has_edge(1, 0));
    }

    #[test]
    fn malformed_graph_files() {
        let cs = builtin::set(1).unwrap();
        for text in [
            r#"{"nodes":[{"id":0,"type":"X"}],"edges":[]}"#,
            r#"{"nodes":[{"id":0,"type":"U"},{"id":0,"type":"V"}],"edges":[]}"#,
            r#"{"nodes":[{"id":0,"type":"U"}],"edges":[[1,0]]}"#,
            r#"{"nodes":[{"id":0,"type":"U"}],"edges":[[0,0]]}"#,
            r#"{"nodes":3}"#,
        ] {
            assert!(matches!(graph_from_json_str(text, &cs), Err(Error::Parse(_))), "{text}");
        }
    }

    #[test]
    fn dot_shapes_and_directions() {
        let cs = builtin::set1_economy();
        let g = GraphState::from_edges(vec![0, 1, 2, 3], 3, [(1, 0), (2, 1)]).unwrap();
        let plain = graph_to_dot(&g, &cs, &DotOptions::default());
        assert!(plain.contains("n1 -> n0 [dir=none]") || plain.contains("n0 -> n1 [dir=none]"));
        assert!(plain.contains("shape=box") && plain.contains("shape=ellipse") && plain.contains("shape=diamond"));
        assert!(!plain.contains("n3"));
        let opts = DotOptions::with_direction(&cs, &["Source", "Converter", "Pool"]).unwrap();
        let directed = graph_to_dot(&g, &cs, &opts);
        assert!(directed.contains("n0 -> n1;"));
        assert!(directed.contains("n1 -> n2;"));
    }

    #[test]
    fn composite_export_carries_provenance() {
        let cs = builtin::set1_economy();
        let base = GraphState::from_edges(vec![0, 1, 2], 3, [(1, 0), (2, 1)]).unwrap();
        let rule = JunctionRule::by_name(&cs, "Converter", "Pool").unwrap();
        let c = concatenate(&CompositeGraph::new(&base).unwrap(), &base, &rule, &cs, 0).unwrap();
        let j = composite_to_json(&c, &cs).unwrap();
        assert_eq!(j.nodes.len(), 6);
        assert_eq!(j.nodes[4].name.as_deref(), Some("2-2"));
        assert_eq!(j.nodes[4].subgraph, Some(2));
        assert_eq!(j.junctions, vec![[4, 2]]);
        assert_eq!(j.edges.len(), 4);
        // junction edges come back as ordinary edges
        assert_eq!(graph_from_json(&j, &cs).unwrap(), c.flatten().unwrap());
        let dot = composite_to_dot(&c, &cs, &DotOptions::default()).unwrap();
        assert!(dot.contains("2-3\\nPool"));
        assert!(dot.contains(COLORS[0]) && dot.contains(COLORS[1]));
        let text = json_string(&j).unwrap();
        let doc: GraphJson = serde_json::from_str(&text).unwrap();
        assert_eq!(doc, j);
        assert_eq!(json_to_dot(&doc, &cs, &DotOptions::default()).unwrap(), dot);
    }

    proptest! {
        #[test]
        fn json_round_trip(seed in 0u64..5000, u in 1usize..4, v in 1usize..4, w in 1usize..4) {
            let cs = builtin::set(1).unwrap();
            let g = init_random(&crate::graph::GraphConfig::new(vec![u, v, w]), u + v + w, 0.5, seed).unwrap();
            let text = graph_to_json_string(&g, &cs).unwrap();
            prop_assert_eq!(graph_from_json_str(&text, &cs).unwrap(), g);
        }
    }
}
