//! Constraint sets: per-type lists of required neighbour types.
//!
//! A set is written as a JSON object mapping each type name to the types it
//! must be connected to, e.g. `{"U":["V"],"V":["U","W"],"W":["V"]}`. Two
//! types may share an edge iff either lists the other. The padding type
//! requires nothing and may not be connected to anything.

use std::collections::HashSet;
use std::fmt;

use serde::de::{self, Deserializer, MapAccess, Visitor};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::graph::{GraphConfig, GraphState, NodeType, TypeCode};

/// Types are tracked as bits of a `u64`; one bit is reserved for padding.
pub const MAX_TYPES: usize = 63;

const ALIASES_KEY: &str = "_aliases";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintSet {
    names: Vec<String>,
    aliases: Vec<Option<String>>,
    requires: Vec<Vec<TypeCode>>,
    required_mask: Vec<u64>,
    allowed_mask: Vec<u64>,
    asymmetric: Vec<(TypeCode, TypeCode)>,
    source: String,
}

/// Violation counts of a whole graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViolationReport {
    pub per_node: Vec<usize>,
    pub total: usize,
    /// Unmet (node, required type) pairs.
    pub missing_required: usize,
    /// Disallowed edges, counted once per endpoint.
    pub disallowed_edges: usize,
}

impl ViolationReport {
    pub fn is_valid(&self) -> bool {
        self.total == 0
    }
}

// JSON object that keeps key order and rejects duplicate keys.
struct Entries<V>(Vec<(String, V)>);

impl<'de, V: Deserialize<'de>> Deserialize<'de> for Entries<V> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct EntriesVisitor<V>(std::marker::PhantomData<V>);

        impl<'de, V: Deserialize<'de>> Visitor<'de> for EntriesVisitor<V> {
            type Value = Entries<V>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a JSON object")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut seen = HashSet::new();
                let mut out = Vec::new();
                while let Some(key) = map.next_key::<String>()? {
                    if !seen.insert(key.clone()) {
                        return Err(de::Error::custom(format!("duplicate key \"{key}\"")));
                    }
                    out.push((key, map.next_value()?));
                }
                Ok(Entries(out))
            }
        }

        d.deserialize_map(EntriesVisitor(std::marker::PhantomData))
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawValue {
    List(Vec<String>),
    Aliases(Entries<String>),
}

impl ConstraintSet {
    /// Parses the JSON constraint format, with an optional `"_aliases"`
    /// object mapping display names to declared type names.
    pub fn parse(text: &str) -> Result<Self> {
        let entries: Entries<RawValue> =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;

        let mut decl = Vec::new();
        let mut alias_entries = None;
        for (key, value) in entries.0 {
            match (key.as_str(), value) {
                (ALIASES_KEY, RawValue::Aliases(a)) => alias_entries = Some(a.0),
                (ALIASES_KEY, RawValue::List(_)) => {
                    return Err(Error::Parse("\"_aliases\" must be an object".into()))
                }
                (_, RawValue::List(list)) => decl.push((key, list)),
                (_, RawValue::Aliases(_)) => {
                    return Err(Error::Parse(format!(
                        "requirements of \"{key}\" must be an array of type names"
                    )))
                }
            }
        }
        if decl.is_empty() {
            return Err(Error::Parse("constraint set declares no types".into()));
        }
        if decl.len() > MAX_TYPES {
            return Err(Error::Parse(format!(
                "at most {MAX_TYPES} node types are supported, got {}",
                decl.len()
            )));
        }

        let names: Vec<String> = decl.iter().map(|(k, _)| k.clone()).collect();
        let lookup = |name: &str| names.iter().position(|n| n == name);

        let mut requires = Vec::with_capacity(names.len());
        for (key, list) in &decl {
            let mut codes: Vec<TypeCode> = Vec::with_capacity(list.len());
            for r in list {
                let code = lookup(r).ok_or_else(|| {
                    Error::Parse(format!("\"{key}\" requires undeclared type \"{r}\""))
                })? as TypeCode;
                if codes.contains(&code) {
                    return Err(Error::Parse(format!("\"{key}\" lists \"{r}\" twice")));
                }
                codes.push(code);
            }
            requires.push(codes);
        }

        let mut aliases = vec![None; names.len()];
        for (display, symbol) in alias_entries.unwrap_or_default() {
            let code = lookup(&symbol).ok_or_else(|| {
                Error::Parse(format!("alias \"{display}\" names undeclared type \"{symbol}\""))
            })?;
            if lookup(&display).is_some() || aliases.iter().flatten().any(|a| *a == display) {
                return Err(Error::Parse(format!("alias \"{display}\" is not unique")));
            }
            if aliases[code].is_some() {
                return Err(Error::Parse(format!("type \"{symbol}\" has two aliases")));
            }
            aliases[code] = Some(display);
        }

        Ok(Self::build(names, aliases, requires, text.to_string()))
    }

    fn build(
        names: Vec<String>,
        aliases: Vec<Option<String>>,
        requires: Vec<Vec<TypeCode>>,
        source: String,
    ) -> Self {
        let k = names.len();
        let required_mask: Vec<u64> = requires
            .iter()
            .map(|r| r.iter().fold(0u64, |m, &t| m | (1 << t)))
            .chain(std::iter::once(0))
            .collect();
        let mut allowed_mask = required_mask.clone();
        let mut asymmetric = Vec::new();
        for a in 0..k {
            for b in 0..k {
                if required_mask[a] & (1 << b) != 0 {
                    if required_mask[b] & (1 << a) == 0 {
                        asymmetric.push((a as TypeCode, b as TypeCode));
                    }
                    allowed_mask[b] |= 1 << a;
                }
            }
        }
        for (a, b) in &asymmetric {
            log::warn!(
                "constraint set is asymmetric: \"{}\" requires \"{}\" but not vice versa; \
                 the edge is allowed in both directions",
                names[*a as usize],
                names[*b as usize]
            );
        }
        Self {
            names,
            aliases,
            requires,
            required_mask,
            allowed_mask,
            asymmetric,
            source,
        }
    }

    /// The text this set was parsed from.
    /// Same symbols and requirement lists, ignoring aliases and formatting.
    pub fn names_and_requirements_eq(&self, other: &ConstraintSet) -> bool {
        self.names == other.names && self.requires == other.requires
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Number of declared (non-padding) types.
    pub fn num_types(&self) -> usize {
        self.names.len()
    }

    pub fn empty_code(&self) -> TypeCode {
        self.names.len() as TypeCode
    }

    /// Size of the one-hot observation alphabet: no-edge, edge, declared types, padding.
    pub fn alphabet_size(&self) -> usize {
        self.names.len() + 3
    }

    /// Declared type names plus `"E"` for padding.
    pub fn node_types(&self) -> Vec<NodeType> {
        (0..=self.names.len())
            .map(|c| NodeType {
                code: c as TypeCode,
                name: self.type_name(c as TypeCode).to_string(),
                is_empty: c == self.names.len(),
            })
            .collect()
    }

    pub fn symbol(&self, t: TypeCode) -> &str {
        self.names.get(t as usize).map(String::as_str).unwrap_or("E")
    }

    /// Display name: the alias if one is declared, else the symbol.
    pub fn type_name(&self, t: TypeCode) -> &str {
        match self.aliases.get(t as usize) {
            Some(Some(a)) => a,
            _ => self.symbol(t),
        }
    }

    /// Resolves a symbol or alias.
    pub fn type_code(&self, name: &str) -> Option<TypeCode> {
        self.names
            .iter()
            .position(|n| n == name)
            .or_else(|| self.aliases.iter().position(|a| a.as_deref() == Some(name)))
            .map(|c| c as TypeCode)
    }

    pub fn requires(&self, t: TypeCode) -> &[TypeCode] {
        self.requires.get(t as usize).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Total number of requirement-list entries.
    pub fn requirement_count(&self) -> usize {
        self.requires.iter().map(Vec::len).sum()
    }

    /// Pairs `(a, b)` where `a` lists `b` but `b` does not list `a`.
    pub fn asymmetric_pairs(&self) -> &[(TypeCode, TypeCode)] {
        &self.asymmetric
    }

    #[inline]
    pub fn edge_allowed(&self, a: TypeCode, b: TypeCode) -> bool {
        self.allowed_mask
            .get(a as usize)
            .is_some_and(|m| m & (1 << b) != 0)
    }

    /// Smallest count of type `t` for which a valid graph can exist:
    /// two for types that require their own type, one otherwise.
    pub fn min_count(&self, t: TypeCode) -> usize {
        if self.required_mask[t as usize] & (1 << t) != 0 {
            2
        } else {
            1
        }
    }

    /// Smallest configuration size that is feasible.
    pub fn min_size(&self) -> usize {
        (0..self.num_types()).map(|t| self.min_count(t as TypeCode)).sum()
    }

    /// Checks that a configuration matches this alphabet and admits a valid graph.
    pub fn check_config(&self, config: &GraphConfig) -> Result<()> {
        if config.num_types() != self.num_types() {
            return Err(Error::Config(format!(
                "configuration lists {} types, constraint set declares {}",
                config.num_types(),
                self.num_types()
            )));
        }
        for (t, &c) in config.counts.iter().enumerate() {
            let min = self.min_count(t as TypeCode);
            if c < min {
                return Err(Error::Config(format!(
                    "type \"{}\" needs at least {min} node(s), configuration has {c}",
                    self.type_name(t as TypeCode)
                )));
            }
        }
        Ok(())
    }

    /// Parses `"Type=count,..."`; unlisted types get count 0.
    pub fn parse_config(&self, text: &str) -> Result<GraphConfig> {
        let mut counts = vec![0usize; self.num_types()];
        let mut seen = HashSet::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, count) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected Type=count, got \"{part}\"")))?;
            let name = name.trim();
            let code = self
                .type_code(name)
                .ok_or_else(|| Error::Config(format!("unknown node type \"{name}\"")))?;
            if !seen.insert(code) {
                return Err(Error::Config(format!("type \"{name}\" given twice")));
            }
            counts[code as usize] = count
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad count in \"{part}\"")))?;
        }
        Ok(GraphConfig::new(counts))
    }

    /// Renders a configuration as `"Type=count,..."` using display names.
    pub fn format_config(&self, config: &GraphConfig) -> String {
        config
            .counts
            .iter()
            .enumerate()
            .map(|(t, c)| format!("{}={c}", self.type_name(t as TypeCode)))
            .collect::<Vec<_>>()
            .join(",")
    }

    #[inline]
    fn neighbor_mask(&self, g: &GraphState, i: usize) -> u64 {
        let mut mask = 0u64;
        for j in 0..g.n() {
            if g.has_edge(i, j) {
                mask |= 1 << g.node_type(j);
            }
        }
        mask
    }

    /// Unmet required types of node `i` plus its disallowed incident edges.
    pub fn node_violations(&self, g: &GraphState, i: usize) -> usize {
        let t = g.node_type(i) as usize;
        let mut disallowed = 0;
        for j in 0..g.n() {
            if g.has_edge(i, j) && self.allowed_mask[t] & (1 << g.node_type(j)) == 0 {
                disallowed += 1;
            }
        }
        let missing = (self.required_mask[t] & !self.neighbor_mask(g, i)).count_ones() as usize;
        missing + disallowed
    }

    pub fn total_violations(&self, g: &GraphState) -> ViolationReport {
        let n = g.n();
        let mut masks = vec![0u64; n];
        let mut per_node = vec![0usize; n];
        let mut disallowed_edges = 0;
        for c in g.edges() {
            let (tr, tc) = (g.node_type(c.row), g.node_type(c.col));
            masks[c.row] |= 1 << tc;
            masks[c.col] |= 1 << tr;
            if !self.edge_allowed(tr, tc) {
                per_node[c.row] += 1;
                per_node[c.col] += 1;
                disallowed_edges += 2;
            }
        }
        let mut missing_required = 0;
        for i in 0..n {
            let missing = (self.required_mask[g.node_type(i) as usize] & !masks[i]).count_ones() as usize;
            per_node[i] += missing;
            missing_required += missing;
        }
        ViolationReport {
            per_node,
            total: missing_required + disallowed_edges,
            missing_required,
            disallowed_edges,
        }
    }

    /// Total violation count without building a per-node report.
    pub fn violation_total(&self, g: &GraphState) -> usize {
        let n = g.n();
        let mut small = [0u64; 16];
        let mut large;
        let masks: &mut [u64] = if n <= 16 {
            &mut small[..n]
        } else {
            large = vec![0u64; n];
            &mut large
        };
        let bits = g.edge_bits();
        let diag = g.diagonal();
        let mut total = 0;
        let mut k = 0;
        for row in 1..n {
            let tr = diag[row];
            let allowed_row = self.allowed_mask[tr as usize];
            for col in 0..row {
                if bits[k] {
                    let tc = diag[col];
                    masks[row] |= 1 << tc;
                    masks[col] |= 1 << tr;
                    if allowed_row & (1 << tc) == 0 {
                        total += 2;
                    }
                }
                k += 1;
            }
        }
        for (i, &t) in diag.iter().enumerate() {
            total += (self.required_mask[t as usize] & !masks[i]).count_ones() as usize;
        }
        total
    }

    pub fn is_valid(&self, g: &GraphState) -> bool {
        self.violation_total(g) == 0
    }
}

/// The five constraint sets used in the evaluation.
pub mod builtin {
    use std::sync::OnceLock;

    use super::ConstraintSet;

    pub const SET1: &str = include_str!("../data/constraints/set1.json");
    pub const SET2: &str = include_str!("../data/constraints/set2.json");
    pub const SET3: &str = include_str!("../data/constraints/set3.json");
    pub const SET4: &str = include_str!("../data/constraints/set4.json");
    pub const SET5: &str = include_str!("../data/constraints/set5.json");
    pub const SET1_ECONOMY: &str = include_str!("../data/constraints/set1_economy.json");
    pub const SET1_SKILL_TREE: &str = include_str!("../data/constraints/set1_skill_tree.json");

    /// Source text of set `id` (1-based).
    pub fn text(id: usize) -> Option<&'static str> {
        [SET1, SET2, SET3, SET4, SET5].get(id.checked_sub(1)?).copied()
    }

    /// Parsed once per process, so load-time warnings appear once.
    pub fn set(id: usize) -> Option<ConstraintSet> {
        static SETS: OnceLock<Vec<ConstraintSet>> = OnceLock::new();
        let sets = SETS.get_or_init(|| {
            (1..=5)
                .map(|i| ConstraintSet::parse(text(i).expect("known id")).expect("built-in constraint sets parse"))
                .collect()
        });
        id.checked_sub(1).and_then(|i| sets.get(i)).cloned()
    }

    /// Set 1 with Source / Converter / Pool names.
    pub fn set1_economy() -> ConstraintSet {
        ConstraintSet::parse(SET1_ECONOMY).expect("built-in constraint sets parse")
    }

    /// Set 1 with Skill / Lv.up / Ev.skill names.
    pub fn set1_skill_tree() -> ConstraintSet {
        ConstraintSet::parse(SET1_SKILL_TREE).expect("built-in constraint sets parse")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set1() -> ConstraintSet {
        builtin::set(1).unwrap()
    }

    fn set2() -> ConstraintSet {
        builtin::set(2).unwrap()
    }

    // U V W U E; U0-V1, V1-W2, V1-U3
    fn path_graph() -> GraphState {
        GraphState::from_edges(vec![0, 1, 2, 0, 3], 3, [(1, 0), (2, 1), (3, 1)]).unwrap()
    }

    #[test]
    fn parses_bundled_sets() {
        let s1 = ConstraintSet::parse(r#"{"U":["V"],"V":["U","W"],"W":["V"]}"#).unwrap();
        assert_eq!(s1.num_types(), 3);
        assert_eq!(s1.requirement_count(), 4);
        let s2 = ConstraintSet::parse(r#"{"U":["V"],"V":["U"]}"#).unwrap();
        assert_eq!(s2.num_types(), 2);
        for id in 1..=5 {
            assert!(builtin::set(id).is_some());
        }
        assert_eq!(builtin::set(3).unwrap().requirement_count(), 3);
        assert_eq!(builtin::set(4).unwrap().requirement_count(), 5);
        assert_eq!(builtin::set(5).unwrap().requirement_count(), 6);
    }

    #[test]
    fn parse_errors() {
        let err = ConstraintSet::parse(r#"{"U":["X"]}"#).unwrap_err();
        assert!(matches!(&err, Error::Parse(m) if m.contains("\"X\"")), "{err}");
        assert!(matches!(ConstraintSet::parse("{}"), Err(Error::Parse(_))));
        assert!(matches!(
            ConstraintSet::parse(r#"{"U":["V"],"V":["U"],"U":["V"]}"#),
            Err(Error::Parse(m)) if m.contains("duplicate")
        ));
        assert!(matches!(ConstraintSet::parse("[1,2]"), Err(Error::Parse(_))));
        assert!(matches!(ConstraintSet::parse(r#"{"U":"V"}"#), Err(Error::Parse(_))));
        assert!(matches!(
            ConstraintSet::parse(r#"{"U":["V","V"],"V":["U"]}"#),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn aliases_resolve() {
        let cs = builtin::set1_economy();
        assert_eq!(cs.type_code("Source"), Some(0));
        assert_eq!(cs.type_code("U"), Some(0));
        assert_eq!(cs.type_code("Pool"), Some(2));
        assert_eq!(cs.type_name(1), "Converter");
        assert_eq!(cs.symbol(1), "V");
        assert_eq!(cs.type_name(3), "E");
        let tree = ConstraintSet::parse(builtin::SET1_SKILL_TREE).unwrap();
        assert_eq!(tree.type_name(0), "Skill");
        assert!(matches!(
            ConstraintSet::parse(r#"{"U":["V"],"V":["U"],"_aliases":{"A":"Q"}}"#),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn asymmetric_sets_are_closed() {
        let s4 = builtin::set(4).unwrap();
        // V lists U, U does not list V.
        assert_eq!(s4.asymmetric_pairs(), &[(1, 0)]);
        assert!(s4.edge_allowed(0, 1) && s4.edge_allowed(1, 0));
        assert!(!s4.edge_allowed(0, 2));
        assert!(!s4.edge_allowed(2, 2));
    }

    #[test]
    fn edge_allowance() {
        let cs = set1();
        assert!(cs.edge_allowed(0, 1));
        assert!(!cs.edge_allowed(0, 2));
        assert!(!cs.edge_allowed(0, cs.empty_code()));
        assert!(!cs.edge_allowed(cs.empty_code(), 0));
        assert!(!cs.edge_allowed(cs.empty_code(), cs.empty_code()));
        for a in 0..=3 {
            for b in 0..=3 {
                assert_eq!(cs.edge_allowed(a, b), cs.edge_allowed(b, a));
            }
        }
    }

    #[test]
    fn node_violation_examples() {
        let cs = set1();
        assert_eq!(cs.node_violations(&path_graph(), 0), 0);

        let bare = GraphState::new(vec![0, 1, 2, 0, 3], 3);
        assert_eq!(cs.node_violations(&bare, 1), 2);

        // [U, V, E] with an edge from E to U.
        let s2 = set2();
        let g = GraphState::from_edges(vec![0, 1, 2], 2, [(2, 0)]).unwrap();
        assert_eq!(s2.node_violations(&g, 2), 1);
    }

    #[test]
    fn total_violation_examples() {
        let cs = set1();
        let r = cs.total_violations(&path_graph());
        assert_eq!(r.total, 0);
        assert!(cs.is_valid(&path_graph()));

        let bare = GraphState::new(vec![0, 1, 2, 0, 3], 3);
        let r = cs.total_violations(&bare);
        assert_eq!(r.per_node, vec![1, 2, 1, 1, 0]);
        assert_eq!(r.total, 5);
        assert_eq!(r.missing_required, 5);
        assert!(!cs.is_valid(&bare));

        let uu = GraphState::from_edges(vec![0, 0], 2, [(1, 0)]).unwrap();
        let r = set2().total_violations(&uu);
        assert_eq!(r.total, 4);
        assert_eq!(r.missing_required, 2);
        assert_eq!(r.disallowed_edges, 2);
    }

    #[test]
    fn config_feasibility() {
        let s3 = builtin::set(3).unwrap();
        assert_eq!(s3.min_count(0), 1);
        assert_eq!(s3.min_count(1), 2);
        assert_eq!(s3.min_size(), 3);
        assert!(s3.check_config(&GraphConfig::new(vec![1, 1])).is_err());
        assert!(s3.check_config(&GraphConfig::new(vec![1, 2])).is_ok());
        let s1 = set1();
        let c = s1.parse_config("U=2, V=2,W=1").unwrap();
        assert_eq!(c.counts, vec![2, 2, 1]);
        assert!(s1.check_config(&s1.parse_config("U=7").unwrap()).is_err());
        assert!(s1.parse_config("X=1").is_err());
        assert!(s1.parse_config("U=1,U=2").is_err());
        let eco = builtin::set1_economy();
        let c = eco.parse_config("Source=2,Converter=2,Pool=1").unwrap();
        assert_eq!(c.counts, vec![2, 2, 1]);
        assert_eq!(eco.format_config(&c), "Source=2,Converter=2,Pool=1");
    }
}
