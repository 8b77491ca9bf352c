//! Extended adjacency matrix.
//!
//! Node types live on the diagonal, undirected edges in the strict lower
//! triangle. Cells of the lower triangle are addressed either as a
//! [`CellIndex`] or as a 1-based action index that enumerates them in
//! row-major order: `(1,0), (2,0), (2,1), (3,0), ...`.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense node-type code. Declared types take `0..k`, the padding type takes `k`.
pub type TypeCode = u8;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeType {
    pub code: TypeCode,
    pub name: String,
    pub is_empty: bool,
}

/// Position in the strict lower triangle (`col < row`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

impl CellIndex {
    pub fn new(row: usize, col: usize) -> Result<Self> {
        if col >= row {
            return Err(Error::Domain(format!(
                "cell ({row},{col}) is not strictly lower triangular"
            )));
        }
        Ok(Self { row, col })
    }

    /// Offset into row-major lower-triangle storage.
    #[inline]
    pub fn offset(self) -> usize {
        triang(self.row - 1) + self.col
    }
}

impl fmt::Display for CellIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

/// The `n`-th triangular number, `n(n+1)/2`.
#[inline]
pub const fn triang(n: usize) -> usize {
    n * (n + 1) / 2
}

/// Number of lower-triangle cells (the edge action space) of an `n × n` matrix.
#[inline]
pub const fn cell_count(n: usize) -> usize {
    if n == 0 {
        0
    } else {
        triang(n - 1)
    }
}

/// Maps a 1-based action index onto its lower-triangle cell.
///
/// The row is the rounded-up triangular root of `a`; the column follows
/// as `a - triang(row - 1) - 1`.
pub fn action_to_cell(a: usize, n: usize) -> Result<CellIndex> {
    let cells = cell_count(n);
    if a == 0 || a > cells {
        return Err(Error::Range(format!(
            "action {a} outside [1, {cells}] for a matrix of size {n}"
        )));
    }
    let root = ((-1.0 + (1.0 + 8.0 * a as f64).sqrt()) / 2.0).ceil() as usize;
    // Correct any floating-point drift so that triang(row-1) < a <= triang(row).
    let mut row = root.max(1);
    while triang(row) < a {
        row += 1;
    }
    while row > 1 && triang(row - 1) >= a {
        row -= 1;
    }
    Ok(CellIndex {
        row,
        col: a - triang(row - 1) - 1,
    })
}

/// Inverse of [`action_to_cell`].
pub fn cell_to_action(c: CellIndex) -> Result<usize> {
    if c.col >= c.row {
        return Err(Error::Domain(format!(
            "cell {c} is not strictly lower triangular"
        )));
    }
    Ok(triang(c.row - 1) + c.col + 1)
}

/// Requested node counts per declared type; the controllability handle.
///
/// `counts[t]` is the number of nodes of type code `t`. The padding type is
/// not listed; its code is `counts.len()`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GraphConfig {
    pub counts: Vec<usize>,
}

impl GraphConfig {
    pub fn new(counts: Vec<usize>) -> Self {
        Self { counts }
    }

    pub fn size(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn num_types(&self) -> usize {
        self.counts.len()
    }

    pub fn empty_code(&self) -> TypeCode {
        self.counts.len() as TypeCode
    }
}

/// Extended adjacency matrix of side `n`.
#[derive(Debug, PartialEq, Eq, Hash)]
pub struct GraphState {
    diagonal: Vec<TypeCode>,
    edges: Vec<bool>,
    empty: TypeCode,
}

impl Clone for GraphState {
    fn clone(&self) -> Self {
        Self { diagonal: self.diagonal.clone(), edges: self.edges.clone(), empty: self.empty }
    }

    // reuses the existing buffers
    fn clone_from(&mut self, source: &Self) {
        self.diagonal.clone_from(&source.diagonal);
        self.edges.clone_from(&source.edges);
        self.empty = source.empty;
    }
}

impl GraphState {
    /// Edgeless graph over the given diagonal.
    pub fn new(diagonal: Vec<TypeCode>, empty: TypeCode) -> Self {
        let cells = cell_count(diagonal.len());
        Self {
            diagonal,
            edges: vec![false; cells],
            empty,
        }
    }

    pub fn from_edges(
        diagonal: Vec<TypeCode>,
        empty: TypeCode,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let mut g = Self::new(diagonal, empty);
        for (a, b) in edges {
            let c = g.cell(a, b)?;
            g.edges[c.offset()] = true;
        }
        Ok(g)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.diagonal.len()
    }

    #[inline]
    pub fn diagonal(&self) -> &[TypeCode] {
        &self.diagonal
    }

    #[inline]
    pub fn node_type(&self, i: usize) -> TypeCode {
        self.diagonal[i]
    }

    #[inline]
    pub fn empty_code(&self) -> TypeCode {
        self.empty
    }

    #[inline]
    pub fn is_empty_node(&self, i: usize) -> bool {
        self.diagonal[i] == self.empty
    }

    /// Number of non-padding nodes.
    pub fn active_nodes(&self) -> usize {
        self.diagonal.iter().filter(|&&t| t != self.empty).count()
    }

    /// Lower-triangle edge bits in row-major order.
    #[inline]
    pub fn edge_bits(&self) -> &[bool] {
        &self.edges
    }

    pub(crate) fn edge_bits_mut(&mut self) -> &mut [bool] {
        &mut self.edges
    }

    /// Lower-triangle cell for the unordered pair `{a, b}`.
    pub fn cell(&self, a: usize, b: usize) -> Result<CellIndex> {
        let n = self.n();
        if a >= n || b >= n {
            return Err(Error::Range(format!(
                "node pair ({a},{b}) outside a matrix of size {n}"
            )));
        }
        if a == b {
            return Err(Error::Domain(format!("({a},{a}) is a diagonal cell")));
        }
        Ok(CellIndex {
            row: a.max(b),
            col: a.min(b),
        })
    }

    /// Symmetric edge read; `false` on the diagonal.
    #[inline]
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        if a == b {
            return false;
        }
        let (row, col) = if a > b { (a, b) } else { (b, a) };
        self.edges[triang(row - 1) + col]
    }

    #[inline]
    pub fn get(&self, c: CellIndex) -> bool {
        self.edges[c.offset()]
    }

    fn check_cell(&self, c: CellIndex) -> Result<()> {
        if c.col >= c.row {
            return Err(Error::Domain(format!(
                "cell {c} is on the diagonal or in the upper triangle"
            )));
        }
        if c.row >= self.n() {
            return Err(Error::Range(format!(
                "cell {c} outside a matrix of size {}",
                self.n()
            )));
        }
        Ok(())
    }

    pub fn set(&mut self, c: CellIndex, value: bool) -> Result<()> {
        self.check_cell(c)?;
        self.edges[c.offset()] = value;
        Ok(())
    }

    /// Flips the cell in place.
    pub fn toggle(&mut self, c: CellIndex) -> Result<()> {
        self.check_cell(c)?;
        let e = &mut self.edges[c.offset()];
        *e = !*e;
        Ok(())
    }

    /// Returns a copy with one cell flipped.
    pub fn toggle_edge(&self, c: CellIndex) -> Result<GraphState> {
        let mut next = self.clone();
        next.toggle(c)?;
        Ok(next)
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }

    /// Iterates set edges as lower-triangle cells in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = CellIndex> + '_ {
        let n = self.n();
        (1..n)
            .flat_map(|row| (0..row).map(move |col| CellIndex { row, col }))
            .filter(move |c| self.edges[c.offset()])
    }

    /// Nodes adjacent to `i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n()).filter(move |&j| self.has_edge(i, j))
    }

    /// Lower-triangle cells whose endpoints are both non-padding, row-major.
    pub fn active_cells(&self) -> Vec<CellIndex> {
        let n = self.n();
        (1..n)
            .flat_map(|row| (0..row).map(move |col| CellIndex { row, col }))
            .filter(|c| !self.is_empty_node(c.row) && !self.is_empty_node(c.col))
            .collect()
    }
}

/// Random starting state for a configuration.
///
/// The diagonal holds the configured types in a uniformly shuffled order,
/// followed by padding up to `max_size`. Every lower-triangle cell between
/// two non-padding nodes is an edge with probability `edge_prob`.
pub fn init_random(
    config: &GraphConfig,
    max_size: usize,
    edge_prob: f64,
    seed: u64,
) -> Result<GraphState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_random_with(config, max_size, edge_prob, &mut rng)
}

pub(crate) fn init_random_with<R: Rng + ?Sized>(
    config: &GraphConfig,
    max_size: usize,
    edge_prob: f64,
    rng: &mut R,
) -> Result<GraphState> {
    let size = config.size();
    if size == 0 {
        return Err(Error::Config("configuration has no nodes".into()));
    }
    if size > max_size {
        return Err(Error::Config(format!(
            "configuration size {size} exceeds the maximum size {max_size}"
        )));
    }
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(Error::Config(format!(
            "edge probability {edge_prob} outside [0, 1]"
        )));
    }
    let empty = config.empty_code();
    let mut diagonal: Vec<TypeCode> = config
        .counts
        .iter()
        .enumerate()
        .flat_map(|(t, &c)| std::iter::repeat_n(t as TypeCode, c))
        .collect();
    diagonal.shuffle(rng);
    diagonal.resize(max_size, empty);

    let mut g = GraphState::new(diagonal, empty);
    for row in 1..size {
        for col in 0..row {
            // Draw for every cell so the stream does not depend on edge_prob edge cases.
            let draw: f64 = rng.random();
            g.edges[triang(row - 1) + col] = draw < edge_prob;
        }
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Row-major enumeration of lower-triangle cells.
    fn enumerate_cells(n: usize) -> Vec<CellIndex> {
        let mut out = Vec::new();
        for row in 0..n {
            for col in 0..row {
                out.push(CellIndex { row, col });
            }
        }
        out
    }

    #[test]
    fn triang_values() {
        assert_eq!(triang(0), 0);
        assert_eq!(triang(4), 10);
        assert_eq!(triang(9), 45);
        for n in 1..200 {
            assert_eq!(triang(n) - triang(n - 1), n);
        }
    }

    #[test]
    fn action_mapping_matches_enumeration() {
        let cells = enumerate_cells(5);
        assert_eq!(cells[0], CellIndex { row: 1, col: 0 });
        assert_eq!(cells[2], CellIndex { row: 2, col: 1 });
        assert_eq!(cells[9], CellIndex { row: 4, col: 3 });

        assert_eq!(action_to_cell(1, 5).unwrap(), CellIndex { row: 1, col: 0 });
        assert_eq!(action_to_cell(3, 5).unwrap(), CellIndex { row: 2, col: 1 });
        assert_eq!(action_to_cell(10, 5).unwrap(), CellIndex { row: 4, col: 3 });

        assert_eq!(cell_to_action(CellIndex { row: 1, col: 0 }).unwrap(), 1);
        assert_eq!(cell_to_action(CellIndex { row: 2, col: 1 }).unwrap(), 3);
        assert_eq!(cell_to_action(CellIndex { row: 4, col: 3 }).unwrap(), 10);
    }

    #[test]
    fn action_mapping_errors() {
        assert!(matches!(action_to_cell(0, 5), Err(Error::Range(_))));
        assert!(matches!(action_to_cell(11, 5), Err(Error::Range(_))));
        assert!(matches!(action_to_cell(1, 1), Err(Error::Range(_))));
        assert!(matches!(
            cell_to_action(CellIndex { row: 2, col: 2 }),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            cell_to_action(CellIndex { row: 1, col: 3 }),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn large_actions_round_trip() {
        // Exercise the float correction far beyond benchmark sizes.
        let n = 100_000;
        for a in [1usize, 2, 4_999_950_000, 4_999_949_999, 123_456_789] {
            let c = action_to_cell(a, n).unwrap();
            assert_eq!(cell_to_action(c).unwrap(), a);
        }
    }

    #[test]
    fn init_random_forced_densities() {
        let cfg = GraphConfig::new(vec![1, 1]);
        for seed in 0..20 {
            let g = init_random(&cfg, 2, 1.0, seed).unwrap();
            let mut d = g.diagonal().to_vec();
            d.sort();
            assert_eq!(d, vec![0, 1]);
            assert!(g.has_edge(1, 0));
        }
        let g = init_random(&cfg, 3, 0.0, 9).unwrap();
        assert_eq!(g.diagonal()[2], 2);
        assert_eq!(g.diagonal().iter().filter(|&&t| t == 2).count(), 1);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn init_random_is_reproducible() {
        let cfg = GraphConfig::new(vec![2, 2, 1]);
        let a = init_random(&cfg, 6, 0.5, 7).unwrap();
        let b = init_random(&cfg, 6, 0.5, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n(), 6);
        assert!(a.is_empty_node(5));
        // no padding-incident edges
        for j in 0..5 {
            assert!(!a.has_edge(5, j));
        }
        let mut counts = [0usize; 3];
        for &t in &a.diagonal()[..5] {
            counts[t as usize] += 1;
        }
        assert_eq!(counts, [2, 2, 1]);
    }

    #[test]
    fn init_random_rejects_bad_configs() {
        let cfg = GraphConfig::new(vec![3, 3]);
        assert!(matches!(init_random(&cfg, 5, 0.5, 0), Err(Error::Config(_))));
        assert!(matches!(
            init_random(&GraphConfig::new(vec![0, 0]), 5, 0.5, 0),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            init_random(&GraphConfig::new(vec![1, 1]), 5, 1.5, 0),
            Err(Error::Config(_))
        ));
    }

    fn path_graph() -> GraphState {
        // U V W U E with edges U0-V1, V1-W2, V1-U3
        GraphState::from_edges(vec![0, 1, 2, 0, 3], 3, [(1, 0), (2, 1), (3, 1)]).unwrap()
    }

    #[test]
    fn toggle_edge_cases() {
        let zero = GraphState::new(vec![0, 1, 2], 3);
        let c = CellIndex { row: 1, col: 0 };
        let once = zero.toggle_edge(c).unwrap();
        assert!(once.has_edge(1, 0));
        assert_eq!(once.edge_count(), 1);
        assert_eq!(once.toggle_edge(c).unwrap(), zero);

        let m = path_graph();
        let without = m.toggle_edge(CellIndex { row: 2, col: 1 }).unwrap();
        assert!(!without.has_edge(2, 1));
        assert!(without.has_edge(1, 0) && without.has_edge(3, 1));
        assert_eq!(without.diagonal(), m.diagonal());

        assert!(matches!(
            m.toggle_edge(CellIndex { row: 2, col: 2 }),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            m.toggle_edge(CellIndex { row: 1, col: 2 }),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            m.toggle_edge(CellIndex { row: 7, col: 2 }),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn active_cells_skip_padding() {
        let g = GraphState::new(vec![0, 1, 0, 2, 2], 2);
        let cells = g.active_cells();
        assert_eq!(
            cells,
            vec![
                CellIndex { row: 1, col: 0 },
                CellIndex { row: 2, col: 0 },
                CellIndex { row: 2, col: 1 }
            ]
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn toggle_is_involution_touching_one_cell(
                n in 2usize..12,
                bits in proptest::collection::vec(any::<bool>(), 66),
                pick in any::<prop::sample::Index>(),
            ) {
                let mut g = GraphState::new(vec![0; n], 1);
                for (i, b) in bits.iter().take(cell_count(n)).enumerate() {
                    let c = action_to_cell(i + 1, n).unwrap();
                    g.set(c, *b).unwrap();
                }
                let a = pick.index(cell_count(n)) + 1;
                let c = action_to_cell(a, n).unwrap();
                let t = g.toggle_edge(c).unwrap();
                let differing = g.edge_bits().iter().zip(t.edge_bits()).filter(|(x, y)| x != y).count();
                prop_assert_eq!(differing, 1);
                prop_assert_eq!(t.toggle_edge(c).unwrap(), g);
            }

            #[test]
            fn init_random_deterministic(seed in any::<u64>(), p in 0.0f64..=1.0) {
                let cfg = GraphConfig::new(vec![2, 1, 2]);
                prop_assert_eq!(
                    init_random(&cfg, 7, p, seed).unwrap(),
                    init_random(&cfg, 7, p, seed).unwrap()
                );
            }
        }
    }
}
