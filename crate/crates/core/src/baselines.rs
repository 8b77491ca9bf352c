//! Search baselines: a random toggle walk and a small evolutionary algorithm.
//!
//! Both start from [`init_random`] states and use the violation total as
//! their only signal.

use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::constraints::ConstraintSet;
use crate::env::DEFAULT_EDGE_PROB;
use crate::error::{Error, Result};
use crate::graph::{init_random_with, CellIndex, GraphConfig, GraphState};

/// Default toggle budget for [`random_search`].
pub const DEFAULT_RANDOM_BUDGET: u64 = 50_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    /// Fitness evaluations, including the one of the starting state(s).
    pub evaluations: u64,
    pub duration: Duration,
    pub success: bool,
    pub final_violations: usize,
    /// Generations run by the evolutionary algorithm, toggles for random search.
    pub iterations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EAParams {
    pub population: usize,
    pub tournament: usize,
    pub mutation_rate: f64,
    pub elitism: usize,
    pub max_generations: u64,
    pub seed: u64,
}

impl Default for EAParams {
    fn default() -> Self {
        Self {
            population: 50,
            tournament: 3,
            mutation_rate: 0.05,
            elitism: 1,
            max_generations: 10_000,
            seed: 0,
        }
    }
}

impl EAParams {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population < 2 {
            return Err(Error::Config("population must hold at least two individuals".into()));
        }
        if self.tournament == 0 {
            return Err(Error::Config("tournament size must be positive".into()));
        }
        if self.elitism >= self.population {
            return Err(Error::Config("elitism must leave room for offspring".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::Config(format!("mutation rate {} outside [0, 1]", self.mutation_rate)));
        }
        Ok(())
    }
}

fn check_search_input(cs: &ConstraintSet, config: &GraphConfig, max_size: usize) -> Result<()> {
    cs.check_config(config)?;
    if config.size() > max_size {
        return Err(Error::Config(format!(
            "configuration size {} exceeds the maximum size {max_size}",
            config.size()
        )));
    }
    Ok(())
}

/// Toggles uniformly random active cells until the graph is valid or
/// `budget` toggles have been spent. On failure the least-violating state
/// seen is returned.
pub fn random_search(
    cs: &ConstraintSet,
    config: &GraphConfig,
    max_size: usize,
    seed: u64,
    budget: u64,
) -> Result<(GraphState, SearchStats)> {
    check_search_input(cs, config, max_size)?;
    if budget == 0 {
        return Err(Error::Config("search budget must be positive".into()));
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = init_random_with(config, max_size, DEFAULT_EDGE_PROB, &mut rng)?;
    let cells = g.active_cells();
    let mut current = cs.violation_total(&g);
    let mut evaluations = 1;
    let mut toggles = 0;
    let mut best: Option<(GraphState, usize)> = None;
    while current > 0 && toggles < budget && !cells.is_empty() {
        let c = cells[rng.random_range(0..cells.len())];
        g.toggle(c)?;
        toggles += 1;
        let before = current;
        current = cs.violation_total(&g);
        evaluations += 1;
        // only snapshot when leaving a state better than anything kept so far
        if current > before && best.as_ref().is_none_or(|b| before < b.1) {
            let mut prev = g.clone();
            prev.toggle(c)?;
            best = Some((prev, before));
        }
    }
    let (state, final_violations) = match best {
        Some((b, v)) if v < current => (b, v),
        _ => (g, current),
    };
    let stats = SearchStats {
        evaluations,
        duration: start.elapsed(),
        success: final_violations == 0,
        final_violations,
        iterations: toggles,
    };
    Ok((state, stats))
}

/// Cells in node `k`'s row and column of the lower triangle.
fn incident_cells(n: usize, k: usize) -> impl Iterator<Item = CellIndex> {
    (0..n).filter(move |&j| j != k).map(move |j| {
        if j < k {
            CellIndex { row: k, col: j }
        } else {
            CellIndex { row: j, col: k }
        }
    })
}

/// Non-padding nodes as a list and as a per-node flag.
struct Active {
    nodes: Vec<usize>,
    flags: Vec<bool>,
}

impl Active {
    fn of(g: &GraphState) -> Self {
        let flags: Vec<bool> = (0..g.n()).map(|i| !g.is_empty_node(i)).collect();
        let nodes = (0..g.n()).filter(|&i| flags[i]).collect();
        Self { nodes, flags }
    }
}

/// `parent_a` with one random node's incident cells copied from `parent_b`.
pub fn ea_crossover(parent_a: &GraphState, parent_b: &GraphState, seed: u64) -> Result<GraphState> {
    if parent_a.diagonal() != parent_b.diagonal() {
        return Err(Error::Contract("crossover parents must share a diagonal".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut child = parent_a.clone();
    let active = Active::of(parent_a);
    crossover_into(child.edge_bits_mut(), parent_b.edge_bits(), &active, &mut rng);
    Ok(child)
}

// `child` already holds the first parent's edge bits
fn crossover_into<R: Rng + ?Sized>(child: &mut [bool], b: &[bool], active: &Active, rng: &mut R) {
    if let Some(&k) = active.nodes.choose(rng) {
        for c in incident_cells(active.flags.len(), k) {
            child[c.offset()] = b[c.offset()];
        }
    }
}

/// With probability `rate`, redraws every cell between a random node and
/// the other non-padding nodes as a fair coin.
pub fn ea_mutate(individual: &GraphState, rate: f64, seed: u64) -> Result<GraphState> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::Config(format!("mutation rate {rate} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = individual.clone();
    let active = Active::of(individual);
    mutate_with(g.edge_bits_mut(), rate, &active, &mut rng);
    Ok(g)
}

/// Returns the mutated node, if any.
fn mutate_with<R: Rng + ?Sized>(edges: &mut [bool], rate: f64, active: &Active, rng: &mut R) -> Option<usize> {
    if !rng.random_bool(rate) {
        return None;
    }
    let k = *active.nodes.choose(rng)?;
    for c in incident_cells(active.flags.len(), k) {
        let other = if c.row == k { c.col } else { c.row };
        if active.flags[other] {
            edges[c.offset()] = rng.random_bool(0.5);
        }
    }
    Some(k)
}

/// Generational EA with tournament selection, node-row crossover, node
/// mutation and elitism. Every individual is scored when it is created and
/// the search stops at the first valid one.
pub fn ea_generate(
    cs: &ConstraintSet,
    config: &GraphConfig,
    max_size: usize,
    params: &EAParams,
) -> Result<(GraphState, SearchStats)> {
    check_search_input(cs, config, max_size)?;
    params.validate()?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut evaluations = 0u64;

    // Individuals share the diagonal, so only edge bits are stored, back to
    // back, and scored through one scratch graph.
    let mut work = init_random_with(config, max_size, DEFAULT_EDGE_PROB, &mut rng)?;
    let active = Active::of(&work);
    let cells: Vec<usize> = work.active_cells().iter().map(|c| c.offset()).collect();
    let width = work.edge_bits().len();
    let size = params.population;
    let mut pop = vec![false; size * width];
    let mut fit = vec![0usize; size];
    let mut score = |edges: &[bool], work: &mut GraphState| {
        work.edge_bits_mut().copy_from_slice(edges);
        evaluations += 1;
        cs.violation_total(work)
    };
    let finish = |work: &mut GraphState, edges: &[bool], fit: usize, evaluations: u64, generations: u64| {
        work.edge_bits_mut().copy_from_slice(edges);
        let stats = SearchStats {
            evaluations,
            duration: start.elapsed(),
            success: fit == 0,
            final_violations: fit,
            iterations: generations,
        };
        Ok((work.clone(), stats))
    };

    pop[..width].copy_from_slice(work.edge_bits());
    for i in 0..size {
        let (head, rest) = pop.split_at_mut(i * width);
        let ind = &mut rest[..width];
        if i > 0 {
            // same diagonal, fresh edges
            ind.copy_from_slice(&head[..width]);
            for &c in &cells {
                ind[c] = rng.random_bool(DEFAULT_EDGE_PROB);
            }
        }
        fit[i] = score(ind, &mut work);
        if fit[i] == 0 {
            let e = evaluations;
            return finish(&mut work, &pop[i * width..(i + 1) * width], 0, e, 0);
        }
    }

    let mut next = vec![false; size * width];
    let mut next_fit = vec![0usize; size];
    let mut order: Vec<usize> = (0..size).collect();
    for generation in 1..=params.max_generations {
        order.sort_by_key(|&i| fit[i]);
        for i in 0..size {
            let parent = if i < params.elitism {
                order[i]
            } else {
                tournament(&order, &fit, params.tournament, &mut rng)
            };
            let child = &mut next[i * width..(i + 1) * width];
            child.copy_from_slice(&pop[parent * width..(parent + 1) * width]);
            if i < params.elitism {
                next_fit[i] = fit[parent];
                continue;
            }
            let b = tournament(&order, &fit, params.tournament, &mut rng);
            crossover_into(child, &pop[b * width..(b + 1) * width], &active, &mut rng);
            mutate_with(child, params.mutation_rate, &active, &mut rng);
            next_fit[i] = score(child, &mut work);
            if next_fit[i] == 0 {
                let e = evaluations;
                return finish(&mut work, &next[i * width..(i + 1) * width], 0, e, generation);
            }
        }
        std::mem::swap(&mut pop, &mut next);
        std::mem::swap(&mut fit, &mut next_fit);
        order.iter_mut().enumerate().for_each(|(i, o)| *o = i);
    }
    let best = (0..size).min_by_key(|&i| fit[i]).expect("population is nonempty");
    let e = evaluations;
    finish(&mut work, &pop[best * width..(best + 1) * width], fit[best], e, params.max_generations)
}

/// Index of the fittest of `size` uniform draws from the ranked population.
fn tournament<R: Rng + ?Sized>(order: &[usize], fit: &[usize], size: usize, rng: &mut R) -> usize {
    let mut best = order[rng.random_range(0..order.len())];
    for _ in 1..size {
        let c = order[rng.random_range(0..order.len())];
        if fit[c] < fit[best] {
            best = c;
        }
    }
    best
}
