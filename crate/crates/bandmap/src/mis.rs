//! Maximum-independent-set solvers over undirected graphs.
//!
//! Three solvers with one contract: `exact_mis` (branch and bound, small
//! instances), `greedy_mis` (min-degree seed), and `tabu_mis` (swap-based
//! tabu local search used for production binding). Every result is verified
//! independent by an edge scan before it is returned.

use std::collections::BTreeSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Adjacency-bitset graph the solvers operate on.
#[derive(Debug, Clone)]
pub struct MisGraph {
    n: usize,
    words: usize,
    adj: Vec<u64>,
    degree: Vec<usize>,
}

impl MisGraph {
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Self {
        let words = n.div_ceil(64);
        let mut g = MisGraph { n, words, adj: vec![0; n * words], degree: vec![0; n] };
        for &(a, b) in edges {
            assert!(a < n && b < n && a != b, "bad edge ({}, {})", a, b);
            if !g.has_edge(a, b) {
                g.adj[a * words + b / 64] |= 1 << (b % 64);
                g.adj[b * words + a / 64] |= 1 << (a % 64);
                g.degree[a] += 1;
                g.degree[b] += 1;
            }
        }
        g
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a * self.words + b / 64] >> (b % 64) & 1 == 1
    }

    pub fn degree(&self, v: usize) -> usize {
        self.degree[v]
    }

    pub fn neighbors_row(&self, v: usize) -> &[u64] {
        &self.adj[v * self.words..(v + 1) * self.words]
    }

    fn is_independent(&self, chosen: &BTreeSet<usize>) -> bool {
        let vs: Vec<usize> = chosen.iter().copied().collect();
        for (i, &a) in vs.iter().enumerate() {
            for &b in &vs[i + 1..] {
                if self.has_edge(a, b) {
                    return false;
                }
            }
        }
        true
    }
}

/// Result of one solver run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MisResult {
    pub chosen: BTreeSet<usize>,
    pub size: usize,
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MisError {
    pub message: String,
}

impl fmt::Display for MisError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for MisError {}

fn verified(g: &MisGraph, chosen: BTreeSet<usize>, iterations: usize, seed: u64) -> MisResult {
    assert!(g.is_independent(&chosen), "solver produced a dependent set");
    MisResult { size: chosen.len(), chosen, iterations, seed }
}

/// Exact maximum independent set by branch and bound. Errors above
/// `vertex_limit` so callers fall back to the heuristic.
pub fn exact_mis(g: &MisGraph, vertex_limit: usize) -> Result<MisResult, MisError> {
    if g.len() > vertex_limit {
        return Err(MisError {
            message: format!(
                "{} vertices exceeds the exact-solver limit {}; use tabu_mis",
                g.len(),
                vertex_limit
            ),
        });
    }
    let words = g.words.max(1);
    let mut active = vec![0u64; words];
    for v in 0..g.len() {
        active[v / 64] |= 1 << (v % 64);
    }
    let seed_set = greedy_mis(g).chosen;
    let mut best: Vec<usize> = seed_set.into_iter().collect();
    let mut current = Vec::new();
    branch(g, &mut active, &mut current, &mut best);
    Ok(verified(g, best.into_iter().collect(), 0, 0))
}

fn popcount(words: &[u64]) -> usize {
    words.iter().map(|w| w.count_ones() as usize).sum()
}

fn branch(g: &MisGraph, active: &mut [u64], current: &mut Vec<usize>, best: &mut Vec<usize>) {
    let remaining = popcount(active);
    if current.len() + remaining <= best.len() {
        return;
    }
    if remaining == 0 {
        if current.len() > best.len() {
            *best = current.clone();
        }
        return;
    }
    // Pivot on the highest-degree active vertex (ties: lowest index).
    let mut pivot = usize::MAX;
    let mut pivot_deg = 0;
    for v in iter_bits(active) {
        let deg = g
            .neighbors_row(v)
            .iter()
            .zip(active.iter())
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum::<usize>();
        if pivot == usize::MAX || deg > pivot_deg {
            pivot = v;
            pivot_deg = deg;
        }
    }
    // Include the pivot.
    let saved = active.to_vec();
    active[pivot / 64] &= !(1 << (pivot % 64));
    for (a, nb) in active.iter_mut().zip(g.neighbors_row(pivot)) {
        *a &= !nb;
    }
    current.push(pivot);
    branch(g, active, current, best);
    current.pop();
    active.copy_from_slice(&saved);
    // Exclude the pivot.
    active[pivot / 64] &= !(1 << (pivot % 64));
    branch(g, active, current, best);
    active.copy_from_slice(&saved);
}

fn iter_bits(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(wi, &w)| {
        let mut bits = w;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let b = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            Some(wi * 64 + b)
        })
    })
}

/// Greedy seed: repeatedly take the minimum-degree vertex (ties: lowest
/// index) and delete its closed neighborhood.
pub fn greedy_mis(g: &MisGraph) -> MisResult {
    let words = g.words.max(1);
    let mut active = vec![0u64; words];
    for v in 0..g.len() {
        active[v / 64] |= 1 << (v % 64);
    }
    let mut chosen = BTreeSet::new();
    loop {
        let mut pick = usize::MAX;
        let mut pick_deg = usize::MAX;
        for v in iter_bits(&active) {
            let deg = g
                .neighbors_row(v)
                .iter()
                .zip(active.iter())
                .map(|(a, b)| (a & b).count_ones() as usize)
                .sum::<usize>();
            if deg < pick_deg {
                pick = v;
                pick_deg = deg;
            }
        }
        if pick == usize::MAX {
            break;
        }
        chosen.insert(pick);
        active[pick / 64] &= !(1 << (pick % 64));
        for (a, nb) in active.iter_mut().zip(g.neighbors_row(pick)) {
            *a &= !nb;
        }
    }
    verified(g, chosen, 0, 0)
}

/// Default tabu iteration budget for a graph of `n` vertices.
pub fn default_budget(n: usize) -> usize {
    50 * n.max(1)
}

/// Candidate buckets maintained incrementally: non-chosen vertices with no
/// chosen neighbor (direct adds) and with one or two (cheap swaps).
struct Buckets {
    adds: Vec<usize>,
    swaps: Vec<usize>,
    pos_add: Vec<usize>,
    pos_swap: Vec<usize>,
}

const ABSENT: usize = usize::MAX;

impl Buckets {
    fn new(n: usize) -> Self {
        Buckets {
            adds: Vec::new(),
            swaps: Vec::new(),
            pos_add: vec![ABSENT; n],
            pos_swap: vec![ABSENT; n],
        }
    }

    fn refresh(&mut self, v: usize, in_set: bool, conf: usize) {
        let want_add = !in_set && conf == 0;
        let want_swap = !in_set && (conf == 1 || conf == 2);
        if want_add && self.pos_add[v] == ABSENT {
            self.pos_add[v] = self.adds.len();
            self.adds.push(v);
        } else if !want_add && self.pos_add[v] != ABSENT {
            let i = self.pos_add[v];
            let last = *self.adds.last().unwrap();
            self.adds.swap_remove(i);
            if i < self.adds.len() {
                self.pos_add[last] = i;
            }
            self.pos_add[v] = ABSENT;
        }
        if want_swap && self.pos_swap[v] == ABSENT {
            self.pos_swap[v] = self.swaps.len();
            self.swaps.push(v);
        } else if !want_swap && self.pos_swap[v] != ABSENT {
            let i = self.pos_swap[v];
            let last = *self.swaps.last().unwrap();
            self.swaps.swap_remove(i);
            if i < self.swaps.len() {
                self.pos_swap[last] = i;
            }
            self.pos_swap[v] = ABSENT;
        }
    }
}

/// Swap-based tabu search seeded from the greedy solution.
///
/// Moves: add a vertex with no chosen neighbor, or insert a vertex and evict
/// its (at most two) chosen neighbors. Evicted vertices become tabu for
/// `7 + (size mod 5)` iterations; a tabu move is admitted when it beats the
/// incumbent. When the search stalls it kicks itself with an unbounded swap
/// around a random vertex. Deterministic for a fixed seed; never worse than
/// greedy.
pub fn tabu_mis(g: &MisGraph, seed: u64, budget: usize) -> MisResult {
    let n = g.len();
    let greedy = greedy_mis(g);
    if n == 0 || budget == 0 {
        return greedy;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut in_set = vec![false; n];
    let mut conf = vec![0usize; n];
    let mut size = 0;
    for &v in &greedy.chosen {
        in_set[v] = true;
        size += 1;
    }
    for v in 0..n {
        conf[v] = iter_bits(g.neighbors_row(v)).filter(|&u| in_set[u]).count();
    }
    let mut buckets = Buckets::new(n);
    for v in 0..n {
        buckets.refresh(v, in_set[v], conf[v]);
    }
    let mut best: Vec<bool> = in_set.clone();
    let mut best_size = size;
    let mut tabu_until = vec![0usize; n];
    let mut stale = 0usize;
    let mut scratch = Vec::new();

    for iter in 1..=budget {
        if best_size == n {
            break;
        }
        // Pick the move: adds first, then minimum-eviction swaps; a long
        // stall triggers an unbounded kick.
        scratch.clear();
        let kick = stale >= 64;
        let v = if kick {
            stale = 0;
            let non_chosen = n - size;
            if non_chosen == 0 {
                break;
            }
            let mut idx = rng.gen_range(0..non_chosen);
            let mut pick = 0;
            for u in 0..n {
                if !in_set[u] {
                    if idx == 0 {
                        pick = u;
                        break;
                    }
                    idx -= 1;
                }
            }
            pick
        } else {
            for &u in &buckets.adds {
                if tabu_until[u] <= iter || size + 1 > best_size {
                    scratch.push(u);
                }
            }
            if scratch.is_empty() {
                let mut min_conf = usize::MAX;
                for &u in &buckets.swaps {
                    if tabu_until[u] <= iter || size + 1 - conf[u] > best_size {
                        match conf[u].cmp(&min_conf) {
                            std::cmp::Ordering::Less => {
                                min_conf = conf[u];
                                scratch.clear();
                                scratch.push(u);
                            }
                            std::cmp::Ordering::Equal => scratch.push(u),
                            std::cmp::Ordering::Greater => {}
                        }
                    }
                }
            }
            match scratch.len() {
                0 => {
                    stale = 64; // force a kick next iteration
                    continue;
                }
                len => scratch[rng.gen_range(0..len)],
            }
        };

        let tenure = 7 + size % 5;
        let evicted: Vec<usize> = iter_bits(g.neighbors_row(v)).filter(|&u| in_set[u]).collect();
        for &u in &evicted {
            in_set[u] = false;
            size -= 1;
            tabu_until[u] = iter + tenure;
            buckets.refresh(u, false, conf[u]);
            for w in iter_bits(g.neighbors_row(u)) {
                conf[w] -= 1;
                buckets.refresh(w, in_set[w], conf[w]);
            }
        }
        in_set[v] = true;
        size += 1;
        buckets.refresh(v, true, conf[v]);
        for w in iter_bits(g.neighbors_row(v)) {
            conf[w] += 1;
            buckets.refresh(w, in_set[w], conf[w]);
        }
        if size > best_size {
            best_size = size;
            best.copy_from_slice(&in_set);
            stale = 0;
        } else {
            stale += 1;
        }
    }

    let chosen: BTreeSet<usize> = (0..n).filter(|&v| best[v]).collect();
    verified(g, chosen, budget, seed)
}

/// Exhaustive search by subset enumeration, usable up to ~20 vertices.
/// Kept public as the reference the exact solver is tested against.
pub fn brute_force_mis(g: &MisGraph) -> MisResult {
    assert!(g.len() <= 24, "brute force limited to 24 vertices");
    let n = g.len();
    let masks: Vec<u32> = (0..n)
        .map(|v| {
            let mut m = 0u32;
            for u in iter_bits(g.neighbors_row(v)) {
                m |= 1 << u;
            }
            m
        })
        .collect();
    let mut best = 0u32;
    for set in 0u32..(1 << n) {
        if set.count_ones() <= best.count_ones() {
            continue;
        }
        let mut ok = true;
        let mut rest = set;
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            if masks[v] & set != 0 {
                ok = false;
                break;
            }
        }
        if ok {
            best = set;
        }
    }
    let chosen: BTreeSet<usize> = (0..n).filter(|&v| best >> v & 1 == 1).collect();
    verified(g, chosen, 0, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(n: usize) -> MisGraph {
        let edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        MisGraph::new(n, &edges)
    }

    #[test]
    fn exact_small_graphs() {
        let k3 = MisGraph::new(3, &[(0, 1), (1, 2), (0, 2)]);
        assert_eq!(exact_mis(&k3, 60).unwrap().size, 1);

        assert_eq!(exact_mis(&cycle(5), 60).unwrap().size, 2);

        let edgeless = MisGraph::new(7, &[]);
        assert_eq!(exact_mis(&edgeless, 60).unwrap().size, 7);

        assert!(exact_mis(&MisGraph::new(80, &[]), 60).is_err());
    }

    #[test]
    fn greedy_examples() {
        assert_eq!(greedy_mis(&cycle(5)).size, 2);

        let star = MisGraph::new(6, &[(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)]);
        let r = greedy_mis(&star);
        assert_eq!(r.size, 5);
        assert!(!r.chosen.contains(&0));

        assert_eq!(greedy_mis(&MisGraph::new(0, &[])).size, 0);
    }

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> MisGraph {
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen_bool(p) {
                    edges.push((a, b));
                }
            }
        }
        MisGraph::new(n, &edges)
    }

    #[test]
    fn exact_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..60 {
            let n = rng.gen_range(1..=16);
            let p = rng.gen_range(0.05..0.7);
            let g = random_graph(&mut rng, n, p);
            assert_eq!(exact_mis(&g, 60).unwrap().size, brute_force_mis(&g).size);
        }
    }

    #[test]
    fn tabu_reaches_exact_on_seeded_instance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = random_graph(&mut rng, 30, 0.2);
        let exact = exact_mis(&g, 60).unwrap().size;
        let tabu = tabu_mis(&g, 1, 10_000);
        assert_eq!(tabu.size, exact);
    }

    #[test]
    fn tabu_never_worse_than_greedy() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for seed in 0..20 {
            let n = rng.gen_range(5..=40);
            let p = rng.gen_range(0.05..0.5);
            let g = random_graph(&mut rng, n, p);
            assert!(tabu_mis(&g, seed, 500).size >= greedy_mis(&g).size);
        }
    }

    #[test]
    fn tabu_deterministic_for_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = random_graph(&mut rng, 40, 0.3);
        let a = tabu_mis(&g, 42, 2000);
        let b = tabu_mis(&g, 42, 2000);
        assert_eq!(a.chosen, b.chosen);
    }
}
