//! Binding and the top-level mapping driver.
//!
//! Binding builds the conflict graph over the scheduled graph's candidate
//! occupations and solves maximum independent set: one vertex per op means a
//! feasible binding. The driver walks the interval upward from the lower
//! bound, runs scheduling, routing pre-allocation, and binding, repairs
//! incomplete bindings by inserting routing ops (three rounds), and accepts
//! the first mapping the independent validator passes clean.

use std::collections::{BTreeMap, BTreeSet};

use crate::arch::{build_tec, ArchConfig, BusId, PeId, PortId};
use crate::conflict::{build_conflict_graph, CgVertex, ConflictGraph};
use crate::dfg::{validate_dfg, DepEdge, Dfg, DfgError, OpKind, OpNode};
use crate::mis::{default_budget, exact_mis, tabu_mis, MisResult};
use crate::route::{count_routing_ops, insert_routing_ops, AugmentedSchedule};
use crate::sched::{mii, schedule, PortPolicy, Schedule};
use crate::validate::check_mapping;

/// Operating mode: bandwidth-aware port allocation or the single-port
/// reference behavior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapMode {
    Bandmap,
    Baseline,
}

impl MapMode {
    pub fn policy(self) -> PortPolicy {
        match self {
            MapMode::Bandmap => PortPolicy::Quantitative,
            MapMode::Baseline => PortPolicy::SinglePort,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MapMode::Bandmap => "bandmap",
            MapMode::Baseline => "baseline",
        }
    }
}

/// One op's chosen resource occupation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Assignment {
    Port { port: PortId, slot: usize },
    Pe { pe: PeId, ibus: Option<BusId>, obus: Option<BusId>, slot: usize },
}

impl Assignment {
    fn from_vertex(v: &CgVertex) -> Self {
        match v {
            CgVertex::Tuple(t) => Assignment::Port { port: t.port, slot: t.slot },
            CgVertex::Quad(q) => {
                Assignment::Pe { pe: q.pe, ibus: q.ibus, obus: q.obus, slot: q.slot }
            }
        }
    }
}

/// A complete binding of every op to one occupation.
#[derive(Debug, Clone)]
pub struct Mapping {
    pub ii: usize,
    pub assignment: BTreeMap<String, Assignment>,
    pub dfg: Dfg,
    pub schedule: Schedule,
}

/// Binding result: complete, or the ops left without a vertex plus the
/// conflict graph for repair analysis.
#[derive(Debug)]
pub enum BindOutcome {
    Complete(Mapping),
    Incomplete { unmapped: Vec<String>, cg: ConflictGraph },
}

/// Min-conflicts completion: repeatedly give each uncovered op its least
/// conflicting candidate, evicting and re-queuing the ops it displaces. An
/// eviction penalty steers the walk away from cycles. Deterministic; keeps
/// the best cover seen.
fn polish_cover(
    cg: &ConflictGraph,
    g: &crate::mis::MisGraph,
    chosen: &mut BTreeSet<usize>,
) {
    let vertex_op: Vec<&str> = cg.vertices.iter().map(|v| v.op()).collect();
    let mut covered: BTreeMap<&str, usize> = BTreeMap::new();
    for &v in chosen.iter() {
        covered.insert(vertex_op[v], v);
    }
    let mut queue: std::collections::VecDeque<&str> = cg
        .op_ranges
        .keys()
        .map(|s| s.as_str())
        .filter(|op| !covered.contains_key(*op))
        .collect();
    let mut evict_count = vec![0usize; cg.vertices.len()];
    let mut best_cover = covered.clone();
    let mut steps = 0usize;
    let budget = 60 * cg.op_ranges.len().max(1);

    while let Some(op) = queue.pop_front() {
        if steps >= budget {
            break;
        }
        steps += 1;
        if covered.contains_key(op) {
            continue;
        }
        let &(lo, hi) = cg.op_ranges.get(op).expect("queued ops exist");
        if lo == hi {
            continue;
        }
        let mut best: Option<(usize, usize)> = None;
        for i in lo..hi {
            let clash = covered.values().filter(|&&u| g.has_edge(i, u)).count();
            let score = clash + evict_count[i];
            if best.map(|(s, _)| score < s).unwrap_or(true) {
                best = Some((score, i));
            }
        }
        let (_, pick) = best.unwrap();
        let displaced: Vec<(&str, usize)> = covered
            .iter()
            .filter(|(_, &u)| g.has_edge(pick, u))
            .map(|(op, &u)| (*op, u))
            .collect();
        for (dop, u) in displaced {
            covered.remove(dop);
            evict_count[u] += 1;
            queue.push_back(dop);
        }
        covered.insert(vertex_op[pick], pick);
        if covered.len() > best_cover.len() {
            best_cover = covered.clone();
            if best_cover.len() == cg.op_ranges.len() {
                break;
            }
        }
    }
    *chosen = best_cover.values().copied().collect();
}

/// Binds the scheduled graph by solving MIS on its conflict graph. Small
/// graphs are solved exactly; larger ones run seeded tabu restarts (reduced
/// by size then lowest seed) followed by a deterministic min-conflicts
/// completion pass when coverage falls short by a few ops.
pub fn bind(aug: &AugmentedSchedule, arch: &ArchConfig, seed: u64) -> BindOutcome {
    let tec = build_tec(arch, aug.schedule.ii).expect("ii >= 1");
    let cg = build_conflict_graph(aug, &tec, arch);
    let g = cg.mis_graph();
    let n_ops = aug.dfg.nodes.len();

    let mut chosen: BTreeSet<usize> = if g.len() <= 60 {
        exact_mis(&g, 60).expect("within exact-solver limit").chosen
    } else {
        let budget = default_budget(g.len());
        let mut best: Option<BTreeSet<usize>> = None;
        for k in 0..4u64 {
            let r = tabu_mis(&g, seed.wrapping_add(k), budget);
            let mut cover = r.chosen;
            if cover.len() < n_ops {
                polish_cover(&cg, &g, &mut cover);
            }
            if best.as_ref().map(|b| cover.len() > b.len()).unwrap_or(true) {
                best = Some(cover);
            }
            if best.as_ref().unwrap().len() == n_ops {
                break;
            }
        }
        best.unwrap()
    };

    // The completion pass can only have produced an independent set; guard
    // against regressions all the same.
    let chosen_vec: Vec<usize> = chosen.iter().copied().collect();
    for (i, &a) in chosen_vec.iter().enumerate() {
        for &b in &chosen_vec[i + 1..] {
            if g.has_edge(a, b) {
                chosen.remove(&b);
            }
        }
    }

    let mut assignment: BTreeMap<String, Assignment> = BTreeMap::new();
    for &v in &chosen {
        let vert = &cg.vertices[v];
        assignment.insert(vert.op().to_string(), Assignment::from_vertex(vert));
    }
    let unmapped: Vec<String> = aug
        .dfg
        .nodes
        .iter()
        .filter(|n| !assignment.contains_key(&n.id))
        .map(|n| n.id.clone())
        .collect();
    if unmapped.is_empty() {
        BindOutcome::Complete(Mapping {
            ii: aug.schedule.ii,
            assignment,
            dfg: aug.dfg.clone(),
            schedule: aug.schedule.clone(),
        })
    } else {
        BindOutcome::Incomplete { unmapped, cg }
    }
}

/// Repairs an incomplete binding. For each unmapped computing or routing op
/// the most conflicted incoming dependence gets a routing op, and the
/// trailing half of the producer's same-slot consumers move onto it so the
/// producer's same-cycle fanout actually shrinks. Reschedules at the same
/// interval; returns `Ok(None)` to signal escalation when nothing is
/// repairable or the reschedule fails.
pub fn handle_incomplete(
    unmapped: &[String],
    cg: &ConflictGraph,
    aug: &AugmentedSchedule,
    arch: &ArchConfig,
    policy: PortPolicy,
) -> Result<Option<AugmentedSchedule>, DfgError> {
    if unmapped.is_empty() {
        return Err(DfgError { message: "handle_incomplete needs at least one unmapped op".into() });
    }
    let mut dfg = aug.dfg.clone();
    let mut counter = 0usize;
    let mut repaired = false;
    let mut handled: Vec<String> = Vec::new();
    for op in unmapped {
        if handled.contains(op) {
            continue;
        }
        let Some(node) = aug.dfg.node(op) else { continue };
        if !node.kind.uses_pe() {
            continue;
        }
        let in_edges: Vec<&DepEdge> = aug
            .dfg
            .edges
            .iter()
            .filter(|e| e.dst == *op && e.distance == 0)
            .collect();
        // Most conflicted incoming dependence: count conflict edges between
        // the two ops' candidate ranges. An unmapped source op (nothing
        // upstream to split) instead sheds its own fanout onto the route.
        let mut best_src: Option<(&str, usize)> = None;
        for e in &in_edges {
            let (Some(&ra), Some(&rb)) = (cg.op_ranges.get(&e.src), cg.op_ranges.get(op.as_str()))
            else {
                continue;
            };
            let count = cg
                .edges
                .iter()
                .filter(|(a, b)| {
                    (ra.0 <= *a && *a < ra.1 && rb.0 <= *b && *b < rb.1)
                        || (rb.0 <= *a && *a < rb.1 && ra.0 <= *b && *b < ra.1)
                })
                .count();
            let better = match best_src {
                None => true,
                Some((cur, cur_count)) => {
                    count > cur_count || (count == cur_count && e.src.as_str() < cur)
                }
            };
            if better {
                best_src = Some((&e.src, count));
            }
        }
        let src = match (best_src, in_edges.first()) {
            (Some((s, _)), _) => s.to_string(),
            (None, Some(e)) => e.src.clone(),
            (None, None) => op.clone(),
        };

        // Same-slot sibling consumers of that producer; rerouting the
        // trailing half relieves the producer's one-cycle broadcast reach.
        let slot = if src == *op {
            // The op's own consumers crowd some slot; relieve the busiest.
            let mut per_slot: BTreeMap<usize, usize> = BTreeMap::new();
            for e in dfg.edges.iter().filter(|e| e.src == *op && e.distance == 0) {
                if let Some(&t) = aug.schedule.start_time.get(&e.dst) {
                    *per_slot.entry(t % aug.schedule.ii).or_insert(0) += 1;
                }
            }
            match per_slot.iter().max_by_key(|(slot, n)| (**n, std::cmp::Reverse(**slot))) {
                Some((&slot, _)) => slot,
                None => continue,
            }
        } else {
            aug.schedule.slot(op)
        };
        let mut siblings: Vec<String> = dfg
            .edges
            .iter()
            .filter(|e| {
                e.src == src
                    && e.distance == 0
                    && dfg.node(&e.dst).map(|n| n.kind.uses_pe()).unwrap_or(false)
                    && aug.schedule.start_time.get(&e.dst).map(|t| t % aug.schedule.ii)
                        == Some(slot)
            })
            .map(|e| e.dst.clone())
            .collect();
        siblings.sort_by_key(|c| (aug.schedule.start_time.get(c).copied().unwrap_or(0), c.clone()));
        siblings.dedup();
        if siblings.is_empty() {
            continue;
        }
        // Trailing ceil(half): the kept head plus the route itself must fit
        // the producer's one-cycle reach.
        let mut moved: Vec<String> = siblings.split_off(siblings.len() / 2);
        if src != *op && !moved.contains(op) {
            moved.push(op.clone());
        }

        let route_id = loop {
            let id = format!("fix{}", counter);
            counter += 1;
            if dfg.node(&id).is_none() {
                break id;
            }
        };
        dfg.nodes.push(OpNode::new(route_id.clone(), OpKind::Route, 1));
        dfg.edges.push(DepEdge::new(src.clone(), route_id.clone(), 0));
        for c in &moved {
            dfg.edges.retain(|e| !(e.src == src && e.dst == *c && e.distance == 0));
            dfg.edges.push(DepEdge::new(route_id.clone(), c.clone(), 0));
            handled.push(c.clone());
        }
        repaired = true;
    }
    if !repaired {
        return Ok(None);
    }
    let Ok((sdfg, sched)) = schedule(&dfg, arch, aug.schedule.ii, policy) else {
        return Ok(None);
    };
    match insert_routing_ops(&sdfg, &sched, arch, policy) {
        Ok(next) => Ok(Some(next)),
        Err(_) => Ok(None),
    }
}

/// One binding attempt at a fixed interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Attempt {
    pub ii: usize,
    pub mis: usize,
    pub ops: usize,
}

/// End-to-end mapping outcome for one graph, architecture, and mode.
#[derive(Debug, Clone)]
pub struct MapReport {
    pub mode: MapMode,
    pub mii: usize,
    pub achieved_ii: Option<usize>,
    pub routing_pes: usize,
    pub attempts: Vec<Attempt>,
    pub mapping: Option<Mapping>,
    pub failure: Option<String>,
}

impl MapReport {
    pub fn ratio(&self) -> Option<f64> {
        self.achieved_ii.map(|ii| self.mii as f64 / ii as f64)
    }
}

/// Maps a graph: for each interval from the lower bound up, schedule,
/// pre-allocate routing, bind, and repair up to three rounds; the first
/// validator-clean mapping wins.
pub fn map_application(
    dfg: &Dfg,
    arch: &ArchConfig,
    mode: MapMode,
    seed: u64,
    max_ii: usize,
) -> Result<MapReport, DfgError> {
    let diags = validate_dfg(dfg);
    if let Some(first) = diags.first() {
        return Err(DfgError { message: first.clone() });
    }
    let policy = mode.policy();
    let lower = mii(dfg, arch)?;
    let mut attempts = Vec::new();

    for ii in lower..=max_ii.max(lower) {
        let Ok((sdfg, sched)) = schedule(dfg, arch, ii, policy) else {
            attempts.push(Attempt { ii, mis: 0, ops: dfg.nodes.len() });
            continue;
        };
        let Ok(mut aug) = insert_routing_ops(&sdfg, &sched, arch, policy) else {
            attempts.push(Attempt { ii, mis: 0, ops: sdfg.nodes.len() });
            continue;
        };
        let mut rounds = 0;
        loop {
            match bind(&aug, arch, seed) {
                BindOutcome::Complete(mapping) => {
                    let ops = aug.dfg.nodes.len();
                    let violations = check_mapping(&mapping, arch);
                    attempts.push(Attempt { ii, mis: mapping.assignment.len(), ops });
                    if violations.is_empty() {
                        let routing_pes = count_routing_ops(&mapping.dfg);
                        return Ok(MapReport {
                            mode,
                            mii: lower,
                            achieved_ii: Some(ii),
                            routing_pes,
                            attempts,
                            mapping: Some(mapping),
                            failure: None,
                        });
                    }
                    break;
                }
                BindOutcome::Incomplete { unmapped, cg } => {
                    let ops = aug.dfg.nodes.len();
                    if rounds >= 3 {
                        attempts.push(Attempt { ii, mis: ops - unmapped.len(), ops });
                        break;
                    }
                    match handle_incomplete(&unmapped, &cg, &aug, arch, policy)? {
                        Some(next) => {
                            aug = next;
                            rounds += 1;
                        }
                        None => {
                            attempts.push(Attempt { ii, mis: ops - unmapped.len(), ops });
                            break;
                        }
                    }
                }
            }
        }
    }

    Ok(MapReport {
        mode,
        mii: lower,
        achieved_ii: None,
        routing_pes: 0,
        attempts,
        mapping: None,
        failure: Some(format!("no feasible mapping up to ii={}", max_ii.max(lower))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfg::gen_cnkm;

    fn arch4() -> ArchConfig {
        ArchConfig::default()
    }

    fn aug_for(dfg: &Dfg, arch: &ArchConfig, ii: usize) -> AugmentedSchedule {
        let (d, s) = schedule(dfg, arch, ii, PortPolicy::Quantitative).unwrap();
        insert_routing_ops(&d, &s, arch, PortPolicy::Quantitative).unwrap()
    }

    #[test]
    fn binds_c2k4_completely_at_ii_1() {
        let d = gen_cnkm(2, 4).unwrap();
        let aug = aug_for(&d, &arch4(), 1);
        match bind(&aug, &arch4(), 7) {
            BindOutcome::Complete(m) => {
                assert_eq!(m.assignment.len(), 18);
                assert!(check_mapping(&m, &arch4()).is_empty());
            }
            BindOutcome::Incomplete { unmapped, .. } => {
                panic!("expected complete binding, {} ops unmapped", unmapped.len())
            }
        }
    }

    #[test]
    fn pigeonhole_overload_is_incomplete() {
        // Seventeen same-slot ops cannot fit sixteen PEs; build the
        // schedule by hand since the scheduler itself would refuse.
        let mut d = Dfg::default();
        let mut start = BTreeMap::new();
        for i in 0..17 {
            let id = format!("n{:02}", i);
            d.nodes.push(OpNode::new(id.clone(), OpKind::Comp, 1));
            start.insert(id, 0);
        }
        let sched = Schedule {
            ii: 1,
            start_time: start,
            port_alloc: BTreeMap::new(),
            shortfall: Default::default(),
            split_groups: BTreeMap::new(),
        };
        let aug = AugmentedSchedule { dfg: d, schedule: sched, route_count: 0 };
        match bind(&aug, &arch4(), 1) {
            BindOutcome::Incomplete { unmapped, .. } => assert!(!unmapped.is_empty()),
            BindOutcome::Complete(_) => panic!("17 ops cannot fit 16 PEs"),
        }
    }

    #[test]
    fn binds_single_op_on_single_pe() {
        let mut d = Dfg::default();
        d.nodes.push(OpNode::new("a", OpKind::Comp, 1));
        let one = ArchConfig { rows: 1, cols: 1, n_iports: 1, n_oports: 1, ..arch4() };
        let aug = aug_for(&d, &one, 1);
        match bind(&aug, &one, 0) {
            BindOutcome::Complete(m) => {
                assert_eq!(m.assignment.len(), 1);
                assert!(matches!(
                    m.assignment["a"],
                    Assignment::Pe { pe: PeId { row: 0, col: 0 }, .. }
                ));
            }
            _ => panic!("single op must bind"),
        }
    }

    #[test]
    fn handle_incomplete_requires_unmapped_ops() {
        let d = gen_cnkm(1, 1).unwrap();
        let aug = aug_for(&d, &arch4(), 1);
        let tec = build_tec(&arch4(), 1).unwrap();
        let cg = build_conflict_graph(&aug, &tec, &arch4());
        assert!(handle_incomplete(&[], &cg, &aug, &arch4(), PortPolicy::Quantitative).is_err());
    }

    #[test]
    fn repair_inserts_route_and_recovers() {
        // A one-row array: a producer can reach at most three same-slot
        // consumers (own PE next slot is taken, two mesh neighbors, no
        // column bus with a single row). Five fanout consumers at the same
        // slot leave at least one unmapped, and a routing op fixes it.
        let mut d = Dfg::default();
        d.nodes.push(OpNode::new("a", OpKind::Comp, 1));
        for i in 0..5 {
            let c = format!("c{}", i);
            d.nodes.push(OpNode::new(c.clone(), OpKind::Comp, 1));
            d.edges.push(DepEdge::new("a", &c, 0));
        }
        let arch = ArchConfig { rows: 1, cols: 8, ..arch4() };
        let report = map_application(&d, &arch, MapMode::Bandmap, 3, 8).unwrap();
        let mapping = report.mapping.expect("repairable");
        assert!(report.routing_pes >= 1, "expected at least one inserted route");
        assert!(check_mapping(&mapping, &arch).is_empty());
    }

    #[test]
    fn map_application_is_deterministic() {
        let d = gen_cnkm(3, 6).unwrap();
        let a = map_application(&d, &arch4(), MapMode::Bandmap, 11, 8).unwrap();
        let b = map_application(&d, &arch4(), MapMode::Bandmap, 11, 8).unwrap();
        assert_eq!(a.achieved_ii, b.achieved_ii);
        assert_eq!(a.routing_pes, b.routing_pes);
        assert_eq!(a.attempts, b.attempts);
        let (ma, mb) = (a.mapping.unwrap(), b.mapping.unwrap());
        assert_eq!(ma.assignment, mb.assignment);
    }

    #[test]
    fn attempts_strictly_increase_in_ii() {
        let d = gen_cnkm(5, 5).unwrap();
        let report = map_application(&d, &arch4(), MapMode::Baseline, 1, 10).unwrap();
        for w in report.attempts.windows(2) {
            assert!(w[0].ii < w[1].ii);
        }
        assert!(report.achieved_ii.unwrap() >= report.mii);
    }
}
