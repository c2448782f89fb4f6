//! Lower bounds on the initiation interval and modulo list scheduling with
//! quantitative input-port allocation.
//!
//! A virtual input whose reuse degree exceeds one bus worth of PEs asks for
//! `min(ceil(rd / pes_per_ibus), available ports)` input ports. When the
//! grant falls short (or PEs are scarce at its slot) the input is flagged so
//! the routing pre-allocation phase can serve the surplus consumers with
//! routing operations. Granted multi-port inputs are split into one virtual
//! input per port, each owning a consumer group that fits one bus.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::arch::ArchConfig;
use crate::dfg::{Dfg, DfgError, OpKind, OpNode};

/// Port allocation policy: `Quantitative` implements bandwidth-aware
/// multi-port grants, `SinglePort` pins every input to one port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortPolicy {
    Quantitative,
    SinglePort,
}

/// One consumer group of a (possibly split) virtual input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitGroup {
    /// The virtual input serving this group (the original for group 0).
    pub vin: String,
    pub consumers: Vec<String>,
}

/// A modulo schedule at a fixed initiation interval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub ii: usize,
    pub start_time: BTreeMap<String, usize>,
    /// Granted port count per original virtual input.
    pub port_alloc: BTreeMap<String, usize>,
    /// Virtual inputs whose bandwidth demand was not fully granted.
    pub shortfall: BTreeSet<String>,
    /// Original virtual input to its per-port consumer groups (only when
    /// a split happened, i.e. the grant was at least two ports).
    pub split_groups: BTreeMap<String, Vec<SplitGroup>>,
}

impl Schedule {
    pub fn start(&self, id: &str) -> usize {
        self.start_time[id]
    }

    pub fn slot(&self, id: &str) -> usize {
        self.start_time[id] % self.ii
    }
}

/// Scheduling failure: the op that exhausted its time window plus the slot
/// occupancy at that point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleFailure {
    pub op: String,
    pub ii: usize,
    pub pe_used: Vec<usize>,
    pub iport_used: Vec<usize>,
    pub oport_used: Vec<usize>,
}

impl fmt::Display for ScheduleFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cannot schedule '{}' at ii={} (pe use {:?}, iport use {:?}, oport use {:?})",
            self.op, self.ii, self.pe_used, self.iport_used, self.oport_used
        )
    }
}

impl std::error::Error for ScheduleFailure {}

/// Resource-constrained lower bound: the tightest per-class ceiling over PE,
/// input-port, and output-port demand.
pub fn res_mii(dfg: &Dfg, arch: &ArchConfig) -> usize {
    let pe_demand = dfg.nodes.iter().filter(|n| n.kind.uses_pe()).count();
    let port_claims: usize = dfg
        .nodes
        .iter()
        .filter(|n| n.kind == OpKind::Vin)
        .map(|n| dfg.consumers(&n.id).len().max(1).div_ceil(arch.pes_per_ibus()))
        .sum();
    let vout_demand = dfg.count_kind(OpKind::Vout);
    let classes = [
        pe_demand.div_ceil(arch.n_pes()),
        port_claims.div_ceil(arch.n_iports),
        vout_demand.div_ceil(arch.n_oports),
    ];
    classes.into_iter().max().unwrap().max(1)
}

/// True when no dependence cycle is over-tight at interval `ii`, i.e. the
/// graph weighted `latency - ii * distance` has no positive cycle.
pub fn rec_feasible(dfg: &Dfg, ii: usize) -> bool {
    let index: BTreeMap<&str, usize> =
        dfg.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let n = dfg.nodes.len();
    let edges: Vec<(usize, usize, i64)> = dfg
        .edges
        .iter()
        .map(|e| {
            let lat = dfg.node(&e.src).map(|s| s.latency).unwrap_or(0) as i64;
            (index[e.src.as_str()], index[e.dst.as_str()], lat - (ii * e.distance) as i64)
        })
        .collect();
    let mut dist = vec![0i64; n];
    for round in 0..=n {
        let mut changed = false;
        for &(u, v, w) in &edges {
            if dist[u] + w > dist[v] {
                dist[v] = dist[u] + w;
                changed = true;
            }
        }
        if !changed {
            return true;
        }
        if round == n {
            return false;
        }
    }
    true
}

/// Recurrence-constrained lower bound via binary search on the cycle
/// feasibility check. Errors when some cycle has total distance zero.
pub fn rec_mii(dfg: &Dfg) -> Result<usize, DfgError> {
    if dfg.nodes.is_empty() {
        return Ok(1);
    }
    let mut hi = dfg.nodes.iter().map(|n| n.latency).sum::<usize>().max(1);
    if !rec_feasible(dfg, hi) {
        return Err(DfgError {
            message: "dependence cycle with total distance 0".to_string(),
        });
    }
    let mut lo = 1;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if rec_feasible(dfg, mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(lo)
}

/// Minimum initiation interval: the larger of the two lower bounds.
pub fn mii(dfg: &Dfg, arch: &ArchConfig) -> Result<usize, DfgError> {
    Ok(res_mii(dfg, arch).max(rec_mii(dfg)?))
}

/// Port grant for a virtual input with reuse degree `rd`.
///
/// Returns `(q, shortfall)`. `q = 0` means no port is free at this slot and
/// the input cannot be placed there at all.
pub fn allocate_ports(rd: usize, pes_per_ibus: usize, available_iports: usize) -> (usize, bool) {
    if available_iports == 0 {
        return (0, true);
    }
    if rd <= pes_per_ibus {
        return (1, false);
    }
    let need = rd.div_ceil(pes_per_ibus);
    let q = need.min(available_iports);
    (q, q < need)
}

fn allocate_with_policy(
    rd: usize,
    pes_per_ibus: usize,
    available: usize,
    policy: PortPolicy,
    multicast: bool,
) -> (usize, bool) {
    let (q, _) = allocate_ports(rd, pes_per_ibus, available);
    let cap = if policy == PortPolicy::SinglePort || !multicast { 1 } else { usize::MAX };
    let q = q.min(cap);
    let shortfall = q != 0 && q < rd.max(1).div_ceil(pes_per_ibus);
    (q, shortfall)
}

/// Splits a granted multi-port virtual input into `q` copies, one per port.
///
/// Consumers are sorted by (start time, id) and chunked greedily into groups
/// of at most `pes_per_ibus`; any surplus beyond `q` full buses stays in the
/// last group for the routing phase to drain. Copies inherit the original's
/// start time slot and carry `origin` back-references.
pub fn split_vio(
    dfg: &Dfg,
    vin: &str,
    q: usize,
    start_time: &BTreeMap<String, usize>,
    pes_per_ibus: usize,
) -> Result<(Dfg, Vec<SplitGroup>), DfgError> {
    if q < 2 {
        return Err(DfgError { message: format!("split of '{}' needs q >= 2, got {}", vin, q) });
    }
    let node = dfg
        .node(vin)
        .ok_or_else(|| DfgError { message: format!("unknown node '{}'", vin) })?;
    if node.kind != OpKind::Vin {
        return Err(DfgError { message: format!("'{}' is not a vin", vin) });
    }
    let mut consumers: Vec<String> =
        dfg.consumers(vin).into_iter().map(|s| s.to_string()).collect();
    if q > consumers.len() {
        return Err(DfgError {
            message: format!(
                "cannot split '{}' into {} ports for {} consumers",
                vin,
                q,
                consumers.len()
            ),
        });
    }
    consumers.sort_by(|a, b| {
        let ta = start_time.get(a).copied().unwrap_or(0);
        let tb = start_time.get(b).copied().unwrap_or(0);
        (ta, a).cmp(&(tb, b))
    });

    let mut groups = Vec::with_capacity(q);
    let mut rest = consumers.as_slice();
    for g in 0..q {
        let take = if g + 1 == q { rest.len() } else { pes_per_ibus.min(rest.len()) };
        let (chunk, tail) = rest.split_at(take);
        let copy_id = if g == 0 { vin.to_string() } else { fresh_id(dfg, vin, g) };
        groups.push(SplitGroup { vin: copy_id, consumers: chunk.to_vec() });
        rest = tail;
    }

    let mut out = dfg.clone();
    for group in groups.iter().skip(1) {
        let mut copy = OpNode::new(group.vin.clone(), OpKind::Vin, 0);
        copy.origin = Some(vin.to_string());
        out.nodes.push(copy);
        for e in out.edges.iter_mut() {
            if e.src == vin && group.consumers.contains(&e.dst) {
                e.src = group.vin.clone();
            }
        }
    }
    Ok((out, groups))
}

fn fresh_id(dfg: &Dfg, base: &str, k: usize) -> String {
    let mut candidate = format!("{}@{}", base, k);
    let mut bump = 0;
    while dfg.node(&candidate).is_some() {
        bump += 1;
        candidate = format!("{}@{}x{}", base, k, bump);
    }
    candidate
}

/// Longest-latency path to any sink over distance-0 edges, per op.
fn heights(dfg: &Dfg) -> BTreeMap<String, usize> {
    let mut order: Vec<&OpNode> = Vec::new();
    let index: BTreeMap<&str, usize> =
        dfg.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let mut outdeg = vec![0usize; dfg.nodes.len()];
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); dfg.nodes.len()];
    for e in &dfg.edges {
        if e.distance == 0 {
            outdeg[index[e.src.as_str()]] += 1;
            preds[index[e.dst.as_str()]].push(index[e.src.as_str()]);
        }
    }
    let mut stack: Vec<usize> = (0..dfg.nodes.len()).filter(|&i| outdeg[i] == 0).collect();
    let mut h = vec![0usize; dfg.nodes.len()];
    while let Some(i) = stack.pop() {
        order.push(&dfg.nodes[i]);
        h[i] += dfg.nodes[i].latency;
        for &p in &preds[i] {
            h[p] = h[p].max(h[i]);
            outdeg[p] -= 1;
            if outdeg[p] == 0 {
                stack.push(p);
            }
        }
    }
    dfg.nodes.iter().enumerate().map(|(i, n)| (n.id.clone(), h[i])).collect()
}

/// Modulo list scheduling. Returns the scheduled (and possibly split) graph
/// together with the schedule, or the first op that exhausted its window.
pub fn schedule(
    dfg: &Dfg,
    arch: &ArchConfig,
    ii: usize,
    policy: PortPolicy,
) -> Result<(Dfg, Schedule), ScheduleFailure> {
    schedule_pinned(dfg, arch, ii, policy, &BTreeMap::new())
}

/// Like [`schedule`], with per-op minimum start times. Used by the routing
/// phase to hold inserted copy ops near the middle of a long value lifetime.
pub(crate) fn schedule_pinned(
    dfg: &Dfg,
    arch: &ArchConfig,
    ii: usize,
    policy: PortPolicy,
    pins: &BTreeMap<String, usize>,
) -> Result<(Dfg, Schedule), ScheduleFailure> {
    assert!(ii >= 1, "ii must be >= 1");
    let height = heights(dfg);
    let mut start: BTreeMap<String, usize> = BTreeMap::new();
    let mut port_alloc: BTreeMap<String, usize> = BTreeMap::new();
    let mut shortfall: BTreeSet<String> = BTreeSet::new();
    let mut pe_used = vec![0usize; ii];
    let mut iport_used = vec![0usize; ii];
    let mut oport_used = vec![0usize; ii];
    // Same-slot consumers of one virtual input must fit one bus row.
    let mut vin_slot_consumers: BTreeMap<(String, usize), usize> = BTreeMap::new();
    // A computing producer reaches few PEs within one cycle (itself plus
    // the mesh), so its same-slot fanout is capped to keep room for
    // competing broadcast blocks.
    const SLOT_FANOUT_CAP: usize = 3;
    let mut producer_slot_consumers: BTreeMap<(String, usize), usize> = BTreeMap::new();

    let fail = |op: &str, pe: &[usize], ip: &[usize], op_used: &[usize]| ScheduleFailure {
        op: op.to_string(),
        ii,
        pe_used: pe.to_vec(),
        iport_used: ip.to_vec(),
        oport_used: op_used.to_vec(),
    };

    let mut remaining: BTreeSet<&str> = dfg.node_ids().collect();
    while !remaining.is_empty() {
        // Ready: every distance-0 predecessor already placed. Highest
        // height first, then lexicographic id.
        let mut pick: Option<&str> = None;
        for id in remaining.iter().copied() {
            let ready = dfg
                .edges
                .iter()
                .filter(|e| e.distance == 0 && e.dst == id)
                .all(|e| start.contains_key(&e.src));
            if !ready {
                continue;
            }
            let better = match pick {
                None => true,
                Some(cur) => {
                    (height[id], std::cmp::Reverse(id)) > (height[cur], std::cmp::Reverse(cur))
                }
            };
            if better {
                pick = Some(id);
            }
        }
        let pick = pick.expect("distance-0 subgraph is acyclic");
        let node = dfg.node(pick).unwrap();

        let mut earliest = pins.get(pick).copied().unwrap_or(0);
        let mut latest = usize::MAX;
        for e in &dfg.edges {
            if e.dst == pick {
                if let Some(&su) = start.get(&e.src) {
                    let lat = dfg.node(&e.src).unwrap().latency;
                    let bound = (su + lat) as i64 - (e.distance * ii) as i64;
                    if bound > 0 {
                        earliest = earliest.max(bound as usize);
                    }
                }
            }
            if e.src == pick && e.distance >= 1 {
                if let Some(&sv) = start.get(&e.dst) {
                    let bound = (sv + e.distance * ii) as i64 - node.latency as i64;
                    if bound < 0 {
                        latest = 0;
                    } else {
                        latest = latest.min(bound as usize);
                    }
                }
            }
        }

        let mut placed = false;
        for t in earliest..earliest + ii {
            if t > latest {
                break;
            }
            let m = t % ii;
            match node.kind {
                OpKind::Comp | OpKind::Route => {
                    let mut vin_operands: Vec<&str> = Vec::new();
                    let mut pe_producers: Vec<&str> = Vec::new();
                    for e in dfg.edges.iter().filter(|e| e.dst == pick) {
                        match dfg.node(&e.src).map(|n| n.kind) {
                            Some(OpKind::Vin) => vin_operands.push(&e.src),
                            Some(k) if k.uses_pe() && start.contains_key(&e.src) => {
                                pe_producers.push(&e.src)
                            }
                            _ => {}
                        }
                    }
                    vin_operands.sort_unstable();
                    vin_operands.dedup();
                    pe_producers.sort_unstable();
                    pe_producers.dedup();
                    let row_fits = vin_operands.iter().all(|v| {
                        vin_slot_consumers.get(&(v.to_string(), m)).copied().unwrap_or(0)
                            < arch.pes_per_ibus()
                    });
                    let reach_fits = pe_producers.iter().all(|p| {
                        producer_slot_consumers.get(&(p.to_string(), m)).copied().unwrap_or(0)
                            < SLOT_FANOUT_CAP
                    });
                    if row_fits && reach_fits && pe_used[m] < arch.n_pes() {
                        pe_used[m] += 1;
                        for v in vin_operands {
                            *vin_slot_consumers.entry((v.to_string(), m)).or_insert(0) += 1;
                        }
                        for p in pe_producers {
                            *producer_slot_consumers.entry((p.to_string(), m)).or_insert(0) += 1;
                        }
                        start.insert(pick.to_string(), t);
                        placed = true;
                    }
                }
                OpKind::Vout => {
                    if oport_used[m] < arch.n_oports {
                        oport_used[m] += 1;
                        start.insert(pick.to_string(), t);
                        placed = true;
                    }
                }
                OpKind::Vin => {
                    let rd = dfg.consumers(pick).len();
                    let available = arch.n_iports - iport_used[m];
                    let (q, short) = allocate_with_policy(
                        rd,
                        arch.pes_per_ibus(),
                        available,
                        policy,
                        arch.multicast,
                    );
                    if q == 0 {
                        continue;
                    }
                    iport_used[m] += q;
                    port_alloc.insert(pick.to_string(), q);
                    // Scarce PEs at this slot also call for routing help.
                    if short || arch.n_pes() - pe_used[m] < rd {
                        shortfall.insert(pick.to_string());
                    }
                    start.insert(pick.to_string(), t);
                    placed = true;
                }
            }
            if placed {
                break;
            }
        }
        if !placed {
            return Err(fail(pick, &pe_used, &iport_used, &oport_used));
        }
        remaining.remove(pick);
    }

    // Split every multi-port grant into one vin per port.
    let mut out_dfg = dfg.clone();
    let mut split_groups: BTreeMap<String, Vec<SplitGroup>> = BTreeMap::new();
    let grants: Vec<(String, usize)> =
        port_alloc.iter().filter(|(_, &q)| q >= 2).map(|(v, &q)| (v.clone(), q)).collect();
    for (vin, q) in grants {
        let (next, groups) = split_vio(&out_dfg, &vin, q, &start, arch.pes_per_ibus())
            .expect("grant respects consumer count");
        let t = start[&vin];
        for g in groups.iter().skip(1) {
            start.insert(g.vin.clone(), t);
        }
        out_dfg = next;
        split_groups.insert(vin, groups);
    }

    Ok((
        out_dfg,
        Schedule { ii, start_time: start, port_alloc, shortfall, split_groups },
    ))
}
