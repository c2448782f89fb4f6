//! Routing-operation pre-allocation.
//!
//! Serves two needs the scheduled graph cannot meet on its own:
//! * A flagged virtual input whose consumers outnumber its granted bus
//!   capacity gets a broadcast chain of routing ops; the surplus consumers
//!   are rewired onto the chain.
//! * A transfer no single medium can realize gets a routing op in the
//!   middle: a virtual input feeding a virtual output directly, and a value
//!   whose hold time would overflow one local register file.
//!
//! After every insertion round the augmented graph is rescheduled from
//! scratch at the same interval. Reapplying the pass to its own output
//! inserts nothing.

use std::collections::BTreeMap;

use crate::arch::ArchConfig;
use crate::dfg::{DepEdge, Dfg, OpKind, OpNode};
use crate::sched::{schedule_pinned, PortPolicy, Schedule, ScheduleFailure};

/// A scheduled graph augmented with routing operations.
#[derive(Debug, Clone)]
pub struct AugmentedSchedule {
    pub dfg: Dfg,
    pub schedule: Schedule,
    pub route_count: usize,
}

/// Number of routing operations in the graph.
pub fn count_routing_ops(dfg: &Dfg) -> usize {
    dfg.count_kind(OpKind::Route)
}

/// Consumers a single routing op can serve in one cycle: its four mesh
/// neighbors plus the other readers of its column bus.
fn fanout_cap(arch: &ArchConfig) -> usize {
    4 + arch.rows - 1
}

fn fresh_route_id(dfg: &Dfg, counter: &mut usize) -> String {
    loop {
        let id = format!("rt{}", *counter);
        *counter += 1;
        if dfg.node(&id).is_none() {
            return id;
        }
    }
}

/// Inserts routing operations for flagged inputs and unrealizable transfers,
/// then reschedules at the same interval. Fails when the augmented graph no
/// longer fits the interval.
pub fn insert_routing_ops(
    dfg: &Dfg,
    sched: &Schedule,
    arch: &ArchConfig,
    policy: PortPolicy,
) -> Result<AugmentedSchedule, ScheduleFailure> {
    let ii = sched.ii;
    let mut cur_dfg = dfg.clone();
    let mut cur_sched = sched.clone();
    let mut counter = 0usize;

    for _round in 0..8 {
        let mut pins: BTreeMap<String, usize> = BTreeMap::new();
        let mut did_insert = false;

        // Bandwidth shortfalls, judged per original input over consumers
        // that are not already routing ops.
        let flagged: Vec<String> = cur_sched.shortfall.iter().cloned().collect();
        for vin in flagged {
            if cur_dfg.node(&vin).is_none() {
                continue;
            }
            let q = cur_sched.port_alloc.get(&vin).copied().unwrap_or(1);
            let family: Vec<String> = std::iter::once(vin.clone())
                .chain(
                    cur_dfg
                        .nodes
                        .iter()
                        .filter(|n| n.origin.as_deref() == Some(vin.as_str()))
                        .map(|n| n.id.clone()),
                )
                .collect();
            let mut direct: Vec<(String, String, usize)> = Vec::new();
            for member in &family {
                for e in &cur_dfg.edges {
                    if e.src == *member
                        && cur_dfg.node(&e.dst).map(|n| n.kind != OpKind::Route).unwrap_or(false)
                    {
                        direct.push((e.dst.clone(), member.clone(), e.distance));
                    }
                }
            }
            direct.sort_by(|a, b| {
                let ta = cur_sched.start_time.get(&a.0).copied().unwrap_or(0);
                let tb = cur_sched.start_time.get(&b.0).copied().unwrap_or(0);
                (ta, &a.0).cmp(&(tb, &b.0))
            });
            // Residual demand beyond the granted buses. Consumers latch
            // without occupying an execution seat, so PE pressure alone
            // (which can also raise the flag) asks for no insertion here.
            let cap_bus = q * arch.pes_per_ibus();
            let d = direct.len().saturating_sub(cap_bus);
            if d == 0 {
                continue;
            }
            let cap = fanout_cap(arch);
            let n_routes = d.div_ceil(cap);
            let routes: Vec<String> =
                (0..n_routes).map(|_| fresh_route_id(&cur_dfg, &mut counter)).collect();
            let moved: Vec<(String, usize, usize)> = direct[direct.len() - d..]
                .iter()
                .enumerate()
                .map(|(i, (c, _, dist))| (c.clone(), i / cap, *dist))
                .collect();

            // Rewire: surplus consumers leave the vin family for the chain.
            let mut prev = vin.clone();
            for r in &routes {
                cur_dfg.nodes.push(OpNode::new(r.clone(), OpKind::Route, 1));
                cur_dfg.edges.push(DepEdge::new(prev.clone(), r.clone(), 0));
                prev = r.clone();
            }
            for (consumer, chain_idx, distance) in &moved {
                let members: Vec<&String> = family.iter().collect();
                cur_dfg.edges.retain(|e| {
                    !(e.dst == *consumer && members.iter().any(|m| **m == e.src))
                });
                cur_dfg
                    .edges
                    .push(DepEdge::new(routes[*chain_idx].clone(), consumer.clone(), *distance));
            }
            did_insert = true;
        }

        // Direct vin-to-vout transfers have no medium; bridge them.
        let bridges: Vec<(String, String, usize)> = cur_dfg
            .edges
            .iter()
            .filter(|e| {
                cur_dfg.node(&e.src).map(|n| n.kind == OpKind::Vin).unwrap_or(false)
                    && cur_dfg.node(&e.dst).map(|n| n.kind == OpKind::Vout).unwrap_or(false)
            })
            .map(|e| (e.src.clone(), e.dst.clone(), e.distance))
            .collect();
        for (src, dst, dist) in bridges {
            let r = fresh_route_id(&cur_dfg, &mut counter);
            cur_dfg.nodes.push(OpNode::new(r.clone(), OpKind::Route, 1));
            cur_dfg.edges.retain(|e| !(e.src == src && e.dst == dst && e.distance == dist));
            cur_dfg.edges.push(DepEdge::new(src.clone(), r.clone(), 0));
            cur_dfg.edges.push(DepEdge::new(r.clone(), dst.clone(), dist));
            did_insert = true;
        }

        // Values held longer than one register file can carry get copy ops
        // pinned near evenly spaced points of the lifetime.
        let lrf_window = arch.lrf_capacity * ii;
        let long_edges: Vec<(String, String)> = cur_dfg
            .edges
            .iter()
            .filter(|e| {
                if e.distance != 0 {
                    return false;
                }
                let (Some(u), Some(v)) = (cur_dfg.node(&e.src), cur_dfg.node(&e.dst)) else {
                    return false;
                };
                if !u.kind.uses_pe() || !v.kind.uses_pe() {
                    return false;
                }
                // Nodes inserted this round have no start yet; the next
                // round sees them scheduled.
                let (Some(&su), Some(&sv)) =
                    (cur_sched.start_time.get(&e.src), cur_sched.start_time.get(&e.dst))
                else {
                    return false;
                };
                let ready = su + u.latency;
                let held = sv + 1 - ready;
                held.div_ceil(ii) > arch.lrf_capacity
            })
            .map(|e| (e.src.clone(), e.dst.clone()))
            .collect();
        for (src, dst) in long_edges {
            let lat = cur_dfg.node(&src).unwrap().latency;
            let ready = cur_sched.start(&src) + lat;
            let held = cur_sched.start(&dst) + 1 - ready;
            let k = held.div_ceil(lrf_window) - 1;
            let seg = held.div_ceil(k + 1);
            let routes: Vec<String> =
                (0..k).map(|_| fresh_route_id(&cur_dfg, &mut counter)).collect();
            let mut prev = src.clone();
            for (i, r) in routes.iter().enumerate() {
                cur_dfg.nodes.push(OpNode::new(r.clone(), OpKind::Route, 1));
                cur_dfg.edges.push(DepEdge::new(prev.clone(), r.clone(), 0));
                pins.insert(r.clone(), ready + (i + 1) * seg - 1);
                prev = r.clone();
            }
            cur_dfg.edges.retain(|e| !(e.src == src && e.dst == dst && e.distance == 0));
            cur_dfg.edges.push(DepEdge::new(prev, dst, 0));
            did_insert = true;
        }

        if !did_insert {
            break;
        }
        let (next_dfg, next_sched) = schedule_pinned(&cur_dfg, arch, ii, policy, &pins)?;
        cur_dfg = next_dfg;
        cur_sched = next_sched;
    }

    let route_count = count_routing_ops(&cur_dfg);
    Ok(AugmentedSchedule { dfg: cur_dfg, schedule: cur_sched, route_count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dfg::gen_cnkm;
    use crate::sched::schedule;

    fn arch4() -> ArchConfig {
        ArchConfig::default()
    }

    fn fan_dfg(rd: usize) -> Dfg {
        let mut d = Dfg::default();
        d.nodes.push(OpNode::new("I", OpKind::Vin, 0));
        for i in 0..rd {
            let c = format!("c{}", i);
            d.nodes.push(OpNode::new(c.clone(), OpKind::Comp, 1));
            d.edges.push(DepEdge::new("I", &c, 0));
        }
        d
    }

    #[test]
    fn no_shortfall_is_identity() {
        let d = gen_cnkm(2, 4).unwrap();
        let (d, s) = schedule(&d, &arch4(), 1, PortPolicy::Quantitative).unwrap();
        let aug = insert_routing_ops(&d, &s, &arch4(), PortPolicy::Quantitative).unwrap();
        assert_eq!(aug.route_count, 0);
        assert_eq!(aug.dfg.nodes.len(), d.nodes.len());
    }

    #[test]
    fn single_consumer_is_identity() {
        let d = fan_dfg(1);
        let (d, s) = schedule(&d, &arch4(), 1, PortPolicy::Quantitative).unwrap();
        let aug = insert_routing_ops(&d, &s, &arch4(), PortPolicy::Quantitative).unwrap();
        assert_eq!(aug.route_count, 0);
    }

    #[test]
    fn capped_grant_gets_one_route_for_five_consumers() {
        // One port available, nine consumers, four PEs per bus: residual 5.
        let d = fan_dfg(9);
        let arch = ArchConfig { n_iports: 1, ..arch4() };
        let (d, s) = schedule(&d, &arch, 2, PortPolicy::Quantitative).unwrap();
        assert!(s.shortfall.contains("I"));
        assert_eq!(s.port_alloc["I"], 1);
        let aug = insert_routing_ops(&d, &s, &arch, PortPolicy::Quantitative).unwrap();
        assert_eq!(aug.route_count, 1);
        let route = aug.dfg.nodes.iter().find(|n| n.kind == OpKind::Route).unwrap();
        assert_eq!(aug.dfg.consumers(&route.id).len(), 5);
        assert_eq!(
            aug.dfg.consumers("I").len(),
            5,
            "vin keeps four direct consumers plus the route"
        );
    }

    #[test]
    fn insertion_is_idempotent() {
        let d = fan_dfg(9);
        let arch = ArchConfig { n_iports: 1, ..arch4() };
        let (d, s) = schedule(&d, &arch, 2, PortPolicy::Quantitative).unwrap();
        let aug = insert_routing_ops(&d, &s, &arch, PortPolicy::Quantitative).unwrap();
        let again =
            insert_routing_ops(&aug.dfg, &aug.schedule, &arch, PortPolicy::Quantitative).unwrap();
        assert_eq!(again.route_count, aug.route_count);
        assert_eq!(again.dfg.nodes.len(), aug.dfg.nodes.len());
    }

    #[test]
    fn broadcast_tree_reaches_every_consumer() {
        let d = fan_dfg(9);
        let arch = ArchConfig { n_iports: 1, ..arch4() };
        let (d, s) = schedule(&d, &arch, 2, PortPolicy::Quantitative).unwrap();
        let aug = insert_routing_ops(&d, &s, &arch, PortPolicy::Quantitative).unwrap();
        for i in 0..9 {
            let target = format!("c{}", i);
            // Walk back through vin and route nodes only.
            let mut frontier = vec![target.clone()];
            let mut reached = false;
            while let Some(cur) = frontier.pop() {
                if cur == "I" {
                    reached = true;
                    break;
                }
                for p in aug.dfg.producers(&cur) {
                    let kind = aug.dfg.node(p).unwrap().kind;
                    if kind == OpKind::Vin || kind == OpKind::Route {
                        frontier.push(p.to_string());
                    }
                }
            }
            assert!(reached, "{} not reachable from I via the broadcast tree", target);
        }
    }

    #[test]
    fn vin_to_vout_gets_bridged() {
        let mut d = Dfg::default();
        d.nodes.push(OpNode::new("I", OpKind::Vin, 0));
        d.nodes.push(OpNode::new("O", OpKind::Vout, 0));
        d.edges.push(DepEdge::new("I", "O", 0));
        let (d, s) = schedule(&d, &arch4(), 1, PortPolicy::Quantitative).unwrap();
        let aug = insert_routing_ops(&d, &s, &arch4(), PortPolicy::Quantitative).unwrap();
        assert_eq!(aug.route_count, 1);
        assert_eq!(aug.dfg.producers("O").len(), 1);
        assert_ne!(aug.dfg.producers("O")[0], "I");
    }

    #[test]
    fn long_lifetime_is_split() {
        // A value consumed 20 cycles later at ii=2 with lrf 4 holds
        // ceil(20/2) = 10 > 4 slots, so copy ops must cut the span.
        let mut d = Dfg::default();
        d.nodes.push(OpNode::new("a", OpKind::Comp, 1));
        d.nodes.push(OpNode::new("z", OpKind::Comp, 1));
        d.edges.push(DepEdge::new("a", "z", 0));
        let mut chain_prev = "a".to_string();
        for i in 0..19 {
            let id = format!("f{:02}", i);
            d.nodes.push(OpNode::new(id.clone(), OpKind::Comp, 1));
            d.edges.push(DepEdge::new(chain_prev, id.clone(), 0));
            chain_prev = id;
        }
        d.edges.push(DepEdge::new(chain_prev, "z", 0));
        let arch = ArchConfig { lrf_capacity: 4, rows: 8, cols: 8, ..arch4() };
        let (d, s) = schedule(&d, &arch, 2, PortPolicy::Quantitative).unwrap();
        let aug = insert_routing_ops(&d, &s, &arch, PortPolicy::Quantitative).unwrap();
        assert!(aug.route_count >= 1);
        for e in &aug.dfg.edges {
            if e.distance != 0 {
                continue;
            }
            let u = aug.dfg.node(&e.src).unwrap();
            let v = aug.dfg.node(&e.dst).unwrap();
            if !u.kind.uses_pe() || !v.kind.uses_pe() {
                continue;
            }
            let ready = aug.schedule.start(&e.src) + u.latency;
            let held = aug.schedule.start(&e.dst) + 1 - ready;
            assert!(
                held.div_ceil(aug.schedule.ii) <= arch.lrf_capacity,
                "edge {}->{} still holds {} cycles",
                e.src,
                v.id,
                held
            );
        }
    }
}
