//! Independent mapping validator.
//!
//! Re-derives every resource occupation and transfer of a finished mapping
//! from scratch and lists violations. Shares no code with the conflict-graph
//! predicates; the two sides implement the same declared protocol (documented
//! in [`crate::arch`] and [`crate::conflict`]) twice, and the test suite
//! checks they accept exactly the same mappings.
//!
//! Occupancy accounting: a value produced at absolute cycle `t_p` with
//! latency `L` and last use at cycle `t_c` holds a register slot at every
//! cycle of `[t_p + L, t_c]`; its load on modulo slot `m` is the number of
//! those cycles congruent to `m`.

use std::collections::BTreeMap;
use std::fmt;

use crate::arch::{ArchConfig, BusId, BusKind, PeId, PortKind};
use crate::bind::{Assignment, Mapping};
use crate::dfg::OpKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ViolationKind {
    PeDoubleBook,
    BusDoubleDrive,
    PortDoubleUse,
    DepUnrealized,
    LrfOverflow,
    GrfOverflow,
    PortBusMismatch,
    UnassignedOp,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ViolationKind::PeDoubleBook => "pe_double_book",
            ViolationKind::BusDoubleDrive => "bus_double_drive",
            ViolationKind::PortDoubleUse => "port_double_use",
            ViolationKind::DepUnrealized => "dep_unrealized",
            ViolationKind::LrfOverflow => "lrf_overflow",
            ViolationKind::GrfOverflow => "grf_overflow",
            ViolationKind::PortBusMismatch => "port_bus_mismatch",
            ViolationKind::UnassignedOp => "unassigned_op",
        };
        write!(f, "{}", s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Medium {
    SamePe,
    Mesh,
    Obus,
    Grf,
    None,
}

fn manhattan(a: PeId, b: PeId) -> usize {
    a.row.abs_diff(b.row) + a.col.abs_diff(b.col)
}

/// Checks every rule of a finished mapping; the returned list is empty
/// exactly when the mapping is feasible.
pub fn check_mapping(mapping: &Mapping, arch: &ArchConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let dfg = &mapping.dfg;
    let ii = mapping.ii;
    let sched = &mapping.schedule;
    let push = |out: &mut Vec<Violation>, kind, detail: String| {
        out.push(Violation { kind, detail });
    };

    // Assignment presence, kind agreement, slot agreement, bus legality.
    let mut pe_of: BTreeMap<&str, PeId> = BTreeMap::new();
    let mut ibus_of: BTreeMap<&str, Option<BusId>> = BTreeMap::new();
    let mut obus_of: BTreeMap<&str, Option<BusId>> = BTreeMap::new();
    for node in &dfg.nodes {
        let slot = sched.slot(&node.id);
        match (node.kind, mapping.assignment.get(&node.id)) {
            (_, None) => {
                push(&mut out, ViolationKind::UnassignedOp, format!(
                    "op '{}' has no assignment (slot {})",
                    node.id, slot
                ));
            }
            (OpKind::Vin, Some(Assignment::Port { port, slot: aslot })) => {
                if port.kind != PortKind::Iport || port.index >= arch.n_iports || *aslot != slot {
                    push(&mut out, ViolationKind::PortBusMismatch, format!(
                        "vin '{}' bound to {} at slot {} (expected an input port at slot {})",
                        node.id, port, aslot, slot
                    ));
                }
            }
            (OpKind::Vout, Some(Assignment::Port { port, slot: aslot })) => {
                if port.kind != PortKind::Oport || port.index >= arch.n_oports || *aslot != slot {
                    push(&mut out, ViolationKind::PortBusMismatch, format!(
                        "vout '{}' bound to {} at slot {} (expected an output port at slot {})",
                        node.id, port, aslot, slot
                    ));
                }
            }
            (OpKind::Comp | OpKind::Route, Some(Assignment::Pe { pe, ibus, obus, slot: aslot })) => {
                if pe.row >= arch.rows || pe.col >= arch.cols || *aslot != slot {
                    push(&mut out, ViolationKind::PortBusMismatch, format!(
                        "op '{}' placed at {} slot {} outside the array or off its slot {}",
                        node.id, pe, aslot, slot
                    ));
                }
                if let Some(b) = ibus {
                    if b.kind != BusKind::Ibus || b.line != pe.row || b.slot >= arch.ibuses_per_row
                    {
                        push(&mut out, ViolationKind::PortBusMismatch, format!(
                            "op '{}' at {} slot {} listens on {} outside its row",
                            node.id, pe, slot, b
                        ));
                    }
                }
                if let Some(b) = obus {
                    if b.kind != BusKind::Obus || b.line != pe.col || b.slot >= arch.obuses_per_col
                    {
                        push(&mut out, ViolationKind::PortBusMismatch, format!(
                            "op '{}' at {} slot {} drives {} outside its column",
                            node.id, pe, slot, b
                        ));
                    }
                }
                pe_of.insert(&node.id, *pe);
                ibus_of.insert(&node.id, *ibus);
                obus_of.insert(&node.id, *obus);
            }
            (kind, Some(other)) => {
                push(&mut out, ViolationKind::PortBusMismatch, format!(
                    "{} '{}' (slot {}) has a mismatched assignment {:?}",
                    kind.name(),
                    node.id,
                    slot,
                    other
                ));
            }
        }
    }
    if !out.is_empty() {
        // Structural problems make the resource walk unreliable.
        return out;
    }

    let start = |id: &str| sched.start(id);
    let ready = |id: &str| start(id) + dfg.node(id).unwrap().latency;

    // PE and port exclusivity per modulo slot.
    let mut pe_use: BTreeMap<(PeId, usize), Vec<&str>> = BTreeMap::new();
    let mut port_use: BTreeMap<(PortKind, usize, usize), Vec<&str>> = BTreeMap::new();
    for node in &dfg.nodes {
        match &mapping.assignment[&node.id] {
            Assignment::Pe { pe, .. } => {
                pe_use.entry((*pe, sched.slot(&node.id))).or_default().push(&node.id);
            }
            Assignment::Port { port, slot } => {
                port_use.entry((port.kind, port.index, *slot)).or_default().push(&node.id);
            }
        }
    }
    for ((pe, slot), ops) in &pe_use {
        if ops.len() > 1 {
            push(&mut out, ViolationKind::PeDoubleBook, format!(
                "{} at slot {} runs {}",
                pe,
                slot,
                ops.join(" and ")
            ));
        }
    }
    for ((kind, index, slot), ops) in &port_use {
        if ops.len() > 1 {
            let name = match kind {
                PortKind::Iport => "iport",
                PortKind::Oport => "oport",
            };
            push(&mut out, ViolationKind::PortDoubleUse, format!(
                "{}{} at slot {} carries {}",
                name,
                index,
                slot,
                ops.join(" and ")
            ));
        }
    }

    // Output-bus reservations: the ready slot when a distance-0 PE consumer
    // exists, plus each virtual-output consumer's slot.
    let mut bus_use: BTreeMap<(BusId, usize), Vec<&str>> = BTreeMap::new();
    for node in &dfg.nodes {
        if !node.kind.uses_pe() {
            continue;
        }
        let Some(obus) = obus_of.get(node.id.as_str()).copied().flatten() else { continue };
        let mut claims: Vec<usize> = Vec::new();
        let has_pe_consumer = dfg.edges.iter().any(|e| {
            e.src == node.id
                && e.distance == 0
                && dfg.node(&e.dst).map(|n| n.kind.uses_pe()).unwrap_or(false)
        });
        if has_pe_consumer {
            claims.push(ready(&node.id) % ii);
        }
        for e in &dfg.edges {
            if e.src == node.id
                && dfg.node(&e.dst).map(|n| n.kind == OpKind::Vout).unwrap_or(false)
            {
                claims.push(sched.slot(&e.dst));
            }
        }
        claims.sort_unstable();
        claims.dedup();
        for c in claims {
            bus_use.entry((obus, c)).or_default().push(&node.id);
        }
    }

    // Input-bus agreement and reservations.
    for node in &dfg.nodes {
        if node.kind != OpKind::Vin {
            continue;
        }
        let consumers: Vec<&str> = dfg
            .edges
            .iter()
            .filter(|e| {
                e.src == node.id && dfg.node(&e.dst).map(|n| n.kind.uses_pe()).unwrap_or(false)
            })
            .map(|e| e.dst.as_str())
            .collect();
        if consumers.is_empty() {
            continue;
        }
        let mut agreed: Option<BusId> = None;
        let mut delivered = true;
        for c in &consumers {
            match ibus_of.get(c).copied().flatten() {
                Some(b) => match agreed {
                    None => agreed = Some(b),
                    Some(prev) if prev != b => {
                        push(&mut out, ViolationKind::PortBusMismatch, format!(
                            "consumers of vin '{}' (slot {}) listen on {} and {}",
                            node.id,
                            sched.slot(&node.id),
                            prev,
                            b
                        ));
                    }
                    _ => {}
                },
                None => {
                    delivered = false;
                    push(&mut out, ViolationKind::DepUnrealized, format!(
                        "vin '{}' (slot {}) cannot reach '{}' without an input bus",
                        node.id,
                        sched.slot(&node.id),
                        c
                    ));
                }
            }
        }
        if let (Some(b), true) = (agreed, delivered) {
            bus_use.entry((b, sched.slot(&node.id))).or_default().push(&node.id);
        }
    }
    for ((bus, slot), values) in &bus_use {
        if values.len() > 1 {
            push(&mut out, ViolationKind::BusDoubleDrive, format!(
                "{} at slot {} carries values of {}",
                bus,
                slot,
                values.join(" and ")
            ));
        }
    }

    // Per-edge timing and transfer realization. Distance-0 edges need a
    // concrete medium; loop-carried edges need timing only.
    let medium_for = |src: &str, dst: &str, consume: usize| -> Medium {
        let (p, q) = (pe_of[src], pe_of[dst]);
        if p == q {
            return Medium::SamePe;
        }
        if manhattan(p, q) == 1 {
            return Medium::Mesh;
        }
        let gap_ok = consume >= ready(src) + 1;
        if gap_ok && obus_of[src].is_some() && p.col == q.col {
            return Medium::Obus;
        }
        if gap_ok && arch.grf_capacity > 0 {
            return Medium::Grf;
        }
        Medium::None
    };
    for e in &dfg.edges {
        let src_kind = dfg.node(&e.src).unwrap().kind;
        let dst_kind = dfg.node(&e.dst).unwrap().kind;
        let consume = start(&e.dst) + e.distance * ii;
        if consume < ready(&e.src) {
            push(&mut out, ViolationKind::DepUnrealized, format!(
                "'{}' consumes '{}' at cycle {} before it is ready at {} (slot {})",
                e.dst,
                e.src,
                consume,
                ready(&e.src),
                sched.slot(&e.dst)
            ));
            continue;
        }
        if e.distance != 0 {
            continue;
        }
        match (src_kind, dst_kind) {
            (OpKind::Vin, k) if k.uses_pe() => {} // handled by the bus pass
            (OpKind::Vin, OpKind::Vout) => {
                push(&mut out, ViolationKind::DepUnrealized, format!(
                    "no medium carries vin '{}' directly to vout '{}' (slot {})",
                    e.src,
                    e.dst,
                    sched.slot(&e.dst)
                ));
            }
            (k, OpKind::Vout) if k.uses_pe() => {
                if obus_of[e.src.as_str()].is_none() {
                    push(&mut out, ViolationKind::DepUnrealized, format!(
                        "'{}' feeds vout '{}' (slot {}) without an output bus",
                        e.src,
                        e.dst,
                        sched.slot(&e.dst)
                    ));
                }
            }
            (k1, k2) if k1.uses_pe() && k2.uses_pe() => {
                if medium_for(&e.src, &e.dst, consume) == Medium::None {
                    push(&mut out, ViolationKind::DepUnrealized, format!(
                        "no medium carries '{}' at {} to '{}' at {} (slots {} to {})",
                        e.src,
                        pe_of[e.src.as_str()],
                        e.dst,
                        pe_of[e.dst.as_str()],
                        sched.slot(&e.src),
                        sched.slot(&e.dst)
                    ));
                }
            }
            _ => {}
        }
    }
    if out.iter().any(|v| v.kind == ViolationKind::DepUnrealized) {
        return out;
    }

    // Register-file occupancy. Every held value contributes its congruent
    // cycles per slot; the per-slot sum is bounded by the capacity.
    let mut lrf_intervals: BTreeMap<PeId, Vec<(usize, usize, String)>> = BTreeMap::new();
    let mut grf_intervals: Vec<(usize, usize, String)> = Vec::new();
    for node in &dfg.nodes {
        let consumers: Vec<(&str, usize, usize)> = dfg
            .edges
            .iter()
            .filter(|e| e.src == node.id)
            .map(|e| (e.dst.as_str(), e.distance, start(&e.dst) + e.distance * ii))
            .collect();
        if consumers.is_empty() {
            continue;
        }
        match node.kind {
            OpKind::Vin => {
                // Consumers latch the broadcast at the input's cycle and
                // hold it locally until use.
                let mut per_pe: BTreeMap<PeId, usize> = BTreeMap::new();
                for (c, _, consume) in &consumers {
                    if let Some(&pe) = pe_of.get(c) {
                        let last = per_pe.entry(pe).or_insert(*consume);
                        *last = (*last).max(*consume);
                    }
                }
                for (pe, last) in per_pe {
                    lrf_intervals.entry(pe).or_default().push((
                        start(&node.id),
                        last,
                        node.id.clone(),
                    ));
                }
            }
            OpKind::Comp | OpKind::Route => {
                let p = pe_of[node.id.as_str()];
                let rdy = ready(&node.id);
                let mut held_at_p: Option<usize> = None;
                let mut latched: BTreeMap<PeId, usize> = BTreeMap::new();
                let mut grf_last: Option<usize> = None;
                for (c, _, consume) in &consumers {
                    let ck = dfg.node(c).unwrap().kind;
                    if ck == OpKind::Vout {
                        held_at_p = Some(held_at_p.map_or(*consume, |x| x.max(*consume)));
                        continue;
                    }
                    match medium_for(&node.id, c, *consume) {
                        Medium::SamePe | Medium::Mesh => {
                            held_at_p = Some(held_at_p.map_or(*consume, |x| x.max(*consume)));
                        }
                        Medium::Obus => {
                            held_at_p = Some(held_at_p.map_or(rdy, |x| x.max(rdy)));
                            let q = pe_of[c];
                            let last = latched.entry(q).or_insert(*consume);
                            *last = (*last).max(*consume);
                        }
                        Medium::Grf => {
                            held_at_p = Some(held_at_p.map_or(rdy, |x| x.max(rdy)));
                            grf_last = Some(grf_last.map_or(*consume, |x: usize| x.max(*consume)));
                        }
                        Medium::None => {
                            held_at_p = Some(held_at_p.map_or(*consume, |x| x.max(*consume)));
                        }
                    }
                }
                if let Some(last) = held_at_p {
                    lrf_intervals.entry(p).or_default().push((rdy, last, node.id.clone()));
                }
                for (q, last) in latched {
                    lrf_intervals.entry(q).or_default().push((rdy + 1, last, node.id.clone()));
                }
                if let Some(last) = grf_last {
                    grf_intervals.push((rdy, last, node.id.clone()));
                }
            }
            OpKind::Vout => {}
        }
    }
    let congruent = |a: usize, b: usize, m: usize| -> usize {
        if b < a {
            return 0;
        }
        let first = a + (m + ii - a % ii) % ii;
        if first > b {
            0
        } else {
            (b - first) / ii + 1
        }
    };
    for (pe, intervals) in &lrf_intervals {
        for m in 0..ii {
            let load: usize = intervals.iter().map(|(a, b, _)| congruent(*a, *b, m)).sum();
            if load > arch.lrf_capacity {
                let holder = &intervals.iter().max_by_key(|(a, b, _)| b - a).unwrap().2;
                push(&mut out, ViolationKind::LrfOverflow, format!(
                    "{} holds {} values at slot {} (capacity {}, longest holder '{}')",
                    pe, load, m, arch.lrf_capacity, holder
                ));
            }
        }
    }
    for m in 0..ii {
        let load: usize = grf_intervals.iter().map(|(a, b, _)| congruent(*a, *b, m)).sum();
        if load > arch.grf_capacity {
            let holder = &grf_intervals.iter().max_by_key(|(a, b, _)| b - a).unwrap().2;
            push(&mut out, ViolationKind::GrfOverflow, format!(
                "grf holds {} values at slot {} (capacity {}, longest holder '{}')",
                load, m, arch.grf_capacity, holder
            ));
        }
    }

    out
}
