//! Mapping reports, metrics, serialization, and the benchmark suite.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::arch::{ArchConfig, BusId, BusKind, PortKind};
use crate::bind::{map_application, Assignment, MapMode, MapReport, Mapping};
use crate::dfg::{gen_cnkm, OpKind};

/// Utilization summary of a successful mapping.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRecord {
    pub mii: usize,
    pub achieved_ii: usize,
    pub ratio: f64,
    pub routing_pes: usize,
    /// Used counts per modulo slot.
    pub iport_used: Vec<usize>,
    pub oport_used: Vec<usize>,
    pub ibus_used: Vec<usize>,
    pub obus_used: Vec<usize>,
}

/// Computes the metric record; errors on a failed report.
pub fn metrics(report: &MapReport) -> Result<MetricRecord, String> {
    let mapping = report
        .mapping
        .as_ref()
        .ok_or_else(|| "cannot compute metrics of a failed mapping".to_string())?;
    let ii = mapping.ii;
    let mut iport_used = vec![0usize; ii];
    let mut oport_used = vec![0usize; ii];
    let mut ibuses: Vec<std::collections::BTreeSet<BusId>> = vec![Default::default(); ii];
    let mut obuses: Vec<std::collections::BTreeSet<BusId>> = vec![Default::default(); ii];
    for (op, a) in &mapping.assignment {
        match a {
            Assignment::Port { port, slot } => match port.kind {
                PortKind::Iport => iport_used[*slot] += 1,
                PortKind::Oport => oport_used[*slot] += 1,
            },
            Assignment::Pe { ibus, obus, .. } => {
                if let Some(b) = ibus {
                    let vin_slots: Vec<usize> = mapping
                        .dfg
                        .edges
                        .iter()
                        .filter(|e| {
                            e.dst == *op
                                && mapping
                                    .dfg
                                    .node(&e.src)
                                    .map(|n| n.kind == OpKind::Vin)
                                    .unwrap_or(false)
                        })
                        .map(|e| mapping.schedule.slot(&e.src))
                        .collect();
                    for s in vin_slots {
                        ibuses[s].insert(*b);
                    }
                }
                if let Some(b) = obus {
                    let ready = mapping.schedule.start(op)
                        + mapping.dfg.node(op).map(|n| n.latency).unwrap_or(0);
                    obuses[ready % ii].insert(*b);
                    for e in &mapping.dfg.edges {
                        if e.src == *op
                            && mapping
                                .dfg
                                .node(&e.dst)
                                .map(|n| n.kind == OpKind::Vout)
                                .unwrap_or(false)
                        {
                            obuses[mapping.schedule.slot(&e.dst)].insert(*b);
                        }
                    }
                }
            }
        }
    }
    Ok(MetricRecord {
        mii: report.mii,
        achieved_ii: ii,
        ratio: report.mii as f64 / ii as f64,
        routing_pes: report.routing_pes,
        iport_used,
        oport_used,
        ibus_used: ibuses.iter().map(|s| s.len()).collect(),
        obus_used: obuses.iter().map(|s| s.len()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Text,
    Dot,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "text" => Ok(ReportFormat::Text),
            "dot" => Ok(ReportFormat::Dot),
            other => Err(format!("unknown report format '{}'", other)),
        }
    }
}

/// Machine-readable report document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub mode: String,
    pub mii: usize,
    pub achieved_ii: Option<usize>,
    pub ratio: Option<f64>,
    pub routing_pes: usize,
    pub attempts: Vec<AttemptDoc>,
    pub assignment: BTreeMap<String, AssignmentDoc>,
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptDoc {
    pub ii: usize,
    pub mis: usize,
    pub ops: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentDoc {
    pub resource: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pe: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ibus: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub obus: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<usize>,
    pub slot: usize,
}

fn bus_name(b: &BusId) -> String {
    match b.kind {
        BusKind::Ibus => format!("ibus:{}#{}", b.line, b.slot),
        BusKind::Obus => format!("obus:{}#{}", b.line, b.slot),
    }
}

pub fn report_doc(report: &MapReport, violations: &[String]) -> ReportDoc {
    let mut assignment = BTreeMap::new();
    if let Some(mapping) = &report.mapping {
        for (op, a) in &mapping.assignment {
            let doc = match a {
                Assignment::Port { port, slot } => AssignmentDoc {
                    resource: match port.kind {
                        PortKind::Iport => "iport".to_string(),
                        PortKind::Oport => "oport".to_string(),
                    },
                    pe: None,
                    ibus: None,
                    obus: None,
                    port: Some(port.index),
                    slot: *slot,
                },
                Assignment::Pe { pe, ibus, obus, slot } => AssignmentDoc {
                    resource: "pe".to_string(),
                    pe: Some([pe.row, pe.col]),
                    ibus: ibus.as_ref().map(bus_name),
                    obus: obus.as_ref().map(bus_name),
                    port: None,
                    slot: *slot,
                },
            };
            assignment.insert(op.clone(), doc);
        }
    }
    ReportDoc {
        mode: report.mode.name().to_string(),
        mii: report.mii,
        achieved_ii: report.achieved_ii,
        ratio: report.ratio(),
        routing_pes: report.routing_pes,
        attempts: report
            .attempts
            .iter()
            .map(|a| AttemptDoc { ii: a.ii, mis: a.mis, ops: a.ops })
            .collect(),
        assignment,
        violations: violations.to_vec(),
    }
}

fn text_report(doc: &ReportDoc) -> String {
    let mut out = String::new();
    out.push_str(&format!("mode:        {}\n", doc.mode));
    out.push_str(&format!("mii:         {}\n", doc.mii));
    match doc.achieved_ii {
        Some(ii) => out.push_str(&format!(
            "achieved_ii: {} (ratio {:.3})\n",
            ii,
            doc.ratio.unwrap_or(0.0)
        )),
        None => out.push_str("achieved_ii: none (mapping failed)\n"),
    }
    out.push_str(&format!("routing_pes: {}\n", doc.routing_pes));
    out.push_str("attempts:\n");
    out.push_str("  ii   mis   ops\n");
    for a in &doc.attempts {
        out.push_str(&format!("  {:<4} {:<5} {}\n", a.ii, a.mis, a.ops));
    }
    if !doc.assignment.is_empty() {
        out.push_str("assignment:\n");
        for (op, a) in &doc.assignment {
            match a.resource.as_str() {
                "pe" => {
                    let pe = a.pe.unwrap();
                    let mut buses = String::new();
                    if let Some(b) = &a.ibus {
                        buses.push_str(&format!(" {}", b));
                    }
                    if let Some(b) = &a.obus {
                        buses.push_str(&format!(" {}", b));
                    }
                    out.push_str(&format!(
                        "  {:<12} pe ({},{}) slot {}{}\n",
                        op, pe[0], pe[1], a.slot, buses
                    ));
                }
                r => out.push_str(&format!(
                    "  {:<12} {}{} slot {}\n",
                    op,
                    r,
                    a.port.unwrap_or(0),
                    a.slot
                )),
            }
        }
    }
    if doc.violations.is_empty() {
        out.push_str("violations:  none\n");
    } else {
        out.push_str("violations:\n");
        for v in &doc.violations {
            out.push_str(&format!("  {}\n", v));
        }
    }
    out
}

fn dot_report(mapping: &Mapping, arch: &ArchConfig) -> String {
    let ii = mapping.ii;
    let mut out = String::from("digraph mapping {\n  rankdir=TB;\n  node [shape=box];\n");
    let mut op_nodes: BTreeMap<&str, String> = BTreeMap::new();
    for slot in 0..ii {
        out.push_str(&format!("  subgraph cluster_slot{} {{\n    label=\"slot {}\";\n", slot, slot));
        let mut grid: BTreeMap<(usize, usize), Vec<&str>> = BTreeMap::new();
        let mut ports: Vec<(String, &str)> = Vec::new();
        for (op, a) in &mapping.assignment {
            match a {
                Assignment::Pe { pe, slot: s, .. } if *s == slot => {
                    grid.entry((pe.row, pe.col)).or_default().push(op);
                }
                Assignment::Port { port, slot: s } if *s == slot => {
                    ports.push((format!("{}: {}", port, op), op.as_str()));
                }
                _ => {}
            }
        }
        for r in 0..arch.rows {
            for c in 0..arch.cols {
                let id = format!("s{}_pe_{}_{}", slot, r, c);
                let ops = grid.get(&(r, c)).map(|v| v.join("\\n")).unwrap_or_default();
                let label = if ops.is_empty() {
                    format!("({},{})", r, c)
                } else {
                    format!("({},{})\\n{}", r, c, ops)
                };
                out.push_str(&format!("    {} [label=\"{}\"];\n", id, label));
                if let Some(v) = grid.get(&(r, c)) {
                    for op in v {
                        op_nodes.insert(op, id.clone());
                    }
                }
            }
        }
        for (i, (label, op)) in ports.iter().enumerate() {
            let id = format!("s{}_port{}", slot, i);
            out.push_str(&format!("    {} [shape=ellipse, label=\"{}\"];\n", id, label));
            op_nodes.insert(op, id.clone());
        }
        out.push_str("  }\n");
    }
    for e in &mapping.dfg.edges {
        if e.distance != 0 {
            continue;
        }
        if let (Some(a), Some(b)) = (op_nodes.get(e.src.as_str()), op_nodes.get(e.dst.as_str())) {
            if a != b {
                out.push_str(&format!("  {} -> {};\n", a, b));
            }
        }
    }
    out.push_str("}\n");
    out
}

/// Renders a mapping report in the requested format.
pub fn emit_report(
    report: &MapReport,
    arch: &ArchConfig,
    format: ReportFormat,
) -> Result<String, String> {
    let violations: Vec<String> = report
        .mapping
        .as_ref()
        .map(|m| {
            crate::validate::check_mapping(m, arch).iter().map(|v| v.to_string()).collect()
        })
        .unwrap_or_default();
    let doc = report_doc(report, &violations);
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(&doc).map_err(|e| e.to_string()).map(|mut s| {
                s.push('\n');
                s
            })
        }
        ReportFormat::Text => Ok(text_report(&doc)),
        ReportFormat::Dot => match &report.mapping {
            Some(m) => Ok(dot_report(m, arch)),
            None => Err("cannot draw a failed mapping".to_string()),
        },
    }
}

/// The seven-kernel benchmark suite.
pub const BENCH_SUITE: &[(&str, usize, usize)] = &[
    ("c1k2", 1, 2),
    ("c2k4", 2, 4),
    ("c2k6", 2, 6),
    ("c3k6", 3, 6),
    ("c3k8", 3, 8),
    ("c4k4", 4, 4),
    ("c5k5", 5, 5),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub kernel: String,
    pub n: usize,
    pub m: usize,
    pub mii: usize,
    pub bandmap_ii: Option<usize>,
    pub bandmap_routing_pes: usize,
    pub bandmap_mii_attained: bool,
    pub baseline_ii: Option<usize>,
    pub baseline_routing_pes: usize,
    pub baseline_mii_attained: bool,
    pub reduction_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchTable {
    pub suite: String,
    pub seed: u64,
    pub kernels: Vec<BenchRow>,
    pub mean_reduction_pct: Option<f64>,
}

/// Runs the suite in both modes and assembles the comparison table.
pub fn run_bench(arch: &ArchConfig, seed: u64) -> Result<BenchTable, String> {
    let mut rows = Vec::new();
    for (name, n, m) in BENCH_SUITE {
        let dfg = gen_cnkm(*n, *m).map_err(|e| e.to_string())?;
        let lower = crate::sched::mii(&dfg, arch).map_err(|e| e.to_string())?;
        let max_ii = lower + 8;
        let band = map_application(&dfg, arch, MapMode::Bandmap, seed, max_ii)
            .map_err(|e| e.to_string())?;
        let base = map_application(&dfg, arch, MapMode::Baseline, seed, max_ii)
            .map_err(|e| e.to_string())?;
        let reduction = match (base.achieved_ii, band.achieved_ii) {
            (Some(_), Some(_)) if base.routing_pes > 0 => Some(
                (base.routing_pes as f64 - band.routing_pes as f64) / base.routing_pes as f64
                    * 100.0,
            ),
            _ => None,
        };
        rows.push(BenchRow {
            kernel: name.to_string(),
            n: *n,
            m: *m,
            mii: band.mii,
            bandmap_ii: band.achieved_ii,
            bandmap_routing_pes: band.routing_pes,
            bandmap_mii_attained: band.achieved_ii == Some(band.mii),
            baseline_ii: base.achieved_ii,
            baseline_routing_pes: base.routing_pes,
            baseline_mii_attained: base.achieved_ii == Some(base.mii),
            reduction_pct: reduction,
        });
    }
    let reductions: Vec<f64> = rows.iter().filter_map(|r| r.reduction_pct).collect();
    let mean = if reductions.is_empty() {
        None
    } else {
        Some(reductions.iter().sum::<f64>() / reductions.len() as f64)
    };
    Ok(BenchTable {
        suite: "default".to_string(),
        seed,
        kernels: rows,
        mean_reduction_pct: mean,
    })
}
