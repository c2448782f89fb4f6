//! Dataflow-graph data model, text parser, validator, reuse-degree query,
//! and the convolution-kernel benchmark generator.
//!
//! Text format, one item per line, `#` starts a comment:
//!
//! ```text
//! node <id> <comp|vin|vout|route> [latency]
//! edge <src> <dst> <distance>
//! ```
//!
//! Virtual inputs and outputs always have latency 0; comp and route default
//! to latency 1. Emission is canonical: nodes then edges, lexicographically
//! sorted, so parse(emit(d)) reproduces `d`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum OpKind {
    Comp,
    Vin,
    Vout,
    Route,
}

impl OpKind {
    pub fn is_virtual(self) -> bool {
        matches!(self, OpKind::Vin | OpKind::Vout)
    }

    /// Occupies a PE when placed.
    pub fn uses_pe(self) -> bool {
        matches!(self, OpKind::Comp | OpKind::Route)
    }

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Comp => "comp",
            OpKind::Vin => "vin",
            OpKind::Vout => "vout",
            OpKind::Route => "route",
        }
    }
}

/// One operation node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpNode {
    pub id: String,
    pub kind: OpKind,
    pub latency: usize,
    /// Original virtual input this node was split from, if any.
    pub origin: Option<String>,
}

impl OpNode {
    pub fn new(id: impl Into<String>, kind: OpKind, latency: usize) -> Self {
        OpNode { id: id.into(), kind, latency, origin: None }
    }
}

/// A dependence edge; `distance` > 0 marks a loop-carried dependence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepEdge {
    pub src: String,
    pub dst: String,
    pub distance: usize,
}

impl DepEdge {
    pub fn new(src: impl Into<String>, dst: impl Into<String>, distance: usize) -> Self {
        DepEdge { src: src.into(), dst: dst.into(), distance }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dfg {
    pub nodes: Vec<OpNode>,
    pub edges: Vec<DepEdge>,
}

impl Dfg {
    pub fn node(&self, id: &str) -> Option<&OpNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &str> {
        self.nodes.iter().map(|n| n.id.as_str())
    }

    /// Distinct consumers of `id` over distance-0 and loop-carried edges.
    pub fn consumers(&self, id: &str) -> Vec<&str> {
        let set: BTreeSet<&str> = self
            .edges
            .iter()
            .filter(|e| e.src == id)
            .map(|e| e.dst.as_str())
            .collect();
        set.into_iter().collect()
    }

    pub fn producers(&self, id: &str) -> Vec<&str> {
        let set: BTreeSet<&str> = self
            .edges
            .iter()
            .filter(|e| e.dst == id)
            .map(|e| e.src.as_str())
            .collect();
        set.into_iter().collect()
    }

    pub fn count_kind(&self, kind: OpKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// Canonical text form: nodes then edges, lexicographic.
    pub fn emit(&self) -> String {
        let mut out = String::new();
        let mut nodes: Vec<&OpNode> = self.nodes.iter().collect();
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        for n in nodes {
            match n.kind {
                OpKind::Vin | OpKind::Vout => {
                    out.push_str(&format!("node {} {}\n", n.id, n.kind.name()))
                }
                _ => out.push_str(&format!("node {} {} {}\n", n.id, n.kind.name(), n.latency)),
            }
        }
        let mut edges: Vec<&DepEdge> = self.edges.iter().collect();
        edges.sort_by(|a, b| (&a.src, &a.dst, a.distance).cmp(&(&b.src, &b.dst, b.distance)));
        for e in edges {
            out.push_str(&format!("edge {} {} {}\n", e.src, e.dst, e.distance));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DfgError {
    pub message: String,
}

impl DfgError {
    fn new(message: impl Into<String>) -> Self {
        DfgError { message: message.into() }
    }
}

impl fmt::Display for DfgError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for DfgError {}

/// Parses the DFG text format and validates the result.
pub fn parse_dfg(text: &str) -> Result<Dfg, DfgError> {
    let mut dfg = Dfg::default();
    let mut seen = BTreeSet::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let at = |msg: String| DfgError::new(format!("line {}: {}", lineno + 1, msg));
        match tokens[0] {
            "node" => {
                if tokens.len() < 3 || tokens.len() > 4 {
                    return Err(at("expected 'node <id> <kind> [latency]'".into()));
                }
                let id = tokens[1].to_string();
                if !seen.insert(id.clone()) {
                    return Err(at(format!("duplicate node '{}'", id)));
                }
                let kind = match tokens[2] {
                    "comp" => OpKind::Comp,
                    "vin" => OpKind::Vin,
                    "vout" => OpKind::Vout,
                    "route" => OpKind::Route,
                    other => return Err(at(format!("unknown node kind '{}'", other))),
                };
                let latency = match (kind, tokens.get(3)) {
                    (OpKind::Vin | OpKind::Vout, Some(_)) => {
                        return Err(at(format!("{} nodes take no latency", kind.name())))
                    }
                    (OpKind::Vin | OpKind::Vout, None) => 0,
                    (_, Some(tok)) => {
                        let lat: usize = tok
                            .parse()
                            .map_err(|_| at(format!("bad latency '{}'", tok)))?;
                        if lat == 0 {
                            return Err(at("comp/route latency must be >= 1".into()));
                        }
                        lat
                    }
                    (_, None) => 1,
                };
                dfg.nodes.push(OpNode::new(id, kind, latency));
            }
            "edge" => {
                if tokens.len() != 4 {
                    return Err(at("expected 'edge <src> <dst> <distance>'".into()));
                }
                let distance: usize = tokens[3]
                    .parse()
                    .map_err(|_| at(format!("bad distance '{}'", tokens[3])))?;
                dfg.edges.push(DepEdge::new(tokens[1], tokens[2], distance));
            }
            other => return Err(at(format!("unknown directive '{}'", other))),
        }
    }
    let diags = validate_dfg(&dfg);
    if let Some(first) = diags.first() {
        return Err(DfgError::new(first.clone()));
    }
    Ok(dfg)
}

/// Checks every structural invariant; returns one diagnostic per violation.
pub fn validate_dfg(dfg: &Dfg) -> Vec<String> {
    let mut diags = Vec::new();
    let mut ids = BTreeSet::new();
    for n in &dfg.nodes {
        if !ids.insert(n.id.as_str()) {
            diags.push(format!("duplicate node '{}'", n.id));
        }
        if n.kind.is_virtual() && n.latency != 0 {
            diags.push(format!("virtual op '{}' must have latency 0", n.id));
        }
        if n.kind.uses_pe() && n.latency == 0 {
            diags.push(format!("op '{}' must have latency >= 1", n.id));
        }
    }
    for e in &dfg.edges {
        if !ids.contains(e.src.as_str()) {
            diags.push(format!("unknown node '{}' in edge {}->{}", e.src, e.src, e.dst));
        }
        if !ids.contains(e.dst.as_str()) {
            diags.push(format!("unknown node '{}' in edge {}->{}", e.dst, e.src, e.dst));
        }
        if e.src == e.dst && e.distance == 0 {
            diags.push(format!("self edge on '{}' needs distance >= 1", e.src));
        }
    }
    if !diags.is_empty() {
        return diags;
    }
    for n in &dfg.nodes {
        let incoming = dfg.edges.iter().filter(|e| e.dst == n.id).count();
        let outgoing = dfg.edges.iter().filter(|e| e.src == n.id).count();
        match n.kind {
            OpKind::Vin => {
                if incoming > 0 {
                    diags.push(format!("vin '{}' has an incoming edge", n.id));
                }
            }
            OpKind::Vout => {
                if outgoing > 0 {
                    diags.push(format!("vout '{}' has an outgoing edge", n.id));
                }
                if incoming != 1 {
                    diags.push(format!(
                        "vout '{}' must have exactly one incoming edge, has {}",
                        n.id, incoming
                    ));
                }
            }
            OpKind::Route => {
                let data_in = dfg
                    .edges
                    .iter()
                    .filter(|e| e.dst == n.id && e.distance == 0)
                    .count();
                if data_in != 1 {
                    diags.push(format!(
                        "route '{}' must have exactly one incoming data edge, has {}",
                        n.id, data_in
                    ));
                }
            }
            OpKind::Comp => {}
        }
    }
    if let Some(cycle_node) = find_zero_distance_cycle(dfg) {
        diags.push(format!("combinational cycle through '{}'", cycle_node));
    }
    diags
}

/// Returns a node on some distance-0 cycle, if one exists.
fn find_zero_distance_cycle(dfg: &Dfg) -> Option<String> {
    let index: BTreeMap<&str, usize> =
        dfg.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let n = dfg.nodes.len();
    let mut succ = vec![Vec::new(); n];
    let mut indeg = vec![0usize; n];
    for e in &dfg.edges {
        if e.distance == 0 {
            let (s, d) = (index[e.src.as_str()], index[e.dst.as_str()]);
            succ[s].push(d);
            indeg[d] += 1;
        }
    }
    let mut queue: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut removed = 0;
    while let Some(i) = queue.pop() {
        removed += 1;
        for &j in &succ[i] {
            indeg[j] -= 1;
            if indeg[j] == 0 {
                queue.push(j);
            }
        }
    }
    if removed == n {
        None
    } else {
        dfg.nodes
            .iter()
            .enumerate()
            .find(|(i, _)| indeg[*i] > 0)
            .map(|(_, node)| node.id.clone())
    }
}

/// Spatial reuse degree: distinct consumers of a virtual input.
pub fn reuse_degree(dfg: &Dfg, op: &str) -> Result<usize, DfgError> {
    match dfg.node(op) {
        Some(n) if n.kind == OpKind::Vin => Ok(dfg.consumers(op).len()),
        Some(n) => Err(DfgError::new(format!(
            "reuse degree is defined for vin nodes, '{}' is {}",
            op,
            n.kind.name()
        ))),
        None => Err(DfgError::new(format!("unknown node '{}'", op))),
    }
}

/// Generates the `n`-input-channel, `m`-kernel convolution loop body.
///
/// Each of the `n` channel inputs feeds one multiply per kernel; per kernel
/// the `n` products are reduced by a sequential add chain into one output.
/// Kernel weights are treated as preloaded constants, not as streamed
/// inputs, so each channel input has reuse degree `m`.
pub fn gen_cnkm(n: usize, m: usize) -> Result<Dfg, DfgError> {
    if n == 0 || m == 0 {
        return Err(DfgError::new("gen_cnkm requires n >= 1 and m >= 1"));
    }
    let mut dfg = Dfg::default();
    for c in 0..n {
        dfg.nodes.push(OpNode::new(format!("i{}", c), OpKind::Vin, 0));
    }
    for k in 0..m {
        for c in 0..n {
            let mul = format!("mul_{}_{}", c, k);
            dfg.nodes.push(OpNode::new(mul.clone(), OpKind::Comp, 1));
            dfg.edges.push(DepEdge::new(format!("i{}", c), mul, 0));
        }
        let mut acc = format!("mul_0_{}", k);
        for j in 1..n {
            let add = format!("add_{}_{}", j, k);
            dfg.nodes.push(OpNode::new(add.clone(), OpKind::Comp, 1));
            dfg.edges.push(DepEdge::new(acc, add.clone(), 0));
            dfg.edges.push(DepEdge::new(format!("mul_{}_{}", j, k), add.clone(), 0));
            acc = add;
        }
        let out = format!("o{}", k);
        dfg.nodes.push(OpNode::new(out.clone(), OpKind::Vout, 0));
        dfg.edges.push(DepEdge::new(acc, out, 0));
    }
    debug_assert!(validate_dfg(&dfg).is_empty());
    Ok(dfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_minimal() {
        let dfg = parse_dfg("node I vin\nnode a comp 1\nedge I a 0\n").unwrap();
        assert_eq!(dfg.nodes.len(), 2);
        assert_eq!(dfg.edges.len(), 1);
        assert_eq!(dfg.node("I").unwrap().kind, OpKind::Vin);
    }

    #[test]
    fn parse_rejects_cycle_and_dangling() {
        let err = parse_dfg("node a comp\nnode b comp\nedge a b 0\nedge b a 0\n").unwrap_err();
        assert!(err.message.contains("combinational cycle"), "{}", err);

        let err = parse_dfg("node a comp\nedge a b 0\n").unwrap_err();
        assert!(err.message.contains("unknown node 'b'"), "{}", err);

        let err = parse_dfg("node a comp\nnode a comp\n").unwrap_err();
        assert!(err.message.contains("duplicate"), "{}", err);
    }

    #[test]
    fn reuse_degree_counts_distinct_consumers() {
        let dfg = parse_dfg(
            "node I vin\nnode a comp\nnode b comp\nnode c comp\nnode d comp\n\
             edge I a 0\nedge I b 0\nedge I c 0\nedge I d 0\n",
        )
        .unwrap();
        assert_eq!(reuse_degree(&dfg, "I").unwrap(), 4);

        let single = parse_dfg("node I vin\nnode a comp\nedge I a 0\n").unwrap();
        assert_eq!(reuse_degree(&single, "I").unwrap(), 1);

        assert!(reuse_degree(&single, "a").is_err());
    }

    #[test]
    fn cnkm_counts() {
        let d = gen_cnkm(2, 4).unwrap();
        assert_eq!(d.count_kind(OpKind::Comp), 12);
        assert_eq!(d.count_kind(OpKind::Vin), 2);
        assert_eq!(d.count_kind(OpKind::Vout), 4);
        for c in 0..2 {
            assert_eq!(reuse_degree(&d, &format!("i{}", c)).unwrap(), 4);
        }

        let d = gen_cnkm(1, 1).unwrap();
        assert_eq!(d.count_kind(OpKind::Comp), 1);
        assert_eq!(d.count_kind(OpKind::Vin), 1);
        assert_eq!(d.count_kind(OpKind::Vout), 1);

        let d = gen_cnkm(3, 6).unwrap();
        assert_eq!(d.count_kind(OpKind::Comp), 30);
        for c in 0..3 {
            assert_eq!(reuse_degree(&d, &format!("i{}", c)).unwrap(), 6);
        }

        assert!(gen_cnkm(0, 3).is_err());
    }

    #[test]
    fn validate_reports_violations() {
        assert!(validate_dfg(&gen_cnkm(2, 4).unwrap()).is_empty());

        let mut dfg = Dfg::default();
        dfg.nodes.push(OpNode::new("a", OpKind::Comp, 1));
        dfg.nodes.push(OpNode::new("b", OpKind::Comp, 1));
        dfg.nodes.push(OpNode::new("o", OpKind::Vout, 0));
        dfg.edges.push(DepEdge::new("a", "o", 0));
        dfg.edges.push(DepEdge::new("b", "o", 0));
        assert_eq!(validate_dfg(&dfg).len(), 1);

        let mut dfg = Dfg::default();
        dfg.nodes.push(OpNode::new("I", OpKind::Vin, 0));
        dfg.nodes.push(OpNode::new("a", OpKind::Comp, 1));
        dfg.edges.push(DepEdge::new("a", "I", 0));
        assert_eq!(validate_dfg(&dfg).len(), 1);
    }

    #[test]
    fn reuse_sum_matches_product() {
        for (n, m) in [(1, 1), (2, 4), (3, 6), (5, 5), (4, 4)] {
            let d = gen_cnkm(n, m).unwrap();
            let total: usize = (0..n)
                .map(|c| reuse_degree(&d, &format!("i{}", c)).unwrap())
                .sum();
            assert_eq!(total, n * m);
        }
    }

    proptest! {
        #[test]
        fn cnkm_roundtrips_through_text(n in 1usize..5, m in 1usize..7) {
            let d = gen_cnkm(n, m).unwrap();
            let text = d.emit();
            let back = parse_dfg(&text).unwrap();
            prop_assert_eq!(back.emit(), text);
            prop_assert!(validate_dfg(&back).is_empty());
        }
    }
}
