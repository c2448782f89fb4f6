//! Parameterized CGRA architecture and its time-extended replication.
//!
//! The array is a `rows x cols` grid of PEs. Each row carries
//! `ibuses_per_row` input buses attached to every PE of that row; each column
//! carries `obuses_per_col` output buses attached to every PE of that column.
//! IPORTs and OPORTs sit behind a full crossbar: any input port may drive any
//! input bus in a cycle, any output port may drain any output bus, one bus has
//! at most one driver per cycle, and one port serves at most one bus per
//! cycle.
//!
//! Transfer media (one state transition each, used consistently by the
//! conflict rules and the validator):
//! * LRF hold: a value stays in its holder PE from cycle `t` to `t+1` and
//!   costs one LRF slot per held cycle.
//! * Mesh read: a 4-neighbor reads the holder PE's register at the reader's
//!   own start cycle, so a neighbor consumer needs no extra delay.
//! * Bus routing: the producer reserves an output bus of its column, drives
//!   it at its ready cycle, and every PE of that column can latch one cycle
//!   later, so a bus-routed consumer starts at least one cycle after ready.
//! * GRF: written at the ready cycle, readable by any PE from the next cycle
//!   on while it occupies a GRF slot.
//! * Input-bus broadcast: an IPORT drives an input bus at the virtual input's
//!   cycle and the attached row latches the same cycle.
//! * Output drain: the producer drives its column bus at the virtual output's
//!   cycle and an OPORT drains it the same cycle.

use std::fmt;

/// CGRA architecture parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchConfig {
    pub rows: usize,
    pub cols: usize,
    pub ibuses_per_row: usize,
    pub obuses_per_col: usize,
    pub n_iports: usize,
    pub n_oports: usize,
    pub lrf_capacity: usize,
    pub grf_capacity: usize,
    pub multicast: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            rows: 4,
            cols: 4,
            ibuses_per_row: 1,
            obuses_per_col: 1,
            n_iports: 4,
            n_oports: 4,
            lrf_capacity: 8,
            grf_capacity: 0,
            multicast: true,
        }
    }
}

impl ArchConfig {
    /// Number of PEs attached to one input bus (a full row).
    pub fn pes_per_ibus(&self) -> usize {
        self.cols
    }

    /// Number of PEs attached to one output bus (a full column).
    pub fn pes_per_obus(&self) -> usize {
        self.rows
    }

    pub fn n_pes(&self) -> usize {
        self.rows * self.cols
    }

    fn validate(&self) -> Result<(), ArchError> {
        if self.rows == 0 {
            return Err(ArchError::new("rows must be >= 1"));
        }
        if self.cols == 0 {
            return Err(ArchError::new("cols must be >= 1"));
        }
        if self.ibuses_per_row == 0 {
            return Err(ArchError::new("ibuses_per_row must be >= 1"));
        }
        if self.obuses_per_col == 0 {
            return Err(ArchError::new("obuses_per_col must be >= 1"));
        }
        if self.n_iports == 0 {
            return Err(ArchError::new("iports must be >= 1"));
        }
        if self.n_oports == 0 {
            return Err(ArchError::new("oports must be >= 1"));
        }
        if self.lrf_capacity == 0 {
            return Err(ArchError::new("lrf must be >= 1"));
        }
        Ok(())
    }
}

/// A PE position in the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PeId {
    pub row: usize,
    pub col: usize,
}

impl PeId {
    pub fn new(row: usize, col: usize) -> Self {
        PeId { row, col }
    }
}

impl fmt::Display for PeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BusKind {
    Ibus,
    Obus,
}

/// A bus instance: input buses run along rows, output buses along columns.
/// `line` is the row (ibus) or column (obus); `slot` indexes buses within the
/// line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BusId {
    pub kind: BusKind,
    pub line: usize,
    pub slot: usize,
}

impl BusId {
    pub fn ibus(row: usize, slot: usize) -> Self {
        BusId { kind: BusKind::Ibus, line: row, slot }
    }

    pub fn obus(col: usize, slot: usize) -> Self {
        BusId { kind: BusKind::Obus, line: col, slot }
    }
}

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            BusKind::Ibus => write!(f, "ibus[r{}.{}]", self.line, self.slot),
            BusKind::Obus => write!(f, "obus[c{}.{}]", self.line, self.slot),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PortKind {
    Iport,
    Oport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PortId {
    pub kind: PortKind,
    pub index: usize,
}

impl PortId {
    pub fn iport(index: usize) -> Self {
        PortId { kind: PortKind::Iport, index }
    }

    pub fn oport(index: usize) -> Self {
        PortId { kind: PortKind::Oport, index }
    }
}

impl fmt::Display for PortId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            PortKind::Iport => write!(f, "iport{}", self.index),
            PortKind::Oport => write!(f, "oport{}", self.index),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchError {
    pub message: String,
}

impl ArchError {
    fn new(message: impl Into<String>) -> Self {
        ArchError { message: message.into() }
    }
}

impl fmt::Display for ArchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ArchError {}

/// Parses a line-oriented `key=value` architecture document.
///
/// Keys: rows, cols, ibuses_per_row, obuses_per_col, iports, oports, lrf,
/// grf, multicast. `#` starts a comment. Unspecified keys take the defaults.
pub fn parse_arch_config(text: &str) -> Result<ArchConfig, ArchError> {
    let mut cfg = ArchConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        for token in line.split_whitespace() {
            let (key, value) = token.split_once('=').ok_or_else(|| {
                ArchError::new(format!(
                    "line {}: expected key=value, got '{}'",
                    lineno + 1,
                    token
                ))
            })?;
            let parse_count = |field: &str| -> Result<usize, ArchError> {
                value.parse::<usize>().map_err(|_| {
                    ArchError::new(format!(
                        "line {}: {} expects a non-negative integer, got '{}'",
                        lineno + 1,
                        field,
                        value
                    ))
                })
            };
            match key {
                "rows" => cfg.rows = parse_count("rows")?,
                "cols" => cfg.cols = parse_count("cols")?,
                "ibuses_per_row" => cfg.ibuses_per_row = parse_count("ibuses_per_row")?,
                "obuses_per_col" => cfg.obuses_per_col = parse_count("obuses_per_col")?,
                "iports" => cfg.n_iports = parse_count("iports")?,
                "oports" => cfg.n_oports = parse_count("oports")?,
                "lrf" => cfg.lrf_capacity = parse_count("lrf")?,
                "grf" => cfg.grf_capacity = parse_count("grf")?,
                "multicast" => {
                    cfg.multicast = match value {
                        "true" => true,
                        "false" => false,
                        _ => {
                            return Err(ArchError::new(format!(
                                "line {}: multicast expects true or false, got '{}'",
                                lineno + 1,
                                value
                            )))
                        }
                    }
                }
                _ => {
                    return Err(ArchError::new(format!(
                        "line {}: unknown key '{}'",
                        lineno + 1,
                        key
                    )))
                }
            }
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// 4-connected neighbors within grid bounds, sorted, no wraparound.
pub fn neighbors(arch: &ArchConfig, pe: PeId) -> Vec<PeId> {
    let mut out = Vec::with_capacity(4);
    if pe.row > 0 {
        out.push(PeId::new(pe.row - 1, pe.col));
    }
    if pe.col > 0 {
        out.push(PeId::new(pe.row, pe.col - 1));
    }
    if pe.col + 1 < arch.cols {
        out.push(PeId::new(pe.row, pe.col + 1));
    }
    if pe.row + 1 < arch.rows {
        out.push(PeId::new(pe.row + 1, pe.col));
    }
    out.sort();
    out
}

/// PEs attached to a bus: the whole row for an input bus, the whole column
/// for an output bus.
pub fn bus_attached_pes(arch: &ArchConfig, bus: BusId) -> Result<Vec<PeId>, ArchError> {
    match bus.kind {
        BusKind::Ibus => {
            if bus.line >= arch.rows || bus.slot >= arch.ibuses_per_row {
                return Err(ArchError::new(format!("{} out of range", bus)));
            }
            Ok((0..arch.cols).map(|c| PeId::new(bus.line, c)).collect())
        }
        BusKind::Obus => {
            if bus.line >= arch.cols || bus.slot >= arch.obuses_per_col {
                return Err(ArchError::new(format!("{} out of range", bus)));
            }
            Ok((0..arch.rows).map(|r| PeId::new(r, bus.line)).collect())
        }
    }
}

/// Timed resource instance inside the time-extended array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TimedResource {
    Pe(PeId, usize),
    Bus(BusId, usize),
    Port(PortId, usize),
}

/// Kind of one-cycle transfer a routing edge stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeKind {
    LrfHold,
    MeshLink,
    BusDrive,
    BusRead,
    GrfHop,
    IbusBroadcast,
    OportDrain,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoutingEdge {
    pub kind: EdgeKind,
    pub from: TimedResource,
    pub to: TimedResource,
}

/// One time layer of the time-extended array.
#[derive(Debug, Clone)]
pub struct TecLayer {
    pub pes: Vec<PeId>,
    pub buses: Vec<BusId>,
    pub ports: Vec<PortId>,
}

/// The architecture replicated over modulo slots `0..ii` with routing edges
/// for every transfer medium.
#[derive(Debug, Clone)]
pub struct Tec {
    pub ii: usize,
    pub layers: Vec<TecLayer>,
    pub routing_edges: Vec<RoutingEdge>,
}

/// Replicates the architecture across `ii` time layers.
pub fn build_tec(arch: &ArchConfig, ii: usize) -> Result<Tec, ArchError> {
    if ii == 0 {
        return Err(ArchError::new("ii must be >= 1"));
    }
    let mut layers = Vec::with_capacity(ii);
    for _ in 0..ii {
        let mut pes = Vec::with_capacity(arch.n_pes());
        for r in 0..arch.rows {
            for c in 0..arch.cols {
                pes.push(PeId::new(r, c));
            }
        }
        let mut buses = Vec::new();
        for r in 0..arch.rows {
            for s in 0..arch.ibuses_per_row {
                buses.push(BusId::ibus(r, s));
            }
        }
        for c in 0..arch.cols {
            for s in 0..arch.obuses_per_col {
                buses.push(BusId::obus(c, s));
            }
        }
        let mut ports = Vec::new();
        for i in 0..arch.n_iports {
            ports.push(PortId::iport(i));
        }
        for o in 0..arch.n_oports {
            ports.push(PortId::oport(o));
        }
        layers.push(TecLayer { pes, buses, ports });
    }

    let mut edges = Vec::new();
    for t in 0..ii {
        let next = (t + 1) % ii;
        for r in 0..arch.rows {
            for c in 0..arch.cols {
                let pe = PeId::new(r, c);
                edges.push(RoutingEdge {
                    kind: EdgeKind::LrfHold,
                    from: TimedResource::Pe(pe, t),
                    to: TimedResource::Pe(pe, next),
                });
                for nb in neighbors(arch, pe) {
                    edges.push(RoutingEdge {
                        kind: EdgeKind::MeshLink,
                        from: TimedResource::Pe(pe, t),
                        to: TimedResource::Pe(nb, next),
                    });
                }
                for s in 0..arch.obuses_per_col {
                    let obus = BusId::obus(c, s);
                    edges.push(RoutingEdge {
                        kind: EdgeKind::BusDrive,
                        from: TimedResource::Pe(pe, t),
                        to: TimedResource::Bus(obus, t),
                    });
                }
                if arch.grf_capacity > 0 {
                    for r2 in 0..arch.rows {
                        for c2 in 0..arch.cols {
                            edges.push(RoutingEdge {
                                kind: EdgeKind::GrfHop,
                                from: TimedResource::Pe(pe, t),
                                to: TimedResource::Pe(PeId::new(r2, c2), next),
                            });
                        }
                    }
                }
            }
        }
        for c in 0..arch.cols {
            for s in 0..arch.obuses_per_col {
                let obus = BusId::obus(c, s);
                for r in 0..arch.rows {
                    edges.push(RoutingEdge {
                        kind: EdgeKind::BusRead,
                        from: TimedResource::Bus(obus, t),
                        to: TimedResource::Pe(PeId::new(r, c), next),
                    });
                }
                for o in 0..arch.n_oports {
                    edges.push(RoutingEdge {
                        kind: EdgeKind::OportDrain,
                        from: TimedResource::Bus(obus, t),
                        to: TimedResource::Port(PortId::oport(o), t),
                    });
                }
            }
        }
        for r in 0..arch.rows {
            for s in 0..arch.ibuses_per_row {
                let ibus = BusId::ibus(r, s);
                for i in 0..arch.n_iports {
                    edges.push(RoutingEdge {
                        kind: EdgeKind::IbusBroadcast,
                        from: TimedResource::Port(PortId::iport(i), t),
                        to: TimedResource::Bus(ibus, t),
                    });
                }
                for c in 0..arch.cols {
                    edges.push(RoutingEdge {
                        kind: EdgeKind::IbusBroadcast,
                        from: TimedResource::Bus(ibus, t),
                        to: TimedResource::Pe(PeId::new(r, c), t),
                    });
                }
            }
        }
    }

    Ok(Tec { ii, layers, routing_edges: edges })
}
