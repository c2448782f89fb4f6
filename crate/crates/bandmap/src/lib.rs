//! Mapper for loop-kernel dataflow graphs onto a bus-based CGRA.
//!
//! The pipeline runs in four phases: modulo scheduling with quantitative
//! input-port allocation ([`sched`]), routing-operation pre-allocation
//! ([`route`]), binding via maximum independent set on a resource-occupation
//! conflict graph ([`conflict`], [`mis`], [`bind`]), and incomplete-mapping
//! repair. Every emitted mapping is re-checked by an independent validator
//! ([`validate`]) before it is reported.
//!
//! Two operating modes share the whole pipeline:
//! * `bandmap` allocates several input ports to a datum whose spatial reuse
//!   exceeds one bus worth of consumers, broadcasting it to several rows.
//! * `baseline` pins every datum to a single port, so surplus consumers are
//!   served by inserted routing operations instead.

pub mod arch;
pub mod bind;
pub mod conflict;
pub mod dfg;
pub mod mis;
pub mod report;
pub mod route;
pub mod sched;
pub mod validate;

pub use arch::{parse_arch_config, ArchConfig, BusId, BusKind, PeId, PortId, PortKind, Tec};
pub use bind::{bind, map_application, BindOutcome, MapMode, MapReport, Mapping};
pub use conflict::{build_conflict_graph, ConflictGraph, QuadVertex, TupleVertex};
pub use dfg::{gen_cnkm, parse_dfg, reuse_degree, validate_dfg, DepEdge, Dfg, OpKind, OpNode};
pub use mis::{exact_mis, greedy_mis, tabu_mis, MisResult};
pub use report::{emit_report, metrics, run_bench, BenchTable, MetricRecord, ReportFormat};
pub use route::{count_routing_ops, insert_routing_ops, AugmentedSchedule};
pub use sched::{allocate_ports, mii, rec_mii, res_mii, schedule, PortPolicy, Schedule};
pub use validate::{check_mapping, Violation, ViolationKind};
