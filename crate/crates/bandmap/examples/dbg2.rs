use bandmap::arch::ArchConfig;
use bandmap::bind::{map_application, MapMode};
use bandmap::dfg::{Dfg, OpKind, OpNode, DepEdge, gen_cnkm};

fn main() {
    let mut d = Dfg::default();
    d.nodes.push(OpNode::new("a", OpKind::Comp, 1));
    for i in 0..5 {
        let c = format!("c{}", i);
        d.nodes.push(OpNode::new(c.clone(), OpKind::Comp, 1));
        d.edges.push(DepEdge::new("a", &c, 0));
    }
    let arch = ArchConfig { rows: 1, cols: 8, ..ArchConfig::default() };
    let report = map_application(&d, &arch, MapMode::Bandmap, 3, 8).unwrap();
    println!("1x8 fanout: achieved={:?} routes={} fail={:?}",
        report.achieved_ii, report.routing_pes, report.failure);

    for (mode, name) in [(MapMode::Bandmap, "band"), (MapMode::Baseline, "base")] {
        for (n, m) in [(1,2),(2,4),(2,6),(3,6),(3,8),(4,4),(5,5)] {
            let d = gen_cnkm(n, m).unwrap();
            let t0 = std::time::Instant::now();
            let r = map_application(&d, &ArchConfig::default(), mode, 1, 12).unwrap();
            println!("c{}k{} {}: mii={} achieved={:?} routes={} elapsed={:?}",
                n, m, name, r.mii, r.achieved_ii, r.routing_pes, t0.elapsed());
        }
    }
}
