use bandmap::arch::ArchConfig;
use bandmap::bind::{bind, BindOutcome};
use bandmap::dfg::gen_cnkm;
use bandmap::route::insert_routing_ops;
use bandmap::sched::{schedule, PortPolicy};
use bandmap::validate::check_mapping;

fn main() {
    let d = gen_cnkm(5, 5).unwrap();
    let grf = ArchConfig { grf_capacity: 8, ..ArchConfig::default() };
    for ii in [3usize, 4] {
        let (sd, s) = schedule(&d, &grf, ii, PortPolicy::Quantitative).unwrap();
        let aug = insert_routing_ops(&sd, &s, &grf, PortPolicy::Quantitative).unwrap();
        print!("ii={} ops={} routes={} -> ", ii, aug.dfg.nodes.len(), aug.route_count);
        match bind(&aug, &grf, 1) {
            BindOutcome::Complete(m) => {
                let v = check_mapping(&m, &grf);
                println!("complete, violations: {:?}", v.iter().map(|x| x.to_string()).collect::<Vec<_>>());
            }
            BindOutcome::Incomplete { unmapped, .. } => println!("unmapped {:?}", unmapped),
        }
    }
}
