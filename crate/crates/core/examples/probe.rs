use charge_sched::ccg::{prepare_network, NetworkOpts};
use charge_sched::colgen::{run_column_generation, CgConfig};
use charge_sched::instance::{demand_realization, load_instance, Matrix};
use std::time::Instant;

fn main() {
    let inst = load_instance("/tmp/mid.json").unwrap();
    let q = inst.segment_count();
    let t = inst.discretization.horizon;
    let alpha = demand_realization(&inst, &Matrix::filled(q, t, 0.5)).unwrap();
    let (net, stats) = prepare_network(&inst, NetworkOpts::default());
    println!("nodes {} arcs {}", stats.nodes, stats.arcs);
    let mut pool = Vec::new();
    let cfg = CgConfig { truncation: true, max_iters: 3000, ..CgConfig::default() };
    let t0 = Instant::now();
    let cg = run_column_generation(&net, &inst, &[alpha], &cfg, &mut pool);
    println!(
        "cg: {:?} after {} iters, value {:.1}, pool {}, {:.1}s total, {:.4}s/pricing",
        cg.stop, cg.iterations, cg.value, pool.len(), t0.elapsed().as_secs_f64(), cg.mean_pricing_secs
    );
    for (i, v) in cg.history.iter().enumerate() {
        if i % 25 == 0 || i + 1 == cg.history.len() {
            println!("  iter {i}: {v:.1}");
        }
    }
}
