//! Cross-module checks on small instances: enumeration oracles against the
//! production pricing/column-generation path, downsizing equivalence, and
//! the full robust pipeline against the exact arc-flow optimum.

use charge_sched::benchmarks::{
    count_paths_dp, enumerate_paths, run_bd_cg, run_deterministic, solve_arc_exact,
};
use charge_sched::ccg::{
    optimality_gap, prepare_network, run_ccg, validate_solution, CcgConfig, NetworkOpts,
    Procedure,
};
use charge_sched::colgen::{
    build_master, path_coefficients, run_column_generation, CgConfig, CgStop, Column,
};
use charge_sched::instance::Matrix;
use charge_sched::network::build_network;
use charge_sched::pricing::{self, path_reduced_cost, LabelAlgo};
use charge_sched::synth::{self, SynthParams};
use desklp::{solve_lp, SolverConfig};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn tiny_cfg() -> CcgConfig {
    CcgConfig {
        eps: 1e-6,
        ..CcgConfig::default()
    }
}

#[test]
fn path_enumeration_matches_dp_count() {
    let inst = synth::generate(&SynthParams::tiny(101));
    let net = build_network(&inst);
    let paths = enumerate_paths(&net, 5_000_000).expect("within cap");
    assert_eq!(paths.len() as u128, count_paths_dp(&net));
    assert!(!paths.is_empty());
    // deduplicated by construction
    let mut keys: Vec<Vec<u32>> = paths.iter().map(|p| p.nodes.clone()).collect();
    keys.sort();
    keys.dedup();
    assert_eq!(keys.len(), paths.len());
}

#[test]
fn pricing_matches_exhaustive_enumeration() {
    let mut params = SynthParams::tiny(102);
    params.horizon = 8;
    let inst = synth::generate(&params);
    let net = build_network(&inst);
    let paths = enumerate_paths(&net, 2_000_000).expect("within cap");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..5 {
        let mut duals = pricing::DualPrices::zeros(&net, 1, 0.1, 16.0, 40.0);
        for v in duals.iota.iter_mut() {
            *v = rng.gen_range(-10.0..10.0);
        }
        for v in duals.pi.iter_mut() {
            *v = -rng.gen_range(0.0..3.0f64);
        }
        for v in duals.rho.iter_mut() {
            *v = -rng.gen_range(0.0..3.0f64);
        }
        for scen in duals.varsigma.iter_mut() {
            for v in scen.iter_mut() {
                *v = -rng.gen_range(0.0..0.8f64);
            }
        }
        let best = pricing::solve_pricing(&net, &duals, LabelAlgo::TopoOrder);
        for bp in &best {
            let brute = paths
                .iter()
                .filter(|p| {
                    p.source_depot(&net) == bp.source && p.sink_depot(&net) == bp.sink
                })
                .map(|p| path_reduced_cost(&net, p, &duals))
                .fold(f64::INFINITY, f64::min);
            assert!(
                (bp.value - brute).abs() <= 1e-9 * (1.0 + brute.abs()),
                "pair {}->{}: {} vs brute {}",
                bp.source,
                bp.sink,
                bp.value,
                brute
            );
        }
    }
}

#[test]
fn cg_value_equals_lp_over_all_paths() {
    let mut params = SynthParams::tiny(103);
    params.horizon = 8;
    let inst = synth::generate(&params);
    let net = build_network(&inst);
    let scen = vec![inst.demand.nominal.clone()];

    let mut pool: Vec<Column> = Vec::new();
    let cg = run_column_generation(&net, &inst, &scen, &CgConfig::default(), &mut pool);
    assert_eq!(cg.stop, CgStop::Exact);

    let all_paths = enumerate_paths(&net, 2_000_000).expect("within cap");
    let all_columns: Vec<Column> = all_paths
        .iter()
        .map(|p| path_coefficients(&net, &inst, p))
        .collect();
    let master = build_master(&inst, &all_columns, &scen, false, None);
    let full = solve_lp(&master.model.lp, &SolverConfig::default());
    assert!(full.is_optimal());
    assert!(
        (cg.value - full.objective).abs() <= 1e-7 * (1.0 + full.objective.abs()),
        "cg {} vs full LP {}",
        cg.value,
        full.objective
    );
}

#[test]
fn ccg_aip_matches_exact_arc_optimum() {
    for seed in [111u64, 112, 113] {
        let mut params = SynthParams::tiny(seed);
        params.horizon = 9;
        params.deviation_support = 3;
        let inst = synth::generate(&params);
        let cfg = tiny_cfg();
        let outcome = run_ccg(&inst, &cfg);
        assert_eq!(
            outcome.status,
            charge_sched::ccg::RunStatus::Converged,
            "seed {seed}: {:?}",
            outcome.status
        );
        let exact = solve_arc_exact(&inst, &cfg, 10_000).expect("oracle solvable");
        assert!(
            (outcome.solution.objective - exact.objective).abs()
                <= 1e-5 * (1.0 + exact.objective.abs()),
            "seed {seed}: ccg {} vs exact {}",
            outcome.solution.objective,
            exact.objective
        );
        // bound traces are monotone
        for w in outcome.trace.windows(2) {
            assert!(w[1].lb >= w[0].lb - 1e-9);
            assert!(w[1].ub <= w[0].ub + 1e-9);
        }
        // the emitted plan passes the independent re-check
        let (net, _) = prepare_network(&inst, cfg.network);
        validate_solution(&net, &inst, &outcome.solution).expect("valid plan");
    }
}

#[test]
fn zero_deviation_collapses_to_deterministic() {
    let mut params = SynthParams::tiny(120);
    params.horizon = 9;
    let mut inst = synth::generate(&params);
    inst.demand.deviation = Matrix::zeros(inst.segment_count(), inst.discretization.horizon);
    let cfg = tiny_cfg();
    let robust = run_ccg(&inst, &cfg);
    assert!(robust.rounds <= 2, "took {} rounds", robust.rounds);
    let det = run_deterministic(
        &inst,
        &Matrix::zeros(inst.segment_count(), inst.discretization.horizon),
        &cfg,
    );
    assert!(
        (robust.solution.objective - det.solution.objective).abs()
            <= 1e-6 * (1.0 + det.solution.objective),
        "robust {} vs deterministic {}",
        robust.solution.objective,
        det.solution.objective
    );
}

#[test]
fn downsizing_preserves_cg_value_and_pricing_optima() {
    let inst = synth::generate(&SynthParams::small(130));
    let configs = [
        NetworkOpts {
            soc_bounds: false,
            time_bounds: false,
            super_arcs: false,
        },
        NetworkOpts {
            soc_bounds: true,
            time_bounds: true,
            super_arcs: false,
        },
        NetworkOpts {
            soc_bounds: false,
            time_bounds: false,
            super_arcs: true,
        },
        NetworkOpts::default(),
    ];
    let scen = vec![inst.demand.nominal.clone()];
    let mut values = Vec::new();
    for opts in configs {
        let (net, _) = prepare_network(&inst, opts);
        net.check_invariants().unwrap();
        let mut pool = Vec::new();
        let cg = run_column_generation(&net, &inst, &scen, &CgConfig::default(), &mut pool);
        assert_eq!(cg.stop, CgStop::Exact);
        values.push(cg.value);
    }
    for v in &values[1..] {
        assert!(
            (v - values[0]).abs() <= 1e-7 * (1.0 + values[0].abs()),
            "values diverge: {values:?}"
        );
    }

    // pricing optimum invariant under aggregation, random duals
    let (full, _) = prepare_network(
        &inst,
        NetworkOpts {
            soc_bounds: true,
            time_bounds: true,
            super_arcs: false,
        },
    );
    let (agg, _) = prepare_network(&inst, NetworkOpts::default());
    let mut rng = ChaCha8Rng::seed_from_u64(131);
    for _ in 0..20 {
        let mut d_full = pricing::DualPrices::zeros(&full, 0, 0.1, 16.0, 60.0);
        for v in d_full.iota.iter_mut() {
            *v = rng.gen_range(-10.0..10.0);
        }
        for v in d_full.pi.iter_mut() {
            *v = -rng.gen_range(0.0..2.0f64);
        }
        for v in d_full.rho.iter_mut() {
            *v = -rng.gen_range(0.0..2.0f64);
        }
        let mut d_agg = pricing::DualPrices::zeros(&agg, 0, 0.1, 16.0, 60.0);
        d_agg.iota = d_full.iota.clone();
        d_agg.pi = d_full.pi.clone();
        d_agg.rho = d_full.rho.clone();
        let a = pricing::solve_pricing(&full, &d_full, LabelAlgo::TopoOrder);
        let b = pricing::solve_pricing(&agg, &d_agg, LabelAlgo::TopoOrder);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!(
                (x.value - y.value).abs() <= 1e-9 * (1.0 + x.value.abs()),
                "{} vs {}",
                x.value,
                y.value
            );
        }
    }
}

#[test]
fn bd_and_ccg_agree_on_tiny_instances() {
    let mut params = SynthParams::tiny(140);
    params.horizon = 9;
    params.deviation_support = 3;
    let inst = synth::generate(&params);
    let mut cfg = tiny_cfg();
    cfg.eps = 0.03;
    cfg.max_rounds = 80;
    let ccg = run_ccg(&inst, &cfg);
    let bd = run_bd_cg(&inst, &cfg);
    assert!(
        (ccg.solution.objective - bd.solution.objective).abs()
            <= 2.0 * cfg.eps * (1.0 + ccg.solution.objective),
        "ccg {} vs bd {}",
        ccg.solution.objective,
        bd.solution.objective
    );
    // bound validity against the exact optimum
    let exact = solve_arc_exact(&inst, &cfg, 10_000).expect("oracle").objective;
    for row in &bd.trace {
        if row.phase == "relaxed" {
            assert!(row.lb <= exact + 1e-6 * (1.0 + exact));
        }
    }
}

#[test]
fn scenario_pool_growth_tightens_the_master() {
    // master optimum over two scenarios is at least each single-scenario one
    let mut params = SynthParams::tiny(150);
    params.deviation_support = 4;
    let inst = synth::generate(&params);
    let cfg = tiny_cfg();
    let outcome = run_ccg(&inst, &cfg);
    if outcome.scenarios.len() < 2 {
        return; // converged before a second scenario was needed
    }
    let (net, _) = prepare_network(&inst, cfg.network);
    let d1 = vec![
        charge_sched::instance::demand_realization(&inst, &outcome.scenarios[0].zeta).unwrap(),
    ];
    let d2 = vec![
        charge_sched::instance::demand_realization(&inst, &outcome.scenarios[1].zeta).unwrap(),
    ];
    let both = vec![d1[0].clone(), d2[0].clone()];
    let mut vals = Vec::new();
    for demands in [&d1, &d2, &both] {
        let mut pool = Vec::new();
        let cg = run_column_generation(&net, &inst, demands, &CgConfig::default(), &mut pool);
        vals.push(cg.value);
    }
    assert!(vals[2] >= vals[0] - 1e-7);
    assert!(vals[2] >= vals[1] - 1e-7);
}

#[test]
fn gap_convention() {
    assert_eq!(optimality_gap(100.0, 100.0), 0.0);
    assert!((optimality_gap(100.0, 97.0) - 0.03).abs() < 1e-12);
    assert_eq!(optimality_gap(f64::INFINITY, 5.0), 1.0);
}
