//! Baselines and brute-force oracles: exhaustive path enumeration, the
//! arc-flow formulation (exact on small instances when paired with full
//! scenario enumeration), single-scenario column generation, and the
//! cut-based decomposition benchmark.

use std::time::Instant;

use desklp::{solve_mip, LpSolution, MipModel, MipStatus, Rel};

use crate::ccg::{
    self, optimality_gap, prepare_network, CcgConfig, NetworkStats, RunStatus, Solution,
    SolveOutcome, TraceRow,
};
use crate::colgen::{
    build_master, run_cg_with, CgStop, Column, Master, MasterLayout, MasterSpec,
};
use crate::instance::{demand_realization, FacilityKind, Instance, Matrix};
use crate::network::{ArcKind, Network, Node};
use crate::pricing::{DualPrices, Path};
use crate::robust::{
    enumerate_scenarios, recourse_value, solve_worst_case, CapacityProfile, Scenario,
};

/// Every depot-to-depot path, in deterministic order. Refuses (rather than
/// truncates) when the count exceeds `cap`.
pub fn enumerate_paths(net: &Network, cap: usize) -> Result<Vec<Path>, String> {
    let mut out = Vec::new();
    for &src in &net.depot_source {
        // iterative DFS over outgoing arc indexes
        let mut stack: Vec<(u32, usize)> = vec![(src, 0)];
        let mut arcs: Vec<u32> = Vec::new();
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            if matches!(net.node(node), Node::DepotSink { .. }) {
                let path = Path::from_arcs(net, arcs.clone()).expect("DFS yields a path");
                out.push(path);
                if out.len() > cap {
                    return Err(format!("path count exceeds cap {cap}"));
                }
                stack.pop();
                arcs.pop();
                continue;
            }
            let outgoing = &net.out[node as usize];
            if *next < outgoing.len() {
                let a = outgoing[*next];
                *next += 1;
                stack.push((net.arc(a).head, 0));
                arcs.push(a);
            } else {
                stack.pop();
                if !arcs.is_empty() {
                    arcs.pop();
                }
            }
        }
    }
    Ok(out)
}

/// Path count by dynamic programming over the topological order; an
/// independent check on the enumeration.
pub fn count_paths_dp(net: &Network) -> u128 {
    let mut count = vec![0u128; net.nodes.len()];
    for &s in &net.depot_source {
        count[s as usize] = 1;
    }
    for &node in &net.topo {
        let c = count[node as usize];
        if c == 0 {
            continue;
        }
        for &a in &net.out[node as usize] {
            count[net.arc(a).head as usize] += c;
        }
    }
    net.depot_sink
        .iter()
        .map(|&s| count[s as usize])
        .sum()
}

/// Variable layout of the arc-flow model.
#[derive(Debug, Clone)]
pub struct ArcModelLayout {
    pub var_z0: usize,
    pub var_r: Vec<Option<usize>>,
    pub var_eta: usize,
}

/// Integer arc-flow formulation with one recourse block per scenario:
/// conservation at every node (depot sources paired with their sinks),
/// composition and charging capacity rows, and the same epigraph recourse
/// blocks as the path master.
pub fn build_arc_model(
    net: &Network,
    inst: &Instance,
    scenarios: &[Matrix],
) -> (MipModel, ArcModelLayout) {
    let horizon = inst.discretization.horizon;
    let q_count = inst.segment_count();
    let k = inst.weights.unit_multiplicity as f64;
    let cap_eff = inst.weights.effective_capacity();
    let n_com = inst.weights.effective_max_composition() as f64;
    let theta1 = inst.weights.theta1;
    let theta2 = inst.weights.theta2;
    let theta3 = inst.weights.theta3;
    let purchase = inst.dynamics.costs.unit_purchase;
    let facilities = inst.facilities();

    let mut lp = desklp::LpModel::new(desklp::Sense::Minimize);
    // flows: segment-covering arcs are capped by the composition limit, the
    // rest by a horizon-scaled multiple (valid at any optimum since idle
    // units only cost money)
    let var_z0 = 0;
    let loose = n_com * horizon as f64;
    for arc in &net.arcs {
        let ub = if arc.covered.is_empty() { loose } else { n_com };
        let money = k * (arc.money + if matches!(arc.kind, ArcKind::LeaveDepot(_)) { purchase } else { 0.0 });
        lp.add_var(0.0, ub, theta1 * money);
    }
    let mut var_r = vec![None; facilities.len()];
    for (f, fac) in facilities.iter().enumerate() {
        if let FacilityKind::Fast(i) = fac.kind {
            let cand = &inst.topology.fast_candidates[i];
            var_r[f] = Some(lp.add_var(0.0, cand.max_posts as f64, theta1 * cand.post_cost));
        }
    }
    let var_eta = lp.add_var(0.0, f64::INFINITY, 1.0);

    // conservation: timed nodes balance in/out; each depot's source outflow
    // equals its sink inflow
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); net.nodes.len()];
    for (id, arc) in net.arcs.iter().enumerate() {
        rows[arc.tail as usize].push((var_z0 + id, 1.0));
        rows[arc.head as usize].push((var_z0 + id, -1.0));
    }
    for (id, node) in net.nodes.iter().enumerate() {
        match node {
            Node::Station { .. } | Node::Charge { .. } => {
                lp.add_row(Rel::Eq, 0.0, rows[id].clone());
            }
            _ => {}
        }
    }
    for d in 0..net.depot_source.len() {
        let mut coeffs = rows[net.depot_source[d] as usize].clone();
        for &(v, c) in &rows[net.depot_sink[d] as usize] {
            coeffs.push((v, c));
        }
        lp.add_row(Rel::Eq, 0.0, coeffs);
    }
    // composition per (segment, interval)
    for q in 0..q_count {
        for t in 1..=horizon {
            let coeffs: Vec<_> = net
                .seg_arcs(q, t as u32)
                .iter()
                .map(|&a| (var_z0 + a as usize, 1.0))
                .collect();
            lp.add_row(Rel::Le, n_com, coeffs);
        }
    }
    // charging capacity per (facility, interval)
    for (f, fac) in facilities.iter().enumerate() {
        for t in 1..=horizon {
            let mut coeffs: Vec<_> = net
                .charge_arcs(f, t as u32)
                .iter()
                .map(|&a| (var_z0 + a as usize, k))
                .collect();
            let rhs = match fac.kind {
                FacilityKind::Depot(i) => inst.topology.depots[i].posts as f64,
                FacilityKind::Fast(_) => {
                    coeffs.push((var_r[f].unwrap(), -1.0));
                    0.0
                }
            };
            lp.add_row(Rel::Le, rhs, coeffs);
        }
    }
    // recourse blocks
    for alpha in scenarios {
        let var_y0 = lp.num_vars();
        for _ in 0..q_count * horizon {
            lp.add_var(0.0, f64::INFINITY, 0.0);
        }
        let var_b0 = lp.num_vars();
        for _ in 0..q_count * horizon {
            lp.add_var(0.0, f64::INFINITY, 0.0);
        }
        let mut eta_coeffs = vec![(var_eta, -1.0)];
        for q in 0..q_count {
            for t in 0..horizon {
                let w = theta2 + if t + 1 == horizon { theta3 } else { 0.0 };
                eta_coeffs.push((var_y0 + q * horizon + t, w));
            }
        }
        lp.add_row(Rel::Le, 0.0, eta_coeffs);
        for q in 0..q_count {
            for t in 0..horizon {
                let idx = q * horizon + t;
                let mut coeffs = vec![(var_y0 + idx, 1.0), (var_b0 + idx, 1.0)];
                if t > 0 {
                    coeffs.push((var_y0 + idx - 1, -1.0));
                }
                lp.add_row(Rel::Ge, alpha.get(q, t), coeffs);
            }
        }
        for q in 0..q_count {
            for t in 0..horizon {
                let idx = q * horizon + t;
                let mut coeffs = vec![(var_b0 + idx, 1.0)];
                for &a in net.seg_arcs(q, (t + 1) as u32) {
                    coeffs.push((var_z0 + a as usize, -cap_eff));
                }
                lp.add_row(Rel::Le, 0.0, coeffs);
            }
        }
    }

    let mut mip = MipModel::from_lp(lp);
    for id in 0..net.arcs.len() {
        mip.set_integer(var_z0 + id);
    }
    for slot in var_r.iter().flatten() {
        mip.set_integer(*slot);
    }
    (
        mip,
        ArcModelLayout {
            var_z0,
            var_r,
            var_eta,
        },
    )
}

#[derive(Debug)]
pub struct ArcExactResult {
    pub objective: f64,
    pub bound: f64,
    pub posts: Vec<(usize, u32)>,
    pub fleet_units: u32,
    pub scenario_count: usize,
    pub status: MipStatus,
    pub net_stats: NetworkStats,
    pub wall_secs: f64,
}

/// Exact robust optimum by the arc-flow model over the full enumeration of
/// binary scalings. Only viable when the deviation support is small.
pub fn solve_arc_exact(
    inst: &Instance,
    cfg: &CcgConfig,
    scenario_cap: usize,
) -> Result<ArcExactResult, String> {
    let started = Instant::now();
    let (net, net_stats) = prepare_network(inst, cfg.network);
    let scenarios = enumerate_scenarios(inst, scenario_cap)?;
    let demands: Vec<Matrix> = scenarios
        .iter()
        .map(|z| demand_realization(inst, z).expect("admissible"))
        .collect();
    let (mip, layout) = build_arc_model(&net, inst, &demands);
    let sol = solve_mip(&mip, &cfg.solver);
    if !sol.has_solution() {
        return Err(format!("arc model did not produce a plan: {:?}", sol.status));
    }
    let posts = inst
        .facilities()
        .iter()
        .enumerate()
        .filter_map(|(f, fac)| {
            fac.is_fast()
                .then(|| (f, sol.x[layout.var_r[f].unwrap()].round() as u32))
        })
        .collect();
    let fleet: f64 = net
        .arcs
        .iter()
        .enumerate()
        .filter(|(_, a)| matches!(a.kind, ArcKind::LeaveDepot(_)))
        .map(|(id, _)| sol.x[layout.var_z0 + id])
        .sum();
    Ok(ArcExactResult {
        objective: sol.objective,
        bound: sol.bound,
        posts,
        fleet_units: (fleet * inst.weights.unit_multiplicity as f64).round() as u32,
        scenario_count: scenarios.len(),
        status: sol.status,
        net_stats,
        wall_secs: started.elapsed().as_secs_f64(),
    })
}

/// Single-scenario design: column generation on the realized demand, then
/// an integer pass over the generated pool.
pub fn run_deterministic(inst: &Instance, zeta: &Matrix, cfg: &CcgConfig) -> SolveOutcome {
    let started = Instant::now();
    let (net, net_stats) = prepare_network(inst, cfg.network);
    let alpha = demand_realization(inst, zeta).expect("scaling within the box");
    let demands = vec![alpha.clone()];
    let mut pool: Vec<Column> = Vec::new();
    let cg = crate::colgen::run_column_generation(&net, inst, &demands, &cfg.cg, &mut pool);
    assert!(
        !matches!(cg.stop, CgStop::IterCap),
        "column generation hit its iteration cap"
    );
    let (int_val, x, r) = ccg::solve_integer_master(inst, &pool, &demands, cfg);
    let cap = CapacityProfile::from_columns(inst, &pool, &x);
    let passenger = recourse_value(&cap, &alpha, inst.weights.theta2, inst.weights.theta3);
    let (columns, posts, investment, operating) = ccg::assemble_plan(inst, &pool, &x, &r, true);
    let gap = optimality_gap(int_val, cg.value).max(0.0);
    let solution = Solution {
        fleet_units: columns.len() as u32 * inst.weights.unit_multiplicity,
        columns,
        posts,
        investment,
        operating,
        worst_passenger: passenger,
        objective: int_val,
        gap,
        worst_scenario: None,
    };
    let trace = vec![TraceRow {
        round: 1,
        phase: "deterministic",
        lb: cg.value,
        ub: int_val,
        gap,
        pool_size: pool.len(),
        scenario_count: 1,
        millis: started.elapsed().as_millis(),
    }];
    SolveOutcome {
        solution,
        status: RunStatus::Converged,
        trace,
        cg_trace: cg.trace.iter().map(|row| (1, row.clone())).collect(),
        scenarios: Vec::new(),
        pool_size: pool.len(),
        net_stats,
        wall_secs: started.elapsed().as_secs_f64(),
        mean_pricing_secs: cg.mean_pricing_secs,
        rounds: 1,
    }
}

/// One epigraph cut per evaluated worst case.
#[derive(Debug, Clone)]
struct EpigraphCut {
    delta: Matrix,
    phi: Matrix,
}

/// Master with epigraph cuts instead of scenario blocks.
struct CutMasterSpec<'a> {
    net: &'a Network,
    inst: &'a Instance,
    cuts: &'a [EpigraphCut],
}

impl MasterSpec for CutMasterSpec<'_> {
    fn build(&self, pool: &[Column]) -> Master {
        let inst = self.inst;
        let horizon = inst.discretization.horizon;
        let cap_eff = inst.weights.effective_capacity();
        let mut master = build_master(inst, pool, &[], false, None);
        let lp = &mut master.model.lp;
        let mut rows_cut = Vec::with_capacity(self.cuts.len());
        for cut in self.cuts {
            // eta + C sum_p coverage-weighted-duals x_p >= nominal'delta + dev'phi
            let mut rhs = 0.0;
            for i in 0..cut.delta.data.len() {
                rhs += inst.demand.nominal.data[i] * cut.delta.data[i]
                    + inst.demand.deviation.data[i] * cut.phi.data[i];
            }
            let mut coeffs = vec![(master.layout.var_eta, 1.0)];
            for (p, col) in pool.iter().enumerate() {
                let mut weight = 0.0;
                for &(q, t) in &col.coverage {
                    weight += cut.delta.get(q, t as usize - 1);
                }
                if weight != 0.0 {
                    coeffs.push((master.layout.var_x[p], cap_eff * weight));
                }
            }
            rows_cut.push(lp.add_row(Rel::Ge, rhs, coeffs));
            let _ = horizon;
        }
        master.layout.rows_cut = rows_cut;
        master
    }

    fn duals(&self, layout: &MasterLayout, sol: &LpSolution) -> DualPrices {
        let inst = self.inst;
        let horizon = inst.discretization.horizon;
        let q_count = inst.segment_count();
        let mut d = crate::colgen::extract_duals(self.net, inst, layout, sol);
        // fold each cut's dual into a per-cell coverage credit: the cut row
        // gives column p the coefficient C * sum delta over its coverage, so
        // its contribution prices like a coupling dual of -eps * delta
        d.varsigma = Vec::with_capacity(self.cuts.len());
        for (w, cut) in self.cuts.iter().enumerate() {
            let eps = sol.duals[layout.rows_cut[w]];
            let mut fold = vec![0.0; q_count * horizon];
            for i in 0..q_count * horizon {
                fold[i] = -eps * cut.delta.data[i];
            }
            d.varsigma.push(fold);
        }
        d
    }
}

/// Cut-based decomposition with column generation: relaxed masters
/// accumulate one epigraph cut per worst case; a final integer pass over the
/// frozen pool yields the reported plan.
pub fn run_bd_cg(inst: &Instance, cfg: &CcgConfig) -> SolveOutcome {
    let started = Instant::now();
    let (net, net_stats) = prepare_network(inst, cfg.network);
    let mut pool: Vec<Column> = Vec::new();
    let mut cuts: Vec<EpigraphCut> = Vec::new();
    let mut seen_scenarios: Vec<Matrix> = Vec::new();
    let mut lb = f64::NEG_INFINITY;
    let mut ub = f64::INFINITY;
    let mut trace = Vec::new();
    let mut cg_trace = Vec::new();
    let mut pricing_secs = Vec::new();
    let mut incumbent: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut scenarios_out: Vec<Scenario> = Vec::new();
    let mut round = 0;

    let status = loop {
        round += 1;
        let round_started = Instant::now();
        if round > cfg.max_rounds {
            break RunStatus::RoundLimit;
        }
        if let Some(limit) = cfg.time_limit {
            if started.elapsed() > limit {
                break RunStatus::TimeLimit;
            }
        }
        let spec = CutMasterSpec {
            net: &net,
            inst,
            cuts: &cuts,
        };
        let cg = run_cg_with(&net, inst, &spec, &cfg.cg, &mut pool);
        for row in &cg.trace {
            cg_trace.push((round, row.clone()));
        }
        pricing_secs.push(cg.mean_pricing_secs);
        lb = lb.max(cg.value);

        let cap = CapacityProfile::from_columns(inst, &pool, &cg.x);
        let wc = solve_worst_case(&cap, inst, &cfg.wc, round);
        let first_stage = ccg::first_stage_cost(inst, &pool, &cg.x, &cg.r);
        let cand = first_stage + wc.value;
        if cand < ub {
            ub = cand;
            incumbent = Some((cg.x.clone(), cg.r.clone()));
        }
        let gap = optimality_gap(ub, lb);
        trace.push(TraceRow {
            round,
            phase: "relaxed",
            lb,
            ub,
            gap,
            pool_size: pool.len(),
            scenario_count: cuts.len(),
            millis: round_started.elapsed().as_millis(),
        });
        if gap <= cfg.eps {
            break RunStatus::Converged;
        }
        // the same scaling can justify a new cut: its maximizing duals
        // depend on the current plan's capacities
        if !seen_scenarios.contains(&wc.scenario.zeta) {
            seen_scenarios.push(wc.scenario.zeta.clone());
            scenarios_out.push(wc.scenario.clone());
        }
        let cut = EpigraphCut {
            delta: wc.delta,
            phi: wc.phi,
        };
        let stuck = trace.len() >= 3 && {
            let n = trace.len();
            (trace[n - 1].lb - trace[n - 3].lb).abs() <= 1e-9 * (1.0 + trace[n - 1].lb.abs())
                && (trace[n - 1].ub - trace[n - 3].ub).abs()
                    <= 1e-9 * (1.0 + trace[n - 1].ub.abs())
        };
        if cuts.iter().any(|c| c.delta == cut.delta && c.phi == cut.phi) && stuck {
            break RunStatus::Stalled;
        }
        cuts.push(cut);
    };

    // integer pass over the frozen pool under the collected cuts
    let int_started = Instant::now();
    let spec = CutMasterSpec {
        net: &net,
        inst,
        cuts: &cuts,
    };
    let mut master = spec.build(&pool);
    for &v in &master.layout.var_x {
        master.model.set_integer(v);
    }
    for slot in master.layout.var_r.iter().flatten() {
        master.model.set_integer(*slot);
    }
    let int_sol = solve_mip(&master.model, &cfg.solver);
    let solution = if int_sol.has_solution() {
        let x: Vec<f64> = master.layout.var_x.iter().map(|&v| int_sol.x[v].round()).collect();
        let r: Vec<f64> = master
            .layout
            .var_r
            .iter()
            .map(|slot| slot.map(|v| int_sol.x[v].round()).unwrap_or(0.0))
            .collect();
        let cap = CapacityProfile::from_columns(inst, &pool, &x);
        let wc = solve_worst_case(&cap, inst, &cfg.wc, round);
        let first_stage = ccg::first_stage_cost(inst, &pool, &x, &r);
        let objective = first_stage + wc.value;
        let (columns, posts, investment, operating) = ccg::assemble_plan(inst, &pool, &x, &r, true);
        let final_gap = optimality_gap(objective, lb).max(0.0);
        trace.push(TraceRow {
            round: round + 1,
            phase: "integer",
            lb,
            ub: objective.min(ub),
            gap: final_gap,
            pool_size: pool.len(),
            scenario_count: cuts.len(),
            millis: int_started.elapsed().as_millis(),
        });
        Solution {
            fleet_units: columns.len() as u32 * inst.weights.unit_multiplicity,
            columns,
            posts,
            investment,
            operating,
            worst_passenger: wc.value,
            objective,
            gap: final_gap,
            worst_scenario: Some(wc.scenario),
        }
    } else {
        let _ = incumbent;
        Solution {
            columns: Vec::new(),
            posts: Vec::new(),
            fleet_units: 0,
            investment: 0.0,
            operating: 0.0,
            worst_passenger: 0.0,
            objective: f64::INFINITY,
            gap: 1.0,
            worst_scenario: None,
        }
    };

    let mean_pricing_secs = if pricing_secs.is_empty() {
        0.0
    } else {
        pricing_secs.iter().sum::<f64>() / pricing_secs.len() as f64
    };
    SolveOutcome {
        solution,
        status,
        trace,
        cg_trace,
        scenarios: scenarios_out,
        pool_size: pool.len(),
        net_stats,
        wall_secs: started.elapsed().as_secs_f64(),
        mean_pricing_secs,
        rounds: round,
    }
}
