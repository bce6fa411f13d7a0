//! Master/subproblem alternation: solve the scenario-restricted master,
//! evaluate the worst case at its plan, add the scenario, repeat. Two
//! end-to-end procedures: always-integer (an integer master every round)
//! and first-continuous (relaxed rounds first, then an integer restart over
//! the frozen pool).

use std::time::{Duration, Instant};

use desklp::{solve_mip, MipStatus, SolverConfig};

use crate::colgen::{
    build_master, run_column_generation, CgConfig, CgStop, CgTraceRow, Column,
};
use crate::instance::{FacilityKind, Instance, Matrix};
use crate::network::{
    aggregate_super_arcs, build_network, downsize, DownsizeOpts, Network, StationBounds,
};
use crate::robust::{solve_worst_case, CapacityProfile, Scenario, WorstCaseConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Procedure {
    AlwaysInteger,
    FirstContinuous,
}

#[derive(Debug, Clone, Copy)]
pub struct NetworkOpts {
    pub soc_bounds: bool,
    pub time_bounds: bool,
    pub super_arcs: bool,
}

impl Default for NetworkOpts {
    fn default() -> Self {
        NetworkOpts {
            soc_bounds: true,
            time_bounds: true,
            super_arcs: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NetworkStats {
    pub raw_nodes: usize,
    pub raw_arcs: usize,
    pub nodes: usize,
    pub arcs: usize,
}

/// Build the network and apply the configured reductions.
pub fn prepare_network(inst: &Instance, opts: NetworkOpts) -> (Network, NetworkStats) {
    let raw = build_network(inst);
    let mut stats = NetworkStats {
        raw_nodes: raw.node_count(),
        raw_arcs: raw.arc_count(),
        nodes: raw.node_count(),
        arcs: raw.arc_count(),
    };
    let mut net = raw;
    if opts.soc_bounds || opts.time_bounds {
        let bounds = StationBounds::compute(&net);
        net = downsize(
            &net,
            &bounds,
            DownsizeOpts {
                use_soc: opts.soc_bounds,
                use_time: opts.time_bounds,
            },
        );
    }
    if opts.super_arcs {
        net = aggregate_super_arcs(&net);
    }
    stats.nodes = net.node_count();
    stats.arcs = net.arc_count();
    (net, stats)
}

#[derive(Debug, Clone)]
pub struct CcgConfig {
    pub procedure: Procedure,
    /// Relative optimality gap target.
    pub eps: f64,
    pub max_rounds: usize,
    pub time_limit: Option<Duration>,
    pub cg: CgConfig,
    pub wc: WorstCaseConfig,
    pub solver: SolverConfig,
    pub network: NetworkOpts,
    /// Cap on total units, for matched-fleet comparisons.
    pub fleet_cap: Option<u32>,
}

impl Default for CcgConfig {
    fn default() -> Self {
        CcgConfig {
            procedure: Procedure::AlwaysInteger,
            eps: 0.03,
            max_rounds: 60,
            time_limit: None,
            cg: CgConfig::default(),
            wc: WorstCaseConfig::default(),
            solver: SolverConfig::default(),
            network: NetworkOpts::default(),
            fleet_cap: None,
        }
    }
}

/// Scenario pool, bound bookkeeping and the running incumbent.
pub struct MasterState {
    pub scenarios: Vec<Scenario>,
    pub lb: f64,
    pub ub: f64,
    pub round: usize,
    incumbent: Option<Incumbent>,
}

impl Default for MasterState {
    fn default() -> Self {
        Self::new()
    }
}

impl MasterState {
    pub fn new() -> Self {
        MasterState {
            scenarios: Vec::new(),
            lb: f64::NEG_INFINITY,
            ub: f64::INFINITY,
            round: 0,
            incumbent: None,
        }
    }

    /// Append a scenario's recourse block; duplicates are rejected so the
    /// alternation cannot stall on redundant rows.
    pub fn add_scenario(&mut self, s: Scenario) -> bool {
        if self.scenarios.iter().any(|old| old.zeta == s.zeta) {
            return false;
        }
        self.scenarios.push(s);
        true
    }

    pub fn realized_demands(&self, inst: &Instance) -> Vec<Matrix> {
        self.scenarios
            .iter()
            .map(|s| crate::instance::demand_realization(inst, &s.zeta).expect("admissible"))
            .collect()
    }
}

/// Relative optimality gap; one when no finite upper bound exists yet.
pub fn optimality_gap(ub: f64, lb: f64) -> f64 {
    if !ub.is_finite() {
        return 1.0;
    }
    if ub.abs() < 1e-12 {
        return if (ub - lb).abs() < 1e-9 { 0.0 } else { 1.0 };
    }
    (ub - lb) / ub
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    TimeLimit,
    RoundLimit,
    /// The worst case repeated without closing the gap.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct TraceRow {
    pub round: usize,
    pub phase: &'static str,
    pub lb: f64,
    pub ub: f64,
    pub gap: f64,
    pub pool_size: usize,
    pub scenario_count: usize,
    pub millis: u128,
}

/// A concrete plan: selected path columns, installed posts and the cost
/// split.
#[derive(Debug, Clone)]
pub struct Solution {
    pub columns: Vec<Column>,
    /// Installed posts per facility index (fast candidates only).
    pub posts: Vec<(usize, u32)>,
    pub fleet_units: u32,
    /// Purchase plus post installation, in money.
    pub investment: f64,
    /// Arc operating/charging money along the selected paths.
    pub operating: f64,
    /// Worst-case weighted passenger cost at this plan.
    pub worst_passenger: f64,
    pub objective: f64,
    pub gap: f64,
    pub worst_scenario: Option<Scenario>,
}

#[derive(Debug)]
pub struct SolveOutcome {
    pub solution: Solution,
    pub status: RunStatus,
    pub trace: Vec<TraceRow>,
    pub cg_trace: Vec<(usize, CgTraceRow)>,
    pub scenarios: Vec<Scenario>,
    pub pool_size: usize,
    pub net_stats: NetworkStats,
    pub wall_secs: f64,
    pub mean_pricing_secs: f64,
    pub rounds: usize,
}

struct Incumbent {
    columns: Vec<Column>,
    posts: Vec<(usize, u32)>,
    first_stage: f64,
    operating: f64,
    investment: f64,
    worst: Scenario,
    worst_value: f64,
}

/// Run the scenario-generation loop on an instance.
pub fn run_ccg(inst: &Instance, cfg: &CcgConfig) -> SolveOutcome {
    let started = Instant::now();
    let (net, net_stats) = prepare_network(inst, cfg.network);
    let mut pool: Vec<Column> = Vec::new();
    let mut state = MasterState::new();
    let mut trace = Vec::new();
    let mut cg_trace = Vec::new();
    let mut pricing_secs = Vec::new();

    let status = match cfg.procedure {
        Procedure::AlwaysInteger => run_phase(
            inst,
            &net,
            cfg,
            &mut state,
            &mut pool,
            true,
            true,
            "integer",
            started,
            &mut trace,
            &mut cg_trace,
            &mut pricing_secs,
        ),
        Procedure::FirstContinuous => {
            let first = run_phase(
                inst,
                &net,
                cfg,
                &mut state,
                &mut pool,
                false,
                true,
                "relaxed",
                started,
                &mut trace,
                &mut cg_trace,
                &mut pricing_secs,
            );
            if first == RunStatus::TimeLimit {
                first
            } else {
                // integer restart over the frozen pools
                state.lb = f64::NEG_INFINITY;
                state.ub = f64::INFINITY;
                run_phase(
                    inst,
                    &net,
                    cfg,
                    &mut state,
                    &mut pool,
                    true,
                    false,
                    "integer",
                    started,
                    &mut trace,
                    &mut cg_trace,
                    &mut pricing_secs,
                )
            }
        }
    };

    let solution = state
        .incumbent
        .take()
        .map(|inc| Solution {
            fleet_units: inc.columns.len() as u32 * inst.weights.unit_multiplicity,
            objective: inc.first_stage + inc.worst_value,
            gap: optimality_gap(state.ub, state.lb).max(0.0),
            columns: inc.columns,
            posts: inc.posts,
            investment: inc.investment,
            operating: inc.operating,
            worst_passenger: inc.worst_value,
            worst_scenario: Some(inc.worst),
        })
        .unwrap_or_else(|| Solution {
            columns: Vec::new(),
            posts: Vec::new(),
            fleet_units: 0,
            investment: 0.0,
            operating: 0.0,
            worst_passenger: 0.0,
            objective: f64::INFINITY,
            gap: 1.0,
            worst_scenario: None,
        });

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
        scenarios: state.scenarios,
        pool_size: pool.len(),
        net_stats,
        wall_secs: started.elapsed().as_secs_f64(),
        mean_pricing_secs,
        rounds: state.round,
    }
}

#[allow(clippy::too_many_arguments)]
fn run_phase(
    inst: &Instance,
    net: &Network,
    cfg: &CcgConfig,
    state: &mut MasterState,
    pool: &mut Vec<Column>,
    integer: bool,
    generate_columns: bool,
    phase: &'static str,
    started: Instant,
    trace: &mut Vec<TraceRow>,
    cg_trace: &mut Vec<(usize, CgTraceRow)>,
    pricing_secs: &mut Vec<f64>,
) -> RunStatus {
    let mut dup_streak = 0;
    loop {
        state.round += 1;
        let round_started = Instant::now();
        if state.round > cfg.max_rounds {
            return RunStatus::RoundLimit;
        }
        if let Some(limit) = cfg.time_limit {
            if started.elapsed() > limit {
                return RunStatus::TimeLimit;
            }
        }
        let demands = state.realized_demands(inst);

        // master value and plan
        let (master_val, x, r_vals) = if generate_columns {
            let cg = run_column_generation(net, inst, &demands, &cfg.cg, pool);
            for row in &cg.trace {
                cg_trace.push((state.round, row.clone()));
            }
            pricing_secs.push(cg.mean_pricing_secs);
            assert!(
                !matches!(cg.stop, CgStop::IterCap),
                "column generation hit its iteration cap"
            );
            if integer {
                solve_integer_master(inst, pool, &demands, cfg)
            } else {
                (cg.value, cg.x, cg.r)
            }
        } else {
            solve_integer_master(inst, pool, &demands, cfg)
        };
        state.lb = state.lb.max(master_val);

        // evaluate the worst case at the plan
        let cap = CapacityProfile::from_columns(inst, pool, &x);
        let wc = solve_worst_case(&cap, inst, &cfg.wc, state.round);
        let first_stage = first_stage_cost(inst, pool, &x, &r_vals);
        let cand_ub = first_stage + wc.value;
        if cand_ub < state.ub {
            state.ub = cand_ub;
            let (columns, posts, investment, operating) =
                assemble_plan(inst, pool, &x, &r_vals, integer);
            state.incumbent = Some(Incumbent {
                columns,
                posts,
                first_stage,
                operating,
                investment,
                worst: wc.scenario.clone(),
                worst_value: wc.value,
            });
        }

        let gap = optimality_gap(state.ub, state.lb);
        trace.push(TraceRow {
            round: state.round,
            phase,
            lb: state.lb,
            ub: state.ub,
            gap,
            pool_size: pool.len(),
            scenario_count: state.scenarios.len(),
            millis: round_started.elapsed().as_millis(),
        });
        if gap <= cfg.eps {
            return RunStatus::Converged;
        }
        if !state.add_scenario(wc.scenario) {
            dup_streak += 1;
            if dup_streak >= 2 {
                return RunStatus::Stalled;
            }
        } else {
            dup_streak = 0;
        }
    }
}

pub(crate) fn solve_integer_master(
    inst: &Instance,
    pool: &[Column],
    demands: &[Matrix],
    cfg: &CcgConfig,
) -> (f64, Vec<f64>, Vec<f64>) {
    let master = build_master(inst, pool, demands, true, cfg.fleet_cap);
    let sol = solve_mip(&master.model, &cfg.solver);
    assert!(
        matches!(sol.status, MipStatus::Optimal | MipStatus::Feasible),
        "integer master must produce a plan: {:?}",
        sol.status
    );
    let x = master.layout.var_x.iter().map(|&v| sol.x[v].round()).collect();
    let r = master
        .layout
        .var_r
        .iter()
        .map(|slot| slot.map(|v| sol.x[v].round()).unwrap_or(0.0))
        .collect();
    (sol.objective, x, r)
}

pub(crate) fn first_stage_cost(inst: &Instance, pool: &[Column], x: &[f64], r: &[f64]) -> f64 {
    let theta1 = inst.weights.theta1;
    let mut total = 0.0;
    for (col, &w) in pool.iter().zip(x) {
        total += theta1 * col.cost * w;
    }
    for (f, fac) in inst.facilities().iter().enumerate() {
        if let FacilityKind::Fast(i) = fac.kind {
            total += theta1 * inst.topology.fast_candidates[i].post_cost * r[f];
        }
    }
    total
}

pub(crate) fn assemble_plan(
    inst: &Instance,
    pool: &[Column],
    x: &[f64],
    r: &[f64],
    integer: bool,
) -> (Vec<Column>, Vec<(usize, u32)>, f64, f64) {
    // one entry per unit: a column selected with multiplicity m appears m
    // times (identical duties coupled into one vehicle)
    let mut columns: Vec<Column> = Vec::new();
    for (c, &w) in pool.iter().zip(x) {
        if integer {
            for _ in 0..w.round() as u32 {
                columns.push(c.clone());
            }
        } else if w > 1e-9 {
            columns.push(c.clone());
        }
    }
    let posts: Vec<(usize, u32)> = inst
        .facilities()
        .iter()
        .enumerate()
        .filter(|(_, fac)| fac.is_fast())
        .map(|(f, _)| (f, r[f].round() as u32))
        .collect();
    let k = inst.weights.unit_multiplicity as f64;
    let purchase = inst.dynamics.costs.unit_purchase;
    let mut investment = 0.0;
    let mut operating = 0.0;
    for col in &columns {
        investment += k * purchase;
        operating += col.cost - k * purchase;
    }
    for &(f, units) in &posts {
        if let FacilityKind::Fast(i) = inst.facilities()[f].kind {
            investment += inst.topology.fast_candidates[i].post_cost * units as f64;
        }
    }
    (columns, posts, investment, operating)
}

/// Independent re-check of a finished plan against the raw network rules:
/// arc continuity, depot balance, composition and charging capacities.
pub fn validate_solution(
    net: &Network,
    inst: &Instance,
    sol: &Solution,
) -> Result<(), String> {
    let horizon = inst.discretization.horizon;
    let q_count = inst.segment_count();
    let k = inst.weights.unit_multiplicity;
    let mut balance = vec![0i64; net.meta.depots.len()];
    let mut comp = vec![0u32; q_count * horizon];
    let mut charge = vec![0u32; net.meta.facilities.len() * horizon];
    for (i, col) in sol.columns.iter().enumerate() {
        crate::pricing::Path::from_arcs(net, col.path.arcs.clone())
            .map_err(|e| format!("path {i}: {e}"))?;
        balance[col.start_depot] += 1;
        balance[col.end_depot] -= 1;
        for &(q, t) in &col.coverage {
            comp[q * horizon + (t as usize - 1)] += 1;
        }
        for &(f, t) in &col.charging {
            charge[f * horizon + (t as usize - 1)] += k;
        }
    }
    if balance.iter().any(|&b| b != 0) {
        return Err(format!("depot balance violated: {balance:?}"));
    }
    let n_com = inst.weights.effective_max_composition();
    if let Some(slot) = comp.iter().position(|&c| c > n_com) {
        return Err(format!(
            "composition limit exceeded at slot {slot}: {} > {n_com}",
            comp[slot]
        ));
    }
    let posts: std::collections::HashMap<usize, u32> = sol.posts.iter().copied().collect();
    for (f, fac) in net.meta.facilities.iter().enumerate() {
        let cap = match fac.kind {
            FacilityKind::Depot(i) => inst.topology.depots[i].posts,
            FacilityKind::Fast(_) => *posts.get(&f).unwrap_or(&0),
        };
        for t in 0..horizon {
            if charge[f * horizon + t] > cap {
                return Err(format!(
                    "charging capacity exceeded at facility {f}, interval {}: {} > {cap}",
                    t + 1,
                    charge[f * horizon + t]
                ));
            }
        }
    }
    Ok(())
}

