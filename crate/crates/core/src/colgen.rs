//! Column pool, master problem construction and the column-generation loop.
//!
//! The master selects unit paths (columns) and fast-charging capacities
//! subject to depot balance, per-(segment, interval) composition limits and
//! per-(facility, interval) charging capacity; passenger flows enter through
//! one recourse block per demand scenario, linked to an epigraph variable.

use std::collections::HashSet;

use desklp::{
    solve_lp_warm, Basis, LpModel, LpSolution, MipModel, Rel, Sense, SolverConfig,
};

use crate::instance::{FacilityKind, Instance, Matrix, SegmentIdx, FacilityIdx};
use crate::network::{ArcKind, Network};
use crate::pricing::{self, DualPrices, LabelAlgo, Path};

/// One generated path with its master coefficients.
#[derive(Debug, Clone)]
pub struct Column {
    pub path: Path,
    /// Full path cost: purchase plus arc money, multiplicity-scaled.
    pub cost: f64,
    pub start_depot: usize,
    pub end_depot: usize,
    /// Covered (segment, entry interval) pairs, each at most once.
    pub coverage: Vec<(SegmentIdx, u32)>,
    /// Charging occupancy (facility, interval) pairs.
    pub charging: Vec<(FacilityIdx, u32)>,
}

/// Derive master coefficients from a path.
pub fn path_coefficients(net: &Network, inst: &Instance, path: &Path) -> Column {
    let k = inst.weights.unit_multiplicity as f64;
    let mut money = 0.0;
    let mut coverage = Vec::new();
    let mut charging = Vec::new();
    let mut start_depot = usize::MAX;
    let mut end_depot = usize::MAX;
    for &aid in &path.arcs {
        let arc = net.arc(aid);
        money += arc.money;
        coverage.extend_from_slice(&arc.covered);
        match arc.kind {
            ArcKind::LeaveDepot(d) => start_depot = d,
            ArcKind::EnterDepot(d) => end_depot = d,
            ArcKind::Charge(f) => {
                let t = net.node(arc.tail).time().expect("charge tail timed");
                charging.push((f, t));
            }
            _ => {}
        }
    }
    coverage.sort_unstable();
    debug_assert!(coverage.windows(2).all(|w| w[0] != w[1]), "duplicate coverage");
    charging.sort_unstable();
    Column {
        path: path.clone(),
        cost: k * (inst.dynamics.costs.unit_purchase + money),
        start_depot,
        end_depot,
        coverage,
        charging,
    }
}

/// Row/variable layout of a built master.
#[derive(Debug, Clone)]
pub struct MasterLayout {
    /// r-variable per facility (fast candidates only).
    pub var_r: Vec<Option<usize>>,
    pub var_eta: usize,
    /// x-variable per pool column, appended last.
    pub var_x: Vec<usize>,
    pub rows_balance: Vec<usize>,
    pub row_comp0: usize,
    pub row_charge0: usize,
    pub row_fleet: Option<usize>,
    pub blocks: Vec<ScenarioBlock>,
    /// Epigraph cut rows (decomposition-by-cuts masters only).
    pub rows_cut: Vec<usize>,
}

/// A master the column-generation engine can drive: build over a pool and
/// map an LP solution back to pricing duals.
pub trait MasterSpec {
    fn build(&self, pool: &[Column]) -> Master;
    fn duals(&self, layout: &MasterLayout, sol: &desklp::LpSolution) -> DualPrices;
}

#[derive(Debug, Clone)]
pub struct ScenarioBlock {
    pub row_eta: usize,
    pub row_flow0: usize,
    pub row_couple0: usize,
    pub var_y0: usize,
    pub var_b0: usize,
}

pub struct Master {
    pub model: MipModel,
    pub layout: MasterLayout,
}

/// Build the master over a column pool and a list of realized demand
/// matrices (one per scenario). With `integer` set, path selection is binary
/// and capacities integral; otherwise everything is relaxed.
pub fn build_master(
    inst: &Instance,
    columns: &[Column],
    scenarios: &[Matrix],
    integer: bool,
    fleet_cap: Option<u32>,
) -> Master {
    let horizon = inst.discretization.horizon;
    let q_count = inst.segment_count();
    let k = inst.weights.unit_multiplicity;
    let cap_eff = inst.weights.effective_capacity();
    let n_com = inst.weights.effective_max_composition() as f64;
    let theta1 = inst.weights.theta1;
    let theta2 = inst.weights.theta2;
    let theta3 = inst.weights.theta3;
    let facilities = inst.facilities();

    let mut lp = LpModel::new(Sense::Minimize);

    // r variables per fast facility
    let mut var_r = vec![None; facilities.len()];
    let mut integers = Vec::new();
    for (f, fac) in facilities.iter().enumerate() {
        if let FacilityKind::Fast(i) = fac.kind {
            let cand = &inst.topology.fast_candidates[i];
            let v = lp.add_var(0.0, cand.max_posts as f64, theta1 * cand.post_cost);
            var_r[f] = Some(v);
            if integer {
                integers.push(v);
            }
        }
    }
    // worst-case epigraph; nonnegative since recourse costs are nonnegative
    let var_eta = lp.add_var(0.0, f64::INFINITY, 1.0);

    // static rows
    let rows_balance: Vec<usize> = (0..inst.topology.depots.len())
        .map(|_| lp.add_row(Rel::Eq, 0.0, Vec::new()))
        .collect();
    let row_comp0 = lp.num_rows();
    for _ in 0..q_count * horizon {
        lp.add_row(Rel::Le, n_com, Vec::new());
    }
    let row_charge0 = lp.num_rows();
    for (f, fac) in facilities.iter().enumerate() {
        for _ in 0..horizon {
            match fac.kind {
                FacilityKind::Depot(i) => {
                    lp.add_row(Rel::Le, inst.topology.depots[i].posts as f64, Vec::new());
                }
                FacilityKind::Fast(_) => {
                    let r = var_r[f].unwrap();
                    lp.add_row(Rel::Le, 0.0, vec![(r, -1.0)]);
                }
            }
        }
    }
    // a cap on total units becomes a cap on selected paths of k units each
    let row_fleet =
        fleet_cap.map(|cap| lp.add_row(Rel::Le, (cap / k.max(1)) as f64, Vec::new()));

    // scenario blocks
    let mut blocks = Vec::with_capacity(scenarios.len());
    for alpha in scenarios {
        let var_y0 = lp.num_vars();
        for _ in 0..q_count * horizon {
            lp.add_var(0.0, f64::INFINITY, 0.0);
        }
        let var_b0 = lp.num_vars();
        for _ in 0..q_count * horizon {
            lp.add_var(0.0, f64::INFINITY, 0.0);
        }
        // eta >= theta2 * sum y + theta3 * sum y_T
        let mut eta_coeffs = vec![(var_eta, -1.0)];
        for q in 0..q_count {
            for t in 0..horizon {
                let y = var_y0 + q * horizon + t;
                let w = theta2 + if t + 1 == horizon { theta3 } else { 0.0 };
                eta_coeffs.push((y, w));
            }
        }
        let row_eta = lp.add_row(Rel::Le, 0.0, eta_coeffs);
        let row_flow0 = lp.num_rows();
        for q in 0..q_count {
            for t in 0..horizon {
                let y = var_y0 + q * horizon + t;
                let b = var_b0 + q * horizon + t;
                let mut coeffs = vec![(y, 1.0), (b, 1.0)];
                if t > 0 {
                    coeffs.push((var_y0 + q * horizon + t - 1, -1.0));
                }
                lp.add_row(Rel::Ge, alpha.get(q, t), coeffs);
            }
        }
        let row_couple0 = lp.num_rows();
        for q in 0..q_count {
            for t in 0..horizon {
                let b = var_b0 + q * horizon + t;
                lp.add_row(Rel::Le, 0.0, vec![(b, 1.0)]);
            }
        }
        blocks.push(ScenarioBlock {
            row_eta,
            row_flow0,
            row_couple0,
            var_y0,
            var_b0,
        });
    }

    // path columns, appended last so a warm basis can be extended; a path
    // may be selected with multiplicity (identical units coupled into one
    // vehicle), bounded by the composition cap
    let mut var_x = Vec::with_capacity(columns.len());
    for col in columns {
        let x = lp.add_var(0.0, n_com, theta1 * col.cost);
        if integer {
            integers.push(x);
        }
        if col.start_depot != col.end_depot {
            lp.rows[rows_balance[col.start_depot]].coeffs.push((x, 1.0));
            lp.rows[rows_balance[col.end_depot]].coeffs.push((x, -1.0));
        }
        for &(q, t) in &col.coverage {
            let row = row_comp0 + q * horizon + (t as usize - 1);
            lp.rows[row].coeffs.push((x, 1.0));
            for b in &blocks {
                let row = b.row_couple0 + q * horizon + (t as usize - 1);
                lp.rows[row].coeffs.push((x, -cap_eff));
            }
        }
        for &(f, t) in &col.charging {
            let row = row_charge0 + f * horizon + (t as usize - 1);
            lp.rows[row].coeffs.push((x, k as f64));
        }
        if let Some(row) = row_fleet {
            lp.rows[row].coeffs.push((x, 1.0));
        }
        var_x.push(x);
    }

    let mut model = MipModel::from_lp(lp);
    for v in integers {
        model.set_integer(v);
    }
    Master {
        model,
        layout: MasterLayout {
            var_r,
            var_eta,
            var_x,
            rows_balance,
            row_comp0,
            row_charge0,
            row_fleet,
            blocks,
            rows_cut: Vec::new(),
        },
    }
}

/// Pull the pricing duals out of a master LP solution.
pub fn extract_duals(
    net: &Network,
    inst: &Instance,
    layout: &MasterLayout,
    sol: &LpSolution,
) -> DualPrices {
    let horizon = inst.discretization.horizon;
    let q_count = inst.segment_count();
    let facilities = net.meta.facilities.len();
    let mut d = DualPrices::zeros(
        net,
        layout.blocks.len(),
        inst.weights.theta1,
        inst.weights.effective_capacity(),
        inst.dynamics.costs.unit_purchase,
    );
    d.multiplicity = inst.weights.unit_multiplicity as f64;
    for (dep, &row) in layout.rows_balance.iter().enumerate() {
        d.iota[dep] = sol.duals[row];
    }
    for idx in 0..q_count * horizon {
        d.pi[idx] = sol.duals[layout.row_comp0 + idx];
    }
    for idx in 0..facilities * horizon {
        d.rho[idx] = sol.duals[layout.row_charge0 + idx];
    }
    for (w, block) in layout.blocks.iter().enumerate() {
        for idx in 0..q_count * horizon {
            d.varsigma[w][idx] = sol.duals[block.row_couple0 + idx];
        }
    }
    d
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CgStop {
    /// No path prices below the tolerance: the relaxation is optimal over
    /// all paths.
    Exact,
    /// Objective improvement stayed under 0.5% for ten consecutive
    /// iterations.
    Truncated,
    IterCap,
    /// Negative-reduced-cost paths were all duplicates (numerical stall).
    Stalled,
}

#[derive(Debug, Clone)]
pub struct CgTraceRow {
    pub iteration: usize,
    pub value: f64,
    pub min_reduced_cost: f64,
    pub pool_size: usize,
}

pub struct CgResult {
    pub value: f64,
    pub duals: DualPrices,
    pub stop: CgStop,
    pub iterations: usize,
    /// Objective after each master solve.
    pub history: Vec<f64>,
    /// Primal weight per pool column in the final master.
    pub x: Vec<f64>,
    /// Fast-post relaxation values per facility.
    pub r: Vec<f64>,
    pub eta: f64,
    pub trace: Vec<CgTraceRow>,
    /// Mean wall time of one pricing call, in seconds.
    pub mean_pricing_secs: f64,
}

#[derive(Debug, Clone)]
pub struct CgConfig {
    pub tol_rc: f64,
    pub truncation: bool,
    pub max_iters: usize,
    pub solver: SolverConfig,
    pub algo: LabelAlgo,
}

impl Default for CgConfig {
    fn default() -> Self {
        CgConfig {
            tol_rc: 1e-6,
            truncation: false,
            max_iters: 5_000,
            solver: SolverConfig::default(),
            algo: LabelAlgo::TopoOrder,
        }
    }
}

/// The plain scenario-block master as a [`MasterSpec`].
pub struct RmpSpec<'a> {
    pub net: &'a Network,
    pub inst: &'a Instance,
    pub scenarios: &'a [Matrix],
    pub fleet_cap: Option<u32>,
}

impl MasterSpec for RmpSpec<'_> {
    fn build(&self, pool: &[Column]) -> Master {
        build_master(self.inst, pool, self.scenarios, false, self.fleet_cap)
    }
    fn duals(&self, layout: &MasterLayout, sol: &LpSolution) -> DualPrices {
        extract_duals(self.net, self.inst, layout, sol)
    }
}

/// Column generation to the (possibly truncated) optimum of the master LP
/// relaxation. Grows `pool` in place; the pool may start empty because
/// unserved demand keeps the master feasible.
pub fn run_column_generation(
    net: &Network,
    inst: &Instance,
    scenarios: &[Matrix],
    cfg: &CgConfig,
    pool: &mut Vec<Column>,
) -> CgResult {
    let spec = RmpSpec {
        net,
        inst,
        scenarios,
        fleet_cap: None,
    };
    run_cg_with(net, inst, &spec, cfg, pool)
}

/// Column-generation engine over any master shape.
pub fn run_cg_with(
    net: &Network,
    inst: &Instance,
    spec: &dyn MasterSpec,
    cfg: &CgConfig,
    pool: &mut Vec<Column>,
) -> CgResult {
    let mut seen: HashSet<Vec<u32>> = pool.iter().map(|c| c.path.nodes.clone()).collect();
    let mut warm: Option<Basis> = None;
    let mut history: Vec<f64> = Vec::new();
    let mut trace = Vec::new();
    let mut weak_streak = 0usize;
    let mut pricing_time = 0.0f64;
    let mut pricing_calls = 0usize;

    let mut iterations = 0;
    let stop;
    let (mut last_sol, mut last_layout);
    loop {
        let master = spec.build(pool);
        let sol = solve_lp_warm(&master.model.lp, &cfg.solver, warm.as_ref());
        assert!(
            sol.is_optimal(),
            "master relaxation must solve: {:?}",
            sol.status
        );
        warm = Some(sol.basis.clone());
        let value = sol.objective;
        let duals = spec.duals(&master.layout, &sol);

        // columns selected to their full multiplicity price negative at an
        // optimum (the bound dual absorbs it); pricing must look past them
        let saturated: HashSet<Vec<u32>> = pool
            .iter()
            .zip(&master.layout.var_x)
            .filter(|&(_, &v)| sol.x[v] >= master.model.lp.vars[v].upper - 1e-6)
            .map(|(c, _)| c.path.nodes.clone())
            .collect();

        let t0 = std::time::Instant::now();
        let priced = pricing::solve_pricing_excluding(net, &duals, cfg.algo, &saturated, 400);
        pricing_time += t0.elapsed().as_secs_f64();
        pricing_calls += 1;

        let min_rc = priced
            .iter()
            .map(|b| b.value)
            .fold(f64::INFINITY, f64::min);
        iterations += 1;
        if let Some(prev) = history.last().copied() {
            let denom: f64 = prev.abs().max(1e-9);
            if (prev - value) / denom <= 0.005 {
                weak_streak += 1;
            } else {
                weak_streak = 0;
            }
        }
        history.push(value);
        trace.push(CgTraceRow {
            iteration: iterations,
            value,
            min_reduced_cost: min_rc,
            pool_size: pool.len(),
        });

        last_sol = sol;
        last_layout = master.layout;

        if min_rc >= -cfg.tol_rc {
            stop = CgStop::Exact;
            break;
        }
        if cfg.truncation && weak_streak >= 10 {
            stop = CgStop::Truncated;
            break;
        }
        if iterations >= cfg.max_iters {
            stop = CgStop::IterCap;
            break;
        }
        let mut added = 0;
        for bp in &priced {
            if bp.value < -cfg.tol_rc && seen.insert(bp.path.nodes.clone()) {
                pool.push(path_coefficients(net, inst, &bp.path));
                added += 1;
            }
        }
        if added == 0 {
            stop = CgStop::Stalled;
            break;
        }
    }

    let x = last_layout
        .var_x
        .iter()
        .map(|&v| last_sol.x[v])
        .collect();
    let r = last_layout
        .var_r
        .iter()
        .map(|slot| slot.map(|v| last_sol.x[v]).unwrap_or(0.0))
        .collect();
    let eta = last_sol.x[last_layout.var_eta];
    let duals = spec.duals(&last_layout, &last_sol);
    CgResult {
        value: *history.last().unwrap(),
        duals,
        stop,
        iterations,
        history,
        x,
        r,
        eta,
        trace,
        mean_pricing_secs: pricing_time / pricing_calls.max(1) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_network;
    use crate::synth::{self, SynthParams};

    fn zero_demand_instance() -> Instance {
        let mut inst = synth::generate(&SynthParams::tiny(51));
        let q = inst.segment_count();
        let t = inst.discretization.horizon;
        inst.demand.nominal = Matrix::zeros(q, t);
        inst.demand.deviation = Matrix::zeros(q, t);
        inst
    }

    #[test]
    fn zero_demand_terminates_immediately_at_zero() {
        let inst = zero_demand_instance();
        let net = build_network(&inst);
        let scen = vec![inst.demand.nominal.clone()];
        let mut pool = Vec::new();
        let res = run_column_generation(&net, &inst, &scen, &CgConfig::default(), &mut pool);
        assert_eq!(res.stop, CgStop::Exact);
        assert_eq!(res.iterations, 1);
        assert!(res.value.abs() < 1e-9);
        assert!(pool.is_empty());
    }

    #[test]
    fn objective_history_is_nonincreasing() {
        let inst = synth::generate(&SynthParams::tiny(52));
        let net = build_network(&inst);
        let scen = vec![inst.demand.nominal.clone()];
        let mut pool = Vec::new();
        let res = run_column_generation(&net, &inst, &scen, &CgConfig::default(), &mut pool);
        assert_eq!(res.stop, CgStop::Exact);
        for w in res.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-7, "history increased: {w:?}");
        }
        assert!(!pool.is_empty());
    }

    #[test]
    fn coefficients_mark_depots_coverage_and_charging() {
        let inst = synth::generate(&SynthParams::small(53));
        let net = build_network(&inst);
        let scen = vec![inst.demand.nominal.clone()];
        let mut pool = Vec::new();
        run_column_generation(&net, &inst, &scen, &CgConfig::default(), &mut pool);
        assert!(!pool.is_empty());
        for col in &pool {
            assert_eq!(col.start_depot, col.path.source_depot(&net));
            assert_eq!(col.end_depot, col.path.sink_depot(&net));
            // coverage matches walking the arcs
            let mut cov: Vec<(usize, u32)> = col
                .path
                .arcs
                .iter()
                .flat_map(|&a| net.arc(a).covered.clone())
                .collect();
            cov.sort_unstable();
            assert_eq!(cov, col.coverage);
        }
    }

    #[test]
    fn empty_pool_master_is_pure_penalty() {
        let inst = synth::generate(&SynthParams::tiny(54));
        let net = build_network(&inst);
        let alpha = inst.demand.nominal.clone();
        let master = build_master(&inst, &[], &[alpha.clone()], false, None);
        let sol = desklp::solve_lp(&master.model.lp, &SolverConfig::default());
        assert!(sol.is_optimal());
        // closed form: no capacity means backlog accumulates
        let mut want = 0.0;
        let horizon = inst.discretization.horizon;
        for q in 0..inst.segment_count() {
            let mut backlog = 0.0;
            for t in 0..horizon {
                backlog += alpha.get(q, t);
                want += inst.weights.theta2 * backlog;
            }
            want += inst.weights.theta3 * backlog;
        }
        assert!(
            (sol.objective - want).abs() < 1e-6 * (1.0 + want),
            "{} vs {want}",
            sol.objective
        );
    }
}
