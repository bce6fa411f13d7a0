//! Second-stage machinery: the budgeted uncertainty set, recourse
//! evaluation, the linearized worst-case MILP over its dual, and the outer
//! approximation that warm-starts it.
//!
//! Worst cases are binary: the uncertainty polytope has row/column budget
//! structure (totally unimodular), so with integral budgets the maximum of
//! the convex recourse value is attained at a 0/1 vertex.

use desklp::{
    solve_lp, solve_mip_warm, LpModel, MipModel, MipStatus, Rel, Sense, SolverConfig,
};

use crate::instance::{demand_realization, Instance, Matrix};

/// One worst-case demand realization, as the binary scaling matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub zeta: Matrix,
    /// Master round the scenario was produced in.
    pub found_at: usize,
    /// Worst-case recourse value at discovery.
    pub value: f64,
}

impl Scenario {
    /// Budget and box feasibility plus binarity.
    pub fn is_admissible(&self, inst: &Instance) -> bool {
        let z = &self.zeta;
        if z.rows != inst.segment_count() || z.cols != inst.discretization.horizon {
            return false;
        }
        if z.data.iter().any(|&v| v != 0.0 && v != 1.0) {
            return false;
        }
        for q in 0..z.rows {
            let sum: f64 = (0..z.cols).map(|t| z.get(q, t)).sum();
            if sum > inst.demand.budget_time[q] as f64 + 1e-9 {
                return false;
            }
        }
        for t in 0..z.cols {
            let sum: f64 = (0..z.rows).map(|q| z.get(q, t)).sum();
            if sum > inst.demand.budget_space[t] as f64 + 1e-9 {
                return false;
            }
        }
        true
    }
}

/// Effective boarding capacity per (segment, interval) induced by a
/// first-stage plan; the only statistic of the plan the second stage needs.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityProfile {
    pub cap: Matrix,
}

impl CapacityProfile {
    pub fn zeros(inst: &Instance) -> Self {
        CapacityProfile {
            cap: Matrix::zeros(inst.segment_count(), inst.discretization.horizon),
        }
    }

    /// From column weights: capacity = effective capacity times coverage.
    pub fn from_columns(inst: &Instance, columns: &[crate::colgen::Column], x: &[f64]) -> Self {
        let mut cap = Matrix::zeros(inst.segment_count(), inst.discretization.horizon);
        let c_eff = inst.weights.effective_capacity();
        for (col, &w) in columns.iter().zip(x) {
            if w <= 1e-12 {
                continue;
            }
            for &(q, t) in &col.coverage {
                let cur = cap.get(q, t as usize - 1);
                cap.set(q, t as usize - 1, cur + c_eff * w);
            }
        }
        CapacityProfile { cap }
    }
}

/// Bound on the recourse duals at interval `t` (1-based).
pub fn m_t(t: usize, horizon: usize, theta2: f64, theta3: f64) -> f64 {
    (horizon - t + 1) as f64 * theta2 + theta3
}

/// Exact recourse value by the greedy serve-as-early-as-possible rule:
/// with nonnegative waiting weights, boarding everything the capacity allows
/// in every interval is optimal per segment.
pub fn recourse_value(cap: &CapacityProfile, alpha: &Matrix, theta2: f64, theta3: f64) -> f64 {
    let mut total = 0.0;
    for q in 0..alpha.rows {
        let mut backlog = 0.0f64;
        for t in 0..alpha.cols {
            backlog += alpha.get(q, t);
            let served = backlog.min(cap.cap.get(q, t).max(0.0));
            backlog -= served;
            total += theta2 * backlog;
        }
        total += theta3 * backlog;
    }
    total
}

/// Recourse under a box scaling of the deviation.
pub fn evaluate_recourse(cap: &CapacityProfile, zeta: &Matrix, inst: &Instance) -> f64 {
    let alpha = demand_realization(inst, zeta).expect("zeta within the box");
    recourse_value(cap, &alpha, inst.weights.theta2, inst.weights.theta3)
}

/// Recourse as an explicit LP; returns the optimum and the flow-row duals
/// (the marginal cost of one extra arriving passenger per cell).
pub fn recourse_lp(
    cap: &CapacityProfile,
    alpha: &Matrix,
    inst: &Instance,
    cfg: &SolverConfig,
) -> (f64, Matrix) {
    let q_count = alpha.rows;
    let horizon = alpha.cols;
    let theta2 = inst.weights.theta2;
    let theta3 = inst.weights.theta3;
    let mut lp = LpModel::new(Sense::Minimize);
    let y0 = 0;
    for _q in 0..q_count {
        for t in 0..horizon {
            let w = theta2 + if t + 1 == horizon { theta3 } else { 0.0 };
            lp.add_var(0.0, f64::INFINITY, w);
        }
    }
    let b0 = lp.num_vars();
    for q in 0..q_count {
        for t in 0..horizon {
            lp.add_var(0.0, cap.cap.get(q, t).max(0.0), 0.0);
        }
    }
    for q in 0..q_count {
        for t in 0..horizon {
            let idx = q * horizon + t;
            let mut coeffs = vec![(y0 + idx, 1.0), (b0 + idx, 1.0)];
            if t > 0 {
                coeffs.push((y0 + idx - 1, -1.0));
            }
            lp.add_row(Rel::Ge, alpha.get(q, t), coeffs);
        }
    }
    let sol = solve_lp(&lp, cfg);
    assert!(sol.is_optimal(), "recourse LP always feasible");
    let mut delta = Matrix::zeros(q_count, horizon);
    for q in 0..q_count {
        for t in 0..horizon {
            delta.set(q, t, sol.duals[q * horizon + t]);
        }
    }
    (sol.objective, delta)
}

/// The recourse dual for a fixed scaling: maximize (alpha - cap)' delta over
/// the chain-constrained dual polytope. Strong duality makes this equal to
/// the recourse value; the maximizer feeds linearization cuts.
pub fn solve_idf(
    cap: &CapacityProfile,
    zeta: &Matrix,
    inst: &Instance,
    cfg: &SolverConfig,
) -> (f64, Matrix) {
    let alpha = demand_realization(inst, zeta).expect("zeta within the box");
    let q_count = alpha.rows;
    let horizon = alpha.cols;
    let theta2 = inst.weights.theta2;
    let theta3 = inst.weights.theta3;
    let mut lp = LpModel::new(Sense::Maximize);
    for q in 0..q_count {
        for t in 0..horizon {
            let obj = alpha.get(q, t) - cap.cap.get(q, t);
            lp.add_var(0.0, m_t(t + 1, horizon, theta2, theta3), obj);
        }
    }
    add_dual_chain_rows(&mut lp, 0, q_count, horizon, theta2, theta3);
    let sol = solve_lp(&lp, cfg);
    assert!(sol.is_optimal(), "dual polytope is bounded and nonempty");
    let mut delta = Matrix::zeros(q_count, horizon);
    for q in 0..q_count {
        for t in 0..horizon {
            delta.set(q, t, sol.x[q * horizon + t]);
        }
    }
    (sol.objective, delta)
}

/// Rows of the dual polytope: per segment, a backward difference chain with
/// a terminal cap.
fn add_dual_chain_rows(
    lp: &mut LpModel,
    delta0: usize,
    q_count: usize,
    horizon: usize,
    theta2: f64,
    theta3: f64,
) {
    for q in 0..q_count {
        for t in 0..horizon - 1 {
            let idx = delta0 + q * horizon + t;
            lp.add_row(Rel::Le, theta2, vec![(idx, 1.0), (idx + 1, -1.0)]);
        }
        let last = delta0 + q * horizon + horizon - 1;
        lp.add_row(Rel::Le, theta2 + theta3, vec![(last, 1.0)]);
    }
}

/// Variable layout of the worst-case MILP.
#[derive(Debug, Clone)]
pub struct WorstCaseLayout {
    pub delta0: usize,
    pub phi0: usize,
    pub zeta0: usize,
}

/// The linearized worst-case MILP: binary scalings, dual chain rows, big-M
/// linkage between the bilinear product and its stand-in, and both budget
/// families. Cells without deviation have their scaling pinned to zero.
pub fn build_worst_case_milp(
    cap: &CapacityProfile,
    inst: &Instance,
) -> (MipModel, WorstCaseLayout) {
    let q_count = inst.segment_count();
    let horizon = inst.discretization.horizon;
    let theta2 = inst.weights.theta2;
    let theta3 = inst.weights.theta3;
    let nominal = &inst.demand.nominal;
    let deviation = &inst.demand.deviation;

    let mut lp = LpModel::new(Sense::Maximize);
    let delta0 = 0;
    for q in 0..q_count {
        for t in 0..horizon {
            let obj = nominal.get(q, t) - cap.cap.get(q, t);
            lp.add_var(0.0, m_t(t + 1, horizon, theta2, theta3), obj);
        }
    }
    let phi0 = lp.num_vars();
    for q in 0..q_count {
        for t in 0..horizon {
            lp.add_var(0.0, m_t(t + 1, horizon, theta2, theta3), deviation.get(q, t));
        }
    }
    let zeta0 = lp.num_vars();
    for q in 0..q_count {
        for t in 0..horizon {
            let ub = if deviation.get(q, t) > 0.0 { 1.0 } else { 0.0 };
            lp.add_var(0.0, ub, 0.0);
        }
    }

    add_dual_chain_rows(&mut lp, delta0, q_count, horizon, theta2, theta3);
    for q in 0..q_count {
        for t in 0..horizon {
            let idx = q * horizon + t;
            let big_m = m_t(t + 1, horizon, theta2, theta3);
            lp.add_row(Rel::Le, 0.0, vec![(phi0 + idx, 1.0), (delta0 + idx, -1.0)]);
            lp.add_row(Rel::Le, 0.0, vec![(phi0 + idx, 1.0), (zeta0 + idx, -big_m)]);
            lp.add_row(
                Rel::Ge,
                -big_m,
                vec![(phi0 + idx, 1.0), (delta0 + idx, -1.0), (zeta0 + idx, -big_m)],
            );
        }
    }
    add_budget_rows(&mut lp, zeta0, inst);

    let mut mip = MipModel::from_lp(lp);
    for idx in 0..q_count * horizon {
        mip.set_integer(zeta0 + idx);
    }
    (
        mip,
        WorstCaseLayout {
            delta0,
            phi0,
            zeta0,
        },
    )
}

#[derive(Debug, Clone)]
pub struct WorstCase {
    pub scenario: Scenario,
    /// Exact recourse value at the worst case.
    pub value: f64,
    /// Maximizing recourse duals at the worst case.
    pub delta: Matrix,
    pub phi: Matrix,
}

#[derive(Debug, Clone)]
pub struct WorstCaseConfig {
    pub solver: SolverConfig,
    pub use_oa: bool,
    /// The absolute gap target is `oa_eps_rel * (1 + |UB|)`.
    pub oa_eps_rel: f64,
    pub oa_max_iters: usize,
}

impl Default for WorstCaseConfig {
    fn default() -> Self {
        WorstCaseConfig {
            solver: SolverConfig::default(),
            use_oa: true,
            oa_eps_rel: 1e-4,
            oa_max_iters: 50,
        }
    }
}

/// Exact worst-case scaling and value for a capacity profile, warm-started
/// from the outer approximation's incumbent.
pub fn solve_worst_case(
    cap: &CapacityProfile,
    inst: &Instance,
    cfg: &WorstCaseConfig,
    round: usize,
) -> WorstCase {
    let (mip, layout) = build_worst_case_milp(cap, inst);
    let n_vars = mip.lp.num_vars();
    let warm = if cfg.use_oa {
        let oa = outer_approximation(cap, inst, cfg);
        let zeta = &oa.incumbent.zeta;
        let (_, delta) = solve_idf(cap, zeta, inst, &cfg.solver);
        let mut x0 = vec![0.0; n_vars];
        let horizon = inst.discretization.horizon;
        for q in 0..zeta.rows {
            for t in 0..horizon {
                let idx = q * horizon + t;
                x0[layout.delta0 + idx] = delta.get(q, t);
                x0[layout.zeta0 + idx] = zeta.get(q, t);
                x0[layout.phi0 + idx] = delta.get(q, t) * zeta.get(q, t);
            }
        }
        Some(x0)
    } else {
        None
    };
    let sol = solve_mip_warm(&mip, &cfg.solver, warm.as_deref());
    assert!(
        matches!(sol.status, MipStatus::Optimal),
        "worst-case MILP must solve: {:?}",
        sol.status
    );

    let q_count = inst.segment_count();
    let horizon = inst.discretization.horizon;
    let mut zeta = Matrix::zeros(q_count, horizon);
    for q in 0..q_count {
        for t in 0..horizon {
            zeta.set(q, t, sol.x[layout.zeta0 + q * horizon + t].round());
        }
    }
    // re-derive the value and maximizing duals at the chosen scaling; by
    // strong duality this must agree with the MILP objective
    let value = evaluate_recourse(cap, &zeta, inst);
    let (idf_value, delta) = solve_idf(cap, &zeta, inst, &cfg.solver);
    assert!(
        (value - idf_value).abs() <= 1e-6 * (1.0 + value.abs()),
        "strong duality violated: recourse {value} vs dual {idf_value}"
    );
    debug_assert!(
        (value - sol.objective).abs() <= 1e-6 * (1.0 + value.abs()),
        "worst-case MILP off its own scaling: {} vs {value}",
        sol.objective
    );
    let mut phi = Matrix::zeros(q_count, horizon);
    for i in 0..phi.data.len() {
        phi.data[i] = delta.data[i] * zeta.data[i];
    }
    let scenario = Scenario {
        zeta,
        found_at: round,
        value,
    };
    debug_assert!(scenario.is_admissible(inst));
    WorstCase {
        scenario,
        value,
        delta,
        phi,
    }
}

#[derive(Debug, Clone)]
pub struct OaResult {
    /// Best budget-feasible binary scaling found.
    pub incumbent: Scenario,
    pub incumbent_value: f64,
    pub lb: f64,
    pub ub: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Outer approximation of the bilinear worst case.
///
/// Exact dual solves at fixed scalings give lower bounds; a cut master over
/// the scalings gives upper bounds. Each cut linearizes the worst-case value
/// around a visited binary scaling using the dual bound as the per-cell
/// slope: the value function is convex in the scaling with gradient between
/// zero and `deviation * M_t`, so
/// `g(z) <= g(z_j) + sum dev*M_t*(1 - z_j)*z` holds for binary points - a
/// valid overestimator, unlike a plain tangent plane of the bilinear term.
/// The master repeats a visited scaling only when its bound is tight, so the
/// scheme terminates finitely.
pub fn outer_approximation(
    cap: &CapacityProfile,
    inst: &Instance,
    cfg: &WorstCaseConfig,
) -> OaResult {
    let q_count = inst.segment_count();
    let horizon = inst.discretization.horizon;
    let theta2 = inst.weights.theta2;
    let theta3 = inst.weights.theta3;
    let deviation = &inst.demand.deviation;

    // cheapest scaling in the set as the first iterate
    let mut init = LpModel::new(Sense::Minimize);
    for q in 0..q_count {
        for t in 0..horizon {
            init.add_var(0.0, 1.0, deviation.get(q, t));
        }
    }
    add_budget_rows(&mut init, 0, inst);
    let init_sol = solve_lp(&init, &cfg.solver);
    assert!(init_sol.is_optimal());
    let mut zeta_raw = Matrix::zeros(q_count, horizon);
    zeta_raw.data.copy_from_slice(&init_sol.x[..q_count * horizon]);
    let mut zeta_j = round_to_budget_feasible(&zeta_raw, inst);

    // value ceiling: every passenger can wait at most the worst dual bound
    let value_cap: f64 = (0..q_count * horizon)
        .map(|i| {
            let t = i % horizon;
            (inst.demand.nominal.data[i] + deviation.data[i])
                * m_t(t + 1, horizon, theta2, theta3)
        })
        .sum::<f64>()
        .max(0.0);

    let mut lb = f64::NEG_INFINITY;
    let mut ub = f64::INFINITY;
    let mut best_binary: Option<(f64, Matrix)> = None;
    let mut cuts: Vec<(Matrix, f64, Matrix)> = Vec::new(); // (anchor, value, dual)
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.oa_max_iters {
        iterations += 1;
        let (val_j, delta_j) = solve_idf(cap, &zeta_j, inst, &cfg.solver);
        lb = lb.max(val_j);
        if best_binary.as_ref().map_or(true, |(v, _)| val_j > *v) {
            best_binary = Some((val_j, zeta_j.clone()));
        }
        cuts.push((zeta_j.clone(), val_j, delta_j));

        // cut master: binary scalings under the budgets, epigraph under cuts
        let mut lp = LpModel::new(Sense::Maximize);
        let zeta0 = 0;
        for q in 0..q_count {
            for t in 0..horizon {
                let ub_z = if deviation.get(q, t) > 0.0 { 1.0 } else { 0.0 };
                lp.add_var(0.0, ub_z, 0.0);
            }
        }
        let var_u = lp.add_var(0.0, value_cap, 1.0);
        add_budget_rows(&mut lp, zeta0, inst);
        for (anchor, value, _dual) in &cuts {
            let mut coeffs = vec![(var_u, 1.0)];
            for (i, (&dev, &aj)) in deviation.data.iter().zip(&anchor.data).enumerate() {
                if dev > 0.0 && aj == 0.0 {
                    let t = i % horizon;
                    coeffs.push((zeta0 + i, -dev * m_t(t + 1, horizon, theta2, theta3)));
                }
            }
            lp.add_row(Rel::Le, *value, coeffs);
        }
        let mut mip = MipModel::from_lp(lp);
        for i in 0..q_count * horizon {
            if deviation.data[i] > 0.0 {
                mip.set_integer(zeta0 + i);
            }
        }
        let sol = solve_mip_warm(&mip, &cfg.solver, None);
        assert!(sol.is_optimal(), "cut master is bounded: {:?}", sol.status);
        ub = ub.min(sol.objective);
        for i in 0..q_count * horizon {
            zeta_j.data[i] = sol.x[zeta0 + i].round().clamp(0.0, 1.0);
        }

        let eps = cfg.oa_eps_rel * (1.0 + ub.abs());
        if ub - lb < eps {
            converged = true;
            break;
        }
    }

    let (incumbent_value, zeta) = best_binary.expect("at least one iterate");
    OaResult {
        incumbent: Scenario {
            zeta,
            found_at: 0,
            value: incumbent_value,
        },
        incumbent_value,
        lb,
        ub,
        iterations,
        converged,
    }
}

fn add_budget_rows(lp: &mut LpModel, zeta0: usize, inst: &Instance) {
    let q_count = inst.segment_count();
    let horizon = inst.discretization.horizon;
    for q in 0..q_count {
        let coeffs: Vec<_> = (0..horizon)
            .map(|t| (zeta0 + q * horizon + t, 1.0))
            .collect();
        lp.add_row(Rel::Le, inst.demand.budget_time[q] as f64, coeffs);
    }
    for t in 0..horizon {
        let coeffs: Vec<_> = (0..q_count)
            .map(|q| (zeta0 + q * horizon + t, 1.0))
            .collect();
        lp.add_row(Rel::Le, inst.demand.budget_space[t] as f64, coeffs);
    }
}

/// Nearest budget-feasible binary point: cells at 0.5 or above become one,
/// largest first, while their row and column budgets last.
pub fn round_to_budget_feasible(zeta: &Matrix, inst: &Instance) -> Matrix {
    let mut cells: Vec<(usize, usize)> = (0..zeta.rows)
        .flat_map(|q| (0..zeta.cols).map(move |t| (q, t)))
        .filter(|&(q, t)| zeta.get(q, t) >= 0.5)
        .collect();
    cells.sort_by(|&(q1, t1), &(q2, t2)| {
        zeta.get(q2, t2)
            .partial_cmp(&zeta.get(q1, t1))
            .unwrap()
            .then(q1.cmp(&q2))
            .then(t1.cmp(&t2))
    });
    let mut out = Matrix::zeros(zeta.rows, zeta.cols);
    let mut row_left: Vec<i64> = inst.demand.budget_time.iter().map(|&b| b as i64).collect();
    let mut col_left: Vec<i64> = inst.demand.budget_space.iter().map(|&b| b as i64).collect();
    for (q, t) in cells {
        if row_left[q] > 0 && col_left[t] > 0 {
            out.set(q, t, 1.0);
            row_left[q] -= 1;
            col_left[t] -= 1;
        }
    }
    out
}

/// All budget-feasible binary scalings supported on the deviation matrix,
/// including the all-zero scaling. Refuses (rather than truncates) when the
/// support is too large to enumerate.
pub fn enumerate_scenarios(inst: &Instance, cap: usize) -> Result<Vec<Matrix>, String> {
    let dev = &inst.demand.deviation;
    let support: Vec<(usize, usize)> = (0..dev.rows)
        .flat_map(|q| (0..dev.cols).map(move |t| (q, t)))
        .filter(|&(q, t)| dev.get(q, t) > 0.0)
        .collect();
    if support.len() > 24 {
        return Err(format!(
            "deviation support of {} cells is too large to enumerate",
            support.len()
        ));
    }
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << support.len()) {
        let mut zeta = Matrix::zeros(dev.rows, dev.cols);
        for (bit, &(q, t)) in support.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                zeta.set(q, t, 1.0);
            }
        }
        let sc = Scenario {
            zeta,
            found_at: 0,
            value: 0.0,
        };
        if sc.is_admissible(inst) {
            out.push(sc.zeta);
            if out.len() > cap {
                return Err(format!("scenario count exceeds cap {cap}"));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, SynthParams};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn one_segment_example() -> (Instance, CapacityProfile) {
        // effectively 1 segment, 2 intervals, nominal (1,1), deviation
        // (1,0), theta2 = 1, theta3 = 2, zero capacity
        let mut params = SynthParams::tiny(71);
        params.horizon = 2;
        params.budget_time = 1;
        params.budget_space = 1;
        let mut inst = synth::generate(&params);
        let q = inst.segment_count();
        inst.demand.nominal = Matrix::zeros(q, 2);
        inst.demand.deviation = Matrix::zeros(q, 2);
        inst.demand.nominal.set(0, 0, 1.0);
        inst.demand.nominal.set(0, 1, 1.0);
        inst.demand.deviation.set(0, 0, 1.0);
        inst.weights.theta2 = 1.0;
        inst.weights.theta3 = 2.0;
        let cap = CapacityProfile::zeros(&inst);
        (inst, cap)
    }

    #[test]
    fn m_t_formula() {
        assert_eq!(m_t(90, 90, 1.0, 10.0), 11.0);
        assert_eq!(m_t(1, 90, 1.0, 10.0), 100.0);
    }

    #[test]
    fn recourse_examples() {
        let (inst, cap) = one_segment_example();
        // zero scaling: y = (1, 2), value = 3 + 4 = 7
        let zeta0 = Matrix::zeros(inst.segment_count(), 2);
        assert_eq!(evaluate_recourse(&cap, &zeta0, &inst), 7.0);
        // worst cell on: y = (2, 3), value = 5 + 6 = 11
        let mut zeta1 = zeta0.clone();
        zeta1.set(0, 0, 1.0);
        assert_eq!(evaluate_recourse(&cap, &zeta1, &inst), 11.0);
        // ample capacity: zero
        let mut ample = cap.clone();
        ample.cap = Matrix::filled(inst.segment_count(), 2, 100.0);
        assert_eq!(evaluate_recourse(&ample, &zeta1, &inst), 0.0);
    }

    #[test]
    fn greedy_matches_lp_with_duals_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        let inst = synth::generate(&SynthParams::tiny(72));
        let q = inst.segment_count();
        let horizon = inst.discretization.horizon;
        let cfg = SolverConfig::default();
        for _ in 0..10 {
            let mut cap = CapacityProfile::zeros(&inst);
            let mut alpha = Matrix::zeros(q, horizon);
            for i in 0..q * horizon {
                cap.cap.data[i] = rng.gen_range(0.0..20.0f64).floor();
                alpha.data[i] = rng.gen_range(0.0..15.0f64).floor();
            }
            let greedy = recourse_value(&cap, &alpha, inst.weights.theta2, inst.weights.theta3);
            let (lp_val, delta) = recourse_lp(&cap, &alpha, &inst, &cfg);
            assert!(
                (greedy - lp_val).abs() <= 1e-6 * (1.0 + greedy),
                "greedy {greedy} vs lp {lp_val}"
            );
            for t in 0..horizon {
                let bound = m_t(t + 1, horizon, inst.weights.theta2, inst.weights.theta3);
                for qq in 0..q {
                    assert!(delta.get(qq, t) <= bound + 1e-7);
                    assert!(delta.get(qq, t) >= -1e-9);
                }
            }
        }
    }

    #[test]
    fn idf_equals_recourse_by_strong_duality() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let inst = synth::generate(&SynthParams::tiny(73));
        let q = inst.segment_count();
        let horizon = inst.discretization.horizon;
        let cfg = SolverConfig::default();
        for _ in 0..5 {
            let mut cap = CapacityProfile::zeros(&inst);
            for v in cap.cap.data.iter_mut() {
                *v = rng.gen_range(0.0..30.0f64).floor();
            }
            let mut zeta = Matrix::zeros(q, horizon);
            for v in zeta.data.iter_mut() {
                *v = if rng.gen_bool(0.3) { 1.0 } else { 0.0 };
            }
            let primal = evaluate_recourse(&cap, &zeta, &inst);
            let (dual, _) = solve_idf(&cap, &zeta, &inst, &cfg);
            assert!(
                (primal - dual).abs() <= 1e-6 * (1.0 + primal),
                "{primal} vs {dual}"
            );
        }
    }

    #[test]
    fn worst_case_matches_hand_example_and_enumeration() {
        let (inst, cap) = one_segment_example();
        let wc = solve_worst_case(&cap, &inst, &WorstCaseConfig::default(), 0);
        assert!((wc.value - 11.0).abs() < 1e-9, "value {}", wc.value);
        assert_eq!(wc.scenario.zeta.get(0, 0), 1.0);
        let all = enumerate_scenarios(&inst, 10_000).unwrap();
        let brute = all
            .iter()
            .map(|z| evaluate_recourse(&cap, z, &inst))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((wc.value - brute).abs() < 1e-9);
    }

    #[test]
    fn worst_case_agrees_with_enumeration_on_random_profiles() {
        for seed in [81u64, 82, 83] {
            let inst = synth::generate(&SynthParams::tiny(seed));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cap = CapacityProfile::zeros(&inst);
            for v in cap.cap.data.iter_mut() {
                *v = rng.gen_range(0.0..25.0f64).floor();
            }
            let wc = solve_worst_case(&cap, &inst, &WorstCaseConfig::default(), 0);
            let all = enumerate_scenarios(&inst, 100_000).unwrap();
            let brute = all
                .iter()
                .map(|z| evaluate_recourse(&cap, z, &inst))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(
                (wc.value - brute).abs() <= 1e-6 * (1.0 + brute),
                "seed {seed}: {} vs {brute}",
                wc.value
            );
            assert!(wc.scenario.is_admissible(&inst));
        }
    }

    #[test]
    fn zero_budgets_pin_the_nominal_scenario() {
        let mut inst = synth::generate(&SynthParams::tiny(84));
        for b in inst.demand.budget_time.iter_mut() {
            *b = 0;
        }
        let cap = CapacityProfile::zeros(&inst);
        let wc = solve_worst_case(&cap, &inst, &WorstCaseConfig::default(), 0);
        assert!(wc.scenario.zeta.data.iter().all(|&z| z == 0.0));
        let nominal = evaluate_recourse(
            &cap,
            &Matrix::zeros(inst.segment_count(), inst.discretization.horizon),
            &inst,
        );
        assert!((wc.value - nominal).abs() < 1e-9);
    }

    #[test]
    fn max_budgets_reach_the_full_deviation() {
        let mut inst = synth::generate(&SynthParams::tiny(85));
        let q = inst.segment_count();
        let horizon = inst.discretization.horizon;
        for b in inst.demand.budget_time.iter_mut() {
            *b = horizon as u32;
        }
        for b in inst.demand.budget_space.iter_mut() {
            *b = q as u32;
        }
        let cap = CapacityProfile::zeros(&inst);
        let wc = solve_worst_case(&cap, &inst, &WorstCaseConfig::default(), 0);
        let ones = Matrix::filled(q, horizon, 1.0);
        let full = evaluate_recourse(&cap, &ones, &inst);
        assert!((wc.value - full).abs() <= 1e-6 * (1.0 + full));
    }

    #[test]
    fn capacity_monotonicity() {
        let inst = synth::generate(&SynthParams::tiny(86));
        let mut lo = CapacityProfile::zeros(&inst);
        for v in lo.cap.data.iter_mut() {
            *v = 5.0;
        }
        let mut hi = lo.clone();
        hi.cap.data[3] += 10.0;
        let cfg = WorstCaseConfig::default();
        let w_lo = solve_worst_case(&lo, &inst, &cfg, 0);
        let w_hi = solve_worst_case(&hi, &inst, &cfg, 0);
        assert!(w_hi.value <= w_lo.value + 1e-9);
    }

    #[test]
    fn oa_without_deviation_converges_in_one_iteration() {
        let mut inst = synth::generate(&SynthParams::tiny(87));
        inst.demand.deviation =
            Matrix::zeros(inst.segment_count(), inst.discretization.horizon);
        let mut cap = CapacityProfile::zeros(&inst);
        for v in cap.cap.data.iter_mut() {
            *v = 8.0;
        }
        let oa = outer_approximation(&cap, &inst, &WorstCaseConfig::default());
        assert!(oa.converged);
        assert_eq!(oa.iterations, 1);
        let nominal = evaluate_recourse(
            &cap,
            &Matrix::zeros(inst.segment_count(), inst.discretization.horizon),
            &inst,
        );
        assert!((oa.lb - nominal).abs() <= 1e-6 * (1.0 + nominal));
        assert!((oa.ub - nominal).abs() <= 1e-4 * (1.0 + nominal));
    }

    #[test]
    fn oa_brackets_the_exact_optimum() {
        for seed in [91u64, 92] {
            let inst = synth::generate(&SynthParams::tiny(seed));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cap = CapacityProfile::zeros(&inst);
            for v in cap.cap.data.iter_mut() {
                *v = rng.gen_range(0.0..20.0f64).floor();
            }
            let cfg = WorstCaseConfig::default();
            let exact = solve_worst_case(&cap, &inst, &cfg, 0).value;
            let oa = outer_approximation(&cap, &inst, &cfg);
            assert!(oa.converged, "seed {seed} did not converge");
            let tol = 1e-6 * (1.0 + exact.abs());
            assert!(oa.lb <= exact + tol, "lb {} vs {exact}", oa.lb);
            assert!(oa.ub >= exact - tol, "ub {} vs {exact}", oa.ub);
            let eps = cfg.oa_eps_rel * (1.0 + oa.ub.abs());
            assert!(
                (oa.incumbent_value - exact).abs() <= eps,
                "seed {seed}: incumbent {} vs exact {exact}",
                oa.incumbent_value
            );
        }
    }

    #[test]
    fn scenario_enumeration_respects_budgets() {
        let inst = synth::generate(&SynthParams::tiny(95));
        let all = enumerate_scenarios(&inst, 100_000).unwrap();
        assert!(!all.is_empty());
        assert!(all.iter().any(|z| z.data.iter().all(|&v| v == 0.0)));
        for z in &all {
            let sc = Scenario {
                zeta: z.clone(),
                found_at: 0,
                value: 0.0,
            };
            assert!(sc.is_admissible(&inst));
        }
    }
}
