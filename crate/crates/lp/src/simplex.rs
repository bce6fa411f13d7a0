//! Bounded-variable primal revised simplex.
//!
//! Two phases: a composite phase 1 that drives the sum of bound violations to
//! zero, then a standard phase 2. Dantzig pricing with a Bland's-rule
//! fallback after a run of degenerate pivots keeps the method finite in
//! practice while staying deterministic.

use std::time::Instant;

use crate::lu::{Factorization, LuError, SpCol};
use crate::model::{
    Basis, LpModel, LpSolution, LpStatus, Rel, Sense, SolverConfig, VarStatus,
};

const PIVOT_TOL: f64 = 1e-9;
const ZERO_STEP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum VState {
    Basic(usize),
    Lower,
    Upper,
    /// Nonbasic free variable held at zero.
    Free,
}

struct Work {
    m: usize,
    n_total: usize,
    /// Column-wise matrix [A | I].
    cols: Vec<SpCol>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    rhs: Vec<f64>,
    state: Vec<VState>,
    basis: Vec<usize>,
    x: Vec<f64>,
    fact: Factorization,
    pivots_since_refactor: usize,
    iterations: usize,
    // scratch buffers
    alpha: Vec<f64>,
    cb: Vec<f64>,
    y: Vec<f64>,
}

enum StepOutcome {
    Unbounded,
    Progress,
}

impl Work {
    fn column(&self, j: usize) -> &SpCol {
        &self.cols[j]
    }

    fn slack_of_row(&self, i: usize) -> usize {
        self.n_total - self.m + i
    }

    /// Factorize the current basis. On singularity, swap the slacks of the
    /// unpivoted rows in for the unusable columns; fall back to the all-slack
    /// basis if the gentle repair collides.
    fn factorize_with_repair(&mut self) {
        for attempt in 0..3 {
            let cols: Vec<SpCol> = self.basis.iter().map(|&j| self.cols[j].clone()).collect();
            match Factorization::new(self.m, &cols) {
                Ok(f) => {
                    self.fact = f;
                    self.pivots_since_refactor = 0;
                    return;
                }
                Err(LuError::Singular { cols: failed, rows }) => {
                    let collision = rows.iter().any(|&r| {
                        let s = self.slack_of_row(r);
                        matches!(self.state[s], VState::Basic(p) if !failed.contains(&p))
                    });
                    if collision || attempt == 1 {
                        self.reset_to_slack_basis();
                        continue;
                    }
                    for &pos in &failed {
                        let old = self.basis[pos];
                        self.demote(old);
                    }
                    for (&pos, &row) in failed.iter().zip(rows.iter()) {
                        let slack = self.slack_of_row(row);
                        self.basis[pos] = slack;
                        self.state[slack] = VState::Basic(pos);
                    }
                }
            }
        }
        panic!("basis factorization failed even from the slack basis");
    }

    fn demote(&mut self, j: usize) {
        self.state[j] = nearest_bound_state(self.lower[j], self.upper[j]);
        self.x[j] = nearest_bound_value(self.lower[j], self.upper[j]);
    }

    fn reset_to_slack_basis(&mut self) {
        for j in 0..self.n_total {
            if matches!(self.state[j], VState::Basic(_)) {
                self.demote(j);
            }
        }
        self.basis = (0..self.m).map(|i| self.slack_of_row(i)).collect();
        for pos in 0..self.m {
            let s = self.basis[pos];
            self.state[s] = VState::Basic(pos);
        }
    }

    /// Recompute basic variable values from nonbasic values.
    fn recompute_basics(&mut self) {
        let mut rhs: Vec<f64> = self.rhs.clone();
        for j in 0..self.n_total {
            match self.state[j] {
                VState::Basic(_) => {}
                _ => {
                    let xj = self.x[j];
                    if xj != 0.0 {
                        for &(i, a) in &self.cols[j] {
                            rhs[i] -= a * xj;
                        }
                    }
                }
            }
        }
        let sp: SpCol = rhs
            .iter()
            .enumerate()
            .filter(|&(_, &v)| v != 0.0)
            .map(|(i, &v)| (i, v))
            .collect();
        self.fact.ftran(&sp, &mut self.alpha);
        for pos in 0..self.m {
            let j = self.basis[pos];
            self.x[j] = self.alpha[pos];
        }
    }

    fn infeasibility(&self) -> f64 {
        let mut total = 0.0;
        for &j in &self.basis {
            let xj = self.x[j];
            if xj < self.lower[j] {
                total += self.lower[j] - xj;
            } else if xj > self.upper[j] {
                total += xj - self.upper[j];
            }
        }
        total
    }

    /// Duals for the cost vector currently in `cb` (indexed by basis position).
    fn compute_duals(&mut self) {
        let mut c = self.cb.clone();
        self.fact.btran(&mut c, &mut self.y);
    }

    fn reduced_cost(&self, j: usize, cost_j: f64) -> f64 {
        let mut d = cost_j;
        for &(i, a) in &self.cols[j] {
            d -= a * self.y[i];
        }
        d
    }

    /// Ratio test plus pivot application, shared by both phases.
    ///
    /// `entering` moves in direction `dir`; in phase 1, basic variables that
    /// are currently outside a bound block when they reach it.
    fn pivot_step(
        &mut self,
        entering: usize,
        dir: f64,
        phase1: bool,
        bland: bool,
        tol_feas: f64,
    ) -> StepOutcome {
        let col = self.cols[entering].clone();
        self.fact.ftran(&col, &mut self.alpha);

        let range = self.upper[entering] - self.lower[entering];
        let mut t_best = if range.is_finite() { range } else { f64::INFINITY };
        let mut blocker: Option<usize> = None; // basis position

        for pos in 0..self.m {
            let a = self.alpha[pos] * dir;
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let j = self.basis[pos];
            let xj = self.x[j];
            let (lo, up) = (self.lower[j], self.upper[j]);
            // target bound this basic variable runs into
            let t = if a > 0.0 {
                // x_j decreases
                let target = if phase1 && xj > up + tol_feas {
                    up
                } else if phase1 && xj < lo - tol_feas {
                    // already below its lower bound and still decreasing:
                    // never blocks in the composite phase
                    f64::NEG_INFINITY
                } else {
                    lo
                };
                if target.is_finite() {
                    (xj - target) / a
                } else {
                    f64::INFINITY
                }
            } else {
                // x_j increases
                let target = if phase1 && xj < lo - tol_feas {
                    lo
                } else if phase1 && xj > up + tol_feas {
                    f64::INFINITY
                } else {
                    up
                };
                if target.is_finite() {
                    (xj - target) / a
                } else {
                    f64::INFINITY
                }
            };
            if !t.is_finite() {
                continue;
            }
            let t = t.max(0.0);
            let replace = match blocker {
                None => t <= t_best + ZERO_STEP,
                Some(cur) => {
                    if t < t_best - ZERO_STEP {
                        true
                    } else if t <= t_best + ZERO_STEP {
                        if bland {
                            self.basis[pos] < self.basis[cur]
                        } else {
                            self.alpha[pos].abs() > self.alpha[cur].abs()
                        }
                    } else {
                        false
                    }
                }
            };
            if replace {
                t_best = t_best.min(t);
                blocker = Some(pos);
            }
        }

        if !t_best.is_finite() {
            return StepOutcome::Unbounded;
        }

        let t = t_best.max(0.0);
        // move the entering variable and update basics
        self.x[entering] += dir * t;
        if t != 0.0 {
            for pos in 0..self.m {
                let a = self.alpha[pos];
                if a != 0.0 {
                    let j = self.basis[pos];
                    self.x[j] -= dir * t * a;
                }
            }
        }

        match blocker {
            None => {
                // bound flip
                self.state[entering] = if dir > 0.0 { VState::Upper } else { VState::Lower };
                let snap = if dir > 0.0 {
                    self.upper[entering]
                } else {
                    self.lower[entering]
                };
                if snap.is_finite() {
                    self.x[entering] = snap;
                }
                StepOutcome::Progress
            }
            Some(pos) => {
                // the blocker sits at its target bound now; snap to the nearer
                let leaving = self.basis[pos];
                let d_lo = (self.x[leaving] - self.lower[leaving]).abs();
                let d_up = (self.x[leaving] - self.upper[leaving]).abs();
                let state = if d_lo.is_nan() || d_lo > d_up {
                    VState::Upper
                } else {
                    VState::Lower
                };
                let snap = match state {
                    VState::Lower => self.lower[leaving],
                    _ => self.upper[leaving],
                };
                if snap.is_finite() {
                    self.state[leaving] = state;
                    self.x[leaving] = snap;
                } else {
                    self.state[leaving] = VState::Free;
                    self.x[leaving] = 0.0;
                }
                self.basis[pos] = entering;
                self.state[entering] = VState::Basic(pos);
                self.fact.push_eta(pos, &self.alpha);
                self.pivots_since_refactor += 1;
                StepOutcome::Progress
            }
        }
    }
}

fn nearest_bound_state(lo: f64, up: f64) -> VState {
    if lo.is_finite() {
        VState::Lower
    } else if up.is_finite() {
        VState::Upper
    } else {
        VState::Free
    }
}

fn nearest_bound_value(lo: f64, up: f64) -> f64 {
    if lo.is_finite() {
        lo
    } else if up.is_finite() {
        up
    } else {
        0.0
    }
}

/// Solve an LP with the bounded revised simplex.
pub fn solve_lp(model: &LpModel, cfg: &SolverConfig) -> LpSolution {
    solve_lp_warm(model, cfg, None)
}

/// Solve an LP, optionally warm-starting from a basis of a related model
/// (same rows in the same order; variables may have been appended).
pub fn solve_lp_warm(model: &LpModel, cfg: &SolverConfig, warm: Option<&Basis>) -> LpSolution {
    model.validate().expect("malformed LP model");
    let started = Instant::now();
    let m = model.num_rows();
    let n = model.num_vars();
    let n_total = n + m;
    let maximize = model.sense == Sense::Maximize;

    let mut cols: Vec<SpCol> = vec![Vec::new(); n_total];
    for (i, row) in model.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            if a != 0.0 {
                cols[j].push((i, a));
            }
        }
        cols[n + i].push((i, 1.0));
    }
    // merge duplicate coefficients on the same row
    for col in cols.iter_mut().take(n) {
        col.sort_by_key(|&(i, _)| i);
        col.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        col.retain(|&(_, v)| v != 0.0);
    }

    let mut lower = Vec::with_capacity(n_total);
    let mut upper = Vec::with_capacity(n_total);
    let mut cost = vec![0.0; n_total];
    for (j, v) in model.vars.iter().enumerate() {
        lower.push(v.lower);
        upper.push(v.upper);
        cost[j] = if maximize { -v.obj } else { v.obj };
    }
    let mut rhs = Vec::with_capacity(m);
    for row in &model.rows {
        rhs.push(row.rhs);
        match row.rel {
            Rel::Le => {
                lower.push(0.0);
                upper.push(f64::INFINITY);
            }
            Rel::Ge => {
                lower.push(f64::NEG_INFINITY);
                upper.push(0.0);
            }
            Rel::Eq => {
                lower.push(0.0);
                upper.push(0.0);
            }
        }
    }

    // initial statuses
    let mut state = vec![VState::Free; n_total];
    let mut basis: Vec<usize> = Vec::with_capacity(m);
    let mut used_warm = false;
    if let Some(b) = warm {
        if b.statuses.len() <= n_total {
            let mut cand: Vec<usize> = Vec::new();
            for (j, &s) in b.statuses.iter().enumerate() {
                // map old layout (structurals then slacks) onto the new one:
                // warm bases come from models that only appended variables,
                // so slack statuses are the trailing m entries
                let jj = if j < b.statuses.len() - m {
                    j
                } else {
                    n + (j - (b.statuses.len() - m))
                };
                if s == VarStatus::Basic {
                    cand.push(jj);
                }
            }
            if cand.len() == m {
                for (pos, &j) in cand.iter().enumerate() {
                    state[j] = VState::Basic(pos);
                }
                for (j, &s) in b.statuses.iter().enumerate() {
                    let jj = if j < b.statuses.len() - m {
                        j
                    } else {
                        n + (j - (b.statuses.len() - m))
                    };
                    match s {
                        VarStatus::Basic => {}
                        VarStatus::AtLower => state[jj] = VState::Lower,
                        VarStatus::AtUpper => state[jj] = VState::Upper,
                        VarStatus::FreeZero => state[jj] = VState::Free,
                    }
                }
                basis = cand;
                used_warm = true;
            }
        }
    }
    if !used_warm {
        basis = (n..n_total).collect();
        for (pos, &j) in basis.iter().enumerate() {
            state[j] = VState::Basic(pos);
        }
    }
    // normalize nonbasic states against bounds and set values
    let mut x = vec![0.0; n_total];
    for j in 0..n_total {
        match state[j] {
            VState::Basic(_) => {}
            VState::Lower if lower[j].is_finite() => x[j] = lower[j],
            VState::Upper if upper[j].is_finite() => x[j] = upper[j],
            _ => {
                state[j] = match nearest_bound_state(lower[j], upper[j]) {
                    VState::Lower => {
                        x[j] = lower[j];
                        VState::Lower
                    }
                    VState::Upper => {
                        x[j] = upper[j];
                        VState::Upper
                    }
                    _ => VState::Free,
                };
            }
        }
    }

    let fact = Factorization::new(0, &[]).unwrap();
    let mut w = Work {
        m,
        n_total,
        cols,
        lower,
        upper,
        cost,
        rhs,
        state,
        basis,
        x,
        fact,
        pivots_since_refactor: 0,
        iterations: 0,
        alpha: vec![0.0; m],
        cb: vec![0.0; m],
        y: vec![0.0; m],
    };

    if m == 0 {
        return finish_trivial(model, &w, maximize);
    }

    w.factorize_with_repair();
    w.recompute_basics();

    let mut status = run_phases(&mut w, cfg, started);

    // polish: refactorize, recompute, and re-verify optimality once
    if status == LpStatus::Optimal {
        for _ in 0..3 {
            w.factorize_with_repair();
            w.recompute_basics();
            if w.infeasibility() > cfg.tol_feas * 10.0 {
                status = run_phases(&mut w, cfg, started);
                continue;
            }
            break;
        }
    }

    build_solution(model, &mut w, status, maximize, cfg)
}

fn run_phases(w: &mut Work, cfg: &SolverConfig, started: Instant) -> LpStatus {
    // phase 1
    let mut degenerate_run = 0usize;
    loop {
        if w.iterations >= cfg.max_iters {
            return LpStatus::IterLimit;
        }
        if w.iterations % 64 == 0 {
            if let Some(limit) = cfg.time_limit {
                if started.elapsed() > limit {
                    return LpStatus::TimeLimit;
                }
            }
        }
        let inf = w.infeasibility();
        if inf <= cfg.tol_feas {
            break;
        }
        // gradient of the infeasibility sum, by basis position
        for pos in 0..w.m {
            let j = w.basis[pos];
            w.cb[pos] = if w.x[j] < w.lower[j] - cfg.tol_feas {
                -1.0
            } else if w.x[j] > w.upper[j] + cfg.tol_feas {
                1.0
            } else {
                0.0
            };
        }
        w.compute_duals();
        let bland = degenerate_run >= cfg.degeneracy_threshold;
        let mut entering = None;
        let mut best = cfg.tol_opt;
        let mut dir = 1.0;
        for j in 0..w.n_total {
            let (can_up, can_down) = match w.state[j] {
                VState::Basic(_) => (false, false),
                VState::Lower => (w.upper[j] > w.lower[j], false),
                VState::Upper => (false, w.upper[j] > w.lower[j]),
                VState::Free => (true, true),
            };
            if !can_up && !can_down {
                continue;
            }
            let s = {
                let mut acc = 0.0;
                for &(i, a) in w.column(j) {
                    acc += a * w.y[i];
                }
                acc
            };
            // moving x_j by dir*t changes infeasibility at rate -dir*s
            if can_up && s > best {
                entering = Some(j);
                best = s;
                dir = 1.0;
                if bland {
                    break;
                }
            }
            if can_down && -s > best {
                entering = Some(j);
                best = -s;
                dir = -1.0;
                if bland {
                    break;
                }
            }
        }
        let Some(j) = entering else {
            return LpStatus::Infeasible;
        };
        w.iterations += 1;
        let before = inf;
        match w.pivot_step(j, dir, true, bland, cfg.tol_feas) {
            StepOutcome::Unbounded => {
                // cannot happen with a strictly improving direction; treat as stall
                return LpStatus::Infeasible;
            }
            _ => {}
        }
        if w.pivots_since_refactor >= cfg.refactor_every {
            w.factorize_with_repair();
            w.recompute_basics();
        }
        let after = w.infeasibility();
        if before - after <= ZERO_STEP {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
    }

    // phase 2
    let mut degenerate_run = 0usize;
    loop {
        if w.iterations >= cfg.max_iters {
            return LpStatus::IterLimit;
        }
        if w.iterations % 64 == 0 {
            if let Some(limit) = cfg.time_limit {
                if started.elapsed() > limit {
                    return LpStatus::TimeLimit;
                }
            }
        }
        for pos in 0..w.m {
            w.cb[pos] = w.cost[w.basis[pos]];
        }
        w.compute_duals();
        let bland = degenerate_run >= cfg.degeneracy_threshold;
        let mut entering = None;
        let mut best = cfg.tol_opt;
        let mut dir = 1.0;
        for j in 0..w.n_total {
            let (can_up, can_down) = match w.state[j] {
                VState::Basic(_) => (false, false),
                VState::Lower => (w.upper[j] > w.lower[j], false),
                VState::Upper => (false, w.upper[j] > w.lower[j]),
                VState::Free => (true, true),
            };
            if !can_up && !can_down {
                continue;
            }
            let d = w.reduced_cost(j, w.cost[j]);
            if can_up && -d > best {
                entering = Some(j);
                best = -d;
                dir = 1.0;
                if bland {
                    break;
                }
            }
            if can_down && d > best {
                entering = Some(j);
                best = d;
                dir = -1.0;
                if bland {
                    break;
                }
            }
        }
        let Some(j) = entering else {
            return LpStatus::Optimal;
        };
        w.iterations += 1;
        let obj_before = objective_internal(w);
        match w.pivot_step(j, dir, false, bland, cfg.tol_feas) {
            StepOutcome::Unbounded => return LpStatus::Unbounded,
            _ => {}
        }
        if w.pivots_since_refactor >= cfg.refactor_every {
            w.factorize_with_repair();
            w.recompute_basics();
        }
        let obj_after = objective_internal(w);
        if obj_before - obj_after <= ZERO_STEP {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
    }
}

fn objective_internal(w: &Work) -> f64 {
    (0..w.n_total).map(|j| w.cost[j] * w.x[j]).sum()
}

fn finish_trivial(model: &LpModel, w: &Work, maximize: bool) -> LpSolution {
    // no rows: every variable sits at its cheapest bound
    let n = model.num_vars();
    let mut x = vec![0.0; n];
    let mut status = LpStatus::Optimal;
    for j in 0..n {
        let c = w.cost[j];
        x[j] = if c > 0.0 {
            if w.lower[j].is_finite() {
                w.lower[j]
            } else {
                status = LpStatus::Unbounded;
                0.0
            }
        } else if c < 0.0 {
            if w.upper[j].is_finite() {
                w.upper[j]
            } else {
                status = LpStatus::Unbounded;
                0.0
            }
        } else {
            nearest_bound_value(w.lower[j], w.upper[j])
        };
    }
    let mut objective = model.objective_value(&x);
    if status == LpStatus::Unbounded {
        objective = if maximize { f64::INFINITY } else { f64::NEG_INFINITY };
    }
    let statuses = (0..n)
        .map(|j| match w.state[j] {
            VState::Lower => VarStatus::AtLower,
            VState::Upper => VarStatus::AtUpper,
            _ => VarStatus::FreeZero,
        })
        .collect();
    LpSolution {
        status,
        x,
        duals: Vec::new(),
        objective,
        iterations: 0,
        basis: Basis { statuses },
    }
}

fn build_solution(
    model: &LpModel,
    w: &mut Work,
    status: LpStatus,
    maximize: bool,
    _cfg: &SolverConfig,
) -> LpSolution {
    let n = model.num_vars();
    // duals for the true cost vector
    for pos in 0..w.m {
        w.cb[pos] = w.cost[w.basis[pos]];
    }
    w.compute_duals();
    let sign = if maximize { -1.0 } else { 1.0 };
    let duals: Vec<f64> = w.y.iter().map(|&v| sign * v).collect();
    let x: Vec<f64> = w.x[..n].to_vec();
    let objective = match status {
        LpStatus::Unbounded => {
            if maximize {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            }
        }
        _ => model.objective_value(&x),
    };
    let statuses = (0..w.n_total)
        .map(|j| match w.state[j] {
            VState::Basic(_) => VarStatus::Basic,
            VState::Lower => VarStatus::AtLower,
            VState::Upper => VarStatus::AtUpper,
            VState::Free => VarStatus::FreeZero,
        })
        .collect();
    LpSolution {
        status,
        x,
        duals,
        objective,
        iterations: w.iterations,
        basis: Basis { statuses },
    }
}
