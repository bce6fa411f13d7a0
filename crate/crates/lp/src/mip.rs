//! Branch-and-bound on top of the LP solver.
//!
//! Best-bound node selection, branching on the most fractional variable with
//! ties broken by lowest index. Child LPs warm-start from the root basis.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::model::{
    Basis, LpModel, LpStatus, MipModel, MipSolution, MipStatus, Sense, SolverConfig,
};
use crate::simplex::solve_lp_warm;

struct Node {
    /// Bound overrides accumulated along the branch: (var, lower, upper).
    overrides: Vec<(usize, f64, f64)>,
    /// Parent LP value in minimization sense.
    bound_min: f64,
    seq: usize,
}

struct Key(f64, usize);

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.0 == other.0 && self.1 == other.1
    }
}
impl Eq for Key {}
impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Key {
    // max-heap: invert so the smallest bound pops first, FIFO on ties
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .partial_cmp(&self.0)
            .unwrap_or(Ordering::Equal)
            .then(other.1.cmp(&self.1))
    }
}

/// Solve a MIP by branch-and-bound.
pub fn solve_mip(model: &MipModel, cfg: &SolverConfig) -> MipSolution {
    solve_mip_warm(model, cfg, None)
}

/// Solve a MIP, optionally seeding the incumbent with a known
/// integer-feasible point.
pub fn solve_mip_warm(
    model: &MipModel,
    cfg: &SolverConfig,
    start: Option<&[f64]>,
) -> MipSolution {
    model.validate().expect("malformed MIP model");
    let started = Instant::now();
    let minimize = model.lp.sense == Sense::Minimize;
    let to_min = |v: f64| if minimize { v } else { -v };

    let mut incumbent: Option<Vec<f64>> = None;
    let mut incumbent_min = f64::INFINITY;
    if let Some(x0) = start {
        if x0.len() == model.lp.num_vars()
            && point_is_integral(model, x0, cfg.int_tol)
            && point_in_bounds(&model.lp, x0, cfg.tol_feas)
        {
            incumbent_min = to_min(model.lp.objective_value(x0));
            incumbent = Some(x0.to_vec());
        }
    }

    let fathomed = |node_min: f64, inc_min: f64| -> bool {
        inc_min.is_finite() && node_min >= inc_min - cfg.mip_gap * inc_min.abs().max(1.0)
    };

    let root = solve_lp_warm(&model.lp, cfg, None);
    match root.status {
        LpStatus::Infeasible => {
            return done(MipStatus::Infeasible, None, f64::INFINITY, f64::INFINITY, 1, minimize)
        }
        LpStatus::Unbounded => {
            return done(
                MipStatus::Unbounded,
                None,
                f64::NEG_INFINITY,
                f64::NEG_INFINITY,
                1,
                minimize,
            )
        }
        LpStatus::IterLimit | LpStatus::TimeLimit => {
            let status = if incumbent.is_some() {
                MipStatus::Feasible
            } else {
                MipStatus::Unknown
            };
            return done(status, incumbent, incumbent_min, f64::NEG_INFINITY, 1, minimize);
        }
        LpStatus::Optimal => {}
    }
    let root_basis: Basis = root.basis.clone();
    let root_min = to_min(root.objective);

    let mut heap: BinaryHeap<(Key, usize)> = BinaryHeap::new();
    let mut store: Vec<Node> = Vec::new();
    let mut seq = 0usize;
    let mut explored = 1usize;
    let mut hit_limit = false;

    // work LP mutated in place per node
    let mut lp: LpModel = model.lp.clone();

    match frac_branch_var(model, &root.x, cfg.int_tol) {
        None => {
            return done(
                MipStatus::Optimal,
                Some(root.x),
                root_min,
                root_min,
                1,
                minimize,
            )
        }
        Some(j) => {
            if fathomed(root_min, incumbent_min) {
                return done(MipStatus::Optimal, incumbent, incumbent_min, incumbent_min, 1, minimize);
            }
            branch(
                &model.lp,
                &[],
                j,
                root.x[j],
                root_min,
                &mut seq,
                &mut heap,
                &mut store,
            );
        }
    }

    // until the first incumbent exists, dive on the most recent child so
    // fathoming can start early; afterwards pick nodes by best bound
    let mut consumed: Vec<bool> = vec![false; store.len()];
    let mut dive_stack: Vec<usize> = (0..store.len()).rev().collect();
    loop {
        let next = if incumbent.is_none() {
            let mut picked = None;
            while let Some(cand) = dive_stack.pop() {
                if !consumed[cand] {
                    picked = Some(cand);
                    break;
                }
            }
            picked.or_else(|| pop_heap(&mut heap, &consumed))
        } else {
            pop_heap(&mut heap, &consumed)
        };
        let Some(idx) = next else {
            break;
        };
        consumed[idx] = true;
        let bound_min = store[idx].bound_min;
        if fathomed(bound_min, incumbent_min) {
            // best-bound order makes everything else at least as bad once an
            // incumbent exists; during the dive phase just skip this node
            if incumbent.is_some() {
                heap.clear();
                dive_stack.clear();
                break;
            }
            continue;
        }
        if explored >= cfg.max_nodes {
            hit_limit = true;
            break;
        }
        if let Some(limit) = cfg.time_limit {
            if started.elapsed() > limit {
                hit_limit = true;
                break;
            }
        }
        explored += 1;

        let node = &store[idx];
        if node
            .overrides
            .iter()
            .any(|&(_, lo, up)| lo > up + cfg.int_tol)
        {
            continue;
        }
        for &(j, lo, up) in &node.overrides {
            lp.vars[j].lower = lo;
            lp.vars[j].upper = up;
        }
        let sol = solve_lp_warm(&lp, cfg, Some(&root_basis));
        for &(j, _, _) in &node.overrides {
            lp.vars[j].lower = model.lp.vars[j].lower;
            lp.vars[j].upper = model.lp.vars[j].upper;
        }

        match sol.status {
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => continue,
            LpStatus::IterLimit | LpStatus::TimeLimit => {
                hit_limit = true;
                continue;
            }
            LpStatus::Optimal => {}
        }
        let val_min = to_min(sol.objective);
        if fathomed(val_min, incumbent_min) {
            continue;
        }
        match frac_branch_var(model, &sol.x, cfg.int_tol) {
            None => {
                if val_min < incumbent_min {
                    incumbent_min = val_min;
                    incumbent = Some(sol.x);
                }
            }
            Some(j) => {
                let overrides = store[idx].overrides.clone();
                let first_new = store.len();
                branch(
                    &model.lp,
                    &overrides,
                    j,
                    sol.x[j],
                    val_min,
                    &mut seq,
                    &mut heap,
                    &mut store,
                );
                consumed.resize(store.len(), false);
                // dive toward the child nearer the fractional value first
                for child in (first_new..store.len()).rev() {
                    dive_stack.push(child);
                }
            }
        }
    }

    let open_min = store
        .iter()
        .enumerate()
        .filter(|&(i, _)| !consumed[i])
        .map(|(_, n)| n.bound_min)
        .fold(f64::INFINITY, f64::min);
    let exhausted = open_min.is_infinite() && !hit_limit;
    let bound_min = if exhausted {
        if incumbent.is_some() {
            incumbent_min
        } else {
            f64::INFINITY
        }
    } else {
        open_min.min(incumbent_min).max(root_min)
    };
    let status = match (&incumbent, exhausted) {
        (Some(_), true) => MipStatus::Optimal,
        (Some(_), false) => {
            if fathomed(bound_min, incumbent_min) {
                MipStatus::Optimal
            } else {
                MipStatus::Feasible
            }
        }
        (None, true) => MipStatus::Infeasible,
        (None, false) => MipStatus::Unknown,
    };
    done(status, incumbent, incumbent_min, bound_min, explored, minimize)
}

fn pop_heap(heap: &mut BinaryHeap<(Key, usize)>, consumed: &[bool]) -> Option<usize> {
    while let Some((_, cand)) = heap.pop() {
        if !consumed[cand] {
            return Some(cand);
        }
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn branch(
    base: &LpModel,
    overrides: &[(usize, f64, f64)],
    j: usize,
    xj: f64,
    bound_min: f64,
    seq: &mut usize,
    heap: &mut BinaryHeap<(Key, usize)>,
    store: &mut Vec<Node>,
) {
    let (lo, up) = overrides
        .iter()
        .rev()
        .find(|&&(v, _, _)| v == j)
        .map(|&(_, l, u)| (l, u))
        .unwrap_or((base.vars[j].lower, base.vars[j].upper));
    for (nlo, nup) in [(lo, xj.floor()), (xj.ceil(), up)] {
        let mut ov = overrides.to_vec();
        ov.push((j, nlo, nup));
        let node = Node {
            overrides: ov,
            bound_min,
            seq: *seq,
        };
        *seq += 1;
        let key = Key(node.bound_min, node.seq);
        store.push(node);
        heap.push((key, store.len() - 1));
    }
}

fn frac_branch_var(model: &MipModel, x: &[f64], int_tol: f64) -> Option<usize> {
    let mut pick: Option<(usize, f64)> = None;
    for (j, &is_int) in model.integer.iter().enumerate() {
        if !is_int {
            continue;
        }
        let frac = x[j] - x[j].floor();
        if frac > int_tol && frac < 1.0 - int_tol {
            let dist = (frac - 0.5).abs();
            match pick {
                None => pick = Some((j, dist)),
                Some((_, d)) if dist < d - 1e-12 => pick = Some((j, dist)),
                _ => {}
            }
        }
    }
    pick.map(|(j, _)| j)
}

fn point_is_integral(model: &MipModel, x: &[f64], tol: f64) -> bool {
    model
        .integer
        .iter()
        .enumerate()
        .all(|(j, &f)| !f || (x[j] - x[j].round()).abs() <= tol)
}

fn point_in_bounds(lp: &LpModel, x: &[f64], tol: f64) -> bool {
    lp.vars
        .iter()
        .zip(x)
        .all(|(v, &xi)| xi >= v.lower - tol && xi <= v.upper + tol)
}

fn done(
    status: MipStatus,
    incumbent: Option<Vec<f64>>,
    incumbent_min: f64,
    bound_min: f64,
    nodes: usize,
    minimize: bool,
) -> MipSolution {
    let from_min = |v: f64| if minimize { v } else { -v };
    MipSolution {
        status,
        x: incumbent.unwrap_or_default(),
        objective: from_min(incumbent_min),
        bound: from_min(bound_min),
        nodes,
    }
}
