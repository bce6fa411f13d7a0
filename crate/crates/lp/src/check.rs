//! Slow reference routines for cross-checking the production solvers.
//!
//! Nothing here shares code with the revised simplex or branch-and-bound:
//! the LP check is a dense two-phase tableau method over an explicit
//! standard-form expansion, and the MIP check enumerates integer
//! assignments outright. Intended for tests and small models only.

use crate::model::{LpModel, MipModel, Rel, Sense};

#[derive(Debug, Clone, PartialEq)]
pub enum CheckResult {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

/// Solve an LP with a dense full-tableau simplex (Bland's rule throughout).
///
/// Standard-form expansion: shifted/split variables so everything is
/// nonnegative, slack/surplus columns per row, then two phases with
/// artificial variables.
pub fn tableau_lp(model: &LpModel) -> CheckResult {
    model.validate().expect("malformed LP model");
    let n = model.num_vars();
    let maximize = model.sense == Sense::Maximize;

    // column map: each original var becomes either (shifted nonneg), (negated
    // shifted nonneg) or a pair (x+ - x-) for free vars
    struct ColMap {
        plus: usize,
        minus: Option<usize>,
        shift: f64,
        negated: bool,
    }
    let mut cols: Vec<ColMap> = Vec::with_capacity(n);
    let mut ncols = 0usize;
    // extra rows for two-sided bounds
    let mut extra_rows: Vec<(usize, f64)> = Vec::new(); // (var, width)
    for (j, v) in model.vars.iter().enumerate() {
        if v.lower.is_finite() {
            cols.push(ColMap {
                plus: ncols,
                minus: None,
                shift: v.lower,
                negated: false,
            });
            ncols += 1;
            if v.upper.is_finite() && v.upper > v.lower {
                extra_rows.push((j, v.upper - v.lower));
            } else if v.upper == v.lower {
                extra_rows.push((j, 0.0));
            }
        } else if v.upper.is_finite() {
            // x = upper - x', x' >= 0
            cols.push(ColMap {
                plus: ncols,
                minus: None,
                shift: v.upper,
                negated: true,
            });
            ncols += 1;
        } else {
            cols.push(ColMap {
                plus: ncols,
                minus: Some(ncols + 1),
                shift: 0.0,
                negated: false,
            });
            ncols += 2;
        }
    }

    // assemble rows: original rows then bound rows, all as equalities with
    // slack/surplus columns appended
    let mut rows: Vec<(Vec<f64>, Rel, f64)> = Vec::new();
    for r in &model.rows {
        let mut dense = vec![0.0; ncols];
        let mut rhs = r.rhs;
        for &(j, a) in &r.coeffs {
            let cm = &cols[j];
            let coef = if cm.negated { -a } else { a };
            dense[cm.plus] += coef;
            if let Some(mi) = cm.minus {
                dense[mi] -= a;
            }
            rhs -= a * cm.shift;
        }
        rows.push((dense, r.rel, rhs));
    }
    for &(j, width) in &extra_rows {
        let cm = &cols[j];
        let mut dense = vec![0.0; ncols];
        dense[cm.plus] = 1.0;
        rows.push((dense, Rel::Le, width));
    }

    let m = rows.len();
    let mut slack_count = 0;
    for (_, rel, _) in &rows {
        if *rel != Rel::Eq {
            slack_count += 1;
        }
    }
    let total = ncols + slack_count + m; // + artificials
    let art0 = ncols + slack_count;

    // tableau: m rows x (total + 1), last column rhs
    let mut t = vec![vec![0.0; total + 1]; m];
    let mut si = 0;
    let mut basis = vec![0usize; m];
    for (i, (dense0, rel0, rhs0)) in rows.iter().enumerate() {
        let (mut dense, mut rel, mut rhs) = (dense0.clone(), *rel0, *rhs0);
        if rhs < 0.0 {
            for v in dense.iter_mut() {
                *v = -*v;
            }
            rhs = -rhs;
            rel = flip_rel(rel);
        }
        for (jj, v) in dense.iter().enumerate() {
            t[i][jj] = *v;
        }
        match rel {
            Rel::Le => {
                t[i][ncols + si] = 1.0;
                si += 1;
            }
            Rel::Ge => {
                t[i][ncols + si] = -1.0;
                si += 1;
            }
            Rel::Eq => {}
        }
        t[i][art0 + i] = 1.0;
        t[i][total] = rhs;
        basis[i] = art0 + i;
    }

    // objective in expanded space (minimization)
    let mut cost = vec![0.0; total];
    for (j, v) in model.vars.iter().enumerate() {
        let c = if maximize { -v.obj } else { v.obj };
        let cm = &cols[j];
        cost[cm.plus] += if cm.negated { -c } else { c };
        if let Some(mi) = cm.minus {
            cost[mi] -= c;
        }
    }
    let const_term: f64 = model
        .vars
        .iter()
        .enumerate()
        .map(|(j, v)| {
            let c = if maximize { -v.obj } else { v.obj };
            c * cols[j].shift
        })
        .sum();

    // phase 1: minimize sum of artificials
    let phase1_cost: Vec<f64> = (0..total).map(|j| if j >= art0 { 1.0 } else { 0.0 }).collect();
    if !run_tableau(&mut t, &mut basis, &phase1_cost, total) {
        unreachable!("phase 1 of the tableau method is always bounded");
    }
    let w: f64 = basis
        .iter()
        .enumerate()
        .map(|(i, &b)| if b >= art0 { t[i][total] } else { 0.0 })
        .sum();
    if w > 1e-8 {
        return CheckResult::Infeasible;
    }
    // drive remaining artificials out where possible
    for i in 0..m {
        if basis[i] >= art0 {
            if let Some(j) = (0..art0).find(|&j| t[i][j].abs() > 1e-9) {
                pivot(&mut t, &mut basis, i, j, total);
            }
        }
    }
    // forbid artificials from re-entering
    for row in t.iter_mut() {
        for j in art0..total {
            row[j] = 0.0;
        }
    }

    if !run_tableau(&mut t, &mut basis, &cost, total) {
        return CheckResult::Unbounded;
    }
    let obj_min: f64 = basis
        .iter()
        .enumerate()
        .map(|(i, &b)| cost[b] * t[i][total])
        .sum::<f64>()
        + const_term;
    CheckResult::Optimal(if maximize { -obj_min } else { obj_min })
}

fn flip_rel(rel: Rel) -> Rel {
    match rel {
        Rel::Le => Rel::Ge,
        Rel::Ge => Rel::Le,
        Rel::Eq => Rel::Eq,
    }
}

/// Bland's-rule tableau iteration; returns false on unboundedness.
fn run_tableau(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], total: usize) -> bool {
    let m = t.len();
    loop {
        // reduced costs via current basis
        let mut entering = None;
        for j in 0..total {
            if basis.contains(&j) {
                continue;
            }
            let mut d = cost[j];
            for i in 0..m {
                d -= cost[basis[i]] * t[i][j];
            }
            if d < -1e-9 {
                entering = Some(j);
                break; // Bland: lowest index
            }
        }
        let Some(j) = entering else {
            return true;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][j] > 1e-9 {
                let ratio = t[i][total] / t[i][j];
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - 1e-12
                            || (ratio <= lr + 1e-12 && basis[i] < basis[li])
                        {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((r, _)) = leave else {
            return false;
        };
        pivot(t, basis, r, j, total);
    }
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, j: usize, total: usize) {
    let p = t[r][j];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    for i in 0..t.len() {
        if i != r {
            let f = t[i][j];
            if f != 0.0 {
                for k in 0..=total {
                    t[i][k] -= f * t[r][k];
                }
            }
        }
    }
    basis[r] = j;
}

/// Exhaustively enumerate all integer assignments of a MIP and solve the
/// continuous remainder with the tableau method. Errors if the grid exceeds
/// `cap` points.
pub fn enumerate_mip(model: &MipModel, cap: u64) -> Result<CheckResult, String> {
    model.validate().expect("malformed MIP model");
    let ints: Vec<usize> = model
        .integer
        .iter()
        .enumerate()
        .filter(|&(_, &f)| f)
        .map(|(j, _)| j)
        .collect();
    let mut sizes = Vec::with_capacity(ints.len());
    let mut count: u64 = 1;
    for &j in &ints {
        let v = &model.lp.vars[j];
        let lo = v.lower.ceil() as i64;
        let hi = v.upper.floor() as i64;
        if hi < lo {
            return Ok(CheckResult::Infeasible);
        }
        let w = (hi - lo + 1) as u64;
        count = count.saturating_mul(w);
        if count > cap {
            return Err(format!("enumeration grid exceeds cap {cap}"));
        }
        sizes.push((lo, w));
    }

    let maximize = model.lp.sense == Sense::Maximize;
    let mut best: Option<f64> = None;
    let mut any_feasible = false;
    let mut idx = vec![0u64; ints.len()];
    loop {
        let mut lp = model.lp.clone();
        for (k, &j) in ints.iter().enumerate() {
            let val = (sizes[k].0 + idx[k] as i64) as f64;
            lp.vars[j].lower = val;
            lp.vars[j].upper = val;
        }
        match tableau_lp(&lp) {
            CheckResult::Optimal(v) => {
                any_feasible = true;
                best = Some(match best {
                    None => v,
                    Some(b) => {
                        if maximize {
                            b.max(v)
                        } else {
                            b.min(v)
                        }
                    }
                });
            }
            CheckResult::Unbounded => return Ok(CheckResult::Unbounded),
            CheckResult::Infeasible => {}
        }
        // advance the mixed-radix counter
        let mut k = 0;
        loop {
            if k == ints.len() {
                return Ok(if any_feasible {
                    CheckResult::Optimal(best.unwrap())
                } else {
                    CheckResult::Infeasible
                });
            }
            idx[k] += 1;
            if idx[k] < sizes[k].1 {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Verify the KKT conditions of a claimed optimal solution: primal
/// feasibility, dual sign conventions, complementary slackness on rows, and
/// vanishing reduced costs for interior variables.
pub fn verify_kkt(model: &LpModel, x: &[f64], duals: &[f64], tol: f64) -> Result<(), String> {
    let sense_flip = if model.sense == Sense::Maximize { -1.0 } else { 1.0 };
    // primal feasibility
    for (j, v) in model.vars.iter().enumerate() {
        if x[j] < v.lower - tol || x[j] > v.upper + tol {
            return Err(format!("variable {j} out of bounds: {}", x[j]));
        }
    }
    let mut activity = vec![0.0; model.num_rows()];
    for (i, r) in model.rows.iter().enumerate() {
        activity[i] = r.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
        let ok = match r.rel {
            Rel::Le => activity[i] <= r.rhs + tol,
            Rel::Ge => activity[i] >= r.rhs - tol,
            Rel::Eq => (activity[i] - r.rhs).abs() <= tol,
        };
        if !ok {
            return Err(format!(
                "row {i} violated: activity {} vs rhs {}",
                activity[i], r.rhs
            ));
        }
        // dual sign: minimization has <= rows nonpositive, >= rows nonnegative
        let y = duals[i] * sense_flip;
        match r.rel {
            Rel::Le if y > tol => return Err(format!("row {i}: dual sign ({y}) for <=")),
            Rel::Ge if y < -tol => return Err(format!("row {i}: dual sign ({y}) for >=")),
            _ => {}
        }
        // complementary slackness
        let slack = r.rhs - activity[i];
        if slack.abs() > tol && y.abs() > tol {
            return Err(format!(
                "row {i}: complementary slackness violated (slack {slack}, dual {y})"
            ));
        }
    }
    // reduced costs: c_j - A_j' y, in minimization orientation
    let mut red = vec![0.0; model.num_vars()];
    for (j, v) in model.vars.iter().enumerate() {
        red[j] = v.obj * sense_flip;
    }
    for (i, r) in model.rows.iter().enumerate() {
        let y = duals[i] * sense_flip;
        if y != 0.0 {
            for &(j, a) in &r.coeffs {
                red[j] -= a * y;
            }
        }
    }
    for (j, v) in model.vars.iter().enumerate() {
        let at_lower = (x[j] - v.lower).abs() <= tol;
        let at_upper = (x[j] - v.upper).abs() <= tol;
        let d = red[j];
        if at_lower && !at_upper && d < -tol {
            return Err(format!("variable {j}: reduced cost {d} negative at lower bound"));
        }
        if at_upper && !at_lower && d > tol {
            return Err(format!("variable {j}: reduced cost {d} positive at upper bound"));
        }
        if !at_lower && !at_upper && d.abs() > tol {
            return Err(format!("variable {j}: reduced cost {d} nonzero in the interior"));
        }
    }
    Ok(())
}
