//! Randomized cross-checks of the revised simplex and branch-and-bound
//! against the independent dense-tableau / enumeration references.

use desklp::check::{enumerate_mip, tableau_lp, verify_kkt, CheckResult};
use desklp::{solve_lp, solve_mip, LpModel, LpStatus, MipModel, Rel, Sense, SolverConfig, INF};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn random_lp(rng: &mut ChaCha8Rng, max_vars: usize, max_rows: usize) -> LpModel {
    let n = rng.gen_range(1..=max_vars);
    let m = rng.gen_range(1..=max_rows);
    let sense = if rng.gen_bool(0.5) {
        Sense::Minimize
    } else {
        Sense::Maximize
    };
    let mut model = LpModel::new(sense);
    for _ in 0..n {
        let kind = rng.gen_range(0..5);
        let (lo, up) = match kind {
            0 => (0.0, INF),
            1 => (0.0, rng.gen_range(0.5..5.0)),
            2 => (-rng.gen_range(0.5..3.0f64), rng.gen_range(0.5..3.0)),
            3 => (f64::NEG_INFINITY, rng.gen_range(0.0..4.0)),
            _ => (f64::NEG_INFINITY, INF),
        };
        let obj = rng.gen_range(-5.0..5.0);
        model.add_var(lo, up, obj);
    }
    for _ in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.7) {
                coeffs.push((j, rng.gen_range(-4.0..4.0f64)));
            }
        }
        if coeffs.is_empty() {
            coeffs.push((rng.gen_range(0..n), 1.0));
        }
        let rel = match rng.gen_range(0..10) {
            0..=5 => Rel::Le,
            6..=8 => Rel::Ge,
            _ => Rel::Eq,
        };
        let rhs = rng.gen_range(-3.0..8.0);
        model.add_row(rel, rhs, coeffs);
    }
    model
}

#[test]
fn lp_matches_tableau_oracle_on_random_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let cfg = SolverConfig::default();
    let mut optimal_count = 0;
    for case in 0..300 {
        let model = random_lp(&mut rng, 10, 10);
        let fast = solve_lp(&model, &cfg);
        let slow = tableau_lp(&model);
        match (fast.status, &slow) {
            (LpStatus::Optimal, CheckResult::Optimal(v)) => {
                optimal_count += 1;
                assert!(
                    (fast.objective - v).abs() <= 1e-8 * (1.0 + v.abs()),
                    "case {case}: objective {} vs oracle {v}",
                    fast.objective
                );
                verify_kkt(&model, &fast.x, &fast.duals, 1e-6)
                    .unwrap_or_else(|e| panic!("case {case}: KKT failed: {e}"));
            }
            (LpStatus::Infeasible, CheckResult::Infeasible) => {}
            (LpStatus::Unbounded, CheckResult::Unbounded) => {}
            (a, b) => panic!("case {case}: status mismatch: {a:?} vs {b:?}"),
        }
    }
    // the generator must actually produce a healthy share of solvable cases
    assert!(optimal_count > 80, "only {optimal_count} optimal cases");
}

#[test]
fn lp_matches_oracle_on_larger_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xBADA55);
    let cfg = SolverConfig::default();
    for case in 0..40 {
        let model = random_lp(&mut rng, 20, 16);
        let fast = solve_lp(&model, &cfg);
        let slow = tableau_lp(&model);
        match (fast.status, &slow) {
            (LpStatus::Optimal, CheckResult::Optimal(v)) => {
                assert!(
                    (fast.objective - v).abs() <= 1e-8 * (1.0 + v.abs()),
                    "case {case}: objective {} vs oracle {v}",
                    fast.objective
                );
            }
            (LpStatus::Infeasible, CheckResult::Infeasible) => {}
            (LpStatus::Unbounded, CheckResult::Unbounded) => {}
            (a, b) => panic!("case {case}: status mismatch: {a:?} vs {b:?}"),
        }
    }
}

fn random_mip(rng: &mut ChaCha8Rng) -> MipModel {
    let n = rng.gen_range(2..=12);
    let m = rng.gen_range(1..=8);
    let sense = if rng.gen_bool(0.5) {
        Sense::Minimize
    } else {
        Sense::Maximize
    };
    let mut model = LpModel::new(sense);
    let mut ints = Vec::new();
    for j in 0..n {
        let binary = rng.gen_bool(0.8);
        if binary {
            model.add_var(0.0, 1.0, rng.gen_range(-5.0..5.0));
            ints.push(j);
        } else {
            model.add_var(0.0, rng.gen_range(1.0..4.0), rng.gen_range(-5.0..5.0));
        }
    }
    for _ in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(0.6) {
                coeffs.push((j, rng.gen_range(-3.0..3.0f64)));
            }
        }
        if coeffs.is_empty() {
            coeffs.push((0, 1.0));
        }
        let rel = if rng.gen_bool(0.7) { Rel::Le } else { Rel::Ge };
        model.add_row(rel, rng.gen_range(-2.0..5.0), coeffs);
    }
    let mut mip = MipModel::from_lp(model);
    for j in ints {
        mip.set_integer(j);
    }
    mip
}

#[test]
fn mip_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let cfg = SolverConfig::default();
    let mut solved = 0;
    for case in 0..60 {
        let mip = random_mip(&mut rng);
        let fast = solve_mip(&mip, &cfg);
        let slow = enumerate_mip(&mip, 1 << 20).expect("enumeration within cap");
        match (&fast.status, &slow) {
            (desklp::MipStatus::Optimal, CheckResult::Optimal(v)) => {
                solved += 1;
                assert!(
                    (fast.objective - v).abs() <= 1e-7 * (1.0 + v.abs()),
                    "case {case}: {} vs {v}",
                    fast.objective
                );
            }
            (desklp::MipStatus::Infeasible, CheckResult::Infeasible) => {}
            (desklp::MipStatus::Unbounded, CheckResult::Unbounded) => {}
            (a, b) => panic!("case {case}: status mismatch {a:?} vs {b:?}"),
        }
    }
    assert!(solved > 25, "only {solved} optimally solved cases");
}

#[test]
fn network_flow_lp_is_integral() {
    // transportation rows are totally unimodular: MIP value equals LP value
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let sources = rng.gen_range(2..4usize);
        let sinks = rng.gen_range(2..4usize);
        let mut model = LpModel::new(Sense::Minimize);
        let mut vars = vec![vec![0usize; sinks]; sources];
        for (i, row) in vars.iter_mut().enumerate() {
            for (k, slot) in row.iter_mut().enumerate() {
                let _ = (i, k);
                *slot = model.add_var(0.0, INF, rng.gen_range(1.0..9.0f64).round());
            }
        }
        let mut supply = vec![0.0; sources];
        let mut demand = vec![0.0; sinks];
        let total: f64 = 12.0;
        for s in supply.iter_mut() {
            *s = (total / sources as f64).round();
        }
        let share = supply.iter().sum::<f64>() / sinks as f64;
        for d in demand.iter_mut() {
            *d = share;
        }
        // make demands integral and matched
        let sum_s: f64 = supply.iter().sum();
        let mut sum_d = 0.0;
        for d in demand.iter_mut() {
            *d = d.floor();
            sum_d += *d;
        }
        demand[0] += sum_s - sum_d;
        for (i, s) in supply.iter().enumerate() {
            let coeffs: Vec<_> = (0..sinks).map(|k| (vars[i][k], 1.0)).collect();
            model.add_row(Rel::Eq, *s, coeffs);
        }
        for (k, d) in demand.iter().enumerate() {
            let coeffs: Vec<_> = (0..sources).map(|i| (vars[i][k], 1.0)).collect();
            model.add_row(Rel::Eq, *d, coeffs);
        }
        let lp_val = solve_lp(&model, &SolverConfig::default());
        assert_eq!(lp_val.status, LpStatus::Optimal);
        let mut mip = MipModel::from_lp(model);
        // flows are bounded by total supply
        for j in 0..mip.lp.num_vars() {
            mip.lp.vars[j].upper = sum_s;
            mip.set_integer(j);
        }
        let mip_val = solve_mip(&mip, &SolverConfig::default());
        assert!(mip_val.is_optimal());
        assert!(
            (mip_val.objective - lp_val.objective).abs() < 1e-7,
            "TU gap: {} vs {}",
            mip_val.objective,
            lp_val.objective
        );
    }
}

#[test]
fn deterministic_resolve() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let model = random_lp(&mut rng, 12, 10);
        let a = solve_lp(&model, &SolverConfig::default());
        let b = solve_lp(&model, &SolverConfig::default());
        assert_eq!(a.status, b.status);
        assert_eq!(a.x, b.x);
        assert_eq!(a.duals, b.duals);
        assert_eq!(a.iterations, b.iterations);
    }
}

#[test]
fn iteration_limit_reports_status() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let model = random_lp(&mut rng, 15, 12);
    let cfg = SolverConfig {
        max_iters: 1,
        ..SolverConfig::default()
    };
    let sol = solve_lp(&model, &cfg);
    assert!(matches!(
        sol.status,
        LpStatus::IterLimit | LpStatus::Optimal | LpStatus::Infeasible | LpStatus::Unbounded
    ));
}

#[test]
fn warm_start_reaches_same_optimum_with_extra_columns() {
    // simulate column generation: solve, append a variable, warm resolve
    let mut base = LpModel::new(Sense::Minimize);
    let x = base.add_var(0.0, 10.0, 2.0);
    let y = base.add_var(0.0, 10.0, 3.0);
    base.add_row(Rel::Ge, 4.0, vec![(x, 1.0), (y, 1.0)]);
    base.add_row(Rel::Le, 8.0, vec![(x, 2.0), (y, 1.0)]);
    let first = solve_lp(&base, &SolverConfig::default());
    assert!(first.is_optimal());

    let mut grown = base.clone();
    let z = grown.add_var(0.0, 10.0, 1.0);
    grown.rows[0].coeffs.push((z, 1.0));
    let warm = desklp::solve_lp_warm(&grown, &SolverConfig::default(), Some(&first.basis));
    let cold = solve_lp(&grown, &SolverConfig::default());
    assert!(warm.is_optimal());
    assert!((warm.objective - cold.objective).abs() < 1e-9);
    assert!((warm.objective - 4.0).abs() < 1e-9);
}
