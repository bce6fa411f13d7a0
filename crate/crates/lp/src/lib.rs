//! A small, self-contained linear and mixed-integer programming toolkit.
//!
//! The production path is a bounded-variable revised simplex over a sparse
//! LU basis with product-form updates ([`solve_lp`]) and a best-bound
//! branch-and-bound on top of it ([`solve_mip`]). The [`check`] module holds
//! deliberately independent reference routines (dense tableau simplex,
//! exhaustive enumeration) for validating results at small scale.
//!
//! Intended for desk-scale models; an external solver can be swapped in
//! behind the [`Backend`] trait.

pub mod check;
pub mod lpfmt;
mod lu;
pub mod model;
mod simplex;
mod mip;

pub use model::{
    Basis, LpModel, LpSolution, LpStatus, MipModel, MipSolution, MipStatus, ModelError, Rel,
    Sense, SolverConfig, VarStatus, Variable, INF,
};
pub use mip::{solve_mip, solve_mip_warm};
pub use simplex::{solve_lp, solve_lp_warm};

/// Pluggable solving interface; the reference implementation is the built-in
/// simplex / branch-and-bound pair.
pub trait Backend {
    fn solve_lp(&self, model: &LpModel, cfg: &SolverConfig) -> LpSolution;
    fn solve_lp_warm(
        &self,
        model: &LpModel,
        cfg: &SolverConfig,
        warm: Option<&Basis>,
    ) -> LpSolution {
        let _ = warm;
        self.solve_lp(model, cfg)
    }
    fn solve_mip(&self, model: &MipModel, cfg: &SolverConfig) -> MipSolution;
    fn solve_mip_warm(
        &self,
        model: &MipModel,
        cfg: &SolverConfig,
        start: Option<&[f64]>,
    ) -> MipSolution {
        let _ = start;
        self.solve_mip(model, cfg)
    }
}

/// The built-in reference backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct Reference;

impl Backend for Reference {
    fn solve_lp(&self, model: &LpModel, cfg: &SolverConfig) -> LpSolution {
        solve_lp(model, cfg)
    }
    fn solve_lp_warm(
        &self,
        model: &LpModel,
        cfg: &SolverConfig,
        warm: Option<&Basis>,
    ) -> LpSolution {
        solve_lp_warm(model, cfg, warm)
    }
    fn solve_mip(&self, model: &MipModel, cfg: &SolverConfig) -> MipSolution {
        solve_mip(model, cfg)
    }
    fn solve_mip_warm(
        &self,
        model: &MipModel,
        cfg: &SolverConfig,
        start: Option<&[f64]>,
    ) -> MipSolution {
        solve_mip_warm(model, cfg, start)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_x_with_lower_row() {
        // min x s.t. x >= 3, x >= 0  => x* = 3, row dual = 1
        let mut m = LpModel::new(Sense::Minimize);
        let x = m.add_var(0.0, INF, 1.0);
        m.add_row(Rel::Ge, 3.0, vec![(x, 1.0)]);
        let sol = solve_lp(&m, &SolverConfig::default());
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 3.0).abs() < 1e-9);
        assert!((sol.duals[0] - 1.0).abs() < 1e-9);
        assert!((sol.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_box() {
        // max x s.t. x <= 0, x >= 1
        let mut m = LpModel::new(Sense::Maximize);
        let x = m.add_var(1.0, INF, 1.0);
        m.add_row(Rel::Le, 0.0, vec![(x, 1.0)]);
        let sol = solve_lp(&m, &SolverConfig::default());
        assert_eq!(sol.status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut m = LpModel::new(Sense::Minimize);
        let x = m.add_var(f64::NEG_INFINITY, INF, 1.0);
        m.add_row(Rel::Le, 5.0, vec![(x, 1.0)]);
        let sol = solve_lp(&m, &SolverConfig::default());
        assert_eq!(sol.status, LpStatus::Unbounded);
    }

    #[test]
    fn knapsack_toy() {
        // max 3x + 2y, x + y <= 1, binary => 3
        let mut m = LpModel::new(Sense::Maximize);
        let x = m.add_var(0.0, 1.0, 3.0);
        let y = m.add_var(0.0, 1.0, 2.0);
        m.add_row(Rel::Le, 1.0, vec![(x, 1.0), (y, 1.0)]);
        let mut mip = MipModel::from_lp(m);
        mip.set_integer(x);
        mip.set_integer(y);
        let sol = solve_mip(&mip, &SolverConfig::default());
        assert!(sol.is_optimal());
        assert!((sol.objective - 3.0).abs() < 1e-9);
    }

    #[test]
    fn equality_row_duals() {
        // min 2a + 3b s.t. a + b = 4, a <= 1
        let mut m = LpModel::new(Sense::Minimize);
        let a = m.add_var(0.0, 1.0, 2.0);
        let b = m.add_var(0.0, INF, 3.0);
        m.add_row(Rel::Eq, 4.0, vec![(a, 1.0), (b, 1.0)]);
        let sol = solve_lp(&m, &SolverConfig::default());
        assert!(sol.is_optimal());
        assert!((sol.objective - 11.0).abs() < 1e-9);
        check::verify_kkt(&m, &sol.x, &sol.duals, 1e-7).unwrap();
    }

    #[test]
    fn lp_format_dump_mentions_sections() {
        let mut m = LpModel::new(Sense::Minimize);
        let x = m.add_var_named(0.0, 2.0, 1.5, "alpha");
        m.add_row_named(Rel::Le, 2.0, vec![(x, 1.0)], "cap");
        let text = lpfmt::write_lp(&m);
        assert!(text.contains("Minimize"));
        assert!(text.contains("alpha"));
        assert!(text.contains("Subject To"));
    }
}
