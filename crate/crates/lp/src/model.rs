//! Model containers shared by the LP and MIP solvers.

use std::fmt;
use std::time::Duration;

pub const INF: f64 = f64::INFINITY;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// Row relation: `a'x <= b`, `a'x = b` or `a'x >= b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub lower: f64,
    pub upper: f64,
    pub obj: f64,
    pub name: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Row {
    /// Sparse coefficients as (variable index, value) pairs.
    pub coeffs: Vec<(usize, f64)>,
    pub rel: Rel,
    pub rhs: f64,
    pub name: Option<String>,
}

/// A linear program over bounded continuous variables.
#[derive(Debug, Clone, Default)]
pub struct LpModel {
    pub sense: Sense,
    pub vars: Vec<Variable>,
    pub rows: Vec<Row>,
}

impl Default for Sense {
    fn default() -> Self {
        Sense::Minimize
    }
}

impl LpModel {
    pub fn new(sense: Sense) -> Self {
        LpModel {
            sense,
            vars: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, obj: f64) -> usize {
        self.vars.push(Variable {
            lower,
            upper,
            obj,
            name: None,
        });
        self.vars.len() - 1
    }

    pub fn add_var_named(&mut self, lower: f64, upper: f64, obj: f64, name: &str) -> usize {
        let id = self.add_var(lower, upper, obj);
        self.vars[id].name = Some(name.to_string());
        id
    }

    pub fn add_row(&mut self, rel: Rel, rhs: f64, coeffs: Vec<(usize, f64)>) -> usize {
        self.rows.push(Row {
            coeffs,
            rel,
            rhs,
            name: None,
        });
        self.rows.len() - 1
    }

    pub fn add_row_named(&mut self, rel: Rel, rhs: f64, coeffs: Vec<(usize, f64)>, name: &str) -> usize {
        let id = self.add_row(rel, rhs, coeffs);
        self.rows[id].name = Some(name.to_string());
        id
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    /// Structural sanity: bounds ordered, coefficients finite, indices in range.
    pub fn validate(&self) -> Result<(), ModelError> {
        for (j, v) in self.vars.iter().enumerate() {
            if v.lower > v.upper {
                return Err(ModelError::BadBounds(j, v.lower, v.upper));
            }
            if v.lower.is_nan() || v.upper.is_nan() || !v.obj.is_finite() {
                return Err(ModelError::NonFinite(j));
            }
        }
        for (i, r) in self.rows.iter().enumerate() {
            if !r.rhs.is_finite() {
                return Err(ModelError::BadRhs(i));
            }
            for &(j, a) in &r.coeffs {
                if j >= self.vars.len() {
                    return Err(ModelError::BadIndex(i, j));
                }
                if !a.is_finite() {
                    return Err(ModelError::BadCoeff(i, j));
                }
            }
        }
        Ok(())
    }

    /// Objective value of a point under the model's own sense.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.vars.iter().zip(x).map(|(v, xi)| v.obj * xi).sum()
    }
}

/// A mixed-integer program: an LP plus integrality marks.
#[derive(Debug, Clone, Default)]
pub struct MipModel {
    pub lp: LpModel,
    /// `integer[j]` marks variable `j` as integral. Integer variables must
    /// have finite bounds.
    pub integer: Vec<bool>,
}

impl MipModel {
    pub fn from_lp(lp: LpModel) -> Self {
        let n = lp.num_vars();
        MipModel {
            lp,
            integer: vec![false; n],
        }
    }

    pub fn set_integer(&mut self, var: usize) {
        if self.integer.len() < self.lp.num_vars() {
            self.integer.resize(self.lp.num_vars(), false);
        }
        self.integer[var] = true;
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.lp.validate()?;
        for (j, &f) in self.integer.iter().enumerate() {
            if f {
                let v = &self.lp.vars[j];
                if !v.lower.is_finite() || !v.upper.is_finite() {
                    return Err(ModelError::UnboundedInteger(j));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    BadBounds(usize, f64, f64),
    NonFinite(usize),
    BadRhs(usize),
    BadIndex(usize, usize),
    BadCoeff(usize, usize),
    UnboundedInteger(usize),
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::BadBounds(j, lo, up) => {
                write!(f, "variable {j}: lower bound {lo} exceeds upper bound {up}")
            }
            ModelError::NonFinite(j) => write!(f, "variable {j}: NaN bound or non-finite objective"),
            ModelError::BadRhs(i) => write!(f, "row {i}: non-finite rhs"),
            ModelError::BadIndex(i, j) => write!(f, "row {i}: unknown variable index {j}"),
            ModelError::BadCoeff(i, j) => write!(f, "row {i}: non-finite coefficient on variable {j}"),
            ModelError::UnboundedInteger(j) => {
                write!(f, "integer variable {j} must have finite bounds")
            }
        }
    }
}

impl std::error::Error for ModelError {}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Primal feasibility tolerance.
    pub tol_feas: f64,
    /// Dual feasibility / optimality tolerance.
    pub tol_opt: f64,
    /// Relative MIP gap at which branch-and-bound stops.
    pub mip_gap: f64,
    /// Integrality tolerance for rounding checks.
    pub int_tol: f64,
    /// Simplex iteration cap per LP solve.
    pub max_iters: usize,
    /// Branch-and-bound node cap.
    pub max_nodes: usize,
    pub time_limit: Option<Duration>,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub degeneracy_threshold: usize,
    /// Pivots between basis refactorizations.
    pub refactor_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_feas: 1e-7,
            tol_opt: 1e-7,
            mip_gap: 1e-6,
            int_tol: 1e-6,
            max_iters: 500_000,
            max_nodes: 2_000_000,
            time_limit: None,
            degeneracy_threshold: 60,
            refactor_every: 96,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
    TimeLimit,
}

/// Nonbasic/basic mark per variable; slack statuses are appended after the
/// structural variables so a basis can be carried between related models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarStatus {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable, held at zero.
    FreeZero,
}

#[derive(Debug, Clone, Default)]
pub struct Basis {
    /// One status per structural variable followed by one per row slack.
    pub statuses: Vec<VarStatus>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values per structural variable (best point found).
    pub x: Vec<f64>,
    /// Dual value per row, in the model's original sense. For a minimization,
    /// `<=` rows have nonpositive duals at an optimum and `>=` rows
    /// nonnegative; equality rows are free.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Final basis, reusable as a warm start for a related model.
    pub basis: Basis,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MipStatus {
    Optimal,
    /// Incumbent found but limits stopped the search; `bound` is still valid.
    Feasible,
    Infeasible,
    Unbounded,
    /// Limits hit before any incumbent was found.
    Unknown,
}

#[derive(Debug, Clone)]
pub struct MipSolution {
    pub status: MipStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    /// Best proven bound (lower bound for minimization).
    pub bound: f64,
    pub nodes: usize,
}

impl MipSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == MipStatus::Optimal
    }

    pub fn has_solution(&self) -> bool {
        matches!(self.status, MipStatus::Optimal | MipStatus::Feasible)
    }
}
