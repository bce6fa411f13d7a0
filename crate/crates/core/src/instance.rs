//! Problem instances: a bidirectional line with depots at both ends,
//! optional en-route fast-charging candidates, discretized time and
//! state-of-charge grids, and segment demand given as a nominal matrix plus
//! a budgeted deviation.
//!
//! Stations are directional: a line with `n` stops has up-direction stations
//! `0..n` and down-direction stations `n..2n`, where down station `n + j`
//! sits at physical stop `n - 1 - j`. Segments connect consecutive stations
//! within a direction; the terminal-to-terminal wrap is not a segment.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type StationIdx = usize;
pub type SegmentIdx = usize;
pub type FacilityIdx = usize;

/// Dense row-major matrix indexed by (segment, interval).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, v: f64) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn from_rows(rows_vec: Vec<Vec<f64>>) -> Result<Self, String> {
        let rows = rows_vec.len();
        let cols = rows_vec.first().map(|r| r.len()).unwrap_or(0);
        if rows_vec.iter().any(|r| r.len() != cols) {
            return Err("ragged matrix rows".into());
        }
        Ok(Matrix {
            rows,
            cols,
            data: rows_vec.into_iter().flatten().collect(),
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|r| self.data[r * self.cols..(r + 1) * self.cols].to_vec())
            .collect()
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn same_shape(&self, other: &Matrix) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Travel time of one segment as a step function of the departure interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeProfile {
    Const(u32),
    /// Sorted breakpoints (from_interval, travel_time); the first entry must
    /// start at interval 0.
    Steps(Vec<(usize, u32)>),
}

impl TimeProfile {
    pub fn at(&self, t: usize) -> u32 {
        match self {
            TimeProfile::Const(v) => *v,
            TimeProfile::Steps(steps) => {
                let mut cur = steps.first().map(|&(_, v)| v).unwrap_or(1);
                for &(from, v) in steps {
                    if from <= t {
                        cur = v;
                    } else {
                        break;
                    }
                }
                cur
            }
        }
    }

    pub fn min_value(&self) -> u32 {
        match self {
            TimeProfile::Const(v) => *v,
            TimeProfile::Steps(steps) => steps.iter().map(|&(_, v)| v).min().unwrap_or(1),
        }
    }

    fn validate(&self) -> Result<(), String> {
        match self {
            TimeProfile::Const(v) => {
                if *v < 1 {
                    return Err("travel time must be >= 1 interval".into());
                }
            }
            TimeProfile::Steps(steps) => {
                if steps.is_empty() || steps[0].0 != 0 {
                    return Err("travel-time steps must start at interval 0".into());
                }
                let mut last = None;
                for &(from, v) in steps {
                    if v < 1 {
                        return Err("travel time must be >= 1 interval".into());
                    }
                    if let Some(prev) = last {
                        if from <= prev {
                            return Err("travel-time breakpoints must increase".into());
                        }
                    }
                    last = Some(from);
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Depot {
    pub name: String,
    /// Physical stop, 0-based; must be a line end.
    pub stop: usize,
    /// Number of standard charging posts (fixed, not a decision).
    pub posts: u32,
    #[serde(default = "default_access_time")]
    pub connect_time: u32,
    #[serde(default = "default_access_time")]
    pub disconnect_time: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastCandidate {
    pub name: String,
    /// Physical stop, 0-based interior stop.
    pub stop: usize,
    /// Maximum number of fast-charging posts that may be installed.
    pub max_posts: u32,
    /// Cost of installing one post.
    pub post_cost: f64,
    #[serde(default = "default_turn_time")]
    pub turn_time: u32,
    #[serde(default = "default_access_time")]
    pub connect_time: u32,
    #[serde(default = "default_access_time")]
    pub disconnect_time: u32,
    /// State-of-charge cost of a short turn, in grid steps.
    #[serde(default)]
    pub turn_soc_steps: u32,
}

fn default_access_time() -> u32 {
    1
}
fn default_turn_time() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineTopology {
    pub stations_per_direction: usize,
    pub depots: Vec<Depot>,
    #[serde(default)]
    pub fast_candidates: Vec<FastCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discretization {
    /// Number of intervals |T|; intervals are numbered 1..=horizon.
    pub horizon: usize,
    pub delta_minutes: f64,
    pub soc_step_pct: u32,
    pub soc_min_pct: u32,
    pub soc_max_pct: u32,
    /// Dispatch state of charge out of a depot; defaults to the maximum.
    pub soc_full_pct: Option<u32>,
}

impl Discretization {
    pub fn soc_full(&self) -> u32 {
        self.soc_full_pct.unwrap_or(self.soc_max_pct)
    }

    /// Number of grid levels between the SoC bounds, inclusive.
    pub fn soc_levels(&self) -> usize {
        ((self.soc_max_pct - self.soc_min_pct) / self.soc_step_pct) as usize + 1
    }

    pub fn level_to_pct(&self, level: usize) -> u32 {
        self.soc_min_pct + level as u32 * self.soc_step_pct
    }

    pub fn full_level(&self) -> usize {
        ((self.soc_full() - self.soc_min_pct) / self.soc_step_pct) as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub unit_purchase: f64,
    pub operating_per_interval: f64,
    pub fixed_charge: f64,
    pub electricity_per_kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dynamics {
    pub battery_kwh: f64,
    /// Traction energy per kilometre. The field name carries the unit; some
    /// vehicle datasheets quote the same figure as "kW/km".
    pub consumption_kwh_per_km: f64,
    #[serde(default)]
    pub idle_kwh_per_min: f64,
    pub speed_kmh: f64,
    /// Distance of each stop gap, length `stations_per_direction - 1`;
    /// shared by both directions.
    pub segment_km: Vec<f64>,
    /// Optional per-segment travel-time override (one entry per stop gap,
    /// mirrored to both directions). Derived from distance and speed when
    /// absent.
    #[serde(default)]
    pub segment_travel_time: Option<Vec<TimeProfile>>,
    pub fast_charge_kw: f64,
    pub depot_charge_kw: f64,
    pub costs: CostParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandModel {
    /// Nominal arrivals per (segment, interval).
    pub nominal: Matrix,
    /// Maximum deviation per (segment, interval).
    pub deviation: Matrix,
    /// Per-segment budget: how many intervals may deviate at once.
    pub budget_time: Vec<u32>,
    /// Per-interval budget: how many segments may deviate at once.
    pub budget_space: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    /// Passenger capacity of one unit.
    pub unit_capacity: f64,
    /// Maximum units composed into one vehicle.
    pub max_composition: u32,
    /// Emulates fixed compositions of k units: capacity, path cost and
    /// charger occupancy scale by k, the composition cap becomes
    /// floor(max_composition / k).
    #[serde(default = "default_multiplicity")]
    pub unit_multiplicity: u32,
}

fn default_multiplicity() -> u32 {
    1
}

impl Weights {
    pub fn effective_capacity(&self) -> f64 {
        self.unit_capacity * self.unit_multiplicity as f64
    }

    pub fn effective_max_composition(&self) -> u32 {
        self.max_composition / self.unit_multiplicity
    }
}

/// What a charging facility is anchored to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FacilityKind {
    /// Index into `topology.depots`; capacity is the fixed post count.
    Depot(usize),
    /// Index into `topology.fast_candidates`; capacity is a decision.
    Fast(usize),
}

/// A charging location together with the directional stations it serves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facility {
    pub kind: FacilityKind,
    pub name: String,
    /// Directional stations adjacent to the facility (one per direction).
    pub anchors: Vec<StationIdx>,
    pub connect_time: u32,
    pub disconnect_time: u32,
    /// SoC gained by one charging interval, in grid steps, before clamping
    /// at the grid top.
    pub gain_steps: u32,
}

impl Facility {
    pub fn is_fast(&self) -> bool {
        matches!(self.kind, FacilityKind::Fast(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub topology: LineTopology,
    pub discretization: Discretization,
    pub dynamics: Dynamics,
    pub demand: DemandModel,
    pub weights: Weights,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "instance admissible")
        } else {
            writeln!(f, "{} violation(s):", self.violations.len())?;
            for v in &self.violations {
                writeln!(f, "  - {v}")?;
            }
            Ok(())
        }
    }
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid instance: {0}")]
    Invalid(ValidationReport),
}

// ---------------------------------------------------------------------------
// on-disk schema

/// Top-level instance document. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    topology: TopologyFile,
    discretization: DiscretizationFile,
    dynamics: DynamicsFile,
    demand: DemandFile,
    weights: WeightsFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TopologyFile {
    stations_per_direction: usize,
    depots: Vec<Depot>,
    #[serde(default)]
    fast_candidates: Vec<FastCandidate>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscretizationFile {
    horizon: usize,
    delta_minutes: f64,
    soc_step_pct: u32,
    soc_min_pct: u32,
    soc_max_pct: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    soc_full_pct: Option<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicsFile {
    battery_kwh: f64,
    consumption_kwh_per_km: f64,
    #[serde(default)]
    idle_kwh_per_min: f64,
    speed_kmh: f64,
    segment_km: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segment_travel_time: Option<Vec<TimeProfile>>,
    fast_charge_kw: f64,
    depot_charge_kw: f64,
    costs: CostParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DemandFile {
    nominal: Vec<Vec<f64>>,
    deviation: Vec<Vec<f64>>,
    /// Scalar or per-segment list; must be integral.
    budget_time: BudgetFile,
    /// Scalar or per-interval list; must be integral.
    budget_space: BudgetFile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum BudgetFile {
    Scalar(f64),
    PerIndex(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsFile {
    theta1: f64,
    theta2: f64,
    theta3: f64,
    unit_capacity: f64,
    max_composition: u32,
    #[serde(default = "default_multiplicity")]
    unit_multiplicity: u32,
}

fn budget_to_vec(b: &BudgetFile, len: usize, what: &str) -> Result<Vec<u32>, String> {
    let to_int = |v: f64| -> Result<u32, String> {
        if v < 0.0 || v.fract() != 0.0 {
            Err(format!("{what} budget must be a nonnegative integer, got {v}"))
        } else {
            Ok(v as u32)
        }
    };
    match b {
        BudgetFile::Scalar(v) => Ok(vec![to_int(*v)?; len]),
        BudgetFile::PerIndex(vs) => {
            if vs.len() != len {
                return Err(format!(
                    "{what} budget has {} entries, expected {len}",
                    vs.len()
                ));
            }
            vs.iter().map(|&v| to_int(v)).collect()
        }
    }
}

// ---------------------------------------------------------------------------
// operations

pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance, InstanceError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| InstanceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_instance_str(&text)
}

pub fn load_instance_str(text: &str) -> Result<Instance, InstanceError> {
    let file: InstanceFile =
        serde_json::from_str(text).map_err(|e| InstanceError::Parse(e.to_string()))?;
    let inst = instance_from_file(file).map_err(InstanceError::Parse)?;
    let report = validate_instance(&inst);
    if report.is_ok() {
        Ok(inst)
    } else {
        Err(InstanceError::Invalid(report))
    }
}

pub fn save_instance(inst: &Instance, path: impl AsRef<Path>) -> Result<(), InstanceError> {
    let text = instance_to_json(inst);
    std::fs::write(path.as_ref(), text).map_err(|source| InstanceError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

pub fn instance_to_json(inst: &Instance) -> String {
    let file = InstanceFile {
        topology: TopologyFile {
            stations_per_direction: inst.topology.stations_per_direction,
            depots: inst.topology.depots.clone(),
            fast_candidates: inst.topology.fast_candidates.clone(),
        },
        discretization: DiscretizationFile {
            horizon: inst.discretization.horizon,
            delta_minutes: inst.discretization.delta_minutes,
            soc_step_pct: inst.discretization.soc_step_pct,
            soc_min_pct: inst.discretization.soc_min_pct,
            soc_max_pct: inst.discretization.soc_max_pct,
            soc_full_pct: inst.discretization.soc_full_pct,
        },
        dynamics: DynamicsFile {
            battery_kwh: inst.dynamics.battery_kwh,
            consumption_kwh_per_km: inst.dynamics.consumption_kwh_per_km,
            idle_kwh_per_min: inst.dynamics.idle_kwh_per_min,
            speed_kmh: inst.dynamics.speed_kmh,
            segment_km: inst.dynamics.segment_km.clone(),
            segment_travel_time: inst.dynamics.segment_travel_time.clone(),
            fast_charge_kw: inst.dynamics.fast_charge_kw,
            depot_charge_kw: inst.dynamics.depot_charge_kw,
            costs: inst.dynamics.costs.clone(),
        },
        demand: DemandFile {
            nominal: inst.demand.nominal.to_rows(),
            deviation: inst.demand.deviation.to_rows(),
            budget_time: BudgetFile::PerIndex(
                inst.demand.budget_time.iter().map(|&v| v as f64).collect(),
            ),
            budget_space: BudgetFile::PerIndex(
                inst.demand.budget_space.iter().map(|&v| v as f64).collect(),
            ),
        },
        weights: WeightsFile {
            theta1: inst.weights.theta1,
            theta2: inst.weights.theta2,
            theta3: inst.weights.theta3,
            unit_capacity: inst.weights.unit_capacity,
            max_composition: inst.weights.max_composition,
            unit_multiplicity: inst.weights.unit_multiplicity,
        },
    };
    serde_json::to_string_pretty(&file).expect("instance serializes")
}

fn instance_from_file(file: InstanceFile) -> Result<Instance, String> {
    let n = file.topology.stations_per_direction;
    if n < 2 {
        return Err("stations_per_direction must be at least 2".into());
    }
    let seg_count = 2 * (n - 1);
    let horizon = file.discretization.horizon;
    let nominal = Matrix::from_rows(file.demand.nominal)?;
    let deviation = Matrix::from_rows(file.demand.deviation)?;
    let budget_time = budget_to_vec(&file.demand.budget_time, seg_count, "per-segment")?;
    let budget_space = budget_to_vec(&file.demand.budget_space, horizon, "per-interval")?;
    Ok(Instance {
        topology: LineTopology {
            stations_per_direction: n,
            depots: file.topology.depots,
            fast_candidates: file.topology.fast_candidates,
        },
        discretization: Discretization {
            horizon,
            delta_minutes: file.discretization.delta_minutes,
            soc_step_pct: file.discretization.soc_step_pct,
            soc_min_pct: file.discretization.soc_min_pct,
            soc_max_pct: file.discretization.soc_max_pct,
            soc_full_pct: file.discretization.soc_full_pct,
        },
        dynamics: Dynamics {
            battery_kwh: file.dynamics.battery_kwh,
            consumption_kwh_per_km: file.dynamics.consumption_kwh_per_km,
            idle_kwh_per_min: file.dynamics.idle_kwh_per_min,
            speed_kmh: file.dynamics.speed_kmh,
            segment_km: file.dynamics.segment_km,
            segment_travel_time: file.dynamics.segment_travel_time,
            fast_charge_kw: file.dynamics.fast_charge_kw,
            depot_charge_kw: file.dynamics.depot_charge_kw,
            costs: file.dynamics.costs,
        },
        demand: DemandModel {
            nominal,
            deviation,
            budget_time,
            budget_space,
        },
        weights: Weights {
            theta1: file.weights.theta1,
            theta2: file.weights.theta2,
            theta3: file.weights.theta3,
            unit_capacity: file.weights.unit_capacity,
            max_composition: file.weights.max_composition,
            unit_multiplicity: file.weights.unit_multiplicity,
        },
    })
}

/// Check every structural invariant; the report lists all violations.
pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut v = Vec::new();
    let n = inst.topology.stations_per_direction;
    let d = &inst.discretization;

    if n < 2 {
        v.push("stations_per_direction must be at least 2".into());
    }
    if d.horizon < 1 {
        v.push("horizon must be at least 1 interval".into());
    }
    if d.soc_step_pct == 0 {
        v.push("soc_step_pct must be positive".into());
    }
    if d.soc_min_pct >= d.soc_max_pct {
        v.push(format!(
            "soc_min_pct ({}) must be below soc_max_pct ({})",
            d.soc_min_pct, d.soc_max_pct
        ));
    } else if d.soc_step_pct > 0 {
        if (d.soc_max_pct - d.soc_min_pct) % d.soc_step_pct != 0 {
            v.push(format!(
                "(soc_max_pct - soc_min_pct) not divisible by soc_step_pct ({})",
                d.soc_step_pct
            ));
        }
        let full = d.soc_full();
        if full > d.soc_max_pct || full < d.soc_min_pct {
            v.push(format!("soc_full_pct ({full}) outside the SoC range"));
        } else if (full - d.soc_min_pct) % d.soc_step_pct != 0 {
            v.push("soc_full_pct is not on the SoC grid".into());
        }
    }
    if d.delta_minutes <= 0.0 {
        v.push("delta_minutes must be positive".into());
    }

    if inst.topology.depots.is_empty() || inst.topology.depots.len() > 2 {
        v.push(format!(
            "expected 1 or 2 depots, got {}",
            inst.topology.depots.len()
        ));
    }
    let mut seen_ends = Vec::new();
    for dep in &inst.topology.depots {
        if dep.stop != 0 && dep.stop + 1 != n {
            v.push(format!("depot '{}' must sit at a line end", dep.name));
        }
        if seen_ends.contains(&dep.stop) {
            v.push(format!("duplicate depot at stop {}", dep.stop));
        }
        seen_ends.push(dep.stop);
        if dep.connect_time < 1 || dep.disconnect_time < 1 {
            v.push(format!(
                "depot '{}': connect/disconnect times must be >= 1 interval",
                dep.name
            ));
        }
    }
    let mut seen_fast = Vec::new();
    for fc in &inst.topology.fast_candidates {
        if fc.stop == 0 || fc.stop + 1 >= n {
            v.push(format!(
                "fast candidate '{}' must sit at an interior stop",
                fc.name
            ));
        }
        if seen_fast.contains(&fc.stop) {
            v.push(format!("duplicate fast candidate at stop {}", fc.stop));
        }
        seen_fast.push(fc.stop);
        if fc.turn_time < 1 {
            v.push(format!("fast candidate '{}': turn_time must be >= 1", fc.name));
        }
        if fc.connect_time < 1 || fc.disconnect_time < 1 {
            v.push(format!(
                "fast candidate '{}': connect/disconnect times must be >= 1 interval",
                fc.name
            ));
        }
        if fc.max_posts == 0 {
            v.push(format!("fast candidate '{}': max_posts must be >= 1", fc.name));
        }
        if fc.post_cost < 0.0 {
            v.push(format!("fast candidate '{}': negative post cost", fc.name));
        }
    }

    let dyns = &inst.dynamics;
    if dyns.battery_kwh <= 0.0 {
        v.push("battery_kwh must be positive".into());
    }
    if dyns.speed_kmh <= 0.0 {
        v.push("speed_kmh must be positive".into());
    }
    if dyns.consumption_kwh_per_km < 0.0 {
        v.push("consumption_kwh_per_km must be nonnegative".into());
    }
    if n >= 2 && dyns.segment_km.len() != n - 1 {
        v.push(format!(
            "segment_km has {} entries, expected {}",
            dyns.segment_km.len(),
            n - 1
        ));
    }
    if dyns.segment_km.iter().any(|&km| km <= 0.0) {
        v.push("segment_km entries must be positive".into());
    }
    if let Some(profiles) = &dyns.segment_travel_time {
        if n >= 2 && profiles.len() != n - 1 {
            v.push(format!(
                "segment_travel_time has {} entries, expected {}",
                profiles.len(),
                n - 1
            ));
        }
        for (i, p) in profiles.iter().enumerate() {
            if let Err(e) = p.validate() {
                v.push(format!("segment_travel_time[{i}]: {e}"));
            }
        }
    }
    if dyns.fast_charge_kw <= 0.0 || dyns.depot_charge_kw <= 0.0 {
        v.push("charging powers must be positive".into());
    }
    if dyns.costs.unit_purchase < 0.0
        || dyns.costs.operating_per_interval < 0.0
        || dyns.costs.fixed_charge < 0.0
        || dyns.costs.electricity_per_kwh < 0.0
    {
        v.push("cost parameters must be nonnegative".into());
    }

    let q = if n >= 2 { 2 * (n - 1) } else { 0 };
    let dem = &inst.demand;
    if dem.nominal.rows != q || dem.nominal.cols != d.horizon {
        v.push(format!(
            "nominal demand is {}x{}, expected {}x{}",
            dem.nominal.rows, dem.nominal.cols, q, d.horizon
        ));
    }
    if !dem.deviation.same_shape(&dem.nominal) {
        v.push("deviation matrix shape differs from nominal".into());
    }
    if dem.nominal.data.iter().any(|&x| x < 0.0) {
        v.push("nominal demand has a negative entry".into());
    }
    if dem.deviation.data.iter().any(|&x| x < 0.0) {
        v.push("demand deviation has a negative entry".into());
    }
    if dem.budget_time.len() != q {
        v.push(format!(
            "budget_time has {} entries, expected {}",
            dem.budget_time.len(),
            q
        ));
    }
    if dem.budget_space.len() != d.horizon {
        v.push(format!(
            "budget_space has {} entries, expected {}",
            dem.budget_space.len(),
            d.horizon
        ));
    }

    let w = &inst.weights;
    if w.theta1 < 0.0 || w.theta2 < 0.0 || w.theta3 < 0.0 {
        v.push("weights must be nonnegative".into());
    }
    if w.theta3 < w.theta2 {
        v.push(format!(
            "theta3 ({}) must dominate theta2 ({})",
            w.theta3, w.theta2
        ));
    }
    if w.unit_capacity <= 0.0 {
        v.push("unit_capacity must be positive".into());
    }
    if w.max_composition < 1 {
        v.push("max_composition must be >= 1".into());
    }
    if w.unit_multiplicity < 1 {
        v.push("unit_multiplicity must be >= 1".into());
    } else if w.max_composition / w.unit_multiplicity < 1 {
        v.push(format!(
            "unit_multiplicity ({}) exceeds max_composition ({})",
            w.unit_multiplicity, w.max_composition
        ));
    }

    ValidationReport { violations: v }
}

/// Realize demand under a scaling matrix: alpha = nominal + zeta * deviation.
pub fn demand_realization(inst: &Instance, zeta: &Matrix) -> Result<Matrix, String> {
    let nom = &inst.demand.nominal;
    if !zeta.same_shape(nom) {
        return Err(format!(
            "zeta is {}x{}, expected {}x{}",
            zeta.rows, zeta.cols, nom.rows, nom.cols
        ));
    }
    if zeta.data.iter().any(|&z| !(0.0..=1.0).contains(&z)) {
        return Err("zeta entries must lie in [0, 1]".into());
    }
    let mut out = nom.clone();
    for (o, (&z, &dev)) in out
        .data
        .iter_mut()
        .zip(zeta.data.iter().zip(inst.demand.deviation.data.iter()))
    {
        *o += z * dev;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// derived geometry

impl Instance {
    pub fn station_count(&self) -> usize {
        2 * self.topology.stations_per_direction
    }

    /// Up-direction station at a stop.
    pub fn up_station(&self, stop: usize) -> StationIdx {
        stop
    }

    /// Down-direction station at a stop.
    pub fn down_station(&self, stop: usize) -> StationIdx {
        let n = self.topology.stations_per_direction;
        n + (n - 1 - stop)
    }

    /// Physical stop of a directional station.
    pub fn stop_of_station(&self, s: StationIdx) -> usize {
        let n = self.topology.stations_per_direction;
        if s < n {
            s
        } else {
            n - 1 - (s - n)
        }
    }

    /// Segments as (from_station, to_station), up direction first.
    pub fn segments(&self) -> Vec<(StationIdx, StationIdx)> {
        let n = self.topology.stations_per_direction;
        let mut out = Vec::with_capacity(2 * (n - 1));
        for s in 0..n - 1 {
            out.push((s, s + 1));
        }
        for s in n..2 * n - 1 {
            out.push((s, s + 1));
        }
        out
    }

    pub fn segment_count(&self) -> usize {
        2 * (self.topology.stations_per_direction - 1)
    }

    /// Segment index of a travel hop, if it exists.
    pub fn segment_of(&self, from: StationIdx, to: StationIdx) -> Option<SegmentIdx> {
        let n = self.topology.stations_per_direction;
        if to != from + 1 {
            return None;
        }
        if from + 1 < n {
            Some(from)
        } else if from >= n && to < 2 * n {
            Some((n - 1) + (from - n))
        } else {
            None
        }
    }

    /// Stop gap traversed by a segment (indexes `dynamics.segment_km`).
    pub fn gap_of_segment(&self, q: SegmentIdx) -> usize {
        let n = self.topology.stations_per_direction;
        if q < n - 1 {
            q
        } else {
            // down segment from station n+j to n+j+1 crosses the gap between
            // stops n-1-j and n-2-j
            let j = q - (n - 1);
            n - 2 - j
        }
    }

    /// Travel time of a segment at a departure interval.
    pub fn segment_time(&self, q: SegmentIdx, t: usize) -> u32 {
        let gap = self.gap_of_segment(q);
        match &self.dynamics.segment_travel_time {
            Some(profiles) => profiles[gap].at(t),
            None => self.default_segment_time(gap),
        }
    }

    pub fn segment_time_min(&self, q: SegmentIdx) -> u32 {
        let gap = self.gap_of_segment(q);
        match &self.dynamics.segment_travel_time {
            Some(profiles) => profiles[gap].min_value(),
            None => self.default_segment_time(gap),
        }
    }

    fn default_segment_time(&self, gap: usize) -> u32 {
        let minutes = self.dynamics.segment_km[gap] / self.dynamics.speed_kmh * 60.0;
        ((minutes / self.discretization.delta_minutes).ceil() as u32).max(1)
    }

    /// Traction consumption of a segment in SoC grid steps, rounded up.
    pub fn segment_soc_steps(&self, q: SegmentIdx) -> u32 {
        let gap = self.gap_of_segment(q);
        let kwh = self.dynamics.segment_km[gap] * self.dynamics.consumption_kwh_per_km;
        let pct = kwh / self.dynamics.battery_kwh * 100.0;
        (pct / self.discretization.soc_step_pct as f64).ceil() as u32
    }

    /// Money cost of one SoC grid step of charging.
    pub fn electricity_per_step(&self) -> f64 {
        self.discretization.soc_step_pct as f64 / 100.0
            * self.dynamics.battery_kwh
            * self.dynamics.costs.electricity_per_kwh
    }

    /// Charging gain per interval in grid steps: rounded down, floored at one
    /// step so a post is never useless.
    fn charge_gain_steps(&self, kw: f64) -> u32 {
        let kwh = kw * self.discretization.delta_minutes / 60.0;
        let pct = kwh / self.dynamics.battery_kwh * 100.0;
        let steps = (pct / self.discretization.soc_step_pct as f64).floor() as u32;
        steps.max(1)
    }

    /// All charging facilities: depots first, then fast candidates.
    pub fn facilities(&self) -> Vec<Facility> {
        let mut out = Vec::new();
        for (i, dep) in self.topology.depots.iter().enumerate() {
            out.push(Facility {
                kind: FacilityKind::Depot(i),
                name: dep.name.clone(),
                anchors: vec![self.up_station(dep.stop), self.down_station(dep.stop)],
                connect_time: dep.connect_time,
                disconnect_time: dep.disconnect_time,
                gain_steps: self.charge_gain_steps(self.dynamics.depot_charge_kw),
            });
        }
        for (i, fc) in self.topology.fast_candidates.iter().enumerate() {
            out.push(Facility {
                kind: FacilityKind::Fast(i),
                name: fc.name.clone(),
                anchors: vec![self.up_station(fc.stop), self.down_station(fc.stop)],
                connect_time: fc.connect_time,
                disconnect_time: fc.disconnect_time,
                gain_steps: self.charge_gain_steps(self.dynamics.fast_charge_kw),
            });
        }
        out
    }

    /// Station the depot dispatches onto (start of a direction).
    pub fn dispatch_station(&self, depot: &Depot) -> StationIdx {
        if depot.stop == 0 {
            self.up_station(0)
        } else {
            self.down_station(depot.stop)
        }
    }

    /// Station from which units enter the depot (end of a direction).
    pub fn return_station(&self, depot: &Depot) -> StationIdx {
        if depot.stop == 0 {
            self.down_station(0)
        } else {
            self.up_station(depot.stop)
        }
    }

    /// Opposite-direction counterpart of a station at the same stop.
    pub fn opposite_station(&self, s: StationIdx) -> StationIdx {
        let n = self.topology.stations_per_direction;
        let stop = self.stop_of_station(s);
        if s < n {
            self.down_station(stop)
        } else {
            self.up_station(stop)
        }
    }

    /// Terminal stations: the last station of each direction.
    pub fn terminal_stations(&self) -> [StationIdx; 2] {
        let n = self.topology.stations_per_direction;
        [n - 1, 2 * n - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, SynthParams};

    #[test]
    fn table_style_instance_has_61_levels() {
        let inst = synth::generate(&SynthParams {
            soc_step_pct: 1,
            soc_min_pct: 20,
            soc_max_pct: 80,
            ..SynthParams::tiny(1)
        });
        assert_eq!(inst.discretization.soc_levels(), 61);
        assert!(validate_instance(&inst).is_ok());
    }

    #[test]
    fn fractional_budget_is_rejected() {
        let inst = synth::generate(&SynthParams::tiny(2));
        let mut text = instance_to_json(&inst);
        // budgets serialize as a per-index list of integers
        text = text.replacen("\"budget_time\": [", "\"budget_time\": [1.5, ", 1);
        // drop one entry to keep the count right
        let idx = text.find("\"budget_time\"").unwrap();
        let end = text[idx..].find(']').unwrap() + idx;
        let last_comma = text[..end].rfind(',').unwrap();
        text.replace_range(last_comma..end, "");
        match load_instance_str(&text) {
            Err(InstanceError::Parse(msg)) => assert!(msg.contains("integer"), "{msg}"),
            other => panic!("expected integrality error, got {other:?}"),
        }
    }

    #[test]
    fn missing_fast_candidates_defaults_to_depots_only() {
        let mut params = SynthParams::tiny(3);
        params.fast_count = 0;
        let inst = synth::generate(&params);
        assert!(inst.topology.fast_candidates.is_empty());
        let fac = inst.facilities();
        assert_eq!(fac.len(), inst.topology.depots.len());
        assert!(fac.iter().all(|f| !f.is_fast()));
    }

    #[test]
    fn validation_catches_grid_and_demand_errors() {
        let mut inst = synth::generate(&SynthParams::tiny(4));
        inst.discretization.soc_step_pct = 7;
        inst.demand.nominal.data[0] = -2.0;
        let report = validate_instance(&inst);
        assert!(report
            .violations
            .iter()
            .any(|v| v.contains("not divisible")));
        assert!(report.violations.iter().any(|v| v.contains("negative")));
    }

    #[test]
    fn well_formed_instance_passes() {
        let inst = synth::generate(&SynthParams::small(5));
        assert!(validate_instance(&inst).is_ok());
    }

    #[test]
    fn realization_examples() {
        let inst = synth::generate(&SynthParams::tiny(6));
        let q = inst.segment_count();
        let t = inst.discretization.horizon;
        let zero = Matrix::zeros(q, t);
        assert_eq!(demand_realization(&inst, &zero).unwrap(), inst.demand.nominal);

        let ones = Matrix::filled(q, t, 1.0);
        let full = demand_realization(&inst, &ones).unwrap();
        for i in 0..full.data.len() {
            let want = inst.demand.nominal.data[i] + inst.demand.deviation.data[i];
            assert!((full.data[i] - want).abs() < 1e-12);
        }

        let mut inst2 = inst.clone();
        inst2.demand.nominal = Matrix::filled(q, t, 10.0);
        inst2.demand.deviation = Matrix::filled(q, t, 4.0);
        let half = demand_realization(&inst2, &Matrix::filled(q, t, 0.5)).unwrap();
        assert!(half.data.iter().all(|&x| (x - 12.0).abs() < 1e-12));
    }

    #[test]
    fn geometry_round_trips() {
        let inst = synth::generate(&SynthParams::small(7));
        let n = inst.topology.stations_per_direction;
        for stop in 0..n {
            assert_eq!(inst.stop_of_station(inst.up_station(stop)), stop);
            assert_eq!(inst.stop_of_station(inst.down_station(stop)), stop);
            assert_eq!(
                inst.opposite_station(inst.up_station(stop)),
                inst.down_station(stop)
            );
        }
        for (q, (a, b)) in inst.segments().iter().enumerate() {
            assert_eq!(inst.segment_of(*a, *b), Some(q));
            // both directions of one gap share the same distance
            let gap = inst.gap_of_segment(q);
            assert!(gap < n - 1);
        }
        // terminal wrap is not a segment
        assert_eq!(inst.segment_of(n - 1, n), None);
    }

    #[test]
    fn json_round_trip_preserves_instance() {
        for seed in 0..5u64 {
            let inst = synth::generate(&SynthParams::small(seed));
            let text = instance_to_json(&inst);
            let back = load_instance_str(&text).expect("round trip load");
            assert_eq!(inst, back);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let inst = synth::generate(&SynthParams::tiny(8));
        let text = instance_to_json(&inst).replacen(
            "\"battery_kwh\"",
            "\"battery_mystery\": 1, \"battery_kwh\"",
            1,
        );
        assert!(matches!(
            load_instance_str(&text),
            Err(InstanceError::Parse(_))
        ));
    }
}
