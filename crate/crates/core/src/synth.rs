//! Seeded synthetic instance generator.
//!
//! Produces bidirectional lines with depots at both ends, optional fast
//! charging candidates at interior stops, peaked demand profiles and a
//! sparse deviation support so worst-case enumeration stays tractable on
//! the small presets.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::instance::{
    CostParams, Depot, DemandModel, Discretization, Dynamics, FastCandidate, Instance,
    LineTopology, Matrix, Weights,
};

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub seed: u64,
    pub stations_per_direction: usize,
    pub horizon: usize,
    pub soc_step_pct: u32,
    pub soc_min_pct: u32,
    pub soc_max_pct: u32,
    pub fast_count: usize,
    pub depot_posts: u32,
    pub fast_max_posts: u32,
    /// Mean nominal arrivals in the peak cell.
    pub demand_peak: f64,
    /// Deviation as a fraction of the nominal in supported cells.
    pub deviation_ratio: f64,
    /// Number of (segment, interval) cells that carry deviation.
    pub deviation_support: usize,
    pub budget_time: u32,
    pub budget_space: u32,
    pub unit_capacity: f64,
    pub max_composition: u32,
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    /// Stop gap length range in km.
    pub gap_km: (f64, f64),
    pub battery_kwh: f64,
    pub consumption_kwh_per_km: f64,
    pub speed_kmh: f64,
    pub fast_charge_kw: f64,
    pub depot_charge_kw: f64,
    pub unit_purchase: f64,
    pub operating_per_interval: f64,
    pub fixed_charge: f64,
    pub electricity_per_kwh: f64,
}

impl SynthParams {
    /// Smallest family: 2 stops per direction, short horizon, a handful of
    /// SoC levels and a tiny deviation support, sized for exhaustive
    /// worst-case and path enumeration.
    pub fn tiny(seed: u64) -> Self {
        SynthParams {
            seed,
            stations_per_direction: 2,
            horizon: 10,
            soc_step_pct: 20,
            soc_min_pct: 20,
            soc_max_pct: 80,
            fast_count: 0,
            depot_posts: 2,
            fast_max_posts: 2,
            demand_peak: 20.0,
            deviation_ratio: 0.6,
            deviation_support: 4,
            budget_time: 1,
            budget_space: 1,
            unit_capacity: 16.0,
            max_composition: 3,
            theta1: 0.1,
            theta2: 1.0,
            theta3: 10.0,
            gap_km: (1.0, 1.6),
            battery_kwh: 90.0,
            consumption_kwh_per_km: 9.0,
            speed_kmh: 30.0,
            fast_charge_kw: 600.0,
            depot_charge_kw: 600.0,
            unit_purchase: 40.0,
            operating_per_interval: 1.0,
            fixed_charge: 2.0,
            electricity_per_kwh: 0.14,
        }
    }

    /// Mid-single-digit stops, a fast candidate, moderate horizon.
    pub fn small(seed: u64) -> Self {
        SynthParams {
            stations_per_direction: 5,
            horizon: 30,
            soc_step_pct: 10,
            fast_count: 1,
            deviation_support: 8,
            budget_time: 2,
            budget_space: 2,
            demand_peak: 30.0,
            consumption_kwh_per_km: 4.5,
            unit_purchase: 60.0,
            ..SynthParams::tiny(seed)
        }
    }

    /// The 34-station, 90-interval shape used by the larger experiments.
    pub fn mid(seed: u64) -> Self {
        SynthParams {
            stations_per_direction: 17,
            horizon: 90,
            soc_step_pct: 5,
            soc_min_pct: 20,
            soc_max_pct: 80,
            fast_count: 2,
            depot_posts: 10,
            fast_max_posts: 2,
            demand_peak: 40.0,
            deviation_ratio: 0.5,
            deviation_support: 40,
            budget_time: 2,
            budget_space: 3,
            unit_capacity: 16.0,
            max_composition: 5,
            gap_km: (0.7, 1.4),
            consumption_kwh_per_km: 2.5,
            speed_kmh: 30.0,
            unit_purchase: 500.0,
            operating_per_interval: 2.0,
            ..SynthParams::tiny(seed)
        }
    }
}

/// Deterministically generate an instance from the parameters.
pub fn generate(params: &SynthParams) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let n = params.stations_per_direction;
    let horizon = params.horizon;
    let seg_count = 2 * (n - 1);

    let depots = vec![
        Depot {
            name: "west".into(),
            stop: 0,
            posts: params.depot_posts,
            connect_time: 1,
            disconnect_time: 1,
        },
        Depot {
            name: "east".into(),
            stop: n - 1,
            posts: params.depot_posts,
            connect_time: 1,
            disconnect_time: 1,
        },
    ];

    // spread fast candidates across interior stops
    let mut fast_candidates = Vec::new();
    if params.fast_count > 0 && n > 2 {
        let interior = n - 2;
        let count = params.fast_count.min(interior);
        for i in 0..count {
            let stop = 1 + (interior * (2 * i + 1)) / (2 * count);
            let stop = stop.min(n - 2).max(1);
            if fast_candidates.iter().any(|f: &FastCandidate| f.stop == stop) {
                continue;
            }
            fast_candidates.push(FastCandidate {
                name: format!("fast{}", i + 1),
                stop,
                max_posts: params.fast_max_posts,
                post_cost: 200.0,
                turn_time: 1,
                connect_time: 1,
                disconnect_time: 1,
                turn_soc_steps: 0,
            });
        }
    }

    let segment_km: Vec<f64> = (0..n - 1)
        .map(|_| {
            let (lo, hi) = params.gap_km;
            round2(rng.gen_range(lo..hi))
        })
        .collect();

    // peaked nominal demand: a time peak around one third of the horizon and
    // a space peak toward the middle of the line, both directions
    let t_peak = horizon as f64 / 3.0;
    let t_width = (horizon as f64 / 4.0).max(1.5);
    let mut nominal = Matrix::zeros(seg_count, horizon);
    for q in 0..seg_count {
        let gap = if q < n - 1 { q } else { q - (n - 1) };
        let x = (gap as f64 + 0.5) / (n - 1) as f64; // 0..1 along the line
        let space_shape = 0.35 + 0.65 * (std::f64::consts::PI * x).sin();
        let dir_scale = if q < n - 1 { 1.0 } else { 0.8 };
        for t in 0..horizon {
            let dt = (t as f64 - t_peak) / t_width;
            let time_shape = (-0.5 * dt * dt).exp();
            let noise = rng.gen_range(0.85..1.15);
            let v = params.demand_peak * space_shape * time_shape * dir_scale * noise;
            nominal.set(q, t, (v * 2.0).round() / 2.0);
        }
    }

    // deviation on a sparse support of the highest-demand cells
    let mut cells: Vec<(usize, usize)> = (0..seg_count)
        .flat_map(|q| (0..horizon).map(move |t| (q, t)))
        .collect();
    cells.sort_by(|&(q1, t1), &(q2, t2)| {
        nominal
            .get(q2, t2)
            .partial_cmp(&nominal.get(q1, t1))
            .unwrap()
            .then(q1.cmp(&q2))
            .then(t1.cmp(&t2))
    });
    let mut deviation = Matrix::zeros(seg_count, horizon);
    for &(q, t) in cells.iter().take(params.deviation_support) {
        let v = nominal.get(q, t) * params.deviation_ratio;
        deviation.set(q, t, (v * 2.0).round().max(1.0) / 2.0);
    }

    Instance {
        topology: LineTopology {
            stations_per_direction: n,
            depots,
            fast_candidates,
        },
        discretization: Discretization {
            horizon,
            delta_minutes: 1.0,
            soc_step_pct: params.soc_step_pct,
            soc_min_pct: params.soc_min_pct,
            soc_max_pct: params.soc_max_pct,
            soc_full_pct: None,
        },
        dynamics: Dynamics {
            battery_kwh: params.battery_kwh,
            consumption_kwh_per_km: params.consumption_kwh_per_km,
            idle_kwh_per_min: 0.042,
            speed_kmh: params.speed_kmh,
            segment_km,
            segment_travel_time: None,
            fast_charge_kw: params.fast_charge_kw,
            depot_charge_kw: params.depot_charge_kw,
            costs: CostParams {
                unit_purchase: params.unit_purchase,
                operating_per_interval: params.operating_per_interval,
                fixed_charge: params.fixed_charge,
                electricity_per_kwh: params.electricity_per_kwh,
            },
        },
        demand: DemandModel {
            nominal,
            deviation,
            budget_time: vec![params.budget_time; seg_count],
            budget_space: vec![params.budget_space; horizon],
        },
        weights: Weights {
            theta1: params.theta1,
            theta2: params.theta2,
            theta3: params.theta3,
            unit_capacity: params.unit_capacity,
            max_composition: params.max_composition,
            unit_multiplicity: 1,
        },
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::validate_instance;

    #[test]
    fn presets_validate() {
        for seed in 0..3 {
            assert!(validate_instance(&generate(&SynthParams::tiny(seed))).is_ok());
            assert!(validate_instance(&generate(&SynthParams::small(seed))).is_ok());
        }
        assert!(validate_instance(&generate(&SynthParams::mid(0))).is_ok());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate(&SynthParams::small(42));
        let b = generate(&SynthParams::small(42));
        assert_eq!(a, b);
        let c = generate(&SynthParams::small(43));
        assert_ne!(a, c);
    }

    #[test]
    fn deviation_support_is_sparse() {
        let params = SynthParams::tiny(9);
        let inst = generate(&params);
        let nz = inst.demand.deviation.data.iter().filter(|&&v| v > 0.0).count();
        assert!(nz <= params.deviation_support);
        assert!(nz > 0);
    }
}
