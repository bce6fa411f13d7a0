use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use charge_sched::benchmarks::{
    count_paths_dp, enumerate_paths, run_bd_cg, run_deterministic, solve_arc_exact,
};
use charge_sched::ccg::{
    prepare_network, run_ccg, validate_solution, CcgConfig, NetworkOpts, Procedure, SolveOutcome,
};
use charge_sched::colgen::{path_coefficients, run_column_generation, CgConfig};
use charge_sched::instance::{load_instance, validate_instance, Instance, Matrix};
use charge_sched::pricing::{path_reduced_cost, solve_pricing, DualPrices, LabelAlgo};
use charge_sched::robust::{
    enumerate_scenarios, evaluate_recourse, solve_worst_case, CapacityProfile, WorstCaseConfig,
};
use charge_sched::synth::{self, SynthParams};
use charge_sched::{instance, report};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "charge-sched",
    about = "Robust charging-station siting and unit routing-scheduling on a space-time-SoC network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance with a chosen method and write the report files.
    Solve(SolveArgs),
    /// Run several methods on one instance and tabulate bounds and times.
    Compare(CompareArgs),
    /// Sweep the operator/passenger weight ratio and record fleet size and
    /// passenger costs.
    SweepWeights(SweepArgs),
    /// Solve the single-scenario relaxation under each network-reduction
    /// configuration and compare sizes, values and pricing times.
    AblateDownsizing(AblateArgs),
    /// Generate a synthetic instance file.
    GenInstance(GenArgs),
    /// Run brute-force cross-checks on a small instance.
    Oracle(OracleArgs),
}

#[derive(Args, Clone)]
struct CommonSolve {
    #[arg(long)]
    instance: PathBuf,
    /// Relative optimality gap target.
    #[arg(long, default_value_t = 0.03)]
    gap: f64,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    time_limit: Option<u64>,
    /// Seed stamp recorded in outputs (solves are deterministic).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_soc_bounds: bool,
    #[arg(long)]
    no_time_bounds: bool,
    #[arg(long)]
    no_super_arcs: bool,
    /// Solver backend; only the built-in reference is available.
    #[arg(long, default_value = "reference")]
    backend: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Cap on total units (matched-fleet comparisons).
    #[arg(long)]
    fleet_cap: Option<u32>,
    /// Truncate column generation by the 0.5%/10-iteration rule.
    #[arg(long)]
    truncate_cg: bool,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: CommonSolve,
    /// ccg-aip | ccg-fcp | bd-cg | arc-exact | deterministic
    #[arg(long)]
    method: String,
    /// Deviation scaling for the deterministic method.
    #[arg(long, default_value_t = 0.5)]
    zeta: f64,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonSolve,
    /// Comma-separated method list.
    #[arg(long, default_value = "ccg-aip,ccg-fcp,bd-cg")]
    methods: String,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonSolve,
    /// Ratios theta1/theta2 to sweep.
    #[arg(long, default_value = "0.001,0.01,0.1,1,10")]
    ratios: String,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    common: CommonSolve,
    /// Deviation scaling applied to the demand.
    #[arg(long, default_value_t = 0.5)]
    zeta: f64,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// tiny | small | mid
    #[arg(long, default_value = "small")]
    scale: String,
    #[arg(long)]
    stations: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    fast_count: Option<usize>,
    #[arg(long)]
    soc_step: Option<u32>,
    #[arg(long)]
    deviation_support: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    instance: PathBuf,
    /// Path-count cap for enumeration.
    #[arg(long, default_value_t = 2_000_000)]
    path_cap: usize,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    match Cli::parse().command {
        Command::Solve(args) => cmd_solve(args),
        Command::Compare(args) => cmd_compare(args),
        Command::SweepWeights(args) => cmd_sweep(args),
        Command::AblateDownsizing(args) => cmd_ablate(args),
        Command::GenInstance(args) => cmd_gen(args),
        Command::Oracle(args) => cmd_oracle(args),
    }
}

fn network_opts(c: &CommonSolve) -> NetworkOpts {
    NetworkOpts {
        soc_bounds: !c.no_soc_bounds,
        time_bounds: !c.no_time_bounds,
        super_arcs: !c.no_super_arcs,
    }
}

fn ccg_config(c: &CommonSolve, procedure: Procedure) -> CcgConfig {
    CcgConfig {
        procedure,
        eps: c.gap,
        time_limit: c.time_limit.map(Duration::from_secs),
        network: network_opts(c),
        fleet_cap: c.fleet_cap,
        cg: CgConfig {
            truncation: c.truncate_cg,
            ..CgConfig::default()
        },
        ..CcgConfig::default()
    }
}

fn load_checked(path: &Path, backend: &str) -> Result<Instance> {
    if backend != "reference" {
        bail!("unknown backend '{backend}'; available: reference");
    }
    let inst = load_instance(path).with_context(|| format!("loading {}", path.display()))?;
    let report = validate_instance(&inst);
    if !report.is_ok() {
        bail!("instance invalid: {report}");
    }
    Ok(inst)
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), content).with_context(|| format!("writing {name}"))
}

fn emit_outcome(
    method: &str,
    inst: &Instance,
    outcome: &SolveOutcome,
    common: &CommonSolve,
) -> Result<()> {
    let dir = &common.out;
    write_out(dir, "report.csv", &report::report_csv(method, inst, outcome))?;
    write_out(dir, "timings.csv", &report::timings_csv(outcome))?;
    write_out(dir, "trace.csv", &report::trace_csv(outcome))?;
    write_out(dir, "cg_trace.csv", &report::cg_trace_csv(outcome))?;
    write_out(dir, "scenarios.csv", &report::scenarios_csv(&outcome.scenarios))?;
    write_out(dir, "stations.csv", &report::stations_csv(inst, outcome))?;
    let (net, _) = prepare_network(inst, network_opts(common));
    if !outcome.solution.columns.is_empty() {
        validate_solution(&net, inst, &outcome.solution)
            .map_err(|e| anyhow::anyhow!("emitted schedule failed re-validation: {e}"))?;
    }
    write_out(dir, "schedule.csv", &report::schedule_csv(&net, inst, outcome))?;
    println!(
        "{method}: objective {:.4}, gap {:.4}, fleet {}, status {:?} ({:.2}s)",
        outcome.solution.objective,
        outcome.solution.gap,
        outcome.solution.fleet_units,
        outcome.status,
        outcome.wall_secs
    );
    Ok(())
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let inst = load_checked(&args.common.instance, &args.common.backend)?;
    match args.method.as_str() {
        "ccg-aip" => {
            let outcome = run_ccg(&inst, &ccg_config(&args.common, Procedure::AlwaysInteger));
            emit_outcome("ccg-aip", &inst, &outcome, &args.common)
        }
        "ccg-fcp" => {
            let outcome = run_ccg(&inst, &ccg_config(&args.common, Procedure::FirstContinuous));
            emit_outcome("ccg-fcp", &inst, &outcome, &args.common)
        }
        "bd-cg" => {
            let outcome = run_bd_cg(&inst, &ccg_config(&args.common, Procedure::AlwaysInteger));
            emit_outcome("bd-cg", &inst, &outcome, &args.common)
        }
        "deterministic" => {
            let q = inst.segment_count();
            let t = inst.discretization.horizon;
            let zeta = Matrix::filled(q, t, args.zeta.clamp(0.0, 1.0));
            let outcome = run_deterministic(
                &inst,
                &zeta,
                &ccg_config(&args.common, Procedure::AlwaysInteger),
            );
            emit_outcome("deterministic", &inst, &outcome, &args.common)
        }
        "arc-exact" => {
            let cfg = ccg_config(&args.common, Procedure::AlwaysInteger);
            let res = solve_arc_exact(&inst, &cfg, 100_000)
                .map_err(|e| anyhow::anyhow!("arc-exact unavailable: {e}"))?;
            let dir = &args.common.out;
            let mut s = String::from(
                "method,status,objective,bound,fleet_units,scenarios,raw_nodes,raw_arcs,nodes,arcs\n",
            );
            use std::fmt::Write as _;
            let _ = writeln!(
                s,
                "arc-exact,{:?},{:.6},{:.6},{},{},{},{},{},{}",
                res.status,
                res.objective,
                res.bound,
                res.fleet_units,
                res.scenario_count,
                res.net_stats.raw_nodes,
                res.net_stats.raw_arcs,
                res.net_stats.nodes,
                res.net_stats.arcs
            );
            write_out(dir, "report.csv", &s)?;
            println!(
                "arc-exact: objective {:.4} over {} scenarios ({:.2}s)",
                res.objective, res.scenario_count, res.wall_secs
            );
            Ok(())
        }
        other => bail!("unknown method '{other}'"),
    }
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let inst = load_checked(&args.common.instance, &args.common.backend)?;
    let mut rows = Vec::new();
    for method in args.methods.split(',').map(str::trim) {
        match method {
            "ccg-aip" | "ccg-fcp" => {
                let proc = if method == "ccg-aip" {
                    Procedure::AlwaysInteger
                } else {
                    Procedure::FirstContinuous
                };
                let out = run_ccg(&inst, &ccg_config(&args.common, proc));
                let last = out.trace.last();
                rows.push((
                    method.to_string(),
                    last.map(|r| r.ub).unwrap_or(f64::INFINITY),
                    last.map(|r| r.lb).unwrap_or(f64::NEG_INFINITY),
                    out.solution.gap,
                    out.rounds,
                    out.wall_secs,
                ));
            }
            "bd-cg" => {
                let out = run_bd_cg(&inst, &ccg_config(&args.common, Procedure::AlwaysInteger));
                let last = out.trace.last();
                rows.push((
                    method.to_string(),
                    last.map(|r| r.ub).unwrap_or(f64::INFINITY),
                    last.map(|r| r.lb).unwrap_or(f64::NEG_INFINITY),
                    out.solution.gap,
                    out.rounds,
                    out.wall_secs,
                ));
            }
            "arc-exact" => {
                let cfg = ccg_config(&args.common, Procedure::AlwaysInteger);
                match solve_arc_exact(&inst, &cfg, 100_000) {
                    Ok(res) => rows.push((
                        method.to_string(),
                        res.objective,
                        res.bound,
                        charge_sched::ccg::optimality_gap(res.objective, res.bound),
                        1,
                        res.wall_secs,
                    )),
                    Err(e) => eprintln!("skipping arc-exact: {e}"),
                }
            }
            other => bail!("unknown method '{other}' in --methods"),
        }
    }
    write_out(&args.common.out, "comparison.csv", &report::comparison_csv(&rows))?;
    for (m, ub, lb, gap, rounds, secs) in &rows {
        println!("{m}: ub {ub:.4} lb {lb:.4} gap {gap:.4} rounds {rounds} ({secs:.2}s)");
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let base = load_checked(&args.common.instance, &args.common.backend)?;
    let ratios: Vec<f64> = args
        .ratios
        .split(',')
        .map(|s| s.trim().parse::<f64>().context("parsing --ratios"))
        .collect::<Result<_>>()?;
    let mut csv =
        String::from("ratio,theta1,theta2,theta3,fleet_units,passenger_cost,investment,objective\n");
    use std::fmt::Write as _;
    for &ratio in &ratios {
        let mut inst = base.clone();
        inst.weights.theta1 = ratio * inst.weights.theta2;
        inst.weights.theta3 = 10.0 * inst.weights.theta2;
        let out = run_ccg(&inst, &ccg_config(&args.common, Procedure::AlwaysInteger));
        let _ = writeln!(
            csv,
            "{ratio},{:.6},{:.6},{:.6},{},{:.6},{:.6},{:.6}",
            inst.weights.theta1,
            inst.weights.theta2,
            inst.weights.theta3,
            out.solution.fleet_units,
            out.solution.worst_passenger,
            out.solution.investment,
            out.solution.objective
        );
        println!(
            "ratio {ratio}: fleet {}, passenger cost {:.2}",
            out.solution.fleet_units, out.solution.worst_passenger
        );
    }
    write_out(&args.common.out, "weights.csv", &csv)
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let inst = load_checked(&args.common.instance, &args.common.backend)?;
    let q = inst.segment_count();
    let t = inst.discretization.horizon;
    let zeta = Matrix::filled(q, t, args.zeta.clamp(0.0, 1.0));
    let alpha = instance::demand_realization(&inst, &zeta)
        .map_err(|e| anyhow::anyhow!("realization: {e}"))?;
    let configs: [(&str, NetworkOpts); 4] = [
        (
            "none",
            NetworkOpts {
                soc_bounds: false,
                time_bounds: false,
                super_arcs: false,
            },
        ),
        (
            "bounds",
            NetworkOpts {
                soc_bounds: true,
                time_bounds: true,
                super_arcs: false,
            },
        ),
        (
            "super-arcs",
            NetworkOpts {
                soc_bounds: false,
                time_bounds: false,
                super_arcs: true,
            },
        ),
        ("bounds+super-arcs", NetworkOpts::default()),
    ];
    let mut csv = String::from(
        "config,nodes,arcs,node_reduction_pct,arc_reduction_pct,cg_value,cg_iterations,mean_pricing_secs,pricing_time_reduction_pct\n",
    );
    use std::fmt::Write as _;
    let mut base_counts = None;
    let mut base_time = None;
    for (name, opts) in configs {
        let (net, stats) = prepare_network(&inst, opts);
        let mut pool = Vec::new();
        let cg_cfg = CgConfig {
            truncation: args.common.truncate_cg,
            ..CgConfig::default()
        };
        let cg = run_column_generation(&net, &inst, &[alpha.clone()], &cg_cfg, &mut pool);
        let (b_nodes, b_arcs) = *base_counts.get_or_insert((stats.nodes, stats.arcs));
        let b_time = *base_time.get_or_insert(cg.mean_pricing_secs);
        let node_red = 100.0 * (1.0 - stats.nodes as f64 / b_nodes as f64);
        let arc_red = 100.0 * (1.0 - stats.arcs as f64 / b_arcs as f64);
        let time_red = 100.0 * (1.0 - cg.mean_pricing_secs / b_time.max(1e-12));
        let _ = writeln!(
            csv,
            "{name},{},{},{node_red:.2},{arc_red:.2},{:.6},{},{:.6},{time_red:.2}",
            stats.nodes, stats.arcs, cg.value, cg.iterations, cg.mean_pricing_secs
        );
        println!(
            "{name}: {} nodes, {} arcs, value {:.4}, pricing {:.4}s/call",
            stats.nodes, stats.arcs, cg.value, cg.mean_pricing_secs
        );
    }
    write_out(&args.common.out, "ablate.csv", &csv)
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let mut params = match args.scale.as_str() {
        "tiny" => SynthParams::tiny(args.seed),
        "small" => SynthParams::small(args.seed),
        "mid" => SynthParams::mid(args.seed),
        other => bail!("unknown scale '{other}' (tiny | small | mid)"),
    };
    if let Some(v) = args.stations {
        params.stations_per_direction = v;
    }
    if let Some(v) = args.horizon {
        params.horizon = v;
    }
    if let Some(v) = args.fast_count {
        params.fast_count = v;
    }
    if let Some(v) = args.soc_step {
        params.soc_step_pct = v;
    }
    if let Some(v) = args.deviation_support {
        params.deviation_support = v;
    }
    let inst = synth::generate(&params);
    let report = validate_instance(&inst);
    if !report.is_ok() {
        bail!("generated instance invalid: {report}");
    }
    instance::save_instance(&inst, &args.out)
        .map_err(|e| anyhow::anyhow!("saving instance: {e}"))?;
    println!(
        "wrote {} ({} stations, {} intervals, {} SoC levels)",
        args.out.display(),
        inst.station_count(),
        inst.discretization.horizon,
        inst.discretization.soc_levels()
    );
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let inst = load_checked(&args.instance, "reference")?;
    let (net, _) = prepare_network(&inst, NetworkOpts::default());
    let mut failures = 0;

    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{}: {name}{detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    // path enumeration against the DP count
    match enumerate_paths(&net, args.path_cap) {
        Ok(paths) => {
            let dp = count_paths_dp(&net);
            check(
                "path enumeration matches DP count",
                paths.len() as u128 == dp,
                format!(" ({} paths)", paths.len()),
            );

            // pricing against brute force with random duals
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mut ok = true;
            for _ in 0..5 {
                let mut duals = DualPrices::zeros(
                    &net,
                    1,
                    inst.weights.theta1,
                    inst.weights.effective_capacity(),
                    inst.dynamics.costs.unit_purchase,
                );
                for v in duals.iota.iter_mut() {
                    *v = rng.gen_range(-10.0..10.0);
                }
                for v in duals.pi.iter_mut() {
                    *v = -rng.gen_range(0.0..2.0f64);
                }
                for v in duals.rho.iter_mut() {
                    *v = -rng.gen_range(0.0..2.0f64);
                }
                let best = solve_pricing(&net, &duals, LabelAlgo::TopoOrder);
                for bp in &best {
                    let brute = paths
                        .iter()
                        .filter(|p| {
                            p.source_depot(&net) == bp.source && p.sink_depot(&net) == bp.sink
                        })
                        .map(|p| path_reduced_cost(&net, p, &duals))
                        .fold(f64::INFINITY, f64::min);
                    if (bp.value - brute).abs() > 1e-9 * (1.0 + brute.abs()) {
                        ok = false;
                    }
                }
            }
            check("pricing matches exhaustive path enumeration", ok, String::new());

            // coefficients of enumerated paths survive a round trip
            let mut ok = true;
            for p in paths.iter().take(50) {
                let col = path_coefficients(&net, &inst, p);
                if col.path.nodes != p.nodes {
                    ok = false;
                }
            }
            check("path coefficients are consistent", ok, String::new());
        }
        Err(e) => check("path enumeration", false, format!(" ({e})")),
    }

    // worst case against scenario enumeration at a random capacity profile
    match enumerate_scenarios(&inst, 1_000_000) {
        Ok(all) => {
            let mut rng = ChaCha8Rng::seed_from_u64(2);
            let mut cap = CapacityProfile::zeros(&inst);
            for v in cap.cap.data.iter_mut() {
                *v = rng.gen_range(0.0..2.0 * inst.weights.unit_capacity).floor();
            }
            let wc = solve_worst_case(&cap, &inst, &WorstCaseConfig::default(), 0);
            let brute = all
                .iter()
                .map(|z| evaluate_recourse(&cap, z, &inst))
                .fold(f64::NEG_INFINITY, f64::max);
            check(
                "worst case matches scenario enumeration",
                (wc.value - brute).abs() <= 1e-6 * (1.0 + brute.abs()),
                format!(" ({} scenarios)", all.len()),
            );
        }
        Err(e) => check("scenario enumeration", false, format!(" ({e})")),
    }

    if failures > 0 {
        bail!("{failures} oracle check(s) failed");
    }
    Ok(())
}
