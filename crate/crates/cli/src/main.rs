use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use reuse_pricing::certifier::{certify, mhr_guarantee};
use reuse_pricing::config::{instance_config_json, load_instance, InstanceConfig};
use reuse_pricing::dynamic_solver::{solve_dynamic, stationary_of_policy};
use reuse_pricing::experiments::{self, TableDemand};
use reuse_pricing::model::Policy;
use reuse_pricing::simulator::{compare_policies, simulate, ServiceSpec};
use reuse_pricing::static_solver::{
    constructed_static, fluid_heuristic, fluid_sweep, optimal_static, static_revenue, DEFAULT_STARTS, FLUID_DEFAULT_GRID,
};
use serde::Serialize;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "reuse-pricing", version, about = "Dynamic and static pricing of reusable resources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Output directory for artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct WithConfig {
    /// Instance configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Solver tolerance; overrides the config value.
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum PolicyChoice {
    Dynamic,
    Constructed,
    Static,
    Fluid,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ServiceChoice {
    Exponential,
    Deterministic,
    Lognormal,
    Hyperexp,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum DemandChoice {
    Linear,
    Exponential,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal dynamic policy of an instance.
    SolveDynamic(WithConfig),
    /// Optimal static policy; with --delta also the fluid policy at that load budget.
    SolveStatic {
        #[command(flatten)]
        cfg: WithConfig,
        #[arg(long)]
        delta: Option<f64>,
    },
    /// Dynamic optimum, constructed static policy, optimal static policy and their ratios.
    Ratio(WithConfig),
    /// MHR certificate for one capacity, or the overall bound with --all.
    Certify {
        #[arg(long = "C", required_unless_present = "all")]
        c: Option<usize>,
        #[arg(long, default_value_t = 500)]
        grid: usize,
        /// Certify every C in 3..=47 and combine with the tail.
        #[arg(long)]
        all: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Simulates a policy, optionally against the optimal dynamic policy on common random numbers.
    Simulate {
        #[command(flatten)]
        cfg: WithConfig,
        #[arg(long, value_enum, default_value = "dynamic")]
        policy: PolicyChoice,
        #[arg(long, value_enum, default_value = "exponential")]
        service: ServiceChoice,
        /// Coefficient of variation for lognormal and hyperexponential service.
        #[arg(long, default_value_t = 2.0)]
        cv: f64,
        /// Load budget for --policy fluid.
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long, default_value_t = 1e5)]
        horizon: f64,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Also simulate the optimal dynamic policy and report the paired ratio.
        #[arg(long)]
        compare: bool,
    },
    /// CSV of G(C) and the certified case values per C.
    TableGuarantees {
        #[arg(long = "Cmax", default_value_t = 47)]
        c_max: usize,
        /// Box grid size; 0 skips the box column.
        #[arg(long, default_value_t = 500)]
        grid: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Fluid heuristic versus the optimal static policy on random instances.
    TableFluid {
        #[arg(long = "M", default_value_t = 5)]
        m: usize,
        #[arg(long = "C", default_value_t = 5)]
        c: usize,
        #[arg(long, default_value_t = 50)]
        instances: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "linear")]
        demand: DemandChoice,
        #[command(flatten)]
        common: Common,
    },
    /// Reproduces the two-class example.
    ReproExample1 {
        /// Replications of the paired simulation; 0 skips it.
        #[arg(long, default_value_t = 0)]
        reps: usize,
        #[arg(long, default_value_t = 1e6)]
        horizon: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
}

fn write_artifact(dir: &Path, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {}", path.display());
    Ok(path)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    write_artifact(dir, name, &(text + "\n"))?;
    Ok(())
}

fn load(cfg: &WithConfig) -> anyhow::Result<(InstanceConfig, f64)> {
    let loaded = load_instance(&cfg.config).with_context(|| format!("loading {}", cfg.config.display()))?;
    let tol = cfg.tol.unwrap_or(loaded.tolerances.tol);
    if !(tol > 0.0) {
        bail!("--tol must be positive");
    }
    log::info!("config {}: {}", cfg.config.display(), instance_config_json(&loaded));
    log::info!("tol = {tol:e}, max_iter = {}", loaded.tolerances.max_iter);
    Ok((loaded, tol))
}

fn service_specs(inst: &reuse_pricing::model::Instance, choice: ServiceChoice, cv: f64) -> Vec<ServiceSpec> {
    inst.classes
        .iter()
        .map(|k| {
            let mean = 1.0 / k.mu;
            match choice {
                ServiceChoice::Exponential => ServiceSpec::Exponential { mean },
                ServiceChoice::Deterministic => ServiceSpec::Deterministic { mean },
                ServiceChoice::Lognormal => ServiceSpec::LogNormal { mean, cv },
                ServiceChoice::Hyperexp => ServiceSpec::HyperExponential { mean, cv },
            }
        })
        .collect()
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::SolveDynamic(cfg) => {
            let (loaded, tol) = load(&cfg)?;
            let rep = solve_dynamic(&loaded.instance, tol, loaded.tolerances.max_iter)?;
            println!("revenue {:.10} (span {:e}, {} iterations)", rep.revenue, rep.span_residual, rep.iterations);
            write_json(&cfg.common.out, "solve_dynamic.json", &json!({"instance": instance_config_json(&loaded), "report": rep}))?;
        }
        Command::SolveStatic { cfg, delta } => {
            let (loaded, tol) = load(&cfg)?;
            let inst = &loaded.instance;
            let opt = optimal_static(inst, tol.min(reuse_pricing::static_solver::DEFAULT_TOL), DEFAULT_STARTS)?;
            println!("optimal static revenue {:.10} rates {:?}", opt.revenue, opt.policy.rates);
            let fluid = match delta {
                Some(d) => {
                    let sol = fluid_heuristic(inst, d)?;
                    let rev = static_revenue(inst, &sol.policy)?;
                    println!("fluid(delta={d}) revenue {rev:.10} rates {:?}", sol.policy.rates);
                    Some(json!({"delta": d, "solution": sol, "revenue": rev}))
                }
                None => None,
            };
            let sweep = fluid_sweep(inst, FLUID_DEFAULT_GRID)?;
            write_json(
                &cfg.common.out,
                "solve_static.json",
                &json!({"instance": instance_config_json(&loaded), "optimal": opt, "fluid": fluid, "fluid_sweep": sweep}),
            )?;
        }
        Command::Ratio(cfg) => {
            let (loaded, tol) = load(&cfg)?;
            let rep = experiments::ratio_report(&loaded.instance, tol, loaded.tolerances.max_iter)?;
            println!(
                "R* {:.10}  R~ {:.10}  Rsta {:.10}  ratio~ {:.6}  ratio_sta {:.6}  G(C) {:.6}",
                rep.dynamic.revenue,
                rep.constructed_revenue,
                rep.optimal_static.revenue,
                rep.ratio_constructed,
                rep.ratio_static,
                rep.guarantee_g
            );
            write_json(&cfg.common.out, "ratio.json", &json!({"instance": instance_config_json(&loaded), "report": rep}))?;
        }
        Command::Certify { c, grid, all, common } => {
            log::info!("certify C={c:?} grid={grid} all={all}");
            if all {
                let g = mhr_guarantee(grid)?;
                println!("overall {:.6} at C={} (grid {})", g.overall, g.argmin_c, grid);
                write_json(&common.out, "mhr_guarantee.json", &g)?;
            } else {
                let Some(c) = c else { bail!("certify needs --C or --all") };
                let cert = certify(c, grid)?;
                println!("C={} bound {:.6} ({:?})", cert.c, cert.lower_bound, cert.method);
                write_json(&common.out, &format!("certificate_C{c}.json"), &cert)?;
            }
        }
        Command::Simulate { cfg, policy, service, cv, delta, horizon, reps, seed, compare } => {
            let (loaded, tol) = load(&cfg)?;
            let inst = &loaded.instance;
            let seed = seed.or(loaded.seed).unwrap_or(1);
            log::info!("seed = {seed}, horizon = {horizon}, reps = {reps}, policy = {policy:?}, service = {service:?}");
            let needs_dynamic = compare || matches!(policy, PolicyChoice::Dynamic | PolicyChoice::Constructed);
            let dynamic = if needs_dynamic { Some(solve_dynamic(inst, tol, loaded.tolerances.max_iter)?) } else { None };
            let chosen = match policy {
                PolicyChoice::Dynamic => Policy::Dynamic(dynamic.as_ref().expect("solved").policy.clone()),
                PolicyChoice::Constructed => {
                    let d = &dynamic.as_ref().expect("solved").policy;
                    Policy::Static(constructed_static(inst, d, &stationary_of_policy(inst, d)?)?)
                }
                PolicyChoice::Static => Policy::Static(optimal_static(inst, reuse_pricing::static_solver::DEFAULT_TOL, DEFAULT_STARTS)?.policy),
                PolicyChoice::Fluid => {
                    let Some(d) = delta else { bail!("--policy fluid needs --delta") };
                    Policy::Static(fluid_heuristic(inst, d)?.policy)
                }
            };
            let specs = service_specs(inst, service, cv);
            if compare {
                let base = Policy::Dynamic(dynamic.expect("solved").policy);
                let cmp = compare_policies(inst, &[base, chosen], &specs, horizon, reps, seed)?;
                println!(
                    "revenue {:.6} +/- {:.6}; ratio to dynamic {:.6} +/- {:.6}",
                    cmp.estimates[1].revenue_rate.mean,
                    cmp.estimates[1].revenue_rate.half_width,
                    cmp.ratios[1].mean,
                    cmp.ratios[1].half_width
                );
                write_json(&cfg.common.out, "simulate.json", &json!({"seed": seed, "service": specs, "comparison": cmp}))?;
            } else {
                let est = simulate(inst, &chosen, &specs, horizon, reps, seed)?;
                println!(
                    "revenue {:.6} +/- {:.6}; blocking {:.6} +/- {:.6}",
                    est.revenue_rate.mean, est.revenue_rate.half_width, est.blocking.mean, est.blocking.half_width
                );
                write_json(&cfg.common.out, "simulate.json", &json!({"seed": seed, "service": specs, "estimate": est}))?;
            }
        }
        Command::TableGuarantees { c_max, grid, common } => {
            log::info!("table-guarantees Cmax={c_max} grid={grid}");
            let rows = experiments::table_guarantees(c_max, (grid > 0).then_some(grid))?;
            let path = write_artifact(&common.out, "guarantees.csv", &experiments::guarantees_csv(&rows)?)?;
            println!("{} rows -> {}", rows.len(), path.display());
        }
        Command::TableFluid { m, c, instances, seed, demand, common } => {
            let kind = match demand {
                DemandChoice::Linear => TableDemand::Linear,
                DemandChoice::Exponential => TableDemand::Exponential,
            };
            log::info!("table-fluid M={m} C={c} instances={instances} seed={seed} demand={}", kind.name());
            let tab = experiments::table_fluid(m, c, instances, seed, kind)?;
            write_artifact(&common.out, "table_fluid.csv", &tab.to_csv()?)?;
            let summary = json!({
                "M": m, "C": c, "instances": instances, "seed": seed, "demand_kind": kind,
                "ratio_deltaC": tab.delta_c, "ratio_bestDelta": tab.best_delta, "ratio_optimal": tab.optimal,
            });
            write_json(&common.out, "table_fluid_summary.json", &summary)?;
            println!(
                "delta=C worst {:.4} avg {:.4}; best delta worst {:.4} avg {:.4}",
                tab.delta_c.worst, tab.delta_c.average, tab.best_delta.worst, tab.best_delta.average
            );
        }
        Command::ReproExample1 { reps, horizon, seed, common } => {
            log::info!("repro-example1 reps={reps} horizon={horizon} seed={seed}");
            let rep = experiments::repro_example1()?;
            println!(
                "R* {:.6} (reference {}), ratio~ {:.5}, ratio_sta {:.5} (reference {})",
                rep.revenue, rep.reference_revenue, rep.ratio_constructed, rep.ratio_static, rep.reference_ratio
            );
            let sim = if reps > 0 {
                let inst = experiments::example1_instance()?;
                let specs = service_specs(&inst, ServiceChoice::Exponential, 1.0);
                let policies = [Policy::Dynamic(rep.report.dynamic.policy.clone()), Policy::Static(rep.report.constructed.clone())];
                let cmp = compare_policies(&inst, &policies, &specs, horizon, reps, seed)?;
                println!("simulated ratio {:.5} +/- {:.5}", cmp.ratios[1].mean, cmp.ratios[1].half_width);
                Some(json!({"seed": seed, "horizon": horizon, "reps": reps, "ratio": cmp.ratios[1]}))
            } else {
                None
            };
            write_json(&common.out, "example1.json", &json!({"report": rep, "simulation": sim}))?;
        }
    }
    Ok(())
}

fn init_threads() {
    if let Ok(v) = std::env::var("REPL_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    log::warn!("could not set thread count: {e}");
                }
                log::info!("REPL_THREADS = {n}");
            }
            _ => log::warn!("ignoring REPL_THREADS={v:?}"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    init_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
