//! Experiment drivers: the fluid-heuristic table, the guarantee table and
//! the two-class example reproduction.

use crate::certifier::{certify_c, closed_form_case1, closed_form_case2, MAX_C, MIN_C};
use crate::dynamic_solver::{solve_dynamic, stationary_of_policy, SolveReport};
use crate::error::{domain, Error, Result};
use crate::loss_core::guarantee;
use crate::model::{CustomerClass, Instance, StaticPolicy};
use crate::static_solver::{
    constructed_static, fluid_heuristic, fluid_sweep, optimal_static, optimal_static_from, static_revenue,
    StaticSolveReport, DEFAULT_STARTS, FLUID_DEFAULT_GRID,
};
use crate::Demand;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub const STATIC_TOL: f64 = 1e-10;

pub const FLUID_HEADER: [&str; 8] =
    ["M", "C", "seed", "instance", "demand_kind", "ratio_deltaC", "ratio_bestDelta", "ratio_optimal"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TableDemand {
    Linear,
    Exponential,
}

impl std::str::FromStr for TableDemand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(TableDemand::Linear),
            "exponential" => Ok(TableDemand::Exponential),
            other => domain(format!("unknown demand kind {other:?} (expected linear or exponential)")),
        }
    }
}

impl TableDemand {
    pub fn name(&self) -> &'static str {
        match self {
            TableDemand::Linear => "linear",
            TableDemand::Exponential => "exponential",
        }
    }
}

/// One instance of the fluid table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentRow {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "C")]
    pub c: usize,
    pub seed: u64,
    pub instance: usize,
    pub demand_kind: TableDemand,
    /// Fluid policy at load budget C over the optimal static revenue.
    #[serde(rename = "ratio_deltaC")]
    pub ratio_delta_c: f64,
    /// Best fluid policy over the budget grid over the optimal static revenue.
    #[serde(rename = "ratio_bestDelta")]
    pub ratio_best_delta: f64,
    /// Optimal static revenue over the optimal dynamic revenue.
    pub ratio_optimal: f64,
    pub static_revenue: f64,
    pub dynamic_revenue: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WorstAvg {
    pub worst: f64,
    pub average: f64,
}

impl WorstAvg {
    fn of(xs: impl Iterator<Item = f64>) -> WorstAvg {
        let v: Vec<f64> = xs.collect();
        WorstAvg { worst: v.iter().cloned().fold(f64::INFINITY, f64::min), average: v.iter().sum::<f64>() / v.len() as f64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidTable {
    pub rows: Vec<ExperimentRow>,
    pub delta_c: WorstAvg,
    pub best_delta: WorstAvg,
    pub optimal: WorstAvg,
    /// Largest amount by which the best fluid revenue exceeds the optimal static one.
    pub max_fluid_excess: f64,
}

impl FluidTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Internal(e.to_string());
        w.write_record(FLUID_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.m.to_string(),
                r.c.to_string(),
                r.seed.to_string(),
                r.instance.to_string(),
                r.demand_kind.name().to_string(),
                r.ratio_delta_c.to_string(),
                r.ratio_best_delta.to_string(),
                r.ratio_optimal.to_string(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
    }
}

/// Random instance number `index` of the table: a ~ U[0.1, 5], b ~ U[0.5, 10],
/// mu ~ U[0.02, 20] per class, on ChaCha8 stream `index` of `seed`.
pub fn random_table_instance(m: usize, c: usize, seed: u64, index: usize, kind: TableDemand) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let classes = (0..m)
        .map(|_| {
            let a = rng.random_range(0.1..=5.0);
            let b = rng.random_range(0.5..=10.0);
            let mu = rng.random_range(0.02..=20.0);
            let d = match kind {
                TableDemand::Linear => Demand::linear(a, b)?,
                TableDemand::Exponential => Demand::exponential(a, b)?,
            };
            CustomerClass::new(mu, d)
        })
        .collect::<Result<Vec<_>>>()?;
    Instance::new(c, classes)
}

fn fluid_row(m: usize, c: usize, seed: u64, index: usize, kind: TableDemand) -> Result<ExperimentRow> {
    let inst = random_table_instance(m, c, seed, index, kind)?;
    let opt = optimal_static(&inst, STATIC_TOL, DEFAULT_STARTS)?;
    let dyn_rep = solve_dynamic(&inst, crate::dynamic_solver::DEFAULT_TOL, crate::dynamic_solver::DEFAULT_MAX_ITER)?;
    let at_c = static_revenue(&inst, &fluid_heuristic(&inst, c as f64)?.policy)?;
    let sweep = fluid_sweep(&inst, FLUID_DEFAULT_GRID)?;
    Ok(ExperimentRow {
        m,
        c,
        seed,
        instance: index,
        demand_kind: kind,
        ratio_delta_c: at_c / opt.revenue,
        ratio_best_delta: sweep.best_revenue / opt.revenue,
        ratio_optimal: opt.revenue / dyn_rep.revenue,
        static_revenue: opt.revenue,
        dynamic_revenue: dyn_rep.revenue,
    })
}

/// Fluid heuristic against the optimal static policy on seeded random instances.
pub fn table_fluid(m: usize, c: usize, instances: usize, seed: u64, kind: TableDemand) -> Result<FluidTable> {
    if instances == 0 {
        return domain("table_fluid needs at least one instance");
    }
    let rows = (0..instances)
        .into_par_iter()
        .map(|i| fluid_row(m, c, seed, i, kind))
        .collect::<Result<Vec<_>>>()?;
    let max_fluid_excess = rows
        .iter()
        .map(|r| (r.ratio_best_delta - 1.0) * r.static_revenue)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(FluidTable {
        delta_c: WorstAvg::of(rows.iter().map(|r| r.ratio_delta_c)),
        best_delta: WorstAvg::of(rows.iter().map(|r| r.ratio_best_delta)),
        optimal: WorstAvg::of(rows.iter().map(|r| r.ratio_optimal)),
        max_fluid_excess,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GuaranteeRow {
    #[serde(rename = "C")]
    pub c: usize,
    pub g: f64,
    pub case1: Option<f64>,
    pub case2: Option<f64>,
    #[serde(rename = "box")]
    pub box_bound: Option<f64>,
    /// Min of the three certified values (MHR bound for this C).
    pub mhr: Option<f64>,
}

pub const GUARANTEE_HEADER: [&str; 6] = ["C", "G", "case1", "case2", "box", "mhr"];

/// G(C) together with the three certified MHR values for C = 1..=c_max.
/// The box column is computed only when `grid` is given.
pub fn table_guarantees(c_max: usize, grid: Option<usize>) -> Result<Vec<GuaranteeRow>> {
    if c_max == 0 {
        return domain("Cmax must be at least 1");
    }
    (1..=c_max)
        .map(|c| {
            let g = guarantee(c)?.float;
            if !(MIN_C..=MAX_C).contains(&c) {
                return Ok(GuaranteeRow { c, g, case1: None, case2: None, box_bound: None, mhr: None });
            }
            let case1 = closed_form_case1::<f64>(c)?;
            let case2 = closed_form_case2::<f64>(c)?;
            let (box_bound, mhr) = match grid {
                Some(n) => {
                    let cert = certify_c(c, n)?;
                    (cert.cases.map(|k| k.box_bound), Some(cert.lower_bound))
                }
                None => (None, Some(case1.min(case2))),
            };
            Ok(GuaranteeRow { c, g, case1: Some(case1), case2: Some(case2), box_bound, mhr })
        })
        .collect()
}

pub fn guarantees_csv(rows: &[GuaranteeRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Internal(e.to_string());
    w.write_record(GUARANTEE_HEADER).map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rows {
        w.write_record([r.c.to_string(), r.g.to_string(), opt(r.case1), opt(r.case2), opt(r.box_bound), opt(r.mhr)])
            .map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
}

/// Dynamic optimum, constructed static policy and optimal static policy.
#[derive(Debug, Clone, Serialize)]
pub struct RatioReport {
    pub dynamic: SolveReport,
    pub constructed: StaticPolicy,
    pub constructed_revenue: f64,
    pub optimal_static: StaticSolveReport,
    /// R(constructed) / R*.
    pub ratio_constructed: f64,
    /// R(optimal static) / R*.
    pub ratio_static: f64,
    pub guarantee_g: f64,
    pub stationary_residual: f64,
}

pub fn ratio_report(instance: &Instance, tol: f64, max_iter: usize) -> Result<RatioReport> {
    let dynamic = solve_dynamic(instance, tol, max_iter)?;
    let st = stationary_of_policy(instance, &dynamic.policy)?;
    let constructed = constructed_static(instance, &dynamic.policy, &st)?;
    let constructed_revenue = static_revenue(instance, &constructed)?;
    let optimal_static = optimal_static_from(instance, STATIC_TOL, DEFAULT_STARTS, Some(&constructed))?;
    Ok(RatioReport {
        ratio_constructed: constructed_revenue / dynamic.revenue,
        ratio_static: optimal_static.revenue / dynamic.revenue,
        guarantee_g: guarantee(instance.c)?.float,
        stationary_residual: st.balance_residual,
        dynamic,
        constructed,
        constructed_revenue,
        optimal_static,
    })
}

/// Two classes on three units: a slow, high-value class (p = 180 - 0.05 l,
/// mu = 0.001) and a fast, low-value class (p = 11 - 50 l, mu = 1000).
pub fn example1_instance() -> Result<Instance> {
    Instance::new(
        3,
        vec![
            CustomerClass::new(0.001, Demand::linear(0.05, 180.0)?)?,
            CustomerClass::new(1000.0, Demand::linear(50.0, 11.0)?)?,
        ],
    )
}

/// Published reference values for the two-class example.
pub const EXAMPLE1_REVENUE: f64 = 0.96436;
pub const EXAMPLE1_RATIO: f64 = 0.7899;
pub const EXAMPLE1_LAMBDA1_EMPTY: f64 = 2.68162;
pub const EXAMPLE1_CONSTRUCTED: [f64; 2] = [0.00199, 0.10999];

#[derive(Debug, Clone, Serialize)]
pub struct Example1Report {
    pub revenue: f64,
    pub reference_revenue: f64,
    /// Class-1 rate in the empty state and in state (2, 0).
    pub lambda1_empty: f64,
    pub lambda1_20: f64,
    pub constructed: Vec<f64>,
    pub ratio_constructed: f64,
    pub ratio_static: f64,
    pub reference_ratio: f64,
    pub report: RatioReport,
}

pub fn repro_example1() -> Result<Example1Report> {
    let inst = example1_instance()?;
    let report = ratio_report(&inst, crate::dynamic_solver::DEFAULT_TOL, crate::dynamic_solver::DEFAULT_MAX_ITER)?;
    let space = &report.dynamic.policy.space;
    let at = |x: &[u16]| space.index_of(x).ok_or_else(|| Error::Internal(format!("state {x:?} missing")));
    let lambda1_empty = report.dynamic.policy.rate(at(&[0, 0])?, 0);
    let lambda1_20 = report.dynamic.policy.rate(at(&[2, 0])?, 0);
    Ok(Example1Report {
        revenue: report.dynamic.revenue,
        reference_revenue: EXAMPLE1_REVENUE,
        lambda1_empty,
        lambda1_20,
        constructed: report.constructed.rates.clone(),
        ratio_constructed: report.ratio_constructed,
        ratio_static: report.ratio_static,
        reference_ratio: EXAMPLE1_RATIO,
        report,
    })
}
