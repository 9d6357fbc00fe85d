//! Static policies: the constructed average policy, static revenue and its
//! gradient, the optimal static policy by projected gradient ascent, and the
//! fluid heuristic with its load sweep.

use crate::error::{domain, Error, Result};
use crate::loss_core::{erlang_b, FullStationary};
use crate::model::{DynamicPolicy, Instance, StaticPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const DEFAULT_STARTS: usize = 5;
pub const DEFAULT_TOL: f64 = 1e-10;
/// Starts further apart than this signal a non-unique optimum.
pub const UNIQUENESS_LIMIT: f64 = 1e-4;
pub const ARMIJO: f64 = 1e-4;
pub const SHRINK: f64 = 0.5;
const MAX_ITER: usize = 200_000;
const START_SEED: u64 = 0x5eed;

/// Static revenue (sum_j r_j(l_j)) (1 - B_C(rho)) with rho = sum_j l_j/mu_j.
pub fn static_revenue(instance: &Instance, policy: &StaticPolicy) -> Result<f64> {
    policy.check_instance(instance)?;
    Ok(revenue_and_gradient(instance, &policy.rates).0)
}

/// Static revenue and its analytic gradient.
pub fn revenue_and_gradient(instance: &Instance, rates: &[f64]) -> (f64, Vec<f64>) {
    let c = instance.c;
    let mut total_r = 0.0;
    let mut rho = 0.0;
    for (l, k) in rates.iter().zip(&instance.classes) {
        total_r += k.demand.r(*l);
        rho += l / k.mu;
    }
    let b_prev = erlang_b(c - 1, rho);
    let b = rho * b_prev / (c as f64 + rho * b_prev);
    let sl = 1.0 - b;
    // d(1 - B_C)/d rho = -B_C (C/rho - 1 + B_C), with B_C/rho = B_{C-1}/(C + rho B_{C-1})
    let b_over_rho = b_prev / (c as f64 + rho * b_prev);
    let dsl = -(c as f64 * b_over_rho - b + b * b);
    let grad = rates
        .iter()
        .zip(&instance.classes)
        .map(|(l, k)| k.demand.dr(*l) * sl + total_r * dsl / k.mu)
        .collect();
    (total_r * sl, grad)
}

/// Availability-weighted average of a dynamic policy's rates.
pub fn constructed_static(instance: &Instance, policy: &DynamicPolicy, stationary: &FullStationary) -> Result<StaticPolicy> {
    policy.check_instance(instance)?;
    let c = instance.c;
    let m = instance.m();
    let mut num = vec![0.0; m];
    let mut avail = 0.0;
    for (idx, p) in stationary.probs.iter().enumerate() {
        if policy.space.occupancy(idx) < c {
            avail += p;
            for (j, nj) in num.iter_mut().enumerate() {
                *nj += policy.rate(idx, j) * p;
            }
        }
    }
    if avail <= 0.0 {
        return Err(Error::Degenerate("full-state probability is 1".into()));
    }
    Ok(StaticPolicy::new(num.into_iter().map(|v| v / avail).collect()))
}

/// Aggregated single-class rates of a multi-class chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reduction {
    /// Mean total arrival rate given occupancy k, k = 0..C-1.
    pub lambda_hat_k: Vec<f64>,
    /// Mean per-unit departure rate given occupancy k, k = 1..C.
    pub mu_hat_k: Vec<f64>,
    /// Sum of the constructed static rates.
    pub lambda_hat: f64,
    /// lambda_hat / sum_j (constructed rate_j / mu_j).
    pub mu_hat: f64,
}

/// Single-class birth-death rates reproducing the occupancy of a
/// multi-class policy, together with the static-policy aggregates.
pub fn one_class_reduction(instance: &Instance, policy: &DynamicPolicy, stationary: &FullStationary) -> Result<Reduction> {
    let c = instance.c;
    let m = instance.m();
    let mut pk = vec![0.0; c + 1];
    let mut arr = vec![0.0; c + 1];
    let mut dep = vec![0.0; c + 1];
    for (idx, p) in stationary.probs.iter().enumerate() {
        let k = policy.space.occupancy(idx);
        let x = policy.space.state(idx);
        pk[k] += p;
        for j in 0..m {
            if k < c {
                arr[k] += policy.rate(idx, j) * p;
            }
            dep[k] += x[j] as f64 * instance.classes[j].mu * p;
        }
    }
    let safe = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let lambda_hat_k = (0..c).map(|k| safe(arr[k], pk[k])).collect();
    let mu_hat_k = (1..=c).map(|k| safe(dep[k], k as f64 * pk[k])).collect();
    let tilde = constructed_static(instance, policy, stationary)?;
    let lambda_hat: f64 = tilde.rates.iter().sum();
    let load: f64 = tilde.loads(instance).iter().sum();
    Ok(Reduction { lambda_hat_k, mu_hat_k, lambda_hat, mu_hat: safe(lambda_hat, load) })
}

/// L = M (max|r''| + 2 max|r'|/min mu + 3 sum|r|/min mu^2), sup norms on [0, peak].
pub fn lipschitz_bound(instance: &Instance) -> f64 {
    let m = instance.m() as f64;
    let min_mu = instance.classes.iter().map(|k| k.mu).fold(f64::INFINITY, f64::min);
    let (mut r2, mut r1, mut r0) = (0.0f64, 0.0f64, 0.0f64);
    for k in &instance.classes {
        let peak = k.peak_rate();
        // r'' is monotone in the rate for every supported kind; r' and r are monotone on [0, peak]
        r2 = r2.max(k.demand.d2r(0.0).abs()).max(k.demand.d2r(peak).abs());
        r1 = r1.max(k.demand.dr(0.0).abs()).max(k.demand.dr(peak).abs());
        r0 += k.demand.r(0.0).abs().max(k.demand.r(peak).abs());
    }
    m * (r2 + 2.0 * r1 / min_mu + 3.0 * r0 / (min_mu * min_mu))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticSolveReport {
    pub policy: StaticPolicy,
    pub revenue: f64,
    /// Infinity norm of P(x + grad) - x at termination.
    pub grad_norm: f64,
    pub starts_used: usize,
    pub lipschitz_bound: f64,
    /// Per class: rate sits on a bound with the gradient pointing outward.
    pub boundary_active: Vec<bool>,
    /// Largest infinity-norm distance from any start's limit to the best.
    pub max_disagreement: f64,
    pub iterations: usize,
}

struct Ascent {
    x: Vec<f64>,
    f: f64,
    pg: f64,
    iters: usize,
}

fn project(x: &mut [f64], hi: &[f64]) {
    for (v, h) in x.iter_mut().zip(hi) {
        *v = v.clamp(0.0, *h);
    }
}

fn projected_gap(x: &[f64], g: &[f64], hi: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(hi)
        .map(|((xi, gi), h)| ((xi + gi).clamp(0.0, *h) - xi).abs())
        .fold(0.0, f64::max)
}

/// Spectral projected gradient ascent with monotone Armijo backtracking.
fn ascend(instance: &Instance, x0: &[f64], hi: &[f64], step0: f64, tol: f64) -> Ascent {
    let mut x = x0.to_vec();
    project(&mut x, hi);
    let (mut f, mut g) = revenue_and_gradient(instance, &x);
    let mut t = step0;
    let (t_min, t_max) = (1e-30, 1e30);
    for it in 0..MAX_ITER {
        let pg = projected_gap(&x, &g, hi);
        if pg <= tol {
            return Ascent { x, f, pg, iters: it };
        }
        let mut trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + t * gi).collect();
        project(&mut trial, hi);
        let d: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let gd: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        let mut s = 1.0;
        let (xn, fnew, gn) = loop {
            let xn: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + s * di).collect();
            let (fv, gv) = revenue_and_gradient(instance, &xn);
            if fv >= f + ARMIJO * s * gd || s < 1e-20 {
                break (xn, fv, gv);
            }
            s *= SHRINK;
        };
        let sv: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let ss: f64 = sv.iter().map(|v| v * v).sum();
        if ss == 0.0 && t < t_max {
            // the step is below the resolution of x: enlarge it
            t = (t * 1e4).min(t_max);
            continue;
        }
        if fnew < f || ss == 0.0 {
            return Ascent { x, f, pg, iters: it };
        }
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = sv.iter().zip(&yv).map(|(a, b)| a * b).sum();
        t = if sy < 0.0 { (ss / -sy).clamp(t_min, t_max) } else { t_max };
        x = xn;
        f = fnew;
        g = gn;
    }
    let pg = projected_gap(&x, &g, hi);
    Ascent { x, f, pg, iters: MAX_ITER }
}

/// Start points: centre, low and high interior corners, the supplied hint,
/// then seeded uniform draws from the box.
fn start_points(hi: &[f64], starts: usize, hint: Option<&[f64]>) -> Vec<Vec<f64>> {
    let mut pts: Vec<Vec<f64>> = vec![
        hi.iter().map(|h| 0.5 * h).collect(),
        hi.iter().map(|h| 0.1 * h).collect(),
        hi.iter().map(|h| 0.9 * h).collect(),
    ];
    if let Some(h) = hint {
        pts.push(h.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(START_SEED);
    while pts.len() < starts {
        pts.push(hi.iter().map(|h| rng.random::<f64>() * h).collect());
    }
    pts.truncate(starts.max(1));
    pts
}

/// Optimal static policy by multi-start projected gradient ascent.
pub fn optimal_static(instance: &Instance, tol: f64, starts: usize) -> Result<StaticSolveReport> {
    optimal_static_from(instance, tol, starts, None)
}

/// As `optimal_static`, with an optional extra start (e.g. the constructed policy).
pub fn optimal_static_from(instance: &Instance, tol: f64, starts: usize, hint: Option<&StaticPolicy>) -> Result<StaticSolveReport> {
    instance.require_regular()?;
    if let Some(h) = hint {
        h.check_instance(instance)?;
    }
    let hi = instance.peak_rates();
    let lip = lipschitz_bound(instance);
    let step0 = if lip.is_finite() && lip > 0.0 { 1.0 / lip } else { 1.0 };
    let runs: Vec<Ascent> = start_points(&hi, starts, hint.map(|p| p.rates.as_slice()))
        .iter()
        .map(|x0| {
            let run = ascend(instance, x0, &hi, step0, tol);
            log::debug!("start {:?} -> {:?} f={} pg={:e} it={}", x0, run.x, run.f, run.pg, run.iters);
            run
        })
        .collect();
    let best = runs
        .iter()
        .enumerate()
        .fold(0, |b, (i, r)| {
            // revenue ties within rounding go to the smaller projected gradient
            let tie = (r.f - runs[b].f).abs() <= 1e-12 * runs[b].f.abs().max(1e-300);
            if (tie && r.pg < runs[b].pg) || (!tie && r.f > runs[b].f) {
                i
            } else {
                b
            }
        });
    let disagreement = runs
        .iter()
        .map(|r| r.x.iter().zip(&runs[best].x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    if disagreement > UNIQUENESS_LIMIT {
        return Err(Error::Uniqueness { disagreement, limit: UNIQUENESS_LIMIT });
    }
    let b = &runs[best];
    let (_, g) = revenue_and_gradient(instance, &b.x);
    let boundary_active = b
        .x
        .iter()
        .zip(&g)
        .zip(&hi)
        .map(|((x, gi), h)| (*x <= 1e-12 * h.max(1.0) && *gi <= 0.0) || (*x >= h * (1.0 - 1e-12) && *gi >= 0.0))
        .collect();
    Ok(StaticSolveReport {
        policy: StaticPolicy::new(b.x.clone()),
        revenue: b.f,
        grad_norm: b.pg,
        starts_used: runs.len(),
        lipschitz_bound: lip,
        boundary_active,
        max_disagreement: disagreement,
        iterations: runs.iter().map(|r| r.iters).sum(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidSolution {
    pub policy: StaticPolicy,
    pub theta: f64,
    /// theta * (delta - load): zero at a KKT point.
    pub slackness_residual: f64,
    pub load: f64,
}

pub const FLUID_DEFAULT_GRID: usize = 100;
const FLUID_BISECTIONS: usize = 200;

fn fluid_rates(instance: &Instance, theta: f64) -> Vec<f64> {
    instance.classes.iter().map(|k| k.demand.marginal_inverse(theta / k.mu)).collect()
}

fn fluid_load(instance: &Instance, rates: &[f64]) -> f64 {
    rates.iter().zip(&instance.classes).map(|(l, k)| l / k.mu).sum()
}

/// Maximizes sum_j r_j(l_j) subject to sum_j l_j/mu_j <= delta over the box.
pub fn fluid_heuristic(instance: &Instance, delta: f64) -> Result<FluidSolution> {
    if !(delta >= 0.0) {
        return domain(format!("load budget must be nonnegative, got {delta}"));
    }
    let m = instance.m();
    if delta == 0.0 {
        return Ok(FluidSolution { policy: StaticPolicy::new(vec![0.0; m]), theta: 0.0, slackness_residual: 0.0, load: 0.0 });
    }
    let free = fluid_rates(instance, 0.0);
    let free_load = fluid_load(instance, &free);
    if free_load <= delta {
        return Ok(FluidSolution { policy: StaticPolicy::new(free), theta: 0.0, slackness_residual: 0.0, load: free_load });
    }
    let (mut lo, mut hi) = (
        0.0,
        instance
            .classes
            .iter()
            .map(|k| k.mu * k.demand.dr(1e-12 * k.demand.max_rate()))
            .fold(0.0, f64::max)
            * 2.0,
    );
    for _ in 0..FLUID_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if fluid_load(instance, &fluid_rates(instance, mid)) > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // fill the budget between the two bracketing solutions (covers flat r')
    let r_hi = fluid_rates(instance, hi);
    let r_lo = fluid_rates(instance, lo);
    let (l_hi, l_lo) = (fluid_load(instance, &r_hi), fluid_load(instance, &r_lo));
    let w = if l_lo > l_hi { ((delta - l_hi) / (l_lo - l_hi)).clamp(0.0, 1.0) } else { 0.0 };
    let rates: Vec<f64> = r_hi.iter().zip(&r_lo).map(|(a, b)| a + w * (b - a)).collect();
    let load = fluid_load(instance, &rates);
    Ok(FluidSolution {
        policy: StaticPolicy::new(rates),
        theta: hi,
        slackness_residual: hi * (delta - load),
        load,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FluidSweep {
    pub best_policy: StaticPolicy,
    pub best_revenue: f64,
    pub delta_star: f64,
    /// (delta, static revenue) over the grid.
    pub curve: Vec<(f64, f64)>,
}

/// Evaluates the fluid policy's static revenue on an inclusive grid over [0, 3C].
pub fn fluid_sweep(instance: &Instance, grid_points: usize) -> Result<FluidSweep> {
    if grid_points < 2 {
        return domain("fluid sweep needs at least 2 grid points");
    }
    let top = 3.0 * instance.c as f64;
    let mut best: Option<(StaticPolicy, f64, f64)> = None;
    let mut curve = Vec::with_capacity(grid_points);
    for k in 0..grid_points {
        let delta = top * k as f64 / (grid_points - 1) as f64;
        let sol = fluid_heuristic(instance, delta)?;
        let rev = static_revenue(instance, &sol.policy)?;
        curve.push((delta, rev));
        if best.as_ref().is_none_or(|b| rev > b.1) {
            best = Some((sol.policy, rev, delta));
        }
    }
    let (best_policy, best_revenue, delta_star) = best.expect("grid is nonempty");
    Ok(FluidSweep { best_policy, best_revenue, delta_star, curve })
}
