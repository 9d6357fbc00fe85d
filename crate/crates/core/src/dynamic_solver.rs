//! Average-reward optimal dynamic pricing on the full state space.
//!
//! The default method is policy iteration: each policy is evaluated exactly
//! with a dense LU solve of the gain/bias equations and improved greedily;
//! the loop stops once the span of the Bellman residual T(h) is within
//! tolerance. Larger spaces fall back to relative value iteration on the
//! uniformized chain, stopping on the same span criterion.

use crate::error::{Error, Result};
use crate::loss_core::{enumerate_states, FullStationary, StateSpace};
use crate::model::{DynamicPolicy, Instance};
use crate::Demand;
use nalgebra::{DMatrix, DVector};
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};
use std::collections::VecDeque;
use std::sync::Arc;

/// Largest state space evaluated by dense policy iteration.
pub const PI_DENSE_LIMIT: usize = 1200;
/// Largest reachable set solved directly in `stationary_of_policy`.
pub const STATIONARY_DENSE_LIMIT: usize = 2000;
/// Target residual of the iterative stationary solver.
pub const STATIONARY_TOL: f64 = 1e-12;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

const TERNARY_REL_WIDTH: f64 = 1e-10;
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Auto,
    PolicyIteration,
    RelativeValueIteration,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    /// Bound on span(T h) in revenue-rate units.
    pub tol: f64,
    pub max_iter: usize,
    pub method: Method,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, method: Method::Auto }
    }
}

impl Serialize for DynamicPolicy {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let states: Vec<Vec<u16>> = (0..self.space.len()).map(|i| self.space.state(i).to_vec()).collect();
        let mut st = s.serialize_struct("DynamicPolicy", 4)?;
        st.serialize_field("C", &self.space.capacity())?;
        st.serialize_field("M", &self.space.classes())?;
        st.serialize_field("states", &states)?;
        st.serialize_field("rates", &self.by_state())?;
        st.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KktReport {
    /// Max violation of the first-order conditions over j = 0..C-1.
    pub residual: f64,
    /// Set when some rate sits at 0 or at the peak rate.
    pub boundary: bool,
    /// gamma_j = -p'(l_j).
    pub gamma: Vec<f64>,
    /// w_j = l_j / mu.
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub policy: DynamicPolicy,
    /// Optimal long-run revenue rate (midpoint of the final gain bracket).
    pub revenue: f64,
    /// [min T h, max T h]; the optimal gain lies inside.
    pub gain_bounds: (f64, f64),
    pub span_residual: f64,
    pub iterations: usize,
    pub method: Method,
    /// Relative values with h(empty state) = 0.
    pub bias: Vec<f64>,
    pub kkt: Option<KktReport>,
}

/// Maximizes r(l) + l * delta over [0, peak]; smallest maximizer on ties.
pub fn best_rate(curve: &Demand, peak: f64, delta: f64) -> f64 {
    if curve.is_quadratic() {
        return curve.marginal_inverse(-delta);
    }
    let f = |l: f64| curve.r(l) + l * delta;
    let (mut a, mut b) = (0.0, peak);
    let width = TERNARY_REL_WIDTH * peak.max(1.0);
    while b - a > width {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if f(m1) < f(m2) {
            a = m1;
        } else {
            b = m2;
        }
    }
    let mut best = 0.0;
    let mut fbest = f(0.0);
    for cand in [0.5 * (a + b), peak] {
        let v = f(cand);
        if v > fbest + TIE_TOL * fbest.abs().max(1.0) {
            best = cand;
            fbest = v;
        }
    }
    best
}

struct Mdp<'a> {
    inst: &'a Instance,
    space: Arc<StateSpace>,
    up: Vec<usize>,
    down: Vec<usize>,
    peaks: Vec<f64>,
    m: usize,
}

impl<'a> Mdp<'a> {
    fn new(inst: &'a Instance) -> Result<Self> {
        let space = Arc::new(enumerate_states(inst.c, inst.m())?);
        let (up, down) = space.neighbour_tables();
        Ok(Mdp { inst, peaks: inst.peak_rates(), m: inst.m(), space, up, down })
    }

    fn n(&self) -> usize {
        self.space.len()
    }

    fn initial_rates(&self) -> Vec<f64> {
        let mut rates = vec![0.0; self.n() * self.m];
        for idx in 0..self.n() {
            for j in 0..self.m {
                if self.up[idx * self.m + j] != usize::MAX {
                    rates[idx * self.m + j] = self.peaks[j];
                }
            }
        }
        rates
    }

    /// Computes T h and the greedy rates; returns (min, max) of T h.
    fn bellman(&self, h: &[f64], rates: &mut [f64], th: &mut [f64]) -> (f64, f64) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for idx in 0..self.n() {
            let x = self.space.state(idx);
            let mut val = 0.0;
            for j in 0..self.m {
                let k = &self.inst.classes[j];
                let u = self.up[idx * self.m + j];
                if u != usize::MAX {
                    let delta = h[u] - h[idx];
                    let l = best_rate(&k.demand, self.peaks[j], delta);
                    rates[idx * self.m + j] = l;
                    val += k.demand.r(l) + l * delta;
                }
                let d = self.down[idx * self.m + j];
                if d != usize::MAX {
                    val += x[j] as f64 * k.mu * (h[d] - h[idx]);
                }
            }
            th[idx] = val;
            lo = lo.min(val);
            hi = hi.max(val);
        }
        (lo, hi)
    }

    /// Solves r + Q h = g 1 with h(0) = 0 for a fixed policy.
    fn evaluate(&self, rates: &[f64]) -> Result<(f64, Vec<f64>)> {
        let n = self.n();
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut rhs = DVector::<f64>::zeros(n);
        // column 0 carries g; column i >= 1 carries h(i)
        for idx in 0..n {
            let x = self.space.state(idx);
            a[(idx, 0)] = -1.0;
            let mut out = 0.0;
            let mut reward = 0.0;
            for j in 0..self.m {
                let k = &self.inst.classes[j];
                let u = self.up[idx * self.m + j];
                if u != usize::MAX {
                    let l = rates[idx * self.m + j];
                    reward += k.demand.r(l);
                    if u != 0 {
                        a[(idx, u)] += l;
                    }
                    out += l;
                }
                let d = self.down[idx * self.m + j];
                if d != usize::MAX {
                    let q = x[j] as f64 * k.mu;
                    if d != 0 {
                        a[(idx, d)] += q;
                    }
                    out += q;
                }
            }
            if idx != 0 {
                a[(idx, idx)] -= out;
            }
            rhs[idx] = -reward;
        }
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Internal("singular policy-evaluation system".into()))?;
        let g = sol[0];
        let mut h = sol.as_slice().to_vec();
        h[0] = 0.0;
        Ok((g, h))
    }

    fn report(&self, rates: Vec<f64>, bounds: (f64, f64), iterations: usize, method: Method, bias: Vec<f64>) -> Result<SolveReport> {
        let policy = DynamicPolicy::new(self.space.clone(), rates)?;
        let mut report = SolveReport {
            policy,
            revenue: 0.5 * (bounds.0 + bounds.1),
            gain_bounds: bounds,
            span_residual: bounds.1 - bounds.0,
            iterations,
            method,
            bias,
            kkt: None,
        };
        if self.m == 1 {
            report.kkt = Some(kkt_residual_1class(self.inst, &report)?);
        }
        Ok(report)
    }

    fn policy_iteration(&self, opts: &SolveOptions) -> Result<SolveReport> {
        let n = self.n();
        let mut rates = self.initial_rates();
        let mut next = rates.clone();
        let mut th = vec![0.0; n];
        let mut best_span = f64::INFINITY;
        let mut stalls = 0;
        for it in 1..=opts.max_iter {
            let (_, h) = self.evaluate(&rates)?;
            let bounds = self.bellman(&h, &mut next, &mut th);
            let span = bounds.1 - bounds.0;
            log::debug!("policy iteration {it}: gain in [{:.12}, {:.12}]", bounds.0, bounds.1);
            if span <= opts.tol {
                return self.report(next, bounds, it, Method::PolicyIteration, h);
            }
            if span < 0.5 * best_span {
                best_span = span;
                stalls = 0;
            } else {
                stalls += 1;
                if stalls >= 5 {
                    return Err(Error::Convergence { iterations: it, last_span: span });
                }
            }
            std::mem::swap(&mut rates, &mut next);
        }
        Err(Error::Convergence { iterations: opts.max_iter, last_span: best_span })
    }

    fn value_iteration(&self, opts: &SolveOptions) -> Result<SolveReport> {
        let n = self.n();
        let u = self.inst.uniformization_rate();
        let mut v = vec![0.0; n];
        let mut rates = self.initial_rates();
        let mut th = vec![0.0; n];
        let mut span = f64::INFINITY;
        for it in 1..=opts.max_iter {
            let bounds = self.bellman(&v, &mut rates, &mut th);
            span = bounds.1 - bounds.0;
            if span <= opts.tol {
                return self.report(rates, bounds, it, Method::RelativeValueIteration, v);
            }
            let shift = v[0] + th[0] / u;
            for (vi, ti) in v.iter_mut().zip(&th) {
                *vi += ti / u - shift;
            }
        }
        Err(Error::Convergence { iterations: opts.max_iter, last_span: span })
    }
}

/// Optimal dynamic policy with default method selection.
pub fn solve_dynamic(instance: &Instance, tol: f64, max_iter: usize) -> Result<SolveReport> {
    solve_dynamic_with(instance, &SolveOptions { tol, max_iter, method: Method::Auto })
}

pub fn solve_dynamic_with(instance: &Instance, opts: &SolveOptions) -> Result<SolveReport> {
    instance.require_regular()?;
    let mdp = Mdp::new(instance)?;
    let method = match opts.method {
        Method::Auto if mdp.n() <= PI_DENSE_LIMIT => Method::PolicyIteration,
        Method::Auto => Method::RelativeValueIteration,
        m => m,
    };
    match method {
        Method::PolicyIteration => mdp.policy_iteration(opts),
        _ => mdp.value_iteration(opts),
    }
}

/// Stationary distribution of the CTMC induced by a dynamic policy,
/// restricted to the states reachable from the empty state.
pub fn stationary_of_policy(instance: &Instance, policy: &DynamicPolicy) -> Result<FullStationary> {
    policy.check_instance(instance)?;
    let space = policy.space.clone();
    let m = instance.m();
    let n = space.len();
    let (up, down) = space.neighbour_tables();
    let mus: Vec<f64> = instance.classes.iter().map(|k| k.mu).collect();

    // outgoing transitions (target, rate) per state
    let transitions = |idx: usize| -> Vec<(usize, f64)> {
        let x = space.state(idx);
        let mut out = Vec::with_capacity(2 * m);
        for j in 0..m {
            let u = up[idx * m + j];
            if u != usize::MAX && policy.rate(idx, j) > 0.0 {
                out.push((u, policy.rate(idx, j)));
            }
            let d = down[idx * m + j];
            if d != usize::MAX {
                out.push((d, x[j] as f64 * mus[j]));
            }
        }
        out
    };

    let mut local = vec![usize::MAX; n];
    let mut order = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    local[0] = 0;
    order.push(0);
    while let Some(s) = queue.pop_front() {
        for (t, _) in transitions(s) {
            if local[t] == usize::MAX {
                local[t] = order.len();
                order.push(t);
                queue.push_back(t);
            }
        }
    }
    let nr = order.len();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nr];
    let mut outflow = vec![0.0; nr];
    for (li, &s) in order.iter().enumerate() {
        for (t, q) in transitions(s) {
            incoming[local[t]].push((li, q));
            outflow[li] += q;
        }
    }

    let pi_local = if nr <= STATIONARY_DENSE_LIMIT {
        let mut a = DMatrix::<f64>::zeros(nr, nr);
        for (li, inc) in incoming.iter().enumerate() {
            for &(from, q) in inc {
                a[(li, from)] += q;
            }
            a[(li, li)] -= outflow[li];
        }
        let mut rhs = DVector::<f64>::zeros(nr);
        for col in 0..nr {
            a[(nr - 1, col)] = 1.0;
        }
        rhs[nr - 1] = 1.0;
        let sol = a
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Internal("singular balance system".into()))?;
        sol.iter().map(|p| p.max(0.0)).collect::<Vec<_>>()
    } else {
        gauss_seidel(&incoming, &outflow)?
    };
    let total: f64 = pi_local.iter().sum();
    let mut probs = vec![0.0; n];
    for (li, &s) in order.iter().enumerate() {
        probs[s] = pi_local[li] / total;
    }
    let mut residual: f64 = 0.0;
    for (li, &s) in order.iter().enumerate() {
        let inflow: f64 = incoming[li].iter().map(|&(f, q)| probs[order[f]] * q).sum();
        residual = residual.max((inflow - probs[s] * outflow[li]).abs());
    }
    Ok(FullStationary { space, probs, balance_residual: residual, restricted: nr < n })
}

fn gauss_seidel(incoming: &[Vec<(usize, f64)>], outflow: &[f64]) -> Result<Vec<f64>> {
    let nr = outflow.len();
    let mut pi = vec![1.0 / nr as f64; nr];
    for sweep in 0..1_000_000usize {
        for li in 0..nr {
            if outflow[li] > 0.0 {
                let inflow: f64 = incoming[li].iter().map(|&(f, q)| pi[f] * q).sum();
                pi[li] = inflow / outflow[li];
            }
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total);
        if sweep % 10 == 9 {
            let mut res: f64 = 0.0;
            for li in 0..nr {
                let inflow: f64 = incoming[li].iter().map(|&(f, q)| pi[f] * q).sum();
                res = res.max((inflow - pi[li] * outflow[li]).abs());
            }
            if res <= STATIONARY_TOL {
                return Ok(pi);
            }
        }
    }
    Err(Error::Convergence { iterations: 1_000_000, last_span: f64::NAN })
}

/// Long-run revenue rate sum_x sum_j r_j(l_x^j) P_x.
pub fn revenue_of_policy(instance: &Instance, policy: &DynamicPolicy, stationary: &FullStationary) -> Result<f64> {
    policy.check_instance(instance)?;
    if stationary.probs.len() != policy.space.len() {
        return Err(Error::Dimension("stationary distribution and policy differ in size".into()));
    }
    let c = instance.c;
    let mut total = 0.0;
    for (idx, p) in stationary.probs.iter().enumerate() {
        if *p == 0.0 || policy.space.occupancy(idx) >= c {
            continue;
        }
        for (j, k) in instance.classes.iter().enumerate() {
            total += k.demand.r(policy.rate(idx, j)) * p;
        }
    }
    Ok(total)
}

/// First-order residual for a solved single-class policy.
pub fn kkt_residual_1class(instance: &Instance, report: &SolveReport) -> Result<KktReport> {
    if instance.m() != 1 {
        return Err(Error::Dimension("first-order check needs a single class".into()));
    }
    let class = &instance.classes[0];
    let (mu, c) = (class.mu, instance.c);
    let peak = class.peak_rate();
    let rates: Vec<f64> = (0..c).map(|i| report.policy.rate(i, 0)).collect();
    let gamma: Vec<f64> = rates.iter().map(|&l| -class.demand.price_prime(l)).collect();
    let omega: Vec<f64> = rates.iter().map(|&l| l / mu).collect();
    let boundary = rates.iter().any(|&l| l <= 1e-9 * peak || l >= peak * (1.0 - 1e-9));
    let term = |j: usize| if j < c { gamma[j] * omega[j] * omega[j] } else { 0.0 };
    let mut residual: f64 = 0.0;
    for j in 0..c {
        let lhs = (j + 1) as f64 * (gamma[j] * omega[j] - class.demand.price(rates[j]) / mu);
        let rhs = term(j + 1) - term(0);
        residual = residual.max((lhs - rhs).abs());
    }
    Ok(KktReport { residual, boundary, gamma, omega })
}
