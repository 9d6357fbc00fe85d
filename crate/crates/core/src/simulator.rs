//! Discrete-event simulation of the multi-class loss system under a static
//! or dynamic policy with general service-time distributions.
//!
//! Candidate arrivals of class j form a Poisson stream at a dominating rate
//! D_j >= every rate the policy posts. Each candidate carries a uniform u and
//! the valuation v = p_j(u D_j); it buys iff v is at least the posted price
//! p_j(l_x^j), which happens with probability l_x^j / D_j. Every candidate
//! also carries its own service draw, so two runs with the same seed and the
//! same D share arrival, valuation and service streams.
//!
//! Streams are ChaCha8 generators keyed by (seed, stream id) with stream id
//! `rep << 16 | class << 4 | purpose`.

use crate::error::{domain, Error, Result};
use crate::loss_core::StateSpace;
use crate::model::{DynamicPolicy, Instance, Policy, StaticPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, LogNormal};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

pub const WARMUP_FRACTION: f64 = 0.1;

const PURPOSE_ARRIVAL: u64 = 0;
const PURPOSE_VALUATION: u64 = 1;
const PURPOSE_SERVICE: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ServiceSpec {
    Exponential { mean: f64 },
    Deterministic { mean: f64 },
    /// Log-normal with the given mean and coefficient of variation.
    LogNormal { mean: f64, cv: f64 },
    /// Balanced-means two-phase hyperexponential, cv >= 1.
    HyperExponential { mean: f64, cv: f64 },
}

/// Prepared sampler for one class.
#[derive(Debug, Clone, Copy)]
enum Sampler {
    Exp(Exp<f64>),
    Det(f64),
    LogN(LogNormal<f64>),
    Hyper { p: f64, a: Exp<f64>, b: Exp<f64> },
}

impl Sampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Exp(e) => e.sample(rng),
            Sampler::Det(m) => *m,
            Sampler::LogN(l) => l.sample(rng),
            Sampler::Hyper { p, a, b } => {
                let u: f64 = rng.random();
                if u < *p {
                    a.sample(rng)
                } else {
                    b.sample(rng)
                }
            }
        }
    }
}

impl ServiceSpec {
    pub fn exponential_rate(mu: f64) -> Self {
        ServiceSpec::Exponential { mean: 1.0 / mu }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ServiceSpec::Exponential { mean }
            | ServiceSpec::Deterministic { mean }
            | ServiceSpec::LogNormal { mean, .. }
            | ServiceSpec::HyperExponential { mean, .. } => mean,
        }
    }

    /// `n` i.i.d. draws on a ChaCha8 stream seeded with `seed`.
    pub fn draws(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        let sampler = self.sampler()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n).map(|_| sampler.draw(&mut rng)).collect())
    }

    fn sampler(&self) -> Result<Sampler> {
        let mean = self.mean();
        if !(mean > 0.0 && mean.is_finite()) {
            return domain(format!("service mean must be positive, got {mean}"));
        }
        let bad = |e: rand_distr::ExpError| Error::Domain(e.to_string());
        Ok(match *self {
            ServiceSpec::Exponential { .. } => Sampler::Exp(Exp::new(1.0 / mean).map_err(bad)?),
            ServiceSpec::Deterministic { .. } => Sampler::Det(mean),
            ServiceSpec::LogNormal { cv, .. } => {
                if !(cv > 0.0) {
                    return domain(format!("log-normal cv must be positive, got {cv}"));
                }
                let s2 = (1.0 + cv * cv).ln();
                let l = LogNormal::new(mean.ln() - 0.5 * s2, s2.sqrt()).map_err(|e| Error::Domain(e.to_string()))?;
                Sampler::LogN(l)
            }
            ServiceSpec::HyperExponential { cv, .. } => {
                if !(cv >= 1.0) {
                    return domain(format!("hyperexponential cv must be at least 1, got {cv}"));
                }
                let p = 0.5 * (1.0 + ((cv * cv - 1.0) / (cv * cv + 1.0)).sqrt());
                let a = Exp::new(2.0 * p / mean).map_err(bad)?;
                let b = if p < 1.0 { Exp::new(2.0 * (1.0 - p) / mean).map_err(bad)? } else { a };
                Sampler::Hyper { p, a, b }
            }
        })
    }
}

/// Mean with a 95% t-interval half-width across replications.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ci {
    pub mean: f64,
    pub half_width: f64,
}

impl Ci {
    pub fn from_samples(xs: &[f64]) -> Ci {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Ci { mean, half_width: f64::INFINITY };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let t = StudentsT::new(0.0, 1.0, n - 1.0).map(|d| d.inverse_cdf(0.975)).unwrap_or(f64::NAN);
        Ci { mean, half_width: t * (var / n).sqrt() }
    }

    /// CI of the per-replication differences a_i - b_i.
    pub fn paired_difference(a: &[f64], b: &[f64]) -> Ci {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        Ci::from_samples(&d)
    }

    pub fn contains(&self, value: f64, widths: f64) -> bool {
        (self.mean - value).abs() <= widths * self.half_width
    }
}

/// Outcome of one replication over the measurement window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepOutcome {
    pub revenue_rate: f64,
    /// Fraction of candidate arrivals that found the system full.
    pub blocking_arrival: f64,
    /// Fraction of would-be purchasers (valuation clears the lowest price
    /// the policy posts) that found the system full.
    pub blocking_purchaser: f64,
    /// Time fractions of total occupancy 0..=C.
    pub occupancy: Vec<f64>,
    pub arrivals: u64,
    pub purchases: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEstimate {
    pub revenue_rate: Ci,
    pub blocking: Ci,
    pub blocking_arrival: Ci,
    pub occupancy_hist: Vec<Ci>,
    pub reps: usize,
    pub horizon: f64,
    pub seed: u64,
    /// Dominating candidate rates D_j used for the streams.
    pub dominating_rates: Vec<f64>,
    pub per_rep: Vec<RepOutcome>,
}

#[derive(Clone, Copy)]
struct Completion {
    time: f64,
    class: usize,
}

impl PartialEq for Completion {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Completion {}
impl PartialOrd for Completion {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Completion {
    // reversed: BinaryHeap pops the earliest completion
    fn cmp(&self, o: &Self) -> Ordering {
        o.time.total_cmp(&self.time).then(o.class.cmp(&self.class))
    }
}

/// Rates posted in the current state.
enum View<'a> {
    Static(&'a StaticPolicy),
    Dynamic { policy: &'a DynamicPolicy, up: Vec<usize>, down: Vec<usize> },
}

impl View<'_> {
    fn new(policy: &Policy) -> View<'_> {
        match policy {
            Policy::Static(p) => View::Static(p),
            Policy::Dynamic(p) => {
                let (up, down) = p.space.neighbour_tables();
                View::Dynamic { policy: p, up, down }
            }
        }
    }

    fn rate(&self, idx: usize, j: usize) -> f64 {
        match self {
            View::Static(p) => p.rates[j],
            View::Dynamic { policy, .. } => policy.rate(idx, j),
        }
    }

    fn step(&self, idx: usize, j: usize, arrive: bool) -> usize {
        match self {
            View::Static(_) => 0,
            View::Dynamic { policy, up, down } => {
                let m = policy.space.classes();
                if arrive {
                    up[idx * m + j]
                } else {
                    down[idx * m + j]
                }
            }
        }
    }
}

fn stream(seed: u64, rep: usize, class: usize, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((rep as u64) << 16) | ((class as u64) << 4) | purpose);
    rng
}

/// Highest rate each class is ever offered.
pub fn policy_max_rates(policy: &Policy, m: usize) -> Vec<f64> {
    match policy {
        Policy::Static(p) => p.rates.clone(),
        Policy::Dynamic(p) => (0..m).map(|j| p.max_rate(j)).collect(),
    }
}

fn check_policy(instance: &Instance, policy: &Policy) -> Result<()> {
    match policy {
        Policy::Static(p) => p.check_instance(instance)?,
        Policy::Dynamic(p) => p.check_instance(instance)?,
    }
    for (j, r) in policy_max_rates(policy, instance.m()).iter().enumerate() {
        if !(*r >= 0.0) || *r > instance.classes[j].demand.max_rate() * (1.0 + 1e-12) {
            return domain(format!("class {j} rate {r} outside the admissible range"));
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_rep(
    instance: &Instance,
    view: &View,
    max_rates: &[f64],
    dom: &[f64],
    samplers: &[Sampler],
    horizon: f64,
    seed: u64,
    rep: usize,
) -> RepOutcome {
    let m = instance.m();
    let c = instance.c;
    let warm = WARMUP_FRACTION * horizon;
    let mut arr_rng: Vec<ChaCha8Rng> = (0..m).map(|j| stream(seed, rep, j, PURPOSE_ARRIVAL)).collect();
    let mut val_rng: Vec<ChaCha8Rng> = (0..m).map(|j| stream(seed, rep, j, PURPOSE_VALUATION)).collect();
    let mut svc_rng: Vec<ChaCha8Rng> = (0..m).map(|j| stream(seed, rep, j, PURPOSE_SERVICE)).collect();
    let gaps: Vec<Option<Exp<f64>>> = dom.iter().map(|&d| if d > 0.0 { Exp::new(d).ok() } else { None }).collect();
    let mut next_arrival: Vec<f64> = (0..m)
        .map(|j| gaps[j].map_or(f64::INFINITY, |e| e.sample(&mut arr_rng[j])))
        .collect();
    let mut heap: BinaryHeap<Completion> = BinaryHeap::new();
    let mut occ = 0usize;
    let mut idx = 0usize;
    let mut t: f64 = 0.0;
    let mut occ_time = vec![0.0; c + 1];
    let (mut revenue, mut arrivals, mut blocked, mut wbp, mut wbp_blocked, mut purchases) = (0.0, 0u64, 0u64, 0u64, 0u64, 0u64);

    loop {
        let (mut next_t, mut class, mut is_arrival) = (f64::INFINITY, usize::MAX, true);
        for (j, &a) in next_arrival.iter().enumerate() {
            if a < next_t {
                next_t = a;
                class = j;
            }
        }
        if let Some(top) = heap.peek() {
            if top.time <= next_t {
                next_t = top.time;
                class = top.class;
                is_arrival = false;
            }
        }
        let stop = next_t.min(horizon);
        if stop > warm {
            occ_time[occ] += stop - t.max(warm);
        }
        if next_t > horizon {
            break;
        }
        t = next_t;
        let measure = t >= warm;
        if !is_arrival {
            heap.pop();
            occ -= 1;
            idx = view.step(idx, class, false);
            continue;
        }
        let j = class;
        next_arrival[j] = t + gaps[j].expect("arrivals need a positive rate").sample(&mut arr_rng[j]);
        let u: f64 = val_rng[j].random();
        let service = samplers[j].draw(&mut svc_rng[j]);
        let demand = &instance.classes[j].demand;
        let candidate_rate = u * dom[j];
        let would_buy = candidate_rate <= max_rates[j] && max_rates[j] > 0.0;
        if measure {
            arrivals += 1;
            if would_buy {
                wbp += 1;
            }
        }
        if occ >= c {
            if measure {
                blocked += 1;
                if would_buy {
                    wbp_blocked += 1;
                }
            }
            continue;
        }
        let posted = view.rate(idx, j);
        if posted <= 0.0 {
            continue;
        }
        let price = demand.price(posted);
        let valuation = demand.price(candidate_rate);
        if valuation >= price {
            occ += 1;
            idx = view.step(idx, j, true);
            heap.push(Completion { time: t + service, class: j });
            if measure {
                revenue += price;
                purchases += 1;
            }
        }
    }
    let window = horizon - warm;
    let total: f64 = occ_time.iter().sum();
    let occupancy = occ_time.iter().map(|v| v / total).collect();
    let frac = |a: u64, b: u64| if b > 0 { a as f64 / b as f64 } else { 0.0 };
    RepOutcome {
        revenue_rate: revenue / window,
        blocking_arrival: frac(blocked, arrivals),
        blocking_purchaser: frac(wbp_blocked, wbp),
        occupancy,
        arrivals,
        purchases,
    }
}

fn validate(instance: &Instance, service: &[ServiceSpec], horizon: f64, reps: usize) -> Result<Vec<Sampler>> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return domain(format!("horizon must be positive, got {horizon}"));
    }
    if reps < 2 {
        return domain("at least 2 replications are needed");
    }
    if service.len() != instance.m() {
        return Err(Error::Dimension(format!("{} service specs for {} classes", service.len(), instance.m())));
    }
    service.iter().map(|s| s.sampler()).collect()
}

fn estimate(per_rep: Vec<RepOutcome>, horizon: f64, seed: u64, dom: Vec<f64>) -> SimEstimate {
    let col = |f: &dyn Fn(&RepOutcome) -> f64| per_rep.iter().map(f).collect::<Vec<_>>();
    let bins = per_rep[0].occupancy.len();
    let occupancy_hist = (0..bins).map(|i| Ci::from_samples(&col(&|r| r.occupancy[i]))).collect();
    SimEstimate {
        revenue_rate: Ci::from_samples(&col(&|r| r.revenue_rate)),
        blocking: Ci::from_samples(&col(&|r| r.blocking_purchaser)),
        blocking_arrival: Ci::from_samples(&col(&|r| r.blocking_arrival)),
        occupancy_hist,
        reps: per_rep.len(),
        horizon,
        seed,
        dominating_rates: dom,
        per_rep,
    }
}

fn simulate_with_dom(
    instance: &Instance,
    policy: &Policy,
    samplers: &[Sampler],
    dom: &[f64],
    horizon: f64,
    reps: usize,
    seed: u64,
) -> SimEstimate {
    let view = View::new(policy);
    let max_rates = policy_max_rates(policy, instance.m());
    let per_rep: Vec<RepOutcome> = (0..reps)
        .into_par_iter()
        .map(|rep| run_rep(instance, &view, &max_rates, dom, samplers, horizon, seed, rep))
        .collect();
    estimate(per_rep, horizon, seed, dom.to_vec())
}

/// Simulates one policy; replications are independent and ordered by index.
pub fn simulate(
    instance: &Instance,
    policy: &Policy,
    service: &[ServiceSpec],
    horizon: f64,
    reps: usize,
    seed: u64,
) -> Result<SimEstimate> {
    let samplers = validate(instance, service, horizon, reps)?;
    check_policy(instance, policy)?;
    let dom = policy_max_rates(policy, instance.m());
    Ok(simulate_with_dom(instance, policy, &samplers, &dom, horizon, reps, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub estimates: Vec<SimEstimate>,
    /// Per-replication revenue ratio of policy i to policy 0.
    pub ratios: Vec<Ci>,
}

/// Simulates several policies on common random numbers.
pub fn compare_policies(
    instance: &Instance,
    policies: &[Policy],
    service: &[ServiceSpec],
    horizon: f64,
    reps: usize,
    seed: u64,
) -> Result<Comparison> {
    if policies.len() < 2 {
        return domain("comparison needs at least two policies");
    }
    let samplers = validate(instance, service, horizon, reps)?;
    let m = instance.m();
    let mut dom = vec![0.0f64; m];
    for p in policies {
        check_policy(instance, p)?;
        for (d, r) in dom.iter_mut().zip(policy_max_rates(p, m)) {
            *d = d.max(r);
        }
    }
    let estimates: Vec<SimEstimate> = policies
        .iter()
        .map(|p| simulate_with_dom(instance, p, &samplers, &dom, horizon, reps, seed))
        .collect();
    let base: Vec<f64> = estimates[0].per_rep.iter().map(|r| r.revenue_rate).collect();
    let ratios = estimates
        .iter()
        .map(|e| {
            let xs: Vec<f64> = e.per_rep.iter().zip(&base).map(|(r, b)| if *b > 0.0 { r.revenue_rate / b } else { 1.0 }).collect();
            let mut ci = Ci::from_samples(&xs);
            if xs.iter().all(|x| *x == xs[0]) {
                ci.half_width = 0.0;
            }
            ci
        })
        .collect();
    Ok(Comparison { estimates, ratios })
}

/// Convenience: exponential service at each class's rate.
pub fn exponential_services(instance: &Instance) -> Vec<ServiceSpec> {
    instance.classes.iter().map(|k| ServiceSpec::exponential_rate(k.mu)).collect()
}

/// State space helper for building dynamic policies in callers.
pub fn space_for(instance: &Instance) -> Result<StateSpace> {
    StateSpace::new(instance.c, instance.m())
}
