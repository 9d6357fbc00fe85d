//! Problem instances and policies.

use crate::error::{domain, Error, Result};
use crate::loss_core::StateSpace;
use crate::Demand;
use serde::Serialize;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CustomerClass {
    /// Market size (maximum admissible effective arrival rate).
    pub market_size: f64,
    /// Service rate; mean service time is 1/mu.
    pub mu: f64,
    pub demand: Demand,
}

impl CustomerClass {
    /// A class whose market size is the demand curve's admissible maximum.
    pub fn new(mu: f64, demand: Demand) -> Result<Self> {
        Self::with_market_size(demand.max_rate(), mu, demand)
    }

    /// A class with an explicit market size, capping the curve's rates.
    pub fn with_market_size(market_size: f64, mu: f64, demand: Demand) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return domain(format!("service rate must be positive, got {mu}"));
        }
        let demand = demand.with_market_size(market_size)?;
        Ok(CustomerClass { market_size, mu, demand })
    }

    pub fn peak_rate(&self) -> f64 {
        self.demand.peak_rate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Instance {
    #[serde(rename = "C")]
    pub c: usize,
    pub classes: Vec<CustomerClass>,
}

impl Instance {
    pub fn new(c: usize, classes: Vec<CustomerClass>) -> Result<Self> {
        if c == 0 {
            return domain("capacity C must be at least 1");
        }
        if classes.is_empty() {
            return domain("an instance needs at least one class");
        }
        Ok(Instance { c, classes })
    }

    pub fn m(&self) -> usize {
        self.classes.len()
    }

    /// Per-class upper bounds on admissible rates.
    pub fn peak_rates(&self) -> Vec<f64> {
        self.classes.iter().map(|k| k.peak_rate()).collect()
    }

    /// U = sum_j (L_j + C mu_j).
    pub fn uniformization_rate(&self) -> f64 {
        self.classes.iter().map(|k| k.market_size + self.c as f64 * k.mu).sum()
    }

    /// Rejects instances whose demand curves have non-concave revenue.
    pub fn require_regular(&self) -> Result<()> {
        for (j, k) in self.classes.iter().enumerate() {
            if !k.demand.classify().regular {
                return Err(Error::Unsupported(format!("class {j} has a non-regular demand curve")));
            }
        }
        Ok(())
    }
}

/// Per-state, per-class arrival rates over the full state space; full states
/// carry zero rates.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicPolicy {
    pub space: Arc<StateSpace>,
    /// Row-major `idx * M + j`.
    pub rates: Vec<f64>,
}

impl DynamicPolicy {
    pub fn new(space: Arc<StateSpace>, rates: Vec<f64>) -> Result<Self> {
        if rates.len() != space.len() * space.classes() {
            return Err(Error::Dimension(format!(
                "policy has {} entries, state space needs {}",
                rates.len(),
                space.len() * space.classes()
            )));
        }
        Ok(DynamicPolicy { space, rates })
    }

    /// Policy posting rates `rates[j]` in every non-full state.
    pub fn constant(space: Arc<StateSpace>, rates: &[f64]) -> Result<Self> {
        let m = space.classes();
        if rates.len() != m {
            return Err(Error::Dimension(format!("expected {m} rates, got {}", rates.len())));
        }
        let c = space.capacity();
        let mut out = vec![0.0; space.len() * m];
        for idx in 0..space.len() {
            if space.occupancy(idx) < c {
                out[idx * m..(idx + 1) * m].copy_from_slice(rates);
            }
        }
        Ok(DynamicPolicy { space, rates: out })
    }

    pub fn rate(&self, idx: usize, j: usize) -> f64 {
        self.rates[idx * self.space.classes() + j]
    }

    /// Rates by state as nested vectors, keyed by dense state index.
    pub fn by_state(&self) -> Vec<Vec<f64>> {
        self.rates.chunks(self.space.classes()).map(|r| r.to_vec()).collect()
    }

    /// Largest rate offered to class j over all states.
    pub fn max_rate(&self, j: usize) -> f64 {
        (0..self.space.len()).map(|i| self.rate(i, j)).fold(0.0, f64::max)
    }

    pub fn check_instance(&self, instance: &Instance) -> Result<()> {
        if self.space.capacity() != instance.c || self.space.classes() != instance.m() {
            return Err(Error::Dimension(format!(
                "policy is for C={}, M={}, instance has C={}, M={}",
                self.space.capacity(),
                self.space.classes(),
                instance.c,
                instance.m()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StaticPolicy {
    pub rates: Vec<f64>,
}

impl StaticPolicy {
    pub fn new(rates: Vec<f64>) -> Self {
        StaticPolicy { rates }
    }

    /// Offered loads rate_j / mu_j.
    pub fn loads(&self, instance: &Instance) -> Vec<f64> {
        self.rates.iter().zip(&instance.classes).map(|(l, k)| l / k.mu).collect()
    }

    pub fn check_instance(&self, instance: &Instance) -> Result<()> {
        if self.rates.len() != instance.m() {
            return Err(Error::Dimension(format!(
                "static policy has {} rates, instance has {} classes",
                self.rates.len(),
                instance.m()
            )));
        }
        Ok(())
    }
}

/// Either kind of policy, for the simulator.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Dynamic(DynamicPolicy),
    Static(StaticPolicy),
}
