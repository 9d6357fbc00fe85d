//! Erlang loss primitives: blocking probabilities, occupancy distributions,
//! the service-level ratio R(alpha, beta), the guarantee G(C) and the
//! multi-class state space.

use crate::error::{domain, Error, Result};
use crate::scalar::Field;
use num_rational::BigRational;
use serde::Serialize;
use std::sync::Arc;

/// Upper bound on the number of enumerated states.
pub const STATE_SPACE_GUARD: u128 = 10_000_000;

/// Largest capacity for which `guarantee_g` also reports an exact rational.
pub const EXACT_G_MAX_C: usize = 64;

/// Erlang B blocking probability B_C(rho) via B_k = rho B_{k-1} / (k + rho B_{k-1}).
pub fn erlang_b<T: Field>(c: usize, rho: T) -> T {
    let mut b = T::one();
    for k in 1..=c {
        let rb = rho.clone() * b;
        b = rb.clone() / (T::from_usize(k) + rb);
    }
    b
}

/// 1 - B_C(w) = sum_{i<C} w^i/i! / sum_{i<=C} w^i/i!.
pub fn service_level<T: Field>(c: usize, w: T) -> T {
    T::one() - erlang_b(c, w)
}

/// R(alpha, beta) = (1/alpha) (1 - B_C(w)) with w = C(1/alpha - 1) + beta.
///
/// As alpha -> 0+ the value tends to 1; that limit is not evaluated here.
pub fn ratio_r<T: Field>(c: usize, alpha: T, beta: T) -> Result<T> {
    if alpha <= T::zero() {
        return domain(format!("ratio_R needs alpha > 0, got {alpha:?}"));
    }
    if beta < T::zero() {
        return domain(format!("ratio_R needs beta >= 0, got {beta:?}"));
    }
    let inv = T::one() / alpha;
    let w = T::from_usize(c) * (inv.clone() - T::one()) + beta;
    Ok(inv * service_level(c, w))
}

/// G(C) = 1 - B_C(C-1), evaluated in `T`. Exact when `T` is a rational type.
pub fn guarantee_g<T: Field>(c: usize) -> Result<T> {
    if c == 0 {
        return domain("guarantee_G needs C >= 1");
    }
    Ok(service_level(c, T::from_usize(c - 1)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Guarantee {
    pub exact: Option<BigRational>,
    pub float: f64,
}

/// G(C) as an exact rational (C <= 64) together with its float value.
pub fn guarantee(c: usize) -> Result<Guarantee> {
    let float = guarantee_g::<f64>(c)?;
    let exact = if c <= EXACT_G_MAX_C {
        Some(guarantee_g::<BigRational>(c)?)
    } else {
        None
    };
    Ok(Guarantee { exact, float })
}

/// Stationary occupancy over 0..=C together with service level and
/// conditional mean occupancy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupancyDistribution<T> {
    pub probs: Vec<T>,
    pub alpha: T,
    pub beta: T,
    /// Set when alpha = 0, in which case beta is reported as 0.
    pub alpha_zero: bool,
}

impl<T: Field> OccupancyDistribution<T> {
    /// Builds from probabilities over 0..=C (assumed normalized).
    pub fn from_probs(probs: Vec<T>) -> Self {
        let c = probs.len() - 1;
        let alpha = T::one() - probs[c].clone();
        let mut num = T::zero();
        for (i, p) in probs.iter().enumerate().take(c).skip(1) {
            num = num + T::from_usize(i) * p.clone();
        }
        let alpha_zero = alpha <= T::zero();
        let beta = if alpha_zero { T::zero() } else { num / alpha.clone() };
        OccupancyDistribution { probs, alpha, beta, alpha_zero }
    }

    pub fn capacity(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn blocking(&self) -> T {
        self.probs[self.capacity()].clone()
    }

    /// Expected number of busy units.
    pub fn mean(&self) -> T {
        let mut m = T::zero();
        for (i, p) in self.probs.iter().enumerate() {
            m = m + T::from_usize(i) * p.clone();
        }
        m
    }
}

/// Normalizes unnormalized weights built by `next(i, w_{i-1})`, rescaling
/// whenever the weights grow past the type's threshold.
fn normalized_weights<T: Field>(c: usize, mut next: impl FnMut(usize, &T) -> T) -> Vec<T> {
    let mut w = Vec::with_capacity(c + 1);
    w.push(T::one());
    let limit = T::rescale_threshold();
    for i in 1..=c {
        let v = next(i, &w[i - 1]);
        w.push(v);
        if let Some(lim) = &limit {
            if w[i] > *lim {
                let s = w[i].clone();
                for x in w.iter_mut() {
                    *x = x.clone() / s.clone();
                }
            }
        }
    }
    let mut total = T::zero();
    for x in &w {
        total = total + x.clone();
    }
    w.into_iter().map(|x| x / total.clone()).collect()
}

/// Birth-death occupancy with state-dependent arrival rates
/// `lambdas[i]` (i = 0..C-1) and per-unit service rate `mu`.
pub fn birth_death_stationary<T: Field>(
    lambdas: &[T],
    mu: T,
    c: usize,
) -> Result<OccupancyDistribution<T>> {
    if mu <= T::zero() {
        return domain(format!("service rate must be positive, got {mu:?}"));
    }
    if lambdas.len() != c {
        return Err(Error::Dimension(format!(
            "expected {c} arrival rates, got {}",
            lambdas.len()
        )));
    }
    if let Some(l) = lambdas.iter().find(|l| **l < T::zero()) {
        return domain(format!("arrival rates must be nonnegative, got {l:?}"));
    }
    let probs = normalized_weights(c, |i, prev: &T| {
        prev.clone() * lambdas[i - 1].clone() / (T::from_usize(i) * mu.clone())
    });
    Ok(OccupancyDistribution::from_probs(probs))
}

/// Product-form occupancy of a multi-class loss system under static rates:
/// P_i proportional to rho^i / i! with rho the total offered load.
pub fn multiclass_static_occupancy<T: Field>(
    c: usize,
    offered_loads: &[T],
) -> Result<OccupancyDistribution<T>> {
    let mut rho = T::zero();
    for l in offered_loads {
        if *l < T::zero() {
            return domain(format!("offered loads must be nonnegative, got {l:?}"));
        }
        rho = rho + l.clone();
    }
    let probs = normalized_weights(c, |i, prev: &T| prev.clone() * rho.clone() / T::from_usize(i));
    Ok(OccupancyDistribution::from_probs(probs))
}

/// All vectors (x_1..x_M) with sum <= C in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSpace {
    c: usize,
    m: usize,
    states: Vec<u16>,
    /// binom[n][k] = binomial(n, k) for n <= C + M, k <= M.
    binom: Vec<Vec<u64>>,
}

fn binomial_u128(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Enumerates the multi-class state space, refusing sizes above the guard.
pub fn enumerate_states(c: usize, m: usize) -> Result<StateSpace> {
    StateSpace::new(c, m)
}

impl StateSpace {
    pub fn new(c: usize, m: usize) -> Result<Self> {
        if c == 0 || m == 0 {
            return domain("state space needs C >= 1 and M >= 1");
        }
        if c > u16::MAX as usize {
            return Err(Error::Capacity { size: u128::MAX, bound: STATE_SPACE_GUARD });
        }
        let size = binomial_u128((c + m) as u128, m as u128);
        if size > STATE_SPACE_GUARD {
            return Err(Error::Capacity { size, bound: STATE_SPACE_GUARD });
        }
        let mut binom = vec![vec![0u64; m + 1]; c + m + 1];
        for (n, row) in binom.iter_mut().enumerate() {
            row[0] = 1;
            for k in 1..=m.min(n) {
                row[k] = binomial_u128(n as u128, k as u128) as u64;
            }
        }
        let mut states = Vec::with_capacity(size as usize * m);
        let mut x = vec![0u16; m];
        loop {
            states.extend_from_slice(&x);
            // advance to the lexicographic successor
            let used: usize = x.iter().map(|&v| v as usize).sum();
            if used < c {
                x[m - 1] += 1;
                continue;
            }
            let mut k = m - 1;
            loop {
                x[k] = 0;
                if k == 0 {
                    return Ok(StateSpace { c, m, states, binom });
                }
                k -= 1;
                let used: usize = x.iter().map(|&v| v as usize).sum();
                if used < c {
                    x[k] += 1;
                    break;
                }
            }
        }
    }

    pub fn capacity(&self) -> usize {
        self.c
    }

    pub fn classes(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.states.len() / self.m
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, idx: usize) -> &[u16] {
        &self.states[idx * self.m..(idx + 1) * self.m]
    }

    pub fn occupancy(&self, idx: usize) -> usize {
        self.state(idx).iter().map(|&v| v as usize).sum()
    }

    /// Dense index of a state, or `None` if it is not in the space.
    pub fn index_of(&self, x: &[u16]) -> Option<usize> {
        if x.len() != self.m {
            return None;
        }
        let mut remaining = self.c;
        let mut rank: u64 = 0;
        for (k, &xk) in x.iter().enumerate() {
            let xk = xk as usize;
            if xk > remaining {
                return None;
            }
            let rest = self.m - k - 1;
            for v in 0..xk {
                rank += self.binom[remaining - v + rest][rest];
            }
            remaining -= xk;
        }
        Some(rank as usize)
    }

    /// Index of x + e_j, if within capacity.
    pub fn up(&self, idx: usize, j: usize) -> Option<usize> {
        if self.occupancy(idx) >= self.c {
            return None;
        }
        let mut x = self.state(idx).to_vec();
        x[j] += 1;
        self.index_of(&x)
    }

    /// Index of x - e_j, if x_j > 0.
    pub fn down(&self, idx: usize, j: usize) -> Option<usize> {
        let mut x = self.state(idx).to_vec();
        if x[j] == 0 {
            return None;
        }
        x[j] -= 1;
        self.index_of(&x)
    }

    /// Per-state neighbour tables `(up, down)` laid out as `idx * M + j`,
    /// with `usize::MAX` for missing neighbours.
    pub fn neighbour_tables(&self) -> (Vec<usize>, Vec<usize>) {
        let n = self.len();
        let mut up = vec![usize::MAX; n * self.m];
        let mut down = vec![usize::MAX; n * self.m];
        for idx in 0..n {
            for j in 0..self.m {
                if let Some(u) = self.up(idx, j) {
                    up[idx * self.m + j] = u;
                }
                if let Some(d) = self.down(idx, j) {
                    down[idx * self.m + j] = d;
                }
            }
        }
        (up, down)
    }
}

/// Stationary distribution over the full multi-class state space.
#[derive(Debug, Clone)]
pub struct FullStationary {
    pub space: Arc<StateSpace>,
    pub probs: Vec<f64>,
    /// Max-norm residual of the global balance equations.
    pub balance_residual: f64,
    /// True when some states are unreachable from the empty state and
    /// were assigned zero mass.
    pub restricted: bool,
}

impl FullStationary {
    pub fn aggregate(&self) -> OccupancyDistribution<f64> {
        let mut probs = vec![0.0; self.space.capacity() + 1];
        for (idx, p) in self.probs.iter().enumerate() {
            probs[self.space.occupancy(idx)] += p;
        }
        OccupancyDistribution::from_probs(probs)
    }
}
