//! Demand curves: the price <-> effective arrival rate mapping, revenue
//! functions and regularity/MHR classification.

use crate::error::{domain, Result};
use crate::scalar::Real;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandKind {
    Linear,
    Exponential,
    ReciprocalTight,
    UniformValuation,
}

/// Curve parameters. Every kind carries its admissible maximum rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DemandCurve<T> {
    /// p(l) = b - a l.
    Linear { a: T, b: T, max_rate: T },
    /// p(l) = a ln(b / (a l)).
    Exponential { a: T, b: T, max_rate: T },
    /// p(l) = b + a / l, i.e. F(p) = 1 - (a/L)/(p - b) with market size L.
    ReciprocalTight { a: T, b: T, max_rate: T },
    /// Valuations uniform on [lo, hi] with market size `max_rate`.
    UniformValuation { lo: T, hi: T, max_rate: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub regular: bool,
    pub mhr: bool,
}

const CLASSIFY_GRID: usize = 1000;

fn positive<T: Real>(name: &str, v: T) -> Result<()> {
    if v > T::zero() && v.is_finite() {
        Ok(())
    } else {
        domain(format!("{name} must be positive and finite, got {v:?}"))
    }
}

impl<T: Real> DemandCurve<T> {
    /// Linear curve on its natural support (0, b/a].
    pub fn linear(a: T, b: T) -> Result<Self> {
        positive("a", a)?;
        positive("b", b)?;
        Ok(DemandCurve::Linear { a, b, max_rate: b / a })
    }

    /// Exponential curve on (0, b/a], where the price reaches 0.
    pub fn exponential(a: T, b: T) -> Result<Self> {
        positive("a", a)?;
        positive("b", b)?;
        Ok(DemandCurve::Exponential { a, b, max_rate: b / a })
    }

    pub fn reciprocal_tight(a: T, b: T, market_size: T) -> Result<Self> {
        positive("a", a)?;
        positive("b", b)?;
        positive("market size", market_size)?;
        Ok(DemandCurve::ReciprocalTight { a, b, max_rate: market_size })
    }

    pub fn uniform_valuation(lo: T, hi: T, market_size: T) -> Result<Self> {
        if !(lo >= T::zero() && hi > lo && hi.is_finite()) {
            return domain(format!("uniform support needs 0 <= lo < hi, got [{lo:?}, {hi:?}]"));
        }
        positive("market size", market_size)?;
        Ok(DemandCurve::UniformValuation { lo, hi, max_rate: market_size })
    }

    /// Caps the admissible rate at a market size below the natural one.
    pub fn with_market_size(self, market_size: T) -> Result<Self> {
        positive("market size", market_size)?;
        Ok(match self {
            DemandCurve::Linear { a, b, max_rate } => {
                DemandCurve::Linear { a, b, max_rate: max_rate.min(market_size) }
            }
            DemandCurve::Exponential { a, b, max_rate } => {
                DemandCurve::Exponential { a, b, max_rate: max_rate.min(market_size) }
            }
            DemandCurve::ReciprocalTight { a, b, .. } => {
                DemandCurve::ReciprocalTight { a, b, max_rate: market_size }
            }
            DemandCurve::UniformValuation { lo, hi, .. } => {
                DemandCurve::UniformValuation { lo, hi, max_rate: market_size }
            }
        })
    }

    pub fn kind(&self) -> DemandKind {
        match self {
            DemandCurve::Linear { .. } => DemandKind::Linear,
            DemandCurve::Exponential { .. } => DemandKind::Exponential,
            DemandCurve::ReciprocalTight { .. } => DemandKind::ReciprocalTight,
            DemandCurve::UniformValuation { .. } => DemandKind::UniformValuation,
        }
    }

    pub fn max_rate(&self) -> T {
        match *self {
            DemandCurve::Linear { max_rate, .. }
            | DemandCurve::Exponential { max_rate, .. }
            | DemandCurve::ReciprocalTight { max_rate, .. }
            | DemandCurve::UniformValuation { max_rate, .. } => max_rate,
        }
    }

    /// Slope of the uniform-valuation price line.
    fn uniform_slope(lo: T, hi: T, max_rate: T) -> T {
        (hi - lo) / max_rate
    }

    fn floor_rate(&self) -> T {
        T::lit(1e-12) * self.max_rate()
    }

    /// Effective arrival rate at a posted price (price = +inf gives 0).
    pub fn effective_rate(&self, price: T) -> T {
        if price.is_infinite() {
            return T::zero();
        }
        let cap = self.max_rate();
        let rate = match *self {
            DemandCurve::Linear { a, b, .. } => (b - price) / a,
            DemandCurve::Exponential { a, b, .. } => (b / a) * (-price / a).exp(),
            DemandCurve::ReciprocalTight { a, b, .. } => {
                if price - b <= a / cap {
                    cap
                } else {
                    a / (price - b)
                }
            }
            DemandCurve::UniformValuation { lo, hi, .. } => {
                cap * ((hi - price) / (hi - lo))
            }
        };
        rate.max(T::zero()).min(cap)
    }

    fn check_rate(&self, rate: T) -> Result<()> {
        if rate > T::zero() && rate <= self.max_rate() {
            Ok(())
        } else {
            domain(format!(
                "rate {rate:?} outside (0, {:?}]",
                self.max_rate()
            ))
        }
    }

    /// p(rate) for 0 < rate <= max_rate.
    pub fn inverse_price(&self, rate: T) -> Result<T> {
        self.check_rate(rate)?;
        Ok(self.price(rate))
    }

    /// Unchecked price; rates at or below zero give the limit as rate -> 0+.
    pub fn price(&self, rate: T) -> T {
        match *self {
            DemandCurve::Linear { a, b, .. } => b - a * rate,
            DemandCurve::Exponential { a, b, .. } => {
                let l = rate.max(self.floor_rate());
                a * (b / (a * l)).ln()
            }
            DemandCurve::ReciprocalTight { a, b, .. } => {
                if rate <= T::zero() {
                    T::infinity()
                } else {
                    b + a / rate
                }
            }
            DemandCurve::UniformValuation { lo, hi, max_rate } => {
                hi - Self::uniform_slope(lo, hi, max_rate) * rate
            }
        }
    }

    /// p'(rate).
    pub fn price_prime(&self, rate: T) -> T {
        match *self {
            DemandCurve::Linear { a, .. } => -a,
            DemandCurve::Exponential { a, .. } => -a / rate.max(self.floor_rate()),
            DemandCurve::ReciprocalTight { a, .. } => -a / (rate * rate),
            DemandCurve::UniformValuation { lo, hi, max_rate } => {
                -Self::uniform_slope(lo, hi, max_rate)
            }
        }
    }

    /// r(rate) = rate p(rate), extended to rate = 0 by its right limit.
    pub fn r(&self, rate: T) -> T {
        match *self {
            DemandCurve::Linear { a, b, .. } => rate * (b - a * rate),
            DemandCurve::Exponential { a, b, .. } => {
                if rate <= T::zero() {
                    T::zero()
                } else {
                    let l = rate.max(self.floor_rate());
                    l * a * (b / (a * l)).ln()
                }
            }
            DemandCurve::ReciprocalTight { a, b, .. } => a + b * rate.max(T::zero()),
            DemandCurve::UniformValuation { lo, hi, max_rate } => {
                rate * (hi - Self::uniform_slope(lo, hi, max_rate) * rate)
            }
        }
    }

    pub fn dr(&self, rate: T) -> T {
        match *self {
            DemandCurve::Linear { a, b, .. } => b - T::lit(2.0) * a * rate,
            DemandCurve::Exponential { a, b, .. } => {
                let l = rate.max(self.floor_rate());
                a * (b / (a * l)).ln() - a
            }
            DemandCurve::ReciprocalTight { b, .. } => b,
            DemandCurve::UniformValuation { lo, hi, max_rate } => {
                hi - T::lit(2.0) * Self::uniform_slope(lo, hi, max_rate) * rate
            }
        }
    }

    pub fn d2r(&self, rate: T) -> T {
        match *self {
            DemandCurve::Linear { a, .. } => -T::lit(2.0) * a,
            DemandCurve::Exponential { a, .. } => -a / rate.max(self.floor_rate()),
            DemandCurve::ReciprocalTight { .. } => T::zero(),
            DemandCurve::UniformValuation { lo, hi, max_rate } => {
                -T::lit(2.0) * Self::uniform_slope(lo, hi, max_rate)
            }
        }
    }

    /// Checked revenue rate r(rate).
    pub fn revenue(&self, rate: T) -> Result<T> {
        self.check_rate(rate)?;
        Ok(self.r(rate))
    }

    pub fn revenue_prime(&self, rate: T) -> Result<T> {
        self.check_rate(rate)?;
        Ok(self.dr(rate))
    }

    pub fn revenue_second(&self, rate: T) -> Result<T> {
        self.check_rate(rate)?;
        Ok(self.d2r(rate))
    }

    /// Maximizer of r on [0, max_rate].
    pub fn peak_rate(&self) -> T {
        let cap = self.max_rate();
        let peak = match *self {
            DemandCurve::Linear { a, b, .. } => b / (T::lit(2.0) * a),
            DemandCurve::Exponential { a, b, .. } => b / (a * T::E()),
            DemandCurve::ReciprocalTight { .. } => cap,
            DemandCurve::UniformValuation { lo, hi, max_rate } => {
                hi / (T::lit(2.0) * Self::uniform_slope(lo, hi, max_rate))
            }
        };
        peak.min(cap)
    }

    /// Hazard rate f(p)/(1 - F(p)) of the valuation at the price p(rate).
    pub fn hazard_at_rate(&self, rate: T) -> T {
        -T::one() / (rate * self.price_prime(rate))
    }

    /// Solves r'(l) = m on [0, peak], clamping at the ends. Closed form for
    /// every kind; ReciprocalTight has constant r' and is bang-bang.
    pub fn marginal_inverse(&self, m: T) -> T {
        let peak = self.peak_rate();
        let l = match *self {
            DemandCurve::Linear { a, b, .. } => (b - m) / (T::lit(2.0) * a),
            DemandCurve::Exponential { a, b, .. } => (b / a) * (-(m + a) / a).exp(),
            DemandCurve::ReciprocalTight { b, .. } => {
                if b > m {
                    peak
                } else {
                    T::zero()
                }
            }
            DemandCurve::UniformValuation { lo, hi, max_rate } => {
                (hi - m) / (T::lit(2.0) * Self::uniform_slope(lo, hi, max_rate))
            }
        };
        l.max(T::zero()).min(peak)
    }

    /// True when the revenue function is a quadratic in the rate.
    pub fn is_quadratic(&self) -> bool {
        matches!(self, DemandCurve::Linear { .. } | DemandCurve::UniformValuation { .. })
    }

    /// Grid-based regularity and MHR tests.
    pub fn classify(&self) -> Classification {
        let cap = self.max_rate();
        let n = CLASSIFY_GRID;
        let regular = (1..=n).all(|k| {
            let l = cap * T::from_usize(k) / T::from_usize(n);
            self.d2r(l) <= T::lit(1e-10)
        });
        // price grid over the valuation support, from p(cap) upward
        let p_lo = self.price(cap);
        let p_hi = match *self {
            DemandCurve::Linear { b, .. } => b,
            DemandCurve::UniformValuation { hi, .. } => hi,
            _ => self.price(cap * T::lit(1e-3)),
        };
        let mut prev: Option<T> = None;
        let mut mhr = true;
        for k in 0..n {
            let p = p_lo + (p_hi - p_lo) * T::from_usize(k) / T::from_usize(n);
            let l = self.effective_rate(p);
            if l <= T::zero() {
                break;
            }
            let h = self.hazard_at_rate(l);
            if let Some(hp) = prev {
                if h < hp - T::lit(1e-9) * hp.abs() {
                    mhr = false;
                    break;
                }
            }
            prev = Some(h);
        }
        Classification { regular, mhr }
    }
}
