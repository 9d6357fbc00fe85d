//! Universal lower bounds on the static/dynamic revenue ratio: closed-form
//! cases, the corner-based box search over (w0, w_{C-3}, w_{C-2}), the C=2
//! bounds and the lemma constraint checker.

use crate::error::{domain, Error, Result};
use crate::loss_core::{guarantee_g, ratio_r, service_level};
use crate::scalar::Real;
use rayon::prelude::*;
use serde::Serialize;
use std::time::Instant;

pub const MIN_C: usize = 3;
pub const MAX_C: usize = 47;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CertMethod {
    Case1,
    Case2,
    BoxBruteforce,
    ClosedFormC2,
    RegularG,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaseValues {
    pub case1: f64,
    pub case2: f64,
    #[serde(rename = "box")]
    pub box_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    #[serde(rename = "C")]
    pub c: usize,
    pub method: CertMethod,
    pub lower_bound: f64,
    pub grid_n: Option<usize>,
    /// Lower corner (w0, w_{C-3}, w_{C-2}) of the minimizing box.
    pub argmin_box: Option<[f64; 3]>,
    pub boxes_evaluated: u64,
    pub cases: Option<CaseValues>,
    pub runtime_s: f64,
}

fn check_range(c: usize) -> Result<()> {
    if (MIN_C..=MAX_C).contains(&c) {
        Ok(())
    } else {
        domain(format!("C must lie in {MIN_C}..={MAX_C}, got {c}"))
    }
}

/// Bound when the static load falls below C - 2.7.
pub fn closed_form_case1<T: Real>(c: usize) -> Result<T> {
    check_range(c)?;
    Ok(service_level(c, T::from_usize(c) - T::lit(2.7)))
}

/// Bound when the static load exceeds C + 3.
pub fn closed_form_case2<T: Real>(c: usize) -> Result<T> {
    check_range(c)?;
    let cf = T::from_usize(c);
    Ok((T::one() + T::lit(4.0) / cf) * service_level(c, cf + T::lit(3.0)))
}

/// (w + 1)/C times the service level at load w.
pub fn case2_kernel<T: Real>(c: usize, w: T) -> T {
    (w + T::one()) / T::from_usize(c) * service_level(c, w)
}

/// Service level of the C-unit chain with per-step loads
/// (w0, w3, ..., w3, w2, w1), i.e. w_1..w_{C-3} replaced by w3.
/// For C = 3 the caller passes w3 = w0 (it does not enter the product).
pub fn alpha2<T: Real>(c: usize, w0: T, w3: T, w2: T, w1: T) -> T {
    // s = sum_{i<C} T_i/i! / (T_C/C!) by a backward ratio recursion
    let mut loads = Vec::with_capacity(c);
    loads.push(w0);
    for _ in 1..c.saturating_sub(2) {
        loads.push(w3);
    }
    loads.push(w2);
    loads.push(w1);
    let mut term = T::one();
    let mut s = T::zero();
    for i in (0..c).rev() {
        term = term * T::from_usize(i + 1) / loads[i];
        s = s + term;
    }
    s / (T::one() + s)
}

/// Conditional mean occupancy of the chain with loads
/// (w0, ..., w0, w3, w2) for the first C-1 steps.
pub fn beta2<T: Real>(c: usize, w0: T, w3: T, w2: T) -> T {
    let mut loads = Vec::with_capacity(c - 1);
    for _ in 0..c - 3 {
        loads.push(w0);
    }
    loads.push(w3);
    loads.push(w2);
    // weights for occupancies 0..C-1, normalized by the largest partial product
    let mut w = vec![T::one(); c];
    for i in 1..c {
        w[i] = w[i - 1] * loads[i - 1] / T::from_usize(i);
    }
    let scale = w.iter().fold(T::zero(), |m, &x| m.max(x));
    let (mut num, mut den) = (T::zero(), T::zero());
    for (i, x) in w.iter().enumerate() {
        let x = *x / scale;
        num = num + T::from_usize(i) * x;
        den = den + x;
    }
    num / den
}

/// R evaluated at (alpha2, beta2).
pub fn r3<T: Real>(c: usize, w0: T, w3: T, w2: T, w1: T) -> T {
    let a = alpha2(c, w0, w3, w2, w1);
    let b = beta2(c, w0, w3, w2);
    ratio_r(c, a, b).unwrap_or(T::nan())
}

/// Lowest admissible w_{C-1} inside a box, following the displayed rule
/// (the second term uses the upper w_{C-2} corner, the rest the lower).
pub fn omega_hat<T: Real>(c: usize, w0_lo: T, w3_lo: T, w2_lo: T, w2_hi: T) -> T {
    let cf = T::from_usize(c);
    let c1 = T::from_usize(c - 1);
    let c2 = T::from_usize(c - 2);
    let first = (cf * c1 * w2_lo + w0_lo * w2_lo) / (cf * w2_lo + cf * c1);
    let second = w3_lo * (T::one() + T::lit(2.0) * w0_lo / (cf * c2) - w2_hi / c2);
    first.max(second).min(w2_lo)
}

/// Lowest admissible w_{C-1} at a point (no box), used for sampling.
pub fn omega_c1_lower<T: Real>(c: usize, w0: T, w3: T, w2: T) -> T {
    let cf = T::from_usize(c);
    let c1 = T::from_usize(c - 1);
    let c2 = T::from_usize(c - 2);
    let first = (cf * c1 * w2 + w0 * w2) / (cf * w2 + cf * c1);
    let second = w3 * (T::one() + T::lit(2.0) * w0 / (cf * c2) - w2 / c2);
    first.max(second)
}

/// The search box: ranges for w0 and for w_{C-3}, w_{C-2}.
pub fn search_box(c: usize) -> ((f64, f64), (f64, f64)) {
    let cf = c as f64;
    ((cf - 2.7, (cf + 3.0) * cf), (2.0 * (cf - 2.7) / cf, (cf + 3.0) * cf))
}

/// True if (w0, w3, w2) satisfies the ordering and ratio constraints.
pub fn is_feasible(c: usize, w0: f64, w3: f64, w2: f64) -> bool {
    let cf = c as f64;
    let ((a0, b0), (a, b)) = search_box(c);
    let in_box = (a0..=b0).contains(&w0) && (a..=b).contains(&w3) && (a..=b).contains(&w2);
    in_box && w0 >= w3 && w3 >= w2 && (cf / 2.0) * w2 >= w0 && (cf / 3.0) * w3 >= w0
}

/// Per-axis quantities for the box loop.
struct Axis {
    grid: Vec<f64>,
}

impl Axis {
    fn new(lo: f64, hi: f64, n: usize) -> Self {
        let grid = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        Axis { grid }
    }
}

/// For alpha2: a = (C-1)!/w3^{C-3} and b = sum_{i=1}^{C-2} w3^{i-1}/i! * a.
fn alpha_coeffs(c: usize, w3: f64) -> (f64, f64) {
    let mut u = (c - 1) as f64;
    let mut b = u;
    for i in (1..c - 2).rev() {
        u *= (i + 1) as f64 / w3;
        b += u;
    }
    (u, b)
}

/// For beta2: (sum_{i=1}^{C-3} i t_i, sum_{i=0}^{C-3} t_i) with
/// t_i = w0^i/i! divided by w0^{C-3}/(C-3)!.
fn beta_coeffs(c: usize, w0: f64) -> (f64, f64) {
    let top = c - 3;
    let mut t = 1.0;
    let mut a = top as f64;
    let mut e = 1.0;
    for i in (1..=top).rev() {
        t *= i as f64 / w0;
        a += (i - 1) as f64 * t;
        e += t;
    }
    (a, e)
}

/// (C/w) I_{C-1} / I_C with I_k = 1 + (k/w) I_{k-1}: the service level.
#[inline]
fn service_level_fast(c: usize, w: f64) -> f64 {
    let inv = 1.0 / w;
    let mut prev = 1.0;
    let mut cur = 1.0;
    for k in 1..=c {
        prev = cur;
        cur = 1.0 + k as f64 * inv * cur;
    }
    c as f64 * inv * prev / cur
}

#[derive(Debug, Clone, Copy)]
struct BoxMin {
    value: f64,
    idx: (usize, usize, usize),
    count: u64,
}

impl BoxMin {
    fn empty() -> Self {
        BoxMin { value: f64::INFINITY, idx: (usize::MAX, 0, 0), count: 0 }
    }

    fn merge(self, o: BoxMin) -> BoxMin {
        let pick_o = o.value < self.value || (o.value == self.value && o.idx < self.idx);
        let count = self.count + o.count;
        if pick_o {
            BoxMin { count, ..o }
        } else {
            BoxMin { count, ..self }
        }
    }
}

/// Corner-based lower bound on R3 over the search box split into N^3
/// boxes (N^2 for C = 3).
pub fn certify_box(c: usize, n: usize) -> Result<Certificate> {
    check_range(c)?;
    if n < 10 {
        return domain(format!("grid resolution must be at least 10, got {n}"));
    }
    let start = Instant::now();
    let cf = c as f64;
    let ((lo0, hi0), (lo, hi)) = search_box(c);
    let ax0 = Axis::new(lo0, hi0, n);
    let ax = Axis::new(lo, hi, n);
    let collapsed = c == 3;

    let alpha_lo: Vec<(f64, f64)> = if collapsed {
        vec![alpha_coeffs(c, 1.0)]
    } else {
        ax.grid.iter().map(|&w| alpha_coeffs(c, w)).collect()
    };
    let beta_hi: Vec<(f64, f64)> = ax0.grid.iter().map(|&w| beta_coeffs(c, w)).collect();
    let inv_c2 = 1.0 / (cf - 2.0);
    let inv_c2c1 = 1.0 / ((cf - 2.0) * (cf - 1.0));

    let eval_row = |i: usize| -> BoxMin {
        let mut best = BoxMin::empty();
        let (w0l, w0u) = (ax0.grid[i], ax0.grid[i + 1]);
        let (ab, ae) = beta_hi[i + 1];
        let j_range = if collapsed { 0..1 } else { 0..n };
        for j in j_range {
            let (w3l, w3u, (ca, cb)) = if collapsed {
                (w0l, w0u, alpha_lo[0])
            } else {
                (ax.grid[j], ax.grid[j + 1], alpha_lo[j])
            };
            if w0u < w3l || (cf / 3.0) * w3u < w0l {
                continue;
            }
            for k in 0..n {
                let (w2l, w2u) = (ax.grid[k], ax.grid[k + 1]);
                if w3u < w2l || (cf / 2.0) * w2u < w0l {
                    continue;
                }
                let wh = omega_hat(c, w0l, w3l, w2l, w2u);
                let s = cf * (ca / w0l + cb + w2l) / (w2l * wh);
                let beta = (ab + w3u + w3u * w2u * inv_c2) / (ae + w3u * inv_c2 + w3u * w2u * inv_c2c1);
                let w = cf / s + beta;
                let v = (1.0 + 1.0 / s) * service_level_fast(c, w);
                best.count += 1;
                if v < best.value {
                    best.value = v;
                    best.idx = (i, j, k);
                }
            }
        }
        best
    };

    let best = (0..n)
        .into_par_iter()
        .map(eval_row)
        .reduce(BoxMin::empty, BoxMin::merge);
    if !best.value.is_finite() {
        return Err(Error::Internal(format!("no feasible box for C={c}")));
    }
    let (i, j, k) = best.idx;
    let w3 = if collapsed { ax0.grid[i] } else { ax.grid[j] };
    Ok(Certificate {
        c,
        method: CertMethod::BoxBruteforce,
        lower_bound: best.value,
        grid_n: Some(n),
        argmin_box: Some([ax0.grid[i], w3, ax.grid[k]]),
        boxes_evaluated: best.count,
        cases: None,
        runtime_s: start.elapsed().as_secs_f64(),
    })
}

/// Combined per-C certificate: the minimum of the three case bounds.
pub fn certify_c(c: usize, n: usize) -> Result<Certificate> {
    let start = Instant::now();
    let case1 = closed_form_case1::<f64>(c)?;
    let case2 = closed_form_case2::<f64>(c)?;
    let bx = certify_box(c, n)?;
    let cases = CaseValues { case1, case2, box_bound: bx.lower_bound };
    let (method, lower_bound) = [
        (CertMethod::Case1, case1),
        (CertMethod::Case2, case2),
        (CertMethod::BoxBruteforce, bx.lower_bound),
    ]
    .into_iter()
    .fold((CertMethod::Case1, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    Ok(Certificate {
        method,
        lower_bound,
        cases: Some(cases),
        runtime_s: start.elapsed().as_secs_f64(),
        ..bx
    })
}

/// MHR certificate for any C: the C = 2 closed form, the box search for
/// 3..=47 and the regular guarantee G(C) outside that range.
pub fn certify(c: usize, n: usize) -> Result<Certificate> {
    let start = Instant::now();
    let plain = |method, lower_bound| Certificate {
        c,
        method,
        lower_bound,
        grid_n: None,
        argmin_box: None,
        boxes_evaluated: 0,
        cases: None,
        runtime_s: start.elapsed().as_secs_f64(),
    };
    match c {
        0 => domain("certify needs C >= 1"),
        2 => Ok(plain(CertMethod::ClosedFormC2, c2_mhr_bound().bound)),
        MIN_C..=MAX_C => certify_c(c, n),
        _ => Ok(plain(CertMethod::RegularG, guarantee_g::<f64>(c)?)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MhrGuarantee {
    pub overall: f64,
    #[serde(rename = "argmin_C")]
    pub argmin_c: usize,
    pub per_c: Vec<Certificate>,
    pub tail: f64,
    pub grid_n: usize,
}

/// Combines per-C certificates for 3..=47 with the G(48) tail.
pub fn mhr_guarantee(n: usize) -> Result<MhrGuarantee> {
    let per_c = (MIN_C..=MAX_C).map(|c| certify_c(c, n)).collect::<Result<Vec<_>>>()?;
    let tail = guarantee_g::<f64>(MAX_C + 1)?;
    let (mut overall, mut argmin_c) = (tail, MAX_C + 1);
    for cert in &per_c {
        if cert.lower_bound < overall {
            overall = cert.lower_bound;
            argmin_c = cert.c;
        }
    }
    Ok(MhrGuarantee { overall, argmin_c, per_c, tail, grid_n: n })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct C2Bound {
    pub bound: f64,
    pub argmin: f64,
}

/// Service-level ratio lower bound for C = 2 under MHR valuations.
pub fn c2_mhr_ratio<T: Real>(w: T) -> T {
    let num = [8.0, 40.0, 84.0, 90.0, 50.0, 12.0, 1.0];
    let den = [8.0, 40.0, 84.0, 92.0, 52.0, 12.0, 1.0];
    let horner = |cs: &[f64]| cs.iter().rev().fold(T::zero(), |acc, &k| acc * w + T::lit(k));
    horner(&num) / horner(&den)
}

/// Revenue ratio for C = 2 with uniform valuations, as a function of w0.
pub fn c2_uniform_ratio<T: Real>(w: T) -> T {
    let two = T::lit(2.0);
    let q = (two * w * w + T::lit(8.0) * w + T::lit(4.0)).sqrt();
    let num = (w + two)
        * (w * w + T::lit(4.0) * w + two).sqrt()
        * (w * w - w - two + q)
        * (two * w + two + w * q);
    let den = two.sqrt()
        * w
        * (T::one() + w)
        * (w.powi(4) + T::lit(4.0) * w.powi(3) + T::lit(6.0) * w * w + T::lit(8.0) * w + T::lit(4.0)
            + two * w * w * q
            + two * w * q);
    num / den
}

const GOLDEN_ITERS: usize = 200;

/// Log-spaced scan of [lo, hi] to pick the basin, then golden section
/// inside the bracketing grid cells.
fn minimize_1d(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let n = 20_000;
    let mut best = (f64::INFINITY, lo);
    for k in 0..=n {
        let x = lo * (hi / lo).powf(k as f64 / n as f64);
        let v = f(x);
        if v < best.0 {
            best = (v, x);
        }
    }
    let step = (hi / lo).powf(1.0 / n as f64);
    let (mut a, mut b) = ((best.1 / step).max(lo), (best.1 * step).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..GOLDEN_ITERS {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
        if b - a < 1e-14 * b.abs() {
            break;
        }
    }
    let x = 0.5 * (a + b);
    (f(x), x)
}

/// Minimum of the C = 2 MHR rational bound over w0 in [1e-6, 1e3].
pub fn c2_mhr_bound() -> C2Bound {
    let (bound, argmin) = minimize_1d(c2_mhr_ratio::<f64>, 1e-6, 1e3);
    C2Bound { bound, argmin }
}

/// Minimum of the C = 2 uniform-valuation ratio over w0 in [1e-6, 1e3].
pub fn c2_uniform_bound() -> C2Bound {
    let (bound, argmin) = minimize_1d(c2_uniform_ratio::<f64>, 1e-6, 1e3);
    C2Bound { bound, argmin }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    /// w_{j+1}/(j+1) + w_{C-1}/w_j >= 1 + (C-j-1) w0/(C(j+1)).
    Mhr { j: usize },
    /// w_j >= w_{j+1}.
    Monotone { j: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintViolation {
    pub kind: ConstraintKind,
    /// lhs - rhs; negative when violated.
    pub slack: f64,
    /// Set when a zero denominator made the constraint undefined.
    pub infinite: bool,
}

/// Checks the MHR first-order inequalities and rate monotonicity,
/// returning the constraints whose slack is below -tol.
pub fn lemma_constraint_check(omega: &[f64], c: usize, tol: f64) -> Result<Vec<ConstraintViolation>> {
    if omega.len() != c {
        return Err(Error::Dimension(format!("expected {c} loads, got {}", omega.len())));
    }
    if let Some(w) = omega.iter().find(|w| **w < 0.0) {
        return domain(format!("loads must be nonnegative, got {w}"));
    }
    let cf = c as f64;
    let mut out = Vec::new();
    for j in 0..c.saturating_sub(1) {
        let jf = j as f64;
        let rhs = 1.0 + (cf - jf - 1.0) * omega[0] / (cf * (jf + 1.0));
        if omega[j] == 0.0 {
            out.push(ConstraintViolation {
                kind: ConstraintKind::Mhr { j },
                slack: f64::NEG_INFINITY,
                infinite: true,
            });
            continue;
        }
        let lhs = omega[j + 1] / (jf + 1.0) + omega[c - 1] / omega[j];
        if lhs - rhs < -tol {
            out.push(ConstraintViolation { kind: ConstraintKind::Mhr { j }, slack: lhs - rhs, infinite: false });
        }
    }
    for j in 0..c.saturating_sub(1) {
        let slack = omega[j] - omega[j + 1];
        if slack < -tol {
            out.push(ConstraintViolation { kind: ConstraintKind::Monotone { j }, slack, infinite: false });
        }
    }
    Ok(out)
}
