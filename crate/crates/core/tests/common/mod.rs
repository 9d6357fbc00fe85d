#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reuse_pricing::model::{CustomerClass, Instance};
use reuse_pricing::Demand;

/// Published four-digit values: (C, case 1, case 2, box at N = 500).
pub const PUBLISHED_BOUNDS: [(usize, f64, f64, f64); 45] = [
    (3, 0.9966, 0.9562, 0.9681),
    (4, 0.9672, 0.9453, 0.9600),
    (5, 0.9445, 0.9377, 0.9499),
    (6, 0.9302, 0.9324, 0.9388),
    (7, 0.9212, 0.9286, 0.9305),
    (8, 0.9153, 0.9258, 0.9247),
    (9, 0.9114, 0.9238, 0.9199),
    (10, 0.9089, 0.9223, 0.9165),
    (11, 0.9073, 0.9212, 0.9127),
    (12, 0.9063, 0.9204, 0.9101),
    (13, 0.9057, 0.9199, 0.9082),
    (14, 0.9055, 0.9196, 0.9069),
    (15, 0.9054, 0.9194, 0.9056),
    (16, 0.9056, 0.9193, 0.9049),
    (17, 0.9059, 0.9194, 0.9044),
    (18, 0.9063, 0.9195, 0.9043),
    (19, 0.9067, 0.9196, 0.9041),
    (20, 0.9073, 0.9198, 0.9042),
    (21, 0.9078, 0.9201, 0.9045),
    (22, 0.9084, 0.9204, 0.9047),
    (23, 0.9090, 0.9207, 0.9051),
    (24, 0.9096, 0.9210, 0.9056),
    (25, 0.9102, 0.9213, 0.9060),
    (26, 0.9108, 0.9217, 0.9064),
    (27, 0.9114, 0.9221, 0.9070),
    (28, 0.9121, 0.9224, 0.9076),
    (29, 0.9127, 0.9228, 0.9082),
    (30, 0.9133, 0.9232, 0.9087),
    (31, 0.9139, 0.9236, 0.9092),
    (32, 0.9145, 0.9240, 0.9097),
    (33, 0.9151, 0.9244, 0.9103),
    (34, 0.9157, 0.9247, 0.9110),
    (35, 0.9162, 0.9251, 0.9116),
    (36, 0.9168, 0.9255, 0.9121),
    (37, 0.9174, 0.9259, 0.9126),
    (38, 0.9179, 0.9263, 0.9131),
    (39, 0.9185, 0.9266, 0.9137),
    (40, 0.9190, 0.9270, 0.9143),
    (41, 0.9195, 0.9274, 0.9149),
    (42, 0.9200, 0.9277, 0.9155),
    (43, 0.9205, 0.9281, 0.9160),
    (44, 0.9210, 0.9285, 0.9165),
    (45, 0.9215, 0.9288, 0.9169),
    (46, 0.9220, 0.9292, 0.9174),
    (47, 0.9225, 0.9295, 0.9179),
];

/// Four-digit truncation, with a guard against representation error.
pub fn truncate4(x: f64) -> f64 {
    (x * 1e4 + 1e-9).floor() / 1e4
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn example1() -> Instance {
    reuse_pricing::experiments::example1_instance().unwrap()
}

pub fn big(x: f64) -> BigRational {
    BigRational::from_f64(x).unwrap()
}

pub fn big_int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// sum_{i<=C} rho^i / i! term list in exact arithmetic.
pub fn poisson_terms(c: usize, rho: &BigRational) -> Vec<BigRational> {
    let mut out = Vec::with_capacity(c + 1);
    let mut t = BigRational::one();
    out.push(t.clone());
    for i in 1..=c {
        t = t * rho / big_int(i as i64);
        out.push(t.clone());
    }
    out
}

/// Erlang B by the direct formula in exact arithmetic.
pub fn erlang_direct(c: usize, rho: f64) -> f64 {
    let terms = poisson_terms(c, &big(rho));
    let total = terms.iter().fold(BigRational::zero(), |a, b| a + b);
    (terms[c].clone() / total).to_f64().unwrap()
}

/// 1 - B_C(w) by the direct formula in exact arithmetic.
pub fn service_level_direct(c: usize, w: &BigRational) -> BigRational {
    let terms = poisson_terms(c, w);
    let total = terms.iter().fold(BigRational::zero(), |a, b| a + b);
    BigRational::one() - terms[c].clone() / total
}

/// Linear, exponential or uniform-valuation curve (all MHR).
pub fn random_mhr_demand(r: &mut ChaCha8Rng) -> Demand {
    let a = r.random_range(0.1..5.0);
    let b = r.random_range(0.5..10.0);
    match r.random_range(0..3) {
        0 => Demand::linear(a, b).unwrap(),
        1 => Demand::exponential(a, b).unwrap(),
        _ => {
            let lo = r.random_range(0.0..2.0);
            Demand::uniform_valuation(lo, lo + b, r.random_range(0.5..5.0)).unwrap()
        }
    }
}

/// MHR curves plus the regular, non-MHR reciprocal curve.
pub fn random_regular_demand(r: &mut ChaCha8Rng) -> Demand {
    if r.random_range(0..4) == 0 {
        Demand::reciprocal_tight(r.random_range(0.1..3.0), r.random_range(0.1..5.0), r.random_range(0.5..10.0)).unwrap()
    } else {
        random_mhr_demand(r)
    }
}

pub fn random_instance(r: &mut ChaCha8Rng, c: usize, m: usize, mhr_only: bool) -> Instance {
    let classes = (0..m)
        .map(|_| {
            let d = if mhr_only { random_mhr_demand(r) } else { random_regular_demand(r) };
            CustomerClass::new(r.random_range(0.1..5.0), d).unwrap()
        })
        .collect();
    Instance::new(c, classes).unwrap()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}
