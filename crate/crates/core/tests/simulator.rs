mod common;

use rand::Rng;
use reuse_pricing::dynamic_solver::{solve_dynamic, stationary_of_policy, DEFAULT_MAX_ITER, DEFAULT_TOL};
use reuse_pricing::experiments::EXAMPLE1_RATIO;
use reuse_pricing::loss_core::{erlang_b, multiclass_static_occupancy};
use reuse_pricing::model::{CustomerClass, DynamicPolicy, Instance, Policy, StaticPolicy};
use reuse_pricing::simulator::*;
use reuse_pricing::static_solver::constructed_static;
use reuse_pricing::{Demand, Error};
use std::sync::Arc;

fn mm33() -> (Instance, Policy) {
    let inst = Instance::new(3, vec![CustomerClass::new(1.0, Demand::linear(1.0, 5.0).unwrap()).unwrap()]).unwrap();
    (inst, Policy::Static(StaticPolicy::new(vec![2.0])))
}

#[test]
fn zero_policy_earns_nothing() {
    let (inst, _) = mm33();
    let est =
        simulate(&inst, &Policy::Static(StaticPolicy::new(vec![0.0])), &exponential_services(&inst), 100.0, 3, 1).unwrap();
    assert_eq!(est.revenue_rate.mean, 0.0);
    assert_eq!(est.occupancy_hist[0].mean, 1.0);
    assert_eq!(est.blocking.mean, 0.0);
}

#[test]
fn erlang_loss_blocking() {
    let (inst, pol) = mm33();
    let est = simulate(&inst, &pol, &exponential_services(&inst), 1e4, 20, 11).unwrap();
    let want = erlang_b(3, 2.0);
    assert!(est.blocking.contains(want, 3.0), "{:?} vs {want}", est.blocking);
    assert!(est.blocking_arrival.contains(want, 3.0), "{:?}", est.blocking_arrival);
    let det = simulate(&inst, &pol, &[ServiceSpec::Deterministic { mean: 1.0 }], 1e4, 20, 12).unwrap();
    assert!(det.blocking.contains(want, 3.0), "{:?} vs {want}", det.blocking);
    // revenue rate = l p(l) (1 - B)
    let rev = 2.0 * 3.0 * (1.0 - want);
    assert!(est.revenue_rate.contains(rev, 3.0), "{:?} vs {rev}", est.revenue_rate);
    for rep in &est.per_rep {
        assert!((rep.occupancy.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }
}

#[test]
fn sampler_means() {
    let specs = [
        ServiceSpec::Exponential { mean: 2.0 },
        ServiceSpec::Deterministic { mean: 0.5 },
        ServiceSpec::LogNormal { mean: 3.0, cv: 2.0 },
        ServiceSpec::LogNormal { mean: 1.0, cv: 0.3 },
        ServiceSpec::HyperExponential { mean: 1.5, cv: 2.0 },
    ];
    for (i, s) in specs.iter().enumerate() {
        let cv = match *s {
            ServiceSpec::Exponential { .. } => 1.0,
            ServiceSpec::Deterministic { .. } => 0.0,
            ServiceSpec::LogNormal { cv, .. } | ServiceSpec::HyperExponential { cv, .. } => cv,
        };
        // four standard errors fit inside 1e-3 relative
        let n = ((4e3 * cv) as f64).powi(2).max(1e6) as usize;
        let xs = s.draws(n, i as u64).unwrap();
        assert!(xs.iter().all(|x| *x > 0.0));
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!(common::rel_diff(mean, s.mean()) <= 1e-3, "{s:?}: {mean}");
        if cv > 0.0 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((var.sqrt() / mean - cv).abs() <= 0.05 * cv, "{s:?} cv {}", var.sqrt() / mean);
        }
    }
    assert!(ServiceSpec::HyperExponential { mean: 1.0, cv: 0.5 }.draws(1, 0).is_err());
    assert!(ServiceSpec::Exponential { mean: -1.0 }.draws(1, 0).is_err());
}

#[test]
fn static_occupancy_matches_product_form() {
    let mut r = common::rng(21);
    for _ in 0..10 {
        let m = r.random_range(1..=3);
        let c = r.random_range(1..=4);
        let classes: Vec<CustomerClass> = (0..m)
            .map(|_| CustomerClass::new(r.random_range(1.0..5.0), Demand::linear(1.0, 10.0).unwrap()).unwrap())
            .collect();
        let inst = Instance::new(c, classes).unwrap();
        let rates: Vec<f64> = inst.classes.iter().map(|k| r.random_range(0.2..1.5) * k.mu).collect();
        let pol = StaticPolicy::new(rates);
        let mu_min = inst.classes.iter().map(|k| k.mu).fold(f64::INFINITY, f64::min);
        let est = simulate(&inst, &Policy::Static(pol.clone()), &exponential_services(&inst), 1e5 / mu_min, 20, r.random())
            .unwrap();
        let pf = multiclass_static_occupancy(c, &pol.loads(&inst)).unwrap();
        for (i, (ci, p)) in est.occupancy_hist.iter().zip(&pf.probs).enumerate() {
            assert!(ci.contains(*p, 3.0), "C={c} M={m} bin {i}: {ci:?} vs {p}");
        }
    }
}

#[test]
fn blocking_is_insensitive_to_service_law() {
    let mut r = common::rng(22);
    for _ in 0..5 {
        let inst = Instance::new(
            3,
            (0..2)
                .map(|_| CustomerClass::new(r.random_range(1.0..3.0), Demand::linear(1.0, 10.0).unwrap()).unwrap())
                .collect(),
        )
        .unwrap();
        let pol = Policy::Static(StaticPolicy::new(inst.classes.iter().map(|k| r.random_range(0.5..1.5) * k.mu).collect()));
        let seed = r.random();
        let exp = simulate(&inst, &pol, &exponential_services(&inst), 2e4, 20, seed).unwrap();
        let logn: Vec<ServiceSpec> =
            inst.classes.iter().map(|k| ServiceSpec::LogNormal { mean: 1.0 / k.mu, cv: 2.0 }).collect();
        let ln = simulate(&inst, &pol, &logn, 2e4, 20, seed).unwrap();
        let a: Vec<f64> = exp.per_rep.iter().map(|x| x.blocking_purchaser).collect();
        let b: Vec<f64> = ln.per_rep.iter().map(|x| x.blocking_purchaser).collect();
        let d = Ci::paired_difference(&a, &b);
        assert!(d.contains(0.0, 3.0), "{d:?}");
    }
}

#[test]
fn ci_shrinks_with_horizon() {
    let (inst, pol) = mm33();
    let svc = exponential_services(&inst);
    let short = simulate(&inst, &pol, &svc, 1e3, 200, 31).unwrap();
    let long = simulate(&inst, &pol, &svc, 2e3, 200, 32).unwrap();
    let f = short.revenue_rate.half_width / long.revenue_rate.half_width;
    assert!((1.2..=2.8).contains(&f), "factor {f}");
}

#[test]
fn simulation_is_deterministic() {
    let inst = common::example1();
    let pol = Policy::Static(StaticPolicy::new(vec![0.00199, 0.10999]));
    let svc = exponential_services(&inst);
    let a = simulate(&inst, &pol, &svc, 1e4, 4, 99).unwrap();
    let b = simulate(&inst, &pol, &svc, 1e4, 4, 99).unwrap();
    assert_eq!(a, b);
    let c = simulate(&inst, &pol, &svc, 1e4, 4, 100).unwrap();
    assert_ne!(a.per_rep, c.per_rep);
}

#[test]
fn input_errors() {
    let (inst, pol) = mm33();
    let svc = exponential_services(&inst);
    assert!(matches!(simulate(&inst, &pol, &svc, 0.0, 5, 1), Err(Error::Domain(_))));
    assert!(simulate(&inst, &pol, &svc, 10.0, 1, 1).is_err());
    assert!(matches!(simulate(&inst, &pol, &[], 10.0, 5, 1), Err(Error::Dimension(_))));
    let wrong = Policy::Static(StaticPolicy::new(vec![1.0, 1.0]));
    assert!(matches!(simulate(&inst, &wrong, &svc, 10.0, 5, 1), Err(Error::Dimension(_))));
    assert!(compare_policies(&inst, &[pol], &svc, 10.0, 5, 1).is_err());
}

#[test]
fn identical_policies_compare_equal() {
    let (inst, pol) = mm33();
    let cmp = compare_policies(&inst, &[pol.clone(), pol], &exponential_services(&inst), 1e3, 5, 3).unwrap();
    assert_eq!(cmp.ratios[1].mean, 1.0);
    assert_eq!(cmp.ratios[1].half_width, 0.0);
}

#[test]
fn example1_paired_ratio() {
    let inst = common::example1();
    let rep = solve_dynamic(&inst, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let st = stationary_of_policy(&inst, &rep.policy).unwrap();
    let tilde = constructed_static(&inst, &rep.policy, &st).unwrap();
    let cmp = compare_policies(
        &inst,
        &[Policy::Dynamic(rep.policy), Policy::Static(tilde)],
        &exponential_services(&inst),
        1e6,
        20,
        1,
    )
    .unwrap();
    let r = cmp.ratios[1];
    assert!(r.contains(EXAMPLE1_RATIO, 3.0), "{r:?}");
}

#[test]
fn static_policy_clears_general_service_bound() {
    // two classes, log-normal service; the benchmark heuristic posts the
    // occupancy-averaged rates of the exponential-service optimum
    let inst = Instance::new(
        3,
        vec![
            CustomerClass::new(0.5, Demand::linear(0.5, 6.0).unwrap()).unwrap(),
            CustomerClass::new(2.0, Demand::exponential(1.0, 4.0).unwrap()).unwrap(),
        ],
    )
    .unwrap();
    let rep = solve_dynamic(&inst, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    let st = stationary_of_policy(&inst, &rep.policy).unwrap();
    let tilde = constructed_static(&inst, &rep.policy, &st).unwrap();
    let space = rep.policy.space.clone();
    let mut num = vec![vec![0.0; 2]; inst.c];
    let mut den = vec![0.0; inst.c];
    for (idx, p) in st.probs.iter().enumerate() {
        let k = space.occupancy(idx);
        if k < inst.c {
            den[k] += p;
            for (j, v) in num[k].iter_mut().enumerate() {
                *v += rep.policy.rate(idx, j) * p;
            }
        }
    }
    let rates: Vec<f64> = (0..space.len())
        .flat_map(|idx| {
            let k = space.occupancy(idx);
            (0..2).map(move |j| (k, j))
        })
        .map(|(k, j)| if k < inst.c && den[k] > 0.0 { num[k][j] / den[k] } else { 0.0 })
        .collect();
    let aggregated = DynamicPolicy::new(Arc::clone(&space), rates).unwrap();
    let svc: Vec<ServiceSpec> = inst.classes.iter().map(|k| ServiceSpec::LogNormal { mean: 1.0 / k.mu, cv: 2.0 }).collect();
    let cmp = compare_policies(&inst, &[Policy::Dynamic(aggregated), Policy::Static(tilde)], &svc, 2e4, 20, 5).unwrap();
    let r = cmp.ratios[1];
    let bound = 1.0 - erlang_b(3, 3.0);
    assert!(r.mean >= bound - r.half_width, "{r:?} below {bound}");
}
