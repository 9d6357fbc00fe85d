mod common;

use rand::Rng;
use reuse_pricing::dynamic_solver::*;
use reuse_pricing::experiments::{EXAMPLE1_LAMBDA1_EMPTY, EXAMPLE1_REVENUE};
use reuse_pricing::loss_core::{birth_death_stationary, StateSpace};
use reuse_pricing::model::{CustomerClass, DynamicPolicy, Instance, StaticPolicy};
use reuse_pricing::static_solver::{constructed_static, one_class_reduction, static_revenue};
use reuse_pricing::{Demand, Error};
use std::sync::Arc;

fn one_class(c: usize, mu: f64, d: Demand) -> Instance {
    Instance::new(c, vec![CustomerClass::new(mu, d).unwrap()]).unwrap()
}

#[test]
fn single_unit_matches_grid_oracle() {
    let inst = one_class(1, 1.0, Demand::linear(1.0, 1.0).unwrap());
    let rep = solve_dynamic(&inst, 1e-12, 100_000).unwrap();
    // brute force over lambda p(lambda) / (1 + lambda / mu) on [0, 0.5]
    let n = 1_000_000;
    let (best, at) = (0..=n)
        .map(|k| {
            let l = 0.5 * k as f64 / n as f64;
            (l * (1.0 - l) / (1.0 + l), l)
        })
        .fold((f64::NEG_INFINITY, 0.0), |acc, x| if x.0 > acc.0 { x } else { acc });
    assert!((rep.revenue - best).abs() < 1e-9, "{} vs {best}", rep.revenue);
    assert!((rep.policy.rate(0, 0) - at).abs() < 1e-5);
    assert!((at - (2f64.sqrt() - 1.0)).abs() < 1e-6);
    assert!(rep.gain_bounds.0 <= rep.revenue && rep.revenue <= rep.gain_bounds.1);
}

#[test]
fn example1_optimal_policy() {
    let inst = common::example1();
    let rep = solve_dynamic(&inst, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!((rep.revenue - EXAMPLE1_REVENUE).abs() <= 1e-3, "{}", rep.revenue);
    let s = &rep.policy.space;
    assert!((rep.policy.rate(s.index_of(&[0, 0]).unwrap(), 0) - EXAMPLE1_LAMBDA1_EMPTY).abs() <= 5e-3);
    assert!(rep.policy.rate(s.index_of(&[2, 0]).unwrap(), 0).abs() <= 1e-6);
    // the gain agrees with the stationary revenue of the policy
    let st = stationary_of_policy(&inst, &rep.policy).unwrap();
    let r = revenue_of_policy(&inst, &rep.policy, &st).unwrap();
    assert!((r - rep.revenue).abs() <= 1e-8, "{r} vs {}", rep.revenue);
    assert!(st.balance_residual <= 1e-8);
}

#[test]
fn reciprocal_small_mu_policy() {
    let inst = one_class(3, 1e-4, Demand::reciprocal_tight(1.0, 1.0, 10.0).unwrap());
    let rep = solve_dynamic(&inst, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
    assert!((rep.policy.rate(0, 0) - 10.0).abs() < 1e-6);
    assert!((rep.policy.rate(1, 0) - 10.0).abs() < 1e-6);
    assert!(rep.policy.rate(2, 0).abs() < 1e-6);
    let kkt = kkt_residual_1class(&inst, &rep).unwrap();
    assert!(kkt.boundary);
}

#[test]
fn methods_agree() {
    let mut r = common::rng(5);
    for _ in 0..5 {
        let inst = common::random_instance(&mut r, 3, 2, false);
        let pi = solve_dynamic_with(&inst, &SolveOptions { tol: 1e-10, max_iter: 1_000_000, method: Method::PolicyIteration })
            .unwrap();
        let vi = solve_dynamic_with(
            &inst,
            &SolveOptions { tol: 1e-10, max_iter: 10_000_000, method: Method::RelativeValueIteration },
        )
        .unwrap();
        assert!((pi.revenue - vi.revenue).abs() <= 1e-8 * pi.revenue.max(1.0), "{} vs {}", pi.revenue, vi.revenue);
    }
}

#[test]
fn iteration_limit_is_a_convergence_error() {
    let inst = common::example1();
    let err = solve_dynamic_with(&inst, &SolveOptions { tol: 1e-12, max_iter: 2, method: Method::RelativeValueIteration })
        .unwrap_err();
    assert!(matches!(err, Error::Convergence { iterations: 2, .. }), "{err:?}");
}

#[test]
fn stationary_constant_policy_is_birth_death() {
    let inst = one_class(2, 1.5, Demand::linear(1.0, 4.0).unwrap());
    let space = Arc::new(StateSpace::new(2, 1).unwrap());
    let p = DynamicPolicy::constant(space, &[1.2]).unwrap();
    let st = stationary_of_policy(&inst, &p).unwrap();
    let bd = birth_death_stationary(&[1.2, 1.2], 1.5, 2).unwrap();
    for (a, b) in st.probs.iter().zip(&bd.probs) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn stationary_with_closed_full_state() {
    let inst = one_class(3, 1.0, Demand::reciprocal_tight(1.0, 1.0, 10.0).unwrap());
    let space = Arc::new(StateSpace::new(3, 1).unwrap());
    let p = DynamicPolicy::new(space, vec![10.0, 10.0, 0.0, 0.0]).unwrap();
    let st = stationary_of_policy(&inst, &p).unwrap();
    assert_eq!(st.probs[3], 0.0);
    let total: f64 = st.probs.iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn revenue_of_policy_examples() {
    let inst = one_class(1, 2.0, Demand::linear(1.0, 1.0).unwrap());
    let space = Arc::new(StateSpace::new(1, 1).unwrap());
    let zero = DynamicPolicy::constant(space.clone(), &[0.0]).unwrap();
    let st = stationary_of_policy(&inst, &zero).unwrap();
    assert_eq!(revenue_of_policy(&inst, &zero, &st).unwrap(), 0.0);
    let l = 0.3;
    let p = DynamicPolicy::constant(space, &[l]).unwrap();
    let st = stationary_of_policy(&inst, &p).unwrap();
    let want = l * (1.0 - l) * 2.0 / (2.0 + l);
    assert!((revenue_of_policy(&inst, &p, &st).unwrap() - want).abs() < 1e-15);
}

#[test]
fn kkt_residual_small_on_interior_optima() {
    let inst = one_class(2, 1.0, Demand::linear(1.0, 3.0).unwrap());
    let rep = solve_dynamic(&inst, 1e-10, DEFAULT_MAX_ITER).unwrap();
    let kkt = kkt_residual_1class(&inst, &rep).unwrap();
    assert!(!kkt.boundary);
    assert!(kkt.residual <= 1e-4, "{}", kkt.residual);

    let inst = one_class(3, 0.7, Demand::exponential(1.0, std::f64::consts::E).unwrap());
    let rep = solve_dynamic(&inst, 1e-10, DEFAULT_MAX_ITER).unwrap();
    let kkt = kkt_residual_1class(&inst, &rep).unwrap();
    assert!(!kkt.boundary);
    assert!(kkt.residual <= 1e-4, "{}", kkt.residual);
    assert_eq!(rep.kkt.as_ref().unwrap().residual, kkt.residual);

    assert!(kkt_residual_1class(&common::example1(), &rep).is_err());
}

#[test]
fn single_class_rates_are_monotone() {
    let mut r = common::rng(6);
    for _ in 0..50 {
        let c = r.random_range(2..=6);
        let inst = common::random_instance(&mut r, c, 1, true);
        let rep = solve_dynamic(&inst, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let w = &rep.kkt.as_ref().unwrap().omega;
        for j in 1..c {
            assert!(w[j - 1] >= w[j] - 1e-6, "{inst:?}: {w:?}");
        }
    }
}

#[test]
fn gain_dominates_static_policies() {
    let mut r = common::rng(7);
    for _ in 0..5 {
        let m = r.random_range(1..=2);
        let inst = common::random_instance(&mut r, 3, m, false);
        let rep = solve_dynamic(&inst, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let peaks = inst.peak_rates();
        for _ in 0..20 {
            let rates: Vec<f64> = peaks.iter().map(|p| r.random_range(0.0..=*p)).collect();
            let v = static_revenue(&inst, &StaticPolicy::new(rates)).unwrap();
            assert!(rep.revenue >= v - 1e-8, "{} < {v}", rep.revenue);
        }
    }
}

fn reduction_instances() -> Vec<Instance> {
    let mut r = common::rng(8);
    (0..20)
        .map(|_| {
            let c = r.random_range(1..=4);
            common::random_instance(&mut r, c, 2, false)
        })
        .collect()
}

#[test]
fn one_class_reduction_reproduces_occupancy() {
    for inst in reduction_instances() {
        let rep = solve_dynamic(&inst, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let st = stationary_of_policy(&inst, &rep.policy).unwrap();
        let red = one_class_reduction(&inst, &rep.policy, &st).unwrap();
        let agg = st.aggregate();
        let c = inst.c;
        let mut w = vec![1.0; c + 1];
        for k in 0..c {
            w[k + 1] = w[k] * red.lambda_hat_k[k] / ((k + 1) as f64 * red.mu_hat_k[k]);
        }
        let total: f64 = w.iter().sum();
        for k in 0..=c {
            assert!((w[k] / total - agg.probs[k]).abs() <= 1e-8, "C={c} k={k}");
        }
    }
}

#[test]
fn little_law_identity() {
    for inst in reduction_instances() {
        let rep = solve_dynamic(&inst, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let st = stationary_of_policy(&inst, &rep.policy).unwrap();
        let red = one_class_reduction(&inst, &rep.policy, &st).unwrap();
        let agg = st.aggregate();
        let lhs = agg.mean();
        let rhs = red.lambda_hat * (1.0 - agg.blocking()) / red.mu_hat;
        assert!((lhs - rhs).abs() <= 1e-8, "{lhs} vs {rhs}");
        // the constructed static rates sum to lambda_hat
        let tilde = constructed_static(&inst, &rep.policy, &st).unwrap();
        assert!((tilde.rates.iter().sum::<f64>() - red.lambda_hat).abs() < 1e-12);
    }
}

#[test]
fn best_rate_examples() {
    let lin = Demand::linear(1.0, 1.0).unwrap();
    assert!((best_rate(&lin, 0.5, 0.0) - 0.5).abs() < 1e-12);
    assert!((best_rate(&lin, 0.5, -0.5) - 0.25).abs() < 1e-12);
    let ex = Demand::exponential(1.0, std::f64::consts::E).unwrap();
    // maximizer of l ln(e / l) - 0.5 l is exp(-0.5)
    assert!((best_rate(&ex, ex.peak_rate(), -0.5) - (-0.5f64).exp()).abs() < 1e-8);
    let rec = Demand::reciprocal_tight(1.0, 1.0, 10.0).unwrap();
    assert_eq!(best_rate(&rec, 10.0, -2.0), 0.0);
    assert_eq!(best_rate(&rec, 10.0, -0.5), 10.0);
}
