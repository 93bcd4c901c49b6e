mod common;

use common::{enumerate_rules, max_abs_diff};
use mfe_core::{value_iterate, ModelParams, Resource, RewardFn, RewardTable, ThresholdPolicy, Truncation};

const NMAX: usize = 6;

fn check(params: &ModelParams, others: ThresholdPolicy, kappa: f64, c: f64) {
    let vf = value_iterate(params, &others, kappa, c, Truncation::new(NMAX).unwrap(), 1e-13).unwrap();
    let vi: Vec<[f64; 2]> = (1..=NMAX)
        .map(|n| [vf.vhat(Resource::Low, n), vf.vhat(Resource::High, n)])
        .collect();
    let (best, best_threshold) = enumerate_rules(params, &others, kappa, c, NMAX);
    let gap = max_abs_diff(&vi, &best);
    assert!(
        gap < 1e-8,
        "value iteration differs from enumeration by {gap:e} (c = {c})"
    );
    // An optimal rule can always be taken of threshold form.
    let gap = max_abs_diff(&best, &best_threshold);
    assert!(gap < 1e-10, "threshold rules fall short by {gap:e} (c = {c})");
}

#[test]
fn value_iteration_matches_exhaustive_rule_enumeration() {
    let base = ModelParams::new(1.0, 0.9, 3.0, 0.5, 0.25, RewardFn::InverseN).unwrap();
    let others = ThresholdPolicy::new(1.5, 3.25).unwrap();
    for c in [0.05, 0.5, 1.0, 2.0, 4.0] {
        check(&base, others, 2.0, c);
    }
}

#[test]
fn enumeration_agrees_across_rewards_and_rates() {
    let table = RewardFn::Table(RewardTable::new(vec![2.0, 1.5, 0.5, 0.25]).unwrap());
    for (reward, gamma, kappa, mu01, mu10) in [
        (RewardFn::InverseSqrtN, 0.95, 4.0, 0.1, 0.1),
        (RewardFn::InverseNSquared, 0.75, 0.5, 2.0, 1.0),
        (table, 0.5, 8.0, 1.0, 3.0),
    ] {
        let params = ModelParams::new(1.0, gamma, 5.0, mu01, mu10, reward).unwrap();
        for others in [
            ThresholdPolicy::always_switch(),
            ThresholdPolicy::new(2.0, 4.0).unwrap(),
            ThresholdPolicy::never_switch(NMAX),
        ] {
            for c in [0.1, 0.8, 3.0] {
                check(&params, others, kappa, c);
            }
        }
    }
}
