use dmcts::envs::fishwood::{Location, MOVE, STAY};
use dmcts::envs::redeed::{redeed_cost, redeed_emissions, redeed_globals, redeed_violations};
use dmcts::envs::{
    DangerousDst, DdstMap, Enumerable, Fishwood, FishwoodParams, Redeed, RedeedParams, RiskMdp, RiskMdpParams,
    TabularMdp, TabularSpec,
};
use dmcts::oracle::{ddst_safe_paths, risk_mdp_exact};
use dmcts::{Environment, ReturnVector, SimRng, Step, UtilityFunction};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};

fn rng(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Uniform-random episodes; the policy draws from its own stream.
fn trajectory<E: Environment>(mut env: E, episodes: usize, seed: u64) -> Vec<Step> {
    let mut env_rng = rng(seed);
    let mut policy = rng(seed.wrapping_add(1));
    let mut out = Vec::new();
    for _ in 0..episodes {
        env.reset(&mut env_rng);
        while !env.is_terminal() {
            let a = policy.gen_range(0..env.num_actions());
            out.push(env.step(a, &mut env_rng).unwrap());
        }
    }
    out
}

#[test]
fn every_environment_replays_bit_for_bit() {
    fn check<E: Environment>(env: E) {
        let a = trajectory(env.clone(), 30, 11);
        let b = trajectory(env, 30, 11);
        assert!(!a.is_empty());
        assert_eq!(a, b);
    }
    check(RiskMdp::new(RiskMdpParams::default()).unwrap());
    check(Fishwood::new(FishwoodParams::default()).unwrap());
    check(Redeed::new(RedeedParams::sample()).unwrap());
    check(DangerousDst::new(DdstMap::default_map()));
    check(TabularMdp::new(TabularSpec::random(&mut rng(3), 5, 3, 3, 4)).unwrap());
}

#[test]
fn fishwood_success_frequencies() {
    let params = FishwoodParams {
        horizon: 200_000,
        ..FishwoodParams::default()
    };
    for (location, component, p) in [(Location::River, 0, 0.25), (Location::Woods, 1, 0.65)] {
        let mut env = Fishwood::new(params).unwrap();
        env.set_position(location, 0);
        let mut r = rng(21);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| env.step(STAY, &mut r).unwrap().reward[component] == 1.0)
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - p).abs() <= 0.005, "{location:?}: {freq}");
    }
}

#[test]
fn fishwood_moves_are_deterministic() {
    let mut env = Fishwood::new(FishwoodParams::default()).unwrap();
    let mut r = rng(22);
    assert_eq!(env.location(), Location::River);
    env.step(MOVE, &mut r).unwrap();
    assert_eq!(env.location(), Location::Woods);
    env.step(STAY, &mut r).unwrap();
    assert_eq!(env.location(), Location::Woods);
}

#[test]
fn redeed_storm_wind_frequencies() {
    let env = Redeed::new(RedeedParams::sample()).unwrap();
    let storm = env.params().storm.clone();
    let mut counts = vec![0usize; storm.multipliers.len()];
    let mut r = rng(23);
    let mut policy = rng(24);
    let mut storm_hours = 0;
    while storm_hours < 10_000 {
        let mut live = env.clone();
        live.reset(&mut r);
        while !live.is_terminal() {
            let a = policy.gen_range(0..live.num_actions());
            if live.hour() >= storm.start_hour {
                let outcomes = live.outcomes(a).unwrap();
                let step = live.step(a, &mut r).unwrap();
                let i = outcomes.iter().position(|o| o.reward == step.reward).expect("outcome is enumerated");
                counts[i] += 1;
                storm_hours += 1;
            } else {
                live.step(a, &mut r).unwrap();
            }
        }
    }
    for (i, p) in storm.probabilities.iter().enumerate() {
        let freq = counts[i] as f64 / storm_hours as f64;
        assert!((freq - p).abs() <= 0.015, "multiplier {}: {freq}", storm.multipliers[i]);
    }
}

#[test]
fn redeed_outcome_rewards_are_distinct_per_multiplier() {
    let mut env = Redeed::new(RedeedParams::sample()).unwrap();
    let mut r = rng(25);
    while env.hour() < env.params().storm.start_hour {
        env.step(5, &mut r).unwrap();
    }
    let outs = env.outcomes(5).unwrap();
    assert_eq!(outs.len(), 3);
    for i in 0..3 {
        for j in 0..i {
            assert_ne!(outs[i].reward, outs[j].reward);
        }
    }
}

#[test]
fn redeed_rewards_are_negated_globals() {
    let params = RedeedParams::sample();
    let mut env = Redeed::new(params.clone()).unwrap();
    let mut r = rng(26);
    let first = env.dispatch(3, 1.0);
    let step = env.step(3, &mut r).unwrap();
    let g = redeed_globals(&params, &first, None).unwrap();
    assert_eq!(step.reward, g.scaled(-1.0));
}

fn powers_strategy() -> impl Strategy<Value = (Vec<f64>, Option<Vec<f64>>)> {
    let n = RedeedParams::sample().generators.len();
    (
        prop::collection::vec(0.0f64..600.0, n),
        prop::option::of(prop::collection::vec(0.0f64..600.0, n)),
    )
}

proptest! {
    #[test]
    fn redeed_penalty_vanishes_exactly_without_violations((powers, previous) in powers_strategy()) {
        let params = RedeedParams::sample();
        let g = redeed_globals(&params, &powers, previous.as_deref()).unwrap();
        let violated = !redeed_violations(&params, &powers, previous.as_deref()).is_empty();
        prop_assert_eq!(g[2] == 0.0, !violated);
        prop_assert!(g[2] >= 0.0);
    }

    #[test]
    fn redeed_globals_are_sums_of_locals((powers, previous) in powers_strategy()) {
        let params = RedeedParams::sample();
        let g = redeed_globals(&params, &powers, previous.as_deref()).unwrap();
        let mut cost = 0.0;
        let mut emissions = 0.0;
        for (n, &p) in powers.iter().enumerate() {
            cost += redeed_cost(&params, n, p).unwrap();
            emissions += redeed_emissions(&params, n, p).unwrap();
        }
        prop_assert_eq!(g[0].to_bits(), cost.to_bits());
        prop_assert_eq!(g[1].to_bits(), emissions.to_bits());
    }

    #[test]
    fn redeed_wind_is_never_penalised(p in 0.0f64..10_000.0) {
        let params = RedeedParams::sample();
        let mut powers: Vec<f64> = params.generators.iter().map(|g| g.p_min).collect();
        powers[params.wind] = p;
        prop_assert!(redeed_violations(&params, &powers, None).is_empty());
        prop_assert_eq!(redeed_emissions(&params, params.wind, p).unwrap(), 0.0);
    }
}

#[test]
fn ddst_damage_is_all_or_nothing_and_episodes_end_in_time() {
    let map = DdstMap::default_map();
    let horizon = map.horizon;
    let mut env = DangerousDst::new(map);
    let mut r = rng(27);
    let mut policy = rng(28);
    let mut destroyed = 0;
    for _ in 0..2000 {
        env.reset(&mut r);
        let mut total = ReturnVector::zeros(3);
        let mut steps = 0;
        while !env.is_terminal() {
            let step = env.step(policy.gen_range(0..4), &mut r).unwrap();
            total.add_assign_checked(&step.reward).unwrap();
            steps += 1;
        }
        assert!(steps <= horizon);
        assert!(total[1] == 0.0 || total[1] == -10.0, "damage {}", total[1]);
        assert_eq!(total[2], -(steps as f64));
        if total[1] < 0.0 {
            destroyed += 1;
        }
    }
    assert!(destroyed > 0);
}

#[test]
fn ddst_safe_route_to_the_54_treasure_yields_the_target() {
    let map = DdstMap::default_map();
    let u = UtilityFunction::target(vec![54.0, 0.0, -14.0]).unwrap();
    let sol = ddst_safe_paths(&map, &u).unwrap();
    assert_eq!(sol.best_path.len(), 14);
    let mut env = DangerousDst::new(map);
    let mut r = rng(29);
    let mut total = ReturnVector::zeros(3);
    for &a in &sol.best_path {
        total.add_assign_checked(&env.step(a, &mut r).unwrap().reward).unwrap();
    }
    assert!(env.is_terminal());
    assert_eq!(total, ReturnVector::from([54.0, 0.0, -14.0]));
    let expected = (54.0f64.powi(2) + 14.0f64.powi(2)).sqrt();
    assert!((u.evaluate(&total).unwrap() - expected).abs() < 1e-9);
    assert!((sol.best_utility - 55.785_303).abs() < 1e-6);
}

#[test]
fn risk_default_favours_investing_nothing() {
    let sol = risk_mdp_exact(&RiskMdpParams::default()).unwrap();
    assert_eq!(sol.constant_policy_values[0], 0.0);
    assert!(sol.constant_policy_values[1..].iter().all(|v| *v < 0.0));
    assert_eq!(sol.optimal_value, 0.0);
    assert!(sol.optimal_first_actions.contains(&0));
}

#[test]
fn enumerated_outcomes_match_sampled_frequencies() {
    let env = RiskMdp::new(RiskMdpParams::default()).unwrap();
    let outs = env.outcomes(2).unwrap();
    let mut r = rng(30);
    let n = 20_000;
    let mut counts = vec![0usize; outs.len()];
    for _ in 0..n {
        let step = env.clone().step(2, &mut r).unwrap();
        let i = outs
            .iter()
            .position(|o| o.reward == step.reward && o.next.state() == step.state)
            .unwrap();
        counts[i] += 1;
    }
    for (o, c) in outs.iter().zip(&counts) {
        assert!((*c as f64 / n as f64 - o.probability).abs() < 0.015);
    }
}
