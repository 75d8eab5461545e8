//! Property and frequency tests for the environment, baseline, decision
//! rule and replay buffer.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shadow_rl::baseline::baseline_action;
use shadow_rl::ddpg::{DdpgAgent, DdpgConfig, ReplayBuffer, Transition};
use shadow_rl::env::{EnvConfig, Observation, ReachAvoidEnv, RewardMode, Scenario};
use shadow_rl::geometry::Point2;
use shadow_rl::shadow::{decide, record_transition, sample_t_train, DecisionMode, EpisodeSchedule};

fn scenario_strategy(obstacle_probability: f64) -> impl Strategy<Value = Scenario> {
    any::<u64>().prop_map(move |seed| Scenario::sample(&mut ChaCha8Rng::seed_from_u64(seed), obstacle_probability))
}

fn action_strategy() -> impl Strategy<Value = [f64; 2]> {
    prop_oneof![
        (-1.0..=1.0f64, -1.0..=1.0f64).prop_map(|(x, y)| [x, y]),
        (-3.0..3.0f64, -3.0..3.0f64).prop_map(|(x, y)| [x, y]),
        Just([1.0, 1.0]),
        Just([-1.0, 0.0]),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn episodes_respect_arena_collision_and_reward_rules(
        scenario in scenario_strategy(0.95),
        actions in prop::collection::vec(action_strategy(), 1..120),
        dense in any::<bool>(),
    ) {
        let config = EnvConfig {
            reward_mode: if dense { RewardMode::Dense } else { RewardMode::Sparse },
            ..EnvConfig::default()
        };
        let mut env = ReachAvoidEnv::new(config.clone(), scenario);
        env.reset(scenario);
        let mut steps = 0;
        for a in actions {
            if env.is_done() {
                prop_assert!(env.step(a).is_err());
                break;
            }
            let before = env.position();
            let r = env.step(a).unwrap();
            steps += 1;
            let p = env.position();
            prop_assert!((0.0..=10.0).contains(&p.x) && (0.0..=10.0).contains(&p.y));
            if r.collided {
                prop_assert_eq!(p.x.to_bits(), before.x.to_bits());
                prop_assert_eq!(p.y.to_bits(), before.y.to_bits());
            }
            prop_assert!((p.x - before.x).abs() <= 1.0 + 1e-12 && (p.y - before.y).abs() <= 1.0 + 1e-12);
            prop_assert!(!(r.terminated && r.truncated));
            prop_assert_eq!(r.terminated, shadow_rl::geometry::distance(p, scenario.goal) <= config.epsilon);
            if !dense {
                prop_assert!(r.reward == -1.0 || r.reward == 500.0);
                prop_assert_eq!(r.reward == 500.0, r.terminated);
            }
        }
        prop_assert!(steps <= 100);
    }

    #[test]
    fn environment_is_deterministic(scenario in scenario_strategy(0.95), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actions: Vec<[f64; 2]> = (0..100).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let run = || {
            let mut env = ReachAvoidEnv::new(EnvConfig::default(), scenario);
            env.reset(scenario);
            let mut trace = Vec::new();
            for a in &actions {
                if env.is_done() { break; }
                trace.push(env.step(*a).unwrap());
            }
            trace
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn baseline_solves_obstacle_free_scenarios_promptly(scenario in scenario_strategy(0.0)) {
        let mut env = ReachAvoidEnv::new(EnvConfig::default(), scenario);
        let mut obs = env.reset(scenario);
        let delta = scenario.goal - scenario.start;
        let bound = delta.x.abs().max(delta.y.abs()).ceil() as usize + 1;
        let mut steps = 0;
        loop {
            let r = env.step(baseline_action(&obs)).unwrap();
            steps += 1;
            obs = r.observation;
            if r.done() {
                prop_assert!(r.terminated);
                break;
            }
        }
        prop_assert!(steps <= bound, "{} steps, bound {}", steps, bound);
    }

    #[test]
    fn baseline_action_is_clamped_delta(ax in 0.0..10.0f64, ay in 0.0..10.0f64, gx in 0.0..10.0f64, gy in 0.0..10.0f64) {
        let obs = Observation {
            agent: Point2::new(ax, ay),
            goal: Point2::new(gx, gy),
            obs_p: Point2::new(-1.0, -1.0),
            obs_q: Point2::new(-1.0, -1.0),
        };
        let a = baseline_action(&obs);
        prop_assert_eq!(a, [(gx - ax).clamp(-1.0, 1.0), (gy - ay).clamp(-1.0, 1.0)]);
    }

    #[test]
    fn scenario_records_round_trip(scenario in scenario_strategy(0.5)) {
        prop_assert!(scenario.is_valid());
        let text = scenario.to_string();
        prop_assert_eq!(text.split_whitespace().count(), 9);
        prop_assert_eq!(text.parse::<Scenario>().unwrap(), scenario);
    }

    #[test]
    fn decisions_respect_rewriting_rule(seed in any::<u64>(), t in 0usize..100, t_train in 0usize..100, mode_ix in 0usize..4) {
        let mode = [
            DecisionMode::AgentDecision { eta: 0.5, lambda: 0.1 },
            DecisionMode::QCompare,
            DecisionMode::AgentOnly,
            DecisionMode::BaselineOnly,
        ][mode_ix];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let small = DdpgConfig { hidden: vec![8], ..DdpgConfig::default() };
        let agent = DdpgAgent::new(small, mode.actor_width(), &mut rng).unwrap();
        let scenario = Scenario::sample(&mut rng, 0.95);
        let obs = scenario.observation_at(scenario.start);
        let schedule = EpisodeSchedule { t_train };
        let d = decide(mode, &obs, &agent, t, schedule, Some(&mut rng)).unwrap();
        prop_assert_eq!(&d.stored_action[..2], &d.executed_action[..]);
        if !d.chose_agent {
            prop_assert_eq!(d.executed_action, d.baseline_proposal);
        }
        if t < t_train {
            prop_assert!(!d.chose_agent);
        }
        let mut buffer = ReplayBuffer::new(4);
        let stored = record_transition(mode, &d, &obs, -1.0, &obs, false, &mut buffer);
        prop_assert_eq!(stored, t >= t_train);
        if stored {
            prop_assert_eq!(buffer.iter().next().unwrap().action.len(), mode.actor_width());
        }
    }
}

#[test]
fn obstacle_frequency_matches_probability() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let n = 10_000;
    let with = (0..n).filter(|_| Scenario::sample(&mut rng, 0.95).obstacle.is_some()).count();
    let freq = with as f64 / n as f64;
    assert!((0.94..=0.96).contains(&freq), "{freq}");
}

#[test]
fn t_train_is_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut counts = [0usize; 100];
    let n = 100_000;
    for _ in 0..n {
        counts[sample_t_train(&mut rng, 100)] += 1;
    }
    for (v, c) in counts.iter().enumerate() {
        let f = *c as f64 / n as f64;
        assert!((0.008..=0.012).contains(&f), "value {v}: {f}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    assert!((0..100).all(|_| sample_t_train(&mut rng, 1) == 0));
}

#[test]
fn replay_sampling_is_uniform() {
    let mut buffer = ReplayBuffer::new(10);
    let obs = Scenario::sample(&mut ChaCha8Rng::seed_from_u64(1), 0.95).observation_at(Point2::new(1.0, 1.0));
    for i in 0..10 {
        buffer.push(Transition { state: obs, action: vec![0.0, 0.0], reward: i as f64, next_state: obs, terminal: false });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut counts = [0usize; 10];
    for _ in 0..10_000 {
        for t in buffer.sample(&mut rng, 10).unwrap() {
            counts[t.reward as usize] += 1;
        }
    }
    for c in counts {
        let f = c as f64 / 100_000.0;
        assert!((0.09..=0.11).contains(&f), "{f}");
    }
}

#[test]
fn target_networks_move_at_most_tau() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let config = DdpgConfig { hidden: vec![16, 16], ..DdpgConfig::default() };
    let tau = config.tau;
    let mut agent = DdpgAgent::new(config, 2, &mut rng).unwrap();
    let data: Vec<Transition> = (0..64)
        .map(|_| {
            let s = Scenario::sample(&mut rng, 0.95);
            let a = vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            Transition { state: s.observation_at(s.start), action: a, reward: rng.random_range(-1.0..500.0), next_state: s.observation_at(s.goal), terminal: rng.random_bool(0.2) }
        })
        .collect();
    let batch: Vec<&Transition> = data.iter().collect();
    for _ in 0..20 {
        let before = (agent.actor_target.clone(), agent.critic_target.clone());
        agent.update(&batch).unwrap();
        for (old, new, src) in [
            (&before.0, &agent.actor_target, &agent.actor),
            (&before.1, &agent.critic_target, &agent.critic),
        ] {
            for ((o, n), s) in old.params().iter().zip(new.params()).zip(src.params()) {
                assert!((n - o).abs() <= tau * (s - o).abs() * (1.0 + 1e-12) + 1e-15);
            }
        }
    }
}
