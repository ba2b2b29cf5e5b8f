use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use neuron_agents::config::{ExperimentConfig, OutputMode, SchemeVariant, TaskRewardMode};
use neuron_agents::environment::{
    Action, CartPole, EnvState, Environment, ANGLE_LIMIT, POSITION_LIMIT,
};
use neuron_agents::neuron::{discounted_returns, standardize, NeuronPolicy};
use neuron_agents::rewards::{sparsity_reward, ActivityTraceState, SparsityBand};
use neuron_agents::seeding::environment_stream;

fn scheme() -> impl Strategy<Value = SchemeVariant> {
    prop_oneof![
        Just(SchemeVariant::Task),
        Just(SchemeVariant::All),
        Just(SchemeVariant::BioThenAll)
    ]
}

prop_compose! {
    fn valid_config()(
        num_layers in 1usize..8, layer_width in 1usize..64, hidden_dim in 1usize..64,
        last_population in any::<bool>(), episode_return in any::<bool>(),
        step_size in 1e-6f64..1.0, discount in 0.0f64..=1.0,
        scheme in scheme(), switch_episode in 0usize..5000,
        weights in proptest::array::uniform5(0.0f64..10.0),
        band in (0.0f64..=1.0, 0.0f64..=1.0), penalize_underactive in any::<bool>(),
        trace_decay in 0.01f64..0.99, trace_initial in 0.0f64..=1.0,
        trace_low in 0.01f64..0.5, trace_high in 0.51f64..0.99,
        max_episodes in 1usize..100_000, solve_threshold in 0.0f64..=500.0,
        window in 1usize..500, num_runs in 1usize..50, base_seed in any::<u64>(),
    ) -> ExperimentConfig {
        ExperimentConfig {
            num_layers,
            layer_width,
            output_mode: if last_population { OutputMode::LastPopulation } else { OutputMode::Appended },
            hidden_dim,
            step_size,
            discount,
            scheme,
            switch_episode,
            task_reward_mode: if episode_return { TaskRewardMode::EpisodeReturn } else { TaskRewardMode::PerStep },
            weight_task: weights[0],
            weight_activity: weights[1],
            weight_sparsity: weights[2],
            weight_prediction: weights[3],
            weight_trace: weights[4],
            sparsity_low: band.0.min(band.1),
            sparsity_high: band.0.max(band.1),
            penalize_underactive,
            trace_decay,
            trace_initial,
            trace_low,
            trace_high,
            max_episodes,
            solve_threshold,
            window,
            num_runs,
            base_seed,
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn config_round_trips_through_toml(config in valid_config()) {
        prop_assert!(config.validate().is_ok());
        let text = config.to_toml().unwrap();
        let loaded = ExperimentConfig::from_toml(&text).unwrap();
        prop_assert_eq!(&loaded, &config);
        prop_assert_eq!(loaded.to_toml().unwrap(), text);
    }

    #[test]
    fn trace_stays_in_unit_interval(initial in 0.0f64..=1.0, decay in 0.01f64..0.99, actions in proptest::collection::vec(any::<bool>(), 1..300)) {
        let mut state = ActivityTraceState::new(1, initial, decay);
        for a in actions {
            let t = state.update(0, a);
            prop_assert!((0.0..=1.0).contains(&t));
        }
    }

    #[test]
    fn sparsity_depends_only_on_own_action_and_fraction(
        layer in proptest::collection::vec(any::<bool>(), 1..40),
        rotation in 0usize..40,
        lo in 0.0f64..0.5, hi in 0.5f64..=1.0,
        penalize in any::<bool>(),
    ) {
        let band = SparsityBand { low: lo, high: hi, penalize_underactive: penalize };
        let rewards = sparsity_reward(&layer, &band);
        let mut permuted = layer.clone();
        permuted.rotate_left(rotation % layer.len());
        permuted.reverse();
        let permuted_rewards = sparsity_reward(&permuted, &band);
        let mut a = rewards.clone();
        let mut b = permuted_rewards;
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        prop_assert_eq!(a, b);
        // Neurons with the same action get the same reward.
        for (x, rx) in layer.iter().zip(&rewards) {
            for (y, ry) in layer.iter().zip(&rewards) {
                if x == y {
                    prop_assert_eq!(rx, ry);
                }
            }
        }
    }

    #[test]
    fn environment_is_deterministic(seed in any::<u64>(), actions in proptest::collection::vec(any::<bool>(), 1..200)) {
        let play = || {
            let mut env = CartPole::new();
            let mut rng = environment_stream(seed);
            let mut trace = vec![env.reset(&mut rng)];
            for &a in &actions {
                match env.step(Action::from_bit(a)) {
                    Ok(out) => {
                        trace.push(out.observation.clone());
                        if out.terminal {
                            break;
                        }
                    }
                    Err(e) => panic!("{e}"),
                }
            }
            trace
        };
        prop_assert_eq!(play(), play());
    }

    #[test]
    fn non_terminal_states_stay_inside_limits(seed in any::<u64>(), actions in proptest::collection::vec(any::<bool>(), 1..500)) {
        let mut env = CartPole::new();
        env.reset(&mut environment_stream(seed));
        let mut total = 0.0;
        for &a in &actions {
            let out = env.step(Action::from_bit(a)).unwrap();
            total += out.reward;
            prop_assert_eq!(total, out.step_index as f64);
            let s = env.state();
            if !out.terminal {
                prop_assert!(s.cart_position.abs() <= POSITION_LIMIT);
                prop_assert!(s.pole_angle.abs() <= ANGLE_LIMIT);
            } else {
                break;
            }
        }
        prop_assert!((1.0..=500.0).contains(&total));
    }

    #[test]
    fn states_stay_finite(x in -2.4f64..2.4, v in -10.0f64..10.0, th in -0.2f64..0.2, w in -10.0f64..10.0, right in any::<bool>()) {
        let s = EnvState::new(x, v, th, w).advance(Action::from_bit(right));
        prop_assert!(s.to_array().iter().all(|c| c.is_finite()));
    }

    #[test]
    fn standardized_returns_have_zero_mean(rewards in proptest::collection::vec(-5.0f64..5.0, 1..100), gamma in 0.0f64..=1.0) {
        let g = standardize(&discounted_returns(&rewards, gamma).unwrap());
        let mean = g.iter().sum::<f64>() / g.len() as f64;
        prop_assert!(mean.abs() < 1e-9);
    }
}

/// The full update direction `sum_t Ghat_t grad log pi(a_t | x_t)` against
/// central differences of the same objective with `Ghat` held fixed.
#[test]
fn trajectory_score_matches_finite_differences() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let h = 1e-5;
    for _ in 0..20 {
        let input_dim = rng.gen_range(1..8);
        let policy = NeuronPolicy::random(input_dim, rng.gen_range(1..10), &mut rng);
        let steps = rng.gen_range(2..30);
        let inputs: Vec<Vec<f64>> = (0..steps)
            .map(|_| (0..input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let actions: Vec<bool> = (0..steps).map(|_| rng.gen()).collect();
        let rewards: Vec<f64> = (0..steps).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let weights = standardize(&discounted_returns(&rewards, 0.9).unwrap());
        let objective = |p: &NeuronPolicy| -> f64 {
            inputs
                .iter()
                .zip(&actions)
                .zip(&weights)
                .map(|((x, &a), w)| w * p.log_prob(x, a).unwrap())
                .sum()
        };
        let analytic: Vec<f64> = policy
            .weighted_score(&inputs, &actions, &weights)
            .unwrap()
            .iter()
            .collect();
        for (k, a) in analytic.iter().enumerate() {
            let mut plus = policy.clone();
            *plus.parameter_mut(k) += h;
            let mut minus = policy.clone();
            *minus.parameter_mut(k) -= h;
            let numeric = (objective(&plus) - objective(&minus)) / (2.0 * h);
            let scale = a.abs().max(numeric.abs()).max(1e-8);
            assert!(
                (a - numeric).abs() / scale < 1e-4,
                "coordinate {k}: {a} vs {numeric}"
            );
        }
    }
}

#[test]
fn reset_stream_is_replayable() {
    let mut a = CartPole::new();
    let mut b = CartPole::new();
    let mut rng = environment_stream(3);
    let mut copy = rng.clone();
    assert_eq!(a.reset(&mut rng), b.reset(&mut copy));
    assert_eq!(a.reset(&mut rng), b.reset(&mut copy));
}
