use hotgp::envs::{make_env, EnvName, EnvOptions};
use hotgp::gaussian::{gaussian_condition, std_normal_quantile, truncated_normal_sample};
use hotgp::policy::TransitionBuffer;
use hotgp::{Matrix, MvNormal, Rng, RunConfig, Transition};
use proptest::prelude::*;

fn spd(d: usize, seed: u64) -> MvNormal {
    let mut rng = Rng::seed_from(seed);
    let a = Matrix::from_fn(d, d, |_, _| rng.normal());
    let mut s = a.matmul_t(&a);
    for i in 0..d {
        s.set(i, i, s.get(i, i) + 0.1);
    }
    MvNormal::new(rng.normals(d), s).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conditioning_shrinks_variance(d in 2usize..=6, seed in any::<u64>(), v in -3.0f64..3.0) {
        let joint = spd(d, seed);
        let obs = (seed % d as u64) as usize;
        let c = gaussian_condition(&joint, &[obs], &[v]).unwrap();
        let rest: Vec<usize> = (0..d).filter(|&i| i != obs).collect();
        prop_assert!(c.cov().is_symmetric(1e-12));
        for (k, &i) in rest.iter().enumerate() {
            prop_assert!(c.variance(k) >= -1e-12);
            prop_assert!(c.variance(k) <= joint.variance(i) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn sequential_conditioning_equals_joint(d in 3usize..=6, seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let joint = spd(d, seed);
        let both = gaussian_condition(&joint, &[0, d - 1], &[a, b]).unwrap();
        let first = gaussian_condition(&joint, &[d - 1], &[b]).unwrap();
        // index 0 keeps its position among the remaining coordinates
        let second = gaussian_condition(&first, &[0], &[a]).unwrap();
        for i in 0..d - 2 {
            prop_assert!((both.mean()[i] - second.mean()[i]).abs() < 1e-8 * (1.0 + both.mean()[i].abs()));
            for j in 0..d - 2 {
                let (x, y) = (both.cov().get(i, j), second.cov().get(i, j));
                prop_assert!((x - y).abs() < 1e-8 * (1.0 + x.abs()));
            }
        }
    }

    #[test]
    fn truncated_draws_respect_the_quantile(mu in -5.0f64..5.0, sigma in 0.01f64..10.0, q in 0.0f64..0.95, seed in any::<u64>()) {
        let mut rng = Rng::seed_from(seed);
        let floor = if q == 0.0 { f64::NEG_INFINITY } else { mu + sigma * std_normal_quantile(q).unwrap() };
        for _ in 0..32 {
            let x = truncated_normal_sample(mu, sigma, q, &mut rng);
            prop_assert!(x.is_finite());
            prop_assert!(x >= floor - 1e-9 * sigma);
        }
    }

    #[test]
    fn config_snapshot_round_trips(
        env in 0usize..4,
        seed in 0..=hotgp::config::MAX_SEED,
        strategy in prop::sample::select(vec!["greedy", "greedy_known_reward", "thompson", "hot_gp", "optimistic_diagonal", "hucrl_approx", "hucrl_known_reward"]),
        r_end in 0.1f64..0.9,
        lr in 1e-6f64..1e-2,
    ) {
        let text = format!("env = \"{}\"\n", EnvName::ALL[env].as_str());
        let cfg = RunConfig::from_toml_str(&text, &[
            format!("seed={seed}"),
            format!("strategy={strategy}"),
            format!("r_min_end={r_end:?}"),
            format!("lr={lr:e}"),
        ]).unwrap();
        prop_assert_eq!(cfg.seed, seed);
        prop_assert_eq!(cfg.r_min_end, r_end);
        let back = RunConfig::from_snapshot(&cfg.to_toml().unwrap()).unwrap();
        prop_assert_eq!(back, cfg);
    }

    #[test]
    fn oversized_seeds_are_rejected(seed in hotgp::config::MAX_SEED + 1..=u64::MAX) {
        let cfg = RunConfig { seed, ..RunConfig::preset(EnvName::UMaze) };
        prop_assert!(cfg.validate().unwrap_err().to_string().contains("seed"));
    }

    #[test]
    fn observations_stay_in_bounds(env in 0usize..4, seed in any::<u64>(), scale in 0.1f64..4.0) {
        let name = EnvName::ALL[env];
        let mut e = make_env(name, &EnvOptions { horizon: Some(40), ..Default::default() }).unwrap();
        let mut rng = Rng::seed_from(seed);
        let mut obs = e.reset(&mut rng);
        let spec = e.spec().clone();
        let within = |o: &[f64]| o.iter().zip(spec.obs_low.iter().zip(&spec.obs_high)).all(|(x, (lo, hi))| x.is_finite() && *lo - 1e-9 <= *x && *x <= *hi + 1e-9);
        prop_assert!(within(&obs));
        for _ in 0..40 {
            let a: Vec<f64> = (0..spec.act_dim()).map(|_| scale * (2.0 * rng.uniform() - 1.0)).collect();
            let expected = e.reward_oracle(&obs, &a, &e.boxed_clone().step(&a).obs);
            let out = e.step(&a);
            prop_assert!(within(&out.obs), "{:?}", out.obs);
            prop_assert_eq!(out.reward, expected);
            obs = out.obs;
        }
    }

    #[test]
    fn fifo_keeps_the_newest(cap in 1usize..50, n in 0usize..200) {
        let mut buf = TransitionBuffer::new(Some(cap));
        for i in 0..n {
            buf.push(Transition { state: vec![i as f64], action: vec![], next_state: vec![], reward: i as f64, terminal: false });
        }
        prop_assert_eq!(buf.len(), n.min(cap));
        let kept: Vec<f64> = buf.iter_fifo().map(|t| t.reward).collect();
        let expected: Vec<f64> = (n.saturating_sub(cap)..n).map(|i| i as f64).collect();
        prop_assert_eq!(kept, expected);
    }
}

#[test]
fn buffer_sampling_is_uniform() {
    let mut buf = TransitionBuffer::new(Some(10));
    for i in 0..25 {
        buf.push(Transition { state: vec![], action: vec![], next_state: vec![], reward: i as f64, terminal: false });
    }
    let mut rng = Rng::seed_from(77);
    let draws = 100_000;
    let mut counts = [0usize; 10];
    for i in buf.sample_indices(draws, &mut rng) {
        counts[i] += 1;
    }
    let expected = draws as f64 / 10.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 9 degrees of freedom, upper 0.1% point
    assert!(chi2 < 27.88, "chi2 {chi2}, counts {counts:?}");
}
