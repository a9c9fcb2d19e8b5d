use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::nn::Activation;

fn pinned() -> Lesson {
    SetterConfig::default().pinned().unwrap()
}

fn blank_history() -> LessonHistory {
    LessonHistory::new([(pinned(), 0.0); HISTORY_LEN])
}

fn small_net(seed: u64, hidden: &[usize]) -> Mlp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sizes = vec![SETTER_INPUT];
    sizes.extend_from_slice(hidden);
    sizes.push(SETTER_OUTPUT);
    Mlp::new(&sizes, Activation::Tanh, 1.0, &mut rng)
}

#[test]
fn head_sizes_are_fixed() {
    assert_eq!(HEAD_SIZES, [15, 5, 10]);
    assert_eq!(SETTER_INPUT, 12);
    assert_eq!(SETTER_OUTPUT, 30);
}

/// Pearson χ² against uniform; critical values are the p = 0.001 quantiles.
#[test]
fn zero_network_samples_uniformly() {
    let net = Mlp::zeros(&[SETTER_INPUT, 8, SETTER_OUTPUT], Activation::Tanh);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let draws = 50_000;
    let mut counts = [vec![0u32; 15], vec![0u32; 5], vec![0u32; 10]];
    for _ in 0..draws {
        let p = propose_lesson(&net, &blank_history(), AblationMask::ALL, pinned(), &mut rng).unwrap();
        counts[0][p.lesson.action_space as usize] += 1;
        counts[1][p.lesson.perturbation as usize] += 1;
        counts[2][(p.lesson.bunching - 1) as usize] += 1;
    }
    let critical = [36.12, 18.47, 27.88];
    for (h, c) in counts.iter().enumerate() {
        let expected = draws as f64 / c.len() as f64;
        let chi2: f64 = c.iter().map(|&o| (f64::from(o) - expected).powi(2) / expected).sum();
        assert!(chi2 < critical[h], "head {h}: χ² = {chi2}");
    }
}

#[test]
fn ablation_pins_uncontrolled_components() {
    let net = small_net(1, &[16]);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let s_only: AblationMask = "s".parse().unwrap();
    let mut seen_s = std::collections::BTreeSet::new();
    for _ in 0..2000 {
        let p = propose_lesson(&net, &blank_history(), s_only, pinned(), &mut rng).unwrap();
        assert_eq!((p.lesson.perturbation, p.lesson.bunching), (0, 10));
        seen_s.insert(p.lesson.action_space);
    }
    assert!(seen_s.len() > 5);
    let beta_only: AblationMask = "beta".parse().unwrap();
    for _ in 0..200 {
        let p = propose_lesson(&net, &blank_history(), beta_only, pinned(), &mut rng).unwrap();
        assert_eq!((p.lesson.action_space, p.lesson.perturbation), (12, 0));
    }
}

#[test]
fn ablation_parsing() {
    assert_eq!("all".parse::<AblationMask>().unwrap(), AblationMask::ALL);
    let m: AblationMask = "alpha, beta".parse().unwrap();
    assert_eq!(m.as_array(), [false, true, true]);
    assert_eq!(m.to_string(), "alpha,beta");
    assert!("gamma".parse::<AblationMask>().is_err());
    assert!(AblationMask::new(false, false, false).is_err());
}

#[test]
fn proposals_are_deterministic() {
    let run = || {
        let mut s = Setter::new(SetterConfig::default(), AblationMask::ALL, 7).unwrap();
        (0..50)
            .map(|i| {
                let p = s.propose().unwrap();
                s.observe(&p, -(i as f64) * 0.5 - f64::from(p.lesson.action_space)).unwrap();
                p.lesson
            })
            .collect::<Vec<_>>()
    };
    assert_eq!(run(), run());
}

#[test]
fn same_history_same_distribution() {
    let net = small_net(3, &[8]);
    let mut h = blank_history();
    h.push(Lesson::new(4, 2, 7).unwrap(), 0.8);
    let a = head_distributions(&net, &h).unwrap();
    let b = head_distributions(&net, &h.clone()).unwrap();
    assert_eq!(a, b);
    h.push(Lesson::new(1, 0, 2).unwrap(), -1.0);
    assert_ne!(head_distributions(&net, &h).unwrap(), a);
}

#[test]
fn history_keeps_exactly_three() {
    let mut h = blank_history();
    for i in 0..5u8 {
        h.push(Lesson::new(i, 0, 1).unwrap(), f64::from(i));
    }
    let entries: Vec<_> = h.entries().cloned().collect();
    assert_eq!(entries.len(), 3);
    assert_eq!(entries[0].0.action_space, 2);
    assert_eq!(h.mean_reward(), 3.0);
    let x = h.encode();
    assert_eq!(x[0], 2.0 / 14.0);
    assert_eq!(x[2], 0.0);
    assert_eq!(&x[9..], &[2.0, 3.0, 4.0]);
}

#[test]
fn loss_is_negative_rbar_times_summed_log_probs() {
    let net = small_net(4, &[8]);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = propose_lesson(&net, &blank_history(), AblationMask::ALL, pinned(), &mut rng).unwrap();
    let r_bar = 0.7;
    let sum: f64 = p.log_probs.iter().sum();
    assert_eq!(setter_loss(&net, &p, r_bar, LossReduction::Sum), -r_bar * sum);
    let (loss, _) = setter_loss_grad(&net, &p, r_bar, LossReduction::Sum);
    assert!((loss - (-r_bar * sum)).abs() < 1e-12);
    let mean = setter_loss(&net, &p, r_bar, LossReduction::Mean);
    assert!((mean - (-r_bar * sum / 3.0)).abs() < 1e-12);
}

#[test]
fn gradient_matches_finite_differences() {
    let net = small_net(5, &[6, 5]);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut h = blank_history();
    h.push(Lesson::new(9, 3, 4).unwrap(), 1.2);
    for (ablation, reduction) in [
        (AblationMask::ALL, LossReduction::Sum),
        ("alpha".parse().unwrap(), LossReduction::Sum),
        ("s,beta".parse().unwrap(), LossReduction::Mean),
    ] {
        let p = propose_lesson(&net, &h, ablation, pinned(), &mut rng).unwrap();
        let (_, g) = setter_loss_grad(&net, &p, -0.9, reduction);
        let eps = 1e-6;
        for i in 0..net.num_params() {
            let mut plus = net.clone();
            plus.params_mut()[i] += eps;
            let mut minus = net.clone();
            minus.params_mut()[i] -= eps;
            let n = (setter_loss(&plus, &p, -0.9, reduction) - setter_loss(&minus, &p, -0.9, reduction)) / (2.0 * eps);
            let err = (g[i] - n).abs() / g[i].abs().max(n.abs()).max(1e-7);
            assert!(err < 1e-4 || (g[i] - n).abs() < 1e-9, "{ablation} param {i}: {} vs {n}", g[i]);
        }
    }
}

#[test]
fn excluded_heads_get_zero_gradient() {
    // Linear setter: output-layer rows map one-to-one onto head logits.
    let net = small_net(6, &[]);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let s_only: AblationMask = "s".parse().unwrap();
    let p = propose_lesson(&net, &blank_history(), s_only, pinned(), &mut rng).unwrap();
    let (_, g) = setter_loss_grad(&net, &p, 1.3, LossReduction::Sum);
    let rows = SETTER_INPUT;
    let bias_start = SETTER_INPUT * SETTER_OUTPUT;
    for out in 0..SETTER_OUTPUT {
        let row = &g[out * rows..(out + 1) * rows];
        let bias = g[bias_start + out];
        if out < 15 {
            assert!(bias != 0.0);
        } else {
            assert!(row.iter().all(|&x| x == 0.0) && bias == 0.0, "output {out}");
        }
    }
}

#[test]
fn zero_rbar_leaves_parameters_unchanged() {
    let mut s = Setter::new(SetterConfig::default(), AblationMask::ALL, 1).unwrap();
    let before = s.net.clone();
    let p = s.propose().unwrap();
    s.update(&p, 0.0).unwrap();
    assert_eq!(s.net, before);
}

#[test]
fn positive_rbar_raises_probability_of_sampled_lesson() {
    let cfg = SetterConfig { optimizer: OptimizerKind::sgd(), learning_rate: 1e-3, ..Default::default() };
    let mut s = Setter::new(cfg, AblationMask::ALL, 2).unwrap();
    for _ in 0..20 {
        let p = s.propose().unwrap();
        let prob = |net: &Mlp| {
            let d = head_probs(&net.forward(&p.input));
            (0..3).map(|h| d[h][p.sampled[h]]).product::<f64>()
        };
        let before = prob(&s.net);
        s.update(&p, 1.0).unwrap();
        assert!(prob(&s.net) > before);
    }
}

#[test]
fn steady_reward_scores_near_zero() {
    let mut stats = RunningStats::new(0.95);
    for i in 0..200 {
        stats.push(-10.0 + if i % 2 == 0 { 0.5 } else { -0.5 });
    }
    assert!(stats.z(-10.0).abs() < 0.2);
    assert!(stats.z(-8.0) > 3.0);
    assert_eq!(stats.z(100.0), 5.0);
    assert_eq!(RunningStats::new(0.9).z(3.0), 0.0);
}

#[test]
fn rejects_non_finite_reward() {
    let mut s = Setter::new(SetterConfig::default(), AblationMask::ALL, 1).unwrap();
    let p = s.propose().unwrap();
    assert!(matches!(s.observe(&p, f64::NAN), Err(Error::Numerical(_))));
}

/// Stationary oracle with a unique optimum at (6, 0, 5).
pub(crate) fn oracle(l: &Lesson) -> f64 {
    -(f64::from(l.action_space) - 6.0).abs() - 2.0 * f64::from(l.perturbation) - (f64::from(l.bunching) - 5.0).abs()
}

/// Probability the setter assigns to (6, 0, 5) given its current history.
pub(crate) fn optimum_probability(s: &Setter) -> f64 {
    let d = head_distributions(&s.net, s.history()).unwrap();
    d[0][6] * d[1][0] * d[2][4]
}

#[test]
fn bandit_converges_to_unique_optimum() {
    let mut s = Setter::new(SetterConfig::default(), AblationMask::ALL, 0).unwrap();
    let mut reached = None;
    for i in 1..=2000 {
        let p = s.propose().unwrap();
        s.observe(&p, oracle(&p.lesson)).unwrap();
        if optimum_probability(&s) > 0.5 {
            reached = Some(i);
            break;
        }
    }
    assert!(reached.is_some(), "modal probability {} after 2000 updates", optimum_probability(&s));
}

#[test]
fn one_iteration_runs_one_of_each() {
    let env = EnvConfig { num_stations: 6, num_buses: 4, episode_length: 600, ..Default::default() };
    let ppo = PpoConfig { horizon: 32, minibatch: 16, hidden: vec![8], ..Default::default() };
    let mut records = Vec::new();
    let (trainer, setter) = run_curriculum_training(
        &env,
        &DrConfig::default(),
        &ppo,
        &SetterConfig::default(),
        AblationMask::ALL,
        1,
        3,
        &mut |r, _, _| {
            records.push(r.clone());
            Ok(())
        },
    )
    .unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(trainer.learner.updates(), 1);
    assert_eq!(setter.updates(), 1);
    assert_eq!(records[0].step, 32);
}

