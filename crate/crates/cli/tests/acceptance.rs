//! Acceptance suite: one test per release criterion, each printing a
//! single pass line. Criteria 1-10 exercise the library; criterion 11 runs
//! the installed binary end to end.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use progrl_core::grpo::{
    grpo_objective, grpo_step, group_advantages, mean_expected_reward, sample_group, sft_nll,
    train_hybrid, TrainExample,
};
use progrl_core::harness::{run_online_rl, CemConfig, HarnessTask, PointMassEnv, OBJECT_KEY};
use progrl_core::labeling::{
    geometric_progress, inherit_labels, label_trajectory, temporal_proxy, CotTemplateSet,
    LabelMode,
};
use progrl_core::metrics::{classify_quadrant, voc, Quadrant, RankMethod};
use progrl_core::response::{parse_response, render_response, ParseError, ParseMode};
use progrl_core::reward::{score, score_accuracy};
use progrl_core::service::{
    serve, OracleBackend, RewardClient, ScriptKind, ScriptSpec, ScriptedBackend, ServiceConfig,
};
use progrl_core::synthesis::{recover_interpolate, reverse_perturb, sample_level, ReversalSpec};
use progrl_core::types::{TaskFamily, TrajectoryKind};
use progrl_core::{
    EnvState, Frame, GeometricConfig, GrpoConfig, ProgressRecord, RewardQuery, RewardSpec,
    ToyPolicy, TrainConfig, Trajectory,
};

fn pass(criterion: usize, detail: &str) {
    println!("criterion {criterion}: PASS - {detail}");
}

fn state2(gx: f64, gy: f64, ox: f64, oy: f64, tx: f64, ty: f64) -> EnvState {
    let mut object_pos = BTreeMap::new();
    object_pos.insert(OBJECT_KEY.to_string(), vec![ox, oy]);
    EnvState {
        gripper_pos: vec![gx, gy],
        gripper_open: true,
        object_pos,
        goal_pos: vec![tx, ty],
        contact_points: Vec::new(),
    }
}

fn traj_of(states: Vec<EnvState>, kind: TrajectoryKind) -> Trajectory {
    let frames = states
        .iter()
        .map(|s| Frame::new(s.features(), None))
        .collect();
    Trajectory {
        goal: progrl_core::types::Goal::new("reach the object", TaskFamily::PickOnly),
        kind,
        frames,
        states: Some(states),
        actions: None,
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[test]
fn criterion_1_labeling_formula_exactness() {
    // Hand-built trajectory with irregular spacing so that every formula
    // term is exercised.
    let beta = 0.35;
    let states = vec![
        state2(0.9, -0.4, -0.2, 0.1, 0.6, 0.7),
        state2(0.55, -0.25, -0.15, 0.12, 0.6, 0.7),
        state2(0.2, -0.1, -0.05, 0.2, 0.6, 0.7),
        state2(0.0, 0.05, 0.1, 0.35, 0.6, 0.7),
        state2(-0.02, 0.16, 0.3, 0.5, 0.6, 0.7),
        state2(0.05, 0.2, 0.55, 0.66, 0.6, 0.7),
    ];
    let cfg = GeometricConfig {
        beta,
        target_object: OBJECT_KEY.to_string(),
        epsilon_change: None,
    };
    let traj = traj_of(states.clone(), TrajectoryKind::Expert);
    let got = geometric_progress(&traj, &cfg).unwrap();

    // Independent brute force: y = (1-beta)|g-o| + beta|o-goal|, then
    // normalize so max distance -> 0 and min distance -> 1.
    let ys: Vec<f64> = states
        .iter()
        .map(|s| {
            let o = &s.object_pos[OBJECT_KEY];
            (1.0 - beta) * euclid(&s.gripper_pos, o) + beta * euclid(o, &s.goal_pos)
        })
        .collect();
    let ymax = ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ymin = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    for (rec, &y) in got.iter().zip(&ys) {
        let expected = (ymax - y) / (ymax - ymin);
        assert!(
            (rec.v - expected).abs() < 1e-12,
            "geometric v {} vs brute force {expected}",
            rec.v
        );
        assert_eq!(rec.p, (100.0 * rec.v).round() as i32);
    }

    let proxy: Vec<f64> = temporal_proxy(5).unwrap();
    assert_eq!(proxy, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    for t_len in 2..40 {
        let vs: Vec<f64> = temporal_proxy(t_len).unwrap();
        for (t, &v) in vs.iter().enumerate() {
            let expected = t as f64 / (t_len - 1) as f64;
            assert!((v - expected).abs() < 1e-12);
        }
    }

    // Inheritance through an arbitrary provenance map.
    let expert_labels: Vec<ProgressRecord> = temporal_proxy(6)
        .unwrap()
        .into_iter()
        .map(|v| ProgressRecord::from_v(v, "r".into()))
        .collect();
    let sources = [0usize, 1, 2, 1, 4, 5, 3];
    let mut perturbed = traj_of(states, TrajectoryKind::Reversed);
    perturbed.frames = sources
        .iter()
        .map(|&s| Frame::new(vec![s as f64], Some(s)))
        .collect();
    let inherited = inherit_labels(&perturbed, &expert_labels).unwrap();
    for (rec, &src) in inherited.iter().zip(&sources) {
        assert!((rec.v - expert_labels[src].v).abs() < 1e-12);
    }
    pass(1, "geometric, temporal-proxy, and inheritance match brute force to 1e-12");
}

#[test]
fn criterion_2_synthesis_correctness() {
    // Recovery interpolation lands exactly on the expert target.
    let s_dev = state2(0.8, -0.7, 0.1, 0.1, 0.5, 0.5);
    let s_target = state2(-0.3, 0.45, 0.12, 0.08, 0.5, 0.5);
    for n_interp in [1usize, 3, 7] {
        let rec = recover_interpolate(&s_dev, &s_target, n_interp).unwrap();
        let last = rec.last().unwrap();
        for (a, b) in last.gripper_pos.iter().zip(&s_target.gripper_pos) {
            assert!((a - b).abs() < 1e-12, "endpoint gripper mismatch");
        }
        for (a, b) in last.object_pos[OBJECT_KEY]
            .iter()
            .zip(&s_target.object_pos[OBJECT_KEY])
        {
            assert!((a - b).abs() < 1e-12, "endpoint object mismatch");
        }
    }

    // Reversal hand case: o1..o5, q=3, w=2 -> [o1, o2, o3, o2, o5].
    let frames: Vec<Frame> = (1..=5).map(|i| Frame::new(vec![i as f64], None)).collect();
    let out = reverse_perturb(
        &frames,
        &ReversalSpec {
            points: vec![3],
            w: 2,
        },
    )
    .unwrap();
    let got: Vec<f64> = out.iter().map(|f| f.features[0]).collect();
    assert_eq!(got, vec![1.0, 2.0, 3.0, 2.0, 5.0]);

    // Level frequencies: uniform within each family to +-0.01 over 1e5.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for family in TaskFamily::ALL {
        let count = family.level_count();
        let mut hits = vec![0usize; count];
        let draws = 100_000;
        for _ in 0..draws {
            let level = sample_level(family, &mut rng);
            hits[level.level - 1] += 1;
        }
        for (i, &h) in hits.iter().enumerate() {
            let freq = h as f64 / draws as f64;
            let expected = 1.0 / count as f64;
            assert!(
                (freq - expected).abs() < 0.01,
                "{family:?} level {} frequency {freq}",
                i + 1
            );
        }
    }
    pass(2, "recovery endpoint, reversal hand case, and level frequencies check out");
}

#[test]
fn criterion_3_parser_golden_corpus_and_round_trip() {
    let mut well_formed: Vec<(String, i32)> = Vec::new();
    for p in [-100, -73, -1, 0, 1, 9, 42, 99, 100] {
        well_formed.push((render_response("reasoning text", p), p));
        well_formed.push((format!("<think>t</think><answer>{p}</answer>"), p));
        well_formed.push((format!("<think>t</think><answer> {p}% </answer>"), p));
        well_formed.push((format!("<think>multi\nline</think><answer>{p}%</answer> trailing"), p));
    }
    for p in [5, 37, 80] {
        well_formed.push((format!("<think>t</think><answer>+{p}%</answer>"), p));
        // Only the first pair of each tag counts.
        well_formed.push((
            format!("<think>first</think><answer>{p}%</answer><answer>0%</answer>"),
            p,
        ));
        well_formed.push((
            format!("prefix <think>padded</think> middle <answer>{p}</answer>"),
            p,
        ));
        well_formed.push((format!("<think>a<b</think><answer>{p}%</answer>"), p));
        well_formed.push((format!("<think>t</think><answer>0{p}%</answer>"), p));
    }
    assert!(well_formed.len() >= 50, "only {} well-formed cases", well_formed.len());
    for (text, expected) in &well_formed {
        let r = parse_response(text, ParseMode::Strict)
            .unwrap_or_else(|e| panic!("{text:?} failed: {e}"));
        assert_eq!(r.progress, *expected, "{text:?}");
    }

    let mut malformed: Vec<(String, ParseError)> = Vec::new();
    for text in [
        "",
        "no tags at all",
        "<answer>50%</answer>",
        "<think></think><answer>50%</answer>",
        "<think>   </think><answer>50%</answer>",
        "<think>unterminated<answer>50%</answer>",
        "<think>50%",
        "plain <answer>1</answer> text",
    ] {
        malformed.push((text.to_string(), ParseError::MissingThink));
    }
    for text in [
        "<think>t</think>",
        "<think>t</think><answer>50%",
        "<think>t</think>50%</answer>",
        "<think>t</think><answer stray>50</answer2>",
    ] {
        malformed.push((text.to_string(), ParseError::MissingAnswer));
    }
    for p in [0, 25, 100] {
        malformed.push((
            format!("<answer>{p}%</answer><think>late</think>"),
            ParseError::TagOrderViolation,
        ));
    }
    for body in [
        "", "%", "abc", "12.5", "--5", "+-5", "5 5", "0x10", "1234", "12%%", "NaN", "ten",
        "5e1", "½", "5.0%", "12 %%",
    ] {
        malformed.push((
            format!("<think>t</think><answer>{body}</answer>"),
            ParseError::MalformedProgress,
        ));
    }
    for body in ["101", "999", "-101", "+101", "200%", "-999%", "150", "-128"] {
        malformed.push((
            format!("<think>t</think><answer>{body}</answer>"),
            ParseError::OutOfRange,
        ));
    }
    // Pad the malformed corpus with distinct malformed bodies.
    for i in 0..20 {
        malformed.push((
            format!("<think>t</think><answer>bad{i}</answer>"),
            ParseError::MalformedProgress,
        ));
    }
    assert!(malformed.len() >= 50, "only {} malformed cases", malformed.len());
    for (text, expected) in &malformed {
        match parse_response(text, ParseMode::Strict) {
            Ok(r) => panic!("{text:?} unexpectedly parsed to {}", r.progress),
            Err(e) => assert_eq!(e, *expected, "{text:?}"),
        }
    }

    // Round trip: render then parse preserves reasoning and progress.
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let alphabet: Vec<char> = "abcdefghij KLMNOP.,:%!?0123456789-".chars().collect();
    for _ in 0..10_000 {
        let len = rng.gen_range(1..60);
        let reasoning: String = (0..len)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
            .collect();
        let reasoning = reasoning.trim().to_string();
        if reasoning.is_empty() {
            continue;
        }
        let progress = rng.gen_range(-100..=100);
        let r = parse_response(&render_response(&reasoning, progress), ParseMode::Strict).unwrap();
        assert_eq!(r.reasoning, reasoning);
        assert_eq!(r.progress, progress);
    }
    pass(3, "golden corpus and 10^4 round trips parse exactly");
}

#[test]
fn criterion_4_verifiable_reward() {
    let spec = RewardSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let fragments = [
        "<think>", "</think>", "<answer>", "</answer>", "text", "42", "%", "-100", "999",
        " ", "abc", "<think>ok</think>", "<answer>7%</answer>",
    ];
    for _ in 0..100_000 {
        let n = rng.gen_range(0..6);
        let text: String = (0..n)
            .map(|_| fragments[rng.gen_range(0..fragments.len())])
            .collect();
        let p_true = rng.gen_range(-100..=100);
        let s = score(&text, p_true, &spec);
        assert!((0.0..=2.0).contains(&s), "score {s} out of range for {text:?}");
        let perfect = matches!(
            parse_response(&text, ParseMode::Strict),
            Ok(ref r) if r.progress == p_true
        );
        assert_eq!(s == 2.0, perfect, "score {s} vs perfect {perfect} for {text:?}");
    }
    // |delta| = tau gives exactly 1.5 * e^-1.
    let at_tau = score_accuracy(40, 20, &spec);
    assert!((at_tau - 1.5 * (-1.0f64).exp()).abs() < 1e-9);
    assert!((score_accuracy(20, 40, &spec) - at_tau).abs() == 0.0);
    pass(4, "range, perfect-score equivalence, and tau point hold over 10^5 fuzz");
}

fn random_policy(feature_dim: usize, seed: u64) -> ToyPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = ToyPolicy::new(feature_dim);
    for row in &mut policy.weights {
        for w in row {
            *w = rng.gen_range(-0.05..0.05);
        }
    }
    policy
}

fn random_features(feature_dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..feature_dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn max_rel_error<F: Fn(&ToyPolicy) -> f64>(
    policy: &ToyPolicy,
    objective: F,
    grad: &[Vec<f64>],
) -> f64 {
    let h = 1e-6;
    // Relative to the gradient's overall scale, so near-zero components do
    // not divide finite-difference roundoff noise by a tiny denominator.
    let scale = grad
        .iter()
        .flatten()
        .fold(0.0f64, |m, g| m.max(g.abs()))
        .max(1e-6);
    let mut max_rel = 0.0f64;
    // Probe a deterministic subset of weights to keep the run fast.
    for bin in (0..grad.len()).step_by(41) {
        for j in 0..policy.feature_dim {
            let mut plus = policy.clone();
            plus.weights[bin][j] += h;
            let mut minus = policy.clone();
            minus.weights[bin][j] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            max_rel = max_rel.max((fd - grad[bin][j]).abs() / scale);
        }
    }
    max_rel
}

#[test]
fn criterion_5_grpo_math() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    // Advantage properties over random groups.
    for _ in 0..200 {
        let n = rng.gen_range(2..12);
        let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        let a = group_advantages(&rewards);
        let mean = a.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 1e-9, "advantage mean {mean}");
        let var = a.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        if a.iter().any(|&x| x != 0.0) {
            assert!((var.sqrt() - 1.0).abs() < 1e-9, "advantage std {}", var.sqrt());
        }
    }
    assert_eq!(group_advantages(&[1.5; 8]), vec![0.0; 8]);

    // Analytic gradients vs central finite differences, 100 instances.
    let spec = RewardSpec::default();
    let cfg = GrpoConfig::default();
    let feature_dim = 5;
    for i in 0..100u64 {
        let policy = random_policy(feature_dim, 100 + i);
        let x = random_features(feature_dim, 200 + i);
        let p_true = ((i as i32) % 201) - 100;
        let (_, sft_grad) = sft_nll(&policy, &x, p_true);
        let rel = max_rel_error(&policy, |p| sft_nll(p, &x, p_true).0, &sft_grad);
        assert!(rel <= 1e-5, "sft instance {i}: rel error {rel}");

        let old = random_policy(feature_dim, 300 + i);
        let ref_policy = random_policy(feature_dim, 400 + i);
        let mut grng = ChaCha8Rng::seed_from_u64(500 + i);
        let group = sample_group(&old, &x, p_true, &cfg, &spec, 0.05, &mut grng);
        let (_, grad) = grpo_step(&policy, &ref_policy, &group, &cfg);
        let rel = max_rel_error(&policy, |p| grpo_objective(p, &ref_policy, &group, &cfg), &grad);
        assert!(rel <= 1e-5, "grpo instance {i}: rel error {rel}");
    }

    // On-policy identity: sampling policy equals the update policy, and the
    // KL to itself vanishes, so the surrogate is exactly the advantage mean.
    for i in 0..20u64 {
        let policy = random_policy(feature_dim, 600 + i);
        let x = random_features(feature_dim, 700 + i);
        let mut grng = ChaCha8Rng::seed_from_u64(800 + i);
        let group = sample_group(&policy, &x, 40, &cfg, &spec, 0.0, &mut grng);
        let obj = grpo_objective(&policy, &policy, &group, &cfg);
        let adv_mean = group.advantages.iter().sum::<f64>() / group.advantages.len() as f64;
        assert_eq!(obj, adv_mean, "on-policy surrogate differs from advantage mean");
    }
    pass(5, "advantages, finite-difference gradients, and on-policy identity hold");
}

/// Synthetic labeled dataset where the label is a deterministic linear
/// function of one feature.
fn synthetic_dataset(n: usize, feature_dim: usize, seed: u64) -> Vec<TrainExample<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let mut features: Vec<f64> =
                (0..feature_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            features[0] = 1.0;
            let v: f64 = rng.gen_range(0.0..1.0);
            features[1] = v;
            TrainExample {
                features,
                p_true: (100.0 * v).round() as i32,
            }
        })
        .collect()
}

#[test]
fn criterion_6_hybrid_improves_on_sft() {
    let spec = RewardSpec::default();
    let mut improvements = Vec::new();
    for seed in 0..5u64 {
        let train = synthetic_dataset(60, 4, 1000 + seed);
        let held_out = synthetic_dataset(40, 4, 2000 + seed);
        let cfg = TrainConfig {
            sft_epochs: 8,
            grpo_iters: 40,
            grpo: GrpoConfig {
                seed,
                ..GrpoConfig::default()
            },
            ..TrainConfig::default()
        };
        let outcome = train_hybrid(&train, &cfg, &spec).unwrap();
        let sft = mean_expected_reward(&outcome.sft_policy, &held_out, &spec);
        let grpo = mean_expected_reward(&outcome.grpo_policy, &held_out, &spec);
        assert!(
            grpo >= sft,
            "seed {seed}: grpo {grpo} below sft {sft} on held-out queries"
        );
        improvements.push(grpo - sft);
    }
    improvements.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = improvements[improvements.len() / 2];
    assert!(median > 0.0, "median improvement {median}");
    pass(6, "grpo >= sft on held-out queries across 5 seeds, median improvement > 0");
}

/// Straight-line approach toward the object, for oracle service queries.
fn approach_states(steps: usize) -> Vec<EnvState> {
    (0..steps)
        .map(|t| {
            let frac = t as f64 / (steps - 1) as f64;
            state2(0.8 - 1.0 * frac, 0.6 - 0.8 * frac, -0.2, -0.2, -0.2, -0.2)
        })
        .collect()
}

#[test]
fn criterion_7_service_contract() {
    let oracle_cfg = GeometricConfig {
        beta: 0.0,
        target_object: OBJECT_KEY.to_string(),
        epsilon_change: None,
    };
    let config = ServiceConfig::new(Arc::new(OracleBackend::new(oracle_cfg.clone())));
    let map = config.map;
    let handle = serve(config).unwrap();
    let addr = handle.addr();

    let states = approach_states(100);
    let goal = progrl_core::types::Goal::new("reach the object", TaskFamily::PickOnly);
    let frames: Vec<Frame> = states.iter().map(|s| Frame::new(s.features(), None)).collect();

    let workers: Vec<_> = (0..16)
        .map(|w| {
            let states = states.clone();
            let frames = frames.clone();
            let goal = goal.clone();
            std::thread::spawn(move || {
                let mut client = RewardClient::connect(&addr.to_string()).unwrap();
                let mut replies = Vec::with_capacity(100);
                for step in 0..100usize {
                    let context = progrl_core::response::build_context::<f64, ChaCha8Rng>(
                        &goal, &frames, step, 2, None, None,
                    )
                    .unwrap();
                    let reply = client
                        .query(&RewardQuery {
                            episode_id: format!("client-{w}"),
                            step,
                            context,
                            debug: Some(progrl_core::service::DebugChannel {
                                first_state: states[0].clone(),
                                state: states[step].clone(),
                            }),
                        })
                        .unwrap();
                    replies.push(reply);
                }
                replies
            })
        })
        .collect();

    let mut total = 0usize;
    for worker in workers {
        let replies = worker.join().unwrap();
        assert_eq!(replies.len(), 100);
        total += replies.len();
        for (step, reply) in replies.iter().enumerate() {
            // In-order delivery: each reply echoes its query step.
            assert_eq!(reply.step, step, "reply out of order");
            let expected =
                map.psi * (reply.progress as f64).clamp(-map.c, map.c);
            assert_eq!(reply.reward, expected, "reward is not psi*clip(progress)");
            assert!(!reply.degraded);
        }
    }
    assert_eq!(total, 1600, "lost replies");
    handle.shutdown();

    // Timeout injection: the reply falls back to the held progress.
    let spec = ScriptSpec {
        kind: ScriptKind::Bias { bias: 0 },
        timeout_steps: vec![5],
    };
    let backend = ScriptedBackend::new(spec, oracle_cfg);
    let handle = serve(ServiceConfig::new(Arc::new(backend))).unwrap();
    let mut client = RewardClient::connect(&handle.addr().to_string()).unwrap();
    let mut last_progress = 0;
    for step in 0..10usize {
        let context = progrl_core::response::build_context::<f64, ChaCha8Rng>(
            &goal, &frames, step, 2, None, None,
        )
        .unwrap();
        let reply = client
            .query(&RewardQuery {
                episode_id: "timeout-case".into(),
                step,
                context,
                debug: Some(progrl_core::service::DebugChannel {
                    first_state: states[0].clone(),
                    state: states[step].clone(),
                }),
            })
            .unwrap();
        if step == 5 {
            assert!(reply.degraded, "timeout step not degraded");
            assert_eq!(reply.progress, last_progress, "fallback did not hold progress");
        } else {
            assert!(!reply.degraded);
            last_progress = reply.progress;
        }
    }
    handle.shutdown();
    pass(7, "1600 in-order replies, exact reward map, and hold-last fallback");
}

#[test]
fn criterion_8_zero_shot_online_rl() {
    // Interface separation: the agent-visible observation type carries no
    // true-reward or success channel, even through serialization.
    let obs = progrl_core::harness::AgentObservation {
        features: vec![0.25, -0.5],
        served_reward: 0.01,
    };
    let json = serde_json::to_string(&obs).unwrap();
    assert!(!json.contains("true"), "hidden channel leaked: {json}");
    assert!(!json.contains("success"), "hidden channel leaked: {json}");

    let env = PointMassEnv::new(HarnessTask::Reach, 2);
    let backend = OracleBackend::new(env.oracle_config());
    let handle = serve(ServiceConfig::new(Arc::new(backend))).unwrap();
    let addr = handle.addr().to_string();
    for seed in 0..3u64 {
        let cfg = CemConfig {
            seed,
            ..CemConfig::default()
        };
        let log = run_online_rl(&env, &addr, &cfg, 200).unwrap();
        assert!(log.episodes.len() <= 200, "budget exceeded");
        assert!(
            log.final_success >= 0.8,
            "seed {seed}: success {} below 0.8",
            log.final_success
        );
    }
    handle.shutdown();
    pass(8, "3/3 seeds reach >= 0.8 success within 200 episodes, no hidden channel");
}

fn scripted_quadrant(kind: ScriptKind, seed: u64) -> (Quadrant, f64, f64) {
    let env = PointMassEnv::new(HarnessTask::Pick, 2);
    let spec = ScriptSpec {
        kind,
        timeout_steps: Vec::new(),
    };
    let backend = ScriptedBackend::new(spec, env.oracle_config());
    let handle = serve(ServiceConfig::new(Arc::new(backend))).unwrap();
    let cfg = CemConfig {
        seed,
        ..CemConfig::default()
    };
    let log = run_online_rl(&env, &handle.addr().to_string(), &cfg, 200).unwrap();
    handle.shutdown();
    // Judge the trained behavior: the last quarter of training episodes.
    let tail = &log.episodes[log.episodes.len().saturating_sub(50)..];
    let report = classify_quadrant(tail, (50.0, 0.5));
    (report.quadrant, report.perceived, report.true_success)
}

#[test]
fn criterion_9_failure_taxonomy() {
    for seed in 0..3u64 {
        let (quadrant, perceived, true_success) =
            scripted_quadrant(ScriptKind::ProximityOnly, seed);
        assert!(
            perceived > 50.0 && true_success < 0.2,
            "seed {seed}: proximity script perceived {perceived}, true {true_success}"
        );
        assert_eq!(quadrant, Quadrant::RewardHacking, "seed {seed}");
    }
    for seed in 0..3u64 {
        let (quadrant, perceived, true_success) = scripted_quadrant(ScriptKind::Zero, seed);
        assert!(
            perceived < 50.0 && true_success < 0.2,
            "seed {seed}: zero script perceived {perceived}, true {true_success}"
        );
        assert_eq!(quadrant, Quadrant::SignalLimited, "seed {seed}");
    }
    pass(9, "proximity-only lands in reward-hacking, zero signal in signal-limited");
}

#[test]
fn criterion_10_voc_behavior() {
    // Strictly approaching experts: distance decreases every step, so the
    // geometric labels increase strictly and VOC is exactly 1.
    let templates = CotTemplateSet::builtin();
    let cfg = GeometricConfig {
        beta: 0.0,
        target_object: OBJECT_KEY.to_string(),
        epsilon_change: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut expert_vocs = Vec::new();
    let mut reversed_vocs = Vec::new();
    for _ in 0..20 {
        let steps = 20;
        let start = rng.gen_range(1.2..2.0);
        let states: Vec<EnvState> = (0..steps)
            .map(|t| {
                let d = start * (1.0 - t as f64 / (steps - 1) as f64);
                state2(d, 0.0, 0.0, 0.0, 0.0, 0.0)
            })
            .collect();
        let traj = traj_of(states, TrajectoryKind::Expert);
        let labels = label_trajectory(&traj, LabelMode::Geometric, &cfg, &templates).unwrap();
        let vs: Vec<f64> = labels.iter().map(|r| r.v).collect();
        expert_vocs.push(voc(&vs, RankMethod::Spearman).unwrap().value);

        // Reversal perturbation inherits regressed labels.
        let q = rng.gen_range(5..15);
        let frames = reverse_perturb(
            &traj.frames,
            &ReversalSpec {
                points: vec![q],
                w: 4,
            },
        )
        .unwrap();
        let reversed = Trajectory {
            kind: TrajectoryKind::Reversed,
            frames,
            states: None,
            actions: None,
            ..traj.clone()
        };
        let inherited = inherit_labels(&reversed, &labels).unwrap();
        let vs: Vec<f64> = inherited.iter().map(|r| r.v).collect();
        reversed_vocs.push(voc(&vs, RankMethod::Spearman).unwrap().value);
    }
    let expert_mean = expert_vocs.iter().sum::<f64>() / expert_vocs.len() as f64;
    let reversed_mean = reversed_vocs.iter().sum::<f64>() / reversed_vocs.len() as f64;
    assert!(expert_mean >= 0.99, "expert VOC {expert_mean}");
    assert!(
        reversed_mean < expert_mean,
        "reversed VOC {reversed_mean} not below expert {expert_mean}"
    );
    assert_eq!(
        voc(&[1.0, 3.0, 2.0, 4.0], RankMethod::Spearman).unwrap().value,
        0.8
    );
    pass(10, "expert VOC >= 0.99, reversal strictly lower, hand case exactly 0.8");
}

#[test]
fn criterion_11_demo_pipeline_deterministic() {
    use assert_cmd::Command;

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    for dir in [&dir_a, &dir_b] {
        Command::cargo_bin("progrl")
            .unwrap()
            .args(["demo", "--seed", "0", "--out"])
            .arg(dir.path().join("out"))
            .assert()
            .success();
    }
    // Every data artifact must be byte-identical between the two runs.
    let names = [
        "expert.jsonl",
        "nonexpert.jsonl",
        "labeled_expert.jsonl",
        "labeled_nonexpert.jsonl",
        "labeled_all.jsonl",
        "episodes.jsonl",
        "episodes.summary.json",
        "quadrant.json",
        "voc.json",
        "ckpt/sft_policy.json",
        "ckpt/grpo_policy.json",
        "ckpt/training_log.json",
    ];
    for name in names {
        let a = std::fs::read(dir_a.path().join("out").join(name)).unwrap();
        let b = std::fs::read(dir_b.path().join("out").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical-seed runs");
    }
    pass(11, "demo pipeline completes with byte-identical artifacts");
}
