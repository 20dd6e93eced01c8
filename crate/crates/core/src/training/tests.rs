use std::sync::Arc;

use chrono::NaiveDate;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::agent::{Agent, LearnedModel, MctsConfig, ModelSpec, Observation, UnvisitedValue};
use crate::env::Env;
use crate::grid::{
    synth, ExogenousTrace, MicrogridConfig, PriceSchedule, PriceSegment, TraceRecord,
};
use crate::nn::{read_params, write_params};

fn small_spec() -> ModelSpec {
    ModelSpec {
        lstm_hidden: 3,
        repr_hidden: vec![8],
        latent: 4,
        dyn_hidden: vec![8],
        pred_hidden: vec![8],
        support: 4,
        ..ModelSpec::default()
    }
}

fn obs(rng: &mut ChaCha8Rng) -> Observation<f64> {
    let mut v = |n: usize| {
        (0..n)
            .map(|_| rng.gen_range(0.0..1.0))
            .collect::<Vec<f64>>()
    };
    Observation {
        pv: v(6),
        wt: v(6),
        load: v(6),
        features: v(7),
    }
}

fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

/// A synthetic episode with the given rewards and root values.
fn game(rewards: &[f64], values: &[f64], seed: u64) -> GameHistory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let steps = rewards
        .iter()
        .zip(values)
        .map(|(&reward, &root_value)| {
            let mut p: Vec<f64> = (0..9).map(|_| rng.gen_range(0.0..1.0)).collect();
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|x| *x /= s);
            StepRecord {
                observation: obs(&mut rng),
                action: rng.gen_range(0..9),
                reward,
                policy: p,
                root_value,
            }
        })
        .collect();
    GameHistory {
        id: 0,
        start: 0,
        soc0: 0.5,
        seed,
        steps,
    }
}

fn random_batch(seed: u64, b: usize, k: usize) -> Batch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = ReplayBuffer::new(8);
    for g in 0..2 {
        let r: Vec<f64> = (0..6).map(|_| rng.gen_range(-30.0..5.0)).collect();
        let v: Vec<f64> = (0..6).map(|_| rng.gen_range(-150.0..0.0)).collect();
        buf.push(game(&r, &v, seed * 10 + g));
    }
    sample_batch(&mut buf, b, k, 3, 0.997, 9, &mut rng).unwrap()
}

// targets

#[test]
fn three_step_value_target() {
    let g = game(&[1.0, 2.0, 3.0], &[0.0; 3], 0);
    let tg = compute_targets(&g, 0, 0, 10, 0.5, 9);
    assert!((tg[0].value - 2.75).abs() < 1e-15);
    assert_eq!(tg[0].reward, 0.0);
}

#[test]
fn one_step_bootstrap() {
    let g = game(&[1.0, 2.0, 3.0, 4.0], &[10.0, 20.0, 30.0, 40.0], 1);
    let tg = compute_targets(&g, 1, 2, 1, 0.9, 9);
    assert!((tg[0].value - (2.0 + 0.9 * 30.0)).abs() < 1e-12);
    assert!((tg[1].value - (3.0 + 0.9 * 40.0)).abs() < 1e-12);
    // last step: the reward only, nothing to bootstrap from
    assert!((tg[2].value - 4.0).abs() < 1e-12);
    assert_eq!(tg[1].reward, 2.0);
    assert_eq!(tg[2].reward, 3.0);
}

#[test]
fn past_the_end_is_absorbing() {
    let g = game(&[1.0, 2.0], &[5.0, 6.0], 2);
    let tg = compute_targets(&g, 1, 3, 10, 0.9, 9);
    assert_eq!(tg.len(), 4);
    assert!(tg[0].policy_mask);
    assert_eq!(tg[0].value, 2.0);
    // the reward of the last action is still a target, then nothing
    assert_eq!(tg[1].reward, 2.0);
    for t in &tg[1..] {
        assert!(!t.policy_mask);
        assert_eq!(t.value, 0.0);
        assert!((t.policy.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
    assert_eq!(tg[2].reward, 0.0);
    assert_eq!(tg[3].reward, 0.0);
}

proptest! {
    #[test]
    fn nothing_in_nothing_out(len in 1usize..30, t in 0usize..30, k in 0usize..6, n in 1usize..12) {
        let t = t % len;
        let g = game(&vec![0.0; len], &vec![0.0; len], 3);
        for tg in compute_targets(&g, t, k, n, 0.997, 9) {
            prop_assert_eq!(tg.value, 0.0);
            prop_assert_eq!(tg.reward, 0.0);
        }
    }

    #[test]
    fn buffer_is_bounded_fifo(cap in 1usize..6, n in 0usize..20) {
        let mut b = ReplayBuffer::new(cap);
        for i in 0..n {
            prop_assert_eq!(b.push(game(&[1.0; 3], &[0.0; 3], i as u64)), i as u64);
            prop_assert!(b.len() <= cap);
        }
        let expect: Vec<u64> = (n.saturating_sub(cap)..n).map(|i| i as u64).collect();
        prop_assert_eq!(b.ids(), expect);
        prop_assert_eq!(b.stored_steps(), 3 * n.min(cap));
    }

    #[test]
    fn heads_never_beat_target_entropy(seed in 0u64..1000, k in 0usize..4) {
        let model = LearnedModel::<f64>::new(small_spec(), seed).unwrap();
        let batch = random_batch(seed, 3, k);
        let l = loss(&model, &batch, k, 1e-4).unwrap();
        let h = target_entropy(&model, &batch, k);
        prop_assert!(l.reward >= h.reward - 1e-9);
        prop_assert!(l.value >= h.value - 1e-9);
        prop_assert!(l.policy >= h.policy - 1e-9);
        prop_assert!(l.l2 >= 0.0);
        prop_assert!((l.total - (l.reward + l.value + l.policy + l.l2)).abs() < 1e-12);
    }
}

// sampling

#[test]
fn single_episode_batch() {
    let mut buf = ReplayBuffer::new(4);
    let id = buf.push(game(&[1.0; 5], &[0.0; 5], 4));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let b = sample_batch(&mut buf, 4, 5, 10, 0.997, 9, &mut rng).unwrap();
    assert_eq!(b.len(), 4);
    for it in &b {
        assert_eq!(it.game_id, id);
        assert!(it.t < 5);
        assert_eq!(it.actions.len(), 5);
        assert_eq!(it.targets.len(), 6);
    }
    assert_eq!(buf.sampled_batches(), 1);
}

#[test]
fn sampling_is_deterministic() {
    let batch = |seed| random_batch(seed, 16, 5);
    assert_eq!(batch(7), batch(7));
    assert_ne!(batch(7), batch(8));
}

#[test]
fn empty_buffer_is_retryable() {
    let mut buf = ReplayBuffer::new(4);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(
        sample_batch(&mut buf, 4, 5, 10, 0.997, 9, &mut rng),
        Err(TrainError::EmptyBuffer)
    );
}

#[test]
fn positions_are_uniform() {
    let mut buf = ReplayBuffer::new(4);
    buf.push(game(&[0.0; 3], &[0.0; 3], 0));
    buf.push(game(&[0.0; 7], &[0.0; 7], 1));
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut hist = [[0usize; 7]; 2];
    let draws = 10_000;
    for it in sample_batch(&mut buf, draws, 0, 1, 0.997, 9, &mut rng).unwrap() {
        hist[it.game_id as usize][it.t] += 1;
    }
    let p: f64 = 1.0 / 10.0;
    let sd = (draws as f64 * p * (1.0 - p)).sqrt();
    for (g, len) in [(0usize, 3usize), (1, 7)] {
        for t in 0..len {
            let dev = (hist[g][t] as f64 - draws as f64 * p).abs();
            assert!(dev <= 3.0 * sd, "episode {g} t {t}: {} draws", hist[g][t]);
        }
    }
    assert_eq!(hist[0][3..].iter().sum::<usize>(), 0);
}

// loss

/// A model that outputs exactly the given one-hot targets: all weights zero
/// and large output biases.
fn forced_model(value_idx: usize, policy_idx: usize) -> LearnedModel<f64> {
    let mut m = LearnedModel::<f64>::new(small_spec(), 0).unwrap();
    m.params.zero_all();
    let heads = [
        (&m.pred_value, value_idx),
        (&m.dyn_reward, value_idx),
        (&m.pred_policy, policy_idx),
    ];
    let ids: Vec<_> = heads
        .iter()
        .map(|(mlp, i)| (*mlp.biases.last().unwrap(), *i))
        .collect();
    for (id, i) in ids {
        m.params.get_mut(id).data[i] = 60.0;
    }
    m
}

#[test]
fn forced_outputs_leave_only_the_l2_term() {
    let m = forced_model(4, 2);
    let mut batch = random_batch(0, 3, 2);
    for it in &mut batch {
        for tg in &mut it.targets {
            tg.reward = 0.0;
            tg.value = 0.0;
            tg.policy = one_hot(9, 2);
        }
    }
    assert_eq!(m.encode(0.0), one_hot(9, 4));
    let l = loss(&m, &batch, 2, 1e-4).unwrap();
    assert!(
        l.reward.abs() < 1e-20 && l.value.abs() < 1e-20 && l.policy.abs() < 1e-20,
        "{l:?}"
    );
    assert!((l.l2 - 1e-4 * 3.0 * 3600.0).abs() < 1e-12);
    assert!((l.total - l.l2).abs() < 1e-12);
}

#[test]
fn unroll_of_zero_has_no_reward_term() {
    let m = LearnedModel::<f64>::new(small_spec(), 3).unwrap();
    let batch = random_batch(3, 4, 0);
    let l = loss(&m, &batch, 0, 0.0).unwrap();
    assert_eq!(l.reward, 0.0);
    assert!(l.value > 0.0 && l.policy > 0.0);
    assert_eq!(l.l2, 0.0);
}

#[test]
fn non_finite_loss_names_the_head() {
    let mut m = LearnedModel::<f64>::new(small_spec(), 3).unwrap();
    let id = *m.pred_value.biases.last().unwrap();
    m.params.get_mut(id).data[0] = f64::NAN;
    let err = loss(&m, &random_batch(3, 2, 1), 1, 0.0).unwrap_err();
    assert!(err.to_string().contains("value"), "{err}");
}

fn grads_at(
    model: &LearnedModel<f64>,
    batch: &Batch,
    k: usize,
    scale: f64,
) -> crate::nn::ParameterSet<f64> {
    let mut tape = crate::nn::Tape::new(&model.params);
    let (l, _) = loss_on_scaled(model, &mut tape, batch, k, 1e-4, scale).unwrap();
    tape.backward(l).unwrap()
}

/// Relative error of the unscaled tape gradient against central
/// differences, per parameter tensor, on a few sampled coordinates each.
pub(crate) fn unrolled_grad_check(
    model: &mut LearnedModel<f64>,
    batch: &Batch,
    k: usize,
    samples: usize,
    seed: u64,
) -> Vec<(String, f64)> {
    let grads = grads_at(model, batch, k, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-5;
    let mut out = Vec::new();
    for t in 0..model.params.tensors.len() {
        let n = model.params.tensors[t].data.len();
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for _ in 0..samples.min(n) {
            let i = rng.gen_range(0..n);
            let orig = model.params.tensors[t].data[i];
            model.params.tensors[t].data[i] = orig + h;
            let up = loss(model, batch, k, 1e-4).unwrap().total;
            model.params.tensors[t].data[i] = orig - h;
            let down = loss(model, batch, k, 1e-4).unwrap().total;
            model.params.tensors[t].data[i] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = grads.tensors[t].data[i];
            num += (fd - an).powi(2);
            den = den.max(fd.abs()).max(an.abs());
        }
        let err = if den < 1e-9 {
            num.sqrt()
        } else {
            num.sqrt() / den
        };
        out.push((model.params.names[t].clone(), err));
    }
    out
}

#[test]
fn full_unroll_gradient_matches_finite_differences() {
    let mut m = LearnedModel::<f64>::new(small_spec(), 5).unwrap();
    // move the heads away from their near-zero start so every block matters
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for t in &mut m.params.tensors {
        t.data
            .iter_mut()
            .for_each(|v| *v += rng.gen_range(-0.2..0.2));
    }
    let batch = random_batch(5, 2, 5);
    for (name, err) in unrolled_grad_check(&mut m, &batch, 5, 6, 5) {
        assert!(err <= 1e-4, "{name}: {err:e}");
    }
}

#[test]
fn dynamics_gradient_is_scaled_linearly() {
    // every path crosses at most one scaled state for K = 1, so the
    // gradient is affine in the factor
    let m = LearnedModel::<f64>::new(small_spec(), 7).unwrap();
    let batch = random_batch(7, 3, 1);
    let (g0, g1, gh) = (
        grads_at(&m, &batch, 1, 0.0),
        grads_at(&m, &batch, 1, 1.0),
        grads_at(&m, &batch, 1, 0.5),
    );
    let mut moved = false;
    for t in 0..g0.tensors.len() {
        for i in 0..g0.tensors[t].data.len() {
            let (a, b, h) = (
                g0.tensors[t].data[i],
                g1.tensors[t].data[i],
                gh.tensors[t].data[i],
            );
            assert!(
                (h - 0.5 * (a + b)).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()),
                "{}[{i}]",
                g0.names[t]
            );
            moved |= (a - b).abs() > 1e-9;
        }
    }
    assert!(moved);
    let l = |s| {
        let mut tape = crate::nn::Tape::new(&m.params);
        loss_on_scaled(&m, &mut tape, &batch, 1, 1e-4, s).unwrap().1
    };
    assert_eq!(l(0.0), l(1.0));
}

#[test]
fn fixed_batch_overfits() {
    let m = LearnedModel::<f64>::new(small_spec(), 6).unwrap();
    let batch = random_batch(6, 4, 3);
    let mut tr = Trainer::new(m, 0.005);
    let first = tr.step_on_batch(&batch, 3, 1e-4).unwrap().total;
    for _ in 0..49 {
        tr.step_on_batch(&batch, 3, 1e-4).unwrap();
    }
    let last = loss(&tr.model, &batch, 3, 1e-4).unwrap().total;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn checkpoint_round_trip_reproduces_the_loss() {
    let m = LearnedModel::<f64>::new(small_spec(), 8).unwrap();
    let batch = random_batch(8, 3, 5);
    let mut bytes = Vec::new();
    write_params(&m.params, &mut bytes).unwrap();
    let back = LearnedModel::from_params(small_spec(), read_params::<f64, _>(&bytes[..]).unwrap())
        .unwrap();
    let (a, b) = (
        loss(&m, &batch, 5, 1e-4).unwrap(),
        loss(&back, &batch, 5, 1e-4).unwrap(),
    );
    assert_eq!(a.total.to_bits(), b.total.to_bits());
}

// train_step

fn frozen_buffer(seed: u64, positions: usize) -> ReplayBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r: Vec<f64> = (0..positions).map(|_| rng.gen_range(-20.0..0.0)).collect();
    let mut g = game(&r, &vec![-50.0; positions], seed);
    // sharp policy targets, as a converged search would give
    for s in &mut g.steps {
        s.policy = one_hot(9, s.action);
    }
    let mut b = ReplayBuffer::new(4);
    b.push(g);
    b
}

fn small_train_cfg() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        model: small_spec(),
        ..TrainConfig::default()
    }
}

#[test]
fn train_step_publishes_and_moves_parameters() {
    let cfg = small_train_cfg();
    let m = LearnedModel::<f64>::new(small_spec(), 9).unwrap();
    let storage = SharedStorage::new(m.clone());
    let mut buf = frozen_buffer(9, 4);
    let mut tr = Trainer::new(m.clone(), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    train_step(&mut tr, &storage, &mut buf, &cfg, &mut rng).unwrap();
    let (latest, n_s) = storage.latest();
    assert_eq!(n_s, 1);
    assert_ne!(latest.params, m.params);
    assert_eq!(latest.params, tr.model.params);
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let cfg = TrainConfig {
        lr: 0.0,
        ..small_train_cfg()
    };
    let m = LearnedModel::<f64>::new(small_spec(), 10).unwrap();
    let storage = SharedStorage::new(m.clone());
    let mut buf = frozen_buffer(10, 4);
    let mut tr = Trainer::new(m.clone(), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..2 {
        train_step(&mut tr, &storage, &mut buf, &cfg, &mut rng).unwrap();
    }
    assert_eq!(storage.steps(), 2);
    for (a, b) in tr.model.params.tensors.iter().zip(&m.params.tensors) {
        assert_eq!(a.data, b.data);
    }
}

#[test]
fn frozen_buffer_policy_loss_falls() {
    let cfg = small_train_cfg();
    let m = LearnedModel::<f64>::new(small_spec(), 12).unwrap();
    let storage = SharedStorage::new(m.clone());
    let mut buf = frozen_buffer(12, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let probe = sample_batch(
        &mut buf,
        4,
        cfg.unroll_steps,
        cfg.td_steps,
        0.997,
        9,
        &mut rng,
    )
    .unwrap();
    let before = loss(&m, &probe, cfg.unroll_steps, cfg.c_l2).unwrap().policy;
    let mut tr = Trainer::new(m, cfg.lr);
    for _ in 0..500 {
        train_step(&mut tr, &storage, &mut buf, &cfg, &mut rng).unwrap();
    }
    let after = loss(&tr.model, &probe, cfg.unroll_steps, cfg.c_l2)
        .unwrap()
        .policy;
    assert!(after < before, "{before} -> {after}");
    assert_eq!(storage.steps(), 500);
}

// self-play and the loop

fn synth_env(days: usize, horizon: usize) -> (Env, Vec<usize>) {
    let mut cfg = MicrogridConfig::default();
    cfg.horizon_t = horizon;
    let tr = synth::generate(days, 21, &synth::SynthParams::default());
    let starts = tr.episode_starts(24);
    (Env::new(cfg, Arc::new(tr)).unwrap(), starts)
}

fn quick_mcts() -> MctsConfig {
    MctsConfig {
        n_sims: 4,
        unvisited: UnvisitedValue::ParentMean,
        ..MctsConfig::default()
    }
}

#[test]
fn two_step_episode() {
    let (env, starts) = synth_env(3, 2);
    let agent = Agent::new(LearnedModel::new(small_spec(), 0).unwrap(), quick_mcts());
    let g = self_play_episode(&agent, &env, &starts, 0.5, 4).unwrap();
    assert_eq!(g.len(), 2);
    assert!(starts.contains(&g.start));
    for s in &g.steps {
        assert!((s.policy.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.action < 9);
    }
    assert_eq!(g, self_play_episode(&agent, &env, &starts, 0.5, 4).unwrap());
}

#[test]
fn day_choice_covers_the_training_set() {
    let (env, starts) = synth_env(4, 1);
    let agent = Agent::new(
        LearnedModel::new(small_spec(), 0).unwrap(),
        MctsConfig {
            n_sims: 1,
            ..quick_mcts()
        },
    );
    let mut seen = std::collections::BTreeSet::new();
    for seed in 0..40 {
        seen.insert(
            self_play_episode(&agent, &env, &starts, 0.5, seed)
                .unwrap()
                .start,
        );
    }
    assert_eq!(seen.into_iter().collect::<Vec<_>>(), starts);
}

#[test]
fn idle_day_earns_nothing() {
    let mut cfg = MicrogridConfig::default();
    cfg.prices = PriceSchedule {
        segments: vec![PriceSegment {
            start_hour: 0.0,
            end_hour: 0.0,
            p_buy: 0.0,
        }],
        sell_ratio: 0.0,
    };
    let t0 = NaiveDate::from_ymd_opt(2024, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let records = (0..24)
        .map(|i| TraceRecord {
            timestamp: t0 + chrono::Duration::hours(i),
            pv: 0.0,
            wt: 0.0,
            load: 0.0,
        })
        .collect();
    let env = Env::new(cfg.clone(), Arc::new(ExogenousTrace { records, dt: 1.0 })).unwrap();
    // a model whose prior prefers the idle level
    let mut m = LearnedModel::<f64>::new(small_spec(), 0).unwrap();
    m.params.zero_all();
    let idle = cfg
        .battery
        .action_levels
        .iter()
        .position(|&l| l == 0.0)
        .unwrap();
    let pb = *m.pred_policy.biases.last().unwrap();
    m.params.get_mut(pb).data[idle] = 3.0;
    let agent = Agent::new(
        m,
        MctsConfig {
            n_sims: 20,
            ..quick_mcts()
        },
    );
    let g = self_play_episode(&agent, &env, &[0], 0.5, 0).unwrap();
    assert_eq!(g.len(), 24);
    assert!(g.total_reward().abs() < 1e-6, "{}", g.total_reward());
    for s in &g.steps {
        assert_eq!(s.action, idle);
    }
}

fn loop_cfg(workers: usize, upsilon: f64, steps: usize) -> TrainConfig {
    TrainConfig {
        n_train_steps: steps,
        batch_size: 4,
        upsilon,
        eval_every: 0,
        workers,
        pause_secs: 0.001,
        model: small_spec(),
        mcts: quick_mcts(),
        ..TrainConfig::default()
    }
}

#[test]
fn threaded_loop_logs_every_step() {
    let (env, starts) = synth_env(3, 4);
    let cfg = loop_cfg(1, 1.0, 10);
    let data = TrainData {
        env: &env,
        train_starts: &starts[..2],
        validation_starts: &starts[2..],
        out_dir: None,
    };
    let out = training_loop(&cfg, &data).unwrap();
    assert_eq!(out.log.len(), 10);
    assert_eq!(
        out.log.iter().map(|r| r.step).collect::<Vec<_>>(),
        (1..=10).collect::<Vec<u64>>()
    );
    assert!(out.stats.episodes >= 1);
}

#[test]
fn sync_loop_is_reproducible_and_paced() {
    let (env, starts) = synth_env(3, 4);
    let cfg = TrainConfig {
        eval_every: 5,
        ..loop_cfg(0, 0.5, 20)
    };
    let dir = tempfile::tempdir().unwrap();
    let data = TrainData {
        env: &env,
        train_starts: &starts[..2],
        validation_starts: &starts[2..],
        out_dir: Some(dir.path()),
    };
    let a = training_loop(&cfg, &data).unwrap();
    let b = training_loop(
        &cfg,
        &TrainData {
            out_dir: None,
            ..data
        },
    )
    .unwrap();
    assert_eq!(a.log, b.log);
    assert_eq!(a.model.params, b.model.params);
    assert_eq!(
        a.evaluations.iter().map(|e| e.step).collect::<Vec<_>>(),
        vec![0, 5, 10, 15, 20]
    );
    // at most one episode plus one step of slack either way
    assert!(a.stats.max_lead <= 4.0 + cfg.upsilon, "{:?}", a.stats);
    assert!(a.stats.max_lag <= cfg.upsilon, "{:?}", a.stats);
    assert_eq!(a.stats.env_steps, 4 * a.stats.episodes);

    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert!(lines[0].starts_with("step,median_validation_return,loss"));
    assert_eq!(lines.len(), 1 + 1 + 20);
    let saved =
        read_params::<f64, _>(std::fs::File::open(dir.path().join("checkpoint.bin")).unwrap())
            .unwrap();
    assert_eq!(saved, a.model.params);
}

#[test]
fn resumed_run_continues_the_log() {
    let (env, starts) = synth_env(3, 4);
    let full_cfg = TrainConfig {
        eval_every: 10,
        batch_size: 16,
        ..loop_cfg(0, 2.0, 60)
    };
    let half_cfg = TrainConfig {
        n_train_steps: 30,
        ..full_cfg.clone()
    };
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let data = |dir| TrainData {
        env: &env,
        train_starts: &starts[..2],
        validation_starts: &starts[2..],
        out_dir: Some(dir),
    };
    let full = training_loop(&full_cfg, &data(d1.path())).unwrap();
    let half = training_loop(&half_cfg, &data(d2.path())).unwrap();
    let state = load_resume(&full_cfg, d2.path()).unwrap();
    assert_eq!(state.train_steps, 30);
    assert_eq!(state.env_steps, half.stats.env_steps);
    assert_eq!(state.model.params, half.model.params);
    assert_eq!(state.optimizer.steps(), 30);
    assert_eq!(state.log.len(), 30);
    let resumed = training_loop_from(&full_cfg, &data(d2.path()), Some(state)).unwrap();

    assert_eq!(
        resumed.log.iter().map(|r| r.step).collect::<Vec<_>>(),
        (1..=60).collect::<Vec<u64>>()
    );
    assert_eq!(
        resumed
            .evaluations
            .iter()
            .map(|e| e.step)
            .collect::<Vec<_>>(),
        vec![0, 10, 20, 30, 40, 50, 60]
    );
    assert!(resumed
        .log
        .windows(2)
        .all(|w| w[0].env_steps <= w[1].env_steps));
    for (a, b) in resumed.log[..30].iter().zip(&full.log[..30]) {
        assert!(
            (a.loss.total - b.loss.total).abs() < 1e-12 * b.loss.total.abs().max(1.0),
            "{a:?} {b:?}"
        );
    }
    let mean = |rows: &[LogRow]| rows.iter().map(|r| r.loss.total).sum::<f64>() / rows.len() as f64;
    let (after, reference) = (mean(&resumed.log[30..40]), mean(&full.log[30..40]));
    assert!(
        after <= 1.25 * reference,
        "loss after resume {after} vs uninterrupted {reference}"
    );
    let csv = std::fs::read_to_string(d2.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 1 + 60);
}

#[test]
fn resume_rejects_a_different_model() {
    let (env, starts) = synth_env(2, 3);
    let cfg = loop_cfg(0, 1.0, 3);
    let dir = tempfile::tempdir().unwrap();
    let data = TrainData {
        env: &env,
        train_starts: &starts,
        validation_starts: &[],
        out_dir: Some(dir.path()),
    };
    training_loop(&cfg, &data).unwrap();
    let mut other = cfg.clone();
    other.model.latent += 1;
    assert!(load_resume(&other, dir.path()).is_err());
}

#[test]
fn pacing_limits() {
    for n in [0u64, 1, 10, 10_000] {
        for e in [0u64, 24, 10_000] {
            assert!(self_play_may_run(e, n, 1e9));
            assert!(training_may_run(e, n, 1e-9) || e == 0);
        }
    }
    assert!(!self_play_may_run(24, 0, 0.1));
    assert!(training_may_run(24, 240, 0.1));
    assert!(!training_may_run(24, 241, 0.1));
}

#[test]
fn tiny_upsilon_never_pauses_training() {
    let (env, starts) = synth_env(2, 3);
    let cfg = loop_cfg(1, 1e-9, 15);
    let data = TrainData {
        env: &env,
        train_starts: &starts,
        validation_starts: &[],
        out_dir: None,
    };
    let out = training_loop(&cfg, &data).unwrap();
    assert_eq!(out.stats.training_pauses, 0);
    assert_eq!(out.log.len(), 15);
}

#[test]
fn worker_errors_stop_the_loop() {
    let (env, starts) = synth_env(2, 3);
    let mut cfg = loop_cfg(2, 1.0, 5);
    cfg.model.n_actions = 5;
    let data = TrainData {
        env: &env,
        train_starts: &starts,
        validation_starts: &[],
        out_dir: None,
    };
    let err = training_loop(&cfg, &data).unwrap_err();
    assert!(matches!(err, TrainError::Agent(_)), "{err}");
}
