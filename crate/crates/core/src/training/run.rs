use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::history::self_play_episode;
use super::loss::{train_step, LossParts, Trainer};
use super::replay::{ReplayBuffer, SharedStorage};
use super::{TrainConfig, TrainError};
use crate::agent::{Agent, LearnedModel, MctsConfig};
use crate::env::Env;
use crate::evaluate::{median, run_days, AgentPolicy};
use crate::nn::{read_params, write_params, Adam};

/// Self-play may start another episode while it is not ahead of training,
/// i.e. while `env_steps < upsilon * (train_steps + 1)`.
pub fn self_play_may_run(env_steps: u64, train_steps: u64, upsilon: f64) -> bool {
    (env_steps as f64) < upsilon * (train_steps as f64 + 1.0)
}

/// Training may take step `train_steps + 1` once self-play has produced
/// `upsilon * train_steps` environment steps.
pub fn training_may_run(env_steps: u64, train_steps: u64, upsilon: f64) -> bool {
    env_steps as f64 >= upsilon * train_steps as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogRow {
    pub step: u64,
    pub loss: LossParts,
    /// Set on evaluation steps.
    pub median_validation_return: Option<f64>,
    pub env_steps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub step: u64,
    pub median_return: f64,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PaceStats {
    pub env_steps: u64,
    pub train_steps: u64,
    pub episodes: u64,
    pub discarded_episodes: u64,
    pub self_play_pauses: u64,
    pub training_pauses: u64,
    /// Largest `env_steps - upsilon * train_steps` seen at a training step.
    pub max_lead: f64,
    /// Largest `upsilon * train_steps - env_steps` seen at a training step.
    pub max_lag: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LearnedModel<f64>,
    /// One row per training step.
    pub log: Vec<LogRow>,
    pub evaluations: Vec<Evaluation>,
    pub stats: PaceStats,
}

/// Days and output location for [`training_loop`].
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub env: &'a Env,
    pub train_starts: &'a [usize],
    pub validation_starts: &'a [usize],
    /// Checkpoints and the convergence CSV go here when set.
    pub out_dir: Option<&'a Path>,
}

fn episode_seed(seed: u64, worker: u64, k: u64) -> u64 {
    seed ^ worker.wrapping_mul(0xa076_1d64_78bd_642f) ^ k.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn self_play_mcts(cfg: &TrainConfig) -> MctsConfig {
    let mut m = cfg.mcts.clone();
    m.temperature = cfg.self_play_temperature;
    m.root_dirichlet = cfg.self_play_dirichlet;
    m
}

/// Median discounted validation return of `model`.
pub fn validate(
    model: &LearnedModel<f64>,
    cfg: &TrainConfig,
    data: &TrainData<'_>,
) -> Result<(f64, Vec<f64>), TrainError> {
    let mut env = data.env.clone();
    let mut policy = AgentPolicy::new(Agent::new(model.clone(), cfg.mcts.clone()), cfg.seed);
    let days = run_days(
        &mut env,
        data.validation_starts,
        cfg.soc0,
        &mut policy,
        cfg.mcts.gamma,
    )?;
    let r: Vec<f64> = days.iter().map(|d| d.discounted_return).collect();
    Ok((median(&r), r))
}

struct Progress {
    log: Vec<LogRow>,
    evaluations: Vec<Evaluation>,
}

impl Progress {
    fn evaluate(
        &mut self,
        trainer: &Trainer,
        counts: Counts,
        cfg: &TrainConfig,
        data: &TrainData<'_>,
    ) -> Result<(), TrainError> {
        if data.validation_starts.is_empty() {
            return Ok(());
        }
        let step = counts.train_steps;
        let (m, returns) = validate(&trainer.model, cfg, data)?;
        if let Some(row) = self.log.last_mut().filter(|r| r.step == step) {
            row.median_validation_return = Some(m);
        }
        self.evaluations.push(Evaluation {
            step,
            median_return: m,
            returns,
        });
        if let Some(dir) = data.out_dir {
            save_state(trainer, counts, &self.log, &self.evaluations, dir)?;
        }
        Ok(())
    }

    fn record(&mut self, step: u64, loss: LossParts, env_steps: u64) {
        self.log.push(LogRow {
            step,
            loss,
            median_validation_return: None,
            env_steps,
        });
    }
}

/// Writes `checkpoint.bin` atomically, so a crash keeps the previous one.
pub fn save_checkpoint(model: &LearnedModel<f64>, dir: &Path) -> Result<(), TrainError> {
    fs::create_dir_all(dir).map_err(io)?;
    write_atomic(&dir.join("checkpoint.bin"), |f| {
        Ok(write_params(&model.params, f)?)
    })
}

fn io(e: std::io::Error) -> TrainError {
    TrainError::Io(e.to_string())
}

fn write_atomic(
    path: &Path,
    write: impl FnOnce(&mut fs::File) -> Result<(), TrainError>,
) -> Result<(), TrainError> {
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io)?;
    write(&mut f)?;
    f.flush().map_err(io)?;
    drop(f);
    fs::rename(&tmp, path).map_err(io)
}

/// Progress counters saved next to a checkpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    train_steps: u64,
    env_steps: u64,
    episodes: u64,
}

const PROGRESS_FILE: &str = "progress.txt";

/// Writes the checkpoint, optimizer moments, counters and convergence CSV.
/// `progress.txt` is renamed into place last and names the step the other
/// files belong to.
fn save_state(
    trainer: &Trainer,
    c: Counts,
    log: &[LogRow],
    evals: &[Evaluation],
    dir: &Path,
) -> Result<(), TrainError> {
    save_checkpoint(&trainer.model, dir)?;
    write_atomic(&dir.join("optimizer.bin"), |f| {
        let (m, v) = trainer.optimizer.moments();
        write_params(m, &mut *f)?;
        write_params(v, &mut *f)?;
        Ok(())
    })?;
    write_log(log, evals, &dir.join("convergence.csv"))?;
    write_atomic(&dir.join(PROGRESS_FILE), |f| {
        write!(
            f,
            "train_steps {}\nenv_steps {}\nepisodes {}\n",
            c.train_steps, c.env_steps, c.episodes
        )
        .map_err(io)
    })
}

/// A run read back from its output directory by [`load_resume`].
#[derive(Debug, Clone)]
pub struct ResumeState {
    pub model: LearnedModel<f64>,
    pub optimizer: Adam<f64>,
    pub train_steps: u64,
    pub env_steps: u64,
    pub episodes: u64,
    /// Convergence rows up to `train_steps`; evaluations carry only the median.
    pub log: Vec<LogRow>,
    pub evaluations: Vec<Evaluation>,
}

/// Reads the state [`training_loop`] leaves in `dir`. The replay buffer is
/// not saved; a resumed run refills it by self-play.
pub fn load_resume(cfg: &TrainConfig, dir: &Path) -> Result<ResumeState, TrainError> {
    let text = fs::read_to_string(dir.join(PROGRESS_FILE)).map_err(io)?;
    let mut c = Counts::default();
    for line in text.lines() {
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| TrainError::Io(format!("bad progress line {line:?}")))?;
        let v: u64 = v
            .trim()
            .parse()
            .map_err(|_| TrainError::Io(format!("bad progress value {line:?}")))?;
        match k {
            "train_steps" => c.train_steps = v,
            "env_steps" => c.env_steps = v,
            "episodes" => c.episodes = v,
            _ => return Err(TrainError::Io(format!("unknown progress key {k:?}"))),
        }
    }
    let params = read_params(fs::File::open(dir.join("checkpoint.bin")).map_err(io)?)?;
    let model = LearnedModel::from_params(cfg.model.clone(), params)?;
    let mut f = std::io::BufReader::new(fs::File::open(dir.join("optimizer.bin")).map_err(io)?);
    let m = read_params(&mut f)?;
    let v = read_params(&mut f)?;
    let optimizer = Adam::from_moments(&model.params, cfg.lr, m, v, c.train_steps)?;
    let (log, evaluations) = read_log(&dir.join("convergence.csv"), c.train_steps)?;
    if log.len() as u64 != c.train_steps {
        return Err(TrainError::Io(format!(
            "convergence log has {} rows, progress says {}",
            log.len(),
            c.train_steps
        )));
    }
    Ok(ResumeState {
        model,
        optimizer,
        train_steps: c.train_steps,
        env_steps: c.env_steps,
        episodes: c.episodes,
        log,
        evaluations,
    })
}

fn read_log(path: &Path, up_to: u64) -> Result<(Vec<LogRow>, Vec<Evaluation>), TrainError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| TrainError::Io(e.to_string()))?;
    let (mut log, mut evals) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| TrainError::Io(e.to_string()))?;
        let num = |i: usize| -> Result<Option<f64>, TrainError> {
            let f = rec.get(i).unwrap_or("");
            if f.is_empty() {
                return Ok(None);
            }
            f.parse()
                .map(Some)
                .map_err(|_| TrainError::Io(format!("bad number {f:?} in {}", path.display())))
        };
        let step = num(0)?.ok_or_else(|| TrainError::Io("missing step".into()))? as u64;
        if step > up_to {
            break;
        }
        let median = num(1)?;
        if let Some(m) = median {
            evals.push(Evaluation {
                step,
                median_return: m,
                returns: Vec::new(),
            });
        }
        let Some(total) = num(2)? else { continue };
        let g = |i| num(i).map(|x| x.unwrap_or(f64::NAN));
        let loss = LossParts {
            total,
            reward: g(3)?,
            value: g(4)?,
            policy: g(5)?,
            l2: g(6)?,
        };
        log.push(LogRow {
            step,
            loss,
            median_validation_return: median,
            env_steps: num(7)?.unwrap_or(0.0) as u64,
        });
    }
    Ok((log, evals))
}

/// Convergence CSV: `step, median_validation_return, loss, reward_loss,
/// value_loss, policy_loss, l2, env_steps`. An evaluation before the first
/// step appears as step 0 with empty loss fields.
pub fn write_log(log: &[LogRow], evals: &[Evaluation], path: &Path) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| TrainError::Io(e.to_string()))?;
    let csv_err = |e: csv::Error| TrainError::Io(e.to_string());
    w.write_record([
        "step",
        "median_validation_return",
        "loss",
        "reward_loss",
        "value_loss",
        "policy_loss",
        "l2",
        "env_steps",
    ])
    .map_err(csv_err)?;
    if let Some(e) = evals.iter().find(|e| e.step == 0) {
        w.write_record([
            "0".to_string(),
            e.median_return.to_string(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            "0".into(),
        ])
        .map_err(csv_err)?;
    }
    for r in log {
        let l = &r.loss;
        w.write_record([
            r.step.to_string(),
            r.median_validation_return
                .map_or_else(String::new, |m| m.to_string()),
            l.total.to_string(),
            l.reward.to_string(),
            l.value.to_string(),
            l.policy.to_string(),
            l.l2.to_string(),
            r.env_steps.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io)
}

/// Self-play and training paced by `cfg.upsilon`.
///
/// With `cfg.workers == 0` both sides run in this thread, interleaved by
/// the pacing rule, and the run is reproducible from `cfg.seed`. Otherwise
/// `workers` self-play threads run against one training thread and pause
/// for `cfg.pause_secs` whenever they are ahead.
pub fn training_loop(cfg: &TrainConfig, data: &TrainData<'_>) -> Result<TrainOutcome, TrainError> {
    training_loop_from(cfg, data, None)
}

/// [`training_loop`] continued from `resume` when given: step numbering,
/// pacing counters and optimizer state carry on, up to `cfg.n_train_steps`
/// in total.
pub fn training_loop_from(
    cfg: &TrainConfig,
    data: &TrainData<'_>,
    resume: Option<ResumeState>,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if data.train_starts.is_empty() {
        return Err(TrainError::Config("no training days".into()));
    }
    let (trainer, progress, start) = match resume {
        Some(r) => {
            if r.model.spec != cfg.model {
                return Err(TrainError::Config(
                    "checkpoint model does not match the configured model".into(),
                ));
            }
            let c = Counts {
                train_steps: r.train_steps,
                env_steps: r.env_steps,
                episodes: r.episodes,
            };
            (
                Trainer {
                    model: r.model,
                    optimizer: r.optimizer,
                },
                Progress {
                    log: r.log,
                    evaluations: r.evaluations,
                },
                c,
            )
        }
        None => {
            let trainer = Trainer::new(LearnedModel::new(cfg.model.clone(), cfg.seed)?, cfg.lr);
            let mut progress = Progress {
                log: Vec::new(),
                evaluations: Vec::new(),
            };
            if cfg.eval_every > 0 {
                progress.evaluate(&trainer, Counts::default(), cfg, data)?;
            }
            (trainer, progress, Counts::default())
        }
    };
    if cfg.workers == 0 {
        run_sync(cfg, data, trainer, progress, start)
    } else {
        run_threaded(cfg, data, trainer, progress, start)
    }
}

fn batch_rng(cfg: &TrainConfig, start: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(
        cfg.seed ^ 0x7472_6169_6e00 ^ start.wrapping_mul(0x9e37_79b9_7f4a_7c15),
    )
}

fn run_sync(
    cfg: &TrainConfig,
    data: &TrainData<'_>,
    mut trainer: Trainer,
    mut progress: Progress,
    start: Counts,
) -> Result<TrainOutcome, TrainError> {
    let storage = SharedStorage::new(trainer.model.clone());
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut rng = batch_rng(cfg, start.train_steps);
    let mut stats = PaceStats {
        env_steps: start.env_steps,
        train_steps: start.train_steps,
        episodes: start.episodes,
        ..Default::default()
    };
    let sp_mcts = self_play_mcts(cfg);
    for n in start.train_steps..cfg.n_train_steps as u64 {
        let mut failures = 0;
        while buffer.is_empty() || self_play_may_run(stats.env_steps, n, cfg.upsilon) {
            let agent = Agent::new(storage.latest().0.as_ref().clone(), sp_mcts.clone());
            let seed = episode_seed(cfg.seed, 0, stats.episodes + stats.discarded_episodes);
            match self_play_episode(&agent, data.env, data.train_starts, cfg.soc0, seed) {
                Ok(g) => {
                    stats.env_steps += g.len() as u64;
                    stats.episodes += 1;
                    buffer.push(g);
                }
                Err(TrainError::EpisodeAborted { .. }) => {
                    stats.discarded_episodes += 1;
                    failures += 1;
                    if failures >= MAX_CONSECUTIVE_ABORTS {
                        return Err(TrainError::Config(format!(
                            "{failures} consecutive self-play episodes aborted"
                        )));
                    }
                }
                Err(e) => return Err(e),
            }
        }
        stats.max_lead = stats
            .max_lead
            .max(stats.env_steps as f64 - cfg.upsilon * n as f64);
        stats.max_lag = stats
            .max_lag
            .max(cfg.upsilon * n as f64 - stats.env_steps as f64);
        let loss = train_step(&mut trainer, &storage, &mut buffer, cfg, &mut rng)?;
        stats.train_steps = n + 1;
        progress.record(n + 1, loss, stats.env_steps);
        if cfg.eval_every > 0 && (n + 1) % cfg.eval_every as u64 == 0 {
            let c = Counts {
                train_steps: n + 1,
                env_steps: stats.env_steps,
                episodes: stats.episodes,
            };
            progress.evaluate(&trainer, c, cfg, data)?;
        }
    }
    finish(data, trainer, progress, stats)
}

const MAX_CONSECUTIVE_ABORTS: u32 = 100;

fn finish(
    data: &TrainData<'_>,
    trainer: Trainer,
    progress: Progress,
    stats: PaceStats,
) -> Result<TrainOutcome, TrainError> {
    if let Some(dir) = data.out_dir {
        let c = Counts {
            train_steps: stats.train_steps,
            env_steps: stats.env_steps,
            episodes: stats.episodes,
        };
        save_state(&trainer, c, &progress.log, &progress.evaluations, dir)?;
    }
    Ok(TrainOutcome {
        model: trainer.model,
        log: progress.log,
        evaluations: progress.evaluations,
        stats,
    })
}

/// Decrements the live-worker count even when the worker unwinds.
struct LiveGuard<'a>(&'a AtomicUsize);

impl Drop for LiveGuard<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

fn run_threaded(
    cfg: &TrainConfig,
    data: &TrainData<'_>,
    mut trainer: Trainer,
    mut progress: Progress,
    start: Counts,
) -> Result<TrainOutcome, TrainError> {
    let storage = SharedStorage::new(trainer.model.clone());
    let buffer = Mutex::new(ReplayBuffer::new(cfg.buffer_capacity));
    let env_steps = AtomicU64::new(start.env_steps);
    let episodes = AtomicU64::new(start.episodes);
    let discarded = AtomicU64::new(0);
    let sp_pauses = AtomicU64::new(0);
    let stop = AtomicBool::new(false);
    let live = AtomicUsize::new(cfg.workers);
    let worker_error: Mutex<Option<TrainError>> = Mutex::new(None);
    let pause = Duration::from_secs_f64(cfg.pause_secs);
    let sp_mcts = self_play_mcts(cfg);
    let mut stats = PaceStats::default();

    let result = thread::scope(|sc| {
        let handles: Vec<_> = (0..cfg.workers as u64)
            .map(|w| {
                let (storage, buffer, env_steps, episodes, discarded) =
                    (&storage, &buffer, &env_steps, &episodes, &discarded);
                let (sp_pauses, stop, live, worker_error, sp_mcts) =
                    (&sp_pauses, &stop, &live, &worker_error, &sp_mcts);
                sc.spawn(move || {
                    let _guard = LiveGuard(live);
                    let mut k = start.episodes;
                    while !stop.load(Ordering::SeqCst) {
                        let (model, n_s) = storage.latest();
                        if !self_play_may_run(env_steps.load(Ordering::SeqCst), n_s, cfg.upsilon) {
                            sp_pauses.fetch_add(1, Ordering::SeqCst);
                            thread::sleep(pause);
                            continue;
                        }
                        let agent = Agent::new(model.as_ref().clone(), sp_mcts.clone());
                        let seed = episode_seed(cfg.seed, w + 1, k);
                        k += 1;
                        match self_play_episode(&agent, data.env, data.train_starts, cfg.soc0, seed)
                        {
                            Ok(g) => {
                                let len = g.len() as u64;
                                buffer.lock().unwrap_or_else(|e| e.into_inner()).push(g);
                                env_steps.fetch_add(len, Ordering::SeqCst);
                                episodes.fetch_add(1, Ordering::SeqCst);
                            }
                            Err(TrainError::EpisodeAborted { .. }) => {
                                discarded.fetch_add(1, Ordering::SeqCst);
                            }
                            Err(e) => {
                                *worker_error.lock().unwrap_or_else(|p| p.into_inner()) = Some(e);
                                stop.store(true, Ordering::SeqCst);
                            }
                        }
                    }
                })
            })
            .collect();

        let mut rng = batch_rng(cfg, start.train_steps);
        let train = (|| -> Result<(), TrainError> {
            for n in start.train_steps..cfg.n_train_steps as u64 {
                loop {
                    if let Some(e) = worker_error
                        .lock()
                        .unwrap_or_else(|p| p.into_inner())
                        .take()
                    {
                        return Err(e);
                    }
                    if live.load(Ordering::SeqCst) == 0 {
                        return Err(TrainError::WorkerPanic(
                            "all self-play workers stopped".into(),
                        ));
                    }
                    let ready = !buffer.lock().unwrap_or_else(|e| e.into_inner()).is_empty();
                    let paced = training_may_run(env_steps.load(Ordering::SeqCst), n, cfg.upsilon);
                    if ready && paced {
                        break;
                    }
                    if ready {
                        stats.training_pauses += 1;
                    }
                    thread::sleep(pause);
                }
                let e = env_steps.load(Ordering::SeqCst);
                stats.max_lead = stats.max_lead.max(e as f64 - cfg.upsilon * n as f64);
                stats.max_lag = stats.max_lag.max(cfg.upsilon * n as f64 - e as f64);
                let loss = {
                    let mut buf = buffer.lock().unwrap_or_else(|e| e.into_inner());
                    train_step(&mut trainer, &storage, &mut buf, cfg, &mut rng)?
                };
                progress.record(n + 1, loss, env_steps.load(Ordering::SeqCst));
                if cfg.eval_every > 0 && (n + 1) % cfg.eval_every as u64 == 0 {
                    let c = Counts {
                        train_steps: n + 1,
                        env_steps: env_steps.load(Ordering::SeqCst),
                        episodes: episodes.load(Ordering::SeqCst),
                    };
                    progress.evaluate(&trainer, c, cfg, data)?;
                }
            }
            Ok(())
        })();
        stop.store(true, Ordering::SeqCst);
        let mut panicked = 0;
        for h in handles {
            if h.join().is_err() {
                panicked += 1;
            }
        }
        match train {
            Err(e) => Err(e),
            Ok(()) if panicked > 0 => Err(TrainError::WorkerPanic(format!(
                "{panicked} self-play worker(s) panicked"
            ))),
            Ok(()) => Ok(()),
        }
    });
    result?;
    stats.env_steps = env_steps.load(Ordering::SeqCst);
    stats.train_steps = start.train_steps.max(cfg.n_train_steps as u64);
    stats.episodes = episodes.load(Ordering::SeqCst);
    stats.discarded_episodes = discarded.load(Ordering::SeqCst);
    stats.self_play_pauses = sp_pauses.load(Ordering::SeqCst);
    finish(data, trainer, progress, stats)
}
