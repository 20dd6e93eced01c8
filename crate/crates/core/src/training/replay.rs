use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use rand::Rng;

use super::history::{compute_targets, GameHistory, Target};
use super::TrainError;
use crate::agent::{LearnedModel, Observation};

/// FIFO store of the most recent `capacity` episodes.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    games: VecDeque<Arc<GameHistory>>,
    next_id: u64,
    steps: usize,
    sampled_batches: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity: capacity.max(1),
            games: VecDeque::new(),
            next_id: 0,
            steps: 0,
            sampled_batches: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stores `game` under the next id, evicting the oldest when full.
    /// Returns the assigned id.
    pub fn push(&mut self, mut game: GameHistory) -> u64 {
        game.id = self.next_id;
        self.next_id += 1;
        self.steps += game.len();
        self.games.push_back(Arc::new(game));
        while self.games.len() > self.capacity {
            let old = self.games.pop_front().expect("over capacity");
            self.steps -= old.len();
        }
        self.next_id - 1
    }

    pub fn len(&self) -> usize {
        self.games.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps == 0
    }

    /// Steps held right now.
    pub fn stored_steps(&self) -> usize {
        self.steps
    }

    pub fn sampled_batches(&self) -> u64 {
        self.sampled_batches
    }

    pub fn ids(&self) -> Vec<u64> {
        self.games.iter().map(|g| g.id).collect()
    }

    pub fn games(&self) -> impl Iterator<Item = &Arc<GameHistory>> {
        self.games.iter()
    }
}

/// One sampled training position with its unroll.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchItem {
    pub game_id: u64,
    pub t: usize,
    pub observation: Observation<f64>,
    /// `K` actions; random past the episode end.
    pub actions: Vec<usize>,
    /// `K + 1` targets.
    pub targets: Vec<Target>,
}

pub type Batch = Vec<BatchItem>;

/// Draws `b` positions uniformly over all stored `(episode, t)` pairs.
pub fn sample_batch<R: Rng>(
    buffer: &mut ReplayBuffer,
    b: usize,
    k_unroll: usize,
    n: usize,
    gamma: f64,
    n_actions: usize,
    rng: &mut R,
) -> Result<Batch, TrainError> {
    if buffer.is_empty() {
        return Err(TrainError::EmptyBuffer);
    }
    let mut out = Vec::with_capacity(b);
    for _ in 0..b {
        let mut pos = rng.gen_range(0..buffer.steps);
        let game = buffer
            .games
            .iter()
            .find(|g| {
                if pos < g.len() {
                    true
                } else {
                    pos -= g.len();
                    false
                }
            })
            .expect("position inside the buffer");
        let t = pos;
        let actions = (0..k_unroll)
            .map(|k| {
                game.steps
                    .get(t + k)
                    .map_or_else(|| rng.gen_range(0..n_actions), |s| s.action)
            })
            .collect();
        out.push(BatchItem {
            game_id: game.id,
            t,
            observation: game.steps[t].observation.clone(),
            actions,
            targets: compute_targets(game, t, k_unroll, n, gamma, n_actions),
        });
    }
    buffer.sampled_batches += 1;
    Ok(out)
}

/// Latest parameters plus the training-step counter, always read together.
#[derive(Debug)]
pub struct SharedStorage {
    inner: Mutex<(Arc<LearnedModel<f64>>, u64)>,
}

impl SharedStorage {
    pub fn new(model: LearnedModel<f64>) -> Self {
        SharedStorage {
            inner: Mutex::new((Arc::new(model), 0)),
        }
    }

    /// Immutable snapshot of the newest model and its step.
    pub fn latest(&self) -> (Arc<LearnedModel<f64>>, u64) {
        let g = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        (Arc::clone(&g.0), g.1)
    }

    pub fn steps(&self) -> u64 {
        self.latest().1
    }

    /// Publishes a new model and increments the step counter.
    pub fn publish(&self, model: LearnedModel<f64>) -> u64 {
        let mut g = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        g.0 = Arc::new(model);
        g.1 += 1;
        g.1
    }
}
