use rand::Rng;
use serde::Serialize;

use super::replay::{sample_batch, Batch, ReplayBuffer, SharedStorage};
use super::{TrainConfig, TrainError};
use crate::agent::LearnedModel;
use crate::nn::{Adam, NnError, Tape, Var};
use crate::scalar::Scalar;

/// Gradient factor on the latent state entering each dynamics step.
pub const DYNAMICS_GRAD_SCALE: f64 = 0.5;

/// Loss value split by head. Head terms are batch means with the 1/K unroll
/// weighting already applied.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossParts {
    pub total: f64,
    pub reward: f64,
    pub value: f64,
    pub policy: f64,
    pub l2: f64,
}

fn unroll_weight(k: usize, k_unroll: usize) -> f64 {
    if k == 0 {
        1.0
    } else {
        1.0 / k_unroll as f64
    }
}

/// Records the full unrolled loss on `tape`.
pub fn loss_on<T: Scalar>(
    model: &LearnedModel<T>,
    tape: &mut Tape<'_, T>,
    batch: &Batch,
    k_unroll: usize,
    c_l2: f64,
) -> Result<(Var, LossParts), NnError> {
    loss_on_scaled(model, tape, batch, k_unroll, c_l2, DYNAMICS_GRAD_SCALE)
}

/// [`loss_on`] with a chosen gradient factor on each dynamics step. The value
/// does not depend on `dyn_grad_scale`; with 1.0 the tape gradient is the
/// exact loss gradient.
pub fn loss_on_scaled<T: Scalar>(
    model: &LearnedModel<T>,
    tape: &mut Tape<'_, T>,
    batch: &Batch,
    k_unroll: usize,
    c_l2: f64,
    dyn_grad_scale: f64,
) -> Result<(Var, LossParts), NnError> {
    if batch.is_empty() {
        return Err(NnError::Shape("empty batch".into()));
    }
    let inv_b = T::lit(1.0 / batch.len() as f64);
    let mut heads: [Vec<Var>; 3] = Default::default();
    for item in batch {
        if item.actions.len() < k_unroll || item.targets.len() < k_unroll + 1 {
            return Err(NnError::Shape(format!(
                "batch item unrolls {} steps, need {k_unroll}",
                item.actions.len()
            )));
        }
        let mut s = model.represent_on(tape, &item.observation.cast())?;
        for k in 0..=k_unroll {
            let w = T::lit(unroll_weight(k, k_unroll)) * inv_b;
            let tg = &item.targets[k];
            if k > 0 {
                let (r, next) = model.dynamics_on(tape, s, item.actions[k - 1])?;
                let lr = tape.softmax_xent(r, model.encode(tg.reward))?;
                heads[0].push(tape.scale(lr, w)?);
                s = tape.grad_scale(next, T::lit(dyn_grad_scale))?;
            }
            let (p, v) = model.predict_on(tape, s)?;
            let lv = tape.softmax_xent(v, model.encode(tg.value))?;
            heads[1].push(tape.scale(lv, w)?);
            if tg.policy_mask {
                let lp = tape.softmax_xent(p, tg.policy.iter().map(|&x| T::lit(x)).collect())?;
                heads[2].push(tape.scale(lp, w)?);
            }
        }
    }
    let mut parts = Vec::with_capacity(4);
    let mut vals = [0.0; 4];
    for (h, terms) in heads.iter().enumerate() {
        let v = tape.sum_scalars(terms)?;
        vals[h] = tape.value(v)?[0].as_f64();
        parts.push(v);
    }
    let sq = tape.squared_norm(&model.all_param_ids());
    let l2 = tape.scale(sq, T::lit(c_l2))?;
    vals[3] = tape.value(l2)?[0].as_f64();
    parts.push(l2);
    let total = tape.sum_scalars(&parts)?;
    let out = LossParts {
        total: tape.value(total)?[0].as_f64(),
        reward: vals[0],
        value: vals[1],
        policy: vals[2],
        l2: vals[3],
    };
    for (name, v) in [
        ("reward", out.reward),
        ("value", out.value),
        ("policy", out.policy),
        ("l2", out.l2),
    ] {
        if !v.is_finite() {
            return Err(NnError::NonFinite(format!("{name} loss")));
        }
    }
    Ok((total, out))
}

/// Loss value without gradients.
pub fn loss<T: Scalar>(
    model: &LearnedModel<T>,
    batch: &Batch,
    k_unroll: usize,
    c_l2: f64,
) -> Result<LossParts, NnError> {
    let mut tape = Tape::new(&model.params);
    Ok(loss_on(model, &mut tape, batch, k_unroll, c_l2)?.1)
}

/// Same weighting as [`loss`] applied to the entropies of the targets: the
/// lower bound each head's cross-entropy can reach.
pub fn target_entropy(model: &LearnedModel<f64>, batch: &Batch, k_unroll: usize) -> LossParts {
    let h = |p: &[f64]| {
        -p.iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| x * x.ln())
            .sum::<f64>()
    };
    let inv_b = 1.0 / batch.len() as f64;
    let mut out = LossParts::default();
    for item in batch {
        for k in 0..=k_unroll {
            let w = unroll_weight(k, k_unroll) * inv_b;
            let tg = &item.targets[k];
            if k > 0 {
                out.reward += w * h(&model.encode(tg.reward));
            }
            out.value += w * h(&model.encode(tg.value));
            if tg.policy_mask {
                out.policy += w * h(&tg.policy);
            }
        }
    }
    out.total = out.reward + out.value + out.policy;
    out
}

/// The learner: current parameters plus optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: LearnedModel<f64>,
    pub optimizer: Adam<f64>,
}

impl Trainer {
    pub fn new(model: LearnedModel<f64>, lr: f64) -> Self {
        let optimizer = Adam::new(&model.params, lr);
        Trainer { model, optimizer }
    }

    /// One gradient step on a given batch; returns the loss before the step.
    pub fn step_on_batch(
        &mut self,
        batch: &Batch,
        k_unroll: usize,
        c_l2: f64,
    ) -> Result<LossParts, TrainError> {
        let (grads, parts) = {
            let mut tape = Tape::new(&self.model.params);
            let (l, parts) = loss_on(&self.model, &mut tape, batch, k_unroll, c_l2)?;
            (tape.backward(l)?, parts)
        };
        self.optimizer.step(&mut self.model.params, &grads)?;
        Ok(parts)
    }
}

/// Sample, loss, backward, Adam step, then publish to `storage`.
pub fn train_step<R: Rng>(
    trainer: &mut Trainer,
    storage: &SharedStorage,
    buffer: &mut ReplayBuffer,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<LossParts, TrainError> {
    let batch = sample_batch(
        buffer,
        cfg.batch_size,
        cfg.unroll_steps,
        cfg.td_steps,
        cfg.mcts.gamma,
        trainer.model.spec.n_actions,
        rng,
    )?;
    let parts = trainer.step_on_batch(&batch, cfg.unroll_steps, cfg.c_l2)?;
    storage.publish(trainer.model.clone());
    Ok(parts)
}
