//! Representation, dynamics and prediction networks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::History;
use crate::grid::{MicrogridConfig, SystemState};
use crate::nn::{
    from_categorical, inverse_scale, scale_transform, softmax, to_categorical, Lstm, Mlp, NnError,
    ParamId, ParameterSet, SupportSpec, Tape, Var,
};
use crate::scalar::Scalar;

/// Powers enter the networks in units of this many kW.
pub const POWER_SCALE: f64 = 100.0;

/// Number of entries in [`Observation::features`].
pub const STATE_FEATURES: usize = 7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub history_window: usize,
    pub lstm_hidden: usize,
    pub repr_hidden: Vec<usize>,
    pub latent: usize,
    pub dyn_hidden: Vec<usize>,
    pub pred_hidden: Vec<usize>,
    pub n_actions: usize,
    /// Half-width of the reward/value support.
    pub support: usize,
    /// Dollars per unit of the reward/value heads, keeping daily returns
    /// inside the support.
    pub reward_scale: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            history_window: 6,
            lstm_hidden: 16,
            repr_hidden: vec![64, 64],
            latent: 10,
            dyn_hidden: vec![64, 64],
            pred_hidden: vec![64, 64],
            n_actions: 9,
            support: 10,
            reward_scale: 10.0,
        }
    }
}

impl ModelSpec {
    pub fn support_spec(&self) -> SupportSpec {
        SupportSpec::new(self.support)
    }

    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |m: &str| Err(NnError::Shape(m.to_string()));
        if self.history_window == 0
            || self.lstm_hidden == 0
            || self.latent == 0
            || self.n_actions == 0
        {
            return bad("model sizes must be positive");
        }
        if !(self.reward_scale.is_finite() && self.reward_scale > 0.0) {
            return bad("reward scale must be positive");
        }
        if self.support == 0 {
            return bad("support half-width must be at least 1");
        }
        if [&self.repr_hidden, &self.dyn_hidden, &self.pred_hidden]
            .iter()
            .any(|h| h.contains(&0))
        {
            return bad("hidden layer widths must be positive");
        }
        Ok(())
    }
}

/// Normalized network input for one decision.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    pub pv: Vec<T>,
    pub wt: Vec<T>,
    pub load: Vec<T>,
    /// soc, pv, wt, load, buy price, sell price, elapsed fraction of the episode.
    pub features: Vec<T>,
}

pub fn observe(cfg: &MicrogridConfig, state: &SystemState, history: &History) -> Observation<f64> {
    let n = |v: &[f64]| v.iter().map(|x| x / POWER_SCALE).collect();
    Observation {
        pv: n(&history.pv),
        wt: n(&history.wt),
        load: n(&history.load),
        features: vec![
            state.soc,
            state.pv_avail / POWER_SCALE,
            state.wt_avail / POWER_SCALE,
            state.total_load_p() / POWER_SCALE,
            state.p_buy,
            state.p_sell,
            state.t as f64 / cfg.horizon_t as f64,
        ],
    }
}

impl Observation<f64> {
    pub fn cast<T: Scalar>(&self) -> Observation<T> {
        let c = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect();
        Observation {
            pv: c(&self.pv),
            wt: c(&self.wt),
            load: c(&self.load),
            features: c(&self.features),
        }
    }
}

/// The three networks over one parameter set; names are prefixed
/// `repr.`, `dyn.` and `pred.`.
#[derive(Debug, Clone, PartialEq)]
pub struct LearnedModel<T> {
    pub spec: ModelSpec,
    pub params: ParameterSet<T>,
    pub(crate) lstm_pv: Lstm,
    pub(crate) lstm_wt: Lstm,
    pub(crate) lstm_load: Lstm,
    pub(crate) repr: Mlp,
    pub(crate) dyn_state: Mlp,
    pub(crate) dyn_reward: Mlp,
    pub(crate) pred_policy: Mlp,
    pub(crate) pred_value: Mlp,
}

impl<T: Scalar> LearnedModel<T> {
    /// Random initialization; categorical and policy heads start near zero.
    pub fn new(spec: ModelSpec, seed: u64) -> Result<Self, NnError> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParameterSet::new();
        let lstm_pv = Lstm::new(&mut p, "repr.lstm_pv", spec.lstm_hidden, &mut rng);
        let lstm_wt = Lstm::new(&mut p, "repr.lstm_wt", spec.lstm_hidden, &mut rng);
        let lstm_load = Lstm::new(&mut p, "repr.lstm_load", spec.lstm_hidden, &mut rng);
        let sizes = |inp: usize, hidden: &[usize], out: usize| {
            let mut s = vec![inp];
            s.extend_from_slice(hidden);
            s.push(out);
            s
        };
        let repr_in = 3 * spec.lstm_hidden + STATE_FEATURES;
        let repr = Mlp::new(
            &mut p,
            "repr.mlp",
            &sizes(repr_in, &spec.repr_hidden, spec.latent),
            1.0,
            &mut rng,
        );
        let dyn_in = spec.latent + spec.n_actions;
        let width = spec.support_spec().size();
        let dyn_state = Mlp::new(
            &mut p,
            "dyn.state",
            &sizes(dyn_in, &spec.dyn_hidden, spec.latent),
            1.0,
            &mut rng,
        );
        let dyn_reward = Mlp::new(
            &mut p,
            "dyn.reward",
            &sizes(dyn_in, &spec.dyn_hidden, width),
            0.01,
            &mut rng,
        );
        let pred_policy = Mlp::new(
            &mut p,
            "pred.policy",
            &sizes(spec.latent, &spec.pred_hidden, spec.n_actions),
            0.01,
            &mut rng,
        );
        let pred_value = Mlp::new(
            &mut p,
            "pred.value",
            &sizes(spec.latent, &spec.pred_hidden, width),
            0.01,
            &mut rng,
        );
        Ok(LearnedModel {
            spec,
            params: p,
            lstm_pv,
            lstm_wt,
            lstm_load,
            repr,
            dyn_state,
            dyn_reward,
            pred_policy,
            pred_value,
        })
    }

    /// Rebuilds the model around stored parameters (layout is checked).
    pub fn from_params(spec: ModelSpec, params: ParameterSet<T>) -> Result<Self, NnError> {
        let mut m = Self::new(spec, 0)?;
        m.params.check_layout(&params)?;
        m.params = params;
        Ok(m)
    }

    /// Parameters penalized by the L2 term (all of them).
    pub fn all_param_ids(&self) -> Vec<ParamId> {
        (0..self.params.tensors.len()).map(ParamId).collect()
    }

    pub fn represent_on(
        &self,
        tape: &mut Tape<'_, T>,
        obs: &Observation<T>,
    ) -> Result<Var, NnError> {
        if obs.features.len() != STATE_FEATURES {
            return Err(NnError::Shape(format!(
                "{} state features, expected {STATE_FEATURES}",
                obs.features.len()
            )));
        }
        let w = self.spec.history_window;
        let a = self.lstm_pv.forward(tape, &obs.pv, w)?;
        let b = self.lstm_wt.forward(tape, &obs.wt, w)?;
        let c = self.lstm_load.forward(tape, &obs.load, w)?;
        let f = tape.input(obs.features.clone());
        let x = tape.concat(&[a, b, c, f])?;
        self.repr.forward(tape, x)
    }

    /// Reward logits and next latent state.
    pub fn dynamics_on(
        &self,
        tape: &mut Tape<'_, T>,
        s: Var,
        action: usize,
    ) -> Result<(Var, Var), NnError> {
        if action >= self.spec.n_actions {
            return Err(NnError::Shape(format!(
                "action {action} of {}",
                self.spec.n_actions
            )));
        }
        let mut onehot = vec![T::zero(); self.spec.n_actions];
        onehot[action] = T::one();
        let a = tape.input(onehot);
        let x = tape.concat(&[s, a])?;
        let r = self.dyn_reward.forward(tape, x)?;
        let s2 = self.dyn_state.forward(tape, x)?;
        Ok((r, s2))
    }

    /// Policy logits and value logits.
    pub fn predict_on(&self, tape: &mut Tape<'_, T>, s: Var) -> Result<(Var, Var), NnError> {
        let p = self.pred_policy.forward(tape, s)?;
        let v = self.pred_value.forward(tape, s)?;
        Ok((p, v))
    }

    /// Dollar value of reward/value logits.
    pub fn decode(&self, logits: &[T]) -> T {
        inverse_scale(from_categorical(&softmax(logits), self.spec.support_spec()))
            * T::lit(self.spec.reward_scale)
    }

    /// Two-hot training target for a dollar amount.
    pub fn encode(&self, x: f64) -> Vec<T> {
        to_categorical(
            T::lit(scale_transform(x / self.spec.reward_scale)),
            self.spec.support_spec(),
        )
    }

    pub fn represent(&self, obs: &Observation<T>) -> Result<Vec<T>, NnError> {
        let mut tape = Tape::new(&self.params);
        let s = self.represent_on(&mut tape, obs)?;
        Ok(tape.value(s)?.to_vec())
    }

    /// `(reward, next latent)` in natural units.
    pub fn dynamics(&self, s: &[T], action: usize) -> Result<(T, Vec<T>), NnError> {
        let mut tape = Tape::new(&self.params);
        let sv = tape.input(s.to_vec());
        let (r, s2) = self.dynamics_on(&mut tape, sv, action)?;
        Ok((self.decode(tape.value(r)?), tape.value(s2)?.to_vec()))
    }

    /// `(policy, value)` with the policy a probability vector.
    pub fn predict(&self, s: &[T]) -> Result<(Vec<T>, T), NnError> {
        let mut tape = Tape::new(&self.params);
        let sv = tape.input(s.to_vec());
        let (p, v) = self.predict_on(&mut tape, sv)?;
        Ok((softmax(tape.value(p)?), self.decode(tape.value(v)?)))
    }
}
