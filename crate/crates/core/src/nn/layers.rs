use rand::Rng;

use crate::scalar::Scalar;

use super::{NnError, ParamId, ParameterSet, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub weights: Vec<ParamId>,
    pub biases: Vec<ParamId>,
    /// Layer widths including the input, e.g. `[in, 64, 64, out]`.
    pub sizes: Vec<usize>,
}

impl Mlp {
    /// Registers `name.w{k}` / `name.b{k}`; hidden layers are rectified, the
    /// output is linear. The last layer starts at `out_scale` times Glorot.
    pub fn new<T: Scalar, R: Rng>(
        params: &mut ParameterSet<T>,
        name: &str,
        sizes: &[usize],
        out_scale: f64,
        rng: &mut R,
    ) -> Self {
        assert!(sizes.len() >= 2, "an mlp needs input and output sizes");
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for k in 0..sizes.len() - 1 {
            let w = params.add(&format!("{name}.w{k}"), sizes[k + 1], sizes[k]);
            params.init_glorot(w, rng);
            if k == sizes.len() - 2 {
                let s = T::lit(out_scale);
                params.get_mut(w).data.iter_mut().for_each(|v| *v *= s);
            }
            weights.push(w);
            biases.push(params.add(&format!("{name}.b{k}"), sizes[k + 1], 1));
        }
        Mlp {
            weights,
            biases,
            sizes: sizes.to_vec(),
        }
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    pub fn forward<T: Scalar>(&self, tape: &mut Tape<'_, T>, x: Var) -> Result<Var, NnError> {
        let mut h = x;
        let last = self.weights.len() - 1;
        for (k, (&w, &b)) in self.weights.iter().zip(&self.biases).enumerate() {
            h = tape.affine(w, Some(b), h)?;
            if k < last {
                h = tape.relu(h)?;
            }
        }
        Ok(h)
    }

    pub fn weight_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.weights.iter().chain(&self.biases).copied()
    }
}

/// Single-feature LSTM (gate order: input, forget, cell, output).
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub hidden: usize,
}

impl Lstm {
    pub fn new<T: Scalar, R: Rng>(
        params: &mut ParameterSet<T>,
        name: &str,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let w_ih = params.add(&format!("{name}.w_ih"), 4 * hidden, 1);
        let w_hh = params.add(&format!("{name}.w_hh"), 4 * hidden, hidden);
        let bias = params.add(&format!("{name}.b"), 4 * hidden, 1);
        params.init_glorot(w_ih, rng);
        params.init_glorot(w_hh, rng);
        Lstm {
            w_ih,
            w_hh,
            bias,
            hidden,
        }
    }

    /// Runs the recurrence over `seq` from zero state; returns the last hidden state.
    pub fn forward<T: Scalar>(
        &self,
        tape: &mut Tape<'_, T>,
        seq: &[T],
        expected_len: usize,
    ) -> Result<Var, NnError> {
        if seq.len() != expected_len {
            return Err(NnError::Shape(format!(
                "lstm window of {} steps, expected {expected_len}",
                seq.len()
            )));
        }
        let n = self.hidden;
        let mut h = tape.input(vec![T::zero(); n]);
        let mut c = tape.input(vec![T::zero(); n]);
        for &x in seq {
            let xv = tape.input(vec![x]);
            let a = tape.affine(self.w_ih, Some(self.bias), xv)?;
            let b = tape.affine(self.w_hh, None, h)?;
            let z = tape.add(a, b)?;
            let i = tape.slice(z, 0, n)?;
            let i = tape.sigmoid(i)?;
            let f = tape.slice(z, n, n)?;
            let f = tape.sigmoid(f)?;
            let g = tape.slice(z, 2 * n, n)?;
            let g = tape.tanh(g)?;
            let o = tape.slice(z, 3 * n, n)?;
            let o = tape.sigmoid(o)?;
            let fc = tape.mul(f, c)?;
            let ig = tape.mul(i, g)?;
            c = tape.add(fc, ig)?;
            let tc = tape.tanh(c)?;
            h = tape.mul(o, tc)?;
        }
        Ok(h)
    }

    pub fn weight_ids(&self) -> impl Iterator<Item = ParamId> {
        [self.w_ih, self.w_hh, self.bias].into_iter()
    }
}
