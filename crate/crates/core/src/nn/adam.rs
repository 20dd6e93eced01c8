use crate::scalar::Scalar;

use super::{NnError, ParameterSet};

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: ParameterSet<T>,
    v: ParameterSet<T>,
    steps: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParameterSet<T>, lr: T) -> Self {
        Adam {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            m: params.zeros_like(),
            v: params.zeros_like(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// First and second moment estimates.
    pub fn moments(&self) -> (&ParameterSet<T>, &ParameterSet<T>) {
        (&self.m, &self.v)
    }

    /// Rebuilds a saved optimizer for `params`; the moments must match its layout.
    pub fn from_moments(
        params: &ParameterSet<T>,
        lr: T,
        m: ParameterSet<T>,
        v: ParameterSet<T>,
        steps: u64,
    ) -> Result<Self, NnError> {
        params.check_layout(&m)?;
        params.check_layout(&v)?;
        Ok(Adam {
            m,
            v,
            steps,
            ..Adam::new(params, lr)
        })
    }

    /// One update of `params` along `grads`; bumps `params.version`.
    pub fn step(
        &mut self,
        params: &mut ParameterSet<T>,
        grads: &ParameterSet<T>,
    ) -> Result<(), NnError> {
        params.check_layout(grads)?;
        params.check_layout(&self.m)?;
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = T::one() - self.beta1.powi(t);
        let c2 = T::one() - self.beta2.powi(t);
        for k in 0..params.tensors.len() {
            let p = &mut params.tensors[k].data;
            let g = &grads.tensors[k].data;
            let m = &mut self.m.tensors[k].data;
            let v = &mut self.v.tensors[k].data;
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (T::one() - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (T::one() - self.beta2) * g[i] * g[i];
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                p[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        params.version += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_scalar(v: f64) -> ParameterSet<f64> {
        let mut p = ParameterSet::new();
        let id = p.add("w", 1, 1);
        p.fill(id, v);
        p
    }

    #[test]
    fn first_step_is_lr() {
        let mut p = one_scalar(0.0);
        let g = one_scalar(1.0);
        let mut a = Adam::new(&p, 0.005);
        a.step(&mut p, &g).unwrap();
        assert!((p.tensors[0].data[0] + 0.005).abs() < 1e-10);
        assert_eq!(p.version, 1);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = one_scalar(0.7);
        let g = one_scalar(0.0);
        let mut a = Adam::new(&p, 0.005);
        a.step(&mut p, &g).unwrap();
        assert_eq!(p.tensors[0].data[0], 0.7);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let mut p = one_scalar(0.0);
        let g = one_scalar(-2.0);
        let mut a = Adam::new(&p, 0.01);
        a.step(&mut p, &g).unwrap();
        let first = p.tensors[0].data[0];
        a.step(&mut p, &g).unwrap();
        assert!(first > 0.0 && p.tensors[0].data[0] > first);
    }
}
