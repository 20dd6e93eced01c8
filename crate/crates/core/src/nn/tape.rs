//! Reverse-mode automatic differentiation over vector-valued nodes.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::scalar::Scalar;

use super::{NnError, ParamId, ParameterSet};

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a node of one particular tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    id: usize,
    tape: u64,
}

#[derive(Debug, Clone)]
enum Op<T> {
    Input,
    Affine {
        w: ParamId,
        b: Option<ParamId>,
        x: Var,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Concat(Vec<Var>),
    Slice {
        x: Var,
        start: usize,
    },
    Scale(Var, T),
    /// Identity forward, gradient multiplied by the factor.
    GradScale(Var, T),
    /// `-sum_i t_i log softmax(x)_i`.
    SoftmaxXent {
        logits: Var,
        target: Vec<T>,
    },
    SumScalars(Vec<Var>),
    SquaredNorm(Vec<ParamId>),
}

#[derive(Debug, Clone)]
struct Node<T> {
    op: Op<T>,
    value: Vec<T>,
}

/// Records a forward pass against a fixed parameter set.
pub struct Tape<'p, T> {
    params: &'p ParameterSet<T>,
    id: u64,
    nodes: Vec<Node<T>>,
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p ParameterSet<T>) -> Self {
        Tape {
            params,
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParameterSet<T> {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op<T>, value: Vec<T>) -> Var {
        self.nodes.push(Node { op, value });
        Var {
            id: self.nodes.len() - 1,
            tape: self.id,
        }
    }

    fn node(&self, v: Var) -> Result<&Node<T>, NnError> {
        if v.tape != self.id || v.id >= self.nodes.len() {
            return Err(NnError::Detached);
        }
        Ok(&self.nodes[v.id])
    }

    pub fn value(&self, v: Var) -> Result<&[T], NnError> {
        Ok(&self.node(v)?.value)
    }

    pub fn input(&mut self, values: Vec<T>) -> Var {
        self.push(Op::Input, values)
    }

    /// `W x (+ b)` with `W` a `rows x cols` parameter.
    pub fn affine(&mut self, w: ParamId, b: Option<ParamId>, x: Var) -> Result<Var, NnError> {
        let wt = self.params.get(w);
        let xv = &self.node(x)?.value;
        if xv.len() != wt.cols {
            return Err(NnError::Shape(format!(
                "{}: expects input of length {}, got {}",
                self.params.names[w.0],
                wt.cols,
                xv.len()
            )));
        }
        let mut out: Vec<T> = (0..wt.rows)
            .map(|r| {
                let row = &wt.data[r * wt.cols..(r + 1) * wt.cols];
                row.iter().zip(xv).map(|(&a, &b)| a * b).sum()
            })
            .collect();
        if let Some(b) = b {
            let bt = self.params.get(b);
            if bt.len() != wt.rows {
                return Err(NnError::Shape(format!(
                    "{}: bias length mismatch",
                    self.params.names[b.0]
                )));
            }
            out.iter_mut().zip(&bt.data).for_each(|(o, &bb)| *o += bb);
        }
        Ok(self.push(Op::Affine { w, b, x }, out))
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Vec<T>, NnError> {
        let (av, bv) = (&self.node(a)?.value, &self.node(b)?.value);
        if av.len() != bv.len() {
            return Err(NnError::Shape(format!(
                "elementwise lengths {} and {}",
                av.len(),
                bv.len()
            )));
        }
        Ok(av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let v = self.binary(a, b, |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let v = self.binary(a, b, |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T) -> Result<Vec<T>, NnError> {
        Ok(self.node(x)?.value.iter().map(|&v| f(v)).collect())
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, NnError> {
        let v = self.unary(x, |a| a.max(T::zero()))?;
        Ok(self.push(Op::Relu(x), v))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, NnError> {
        let v = self.unary(x, sigmoid)?;
        Ok(self.push(Op::Sigmoid(x), v))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, NnError> {
        let v = self.unary(x, |a| a.tanh())?;
        Ok(self.push(Op::Tanh(x), v))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var, NnError> {
        let v = self.unary(x, |a| a * c)?;
        Ok(self.push(Op::Scale(x, c), v))
    }

    pub fn grad_scale(&mut self, x: Var, c: T) -> Result<Var, NnError> {
        let v = self.node(x)?.value.clone();
        Ok(self.push(Op::GradScale(x, c), v))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let mut v = Vec::new();
        for &p in parts {
            v.extend_from_slice(&self.node(p)?.value);
        }
        Ok(self.push(Op::Concat(parts.to_vec()), v))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NnError> {
        let xv = &self.node(x)?.value;
        if start + len > xv.len() {
            return Err(NnError::Shape(format!(
                "slice {start}..{} of length {}",
                start + len,
                xv.len()
            )));
        }
        let v = xv[start..start + len].to_vec();
        Ok(self.push(Op::Slice { x, start }, v))
    }

    /// Cross-entropy of `softmax(logits)` against `target` (scalar node).
    pub fn softmax_xent(&mut self, logits: Var, target: Vec<T>) -> Result<Var, NnError> {
        let lv = &self.node(logits)?.value;
        if lv.len() != target.len() {
            return Err(NnError::Shape(format!(
                "{} logits for a {}-way target",
                lv.len(),
                target.len()
            )));
        }
        let ls = log_softmax(lv);
        let v: T = ls.iter().zip(&target).map(|(&l, &t)| -(t * l)).sum();
        Ok(self.push(Op::SoftmaxXent { logits, target }, vec![v]))
    }

    pub fn sum_scalars(&mut self, parts: &[Var]) -> Result<Var, NnError> {
        let mut s = T::zero();
        for &p in parts {
            let v = &self.node(p)?.value;
            if v.len() != 1 {
                return Err(NnError::Shape("sum_scalars over a non-scalar node".into()));
            }
            s += v[0];
        }
        Ok(self.push(Op::SumScalars(parts.to_vec()), vec![s]))
    }

    /// Sum of squares of the given parameters (scalar node).
    pub fn squared_norm(&mut self, ids: &[ParamId]) -> Var {
        let s = ids
            .iter()
            .flat_map(|&id| self.params.get(id).data.iter())
            .map(|&v| v * v)
            .sum();
        self.push(Op::SquaredNorm(ids.to_vec()), vec![s])
    }

    /// Gradient of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Result<ParameterSet<T>, NnError> {
        if self.node(loss)?.value.len() != 1 {
            return Err(NnError::Shape("backward needs a scalar loss".into()));
        }
        let mut grads = self.params.zeros_like();
        let mut adj: Vec<Option<Vec<T>>> = vec![None; loss.id + 1];
        adj[loss.id] = Some(vec![T::one()]);
        let acc = |adj: &mut Vec<Option<Vec<T>>>, v: Var, g: &[T]| match &mut adj[v.id] {
            Some(a) => a.iter_mut().zip(g).for_each(|(x, &y)| *x += y),
            slot => *slot = Some(g.to_vec()),
        };
        for id in (0..=loss.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Input => {}
                Op::Affine { w, b, x } => {
                    let wt = self.params.get(*w);
                    let xv = &self.nodes[x.id].value;
                    let gw = &mut grads.tensors[w.0].data;
                    let mut gx = vec![T::zero(); wt.cols];
                    for (r, &gr) in g.iter().enumerate() {
                        if gr == T::zero() {
                            continue;
                        }
                        let row = &wt.data[r * wt.cols..(r + 1) * wt.cols];
                        let grow = &mut gw[r * wt.cols..(r + 1) * wt.cols];
                        for c in 0..wt.cols {
                            grow[c] += gr * xv[c];
                            gx[c] += gr * row[c];
                        }
                    }
                    if let Some(b) = b {
                        grads.tensors[b.0]
                            .data
                            .iter_mut()
                            .zip(&g)
                            .for_each(|(a, &v)| *a += v);
                    }
                    acc(&mut adj, *x, &gx);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *a, &g);
                    acc(&mut adj, *b, &g);
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.id].value, &self.nodes[b.id].value);
                    let ga: Vec<T> = g.iter().zip(bv).map(|(&x, &y)| x * y).collect();
                    let gb: Vec<T> = g.iter().zip(av).map(|(&x, &y)| x * y).collect();
                    acc(&mut adj, *a, &ga);
                    acc(&mut adj, *b, &gb);
                }
                Op::Relu(x) => {
                    let xv = &self.nodes[x.id].value;
                    let gx: Vec<T> = g
                        .iter()
                        .zip(xv)
                        .map(|(&gi, &xi)| if xi > T::zero() { gi } else { T::zero() })
                        .collect();
                    acc(&mut adj, *x, &gx);
                }
                Op::Sigmoid(x) => {
                    let gx: Vec<T> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(&gi, &y)| gi * y * (T::one() - y))
                        .collect();
                    acc(&mut adj, *x, &gx);
                }
                Op::Tanh(x) => {
                    let gx: Vec<T> = g
                        .iter()
                        .zip(&node.value)
                        .map(|(&gi, &y)| gi * (T::one() - y * y))
                        .collect();
                    acc(&mut adj, *x, &gx);
                }
                Op::Scale(x, c) => {
                    let gx: Vec<T> = g.iter().map(|&gi| gi * *c).collect();
                    acc(&mut adj, *x, &gx);
                }
                Op::GradScale(x, c) => {
                    let gx: Vec<T> = g.iter().map(|&gi| gi * *c).collect();
                    acc(&mut adj, *x, &gx);
                }
                Op::Concat(parts) => {
                    let mut at = 0;
                    for p in parts {
                        let n = self.nodes[p.id].value.len();
                        acc(&mut adj, *p, &g[at..at + n]);
                        at += n;
                    }
                }
                Op::Slice { x, start } => {
                    let mut gx = vec![T::zero(); self.nodes[x.id].value.len()];
                    gx[*start..*start + g.len()].copy_from_slice(&g);
                    acc(&mut adj, *x, &gx);
                }
                Op::SoftmaxXent { logits, target } => {
                    let p = softmax(&self.nodes[logits.id].value);
                    let mass: T = target.iter().copied().sum();
                    let gx: Vec<T> = p
                        .iter()
                        .zip(target)
                        .map(|(&pi, &ti)| g[0] * (pi * mass - ti))
                        .collect();
                    acc(&mut adj, *logits, &gx);
                }
                Op::SumScalars(parts) => {
                    for p in parts {
                        acc(&mut adj, *p, &g);
                    }
                }
                Op::SquaredNorm(ids) => {
                    let two = T::lit(2.0);
                    for id in ids {
                        let src = &self.params.get(*id).data;
                        grads.tensors[id.0]
                            .data
                            .iter_mut()
                            .zip(src)
                            .for_each(|(a, &v)| *a += two * g[0] * v);
                    }
                }
            }
        }
        Ok(grads)
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

pub fn log_softmax<T: Scalar>(x: &[T]) -> Vec<T> {
    let m = x.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = m + x.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
    x.iter().map(|&v| v - lse).collect()
}

pub fn softmax<T: Scalar>(x: &[T]) -> Vec<T> {
    let m = x.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = x.iter().map(|&v| (v - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}
