//! Product cone `R_+^l x Q^{m_1} x ... x Q^{m_k}`: Jordan algebra, step
//! lengths and Nesterov-Todd scaling.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kind {
    Nonneg,
    Soc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Block {
    pub kind: Kind,
    pub start: usize,
    pub dim: usize,
}

impl Block {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.dim
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Cones {
    pub blocks: Vec<Block>,
    pub dim: usize,
}

impl Cones {
    pub fn push(&mut self, kind: Kind, dim: usize) {
        if dim == 0 {
            return;
        }
        self.blocks.push(Block {
            kind,
            start: self.dim,
            dim,
        });
        self.dim += dim;
    }

    /// Barrier degree: one per nonnegative coordinate, one per Lorentz cone.
    pub fn degree(&self) -> usize {
        self.blocks
            .iter()
            .map(|b| match b.kind {
                Kind::Nonneg => b.dim,
                Kind::Soc => 1,
            })
            .sum()
    }

    /// Identity element `e` of the Jordan algebra.
    pub fn identity<T: Scalar>(&self) -> Vec<T> {
        let mut e = vec![T::zero(); self.dim];
        for b in &self.blocks {
            match b.kind {
                Kind::Nonneg => b.range().for_each(|i| e[i] = T::one()),
                Kind::Soc => e[b.start] = T::one(),
            }
        }
        e
    }

    /// Smallest `a` with `x + a e` on the cone boundary (negative when interior).
    pub fn boundary_shift<T: Scalar>(&self, x: &[T]) -> T {
        let mut worst = T::neg_infinity();
        for b in &self.blocks {
            match b.kind {
                Kind::Nonneg => {
                    for i in b.range() {
                        worst = worst.max(-x[i]);
                    }
                }
                Kind::Soc => {
                    let r = b.range();
                    let tail = norm(&x[r.start + 1..r.end]);
                    worst = worst.max(tail - x[r.start]);
                }
            }
        }
        worst
    }

    /// `u o v`.
    pub fn product<T: Scalar>(&self, u: &[T], v: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for b in &self.blocks {
            match b.kind {
                Kind::Nonneg => b.range().for_each(|i| out[i] = u[i] * v[i]),
                Kind::Soc => {
                    let r = b.range();
                    let (u0, v0) = (u[r.start], v[r.start]);
                    out[r.start] = dot(&u[r.clone()], &v[r.clone()]);
                    for i in r.start + 1..r.end {
                        out[i] = u0 * v[i] + v0 * u[i];
                    }
                }
            }
        }
        out
    }

    /// Solves `lambda o u = d` for `u` (lambda strictly interior).
    pub fn divide<T: Scalar>(&self, lambda: &[T], d: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim];
        for b in &self.blocks {
            match b.kind {
                Kind::Nonneg => b.range().for_each(|i| out[i] = d[i] / lambda[i]),
                Kind::Soc => {
                    let r = b.range();
                    let l0 = lambda[r.start];
                    let l1 = &lambda[r.start + 1..r.end];
                    let d0 = d[r.start];
                    let d1 = &d[r.start + 1..r.end];
                    let det = soc_det(l0, l1);
                    let l1d1 = dot(l1, d1);
                    out[r.start] = (l0 * d0 - l1d1) / det;
                    let coef = (l1d1 / l0 - d0) / det;
                    for (k, i) in (r.start + 1..r.end).enumerate() {
                        out[i] = d1[k] / l0 + coef * l1[k];
                    }
                }
            }
        }
        out
    }

    /// Largest `a` (possibly infinite) with `x + a d` in the cone, `x` interior.
    pub fn max_step<T: Scalar>(&self, x: &[T], d: &[T]) -> T {
        let mut alpha = T::infinity();
        for b in &self.blocks {
            match b.kind {
                Kind::Nonneg => {
                    for i in b.range() {
                        if d[i] < T::zero() {
                            alpha = alpha.min(-x[i] / d[i]);
                        }
                    }
                }
                Kind::Soc => {
                    let r = b.range();
                    let (x0, d0) = (x[r.start], d[r.start]);
                    let x1 = &x[r.start + 1..r.end];
                    let d1 = &d[r.start + 1..r.end];
                    // f(a) = qa a^2 + 2 qb a + qc, qc > 0
                    let qa = d0 * d0 - dot(d1, d1);
                    let qb = x0 * d0 - dot(x1, d1);
                    let qc = soc_det(x0, x1);
                    let disc = qb * qb - qa * qc;
                    let has_root = if qa < T::zero() {
                        true
                    } else if qa == T::zero() {
                        qb < T::zero()
                    } else {
                        qb < T::zero() && disc >= T::zero()
                    };
                    if has_root {
                        let denom = -qb + disc.max(T::zero()).sqrt();
                        alpha = alpha.min(qc / denom);
                    }
                }
            }
        }
        alpha
    }
}

/// `x0^2 - ||x1||^2`, factored for accuracy near the boundary.
pub(crate) fn soc_det<T: Scalar>(x0: T, x1: &[T]) -> T {
    let n1 = norm(x1);
    (x0 - n1) * (x0 + n1)
}

pub(crate) fn norm<T: Scalar>(v: &[T]) -> T {
    crate::scalar::norm2(v)
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    crate::scalar::dot(a, b)
}

#[derive(Debug, Clone)]
enum BlockScaling<T> {
    /// `W = diag(w)`, `w = sqrt(s / z)`.
    Nonneg { w: Vec<T> },
    /// `W = eta * Wbar(wbar)`.
    Soc { eta: T, wbar: Vec<T> },
}

/// Nesterov-Todd scaling `W` with `W z = W^{-1} s = lambda`.
#[derive(Debug, Clone)]
pub(crate) struct NtScaling<T> {
    blocks: Vec<(Block, BlockScaling<T>)>,
    pub lambda: Vec<T>,
}

impl<T: Scalar> NtScaling<T> {
    /// `None` when `s` or `z` is not strictly interior.
    pub fn new(cones: &Cones, s: &[T], z: &[T]) -> Option<Self> {
        let mut blocks = Vec::with_capacity(cones.blocks.len());
        for b in &cones.blocks {
            match b.kind {
                Kind::Nonneg => {
                    let mut w = Vec::with_capacity(b.dim);
                    for i in b.range() {
                        if !(s[i] > T::zero() && z[i] > T::zero()) {
                            return None;
                        }
                        w.push((s[i] / z[i]).sqrt());
                    }
                    blocks.push((*b, BlockScaling::Nonneg { w }));
                }
                Kind::Soc => {
                    let r = b.range();
                    let sb = &s[r.clone()];
                    let zb = &z[r.clone()];
                    let sdet = soc_det(sb[0], &sb[1..]);
                    let zdet = soc_det(zb[0], &zb[1..]);
                    if !(sdet > T::zero()
                        && zdet > T::zero()
                        && sb[0] > T::zero()
                        && zb[0] > T::zero())
                    {
                        return None;
                    }
                    let sn = sdet.sqrt();
                    let zn = zdet.sqrt();
                    let sbar: Vec<T> = sb.iter().map(|&v| v / sn).collect();
                    let zbar: Vec<T> = zb.iter().map(|&v| v / zn).collect();
                    let gamma = ((T::one() + dot(&sbar, &zbar)) / T::lit(2.0)).sqrt();
                    let mut wbar = vec![T::zero(); b.dim];
                    let two_gamma = T::lit(2.0) * gamma;
                    wbar[0] = (sbar[0] + zbar[0]) / two_gamma;
                    for i in 1..b.dim {
                        wbar[i] = (sbar[i] - zbar[i]) / two_gamma;
                    }
                    // wbar'J wbar = 1 exactly in theory; keep wbar0 consistent
                    let w1n = norm(&wbar[1..]);
                    wbar[0] = (T::one() + w1n * w1n).sqrt();
                    let eta = (sn / zn).sqrt();
                    blocks.push((*b, BlockScaling::Soc { eta, wbar }));
                }
            }
        }
        let mut nt = NtScaling {
            blocks,
            lambda: Vec::new(),
        };
        nt.lambda = nt.apply_w(z);
        Some(nt)
    }

    pub fn apply_w(&self, x: &[T]) -> Vec<T> {
        self.apply(x, false)
    }

    pub fn apply_winv(&self, x: &[T]) -> Vec<T> {
        self.apply(x, true)
    }

    fn apply(&self, x: &[T], inverse: bool) -> Vec<T> {
        let mut out = vec![T::zero(); x.len()];
        for (b, sc) in &self.blocks {
            let r = b.range();
            match sc {
                BlockScaling::Nonneg { w } => {
                    for (k, i) in r.enumerate() {
                        out[i] = if inverse { x[i] / w[k] } else { x[i] * w[k] };
                    }
                }
                BlockScaling::Soc { eta, wbar } => {
                    let xb = &x[r.clone()];
                    let (w0, w1) = (wbar[0], &wbar[1..]);
                    let (x0, x1) = (xb[0], &xb[1..]);
                    let w1x1 = dot(w1, x1);
                    let (sgn, scale) = if inverse {
                        (-T::one(), T::one() / *eta)
                    } else {
                        (T::one(), *eta)
                    };
                    out[r.start] = scale * (w0 * x0 + sgn * w1x1);
                    let c = sgn * x0 + w1x1 / (T::one() + w0);
                    for k in 0..w1.len() {
                        out[r.start + 1 + k] = scale * (x1[k] + c * w1[k]);
                    }
                }
            }
        }
        out
    }

    /// Per-block data for assembling `G' W^{-2} G`.
    pub fn block_weights(&self) -> impl Iterator<Item = (Block, BlockWeights<'_, T>)> + '_ {
        self.blocks.iter().map(|(b, sc)| {
            let w = match sc {
                BlockScaling::Nonneg { w } => BlockWeights::Diagonal(w),
                BlockScaling::Soc { eta, wbar } => BlockWeights::Lorentz { eta: *eta, wbar },
            };
            (*b, w)
        })
    }
}

/// `W^{-2}` of one block: `diag(1/w^2)`, or `eta^{-2} (2 v v' - J)` with `v = J wbar`.
pub(crate) enum BlockWeights<'a, T> {
    Diagonal(&'a [T]),
    Lorentz { eta: T, wbar: &'a [T] },
}
