//! Symmetric quasi-definite factorization for the interior-point KKT systems.
//!
//! The reduced KKT matrix `[H + dI, A'; A, -dI]` is quasi-definite, so an
//! `LDL'` factorization exists for every symmetric permutation. Rows are
//! reordered with reverse Cuthill-McKee to shrink the bandwidth (multi-period
//! programs are block-banded in time) and factored in band storage.

use std::collections::VecDeque;

use crate::scalar::Scalar;

/// Symmetric matrix accumulated as a lower-triangle band in permuted order.
pub(crate) struct BandKkt<T> {
    dim: usize,
    bw: usize,
    /// Original index -> permuted position.
    pos: Vec<usize>,
    /// Permuted position -> original index.
    order: Vec<usize>,
    /// Expected pivot sign at each permuted position (true = positive).
    positive: Vec<bool>,
    /// Assembled matrix, row-major band storage: entry (i, j) with i - bw <= j <= i.
    mat: Vec<T>,
    factor: Vec<T>,
    diag: Vec<T>,
}

impl<T: Scalar> BandKkt<T> {
    /// Builds the ordering from the off-diagonal sparsity pattern.
    ///
    /// `edges` lists structurally nonzero pairs `(i, j)` in original indexing;
    /// `positive[i]` tells whether row `i` belongs to the primal block.
    pub fn new(dim: usize, edges: &[(usize, usize)], positive_orig: &[bool]) -> Self {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); dim];
        for &(i, j) in edges {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        let order = reverse_cuthill_mckee(&adj);
        let mut pos = vec![0; dim];
        for (p, &o) in order.iter().enumerate() {
            pos[o] = p;
        }
        let mut bw = 0;
        for (i, a) in adj.iter().enumerate() {
            for &j in a {
                bw = bw.max(pos[i].abs_diff(pos[j]));
            }
        }
        let positive = order.iter().map(|&o| positive_orig[o]).collect();
        let width = bw + 1;
        Self {
            dim,
            bw,
            pos,
            order,
            positive,
            mat: vec![T::zero(); dim * width],
            factor: vec![T::zero(); dim * width],
            diag: vec![T::zero(); dim],
        }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        // i >= j, i - j <= bw
        i * (self.bw + 1) + (j + self.bw - i)
    }

    pub fn clear(&mut self) {
        self.mat.iter_mut().for_each(|v| *v = T::zero());
    }

    /// Adds `v` to entry (i, j) (and implicitly (j, i)); original indexing.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let (pi, pj) = (self.pos[i], self.pos[j]);
        let (r, c) = if pi >= pj { (pi, pj) } else { (pj, pi) };
        let k = self.idx(r, c);
        self.mat[k] += v;
    }

    /// Factors `mat + reg * diag(sign)`; tiny or wrong-signed pivots are
    /// replaced by `±delta`.
    pub fn factor(&mut self, reg: T, delta: T) {
        let n = self.dim;
        let bw = self.bw;
        self.factor.copy_from_slice(&self.mat);
        for j in 0..n {
            let s = if self.positive[j] {
                T::one()
            } else {
                -T::one()
            };
            let kd = self.idx(j, j);
            self.factor[kd] += s * reg;
        }
        for j in 0..n {
            let j0 = j.saturating_sub(bw);
            let mut d = self.factor[self.idx(j, j)];
            for k in j0..j {
                let l = self.factor[self.idx(j, k)];
                d -= l * l * self.diag[k];
            }
            if self.positive[j] {
                if !(d > delta) {
                    d = delta;
                }
            } else if !(d < -delta) {
                d = -delta;
            }
            self.diag[j] = d;
            let iend = (j + bw + 1).min(n);
            for i in (j + 1)..iend {
                let k0 = i.saturating_sub(bw).max(j0);
                let mut v = self.factor[self.idx(i, j)];
                for k in k0..j {
                    v -= self.factor[self.idx(i, k)] * self.factor[self.idx(j, k)] * self.diag[k];
                }
                let kij = self.idx(i, j);
                self.factor[kij] = v / d;
            }
        }
    }

    /// Solves with the factored (regularized) matrix, permuted space.
    fn solve_factored(&self, b: &mut [T]) {
        let n = self.dim;
        let bw = self.bw;
        for i in 0..n {
            let mut v = b[i];
            for k in i.saturating_sub(bw)..i {
                v -= self.factor[self.idx(i, k)] * b[k];
            }
            b[i] = v;
        }
        for i in 0..n {
            b[i] /= self.diag[i];
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            let iend = (i + bw + 1).min(n);
            for k in (i + 1)..iend {
                v -= self.factor[self.idx(k, i)] * b[k];
            }
            b[i] = v;
        }
    }

    /// `y = M x` with the unregularized assembled matrix, permuted space.
    fn matvec(&self, x: &[T], y: &mut [T]) {
        let n = self.dim;
        let bw = self.bw;
        y.iter_mut().for_each(|v| *v = T::zero());
        for i in 0..n {
            for j in i.saturating_sub(bw)..=i {
                let m = self.mat[self.idx(i, j)];
                if m == T::zero() {
                    continue;
                }
                y[i] += m * x[j];
                if i != j {
                    y[j] += m * x[i];
                }
            }
        }
    }

    /// Solves `M x = rhs` (original indexing) with iterative refinement.
    pub fn solve(&self, rhs: &[T], refine: usize) -> Vec<T> {
        let n = self.dim;
        let b: Vec<T> = (0..n).map(|p| rhs[self.order[p]]).collect();
        let mut x = b.clone();
        self.solve_factored(&mut x);
        let mut r = vec![T::zero(); n];
        let residual = |x: &[T], r: &mut [T]| {
            self.matvec(x, r);
            let mut max_r = T::zero();
            for i in 0..n {
                r[i] = b[i] - r[i];
                max_r = max_r.max(r[i].abs());
            }
            max_r
        };
        let mut best = residual(&x, &mut r);
        let mut trial = vec![T::zero(); n];
        let mut r_trial = vec![T::zero(); n];
        for _ in 0..refine {
            if best == T::zero() || !best.is_finite() {
                break;
            }
            self.solve_factored(&mut r);
            for i in 0..n {
                trial[i] = x[i] + r[i];
            }
            // refinement against a nearly singular matrix can diverge; keep
            // the best iterate
            let next = residual(&trial, &mut r_trial);
            if !(next < best) {
                break;
            }
            best = next;
            std::mem::swap(&mut x, &mut trial);
            std::mem::swap(&mut r, &mut r_trial);
        }
        let mut out = vec![T::zero(); n];
        for p in 0..n {
            out[self.order[p]] = x[p];
        }
        out
    }

    #[cfg(test)]
    pub fn bandwidth(&self) -> usize {
        self.bw
    }
}

/// Reverse Cuthill-McKee ordering over every connected component.
fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (adj[i].len(), i));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        let root = pseudo_peripheral(adj, start);
        let mut queue = VecDeque::new();
        visited[root] = true;
        queue.push_back(root);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let mut next: Vec<usize> = adj[u].iter().copied().filter(|&v| !visited[v]).collect();
            next.sort_by_key(|&v| (adj[v].len(), v));
            for v in next {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// Node of (approximately) maximal eccentricity in `start`'s component.
fn pseudo_peripheral(adj: &[Vec<usize>], start: usize) -> usize {
    let mut root = start;
    let mut ecc = 0;
    for _ in 0..4 {
        let levels = bfs_levels(adj, root);
        let max_level = levels.iter().filter_map(|l| *l).max().unwrap_or(0);
        if max_level <= ecc && ecc > 0 {
            break;
        }
        ecc = max_level;
        let far = levels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Some(max_level))
            .min_by_key(|(i, _)| adj[*i].len())
            .map(|(i, _)| i)
            .unwrap_or(root);
        if far == root {
            break;
        }
        root = far;
    }
    root
}

fn bfs_levels(adj: &[Vec<usize>], root: usize) -> Vec<Option<usize>> {
    let mut level = vec![None; adj.len()];
    let mut queue = VecDeque::new();
    level[root] = Some(0);
    queue.push_back(root);
    while let Some(u) = queue.pop_front() {
        let lu = level[u].unwrap();
        for &v in &adj[u] {
            if level[v].is_none() {
                level[v] = Some(lu + 1);
                queue.push_back(v);
            }
        }
    }
    level
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solves_quasi_definite_system() {
        // [H A'; A -0] with H = diag(2, 3, 4), A = [1 1 1]
        let edges = vec![(0, 3), (1, 3), (2, 3)];
        let mut k = BandKkt::<f64>::new(4, &edges, &[true, true, true, false]);
        k.add(0, 0, 2.0);
        k.add(1, 1, 3.0);
        k.add(2, 2, 4.0);
        k.add(3, 0, 1.0);
        k.add(3, 1, 1.0);
        k.add(3, 2, 1.0);
        k.factor(1e-12, 1e-14);
        let rhs = [1.0, 2.0, 3.0, 4.0];
        let x = k.solve(&rhs, 3);
        // check residual directly
        let r0 = 2.0 * x[0] + x[3] - 1.0;
        let r1 = 3.0 * x[1] + x[3] - 2.0;
        let r2 = 4.0 * x[2] + x[3] - 3.0;
        let r3 = x[0] + x[1] + x[2] - 4.0;
        for r in [r0, r1, r2, r3] {
            assert!(r.abs() < 1e-10, "{r}");
        }
    }

    #[test]
    fn rcm_shrinks_bandwidth_of_a_shuffled_path() {
        let n = 40;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut labels: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = rng.gen_range(0..=i);
            labels.swap(i, j);
        }
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (labels[i], labels[i + 1])).collect();
        let k = BandKkt::<f64>::new(n, &edges, &vec![true; n]);
        assert_eq!(k.bandwidth(), 1);
    }

    #[test]
    fn random_spd_system_matches_residual() {
        let n = 12;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut dense = vec![vec![0.0f64; n]; n];
        let mut edges = Vec::new();
        for i in 0..n {
            dense[i][i] = 5.0 + rng.gen::<f64>();
            for j in 0..i {
                if rng.gen::<f64>() < 0.3 {
                    let v = rng.gen::<f64>() - 0.5;
                    dense[i][j] = v;
                    dense[j][i] = v;
                    edges.push((i, j));
                }
            }
        }
        let mut k = BandKkt::new(n, &edges, &vec![true; n]);
        for i in 0..n {
            for j in 0..=i {
                if dense[i][j] != 0.0 {
                    k.add(i, j, dense[i][j]);
                }
            }
        }
        k.factor(0.0, 1e-14);
        let rhs: Vec<f64> = (0..n).map(|i| i as f64 - 3.0).collect();
        let x = k.solve(&rhs, 2);
        for i in 0..n {
            let r: f64 = (0..n).map(|j| dense[i][j] * x[j]).sum::<f64>() - rhs[i];
            assert!(r.abs() < 1e-10);
        }
    }
}
