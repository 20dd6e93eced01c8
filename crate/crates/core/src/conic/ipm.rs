//! Primal-dual interior-point method (Nesterov-Todd scaling, Mehrotra
//! predictor-corrector) on the standard form
//!
//! ```text
//! minimize c'x  s.t.  A x = b,  G x + s = h,  s in K
//! ```
//!
//! Variable bounds become nonnegative rows of `G`; second-order cone blocks
//! become Lorentz rows `s = (x_t, x_u)`, and rotated blocks are mapped to
//! Lorentz rows through `((x_a + x_b)/sqrt2, (x_a - x_b)/sqrt2, x_u)`.

use super::cones::{BlockWeights, Cones, Kind, NtScaling};
use super::linalg::BandKkt;
use super::{ConicError, ConicProgram, ConicSolution, SolveStatus};
use crate::scalar::{dot, norm2, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings<T> {
    /// Bound on the relative primal residual, dual residual and gap.
    pub tol: T,
    pub max_iter: usize,
    /// Relative certificate threshold for infeasibility/unboundedness.
    pub certificate_tol: T,
    /// Diagonal regularization of the reduced KKT matrix.
    pub static_reg: T,
    pub refine_steps: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: T,
}

impl<T: Scalar> Default for SolverSettings<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-8),
            max_iter: 100,
            certificate_tol: T::lit(1e-8),
            static_reg: T::lit(1e-8),
            refine_steps: 4,
            step_fraction: T::lit(0.99),
        }
    }
}

/// Solves `prog` to relative accuracy `tol` in at most `max_iter` iterations.
///
/// Deterministic: identical inputs give bit-identical outputs. Numerical
/// breakdown is reported as [`SolveStatus::MaxIterations`], never a panic.
pub fn solve<T: Scalar>(
    prog: &ConicProgram<T>,
    tol: T,
    max_iter: usize,
) -> Result<ConicSolution<T>, ConicError> {
    let settings = SolverSettings {
        tol,
        max_iter,
        ..SolverSettings::default()
    };
    solve_with(prog, &settings)
}

pub fn solve_with<T: Scalar>(
    prog: &ConicProgram<T>,
    settings: &SolverSettings<T>,
) -> Result<ConicSolution<T>, ConicError> {
    if !(settings.tol > T::zero()) || !(settings.certificate_tol > T::zero()) {
        return Err(ConicError::BadTolerance);
    }
    prog.validate()?;
    let std = StandardForm::build(prog);
    if std.empty_infeasible_row.is_some() {
        return Ok(trivial_infeasible(prog));
    }
    let mut sol = Ipm::new(&std, settings).run();
    let mut y = vec![T::zero(); prog.eq_constraints.len()];
    for (orig, &k) in std.eq_origin.iter().enumerate() {
        if let Some(k) = k {
            y[orig] = sol.y[k];
        }
    }
    sol.y = y;
    sol.objective_value = prog.evaluate(&sol.x);
    Ok(sol)
}

fn trivial_infeasible<T: Scalar>(prog: &ConicProgram<T>) -> ConicSolution<T> {
    let x = vec![T::zero(); prog.n_vars()];
    ConicSolution {
        objective_value: prog.evaluate(&x),
        x,
        y: vec![T::zero(); prog.eq_constraints.len()],
        status: SolveStatus::Infeasible,
        primal_residual: T::infinity(),
        dual_residual: T::zero(),
        duality_gap: T::zero(),
        iterations: 0,
    }
}

type SparseRow<T> = Vec<(usize, T)>;

struct StandardForm<T> {
    n: usize,
    c: Vec<T>,
    a: Vec<SparseRow<T>>,
    b: Vec<T>,
    g: Vec<SparseRow<T>>,
    h: Vec<T>,
    cones: Cones,
    /// For each original equality row, its index in `a` (dropped when empty).
    eq_origin: Vec<Option<usize>>,
    empty_infeasible_row: Option<usize>,
}

impl<T: Scalar> StandardForm<T> {
    fn build(prog: &ConicProgram<T>) -> Self {
        let n = prog.n_vars();
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut eq_origin = Vec::with_capacity(prog.eq_constraints.len());
        let mut empty_infeasible_row = None;
        for (k, row) in prog.eq_constraints.iter().enumerate() {
            let merged = merge_row(&row.coefs);
            if merged.is_empty() {
                eq_origin.push(None);
                if row.rhs != T::zero() && empty_infeasible_row.is_none() {
                    empty_infeasible_row = Some(k);
                }
                continue;
            }
            eq_origin.push(Some(a.len()));
            a.push(merged);
            b.push(row.rhs);
        }
        let mut g = Vec::new();
        let mut h = Vec::new();
        let mut cones = Cones::default();
        let mut n_lp = 0;
        for (j, &(lo, hi)) in prog.var_bounds.iter().enumerate() {
            if lo == hi {
                a.push(vec![(j, T::one())]);
                b.push(lo);
                continue;
            }
            if lo.is_finite() {
                g.push(vec![(j, -T::one())]);
                h.push(-lo);
                n_lp += 1;
            }
            if hi.is_finite() {
                g.push(vec![(j, T::one())]);
                h.push(hi);
                n_lp += 1;
            }
        }
        cones.push(Kind::Nonneg, n_lp);
        for blk in &prog.soc_blocks {
            g.push(vec![(blk.head, -T::one())]);
            h.push(T::zero());
            for &u in &blk.tail {
                g.push(vec![(u, -T::one())]);
                h.push(T::zero());
            }
            cones.push(Kind::Soc, 1 + blk.tail.len());
        }
        let r2 = T::one() / T::lit(2.0).sqrt();
        for blk in &prog.rotated_soc_blocks {
            g.push(vec![(blk.a, -r2), (blk.b, -r2)]);
            h.push(T::zero());
            g.push(vec![(blk.a, -r2), (blk.b, r2)]);
            h.push(T::zero());
            for &u in &blk.tail {
                g.push(vec![(u, -T::one())]);
                h.push(T::zero());
            }
            cones.push(Kind::Soc, 2 + blk.tail.len());
        }
        StandardForm {
            n,
            c: prog.objective.clone(),
            a,
            b,
            g,
            h,
            cones,
            eq_origin,
            empty_infeasible_row,
        }
    }

    fn m(&self) -> usize {
        self.a.len()
    }

    fn a_mul(&self, x: &[T]) -> Vec<T> {
        self.a
            .iter()
            .map(|r| r.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    fn g_mul(&self, x: &[T]) -> Vec<T> {
        self.g
            .iter()
            .map(|r| r.iter().map(|&(j, v)| v * x[j]).sum())
            .collect()
    }

    fn a_tmul(&self, y: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n];
        for (r, row) in self.a.iter().enumerate() {
            for &(j, v) in row {
                out[j] += v * y[r];
            }
        }
        out
    }

    fn g_tmul(&self, z: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n];
        for (r, row) in self.g.iter().enumerate() {
            for &(j, v) in row {
                out[j] += v * z[r];
            }
        }
        out
    }
}

fn merge_row<T: Scalar>(coefs: &[(usize, T)]) -> SparseRow<T> {
    let mut row: SparseRow<T> = coefs.to_vec();
    row.sort_by_key(|&(j, _)| j);
    let mut out: SparseRow<T> = Vec::with_capacity(row.len());
    for (j, v) in row {
        match out.last_mut() {
            Some((lj, lv)) if *lj == j => *lv += v,
            _ => out.push((j, v)),
        }
    }
    out.retain(|&(_, v)| v != T::zero());
    out
}

struct Ipm<'a, T> {
    p: &'a StandardForm<T>,
    set: &'a SolverSettings<T>,
    kkt: BandKkt<T>,
    norm_b: T,
    norm_h: T,
    norm_c: T,
}

struct Iterate<T> {
    x: Vec<T>,
    y: Vec<T>,
    s: Vec<T>,
    z: Vec<T>,
}

struct Residuals<T> {
    rx: Vec<T>,
    ry: Vec<T>,
    rz: Vec<T>,
    pres: T,
    dres: T,
    gap: T,
}

struct Direction<T> {
    dx: Vec<T>,
    dy: Vec<T>,
    dz: Vec<T>,
    ds: Vec<T>,
}

impl<'a, T: Scalar> Ipm<'a, T> {
    fn new(p: &'a StandardForm<T>, set: &'a SolverSettings<T>) -> Self {
        let n = p.n;
        let m = p.m();
        let mut edges = Vec::new();
        for (r, row) in p.a.iter().enumerate() {
            for &(j, _) in row {
                edges.push((j, n + r));
            }
        }
        for blk in &p.cones.blocks {
            if blk.kind == Kind::Soc {
                let mut vars: Vec<usize> = blk
                    .range()
                    .flat_map(|r| p.g[r].iter().map(|&(j, _)| j))
                    .collect();
                vars.sort_unstable();
                vars.dedup();
                for (k, &i) in vars.iter().enumerate() {
                    for &j in &vars[k + 1..] {
                        edges.push((i, j));
                    }
                }
            }
        }
        let mut positive = vec![true; n];
        positive.extend(std::iter::repeat(false).take(m));
        let kkt = BandKkt::new(n + m, &edges, &positive);
        Ipm {
            p,
            set,
            kkt,
            norm_b: norm2(&p.b),
            norm_h: norm2(&p.h),
            norm_c: norm2(&p.c),
        }
    }

    /// Assembles and factors `[G' W^{-2} G, A'; A, 0]`.
    fn factor(&mut self, nt: &NtScaling<T>) {
        let p = self.p;
        let n = p.n;
        self.kkt.clear();
        for (r, row) in p.a.iter().enumerate() {
            for &(j, v) in row {
                self.kkt.add(n + r, j, v);
            }
        }
        for (blk, w) in nt.block_weights() {
            match w {
                BlockWeights::Diagonal(w) => {
                    for (k, r) in blk.range().enumerate() {
                        let inv2 = T::one() / (w[k] * w[k]);
                        for &(i, gi) in &p.g[r] {
                            for &(j, gj) in &p.g[r] {
                                if i >= j {
                                    self.kkt.add(i, j, gi * gj * inv2);
                                }
                            }
                        }
                    }
                }
                BlockWeights::Lorentz { eta, wbar } => {
                    // eta^{-2} (2 (G'v)(G'v)' - G'JG), v = J wbar
                    let scale = T::one() / (eta * eta);
                    let mut gv: Vec<(usize, T)> = Vec::new();
                    for (k, r) in blk.range().enumerate() {
                        let vk = if k == 0 { wbar[0] } else { -wbar[k] };
                        for &(j, g) in &p.g[r] {
                            gv.push((j, g * vk));
                        }
                    }
                    let gv = merge_row(&gv);
                    let two = T::lit(2.0);
                    for &(i, a) in &gv {
                        for &(j, b) in &gv {
                            if i >= j {
                                self.kkt.add(i, j, scale * two * a * b);
                            }
                        }
                    }
                    for (k, r) in blk.range().enumerate() {
                        let jk = if k == 0 { -scale } else { scale };
                        for &(i, gi) in &p.g[r] {
                            for &(j, gj) in &p.g[r] {
                                if i >= j {
                                    self.kkt.add(i, j, jk * gi * gj);
                                }
                            }
                        }
                    }
                }
            }
        }
        let reg = self.set.static_reg;
        self.kkt.factor(reg, reg * T::lit(1e-2));
    }

    fn kkt_solve(&self, rx: &[T], ry: &[T]) -> (Vec<T>, Vec<T>) {
        let n = self.p.n;
        let mut rhs = rx.to_vec();
        rhs.extend_from_slice(ry);
        let sol = self.kkt.solve(&rhs, self.set.refine_steps);
        (sol[..n].to_vec(), sol[n..].to_vec())
    }

    /// Newton direction for residuals `(rx, ry, rz)` and scaled complementarity
    /// target `u = lambda \ d_s`.
    fn direction(&self, nt: &NtScaling<T>, r: &Residuals<T>, u: &[T]) -> Direction<T> {
        let p = self.p;
        // W^{-2}(rz + W u) = W^{-1}(W^{-1} rz + u)
        let mut t = nt.apply_winv(&r.rz);
        t.iter_mut().zip(u).for_each(|(a, &b)| *a += b);
        let t = nt.apply_winv(&t);
        let gt = p.g_tmul(&t);
        let rhs_x: Vec<T> = r.rx.iter().zip(&gt).map(|(&a, &b)| -a - b).collect();
        let rhs_y: Vec<T> = r.ry.iter().map(|&a| -a).collect();
        let (dx, dy) = self.kkt_solve(&rhs_x, &rhs_y);
        let mut q = p.g_mul(&dx);
        q.iter_mut().zip(&r.rz).for_each(|(a, &b)| *a += b);
        let mut q = nt.apply_winv(&q);
        q.iter_mut().zip(u).for_each(|(a, &b)| *a += b);
        let dz = nt.apply_winv(&q);
        // ds = -rz - G dx keeps the primal residual consistent
        let gdx = p.g_mul(&dx);
        let ds: Vec<T> = gdx.iter().zip(&r.rz).map(|(&a, &b)| -a - b).collect();
        Direction { dx, dy, dz, ds }
    }

    fn residuals(&self, it: &Iterate<T>) -> Residuals<T> {
        let p = self.p;
        let aty = p.a_tmul(&it.y);
        let gtz = p.g_tmul(&it.z);
        let rx: Vec<T> = (0..p.n).map(|j| aty[j] + gtz[j] + p.c[j]).collect();
        let ax = p.a_mul(&it.x);
        let ry: Vec<T> = ax.iter().zip(&p.b).map(|(&a, &b)| a - b).collect();
        let gx = p.g_mul(&it.x);
        let rz: Vec<T> = (0..gx.len()).map(|i| gx[i] + it.s[i] - p.h[i]).collect();
        let one = T::one();
        let pres = (norm2(&ry) / (one + self.norm_b)).max(norm2(&rz) / (one + self.norm_h));
        let dres = norm2(&rx) / (one + self.norm_c);
        let cx = dot(&p.c, &it.x);
        let gap = dot(&it.s, &it.z).abs() / (one + cx.abs());
        Residuals {
            rx,
            ry,
            rz,
            pres,
            dres,
            gap,
        }
    }

    fn initial_point(&mut self) -> Option<Iterate<T>> {
        let p = self.p;
        let e = p.cones.identity::<T>();
        let unit = NtScaling::new(&p.cones, &e, &e)?;
        self.factor(&unit);
        let gth = p.g_tmul(&p.h);
        let (x, _) = self.kkt_solve(&gth, &p.b);
        let gx = p.g_mul(&x);
        let mut s: Vec<T> = p.h.iter().zip(&gx).map(|(&h, &g)| h - g).collect();
        let neg_c: Vec<T> = p.c.iter().map(|&c| -c).collect();
        let zeros = vec![T::zero(); p.m()];
        let (uz, y) = self.kkt_solve(&neg_c, &zeros);
        let mut z = p.g_mul(&uz);
        for v in [&mut s, &mut z] {
            let shift = p.cones.boundary_shift(v);
            if shift >= T::zero() || v.iter().all(|&a| a == T::zero()) {
                let a = T::one() + shift.max(T::zero());
                v.iter_mut().zip(&e).for_each(|(vi, &ei)| *vi += a * ei);
            }
        }
        let it = Iterate { x, y, s, z };
        let finite =
            it.x.iter()
                .chain(&it.y)
                .chain(&it.s)
                .chain(&it.z)
                .all(|v| v.is_finite());
        finite.then_some(it)
    }

    fn certificate(&self, it: &Iterate<T>, r: &Residuals<T>) -> Option<SolveStatus> {
        let p = self.p;
        let eps = self.set.certificate_tol;
        let by_hz = dot(&p.b, &it.y) + dot(&p.h, &it.z);
        if by_hz < T::zero() && r.pres > self.set.tol {
            let aty = p.a_tmul(&it.y);
            let gtz = p.g_tmul(&it.z);
            let res: Vec<T> = aty.iter().zip(&gtz).map(|(&a, &b)| a + b).collect();
            if norm2(&res) <= eps * (-by_hz) {
                return Some(SolveStatus::Infeasible);
            }
        }
        let cx = dot(&p.c, &it.x);
        if cx < T::zero() && r.dres > self.set.tol {
            let ax = p.a_mul(&it.x);
            let mut gxs = p.g_mul(&it.x);
            gxs.iter_mut().zip(&it.s).for_each(|(a, &b)| *a += b);
            let scale = -cx;
            if norm2(&ax) <= eps * scale && norm2(&gxs) <= eps * scale {
                return Some(SolveStatus::Unbounded);
            }
        }
        None
    }

    fn finish(
        &self,
        it: Iterate<T>,
        r: &Residuals<T>,
        status: SolveStatus,
        iters: usize,
    ) -> ConicSolution<T> {
        let objective_value = dot(&self.p.c, &it.x);
        ConicSolution {
            x: it.x,
            y: it.y,
            objective_value,
            status,
            primal_residual: r.pres,
            dual_residual: r.dres,
            duality_gap: r.gap,
            iterations: iters,
        }
    }

    fn run(mut self) -> ConicSolution<T> {
        let p = self.p;
        let nan_solution = |iters| ConicSolution {
            x: vec![T::nan(); p.n],
            y: vec![T::nan(); p.m()],
            objective_value: T::nan(),
            status: SolveStatus::MaxIterations,
            primal_residual: T::infinity(),
            dual_residual: T::infinity(),
            duality_gap: T::infinity(),
            iterations: iters,
        };
        let Some(mut it) = self.initial_point() else {
            return nan_solution(0);
        };
        let degree = T::from_usize(p.cones.degree().max(1)).unwrap();
        let tol = self.set.tol;
        let frac = self.set.step_fraction;
        let mut stalls = 0;
        let mut iter = 0;
        loop {
            let r = self.residuals(&it);
            if !(r.pres.is_finite() && r.dres.is_finite() && r.gap.is_finite()) {
                return nan_solution(iter);
            }
            if r.pres <= tol && r.dres <= tol && r.gap <= tol {
                return self.finish(it, &r, SolveStatus::Optimal, iter);
            }
            if let Some(status) = self.certificate(&it, &r) {
                return self.finish(it, &r, status, iter);
            }
            if iter >= self.set.max_iter || stalls >= 5 {
                return self.finish(it, &r, SolveStatus::MaxIterations, iter);
            }
            let Some(nt) = NtScaling::new(&p.cones, &it.s, &it.z) else {
                return self.finish(it, &r, SolveStatus::MaxIterations, iter);
            };
            self.factor(&nt);
            let lambda = &nt.lambda;
            let mu = dot(lambda, lambda) / degree;

            // predictor
            let u_aff: Vec<T> = lambda.iter().map(|&l| -l).collect();
            let aff = self.direction(&nt, &r, &u_aff);
            let ds_s = nt.apply_winv(&aff.ds);
            let dz_s = nt.apply_w(&aff.dz);
            let a_aff = T::one()
                .min(p.cones.max_step(lambda, &ds_s))
                .min(p.cones.max_step(lambda, &dz_s));
            let sigma = if p.cones.dim == 0 {
                T::zero()
            } else {
                let sa: Vec<T> = lambda
                    .iter()
                    .zip(&ds_s)
                    .map(|(&l, &d)| l + a_aff * d)
                    .collect();
                let za: Vec<T> = lambda
                    .iter()
                    .zip(&dz_s)
                    .map(|(&l, &d)| l + a_aff * d)
                    .collect();
                let ratio = dot(&sa, &za) / dot(lambda, lambda);
                let ratio = ratio.max(T::zero()).min(T::one());
                ratio * ratio * ratio
            };

            // corrector
            let mut d_s = p.cones.product(lambda, lambda);
            let cross = p.cones.product(&ds_s, &dz_s);
            let e = p.cones.identity::<T>();
            for i in 0..d_s.len() {
                d_s[i] = -d_s[i] - cross[i] + sigma * mu * e[i];
            }
            let u = p.cones.divide(lambda, &d_s);
            let dir = self.direction(&nt, &r, &u);
            let ds_s = nt.apply_winv(&dir.ds);
            let dz_s = nt.apply_w(&dir.dz);
            let a_max = p
                .cones
                .max_step(lambda, &ds_s)
                .min(p.cones.max_step(lambda, &dz_s));
            let alpha = T::one().min(frac * a_max);
            let finite = dir
                .dx
                .iter()
                .chain(&dir.dy)
                .chain(&dir.dz)
                .chain(&dir.ds)
                .all(|v| v.is_finite());
            if !finite || !(alpha > T::zero()) {
                return self.finish(it, &r, SolveStatus::MaxIterations, iter);
            }
            stalls = if alpha < T::lit(1e-8) { stalls + 1 } else { 0 };
            axpy(&mut it.x, alpha, &dir.dx);
            axpy(&mut it.y, alpha, &dir.dy);
            axpy(&mut it.s, alpha, &dir.ds);
            axpy(&mut it.z, alpha, &dir.dz);
            iter += 1;
        }
    }
}

fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    y.iter_mut().zip(x).for_each(|(yi, &xi)| *yi += a * xi);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{ConicProgram, SolveStatus};

    #[test]
    fn active_lower_bound() {
        let mut p = ConicProgram::<f64>::new(0);
        p.add_var(2.0, f64::INFINITY, 1.0);
        let sol = solve(&p, 1e-8, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 2.0).abs() < 1e-7);
        assert!((sol.objective_value - 2.0).abs() < 1e-7);
    }

    #[test]
    fn euclidean_norm_epigraph() {
        let mut p = ConicProgram::<f64>::new(0);
        let t = p.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let a = p.add_fixed_var(3.0);
        let b = p.add_fixed_var(4.0);
        p.add_soc(t, vec![a, b]);
        let sol = solve(&p, 1e-8, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[t] - 5.0).abs() < 1e-7, "t = {}", sol.x[t]);
    }

    #[test]
    fn equality_and_duals() {
        // min x0 + 2 x1 s.t. x0 + x1 = 1, x >= 0 -> x = (1, 0), y = -1
        let mut p = ConicProgram::<f64>::new(0);
        let x0 = p.add_var(0.0, f64::INFINITY, 1.0);
        let x1 = p.add_var(0.0, f64::INFINITY, 2.0);
        p.add_eq(vec![(x0, 1.0), (x1, 1.0)], 1.0);
        let sol = solve(&p, 1e-9, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-7);
        assert!((sol.y[0] + 1.0).abs() < 1e-6, "y = {}", sol.y[0]);
    }

    #[test]
    fn contradictory_bounds_row_is_infeasible() {
        let mut p = ConicProgram::<f64>::new(0);
        let x = p.add_var(1.0, f64::INFINITY, 1.0);
        p.add_eq(vec![(x, 1.0)], -1.0);
        let sol = solve(&p, 1e-8, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn infeasible_cone_program() {
        // ||(x1)|| <= x0, x0 <= 1, x1 >= 2
        let mut p = ConicProgram::<f64>::new(0);
        let x0 = p.add_var(f64::NEG_INFINITY, 1.0, 1.0);
        let x1 = p.add_var(2.0, f64::INFINITY, 0.0);
        p.add_soc(x0, vec![x1]);
        let sol = solve(&p, 1e-8, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_program() {
        let mut p = ConicProgram::<f64>::new(0);
        p.add_var(f64::NEG_INFINITY, 5.0, 1.0);
        let sol = solve(&p, 1e-8, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn deterministic_bitwise() {
        let mut p = ConicProgram::<f64>::new(0);
        let t = p.add_var(f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let a = p.add_var(-1.0, 2.0, 0.3);
        let b = p.add_var(0.5, 2.0, -0.1);
        p.add_soc(t, vec![a, b]);
        let s1 = solve(&p, 1e-8, 100).unwrap();
        let s2 = solve(&p, 1e-8, 100).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn works_in_single_precision() {
        let mut p = ConicProgram::<f32>::new(0);
        let t = p.add_var(f32::NEG_INFINITY, f32::INFINITY, 1.0);
        let a = p.add_fixed_var(3.0);
        let b = p.add_fixed_var(4.0);
        p.add_soc(t, vec![a, b]);
        let sol = solve(&p, 1e-4, 100).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.x[t] - 5.0).abs() < 1e-3);
    }
}
