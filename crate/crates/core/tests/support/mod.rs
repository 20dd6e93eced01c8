#![allow(dead_code)]

use gridzero::conic::ConicProgram;
use rand::Rng;

/// Random box-plus-cone program over `n` (3..=5) variables, no equality rows.
///
/// Variable 0 heads a Lorentz cone over a random subset of 1..n; for n >= 4 a
/// rotated cone over the last two variables constrains a random tail. The box
/// always contains a strictly feasible point.
pub fn random_program<R: Rng>(rng: &mut R, n: usize) -> ConicProgram<f64> {
    assert!((3..=5).contains(&n));
    let mut p = ConicProgram::new(0);
    p.add_var(0.0, rng.gen_range(1.0..2.0), rng.gen_range(-1.0..1.0));
    for _ in 1..n {
        let lo = rng.gen_range(-1.0..-0.1);
        let hi = rng.gen_range(0.1..1.0);
        p.add_var(lo, hi, rng.gen_range(-1.0..1.0));
    }
    let (rot_a, rot_b) = if n >= 4 {
        (n - 2, n - 1)
    } else {
        (usize::MAX, usize::MAX)
    };
    if n >= 4 {
        p.var_bounds[rot_a] = (0.0, rng.gen_range(0.5..1.5));
        p.var_bounds[rot_b] = (0.0, rng.gen_range(0.5..1.5));
    }
    let mut tail: Vec<usize> = (1..n).filter(|_| rng.gen_bool(0.7)).collect();
    if tail.is_empty() {
        tail.push(1);
    }
    p.add_soc(0, tail);
    if n >= 4 {
        let cands: Vec<usize> = (1..rot_a).collect();
        let t = cands[rng.gen_range(0..cands.len())];
        p.add_rotated_soc(rot_a, rot_b, vec![t]);
    }
    p
}

/// Largest violation of bounds, equality rows and cones at `x`.
pub fn violation(p: &ConicProgram<f64>, x: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, &(lo, hi)) in p.var_bounds.iter().enumerate() {
        worst = worst.max(lo - x[i]).max(x[i] - hi);
    }
    for row in &p.eq_constraints {
        let lhs: f64 = row.coefs.iter().map(|&(j, v)| v * x[j]).sum();
        worst = worst.max((lhs - row.rhs).abs());
    }
    for b in &p.soc_blocks {
        let n: f64 = b.tail.iter().map(|&j| x[j] * x[j]).sum::<f64>().sqrt();
        worst = worst.max(n - x[b.head]);
    }
    for b in &p.rotated_soc_blocks {
        let sq: f64 = b.tail.iter().map(|&j| x[j] * x[j]).sum();
        worst = worst
            .max(sq - 2.0 * x[b.a] * x[b.b])
            .max(-x[b.a])
            .max(-x[b.b]);
    }
    worst
}

/// Exhaustive grid search over the variable box, refined by repeated zooming
/// around the incumbent. Only bounds and cones are supported.
///
/// Level 0 lays `points0` points per axis over the box; every further level
/// lays 9 points per axis around the best feasible point, over +-4 steps of
/// the previous grid (same step) while the incumbent keeps improving and over
/// +-2 steps (half the step) once it does not, until the step falls below
/// `min_step`.
///
/// A cone variable that appears in no other constraint (a Lorentz head, or
/// one side of a rotated cone) is not gridded: for each grid point of the
/// other variables it takes its best feasible value in closed form (its
/// lower limit from the cone or its upper bound, by the sign of its cost).
/// A rotated side that also sits in such a Lorentz tail is set by an exact
/// 1-D convex search over its feasible interval. Grid points rarely land on
/// a curved cone surface, and without this the zoom stalls short of optima
/// on that surface.
pub fn grid_oracle(
    p: &ConicProgram<f64>,
    points0: usize,
    min_step: f64,
) -> Option<(f64, Vec<f64>)> {
    assert!(
        p.eq_constraints.is_empty(),
        "grid oracle handles inequality programs only"
    );
    let n = p.n_vars();
    let mut lo: Vec<f64> = p.var_bounds.iter().map(|b| b.0).collect();
    let mut hi: Vec<f64> = p.var_bounds.iter().map(|b| b.1).collect();
    assert!(lo.iter().chain(&hi).all(|v| v.is_finite()));
    let bounds = (lo.clone(), hi.clone());
    let free = free_heads(p);
    let axis_points = |i: usize, points: usize| {
        if free.iter().any(|f| f.var == i) {
            1
        } else {
            points
        }
    };
    let mut points = points0;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut previous = f64::INFINITY;
    for _level in 0..100_000 {
        let counts: Vec<usize> = (0..n).map(|i| axis_points(i, points)).collect();
        let steps: Vec<f64> = (0..n)
            .map(|i| {
                if counts[i] > 1 {
                    (hi[i] - lo[i]) / (counts[i] - 1) as f64
                } else {
                    0.0
                }
            })
            .collect();
        let mut idx = vec![0usize; n];
        let mut x = vec![0.0; n];
        loop {
            for i in 0..n {
                x[i] = (lo[i] + steps[i] * idx[i] as f64).min(hi[i]);
            }
            for f in &free {
                let sq = f.tail.iter().map(|&j| x[j] * x[j]).sum::<f64>();
                let need = match f.partner {
                    None => sq.sqrt(),
                    Some(b) if x[b] > 0.0 => sq / (2.0 * x[b]),
                    Some(_) => {
                        if sq == 0.0 {
                            0.0
                        } else {
                            f64::INFINITY
                        }
                    }
                };
                let v = f.var;
                x[v] = match f.link {
                    None => head_value(p.objective[v], need, bounds.0[v], bounds.1[v]),
                    Some((h, htail)) => {
                        let rest: f64 = htail
                            .iter()
                            .filter(|&&j| j != v)
                            .map(|&j| x[j] * x[j])
                            .sum();
                        let (hl, hh) = (bounds.0[h], bounds.1[h]);
                        let lower = need.max(bounds.0[v]);
                        let upper = bounds.1[v].min((hh * hh - rest).max(0.0).sqrt());
                        let g = |t: f64| {
                            p.objective[v] * t
                                + p.objective[h]
                                    * head_value(p.objective[h], (rest + t * t).sqrt(), hl, hh)
                        };
                        convex_argmin(g, lower, upper)
                    }
                };
            }
            if violation(p, &x) <= 0.0 {
                let f = p.evaluate(&x);
                if best.as_ref().map_or(true, |(bf, _)| f < *bf) {
                    best = Some((f, x.clone()));
                }
            }
            let mut k = 0;
            while k < n {
                idx[k] += 1;
                if idx[k] < counts[k] {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
        }
        let max_step = steps.iter().cloned().fold(0.0, f64::max);
        let Some((fb, xb)) = best.as_ref() else {
            return None;
        };
        if max_step <= min_step {
            break;
        }
        let reach = if points == 9 && *fb < previous {
            4.0
        } else {
            2.0
        };
        previous = *fb;
        for i in 0..n {
            lo[i] = (xb[i] - reach * steps[i]).max(bounds.0[i]);
            hi[i] = (xb[i] + reach * steps[i]).min(bounds.1[i]);
        }
        points = 9;
    }
    best
}

/// Best value of a variable with cost `c` whose cone asks for at least `need`.
fn head_value(c: f64, need: f64, lo: f64, hi: f64) -> f64 {
    if c >= 0.0 {
        need.max(lo)
    } else {
        hi
    }
}

/// Ternary search of a convex `g` on `[a, b]`; returns `a` when the interval
/// is empty so the caller's feasibility check rejects the point.
fn convex_argmin(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    if !(a <= b) {
        return a;
    }
    let (a0, b0) = (a, b);
    for _ in 0..100 {
        let m1 = a + (b - a) / 3.0;
        let m2 = b - (b - a) / 3.0;
        if g(m1) <= g(m2) {
            b = m2;
        } else {
            a = m1;
        }
    }
    [a0, b0, 0.5 * (a + b)]
        .into_iter()
        .fold(a0, |best, t| if g(t) < g(best) { t } else { best })
}

/// A variable set from its cone; `partner` is the other side of a rotated
/// cone, `link` the free Lorentz head whose tail also holds the variable.
struct Free<'a> {
    var: usize,
    partner: Option<usize>,
    tail: &'a [usize],
    link: Option<(usize, &'a [usize])>,
}

/// Cone variables that occur in exactly one constraint, rotated sides first
/// so a Lorentz head never depends on a variable set after it.
fn free_heads(p: &ConicProgram<f64>) -> Vec<Free<'_>> {
    let uses = |v: usize| {
        p.soc_blocks
            .iter()
            .map(|b| (b.head == v) as usize + b.tail.iter().filter(|&&j| j == v).count())
            .sum::<usize>()
            + p.rotated_soc_blocks
                .iter()
                .map(|b| {
                    (b.a == v) as usize
                        + (b.b == v) as usize
                        + b.tail.iter().filter(|&&j| j == v).count()
                })
                .sum::<usize>()
    };
    let free_lorentz: Vec<_> = p.soc_blocks.iter().filter(|b| uses(b.head) == 1).collect();
    let link = |v: usize| {
        free_lorentz
            .iter()
            .find(|b| b.tail.contains(&v) && uses(v) == 2)
            .map(|b| (b.head, b.tail.as_slice()))
    };
    let mut out = Vec::new();
    for b in &p.rotated_soc_blocks {
        for (v, other) in [(b.a, b.b), (b.b, b.a)] {
            if uses(v) == 1 || link(v).is_some() {
                out.push(Free {
                    var: v,
                    partner: Some(other),
                    tail: &b.tail,
                    link: if uses(v) == 1 { None } else { link(v) },
                });
                break;
            }
        }
    }
    for b in free_lorentz {
        out.push(Free {
            var: b.head,
            partner: None,
            tail: &b.tail,
            link: None,
        });
    }
    out
}
