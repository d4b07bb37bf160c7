//! Interval branch-and-bound: find a point satisfying a constraint set or
//! certify that none exists in a box.

use crate::dynamics::Expr;
use crate::interval::Interval;

use super::lp::{lp_solve, Cmp, LinearConstraint, LinearProgram, LpOutcome};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BnbLimits {
    pub feas_tol: f64,
    pub min_box_width: f64,
    pub max_nodes: usize,
}

impl Default for BnbLimits {
    fn default() -> Self {
        Self {
            feas_tol: 1e-7,
            min_box_width: 1e-9,
            max_nodes: 2_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BnbOutcome<W = Vec<f64>> {
    Feasible(W),
    InfeasibleCertified,
    /// Search stopped at a limit; carries the widest unresolved box.
    Inconclusive(Vec<Interval>),
}

/// What a search node learned about its box.
pub enum Assessment<W> {
    /// No solution in the box.
    Prune,
    /// A verified solution.
    Found(W),
    /// Undecided; continue on this (possibly contracted) box.
    Split(Vec<Interval>),
}

pub trait BoxOracle {
    type Witness;
    fn assess(&self, cube: &[Interval]) -> Assessment<Self::Witness>;
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BnbStats {
    pub nodes: usize,
}

/// Depth-first search over bisections of `root`. Axes of zero width in the
/// root box are never split.
pub fn branch_and_bound<O: BoxOracle>(
    oracle: &O,
    root: Vec<Interval>,
    limits: &BnbLimits,
) -> (BnbOutcome<O::Witness>, BnbStats) {
    let scale: Vec<f64> = root.iter().map(|iv| iv.width()).collect();
    let mut stack = vec![root];
    let mut stats = BnbStats::default();
    let mut unresolved: Option<Vec<Interval>> = None;
    while let Some(cube) = stack.pop() {
        if stats.nodes >= limits.max_nodes {
            let worst = widest(unresolved.take(), cube, &scale);
            return (BnbOutcome::Inconclusive(worst), stats);
        }
        stats.nodes += 1;
        match oracle.assess(&cube) {
            Assessment::Prune => {}
            Assessment::Found(w) => return (BnbOutcome::Feasible(w), stats),
            Assessment::Split(cube) => {
                let Some(axis) = split_axis(&cube, &scale) else {
                    unresolved = Some(widest(unresolved.take(), cube, &scale));
                    continue;
                };
                if cube[axis].width() <= limits.min_box_width {
                    unresolved = Some(widest(unresolved.take(), cube, &scale));
                    continue;
                }
                let mid = cube[axis].mid();
                let mut left = cube.clone();
                let mut right = cube;
                left[axis].hi = mid;
                right[axis].lo = mid;
                stack.push(right);
                stack.push(left);
            }
        }
    }
    match unresolved {
        Some(b) => (BnbOutcome::Inconclusive(b), stats),
        None => (BnbOutcome::InfeasibleCertified, stats),
    }
}

fn relative_width(cube: &[Interval], scale: &[f64]) -> f64 {
    cube.iter()
        .zip(scale)
        .filter(|(_, s)| **s > 0.0)
        .map(|(iv, s)| iv.width() / s)
        .fold(0.0, f64::max)
}

fn widest(current: Option<Vec<Interval>>, cand: Vec<Interval>, scale: &[f64]) -> Vec<Interval> {
    match current {
        Some(c) if relative_width(&c, scale) >= relative_width(&cand, scale) => c,
        _ => cand,
    }
}

/// Widest axis relative to the root box; ties go to the lowest index.
pub fn split_axis(cube: &[Interval], scale: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, (iv, s)) in cube.iter().zip(scale).enumerate() {
        if *s <= 0.0 || iv.width() <= 0.0 {
            continue;
        }
        let r = iv.width() / s;
        if best.map_or(true, |(_, b)| r > b) {
            best = Some((k, r));
        }
    }
    best.map(|(k, _)| k)
}

/// Sense of a nonlinear constraint `expr  cmp  0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExprConstraint {
    pub expr: Expr,
    pub cmp: Cmp,
}

/// Find `x` in `cube` with every linear row and every `expr cmp 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct BnbProblem {
    pub cube: Vec<Interval>,
    pub linear: Vec<LinearConstraint>,
    pub nonlinear: Vec<ExprConstraint>,
    pub limits: BnbLimits,
}

impl BnbProblem {
    fn satisfied(&self, x: &[f64]) -> bool {
        let tol = self.limits.feas_tol;
        let lin = self.linear.iter().all(|c| c.violation(x) <= tol);
        let inside = x
            .iter()
            .zip(&self.cube)
            .all(|(v, iv)| *v >= iv.lo - tol && *v <= iv.hi + tol);
        lin && inside
            && self.nonlinear.iter().all(|c| match c.expr.eval(x) {
                Ok(v) => match c.cmp {
                    Cmp::Le => v <= tol,
                    Cmp::Ge => v >= -tol,
                    Cmp::Eq => v.abs() <= tol,
                },
                Err(_) => false,
            })
    }
}

impl BoxOracle for BnbProblem {
    type Witness = Vec<f64>;

    fn assess(&self, cube: &[Interval]) -> Assessment<Vec<f64>> {
        for c in &self.nonlinear {
            if let Ok(iv) = c.expr.eval_interval(cube) {
                let excluded = match c.cmp {
                    Cmp::Le => iv.lo > 0.0,
                    Cmp::Ge => iv.hi < 0.0,
                    Cmp::Eq => iv.lo > 0.0 || iv.hi < 0.0,
                };
                if excluded {
                    return Assessment::Prune;
                }
            }
        }
        let (cube, sample) = if self.linear.is_empty() {
            let mid: Vec<f64> = cube.iter().map(Interval::mid).collect();
            (cube.to_vec(), mid)
        } else {
            match contract(cube, &self.linear) {
                Some(r) => r,
                None => return Assessment::Prune,
            }
        };
        if self.satisfied(&sample) {
            return Assessment::Found(sample);
        }
        Assessment::Split(cube)
    }
}

/// Shrinks `cube` to the bounding box of its intersection with the linear
/// rows; also returns the average of the extreme points, which satisfies the
/// rows. `None` when the intersection is empty.
pub fn contract(cube: &[Interval], linear: &[LinearConstraint]) -> Option<(Vec<Interval>, Vec<f64>)> {
    let n = cube.len();
    let mut base = LinearProgram::new(n);
    for (j, iv) in cube.iter().enumerate() {
        base.bound(j, iv.lo, iv.hi);
    }
    base.constraints.extend(linear.iter().cloned());
    let mut out = cube.to_vec();
    let mut sum = vec![0.0; n];
    let mut count = 0.0;
    for j in 0..n {
        if cube[j].width() == 0.0 {
            continue;
        }
        for dir in [1.0, -1.0] {
            let mut lp = base.clone();
            let mut c = vec![0.0; n];
            c[j] = dir;
            lp.minimize(c);
            match lp_solve(&lp) {
                Ok(LpOutcome::Optimal { x, .. }) => {
                    let v = x[j];
                    if dir > 0.0 {
                        out[j].lo = v.max(cube[j].lo);
                    } else {
                        out[j].hi = v.min(cube[j].hi);
                    }
                    for (s, xv) in sum.iter_mut().zip(&x) {
                        *s += xv;
                    }
                    count += 1.0;
                }
                Ok(LpOutcome::Infeasible(_)) => return None,
                // Numerical trouble: keep the axis uncontracted.
                _ => {}
            }
        }
        if out[j].lo > out[j].hi {
            let m = 0.5 * (out[j].lo + out[j].hi);
            out[j] = Interval::point(m);
        }
    }
    if count == 0.0 {
        let mut lp = base;
        lp.minimize(vec![0.0; n]);
        return match lp_solve(&lp) {
            Ok(LpOutcome::Optimal { x, .. }) => Some((out, x)),
            Ok(LpOutcome::Infeasible(_)) => None,
            _ => Some((out, cube.iter().map(Interval::mid).collect())),
        };
    }
    let sample = sum.into_iter().map(|s| s / count).collect();
    Some((out, sample))
}

/// Searches for a point satisfying `problem`.
pub fn bnb_certify(problem: &BnbProblem) -> BnbOutcome {
    branch_and_bound(problem, problem.cube.clone(), &problem.limits).0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(k: usize) -> Expr {
        Expr::var(k)
    }

    #[test]
    fn excluded_by_interval_bound() {
        let p = BnbProblem {
            cube: vec![Interval::new(0.0, 1.0)],
            linear: vec![],
            nonlinear: vec![ExprConstraint {
                expr: x(0).pow(2) - Expr::c(2.0),
                cmp: Cmp::Ge,
            }],
            limits: BnbLimits::default(),
        };
        assert_eq!(bnb_certify(&p), BnbOutcome::InfeasibleCertified);
    }

    #[test]
    fn line_misses_small_disc() {
        let p = BnbProblem {
            cube: vec![Interval::new(-2.0, 2.0), Interval::new(-2.0, 2.0)],
            linear: vec![LinearConstraint {
                coeffs: vec![1.0, 1.0],
                cmp: Cmp::Eq,
                rhs: 1.0,
            }],
            nonlinear: vec![ExprConstraint {
                expr: x(0).pow(2) + x(1).pow(2) - Expr::c(0.25),
                cmp: Cmp::Le,
            }],
            limits: BnbLimits::default(),
        };
        assert_eq!(bnb_certify(&p), BnbOutcome::InfeasibleCertified);
    }

    #[test]
    fn line_meets_larger_disc() {
        let p = BnbProblem {
            cube: vec![Interval::new(-2.0, 2.0), Interval::new(-2.0, 2.0)],
            linear: vec![LinearConstraint {
                coeffs: vec![1.0, 1.0],
                cmp: Cmp::Eq,
                rhs: 1.0,
            }],
            nonlinear: vec![ExprConstraint {
                expr: x(0).pow(2) + x(1).pow(2) - Expr::c(0.6),
                cmp: Cmp::Le,
            }],
            limits: BnbLimits::default(),
        };
        let BnbOutcome::Feasible(w) = bnb_certify(&p) else {
            panic!("expected a witness");
        };
        assert!((w[0] + w[1] - 1.0).abs() < 1e-7);
        assert!(w[0] * w[0] + w[1] * w[1] <= 0.6 + 1e-7);
    }

    #[test]
    fn node_limit_is_inconclusive() {
        // Dyadic midpoints approach sqrt(2) only after ~24 bisections.
        let mut p = BnbProblem {
            cube: vec![Interval::new(1.0, 2.0)],
            linear: vec![],
            nonlinear: vec![ExprConstraint {
                expr: x(0).pow(2) - Expr::c(2.0),
                cmp: Cmp::Eq,
            }],
            limits: BnbLimits {
                max_nodes: 10,
                ..BnbLimits::default()
            },
        };
        assert!(matches!(bnb_certify(&p), BnbOutcome::Inconclusive(_)));
        p.limits.max_nodes = 1000;
        let BnbOutcome::Feasible(w) = bnb_certify(&p) else {
            panic!("expected a witness");
        };
        assert!((w[0] - 2f64.sqrt()).abs() < 1e-7);
    }

    #[test]
    fn split_axis_uses_relative_width() {
        let scale = [4.0, 1.0, 0.0];
        let cube = [Interval::new(0.0, 2.0), Interval::new(0.0, 0.75), Interval::point(0.0)];
        assert_eq!(split_axis(&cube, &scale), Some(1));
    }
}
