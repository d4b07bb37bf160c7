//! Per-pattern inequality systems in `u` and their Farkas alternatives.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::SafetyProblem;
use crate::feasolver::{farkas_check, lp_solve, primal_point, LinearProgram, LpOutcome};
use crate::interval::Interval;
use crate::network::{ActivationPattern, NeuronId, ReluNetwork};
use crate::Result;

/// Origin of one row of `Θu ≤ Λ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowRole {
    /// Shared neuron active in this member: `a(f + gu) ≥ 0`.
    SharedActive(NeuronId),
    /// Shared neuron inactive in this member: `a(f + gu) ≤ 0`.
    SharedInactive(NeuronId),
    /// `W̄ᵀ(f + gu) ≥ 0`.
    Output,
    /// Row `i` of `Au ≤ c`.
    Input(usize),
}

/// A row `σ·aᵀ(f + gu) ≥ 0` before evaluation at a state.
#[derive(Clone, Debug, PartialEq)]
pub struct RowSpec {
    pub role: RowRole,
    pub sigma: f64,
    pub grad: DVector<f64>,
}

/// Rows of one member pattern of a tuple with shared unstable set `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct MemberRows {
    pub pattern: ActivationPattern,
    pub rows: Vec<RowSpec>,
}

impl MemberRows {
    pub fn new(net: &ReluNetwork, pattern: &ActivationPattern, shared: &[NeuronId]) -> Result<Self> {
        let region = net.affine_region(pattern)?;
        let mut rows = Vec::with_capacity(shared.len() + 1);
        for &id in shared {
            let (g, _) = region.neuron_map(id);
            let active = pattern.is_active(id);
            rows.push(RowSpec {
                role: if active {
                    RowRole::SharedActive(id)
                } else {
                    RowRole::SharedInactive(id)
                },
                sigma: if active { 1.0 } else { -1.0 },
                grad: g.clone(),
            });
        }
        rows.push(RowSpec {
            role: RowRole::Output,
            sigma: 1.0,
            grad: region.output_gradient.clone(),
        });
        Ok(Self {
            pattern: pattern.clone(),
            rows,
        })
    }

    pub fn num_rows(&self, prob: &SafetyProblem) -> usize {
        self.rows.len() + prob.num_input_rows()
    }

    /// `Θ` and `Λ` at state `x`.
    pub fn at(&self, prob: &SafetyProblem, x: &[f64]) -> Result<FarkasSystem> {
        let f = prob.eval_f(x)?;
        let g = prob.eval_g(x)?;
        let k = self.num_rows(prob);
        let mut theta = DMatrix::zeros(k, prob.m);
        let mut lambda = DVector::zeros(k);
        let mut roles = Vec::with_capacity(k);
        for (i, r) in self.rows.iter().enumerate() {
            let ag = g.tr_mul(&r.grad);
            for j in 0..prob.m {
                theta[(i, j)] = -r.sigma * ag[j];
            }
            lambda[i] = r.sigma * r.grad.dot(&f);
            roles.push(r.role);
        }
        for (p, (a, c)) in prob.input_a.iter().zip(&prob.input_c).enumerate() {
            let i = self.rows.len() + p;
            for j in 0..prob.m {
                theta[(i, j)] = a[j];
            }
            lambda[i] = *c;
            roles.push(RowRole::Input(p));
        }
        Ok(FarkasSystem {
            pattern: self.pattern.clone(),
            theta,
            lambda,
            roles,
        })
    }

    /// Interval enclosures of `Θ` and `Λ` over a box of states.
    pub fn enclose(&self, prob: &SafetyProblem, cube: &[Interval]) -> Result<IntervalSystem> {
        let f = prob.f_interval(cube)?;
        let g = prob.g_interval(cube)?;
        let mut theta = Vec::with_capacity(self.num_rows(prob));
        let mut lambda = Vec::with_capacity(self.num_rows(prob));
        for r in &self.rows {
            let dot = |col: &dyn Fn(usize) -> Interval| {
                r.grad
                    .iter()
                    .enumerate()
                    .fold(Interval::point(0.0), |acc, (k, &a)| acc + Interval::point(a) * col(k))
            };
            theta.push(
                (0..prob.m)
                    .map(|j| dot(&|k| g[k][j]).scale(-r.sigma))
                    .collect(),
            );
            lambda.push(dot(&|k| f[k]).scale(r.sigma));
        }
        for (a, c) in prob.input_a.iter().zip(&prob.input_c) {
            theta.push(a.iter().map(|&v| Interval::point(v)).collect());
            lambda.push(Interval::point(*c));
        }
        Ok(IntervalSystem { theta, lambda })
    }

    /// When `f` is affine and `g` constant: constant `Θ` and `Λ(x) = Lx + λ₀`.
    pub fn linear_form(&self, prob: &SafetyProblem) -> Option<LinearSystem> {
        let g = prob.constant_g()?;
        let (fa, fb) = prob.affine_f()?;
        let k = self.num_rows(prob);
        let mut theta = DMatrix::zeros(k, prob.m);
        let mut slope = DMatrix::zeros(k, prob.n);
        let mut offset = DVector::zeros(k);
        for (i, r) in self.rows.iter().enumerate() {
            let ag = g.tr_mul(&r.grad);
            let af = fa.tr_mul(&r.grad);
            for j in 0..prob.m {
                theta[(i, j)] = -r.sigma * ag[j];
            }
            for j in 0..prob.n {
                slope[(i, j)] = r.sigma * af[j];
            }
            offset[i] = r.sigma * r.grad.dot(&fb);
        }
        for (p, (a, c)) in prob.input_a.iter().zip(&prob.input_c).enumerate() {
            let i = self.rows.len() + p;
            for j in 0..prob.m {
                theta[(i, j)] = a[j];
            }
            offset[i] = *c;
        }
        Some(LinearSystem { theta, slope, offset })
    }
}

/// `Θu ≤ Λ` at one state, with the role of every row.
#[derive(Clone, Debug, PartialEq)]
pub struct FarkasSystem {
    pub pattern: ActivationPattern,
    pub theta: DMatrix<f64>,
    pub lambda: DVector<f64>,
    pub roles: Vec<RowRole>,
}

impl FarkasSystem {
    /// Number of shared-neuron rows `T`.
    pub fn unstable_count(&self) -> usize {
        self.roles
            .iter()
            .filter(|r| matches!(r, RowRole::SharedActive(_) | RowRole::SharedInactive(_)))
            .count()
    }

    /// `y ≥ 0`, `Σy = 1`, `yᵀΘ = 0`, `yᵀΛ ≤ -eps` when the system is
    /// infeasible with that margin.
    pub fn farkas(&self, eps: f64) -> Option<DVector<f64>> {
        if self.theta.ncols() == 0 {
            // No input: the system is a list of sign conditions.
            let (i, v) = self
                .lambda
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())?;
            if *v <= -eps {
                let mut y = DVector::zeros(self.lambda.len());
                y[i] = 1.0;
                return Some(y);
            }
            return None;
        }
        farkas_check(&self.theta, &self.lambda, eps)
    }

    /// A feasible `u`, if any.
    pub fn primal(&self) -> Option<DVector<f64>> {
        if self.theta.ncols() == 0 {
            return self.lambda.iter().all(|v| *v >= 0.0).then(|| DVector::zeros(0));
        }
        primal_point(&self.theta, &self.lambda)
    }

    /// Rows rendered as inequalities in `u`, duplicates removed.
    pub fn describe(&self) -> String {
        let mut seen: Vec<String> = Vec::new();
        for i in 0..self.theta.nrows() {
            let s = render_row(self.theta.row(i).iter().copied().collect(), self.lambda[i]);
            if !seen.contains(&s) {
                seen.push(s);
            }
        }
        seen.join(" ∧ ")
    }
}

/// Compact decimal form with tiny noise rounded away.
pub fn fmt_num(v: f64) -> String {
    let r = (v * 1e9).round() / 1e9;
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r}")
}

fn render_row(theta: Vec<f64>, lambda: f64) -> String {
    match theta.len() {
        0 => format!("0 ≤ {}", fmt_num(lambda)),
        1 => {
            let t = theta[0];
            if t == 0.0 {
                format!("0 ≤ {}", fmt_num(lambda))
            } else if t > 0.0 {
                format!("u ≤ {}", fmt_num(lambda / t))
            } else {
                format!("u ≥ {}", fmt_num(lambda / t))
            }
        }
        _ => {
            let mut s = String::new();
            for (j, t) in theta.iter().enumerate().filter(|(_, t)| **t != 0.0) {
                let mag = fmt_num(t.abs());
                let coeff = if mag == "1" { String::new() } else { format!("{mag}*") };
                let sign = match (s.is_empty(), *t < 0.0) {
                    (true, true) => "-",
                    (true, false) => "",
                    (false, true) => " - ",
                    (false, false) => " + ",
                };
                let _ = write!(s, "{sign}{coeff}u{}", j + 1);
            }
            if s.is_empty() {
                s.push('0');
            }
            format!("{s} ≤ {}", fmt_num(lambda))
        }
    }
}

/// Interval `Θ` and `Λ` over a box.
#[derive(Clone, Debug)]
pub struct IntervalSystem {
    pub theta: Vec<Vec<Interval>>,
    pub lambda: Vec<Interval>,
}

impl IntervalSystem {
    /// Finds `u` with `Θ(x)u ≤ Λ(x) + slack` for every state of the box.
    /// Splitting `u = u⁺ - u⁻` bounds each product by its worst endpoint.
    pub fn robust_point(&self, slack: f64) -> Option<Vec<f64>> {
        let k = self.lambda.len();
        let m = self.theta.first().map_or(0, Vec::len);
        if m == 0 {
            return self.lambda.iter().all(|l| l.lo + slack >= 0.0).then(Vec::new);
        }
        let mut lp = LinearProgram::new(2 * m);
        for j in 0..2 * m {
            lp.bound(j, 0.0, f64::INFINITY);
        }
        for i in 0..k {
            if !self.lambda[i].is_finite() || self.theta[i].iter().any(|t| !t.is_finite()) {
                return None;
            }
            let mut row = vec![0.0; 2 * m];
            for j in 0..m {
                row[j] = self.theta[i][j].hi;
                row[m + j] = -self.theta[i][j].lo;
            }
            lp.add_le(row, self.lambda[i].lo + slack);
        }
        match lp_solve(&lp).ok()? {
            LpOutcome::Optimal { x, .. } => Some((0..m).map(|j| x[j] - x[m + j]).collect()),
            _ => None,
        }
    }
}

/// `Θu ≤ Lx + λ₀` with constant `Θ`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    pub theta: DMatrix<f64>,
    pub slope: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl LinearSystem {
    /// Vertices of `{y ≥ 0 : Σy = 1, Θᵀy = 0}`. Every Farkas certificate of
    /// the system at any state is a convex combination of them.
    pub fn certificate_vertices(&self) -> Vec<DVector<f64>> {
        let k = self.theta.nrows();
        let m = self.theta.ncols();
        let mut out: Vec<DVector<f64>> = Vec::new();
        let mut support = Vec::new();
        collect_vertices(&self.theta, k, m, 0, &mut support, &mut out);
        out
    }
}

fn collect_vertices(
    theta: &DMatrix<f64>,
    k: usize,
    m: usize,
    start: usize,
    support: &mut Vec<usize>,
    out: &mut Vec<DVector<f64>>,
) {
    if !support.is_empty() {
        let s = support.len();
        let mat = DMatrix::from_fn(m + 1, s, |r, c| if r < m { theta[(support[c], r)] } else { 1.0 });
        let svd = mat.clone().svd(true, true);
        let max_sv = svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|v| **v > 1e-10 * max_sv.max(1.0)).count();
        if rank == s {
            let mut rhs = DVector::zeros(m + 1);
            rhs[m] = 1.0;
            if let Ok(y) = svd.solve(&rhs, 1e-12) {
                let resid = (&mat * &y - &rhs).amax();
                if resid <= 1e-9 && y.iter().all(|v| *v >= -1e-12) {
                    let mut full = DVector::zeros(k);
                    for (c, &i) in support.iter().enumerate() {
                        full[i] = y[c].max(0.0);
                    }
                    if !out.iter().any(|v| (v - &full).amax() <= 1e-9) {
                        out.push(full);
                    }
                }
            }
        } else {
            return;
        }
    }
    if support.len() == m + 1 {
        return;
    }
    for i in start..k {
        support.push(i);
        collect_vertices(theta, k, m, i + 1, support, out);
        support.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::builtin;
    use crate::network::builtin_network;

    fn pat(active: &[usize]) -> ActivationPattern {
        ActivationPattern::from_active(&[4], &[active]).unwrap()
    }

    #[test]
    fn vertex_systems_of_the_diamond() {
        let prob = builtin("example32").unwrap();
        let net = builtin_network("l1_diamond").unwrap();
        let shared = [NeuronId::new(0, 0), NeuronId::new(0, 1)];
        let a = MemberRows::new(&net, &pat(&[0, 2]), &shared).unwrap().at(&prob, &[0.0, 1.0]).unwrap();
        assert_eq!(a.describe(), "u ≥ 0 ∧ u ≤ -5");
        assert_eq!(a.unstable_count(), 2);
        assert!(a.farkas(1e-7).is_some() && a.primal().is_none());
        let b = MemberRows::new(&net, &pat(&[1, 2]), &shared).unwrap().at(&prob, &[0.0, 1.0]).unwrap();
        assert_eq!(b.describe(), "u ≤ 0 ∧ u ≥ 5");
        assert!(b.farkas(1e-7).is_some());
        // At (-1, 0) pattern {2,3} admits u = 2.
        let shared = [NeuronId::new(0, 2), NeuronId::new(0, 3)];
        let c = MemberRows::new(&net, &pat(&[1, 2]), &shared).unwrap().at(&prob, &[-1.0, 0.0]).unwrap();
        assert!(c.farkas(1e-7).is_none());
        let u = c.primal().unwrap();
        assert!((&c.theta * &u - &c.lambda).max() <= 1e-9);
    }

    #[test]
    fn open_loop_rows_are_sign_checks() {
        let prob = builtin("contraction").unwrap();
        let net = builtin_network("l1_diamond").unwrap();
        let s = MemberRows::new(&net, &pat(&[0, 2]), &[]).unwrap().at(&prob, &[0.5, 0.5]).unwrap();
        assert_eq!(s.theta.ncols(), 0);
        assert_eq!(s.lambda.as_slice(), &[1.0]);
        assert!(s.farkas(1e-7).is_none() && s.primal().is_some());
        let bad = FarkasSystem {
            lambda: DVector::from_vec(vec![-1.0]),
            ..s
        };
        assert_eq!(bad.farkas(1e-7).unwrap().as_slice(), &[1.0]);
    }

    #[test]
    fn enclosure_contains_point_systems() {
        let prob = builtin("obstacle").unwrap();
        let net = ReluNetwork::new(
            3,
            vec![crate::network::Layer {
                weights: DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.5, -0.5]),
                bias: DVector::from_vec(vec![0.1, -0.2]),
            }],
            DVector::from_vec(vec![1.0, -1.0]),
            0.3,
        )
        .unwrap();
        let p = ActivationPattern::from_active(&[2], &[&[0, 1]]).unwrap();
        let rows = MemberRows::new(&net, &p, &[NeuronId::new(0, 0)]).unwrap();
        let cube = [Interval::new(0.1, 0.2), Interval::new(-0.3, 0.1), Interval::new(-1.0, -0.5)];
        let enc = rows.enclose(&prob, &cube).unwrap();
        for x in [[0.1, -0.3, -1.0], [0.15, 0.0, -0.7], [0.2, 0.1, -0.5]] {
            let s = rows.at(&prob, &x).unwrap();
            for i in 0..s.lambda.len() {
                assert!(enc.lambda[i].contains(s.lambda[i]));
                for j in 0..prob.m {
                    assert!(enc.theta[i][j].contains(s.theta[(i, j)]));
                }
            }
        }
    }

    #[test]
    fn robust_point_covers_box() {
        let sys = IntervalSystem {
            theta: vec![vec![Interval::new(-2.0, -1.0)], vec![Interval::new(1.0, 1.0)]],
            lambda: vec![Interval::new(-1.0, 1.0), Interval::new(3.0, 3.0)],
        };
        let u = sys.robust_point(0.0).unwrap();
        for t in [-2.0, -1.5, -1.0] {
            for l in [-1.0, 0.0, 1.0] {
                assert!(t * u[0] <= l + 1e-9);
            }
        }
        assert!(u[0] <= 3.0 + 1e-9);
    }

    #[test]
    fn certificate_vertices_of_interval_conflict() {
        let sys = LinearSystem {
            theta: DMatrix::from_row_slice(3, 1, &[-1.0, 1.0, 1.0]),
            slope: DMatrix::zeros(3, 1),
            offset: DVector::zeros(3),
        };
        let v = sys.certificate_vertices();
        assert_eq!(v.len(), 2);
        for y in &v {
            assert!((sys.theta.tr_mul(y)).amax() < 1e-12 && (y.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn multi_input_rendering() {
        assert_eq!(render_row(vec![1.0, -2.0], 3.0), "u1 - 2*u2 ≤ 3");
        assert_eq!(render_row(vec![0.0, 0.0], 3.0), "0 ≤ 3");
    }
}
