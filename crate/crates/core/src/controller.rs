//! Barrier-constrained safety filter and closed-loop simulation.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::certify::MemberRows;
use crate::certify::RowRole;
use crate::dynamics::{Expr, SafetyProblem};
use crate::feasolver::qp::project_onto_polyhedron;
use crate::network::{ActivationPattern, NeuronId, ReluNetwork, DEFAULT_ZERO_TOL};
use crate::{Error, Result};

/// Input applied when no pattern of `S(x)` admits a feasible input.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fallback {
    #[default]
    HoldNominal,
    Zero,
}

/// Minimally invasive filter around a nominal policy with `α(b) = κ·b`.
#[derive(Clone, Debug)]
pub struct QpPolicy {
    pub net: ReluNetwork,
    pub prob: SafetyProblem,
    /// One expression per input.
    pub nominal: Vec<Expr>,
    pub kappa: f64,
    pub fallback: Fallback,
}

impl QpPolicy {
    pub fn new(net: ReluNetwork, prob: SafetyProblem, nominal: Vec<Expr>, kappa: f64) -> Result<Self> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Precondition(format!("class-K gain must be positive, got {kappa}")));
        }
        if net.input_dim() != prob.n {
            return Err(Error::DimensionMismatch {
                expected: prob.n,
                got: net.input_dim(),
            });
        }
        if nominal.len() != prob.m {
            return Err(Error::DimensionMismatch {
                expected: prob.m,
                got: nominal.len(),
            });
        }
        Ok(Self {
            net,
            prob,
            nominal,
            kappa,
            fallback: Fallback::HoldNominal,
        })
    }

    /// Zero nominal input.
    pub fn passive(net: ReluNetwork, prob: SafetyProblem, kappa: f64) -> Result<Self> {
        let nominal = vec![Expr::c(0.0); prob.m];
        Self::new(net, prob, nominal, kappa)
    }

    pub fn with_fallback(mut self, fallback: Fallback) -> Self {
        self.fallback = fallback;
        self
    }

    pub fn nominal_at(&self, x: &[f64]) -> Result<DVector<f64>> {
        let v = self.nominal.iter().map(|e| e.eval(x)).collect::<Result<Vec<_>>>()?;
        Ok(DVector::from_vec(v))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutput {
    pub u: DVector<f64>,
    /// Pattern whose program gave `u`; `None` when every program was infeasible.
    pub pattern: Option<ActivationPattern>,
    pub feasible: bool,
}

/// Solves one projection per pattern of `S(x)` and keeps the one closest to
/// the nominal input. The output row is relaxed by `κ·b(x)`; shared-neuron
/// rows and `Au ≤ c` are kept exact.
pub fn qp_filter(policy: &QpPolicy, x: &[f64]) -> Result<FilterOutput> {
    let prob = &policy.prob;
    if x.len() != prob.n {
        return Err(Error::DimensionMismatch {
            expected: prob.n,
            got: x.len(),
        });
    }
    if !prob.in_box(x) {
        return Err(Error::Precondition(format!("state {x:?} is outside the state box")));
    }
    let nominal = policy.nominal_at(x)?;
    let patterns = policy.net.enumerate_patterns_at(x, DEFAULT_ZERO_TOL)?;
    if prob.m == 0 {
        return Ok(FilterOutput {
            u: nominal,
            pattern: patterns.into_iter().next(),
            feasible: true,
        });
    }
    let b = policy.net.evaluate(x)?;
    let (_, t) = policy.net.activation_pattern(x, DEFAULT_ZERO_TOL)?;
    let shared: Vec<NeuronId> = t.neurons.iter().copied().collect();
    let mut best: Option<(f64, DVector<f64>, ActivationPattern)> = None;
    for p in patterns {
        let mut sys = MemberRows::new(&policy.net, &p, &shared)?.at(prob, x)?;
        for (i, role) in sys.roles.iter().enumerate() {
            if *role == RowRole::Output {
                sys.lambda[i] += policy.kappa * b;
            }
        }
        if let Some(u) = project_onto_polyhedron(&sys.theta, &sys.lambda, &nominal) {
            let cost = (&u - &nominal).norm_squared();
            if best.as_ref().is_none_or(|(c, _, _)| cost < *c) {
                best = Some((cost, u, p));
            }
        }
    }
    Ok(match best {
        Some((_, u, p)) => FilterOutput {
            u,
            pattern: Some(p),
            feasible: true,
        },
        None => FilterOutput {
            u: match policy.fallback {
                Fallback::HoldNominal => nominal,
                Fallback::Zero => DVector::zeros(prob.m),
            },
            pattern: None,
            feasible: false,
        },
    })
}

/// Closed-loop samples; every array has one entry per recorded state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub h: Vec<f64>,
    pub patterns: Vec<Option<ActivationPattern>>,
    pub infeasible: Vec<bool>,
    /// The next step would have left the state box.
    pub truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn min_b(&self) -> f64 {
        self.b.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Columns `t, x…, u…, b, h, flag` where `flag` marks an infeasible filter.
    pub fn to_csv(&self, prob: &SafetyProblem) -> String {
        let mut s = String::from("t");
        for k in 0..prob.n {
            let _ = write!(s, ",{}", prob.state_name(k));
        }
        for j in 0..prob.m {
            let _ = write!(s, ",u{}", j + 1);
        }
        s.push_str(",b,h,flag\n");
        for i in 0..self.len() {
            let _ = write!(s, "{}", self.times[i]);
            for v in self.states[i].iter().chain(&self.inputs[i]) {
                let _ = write!(s, ",{v}");
            }
            let _ = writeln!(s, ",{},{},{}", self.b[i], self.h[i], u8::from(self.infeasible[i]));
        }
        s
    }
}

fn vector_field(prob: &SafetyProblem, x: &[f64], u: &DVector<f64>) -> Result<DVector<f64>> {
    let f = prob.eval_f(x)?;
    if prob.m == 0 {
        return Ok(f);
    }
    Ok(f + prob.eval_g(x)? * u)
}

/// Classical Runge-Kutta integration with the filtered input held over each
/// step. Stops early when a step would leave the state box.
pub fn simulate(policy: &QpPolicy, x0: &[f64], dt: f64, horizon: f64) -> Result<Trajectory> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Precondition(format!("time step must be positive, got {dt}")));
    }
    if !(horizon >= 0.0) {
        return Err(Error::Precondition(format!("horizon must be nonnegative, got {horizon}")));
    }
    let prob = &policy.prob;
    let steps = (horizon / dt).round() as usize;
    let mut traj = Trajectory::default();
    let mut x = DVector::from_column_slice(x0);
    for step in 0..=steps {
        let xs = x.as_slice();
        let out = qp_filter(policy, xs)?;
        traj.times.push(step as f64 * dt);
        traj.states.push(xs.to_vec());
        traj.inputs.push(out.u.iter().copied().collect());
        traj.b.push(policy.net.evaluate(xs)?);
        traj.h.push(prob.eval_h(xs)?);
        traj.patterns.push(out.pattern);
        traj.infeasible.push(!out.feasible);
        if step == steps {
            break;
        }
        let u = out.u;
        let k1 = vector_field(prob, xs, &u)?;
        let k2 = vector_field(prob, (&x + &k1 * (dt / 2.0)).as_slice(), &u)?;
        let k3 = vector_field(prob, (&x + &k2 * (dt / 2.0)).as_slice(), &u)?;
        let k4 = vector_field(prob, (&x + &k3 * dt).as_slice(), &u)?;
        let next = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        if !prob.in_box(next.as_slice()) || next.iter().any(|v| !v.is_finite()) {
            traj.truncated = true;
            break;
        }
        x = next;
    }
    Ok(traj)
}

/// Continuous-time LQR gain `K` with `u = -Kx`, from the stable invariant
/// subspace of the Hamiltonian found by the matrix sign iteration.
pub fn lqr_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::Precondition("LQR matrices have inconsistent shapes".into()));
    }
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Precondition("input weight is singular".into()))?;
    let s = b * &r_inv * b.transpose();
    let mut z = DMatrix::zeros(2 * n, 2 * n);
    z.view_mut((0, 0), (n, n)).copy_from(a);
    z.view_mut((0, n), (n, n)).copy_from(&(-&s));
    z.view_mut((n, 0), (n, n)).copy_from(&(-q));
    z.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let mut converged = false;
    for _ in 0..100 {
        let det = z.determinant().abs();
        let inv = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Precondition("Hamiltonian has imaginary-axis eigenvalues".into()))?;
        let c = if det > 0.0 && det.is_finite() {
            det.powf(-1.0 / (2.0 * n as f64))
        } else {
            1.0
        };
        let next = (&z * c + inv / c) * 0.5;
        let delta = (&next - &z).norm();
        z = next;
        if delta <= 1e-13 * z.norm() {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Precondition("sign iteration did not converge".into()));
    }
    let id = DMatrix::<f64>::identity(n, n);
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&z.view((0, n), (n, n)));
    lhs.view_mut((n, 0), (n, n)).copy_from(&(z.view((n, n), (n, n)) + &id));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(z.view((0, 0), (n, n)) + &id)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-z.view((n, 0), (n, n))));
    let p = lhs
        .svd(true, true)
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Precondition(e.to_string()))?;
    let p = (&p + p.transpose()) * 0.5;
    Ok(r_inv * b.transpose() * p)
}

/// Expressions of `u = -Kx`.
pub fn linear_feedback(k: &DMatrix<f64>) -> Vec<Expr> {
    (0..k.nrows())
        .map(|j| {
            (0..k.ncols()).fold(Expr::c(0.0), |acc, i| {
                Expr::Sub(
                    Box::new(acc),
                    Box::new(Expr::Mul(Box::new(Expr::c(k[(j, i)])), Box::new(Expr::var(i)))),
                )
            })
        })
        .collect()
}

/// LQR-to-origin feedback with unit weights for a problem with affine `f`
/// and constant `g`.
pub fn lqr_nominal(prob: &SafetyProblem) -> Result<Vec<Expr>> {
    let (a, _) = prob
        .affine_f()
        .ok_or_else(|| Error::Precondition("LQR needs affine drift".into()))?;
    let b = prob
        .constant_g()
        .ok_or_else(|| Error::Precondition("LQR needs a constant input matrix".into()))?;
    let k = lqr_gain(&a, &b, &DMatrix::identity(prob.n, prob.n), &DMatrix::identity(prob.m, prob.m))?;
    Ok(linear_feedback(&k))
}
