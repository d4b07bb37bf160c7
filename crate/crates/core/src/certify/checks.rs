//! Pattern, intersection and containment checks.

use nalgebra::DVector;

use super::system::{MemberRows, RowRole};
use super::{CertifyConfig, Condition, Counterexample, MemberDiagnostic, Method, Verdict};
use crate::boundprop::{linear_relaxation_bounds, HyperCube};
use crate::dynamics::SafetyProblem;
use crate::feasolver::bnb::{branch_and_bound, contract, Assessment, BoxOracle};
use crate::feasolver::{lp_solve, BnbOutcome, Cmp, LinearConstraint, LinearProgram, LpOutcome};
use crate::interval::Interval;
use crate::network::{ActivationPattern, NeuronId, ReluNetwork};
use crate::Result;

/// Normals shorter than this are dropped from face descriptions.
const ZERO_NORMAL: f64 = 1e-12;
/// Largest number of certificate-vertex combinations tried on the linear path.
const MAX_COMBINATIONS: usize = 4096;
/// Boundary tolerance of an accepted counterexample.
pub const COUNTEREXAMPLE_B_TOL: f64 = 1e-6;
/// `h` must fall below this for a correctness counterexample.
pub const COUNTEREXAMPLE_H_TOL: f64 = -1e-9;
/// Slack on the state box when re-checking a point.
const BOX_TOL: f64 = 1e-9;

/// A piece of `{b = 0}`: the closed region of `base` with the `shared`
/// neurons pinned to zero, plus a point in its relative interior.
#[derive(Clone, Debug, PartialEq)]
pub struct Face {
    pub base: ActivationPattern,
    pub shared: Vec<NeuronId>,
    pub witness: Vec<f64>,
}

impl Face {
    pub fn members(&self) -> Vec<ActivationPattern> {
        self.base.togglings(&self.shared)
    }

    /// Linear description: `b = 0`, shared neurons `= 0`, every other
    /// neuron closed per `base`.
    pub fn constraints(&self, net: &ReluNetwork) -> Result<Vec<LinearConstraint>> {
        let region = net.affine_region(&self.base)?;
        let mut out = vec![LinearConstraint {
            coeffs: region.output_gradient.iter().copied().collect(),
            cmp: Cmp::Eq,
            rhs: -region.output_offset,
        }];
        for con in &region.constraints {
            if con.normal.norm() <= ZERO_NORMAL {
                continue;
            }
            let cmp = if self.shared.contains(&con.neuron) {
                Cmp::Eq
            } else if con.sense.sign() > 0.0 {
                Cmp::Ge
            } else {
                Cmp::Le
            };
            out.push(LinearConstraint {
                coeffs: con.normal.iter().copied().collect(),
                cmp,
                rhs: -con.offset,
            });
        }
        Ok(out)
    }
}

pub(crate) struct Context<'a> {
    pub prob: &'a SafetyProblem,
    pub net: &'a ReluNetwork,
    pub cfg: &'a CertifyConfig,
    pub state_box: Vec<Interval>,
}

impl Context<'_> {
    fn diagnostics(&self, x: &[f64]) -> Result<Option<(Vec<NeuronId>, Vec<MemberDiagnostic>)>> {
        let (_, t) = self.net.activation_pattern(x, self.cfg.zero_tol)?;
        let shared: Vec<NeuronId> = t.neurons.iter().copied().collect();
        let mut out = Vec::new();
        for p in self.net.enumerate_patterns_at(x, self.cfg.zero_tol)? {
            let sys = MemberRows::new(self.net, &p, &shared)?.at(self.prob, x)?;
            let Some(y) = sys.farkas(self.cfg.strict_eps) else {
                return Ok(None);
            };
            out.push(MemberDiagnostic {
                system: sys.describe(),
                farkas: y.iter().copied().collect(),
                pattern: p,
            });
        }
        Ok(Some((shared, out)))
    }
}

/// Independent re-evaluation of a claimed counterexample at `x`. A boundary
/// point fails if it lies outside the safe set or if every pattern of `S(x)`
/// admits a Farkas certificate; a point with `b > 0` fails if it lies outside
/// the safe set.
pub fn recheck_counterexample(
    prob: &SafetyProblem,
    net: &ReluNetwork,
    x: &[f64],
    cfg: &CertifyConfig,
) -> Result<Option<Counterexample>> {
    let ctx = Context {
        prob,
        net,
        cfg,
        state_box: prob.box_intervals(),
    };
    let b = net.evaluate(x)?;
    let h = prob.eval_h(x)?;
    let in_box = x
        .iter()
        .zip(&prob.state_box)
        .all(|(v, &(lo, hi))| lo - BOX_TOL <= *v && *v <= hi + BOX_TOL);
    if !in_box {
        return Ok(None);
    }
    if b > COUNTEREXAMPLE_B_TOL {
        return Ok((h < COUNTEREXAMPLE_H_TOL).then(|| Counterexample {
            x: x.to_vec(),
            condition: Condition::Containment,
            b,
            h,
            shared: Vec::new(),
            members: Vec::new(),
        }));
    }
    if b < -COUNTEREXAMPLE_B_TOL {
        return Ok(None);
    }
    if h < COUNTEREXAMPLE_H_TOL {
        return Ok(Some(Counterexample {
            x: x.to_vec(),
            condition: Condition::Correctness,
            b,
            h,
            shared: Vec::new(),
            members: Vec::new(),
        }));
    }
    Ok(ctx.diagnostics(x)?.map(|(shared, members)| Counterexample {
        x: x.to_vec(),
        condition: Condition::Feasibility,
        b,
        h,
        shared,
        members,
    }))
}

/// Accepts `x` or a point moved toward the face witness that passes the
/// independent re-check.
fn finalize(ctx: &Context, face: &Face, x: &[f64]) -> Result<Option<Counterexample>> {
    let mut candidates = vec![x.to_vec()];
    for k in 1..=8 {
        let delta = 10f64.powi(-k);
        candidates.push(
            x.iter()
                .zip(&face.witness)
                .map(|(a, w)| a + delta * (w - a))
                .collect(),
        );
    }
    for c in candidates {
        if let Some(cx) = recheck_counterexample(ctx.prob, ctx.net, &c, ctx.cfg)? {
            if cx.condition == Condition::Feasibility {
                return Ok(Some(cx));
            }
        }
    }
    Ok(None)
}

/// Shortcut for a single pattern: with unconstrained input
/// and constant `g`, a nonzero `W̄ᵀG` can always be compensated.
pub fn corollary_fast_path(
    prob: &SafetyProblem,
    net: &ReluNetwork,
    pattern: &ActivationPattern,
    tol: f64,
) -> Result<Option<Verdict>> {
    if prob.m == 0 || !prob.unbounded_input {
        return Ok(None);
    }
    let Some(g) = prob.constant_g() else {
        return Ok(None);
    };
    let region = net.affine_region(pattern)?;
    let wg = g.tr_mul(&region.output_gradient);
    Ok((wg.amax() > tol).then(|| Verdict::safe(Method::FastPath)))
}

/// Feasibility on a face: search for a state where every member's
/// `u`-system is infeasible.
pub(crate) fn check_feasibility(ctx: &Context, face: &Face) -> Result<Verdict> {
    let members: Vec<MemberRows> = face
        .members()
        .iter()
        .map(|p| MemberRows::new(ctx.net, p, &face.shared))
        .collect::<Result<_>>()?;
    let linear = face.constraints(ctx.net)?;
    if ctx.cfg.use_linear_path {
        if let Some(v) = linear_feasibility(ctx, face, &members, &linear)? {
            return Ok(v);
        }
    }
    let oracle = FaceOracle {
        ctx,
        face,
        members: &members,
        linear: &linear,
    };
    let (outcome, stats) = branch_and_bound(&oracle, ctx.state_box.clone(), &ctx.cfg.limits);
    let method = Method::BranchAndBound { nodes: stats.nodes };
    Ok(match outcome {
        BnbOutcome::InfeasibleCertified => Verdict::safe(method),
        BnbOutcome::Feasible(cx) => Verdict::unsafe_(method, cx),
        BnbOutcome::Inconclusive(b) => Verdict::inconclusive(method, HyperCube::from_intervals(&b)),
    })
}

/// Exact search when `f` is affine and `g` constant. `None` means the path
/// does not apply or could not produce a checkable answer.
fn linear_feasibility(
    ctx: &Context,
    face: &Face,
    members: &[MemberRows],
    linear: &[LinearConstraint],
) -> Result<Option<Verdict>> {
    let Some(systems) = members
        .iter()
        .map(|m| m.linear_form(ctx.prob))
        .collect::<Option<Vec<_>>>()
    else {
        return Ok(None);
    };
    let vertices: Vec<Vec<DVector<f64>>> = systems.iter().map(|s| s.certificate_vertices()).collect();
    if vertices.iter().any(Vec::is_empty) {
        return Ok(Some(Verdict::safe(Method::Linear)));
    }
    let combos: usize = vertices.iter().map(Vec::len).try_fold(1usize, |a, b| a.checked_mul(b)).unwrap_or(usize::MAX);
    if combos > MAX_COMBINATIONS {
        return Ok(None);
    }
    let n = ctx.prob.n;
    let mut choice = vec![0usize; vertices.len()];
    loop {
        // minimize s subject to v_lᵀ(L_l x + λ_l) ≤ s for every member
        let mut lp = LinearProgram::new(n + 1);
        for (k, iv) in ctx.state_box.iter().enumerate() {
            lp.bound(k, iv.lo, iv.hi);
        }
        for c in linear {
            let mut coeffs = c.coeffs.clone();
            coeffs.push(0.0);
            lp.add(coeffs, c.cmp, c.rhs);
        }
        for (l, sys) in systems.iter().enumerate() {
            let v = &vertices[l][choice[l]];
            let slope = sys.slope.tr_mul(v);
            let mut coeffs: Vec<f64> = slope.iter().copied().collect();
            coeffs.push(-1.0);
            lp.add_le(coeffs, -v.dot(&sys.offset));
        }
        let mut obj = vec![0.0; n + 1];
        obj[n] = 1.0;
        lp.minimize(obj);
        match lp_solve(&lp) {
            Ok(LpOutcome::Optimal { x, .. }) => {
                if x[n] <= -ctx.cfg.strict_eps {
                    return Ok(finalize(ctx, face, &x[..n])?.map(|cx| Verdict::unsafe_(Method::Linear, cx)));
                }
            }
            Ok(LpOutcome::Infeasible(_)) => {}
            Ok(LpOutcome::Unbounded) | Err(_) => return Ok(None),
        }
        let mut k = 0;
        loop {
            if k == choice.len() {
                return Ok(Some(Verdict::safe(Method::Linear)));
            }
            choice[k] += 1;
            if choice[k] < vertices[k].len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
    }
}

struct FaceOracle<'a> {
    ctx: &'a Context<'a>,
    face: &'a Face,
    members: &'a [MemberRows],
    linear: &'a [LinearConstraint],
}

impl BoxOracle for FaceOracle<'_> {
    type Witness = Counterexample;

    fn assess(&self, cube: &[Interval]) -> Assessment<Counterexample> {
        let Some((cube, sample)) = contract(cube, self.linear) else {
            return Assessment::Prune;
        };
        let slack = 0.5 * self.ctx.cfg.strict_eps;
        let robust = self.members.iter().any(|m| {
            m.enclose(self.ctx.prob, &cube)
                .ok()
                .is_some_and(|s| s.robust_point(slack).is_some())
        });
        if robust {
            return Assessment::Prune;
        }
        let all_fail = self.members.iter().all(|m| {
            m.at(self.ctx.prob, &sample)
                .ok()
                .is_some_and(|s| s.farkas(self.ctx.cfg.strict_eps).is_some())
        });
        if all_fail {
            if let Ok(Some(cx)) = finalize(self.ctx, self.face, &sample) {
                return Assessment::Found(cx);
            }
        }
        Assessment::Split(cube)
    }
}

/// Correctness on a face: search for a boundary state with `h ≤ -eps`.
pub(crate) fn check_correctness(ctx: &Context, face: &Face) -> Result<Verdict> {
    let linear = face.constraints(ctx.net)?;
    let oracle = CorrectnessOracle { ctx, linear: &linear };
    let (outcome, stats) = branch_and_bound(&oracle, ctx.state_box.clone(), &ctx.cfg.limits);
    let method = Method::BranchAndBound { nodes: stats.nodes };
    Ok(match outcome {
        BnbOutcome::InfeasibleCertified => Verdict::safe(method),
        BnbOutcome::Feasible(cx) => Verdict::unsafe_(method, cx),
        BnbOutcome::Inconclusive(b) => Verdict::inconclusive(method, HyperCube::from_intervals(&b)),
    })
}

struct CorrectnessOracle<'a> {
    ctx: &'a Context<'a>,
    linear: &'a [LinearConstraint],
}

impl BoxOracle for CorrectnessOracle<'_> {
    type Witness = Counterexample;

    fn assess(&self, cube: &[Interval]) -> Assessment<Counterexample> {
        let eps = self.ctx.cfg.strict_eps;
        if let Ok(iv) = self.ctx.prob.h.eval_interval(cube) {
            if iv.lo > -eps {
                return Assessment::Prune;
            }
        }
        let Some((cube, sample)) = contract(cube, self.linear) else {
            return Assessment::Prune;
        };
        if let Ok(iv) = self.ctx.prob.h.eval_interval(&cube) {
            if iv.lo > -eps {
                return Assessment::Prune;
            }
        }
        if self.ctx.prob.eval_h(&sample).is_ok_and(|h| h <= -eps) {
            if let Ok(Some(cx)) = recheck_counterexample(self.ctx.prob, self.ctx.net, &sample, self.ctx.cfg) {
                if cx.condition == Condition::Correctness {
                    return Assessment::Found(cx);
                }
            }
        }
        Assessment::Split(cube)
    }
}

/// Box-wide containment `{b ≥ 0} ⊆ {h ≥ 0}`: search for a state with
/// `b ≥ 0` and `h ≤ -eps`.
pub(crate) fn check_containment(ctx: &Context) -> Result<Verdict> {
    let oracle = ContainmentOracle { ctx };
    let (outcome, stats) = branch_and_bound(&oracle, ctx.state_box.clone(), &ctx.cfg.limits);
    let method = Method::BranchAndBound { nodes: stats.nodes };
    Ok(match outcome {
        BnbOutcome::InfeasibleCertified => Verdict::safe(method),
        BnbOutcome::Feasible(cx) => Verdict::unsafe_(method, cx),
        BnbOutcome::Inconclusive(b) => Verdict::inconclusive(method, HyperCube::from_intervals(&b)),
    })
}

struct ContainmentOracle<'a> {
    ctx: &'a Context<'a>,
}

impl BoxOracle for ContainmentOracle<'_> {
    type Witness = Counterexample;

    fn assess(&self, cube: &[Interval]) -> Assessment<Counterexample> {
        let eps = self.ctx.cfg.strict_eps;
        if let Ok(iv) = self.ctx.prob.h.eval_interval(cube) {
            if iv.lo > -eps {
                return Assessment::Prune;
            }
        }
        if let Ok(b) = linear_relaxation_bounds(self.ctx.net, &HyperCube::from_intervals(cube)) {
            if b.hi < 0.0 {
                return Assessment::Prune;
            }
        }
        let c: Vec<f64> = cube.iter().map(Interval::mid).collect();
        if let Ok(Some(cx)) = recheck_counterexample(self.ctx.prob, self.ctx.net, &c, self.ctx.cfg) {
            if cx.h <= -eps {
                return Assessment::Found(cx);
            }
        }
        Assessment::Split(cube.to_vec())
    }
}

/// Feasible `u` of every member at the face witness, for audit.
pub(crate) fn witness_inputs(ctx: &Context, face: &Face) -> Result<Vec<(ActivationPattern, Option<Vec<f64>>)>> {
    face.members()
        .into_iter()
        .map(|p| {
            let sys = MemberRows::new(ctx.net, &p, &face.shared)?.at(ctx.prob, &face.witness)?;
            Ok((p, sys.primal().map(|u| u.iter().copied().collect())))
        })
        .collect()
}

/// Whether `d` satisfies every sign row of `pattern` with `shared` pinned.
pub(crate) fn direction_admissible(
    net: &ReluNetwork,
    pattern: &ActivationPattern,
    shared: &[NeuronId],
    d: &[f64],
    tol: f64,
) -> Result<bool> {
    let rows = MemberRows::new(net, pattern, shared)?;
    let d = DVector::from_column_slice(d);
    Ok(rows.rows.iter().all(|r| {
        let v = r.sigma * r.grad.dot(&d);
        match r.role {
            RowRole::Input(_) => true,
            _ => v >= -tol,
        }
    }))
}
