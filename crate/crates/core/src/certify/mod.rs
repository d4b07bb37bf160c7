//! Exact certification of the boundary conditions of a ReLU barrier
//! function: per-pattern checks, intersection checks and containment.

mod checks;
pub mod system;

use std::time::Instant;

use rayon::prelude::*;

use crate::boundprop::HyperCube;
use crate::dynamics::SafetyProblem;
use crate::enumerate::{build_atlas, BoundaryAtlas, EnumConfig};
use crate::feasolver::BnbLimits;
use crate::network::{ActivationPattern, NeuronId, ReluNetwork, DEFAULT_ZERO_TOL};
use crate::{Error, Result};

pub use checks::{corollary_fast_path, recheck_counterexample, Face, COUNTEREXAMPLE_B_TOL, COUNTEREXAMPLE_H_TOL};
pub use system::{FarkasSystem, MemberRows, RowRole};

use checks::Context;

#[derive(Clone, Debug, PartialEq)]
pub struct CertifyConfig {
    /// Strict inequalities hold with at least this margin.
    pub strict_eps: f64,
    pub zero_tol: f64,
    pub fast_path_tol: f64,
    pub limits: BnbLimits,
    pub use_fast_paths: bool,
    pub use_linear_path: bool,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            strict_eps: 1e-7,
            zero_tol: DEFAULT_ZERO_TOL,
            fast_path_tol: 1e-9,
            limits: BnbLimits::default(),
            use_fast_paths: true,
            use_linear_path: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyConfig {
    pub enumeration: EnumConfig,
    pub certify: CertifyConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Status {
    Safe,
    Unsafe,
    Inconclusive,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Safe => "SAFE",
            Status::Unsafe => "UNSAFE",
            Status::Inconclusive => "INCONCLUSIVE",
        }
    }
}

/// Which safety condition a counterexample violates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Condition {
    /// A boundary state outside the safe set.
    Correctness,
    /// A boundary state where no admissible input keeps the state in `D`.
    Feasibility,
    /// A state of `D` outside the safe set.
    Containment,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Correctness => "correctness",
            Condition::Feasibility => "feasibility",
            Condition::Containment => "containment",
        }
    }
}

/// One member pattern's infeasible `u`-system at a counterexample.
#[derive(Clone, Debug, PartialEq)]
pub struct MemberDiagnostic {
    pub pattern: ActivationPattern,
    pub system: String,
    pub farkas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Counterexample {
    pub x: Vec<f64>,
    pub condition: Condition,
    pub b: f64,
    pub h: f64,
    /// `T(x)`.
    pub shared: Vec<NeuronId>,
    pub members: Vec<MemberDiagnostic>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Method {
    FastPath,
    Linear,
    BranchAndBound { nodes: usize },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::FastPath => "fast_path",
            Method::Linear => "linear",
            Method::BranchAndBound { .. } => "branch_and_bound",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub status: Status,
    pub method: Method,
    pub counterexample: Option<Counterexample>,
    /// Widest box left undecided.
    pub unresolved: Option<HyperCube>,
    /// Per-member feasible inputs at the face witness.
    pub certificate: Vec<(ActivationPattern, Option<Vec<f64>>)>,
}

impl Verdict {
    pub(crate) fn safe(method: Method) -> Self {
        Self {
            status: Status::Safe,
            method,
            counterexample: None,
            unresolved: None,
            certificate: Vec::new(),
        }
    }

    pub(crate) fn unsafe_(method: Method, cx: Counterexample) -> Self {
        Self {
            status: Status::Unsafe,
            method,
            counterexample: Some(cx),
            unresolved: None,
            certificate: Vec::new(),
        }
    }

    pub(crate) fn inconclusive(method: Method, b: HyperCube) -> Self {
        Self {
            status: Status::Inconclusive,
            method,
            counterexample: None,
            unresolved: Some(b),
            certificate: Vec::new(),
        }
    }
}

/// What one check covers.
#[derive(Clone, Debug, PartialEq)]
pub enum CheckTarget {
    /// Correctness on the slice of pattern `𝒮[i]`.
    Correctness(usize),
    /// Feasibility on the slice of pattern `𝒮[i]`.
    Feasibility(usize),
    /// Intersection `𝒱[i]`.
    Intersection(usize),
    /// `D ⊆ C` over the state box.
    Containment,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRecord {
    pub target: CheckTarget,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Timings {
    pub enumerate_s: f64,
    pub verify_s: f64,
    pub per_check_s: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationResult {
    pub status: Status,
    pub atlas: BoundaryAtlas,
    pub checks: Vec<CheckRecord>,
    /// First counterexample in check order.
    pub counterexample: Option<(usize, Counterexample)>,
    pub timings: Timings,
}

fn check_dims(prob: &SafetyProblem, net: &ReluNetwork) -> Result<()> {
    if prob.n != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: prob.n,
            got: net.input_dim(),
        });
    }
    Ok(())
}

fn context<'a>(prob: &'a SafetyProblem, net: &'a ReluNetwork, cfg: &'a CertifyConfig) -> Context<'a> {
    Context {
        prob,
        net,
        cfg,
        state_box: prob.box_intervals(),
    }
}

/// Correctness then feasibility on the slice of one pattern of `𝒮`.
pub fn check_pattern_interior(
    prob: &SafetyProblem,
    net: &ReluNetwork,
    pattern: &ActivationPattern,
    witness: &[f64],
    cfg: &CertifyConfig,
) -> Result<(Verdict, Verdict)> {
    check_dims(prob, net)?;
    let ctx = context(prob, net, cfg);
    let face = Face {
        base: pattern.clone(),
        shared: Vec::new(),
        witness: witness.to_vec(),
    };
    Ok((checks::check_correctness(&ctx, &face)?, feasibility(&ctx, &face)?))
}

/// Feasibility on an intersection face.
pub fn check_intersection(prob: &SafetyProblem, net: &ReluNetwork, face: &Face, cfg: &CertifyConfig) -> Result<Verdict> {
    check_dims(prob, net)?;
    feasibility(&context(prob, net, cfg), face)
}

/// `{b ≥ 0} ⊆ {h ≥ 0}` over the state box.
pub fn check_containment(prob: &SafetyProblem, net: &ReluNetwork, cfg: &CertifyConfig) -> Result<Verdict> {
    check_dims(prob, net)?;
    checks::check_containment(&context(prob, net, cfg))
}

fn feasibility(ctx: &Context, face: &Face) -> Result<Verdict> {
    if ctx.cfg.use_fast_paths && face.shared.is_empty() {
        if let Some(v) = corollary_fast_path(ctx.prob, ctx.net, &face.base, ctx.cfg.fast_path_tol)? {
            return Ok(v);
        }
    }
    let mut v = checks::check_feasibility(ctx, face)?;
    if v.status == Status::Safe {
        v.certificate = checks::witness_inputs(ctx, face)?;
    }
    Ok(v)
}

fn run_check(ctx: &Context, atlas: &BoundaryAtlas, target: &CheckTarget) -> Result<Verdict> {
    match *target {
        CheckTarget::Correctness(i) | CheckTarget::Feasibility(i) => {
            let p = &atlas.patterns[i];
            let face = Face {
                base: p.pattern.clone(),
                shared: Vec::new(),
                witness: p.witness.clone(),
            };
            if matches!(target, CheckTarget::Correctness(_)) {
                checks::check_correctness(ctx, &face)
            } else {
                feasibility(ctx, &face)
            }
        }
        CheckTarget::Intersection(i) => {
            let t = &atlas.intersections[i];
            let face = Face {
                base: t.base.clone(),
                shared: t.shared.clone(),
                witness: t.witness.clone(),
            };
            feasibility(ctx, &face)
        }
        CheckTarget::Containment => checks::check_containment(ctx),
    }
}

/// Every check on an already built atlas, in canonical order.
pub fn verify_atlas(
    prob: &SafetyProblem,
    net: &ReluNetwork,
    atlas: BoundaryAtlas,
    cfg: &CertifyConfig,
) -> Result<VerificationResult> {
    check_dims(prob, net)?;
    let ctx = context(prob, net, cfg);
    let mut targets = Vec::new();
    targets.extend((0..atlas.patterns.len()).map(CheckTarget::Correctness));
    targets.extend((0..atlas.patterns.len()).map(CheckTarget::Feasibility));
    targets.extend((0..atlas.intersections.len()).map(CheckTarget::Intersection));
    targets.push(CheckTarget::Containment);
    let start = Instant::now();
    let results = targets
        .par_iter()
        .map(|t| {
            let s = Instant::now();
            run_check(&ctx, &atlas, t).map(|v| (v, s.elapsed().as_secs_f64()))
        })
        .collect::<Result<Vec<_>>>()?;
    let verify_s = start.elapsed().as_secs_f64();
    let mut checks = Vec::with_capacity(results.len());
    let mut per_check_s = Vec::with_capacity(results.len());
    for (target, (verdict, t)) in targets.into_iter().zip(results) {
        checks.push(CheckRecord { target, verdict });
        per_check_s.push(t);
    }
    let counterexample = checks
        .iter()
        .enumerate()
        .find_map(|(i, c)| c.verdict.counterexample.clone().map(|cx| (i, cx)));
    let status = if counterexample.is_some() {
        Status::Unsafe
    } else if !atlas.is_complete() || checks.iter().any(|c| c.verdict.status != Status::Safe) {
        Status::Inconclusive
    } else {
        Status::Safe
    };
    Ok(VerificationResult {
        status,
        atlas,
        checks,
        counterexample,
        timings: Timings {
            enumerate_s: 0.0,
            verify_s,
            per_check_s,
        },
    })
}

/// Builds the boundary atlas over the state box and runs every check.
pub fn verify(prob: &SafetyProblem, net: &ReluNetwork, cfg: &VerifyConfig) -> Result<VerificationResult> {
    check_dims(prob, net)?;
    let start = Instant::now();
    let state_box = HyperCube::from_intervals(&prob.box_intervals());
    let atlas = build_atlas(net, &state_box, &cfg.enumeration)?;
    let enumerate_s = start.elapsed().as_secs_f64();
    let mut res = verify_atlas(prob, net, atlas, &cfg.certify)?;
    res.timings.enumerate_s = enumerate_s;
    Ok(res)
}

/// Whether `d` lies in the tangent cone of `D = {b ≥ 0}` at a boundary
/// point: some pattern of `S(x)` satisfies the three sign conditions.
pub fn tangent_cone_contains(net: &ReluNetwork, x: &[f64], d: &[f64]) -> Result<bool> {
    let b = net.evaluate(x)?;
    if b.abs() > 1e-7 {
        return Err(Error::Precondition(format!("point is not on the boundary: b(x) = {b}")));
    }
    if d.len() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: d.len(),
        });
    }
    let (_, t) = net.activation_pattern(x, DEFAULT_ZERO_TOL)?;
    let shared: Vec<NeuronId> = t.neurons.iter().copied().collect();
    let scale = d.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for p in net.enumerate_patterns_at(x, DEFAULT_ZERO_TOL)? {
        if checks::direction_admissible(net, &p, &shared, d, 1e-12 * scale)? {
            return Ok(true);
        }
    }
    Ok(false)
}
