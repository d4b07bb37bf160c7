//! Machine-readable verification reports.

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::certify::{CheckTarget, Counterexample, Method, VerificationResult, Verdict, VerifyConfig};
use crate::dynamics::SafetyProblem;
use crate::network::{save_network, ReluNetwork};

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of the canonical rendering of a problem.
pub fn problem_hash(prob: &SafetyProblem) -> String {
    sha256_hex(prob.unparse().as_bytes())
}

/// Hash of the canonical serialization of a network.
pub fn network_hash(net: &ReluNetwork) -> String {
    sha256_hex(&save_network(net))
}

fn config_json(cfg: &VerifyConfig) -> Value {
    let e = &cfg.enumeration;
    let c = &cfg.certify;
    json!({
        "grid": e.grid,
        "zero_tol": e.zero_tol,
        "unstable_cap": e.unstable_cap,
        "max_split_depth": e.max_split_depth,
        "margin_eps": e.margin_eps,
        "max_shared": e.max_shared,
        "strict_eps": c.strict_eps,
        "fast_path_tol": c.fast_path_tol,
        "feas_tol": c.limits.feas_tol,
        "min_box_width": c.limits.min_box_width,
        "max_nodes": c.limits.max_nodes,
        "use_fast_paths": c.use_fast_paths,
        "use_linear_path": c.use_linear_path,
    })
}

fn target_json(res: &VerificationResult, t: &CheckTarget) -> (String, Value) {
    match *t {
        CheckTarget::Correctness(i) => ("correctness".into(), json!(res.atlas.patterns[i].pattern.to_string())),
        CheckTarget::Feasibility(i) => ("feasibility".into(), json!(res.atlas.patterns[i].pattern.to_string())),
        CheckTarget::Intersection(i) => {
            let tuple = &res.atlas.intersections[i];
            (
                "intersection".into(),
                json!(tuple.patterns().iter().map(ToString::to_string).collect::<Vec<_>>()),
            )
        }
        CheckTarget::Containment => ("containment".into(), Value::Null),
    }
}

fn counterexample_json(cx: &Counterexample) -> Value {
    json!({
        "x": cx.x,
        "condition": cx.condition.as_str(),
        "b": cx.b,
        "h": cx.h,
        "shared": cx.shared.iter().map(ToString::to_string).collect::<Vec<_>>(),
        "members": cx.members.iter().map(|m| json!({
            "pattern": m.pattern.to_string(),
            "system": m.system,
            "farkas": m.farkas,
        })).collect::<Vec<_>>(),
    })
}

fn verdict_json(v: &Verdict) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("status".into(), json!(v.status.as_str()));
    m.insert("method".into(), json!(v.method.name()));
    if let Method::BranchAndBound { nodes } = v.method {
        m.insert("nodes".into(), json!(nodes));
    }
    if !v.certificate.is_empty() {
        m.insert(
            "certificate".into(),
            Value::Array(
                v.certificate
                    .iter()
                    .map(|(p, u)| json!({ "pattern": p.to_string(), "u": u }))
                    .collect(),
            ),
        );
    }
    if let Some(b) = &v.unresolved {
        m.insert("unresolved".into(), json!({ "lo": b.lo, "hi": b.hi }));
    }
    m
}

/// Full report of one verification run. Keys are emitted in sorted order;
/// everything except `timing` is reproducible for fixed inputs.
pub fn verification_report(
    prob: &SafetyProblem,
    net: &ReluNetwork,
    cfg: &VerifyConfig,
    res: &VerificationResult,
) -> Value {
    let checks: Vec<Value> = res
        .checks
        .iter()
        .enumerate()
        .map(|(id, c)| {
            let (kind, target) = target_json(res, &c.target);
            let mut m = verdict_json(&c.verdict);
            m.insert("id".into(), json!(id));
            m.insert("kind".into(), json!(kind));
            m.insert("target".into(), target);
            Value::Object(m)
        })
        .collect();
    let atlas = &res.atlas;
    json!({
        "tool": { "name": "ncbf", "version": env!("CARGO_PKG_VERSION") },
        "problem": { "sha256": problem_hash(prob), "states": prob.n, "inputs": prob.m },
        "network": { "sha256": network_hash(net), "input_dim": net.input_dim(), "widths": net.widths() },
        "config": config_json(cfg),
        "atlas": {
            "patterns": atlas.patterns.len(),
            "intersections": atlas.intersections.len(),
            "boundary_cells": atlas.boundary_cells,
            "complete": atlas.is_complete(),
            "unresolved_cells": atlas.inconclusive.len(),
            "pattern_list": atlas.patterns.iter().map(|p| json!({
                "pattern": p.pattern.to_string(),
                "witness": p.witness,
            })).collect::<Vec<_>>(),
            "intersection_list": atlas.intersections.iter().map(|t| json!({
                "members": t.patterns().iter().map(ToString::to_string).collect::<Vec<_>>(),
                "shared": t.shared.iter().map(ToString::to_string).collect::<Vec<_>>(),
                "witness": t.witness,
            })).collect::<Vec<_>>(),
        },
        "checks": checks,
        "status": res.status.as_str(),
        "strict_margin": cfg.certify.strict_eps,
        "counterexample": res.counterexample.as_ref().map(|(i, cx)| {
            let mut v = counterexample_json(cx);
            v["check"] = json!(i);
            v
        }),
        "timing": {
            "enumerate_s": res.timings.enumerate_s,
            "verify_s": res.timings.verify_s,
            "total_s": res.timings.enumerate_s + res.timings.verify_s,
            "per_check_s": res.timings.per_check_s,
        },
    })
}

/// The report with its `timing` block removed, for reproducibility checks.
pub fn without_timing(report: &Value) -> Value {
    let mut r = report.clone();
    if let Some(m) = r.as_object_mut() {
        m.remove("timing");
    }
    r
}

pub fn to_pretty_string(report: &Value) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports contain only finite JSON values");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::verify;
    use crate::dynamics::builtin;
    use crate::network::builtin_network;

    #[test]
    fn hash_matches_known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn example32_report_fields() {
        let prob = builtin("example32").unwrap();
        let net = builtin_network("l1_diamond").unwrap();
        let cfg = VerifyConfig::default();
        let res = verify(&prob, &net, &cfg).unwrap();
        let r = verification_report(&prob, &net, &cfg, &res);
        assert_eq!(r["status"], "UNSAFE");
        assert_eq!(r["atlas"]["patterns"], 4);
        assert_eq!(r["counterexample"]["condition"], "feasibility");
        assert_eq!(r["checks"].as_array().unwrap().len(), res.checks.len());
        assert_eq!(r["checks"][0]["kind"], "correctness");
        assert_eq!(r["problem"]["sha256"].as_str().unwrap().len(), 64);
        let text = to_pretty_string(&without_timing(&r));
        assert!(!text.contains("timing"));
        // Keys are sorted.
        let top: Vec<&String> = r.as_object().unwrap().keys().collect();
        let mut sorted = top.clone();
        sorted.sort();
        assert_eq!(top, sorted);
        let again = verify(&prob, &net, &cfg).unwrap();
        assert_eq!(text, to_pretty_string(&without_timing(&verification_report(&prob, &net, &cfg, &again))));
    }
}
