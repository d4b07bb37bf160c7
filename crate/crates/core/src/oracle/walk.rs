use std::collections::{BTreeSet, VecDeque};

use crate::boundprop::HyperCube;
use crate::feasolver::{lp_solve, LinearProgram, LpOutcome};
use crate::network::{ActivationPattern, AffineRegion, NeuronId, ReluNetwork};
use crate::Result;

const FACET_MARGIN: f64 = 1e-9;
const SIGN_MARGIN: f64 = 1e-9;

/// Largest `t` such that a point of the box lies at distance `t` from every
/// region hyperplane except `pinned`, which it satisfies with equality.
fn region_margin(region: &AffineRegion, bx: &HyperCube, pinned: Option<NeuronId>) -> Option<f64> {
    let n = bx.dim();
    let mut lp = LinearProgram::new(n + 1);
    for k in 0..n {
        let mut lo = vec![0.0; n + 1];
        lo[k] = 1.0;
        lo[n] = -1.0;
        lp.add_ge(lo, bx.lo[k]);
        let mut hi = vec![0.0; n + 1];
        hi[k] = 1.0;
        hi[n] = 1.0;
        lp.add_le(hi, bx.hi[k]);
    }
    for con in &region.constraints {
        let a: Vec<f64> = con.normal.iter().copied().collect();
        if Some(con.neuron) == pinned {
            let mut row = a;
            row.push(0.0);
            lp.add_eq(row, -con.offset);
            continue;
        }
        let s = con.sense.sign();
        let mut row: Vec<f64> = a.iter().map(|v| s * v).collect();
        row.push(-con.normal.norm().max(1.0e-300));
        lp.add_ge(row, -s * con.offset);
    }
    lp.bound(n, f64::NEG_INFINITY, 1.0);
    let mut obj = vec![0.0; n + 1];
    obj[n] = 1.0;
    lp.maximize(obj);
    match lp_solve(&lp).ok()? {
        LpOutcome::Optimal { x, .. } => Some(x[n]),
        _ => None,
    }
}

fn extreme_output(region: &AffineRegion, bx: &HyperCube, maximize: bool) -> Option<f64> {
    let n = bx.dim();
    let mut lp = LinearProgram::new(n);
    for k in 0..n {
        lp.bound(k, bx.lo[k], bx.hi[k]);
    }
    for con in &region.constraints {
        let s = con.sense.sign();
        lp.add_ge(con.normal.iter().map(|v| s * v).collect(), -s * con.offset);
    }
    let c: Vec<f64> = region.output_gradient.iter().copied().collect();
    if maximize {
        lp.maximize(c);
    } else {
        lp.minimize(c);
    }
    match lp_solve(&lp).ok()? {
        LpOutcome::Optimal { x, .. } => Some(region.apply(&x)),
        _ => None,
    }
}

/// Full-dimensional regions of the hyperplane arrangement inside the box,
/// found by walking across facets from the region of the box center.
pub fn regions_by_adjacency(net: &ReluNetwork, bx: &HyperCube) -> Result<Vec<ActivationPattern>> {
    let start = start_pattern(net, bx)?;
    let mut seen = BTreeSet::from([start.clone()]);
    let mut queue = VecDeque::from([start]);
    while let Some(p) = queue.pop_front() {
        let region = net.affine_region(&p)?;
        for id in net.neurons() {
            let next = p.toggled(id);
            if seen.contains(&next) {
                continue;
            }
            if region_margin(&region, bx, Some(id)).is_some_and(|t| t > FACET_MARGIN) {
                seen.insert(next.clone());
                queue.push_back(next);
            }
        }
    }
    Ok(seen.into_iter().collect())
}

fn start_pattern(net: &ReluNetwork, bx: &HyperCube) -> Result<ActivationPattern> {
    let c = bx.center();
    let n = c.len();
    for k in 0..64u32 {
        // deterministic low-discrepancy offsets around the center
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let phi = ((k + 1) as f64 * (0.618_033_988_749_895 + i as f64 * 0.414_213_562)).fract();
                c[i] + (phi - 0.5) * (bx.hi[i] - bx.lo[i]) * 0.5 * (k.min(1) as f64)
            })
            .collect();
        let (p, t) = net.activation_pattern(&x, 1e-9)?;
        if t.is_empty() {
            return Ok(p);
        }
    }
    Ok(net.activation_pattern(&c, 1e-9)?.0)
}

/// Regions from the adjacency walk on which `b` takes both signs (or
/// vanishes identically).
pub fn boundary_regions_by_adjacency(net: &ReluNetwork, bx: &HyperCube) -> Result<Vec<ActivationPattern>> {
    let mut out = Vec::new();
    for p in regions_by_adjacency(net, bx)? {
        let region = net.affine_region(&p)?;
        let identically_zero = region.output_gradient.amax() == 0.0 && region.output_offset == 0.0;
        let lo = extreme_output(&region, bx, false);
        let hi = extreme_output(&region, bx, true);
        let straddles = matches!((lo, hi), (Some(l), Some(h)) if l < -SIGN_MARGIN && h > SIGN_MARGIN);
        if identically_zero || straddles {
            out.push(p);
        }
    }
    Ok(out)
}
