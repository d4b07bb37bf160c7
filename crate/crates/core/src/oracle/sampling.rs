use crate::boundprop::HyperCube;
use crate::network::{ActivationPattern, ReluNetwork};
use crate::Result;

/// Smallest pre-activation magnitude for a root to count as a generic point.
const GENERIC_MARGIN: f64 = 1e-7;

/// Roots of `b` located by bisection on sign changes along axis-parallel
/// lines of a 2-D box. Returns the root and its pattern, skipping roots that
/// sit within `GENERIC_MARGIN` of a neuron hyperplane.
pub fn boundary_samples(
    net: &ReluNetwork,
    bx: &HyperCube,
    lines: usize,
    per_line: usize,
) -> Result<Vec<(Vec<f64>, ActivationPattern)>> {
    assert_eq!(bx.dim(), 2, "line sampling is defined for planar boxes");
    let mut out = Vec::new();
    for axis in 0..2 {
        let other = 1 - axis;
        for l in 0..lines {
            let fixed = bx.lo[other] + (bx.hi[other] - bx.lo[other]) * (l as f64 + 0.5) / lines as f64;
            let point = |s: f64| {
                let mut x = vec![0.0; 2];
                x[axis] = s;
                x[other] = fixed;
                x
            };
            let step = (bx.hi[axis] - bx.lo[axis]) / (per_line - 1) as f64;
            let mut prev_s = bx.lo[axis];
            let mut prev_v = net.evaluate(&point(prev_s))?;
            for i in 1..per_line {
                let s = bx.lo[axis] + step * i as f64;
                let v = net.evaluate(&point(s))?;
                if prev_v == 0.0 || prev_v * v < 0.0 {
                    let root = if prev_v == 0.0 {
                        prev_s
                    } else {
                        bisect(net, &point, prev_s, s, prev_v)?
                    };
                    let x = point(root);
                    let pre = net.pre_activations(&x)?;
                    if pre.iter().flat_map(|p| p.iter()).all(|v| v.abs() > GENERIC_MARGIN) {
                        let (p, _) = net.activation_pattern(&x, 0.0)?;
                        out.push((x, p));
                    }
                }
                prev_s = s;
                prev_v = v;
            }
        }
    }
    Ok(out)
}

fn bisect(net: &ReluNetwork, point: &dyn Fn(f64) -> Vec<f64>, mut a: f64, mut b: f64, va: f64) -> Result<f64> {
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let vm = net.evaluate(&point(m))?;
        if vm == 0.0 {
            return Ok(m);
        }
        if (vm < 0.0) == (va < 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}
