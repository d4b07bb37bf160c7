use super::{parse, SafetyProblem};
use crate::{Error, Result};

pub const BUILTIN_SYSTEMS: &[&str] = &[
    "darboux",
    "obstacle",
    "spacecraft",
    "hiord8",
    "example32",
    "contraction",
];

const DARBOUX: &str = "\
# Darboux polynomial system, open loop
states 2
inputs 0
box 1 -2 2
box 2 -2 2
initial 1 0 1
initial 2 1 2
f1 = x2 + 2*x1*x2
f2 = -x1 + 2*x1^2 - x2^2
h = x1 + x2^2
";

const OBSTACLE: &str = "\
# Dubins-style vehicle at unit speed steering around a disc of radius 0.2
states 3
inputs 1
names x1 x2 psi
box 1 -2 2
box 2 -2 2
box 3 -2 2
f1 = sin(psi)
f2 = cos(psi)
f3 = 0
g31 = 1
h = x1^2 + x2^2 - 0.04
unbounded_inputs
";

// Mean motion n = sqrt(mu / a^3) with mu = 3.986e14 and a = 500e3:
// 3n^2 = 0.0095664, n^2 = 0.0031888, 2n = 0.11293892154611712.
const SPACECRAFT: &str = "\
# Linearized relative orbital motion; keep 0.25 <= |p| <= 1.5
states 6
inputs 3
names px py pz vx vy vz
box 1 -1.5 1.5
box 2 -1.5 1.5
box 3 -1.5 1.5
box 4 -1.5 1.5
box 5 -1.5 1.5
box 6 -1.5 1.5
f1 = vx
f2 = vy
f3 = vz
f4 = 0.0095664*px + 0.11293892154611712*vy
f5 = -0.11293892154611712*vx
f6 = -0.0031888*pz
g41 = 1
g52 = 1
g63 = 1
h = 0.625 - abs(sqrt(px^2 + py^2 + pz^2) - 0.875)
unbounded_inputs
";

const HIORD8: &str = "\
# Eighth-order linear ODE in companion form
states 8
inputs 0
box 1 -2 2
box 2 -2 2
box 3 -2 2
box 4 -2 2
box 5 -2 2
box 6 -2 2
box 7 -2 2
box 8 -2 2
f1 = x2
f2 = x3
f3 = x4
f4 = x5
f5 = x6
f6 = x7
f7 = x8
f8 = -(20*x8 + 170*x7 + 800*x6 + 2273*x5 + 3980*x4 + 4180*x3 + 2400*x2 + 576*x1)
h = (x1 + 2)^2 + (x2 + 2)^2 + (x3 + 2)^2 + (x4 + 2)^2 + (x5 + 2)^2 + (x6 + 2)^2 + (x7 + 2)^2 + (x8 + 2)^2 - 0.16
";

const EXAMPLE32: &str = "\
# Planar linear system with one unbounded input
states 2
inputs 1
box 1 -2 2
box 2 -2 2
f1 = x1
f2 = -x1 + 5*x2
g11 = 1
h = 9 - x1^2 - x2^2
unbounded_inputs
";

const CONTRACTION: &str = "\
# Stable contraction toward the origin, open loop
states 2
inputs 0
box 1 -2 2
box 2 -2 2
f1 = -x1
f2 = -x2
h = 9 - x1^2 - x2^2
";

/// Source text of a builtin system.
pub fn builtin_source(name: &str) -> Result<&'static str> {
    Ok(match name {
        "darboux" => DARBOUX,
        "obstacle" => OBSTACLE,
        "spacecraft" => SPACECRAFT,
        "hiord8" => HIORD8,
        "example32" => EXAMPLE32,
        "contraction" => CONTRACTION,
        other => return Err(Error::UnknownBuiltin(other.to_string())),
    })
}

pub fn builtin(name: &str) -> Result<SafetyProblem> {
    parse(builtin_source(name)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn darboux() {
        let p = builtin("darboux").unwrap();
        assert_eq!((p.n, p.m), (2, 0));
        assert_eq!(p.eval_f(&[1.0, 1.0]).unwrap().as_slice(), &[3.0, 0.0]);
        assert_eq!(p.eval_h(&[-1.0, 0.5]).unwrap(), -0.75);
        assert_eq!(p.initial_set, Some(vec![(0.0, 1.0), (1.0, 2.0)]));
    }

    #[test]
    fn obstacle() {
        let p = builtin("obstacle").unwrap();
        assert_eq!(p.eval_f(&[0.0, 0.0, 0.0]).unwrap().as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(p.eval_g(&[0.0, 0.0, 0.0]).unwrap().as_slice(), &[0.0, 0.0, 1.0]);
        assert!(p.unbounded_input);
    }

    #[test]
    fn spacecraft() {
        let p = builtin("spacecraft").unwrap();
        let g = p.constant_g().unwrap();
        assert_eq!(g.shape(), (6, 3));
        for i in 0..6 {
            for j in 0..3 {
                assert_eq!(g[(i, j)], if i == j + 3 { 1.0 } else { 0.0 });
            }
        }
        let (a, _) = p.affine_f().unwrap();
        let n = (3.986e14f64 / 500e3f64.powi(3)).sqrt();
        assert!((a[(3, 0)] - 3.0 * n * n).abs() < 1e-12);
        assert!((a[(3, 4)] - 2.0 * n).abs() < 1e-12);
        assert!((a[(4, 3)] + 2.0 * n).abs() < 1e-12);
        assert!((a[(5, 2)] + n * n).abs() < 1e-12);
        assert_eq!(a[(0, 3)], 1.0);
        // h is min(r - 0.25, 1.5 - r)
        for r in [0.1, 0.25, 0.5, 0.875, 1.2, 1.5, 2.0] {
            let h = p.eval_h(&[r, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
            assert!((h - (r - 0.25f64).min(1.5 - r)).abs() < 1e-15);
        }
    }

    #[test]
    fn hiord8() {
        let p = builtin("hiord8").unwrap();
        assert_eq!((p.n, p.m), (8, 0));
        let f = p.eval_f(&[1.0; 8]).unwrap();
        assert_eq!(f[7], -(20.0 + 170.0 + 800.0 + 2273.0 + 3980.0 + 4180.0 + 2400.0 + 576.0));
        assert_eq!(f[0], 1.0);
        assert!((p.eval_h(&[-2.0; 8]).unwrap() + 0.16).abs() < 1e-15);
    }

    #[test]
    fn example32_and_contraction() {
        let p = builtin("example32").unwrap();
        assert_eq!(p.eval_f(&[0.3, 0.2]).unwrap().as_slice(), &[0.3, 0.7]);
        assert_eq!(p.m, 1);
        let c = builtin("contraction").unwrap();
        assert_eq!(c.eval_f(&[0.5, -1.0]).unwrap().as_slice(), &[-0.5, 1.0]);
        assert!(builtin("nope").is_err());
    }
}
