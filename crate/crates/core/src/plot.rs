//! SVG drawings of the zero-level set of a network on a planar slice.

use std::fmt::Write as _;

use crate::dynamics::SafetyProblem;
use crate::network::ReluNetwork;
use crate::{Error, Result};

/// A planar window through the state space: two free axes, every other
/// coordinate held at `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct Slice {
    pub axes: [usize; 2],
    pub base: Vec<f64>,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Slice {
    /// Window over `bounds` with the coordinates in `fixed` pinned. Exactly
    /// two coordinates must remain free.
    pub fn new(bounds: &[(f64, f64)], fixed: &[(usize, f64)]) -> Result<Self> {
        let n = bounds.len();
        let mut base: Vec<f64> = bounds.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect();
        let mut free = vec![true; n];
        for &(k, v) in fixed {
            if k >= n {
                return Err(Error::Precondition(format!("slice coordinate {} is out of range", k + 1)));
            }
            base[k] = v;
            free[k] = false;
        }
        let axes: Vec<usize> = (0..n).filter(|&k| free[k]).collect();
        if axes.len() != 2 {
            return Err(Error::Precondition(format!(
                "plotting supports n = 2 and 2-D slices only; {} coordinates remain free (fix the others with --slice dim=val)",
                axes.len()
            )));
        }
        Ok(Self {
            axes: [axes[0], axes[1]],
            base,
            lo: [bounds[axes[0]].0, bounds[axes[1]].0],
            hi: [bounds[axes[0]].1, bounds[axes[1]].1],
        })
    }

    pub fn point(&self, u: f64, v: f64) -> Vec<f64> {
        let mut x = self.base.clone();
        x[self.axes[0]] = u;
        x[self.axes[1]] = v;
        x
    }
}

pub type Segment = [[f64; 2]; 2];

/// Marching squares on a `res × res` grid of cells: segments of
/// `{value = level}` with endpoints interpolated along cell edges. Saddle
/// cells are resolved by the cell-center value.
pub fn level_segments(value: impl Fn(f64, f64) -> f64, slice: &Slice, res: usize, level: f64) -> Vec<Segment> {
    let xs: Vec<f64> = (0..=res)
        .map(|i| slice.lo[0] + (slice.hi[0] - slice.lo[0]) * i as f64 / res as f64)
        .collect();
    let ys: Vec<f64> = (0..=res)
        .map(|j| slice.lo[1] + (slice.hi[1] - slice.lo[1]) * j as f64 / res as f64)
        .collect();
    let grid: Vec<Vec<f64>> = ys
        .iter()
        .map(|&y| xs.iter().map(|&x| value(x, y) - level).collect())
        .collect();
    let mut out = Vec::new();
    for j in 0..res {
        for i in 0..res {
            // corners counter-clockwise from bottom-left
            let c = [
                ([xs[i], ys[j]], grid[j][i]),
                ([xs[i + 1], ys[j]], grid[j][i + 1]),
                ([xs[i + 1], ys[j + 1]], grid[j + 1][i + 1]),
                ([xs[i], ys[j + 1]], grid[j + 1][i]),
            ];
            let cross = |a: usize, b: usize| -> Option<[f64; 2]> {
                let ((pa, va), (pb, vb)) = (c[a], c[b]);
                if (va >= 0.0) == (vb >= 0.0) {
                    return None;
                }
                let t = va / (va - vb);
                Some([pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])])
            };
            let pts: Vec<[f64; 2]> = (0..4).filter_map(|e| cross(e, (e + 1) % 4)).collect();
            match pts.len() {
                2 => out.push([pts[0], pts[1]]),
                4 => {
                    let center = value(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])) - level;
                    // Edges are 0:bottom 1:right 2:top 3:left; pair them so
                    // the center's sign region stays connected.
                    if (center >= 0.0) == (c[0].1 >= 0.0) {
                        out.push([pts[0], pts[1]]);
                        out.push([pts[2], pts[3]]);
                    } else {
                        out.push([pts[3], pts[0]]);
                        out.push([pts[1], pts[2]]);
                    }
                }
                _ => {}
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlotOptions {
    /// Cells per axis for contouring and shading.
    pub resolution: usize,
    /// Draw the `±band` level sets as well.
    pub band: Option<f64>,
    pub width_px: f64,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self {
            resolution: 200,
            band: Some(0.05),
            width_px: 600.0,
        }
    }
}

struct Canvas {
    slice: Slice,
    w: f64,
    h: f64,
}

impl Canvas {
    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        let sx = (p[0] - self.slice.lo[0]) / (self.slice.hi[0] - self.slice.lo[0]) * self.w;
        let sy = (self.slice.hi[1] - p[1]) / (self.slice.hi[1] - self.slice.lo[1]) * self.h;
        (sx, sy)
    }

    fn path(&self, segs: &[Segment]) -> String {
        let mut d = String::new();
        for s in segs {
            let (x0, y0) = self.px(s[0]);
            let (x1, y1) = self.px(s[1]);
            let _ = write!(d, "M{x0:.2} {y0:.2}L{x1:.2} {y1:.2}");
        }
        d
    }
}

/// Renders the zero-level set of `net` on `slice`, shading `{b ≥ 0}` and,
/// when a problem is given, the unsafe set `{h < 0}`. An optional
/// trajectory is drawn by its projection onto the slice axes.
pub fn render_svg(
    net: &ReluNetwork,
    prob: Option<&SafetyProblem>,
    slice: &Slice,
    trajectory: Option<&[Vec<f64>]>,
    opts: &PlotOptions,
) -> Result<String> {
    if slice.base.len() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: slice.base.len(),
        });
    }
    if opts.resolution == 0 {
        return Err(Error::Precondition("plot resolution must be positive".into()));
    }
    let aspect = (slice.hi[1] - slice.lo[1]) / (slice.hi[0] - slice.lo[0]);
    let canvas = Canvas {
        slice: slice.clone(),
        w: opts.width_px,
        h: (opts.width_px * aspect).round(),
    };
    let b = |u: f64, v: f64| net.evaluate(&slice.point(u, v)).unwrap_or(f64::NAN);
    let res = opts.resolution;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = canvas.w,
        h = canvas.h
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);

    // Shading in horizontal runs of equal class: 0 none, 1 barrier set, 2 unsafe.
    let du = (slice.hi[0] - slice.lo[0]) / res as f64;
    let dv = (slice.hi[1] - slice.lo[1]) / res as f64;
    let _ = writeln!(svg, "<g stroke=\"none\">");
    for j in 0..res {
        let v = slice.lo[1] + (j as f64 + 0.5) * dv;
        let class = |i: usize| {
            let u = slice.lo[0] + (i as f64 + 0.5) * du;
            let x = slice.point(u, v);
            if prob.is_some_and(|p| p.eval_h(&x).is_ok_and(|h| h < 0.0)) {
                2
            } else if b(u, v) >= 0.0 {
                1
            } else {
                0
            }
        };
        let mut i = 0;
        while i < res {
            let k = class(i);
            let mut end = i + 1;
            while end < res && class(end) == k {
                end += 1;
            }
            if k != 0 {
                let (x0, y0) = canvas.px([slice.lo[0] + i as f64 * du, slice.lo[1] + (j + 1) as f64 * dv]);
                let (x1, y1) = canvas.px([slice.lo[0] + end as f64 * du, slice.lo[1] + j as f64 * dv]);
                let fill = if k == 2 { "#f4c7c3" } else { "#d6e6f5" };
                let _ = writeln!(
                    svg,
                    r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                    x1 - x0,
                    y1 - y0
                );
            }
            i = end;
        }
    }
    let _ = writeln!(svg, "</g>");

    if let Some(band) = opts.band {
        for level in [-band, band] {
            let d = canvas.path(&level_segments(b, slice, res, level));
            if !d.is_empty() {
                let _ = writeln!(
                    svg,
                    r##"<path d="{d}" fill="none" stroke="#7aa6d6" stroke-width="1" stroke-dasharray="4 3"/>"##
                );
            }
        }
    }
    let d = canvas.path(&level_segments(b, slice, res, 0.0));
    if !d.is_empty() {
        let _ = writeln!(svg, r##"<path d="{d}" fill="none" stroke="#1f4fd1" stroke-width="2"/>"##);
    }
    if let Some(states) = trajectory {
        let mut pts = String::new();
        for x in states {
            let (px, py) = canvas.px([x[slice.axes[0]], x[slice.axes[1]]]);
            let _ = write!(pts, "{px:.2},{py:.2} ");
        }
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="#222222" stroke-width="1.5"/>"##,
            pts.trim_end()
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::builtin_network;

    fn square() -> Slice {
        Slice::new(&[(-2.0, 2.0), (-2.0, 2.0)], &[]).unwrap()
    }

    #[test]
    fn diamond_contour_is_close_to_the_exact_curve() {
        let net = builtin_network("l1_diamond").unwrap();
        let grid = 16;
        let segs = level_segments(|u, v| net.evaluate(&[u, v]).unwrap(), &square(), grid, 0.0);
        assert!(!segs.is_empty());
        let tol = 2.0 / grid as f64;
        // Contour points lie near |x1| + |x2| = 1.
        for s in &segs {
            for p in s {
                assert!(((p[0].abs() + p[1].abs()) - 1.0).abs() / 2f64.sqrt() <= tol);
            }
        }
        // Exact curve points lie near the contour.
        for k in 0..400 {
            let t = k as f64 / 400.0 * std::f64::consts::TAU;
            let (c, s) = (t.cos(), t.sin());
            let r = 1.0 / (c.abs() + s.abs());
            let q = [r * c, r * s];
            let d = segs
                .iter()
                .map(|sg| point_segment_distance(q, sg))
                .fold(f64::INFINITY, f64::min);
            assert!(d <= tol, "{q:?} is {d} away");
        }
    }

    fn point_segment_distance(q: [f64; 2], s: &Segment) -> f64 {
        let (a, b) = (s[0], s[1]);
        let ab = [b[0] - a[0], b[1] - a[1]];
        let len2 = ab[0] * ab[0] + ab[1] * ab[1];
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((q[0] - a[0]) * ab[0] + (q[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
        };
        ((q[0] - a[0] - t * ab[0]).powi(2) + (q[1] - a[1] - t * ab[1]).powi(2)).sqrt()
    }

    #[test]
    fn svg_is_deterministic_and_shaded() {
        let net = builtin_network("l1_diamond").unwrap();
        let opts = PlotOptions {
            resolution: 40,
            ..PlotOptions::default()
        };
        let a = render_svg(&net, None, &square(), None, &opts).unwrap();
        let b = render_svg(&net, None, &square(), None, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert!(a.contains("#1f4fd1") && a.contains("#d6e6f5") && a.contains("stroke-dasharray"));
    }

    #[test]
    fn empty_boundary_draws_shading_only() {
        let base = builtin_network("l1_diamond").unwrap();
        let net = ReluNetwork::new(2, base.layers().to_vec(), base.output_weights().clone(), 10.0).unwrap();
        let svg = render_svg(&net, None, &square(), None, &PlotOptions::default()).unwrap();
        assert!(!svg.contains("<path"));
        assert!(svg.contains("#d6e6f5"));
    }

    #[test]
    fn slices() {
        let bounds = [(-2.0, 2.0), (-1.0, 1.0), (-3.0, 3.0)];
        assert!(matches!(Slice::new(&bounds, &[]), Err(Error::Precondition(_))));
        let s = Slice::new(&bounds, &[(2, -0.5)]).unwrap();
        assert_eq!(s.axes, [0, 1]);
        assert_eq!(s.point(1.0, 0.5), vec![1.0, 0.5, -0.5]);
        assert_eq!((s.lo, s.hi), ([-2.0, -1.0], [2.0, 1.0]));
        assert!(Slice::new(&bounds, &[(5, 0.0)]).is_err());
    }
}
