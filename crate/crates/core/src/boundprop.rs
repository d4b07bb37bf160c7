//! Interval and linear-relaxation bounds of the network over hyper-cubes, and
//! detection of grid cells that may meet the zero level set.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Expr;
use crate::interval::Interval;
use crate::network::{NeuronId, ReluNetwork, UnstableSet};
use crate::{Error, Result};

/// Relative slack added to floating-point linear-relaxation bounds.
const RELAX_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperCube {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl HyperCube {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if lo.is_empty() || lo.iter().zip(&hi).any(|(l, h)| !(l <= h) || !l.is_finite() || !h.is_finite()) {
            return Err(Error::Domain("cube bounds must be finite with lo <= hi".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn point(x: &[f64]) -> Self {
        Self {
            lo: x.to_vec(),
            hi: x.to_vec(),
        }
    }

    pub fn from_intervals(ivs: &[Interval]) -> Self {
        Self {
            lo: ivs.iter().map(|i| i.lo).collect(),
            hi: ivs.iter().map(|i| i.hi).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn intervals(&self) -> Vec<Interval> {
        self.lo.iter().zip(&self.hi).map(|(&l, &h)| Interval::new(l, h)).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= l - tol && *v <= h + tol)
    }

    /// Halves along the widest axis.
    pub fn bisect(&self) -> (HyperCube, HyperCube) {
        let k = (0..self.dim())
            .max_by(|&a, &b| {
                (self.hi[a] - self.lo[a])
                    .partial_cmp(&(self.hi[b] - self.lo[b]))
                    .unwrap()
                    .then(b.cmp(&a))
            })
            .unwrap();
        let mid = 0.5 * (self.lo[k] + self.hi[k]);
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[k] = mid;
        right.lo[k] = mid;
        (left, right)
    }
}

/// Sound enclosure `[b_lo, b_hi]` of the network output over a cube.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputBounds {
    pub lo: f64,
    pub hi: f64,
}

impl OutputBounds {
    /// `sgn(b_lo)·sgn(b_hi) ≤ 0`.
    pub fn straddles_zero(&self) -> bool {
        self.lo <= 0.0 && self.hi >= 0.0
    }

    pub fn interval(&self) -> Interval {
        Interval::new(self.lo, self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Pre-activation enclosures of every hidden neuron over a cube.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuronBounds {
    pub layers: Vec<Vec<Interval>>,
}

impl NeuronBounds {
    pub fn get(&self, id: NeuronId) -> Interval {
        self.layers[id.layer][id.index]
    }

    /// Neurons with `lo < -zero_tol` and `hi > zero_tol`.
    pub fn unstable(&self, zero_tol: f64) -> UnstableSet {
        self.select(|iv| iv.lo < -zero_tol && iv.hi > zero_tol)
    }

    /// Neurons whose pre-activation may come within `zero_tol` of zero.
    pub fn zero_reachable(&self, zero_tol: f64) -> UnstableSet {
        self.select(|iv| iv.lo <= zero_tol && iv.hi >= -zero_tol)
    }

    fn select(&self, pred: impl Fn(&Interval) -> bool) -> UnstableSet {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                l.iter()
                    .enumerate()
                    .filter(|(_, iv)| pred(iv))
                    .map(move |(j, _)| NeuronId::new(i, j))
            })
            .collect()
    }
}

fn check_cube(net: &ReluNetwork, cube: &HyperCube) -> Result<()> {
    if cube.dim() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            got: cube.dim(),
        });
    }
    Ok(())
}

/// Interval image of one affine layer applied to post-activation enclosures.
/// Widens an affine enclosure so it also contains the floating-point
/// evaluation of the same dot product, in any summation order.
fn cover_evaluation(iv: Interval, bias: f64, terms: impl Iterator<Item = (f64, Interval)>) -> Interval {
    let mut mag = bias.abs();
    let mut k = 1.0;
    for (w, z) in terms {
        mag += w.abs() * z.lo.abs().max(z.hi.abs());
        k += 1.0;
    }
    let u = f64::EPSILON / 2.0;
    let slack = 2.0 * k * u / (1.0 - k * u) * mag;
    Interval::new(iv.lo - slack, iv.hi + slack)
}

fn ibp_layer(net: &ReluNetwork, layer: usize, z: &[Interval]) -> Vec<Interval> {
    let l = &net.layers()[layer];
    (0..l.bias.len())
        .map(|j| {
            let iv = z.iter().enumerate().fold(Interval::point(l.bias[j]), |acc, (k, zk)| {
                acc + Interval::point(l.weights[(k, j)]) * *zk
            });
            cover_evaluation(iv, l.bias[j], z.iter().enumerate().map(|(k, zk)| (l.weights[(k, j)], *zk)))
        })
        .collect()
}

fn ibp_output(net: &ReluNetwork, z: &[Interval]) -> Interval {
    let w = net.output_weights();
    let iv = z
        .iter()
        .enumerate()
        .fold(Interval::point(net.output_bias()), |acc, (k, zk)| acc + Interval::point(w[k]) * *zk);
    cover_evaluation(iv, net.output_bias(), z.iter().enumerate().map(|(k, zk)| (w[k], *zk)))
}

/// Layer-by-layer interval propagation with outward rounding. The bounds
/// enclose both the exact output and its floating-point evaluation.
pub fn ibp_bounds(net: &ReluNetwork, cube: &HyperCube) -> Result<(OutputBounds, NeuronBounds)> {
    check_cube(net, cube)?;
    let mut z = cube.intervals();
    let mut layers = Vec::with_capacity(net.num_layers());
    for i in 0..net.num_layers() {
        let pre = ibp_layer(net, i, &z);
        z = pre.iter().map(|iv| iv.relu()).collect();
        layers.push(pre);
    }
    let y = ibp_output(net, &z);
    Ok((OutputBounds { lo: y.lo, hi: y.hi }, NeuronBounds { layers }))
}

/// Lower bound of `cᵀ z_t + d` over the cube, where `z_0 = x` and
/// `z_t = relu(pre_{t-1})`, using the per-neuron linear ReLU relaxation
/// given the enclosures of `pre_0 .. pre_{t-1}`.
fn backward_lower(
    net: &ReluNetwork,
    cube: &HyperCube,
    pre: &[Vec<Interval>],
    mut c: Vec<f64>,
    mut d: f64,
    t: usize,
) -> f64 {
    let mut mag = d.abs();
    for s in (0..t).rev() {
        // Relax z_{s+1} = relu(pre_s) into a bound linear in pre_s.
        let mut cp = vec![0.0; c.len()];
        for (j, &cj) in c.iter().enumerate() {
            let Interval { lo: l, hi: u } = pre[s][j];
            if cj == 0.0 || u <= 0.0 {
                continue;
            }
            if l >= 0.0 {
                cp[j] = cj;
            } else if cj > 0.0 {
                if u >= -l {
                    cp[j] = cj;
                }
            } else {
                let slope = u / (u - l);
                cp[j] = cj * slope;
                d -= cj * slope * l;
            }
        }
        let layer = &net.layers()[s];
        d += cp.iter().zip(layer.bias.iter()).map(|(a, b)| a * b).sum::<f64>();
        mag += cp.iter().zip(layer.bias.iter()).map(|(a, b)| (a * b).abs()).sum::<f64>();
        c = (0..layer.weights.nrows())
            .map(|k| (0..cp.len()).map(|j| layer.weights[(k, j)] * cp[j]).sum())
            .collect();
    }
    let mut v = d;
    for (k, &ck) in c.iter().enumerate() {
        let x = if ck >= 0.0 { cube.lo[k] } else { cube.hi[k] };
        v += ck * x;
        mag += (ck * x).abs();
    }
    v - RELAX_SLACK * (1.0 + mag)
}

fn backward_interval(
    net: &ReluNetwork,
    cube: &HyperCube,
    pre: &[Vec<Interval>],
    c: &[f64],
    d: f64,
    t: usize,
) -> Interval {
    let lo = backward_lower(net, cube, pre, c.to_vec(), d, t);
    let neg: Vec<f64> = c.iter().map(|v| -v).collect();
    let hi = -backward_lower(net, cube, pre, neg, -d, t);
    Interval::new(lo.min(hi), hi.max(lo))
}

fn tighten(ibp: Interval, relaxed: Interval) -> Interval {
    ibp.intersect(&relaxed).unwrap_or(ibp)
}

/// CROWN-style bounds: every layer's enclosure is the intersection of an
/// interval step and a backward linear-relaxation pass. Returns the output
/// bounds together with the tightened per-neuron enclosures.
pub fn relaxed_bounds(net: &ReluNetwork, cube: &HyperCube) -> Result<(OutputBounds, NeuronBounds)> {
    check_cube(net, cube)?;
    let mut pre: Vec<Vec<Interval>> = Vec::with_capacity(net.num_layers());
    let mut z = cube.intervals();
    for i in 0..net.num_layers() {
        let ibp = ibp_layer(net, i, &z);
        let layer = &net.layers()[i];
        let bounds: Vec<Interval> = (0..layer.bias.len())
            .map(|j| {
                let c: Vec<f64> = layer.weights.column(j).iter().copied().collect();
                tighten(ibp[j], backward_interval(net, cube, &pre, &c, layer.bias[j], i))
            })
            .collect();
        z = bounds.iter().map(|iv| iv.relu()).collect();
        pre.push(bounds);
    }
    let ibp = ibp_output(net, &z);
    let c: Vec<f64> = net.output_weights().iter().copied().collect();
    let y = tighten(ibp, backward_interval(net, cube, &pre, &c, net.output_bias(), net.num_layers()));
    Ok((OutputBounds { lo: y.lo, hi: y.hi }, NeuronBounds { layers: pre }))
}

pub fn linear_relaxation_bounds(net: &ReluNetwork, cube: &HyperCube) -> Result<OutputBounds> {
    Ok(relaxed_bounds(net, cube)?.0)
}

/// One cell of the uniform grid over the state box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub index: Vec<usize>,
    pub cube: HyperCube,
    pub bounds: OutputBounds,
}

/// Cube of the cell with grid index `index`.
pub fn grid_cube(state_box: &HyperCube, grid: usize, index: &[usize]) -> HyperCube {
    let coord = |k: usize, i: usize| {
        if i == grid {
            state_box.hi[k]
        } else {
            state_box.lo[k] + (state_box.hi[k] - state_box.lo[k]) * i as f64 / grid as f64
        }
    };
    HyperCube {
        lo: index.iter().enumerate().map(|(k, &i)| coord(k, i)).collect(),
        hi: index.iter().enumerate().map(|(k, &i)| coord(k, i + 1)).collect(),
    }
}

/// Cells of the `grid^n` uniform grid whose relaxed bounds straddle zero,
/// sorted by grid index. Blocks of cells are bounded first and discarded
/// whole when their bounds exclude zero; a cell's bounds are intersected
/// with those of every block that encloses it.
pub fn boundary_cells(net: &ReluNetwork, state_box: &HyperCube, grid: usize) -> Result<Vec<GridCell>> {
    check_cube(net, state_box)?;
    if grid == 0 {
        return Err(Error::Precondition("grid_per_axis must be at least 1".into()));
    }
    let n = state_box.dim();
    let root: Vec<(usize, usize)> = vec![(0, grid); n];
    let parent = OutputBounds {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };
    let mut cells = block_cells(net, state_box, grid, root, parent)?;
    cells.sort_by(|a, b| a.index.cmp(&b.index));
    Ok(cells)
}

fn block_cells(
    net: &ReluNetwork,
    state_box: &HyperCube,
    grid: usize,
    ranges: Vec<(usize, usize)>,
    parent: OutputBounds,
) -> Result<Vec<GridCell>> {
    let lo_idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    let lo = grid_cube(state_box, grid, &lo_idx).lo;
    let hi_idx: Vec<usize> = ranges.iter().map(|r| r.1 - 1).collect();
    let hi = grid_cube(state_box, grid, &hi_idx).hi;
    let cube = HyperCube { lo, hi };
    let own = linear_relaxation_bounds(net, &cube)?;
    let bounds = OutputBounds {
        lo: own.lo.max(parent.lo),
        hi: own.hi.min(parent.hi),
    };
    if !bounds.straddles_zero() {
        return Ok(Vec::new());
    }
    let Some(k) = (0..ranges.len())
        .filter(|&k| ranges[k].1 - ranges[k].0 > 1)
        .max_by_key(|&k| (ranges[k].1 - ranges[k].0, std::cmp::Reverse(k)))
    else {
        return Ok(vec![GridCell {
            index: lo_idx,
            cube,
            bounds,
        }]);
    };
    let mid = (ranges[k].0 + ranges[k].1) / 2;
    let mut left = ranges.clone();
    let mut right = ranges;
    left[k].1 = mid;
    right[k].0 = mid;
    let (a, b) = rayon::join(
        || block_cells(net, state_box, grid, left, bounds),
        || block_cells(net, state_box, grid, right, bounds),
    );
    let mut out = a?;
    out.extend(b?);
    Ok(out)
}

/// Natural interval extension of `expr` over `cube`.
pub fn interval_eval(expr: &Expr, cube: &HyperCube) -> Result<Interval> {
    expr.eval_interval(&cube.intervals())
}

/// Output bounds of many cubes in parallel, in input order.
pub fn bounds_many(net: &ReluNetwork, cubes: &[HyperCube]) -> Result<Vec<OutputBounds>> {
    cubes.par_iter().map(|c| linear_relaxation_bounds(net, c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::builtin_network;
    use crate::oracle::{random_architecture, random_network};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn l1() -> ReluNetwork {
        builtin_network("l1_diamond").unwrap()
    }

    fn cube(lo: &[f64], hi: &[f64]) -> HyperCube {
        HyperCube::new(lo.to_vec(), hi.to_vec()).unwrap()
    }

    /// Dense-sampling range of `b` over a 2-D cube.
    fn sampled_range(net: &ReluNetwork, c: &HyperCube, k: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..k {
            for j in 0..k {
                let x = [
                    c.lo[0] + (c.hi[0] - c.lo[0]) * i as f64 / (k - 1) as f64,
                    c.lo[1] + (c.hi[1] - c.lo[1]) * j as f64 / (k - 1) as f64,
                ];
                let v = net.evaluate(&x).unwrap();
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo, hi)
    }

    #[test]
    fn ibp_on_centered_cube() {
        let (b, _) = ibp_bounds(&l1(), &cube(&[-0.1, -0.1], &[0.1, 0.1])).unwrap();
        assert!((b.lo - 0.6).abs() < 1e-12 && (b.hi - 1.0).abs() < 1e-12, "{b:?}");
    }

    #[test]
    fn ibp_flags_sign_change() {
        let (b, neurons) = ibp_bounds(&l1(), &cube(&[0.9, -0.05], &[1.1, 0.05])).unwrap();
        assert!((b.lo + 0.2).abs() < 1e-12 && (b.hi - 0.1).abs() < 1e-12, "{b:?}");
        assert!(b.straddles_zero());
        let unstable = neurons.unstable(1e-9);
        assert!(unstable.contains(NeuronId::new(0, 2)) && unstable.contains(NeuronId::new(0, 3)));
        assert_eq!(unstable.len(), 2);
    }

    #[test]
    fn degenerate_cube_matches_evaluation() {
        let net = l1();
        let x = [0.3, -0.45];
        let v = net.evaluate(&x).unwrap();
        let (b, _) = ibp_bounds(&net, &HyperCube::point(&x)).unwrap();
        assert!(b.contains(v) && b.hi - b.lo < 1e-12);
        let r = linear_relaxation_bounds(&net, &HyperCube::point(&x)).unwrap();
        assert!(r.contains(v) && r.hi - r.lo < 1e-10);
    }

    #[test]
    fn relaxation_on_centered_cube() {
        let net = l1();
        let c = cube(&[-0.1, -0.1], &[0.1, 0.1]);
        let r = linear_relaxation_bounds(&net, &c).unwrap();
        assert!(r.lo >= 0.6 - 1e-12 && r.hi <= 1.0 + 1e-10, "{r:?}");
        let (slo, shi) = sampled_range(&net, &c, 101);
        assert!(r.lo <= slo && r.hi >= shi);
        assert!(r.lo <= 0.8 && r.hi >= 1.0);
        assert!((r.lo - 0.8).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn relaxation_is_exact_on_stable_cube() {
        let net = l1();
        let c = cube(&[0.2, 0.3], &[0.6, 0.5]);
        let (_, nb) = ibp_bounds(&net, &c).unwrap();
        assert!(nb.unstable(0.0).is_empty());
        let r = linear_relaxation_bounds(&net, &c).unwrap();
        // b = 1 - x1 - x2 on this cube
        assert!((r.lo - (1.0 - 0.6 - 0.5)).abs() < 1e-10);
        assert!((r.hi - (1.0 - 0.2 - 0.3)).abs() < 1e-10);
    }

    #[test]
    fn boundary_cells_cover_diamond() {
        let net = l1();
        let bx = cube(&[-2.0, -2.0], &[2.0, 2.0]);
        let cells = boundary_cells(&net, &bx, 8).unwrap();
        let indices: Vec<Vec<usize>> = cells.iter().map(|c| c.index.clone()).collect();
        let mut sorted = indices.clone();
        sorted.sort();
        assert_eq!(indices, sorted);
        for i in 0..8 {
            for j in 0..8 {
                let c = grid_cube(&bx, 8, &[i, j]);
                let (lo, hi) = sampled_range(&net, &c, 41);
                if lo <= 0.0 && hi >= 0.0 {
                    assert!(indices.contains(&vec![i, j]), "cell {i},{j} missing");
                }
            }
        }
        for cell in &cells {
            assert!(cell.bounds.straddles_zero());
            let own = linear_relaxation_bounds(&net, &cell.cube).unwrap();
            assert!(own.straddles_zero());
        }
    }

    #[test]
    fn boundary_cells_empty_when_positive() {
        let base = l1();
        let net = ReluNetwork::new(2, base.layers().to_vec(), base.output_weights().clone(), 10.0).unwrap();
        let bx = cube(&[-2.0, -2.0], &[2.0, 2.0]);
        assert!(boundary_cells(&net, &bx, 8).unwrap().is_empty());
    }

    #[test]
    fn single_cell_grid() {
        let bx = cube(&[-2.0, -2.0], &[2.0, 2.0]);
        let cells = boundary_cells(&l1(), &bx, 1).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].cube, bx);
        assert!(boundary_cells(&l1(), &bx, 0).is_err());
    }

    #[test]
    fn interval_eval_examples() {
        let prod = Expr::var(0) * Expr::var(1);
        let iv = interval_eval(&prod, &cube(&[0.0, -1.0], &[1.0, 1.0])).unwrap();
        assert_eq!((iv.lo, iv.hi), (-1.0, 1.0));
        let sys = crate::dynamics::builtin("darboux").unwrap();
        let iv = interval_eval(&sys.f[1], &cube(&[0.0, 0.0], &[1.0, 1.0])).unwrap();
        assert!(iv.lo <= -2.0 && iv.hi >= 2.0, "{iv:?}");
        let iv = interval_eval(&Expr::c(5.0), &cube(&[-3.0], &[7.0])).unwrap();
        assert_eq!((iv.lo, iv.hi), (5.0, 5.0));
    }

    fn random_case(seed: u64) -> (ReluNetwork, HyperCube, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, widths) = random_architecture(&mut rng, 16);
        let net = random_network(&mut rng, n, &widths);
        let mut lo = Vec::with_capacity(n);
        let mut hi = Vec::with_capacity(n);
        for _ in 0..n {
            let c: f64 = rng.gen_range(-2.0..2.0);
            let r: f64 = rng.gen_range(0.0..1.0);
            lo.push(c - r);
            hi.push(c + r);
        }
        (net, HyperCube::new(lo, hi).unwrap(), rng)
    }

    fn sample(rng: &mut ChaCha8Rng, c: &HyperCube) -> Vec<f64> {
        c.lo.iter().zip(&c.hi).map(|(l, h)| rng.gen_range(*l..=*h)).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn bounds_are_sound(seed in any::<u64>()) {
            let (net, c, mut rng) = random_case(seed);
            let (ibp, nb) = ibp_bounds(&net, &c).unwrap();
            let (rel, rb) = relaxed_bounds(&net, &c).unwrap();
            for _ in 0..100 {
                let x = sample(&mut rng, &c);
                let v = net.evaluate(&x).unwrap();
                prop_assert!(ibp.contains(v));
                prop_assert!(rel.contains(v));
                let pre = net.pre_activations(&x).unwrap();
                for id in net.neurons() {
                    prop_assert!(nb.get(id).contains(pre[id.layer][id.index]));
                    prop_assert!(rb.get(id).contains(pre[id.layer][id.index]));
                }
            }
        }

        #[test]
        fn relaxation_dominates_ibp(seed in any::<u64>()) {
            let (net, c, _) = random_case(seed);
            let (ibp, _) = ibp_bounds(&net, &c).unwrap();
            let rel = linear_relaxation_bounds(&net, &c).unwrap();
            prop_assert!(ibp.lo <= rel.lo && rel.hi <= ibp.hi);
        }

        #[test]
        fn sign_changes_are_flagged(seed in any::<u64>()) {
            let (net, c, mut rng) = random_case(seed);
            let (_, nb) = ibp_bounds(&net, &c).unwrap();
            let unstable = nb.unstable(0.0);
            let a = net.pre_activations(&sample(&mut rng, &c)).unwrap();
            let b = net.pre_activations(&sample(&mut rng, &c)).unwrap();
            for id in net.neurons() {
                let (u, v) = (a[id.layer][id.index], b[id.layer][id.index]);
                if u * v < 0.0 {
                    prop_assert!(unstable.contains(id));
                }
            }
        }

        #[test]
        fn splitting_never_widens(seed in any::<u64>()) {
            let (net, c, _) = random_case(seed);
            let (parent, _) = ibp_bounds(&net, &c).unwrap();
            let (l, r) = c.bisect();
            let (a, _) = ibp_bounds(&net, &l).unwrap();
            let (b, _) = ibp_bounds(&net, &r).unwrap();
            prop_assert!(parent.lo <= a.lo.min(b.lo) && a.hi.max(b.hi) <= parent.hi);
        }
    }
}
