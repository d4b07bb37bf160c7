//! Enumeration of the activation patterns whose regions meet the zero level
//! set, and of the faces where several such regions meet on it.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::boundprop::{boundary_cells, relaxed_bounds, HyperCube, NeuronBounds};
use crate::feasolver::{lp_solve, LinearProgram, LpOutcome};
use crate::network::{
    affine_region, ActivationPattern, AffineRegion, NeuronId, ReluNetwork, Sense, UnstableSet,
    DEFAULT_ZERO_TOL,
};
use crate::{Error, Result};

/// Normals shorter than this are treated as constant constraints.
const ZERO_NORMAL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct EnumConfig {
    pub grid: usize,
    pub zero_tol: f64,
    /// Largest unstable set expanded in one cell before it is bisected.
    pub unstable_cap: usize,
    /// Bisection depth for cells above the cap.
    pub max_split_depth: usize,
    /// Smallest normalized interior margin accepted as strict membership.
    pub margin_eps: f64,
    /// Largest shared unstable set `|T|` searched for intersections.
    pub max_shared: usize,
}

impl Default for EnumConfig {
    fn default() -> Self {
        Self {
            grid: 16,
            zero_tol: DEFAULT_ZERO_TOL,
            unstable_cap: 22,
            max_split_depth: 6,
            margin_eps: 1e-9,
            max_shared: 22,
        }
    }
}

/// A pattern whose region meets `{b = 0}` in its interior.
#[derive(Clone, Debug, PartialEq)]
pub struct AtlasPattern {
    pub pattern: ActivationPattern,
    pub witness: Vec<f64>,
    pub cells: Vec<Vec<usize>>,
}

/// A face of `{b = 0}` on which exactly the neurons of `shared` vanish. Its
/// patterns are all togglings of `shared` applied to `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct AtlasTuple {
    /// Member pattern with every shared neuron active.
    pub base: ActivationPattern,
    pub shared: Vec<NeuronId>,
    pub witness: Vec<f64>,
    pub cells: Vec<Vec<usize>>,
}

impl AtlasTuple {
    pub fn patterns(&self) -> Vec<ActivationPattern> {
        self.base.togglings(&self.shared)
    }

    pub fn shared_set(&self) -> UnstableSet {
        self.shared.iter().copied().collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BoundaryAtlas {
    /// The set 𝒮, sorted by pattern.
    pub patterns: Vec<AtlasPattern>,
    /// The set 𝒱, sorted by `(base, shared)`.
    pub intersections: Vec<AtlasTuple>,
    /// Sub-cubes left unresolved after bisection.
    pub inconclusive: Vec<HyperCube>,
    /// Patterns kept because an LP failed.
    pub flagged: Vec<ActivationPattern>,
    pub boundary_cells: usize,
}

impl BoundaryAtlas {
    pub fn is_complete(&self) -> bool {
        self.inconclusive.is_empty() && self.flagged.is_empty()
    }
}

/// Pattern with stable neurons fixed by the sign of their enclosure;
/// neurons that can only reach zero from below are taken inactive.
pub fn base_pattern(net: &ReluNetwork, bounds: &NeuronBounds, zero_tol: f64) -> ActivationPattern {
    let mut p = ActivationPattern::all_inactive(&net.widths());
    for id in net.neurons() {
        if bounds.get(id).lo >= -zero_tol {
            p.set(id, true);
        }
    }
    p
}

/// Base pattern expanded over all togglings of the unstable neurons.
pub fn candidate_patterns(
    net: &ReluNetwork,
    bounds: &NeuronBounds,
    zero_tol: f64,
    cap: usize,
) -> Result<Vec<ActivationPattern>> {
    let unstable = bounds.unstable(zero_tol);
    if unstable.len() > cap {
        return Err(Error::TooManyUnstable {
            count: unstable.len(),
            cap,
        });
    }
    let ids: Vec<NeuronId> = unstable.neurons.iter().copied().collect();
    Ok(base_pattern(net, bounds, zero_tol).togglings(&ids))
}

/// Outcome of the closed membership LP for one candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct Survivor {
    pub region: AffineRegion,
    /// `None` when the LP failed and the pattern was kept unverified.
    pub witness: Option<Vec<f64>>,
}

fn region_row(region: &AffineRegion, id: NeuronId) -> (Vec<f64>, f64) {
    let (g, c) = region.neuron_map(id);
    (g.iter().copied().collect(), c)
}

/// Feasibility LP over `x` (and a margin `t` when `margin` is set) for
/// `{b = 0} ∩ cell ∩ region` with the neurons in `pins` at zero. Without a
/// margin every other constraint is closed; with one each holds with slack
/// at least `t·‖normal‖`. Returns `None` when a constant constraint already
/// fails.
fn membership_lp(
    region: &AffineRegion,
    cell: &HyperCube,
    pins: &BTreeSet<NeuronId>,
    margin: bool,
    zero_tol: f64,
) -> Option<LinearProgram> {
    let n = cell.dim();
    let nv = if margin { n + 1 } else { n };
    let mut lp = LinearProgram::new(nv);
    for k in 0..n {
        lp.bound(k, cell.lo[k], cell.hi[k]);
    }
    let pad = |mut v: Vec<f64>| {
        v.resize(nv, 0.0);
        v
    };
    let out: Vec<f64> = region.output_gradient.iter().copied().collect();
    lp.add_eq(pad(out), -region.output_offset);
    for con in &region.constraints {
        let (a, c) = region_row(region, con.neuron);
        let norm = con.normal.norm();
        if pins.contains(&con.neuron) {
            if norm <= ZERO_NORMAL {
                if c.abs() > zero_tol {
                    return None;
                }
            } else {
                lp.add_eq(pad(a), -c);
            }
            continue;
        }
        let active = con.sense == Sense::NonNegative;
        if norm <= ZERO_NORMAL {
            let ok = match (active, margin) {
                (true, _) => c >= -zero_tol,
                (false, false) => c <= zero_tol,
                (false, true) => c < -zero_tol,
            };
            if !ok {
                return None;
            }
            continue;
        }
        let s = con.sense.sign();
        let mut row: Vec<f64> = a.iter().map(|v| s * v).collect();
        if margin {
            row.push(-norm);
        }
        lp.add_ge(row, -s * c);
    }
    if margin {
        lp.bound(n, f64::NEG_INFINITY, 1.0);
        let mut obj = vec![0.0; nv];
        obj[n] = 1.0;
        lp.maximize(obj);
    }
    Some(lp)
}

enum LpVerdict {
    Feasible(Vec<f64>),
    Infeasible,
    Failed,
}

fn closed_feasible(region: &AffineRegion, cell: &HyperCube, pins: &BTreeSet<NeuronId>, tol: f64) -> LpVerdict {
    let Some(lp) = membership_lp(region, cell, pins, false, tol) else {
        return LpVerdict::Infeasible;
    };
    match lp_solve(&lp) {
        Ok(LpOutcome::Optimal { x, .. }) => LpVerdict::Feasible(x),
        Ok(LpOutcome::Infeasible(_)) => LpVerdict::Infeasible,
        Ok(LpOutcome::Unbounded) | Err(_) => LpVerdict::Failed,
    }
}

/// Interior point of `{b = 0} ∩ cell` with margin above `eps` from every
/// non-pinned hyperplane.
fn strict_witness(
    region: &AffineRegion,
    cell: &HyperCube,
    pins: &BTreeSet<NeuronId>,
    cfg: &EnumConfig,
) -> LpVerdict {
    let Some(lp) = membership_lp(region, cell, pins, true, cfg.zero_tol) else {
        return LpVerdict::Infeasible;
    };
    let n = cell.dim();
    match lp_solve(&lp) {
        Ok(LpOutcome::Optimal { x, .. }) if x[n] > cfg.margin_eps => LpVerdict::Feasible(x[..n].to_vec()),
        Ok(LpOutcome::Optimal { .. }) | Ok(LpOutcome::Infeasible(_)) => LpVerdict::Infeasible,
        Ok(LpOutcome::Unbounded) | Err(_) => LpVerdict::Failed,
    }
}

/// Keeps the candidates whose closed region meets `{b = 0}` inside `cell`.
pub fn prune_by_lp(
    net: &ReluNetwork,
    patterns: &[ActivationPattern],
    cell: &HyperCube,
) -> Result<Vec<Survivor>> {
    let none = BTreeSet::new();
    let mut out = Vec::new();
    for p in patterns {
        let region = affine_region(net, p)?;
        match closed_feasible(&region, cell, &none, DEFAULT_ZERO_TOL) {
            LpVerdict::Feasible(x) => out.push(Survivor {
                region,
                witness: Some(x),
            }),
            LpVerdict::Failed => out.push(Survivor { region, witness: None }),
            LpVerdict::Infeasible => {}
        }
    }
    Ok(out)
}

/// Faces `(S, T)` inside `cell`: points on `{b = 0}` where exactly the
/// neurons of `T` vanish. The search grows `T` over the zero-reachable
/// neurons from every closed survivor and prunes as soon as the closed
/// system with `T` pinned becomes infeasible.
pub fn find_intersections(
    net: &ReluNetwork,
    survivors: &[Survivor],
    cell: &HyperCube,
    reachable: &UnstableSet,
    cfg: &EnumConfig,
) -> Result<(Vec<AtlasTuple>, Vec<ActivationPattern>)> {
    let ids: Vec<NeuronId> = reachable.neurons.iter().copied().collect();
    let mut seen: BTreeSet<(ActivationPattern, Vec<NeuronId>)> = BTreeSet::new();
    let mut tuples = Vec::new();
    let mut flagged = Vec::new();
    for s in survivors {
        let mut pins = BTreeSet::new();
        grow(net, s, cell, &ids, 0, &mut pins, cfg, &mut seen, &mut tuples, &mut flagged)?;
    }
    Ok((tuples, flagged))
}

#[allow(clippy::too_many_arguments)]
fn grow(
    net: &ReluNetwork,
    s: &Survivor,
    cell: &HyperCube,
    ids: &[NeuronId],
    start: usize,
    pins: &mut BTreeSet<NeuronId>,
    cfg: &EnumConfig,
    seen: &mut BTreeSet<(ActivationPattern, Vec<NeuronId>)>,
    tuples: &mut Vec<AtlasTuple>,
    flagged: &mut Vec<ActivationPattern>,
) -> Result<()> {
    if pins.len() >= cfg.max_shared {
        return Ok(());
    }
    for i in start..ids.len() {
        let id = ids[i];
        pins.insert(id);
        match closed_feasible(&s.region, cell, pins, cfg.zero_tol) {
            LpVerdict::Infeasible => {}
            verdict => {
                if matches!(verdict, LpVerdict::Failed) {
                    flagged.push(s.region.pattern.clone());
                }
                let mut base = s.region.pattern.clone();
                for &p in pins.iter() {
                    base.set(p, true);
                }
                let shared: Vec<NeuronId> = pins.iter().copied().collect();
                if seen.insert((base.clone(), shared.clone())) {
                    let region = affine_region(net, &base)?;
                    match strict_witness(&region, cell, pins, cfg) {
                        LpVerdict::Feasible(witness) => tuples.push(AtlasTuple {
                            base,
                            shared,
                            witness,
                            cells: Vec::new(),
                        }),
                        LpVerdict::Failed => flagged.push(base),
                        LpVerdict::Infeasible => {}
                    }
                }
                grow(net, s, cell, ids, i + 1, pins, cfg, seen, tuples, flagged)?;
            }
        }
        pins.remove(&id);
    }
    Ok(())
}

#[derive(Debug, Default)]
struct CellResult {
    patterns: Vec<(ActivationPattern, Vec<f64>)>,
    tuples: Vec<AtlasTuple>,
    inconclusive: Vec<HyperCube>,
    flagged: Vec<ActivationPattern>,
}

impl CellResult {
    fn absorb(&mut self, other: CellResult) {
        self.patterns.extend(other.patterns);
        self.tuples.extend(other.tuples);
        self.inconclusive.extend(other.inconclusive);
        self.flagged.extend(other.flagged);
    }
}

fn process_cell(net: &ReluNetwork, cell: &HyperCube, cfg: &EnumConfig, depth: usize) -> Result<CellResult> {
    let (out, bounds) = relaxed_bounds(net, cell)?;
    let mut res = CellResult::default();
    if !out.straddles_zero() {
        return Ok(res);
    }
    let candidates = match candidate_patterns(net, &bounds, cfg.zero_tol, cfg.unstable_cap) {
        Ok(c) => c,
        Err(Error::TooManyUnstable { .. }) => {
            if depth >= cfg.max_split_depth {
                res.inconclusive.push(cell.clone());
                return Ok(res);
            }
            let (a, b) = cell.bisect();
            res.absorb(process_cell(net, &a, cfg, depth + 1)?);
            res.absorb(process_cell(net, &b, cfg, depth + 1)?);
            return Ok(res);
        }
        Err(e) => return Err(e),
    };
    let survivors = prune_by_lp(net, &candidates, cell)?;
    let none = BTreeSet::new();
    for s in &survivors {
        if s.witness.is_none() {
            res.flagged.push(s.region.pattern.clone());
            continue;
        }
        match strict_witness(&s.region, cell, &none, cfg) {
            LpVerdict::Feasible(x) => res.patterns.push((s.region.pattern.clone(), x)),
            LpVerdict::Failed => res.flagged.push(s.region.pattern.clone()),
            LpVerdict::Infeasible => {}
        }
    }
    let reachable = bounds.zero_reachable(cfg.zero_tol);
    let (tuples, flagged) = find_intersections(net, &survivors, cell, &reachable, cfg)?;
    res.tuples = tuples;
    res.flagged.extend(flagged);
    Ok(res)
}

/// Patterns and intersections found in one cube, without merging.
pub fn enumerate_cell(net: &ReluNetwork, cell: &HyperCube, cfg: &EnumConfig) -> Result<BoundaryAtlas> {
    let res = process_cell(net, cell, cfg, 0)?;
    Ok(merge(vec![(vec![0; cell.dim()], res)], 1))
}

fn merge(results: Vec<(Vec<usize>, CellResult)>, boundary_cells: usize) -> BoundaryAtlas {
    let mut patterns: BTreeMap<ActivationPattern, AtlasPattern> = BTreeMap::new();
    let mut tuples: BTreeMap<(ActivationPattern, Vec<NeuronId>), AtlasTuple> = BTreeMap::new();
    let mut inconclusive = Vec::new();
    let mut flagged = BTreeSet::new();
    for (index, res) in results {
        for (p, x) in res.patterns {
            let e = patterns.entry(p.clone()).or_insert_with(|| AtlasPattern {
                pattern: p,
                witness: x,
                cells: Vec::new(),
            });
            if e.cells.last() != Some(&index) {
                e.cells.push(index.clone());
            }
        }
        for t in res.tuples {
            let e = tuples
                .entry((t.base.clone(), t.shared.clone()))
                .or_insert(t);
            if e.cells.last() != Some(&index) {
                e.cells.push(index.clone());
            }
        }
        inconclusive.extend(res.inconclusive);
        flagged.extend(res.flagged);
    }
    BoundaryAtlas {
        patterns: patterns.into_values().collect(),
        intersections: tuples.into_values().collect(),
        inconclusive,
        flagged: flagged.into_iter().collect(),
        boundary_cells,
    }
}

/// Grid, bound, expand, prune and intersect over every boundary cell of
/// `state_box`, then merge deterministically in cell order.
pub fn build_atlas(net: &ReluNetwork, state_box: &HyperCube, cfg: &EnumConfig) -> Result<BoundaryAtlas> {
    let cells = boundary_cells(net, state_box, cfg.grid)?;
    let results = cells
        .par_iter()
        .map(|c| process_cell(net, &c.cube, cfg, 0).map(|r| (c.index.clone(), r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(results, cells.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundprop::ibp_bounds;
    use crate::network::builtin_network;

    fn l1() -> ReluNetwork {
        builtin_network("l1_diamond").unwrap()
    }

    fn cube(lo: &[f64], hi: &[f64]) -> HyperCube {
        HyperCube::new(lo.to_vec(), hi.to_vec()).unwrap()
    }

    fn pat(active: &[usize]) -> ActivationPattern {
        ActivationPattern::from_active(&[4], &[active]).unwrap()
    }

    #[test]
    fn candidates_on_stable_cell() {
        let net = l1();
        let (_, nb) = ibp_bounds(&net, &cube(&[0.4, 0.4], &[0.6, 0.6])).unwrap();
        let c = candidate_patterns(&net, &nb, 1e-9, 22).unwrap();
        assert_eq!(c, vec![pat(&[0, 2])]);
    }

    #[test]
    fn candidates_near_vertex() {
        let net = l1();
        let (_, nb) = ibp_bounds(&net, &cube(&[-0.1, 0.8], &[0.1, 1.0])).unwrap();
        let c = candidate_patterns(&net, &nb, 1e-9, 22).unwrap();
        assert_eq!(c.len(), 4);
        assert!(c.iter().all(|p| p.is_active(NeuronId::new(0, 2))));
        assert!(matches!(
            candidate_patterns(&net, &nb, 1e-9, 1),
            Err(Error::TooManyUnstable { count: 2, cap: 1 })
        ));
    }

    #[test]
    fn pruning_examples() {
        let net = l1();
        let c = cube(&[0.4, 0.4], &[0.6, 0.6]);
        let s = prune_by_lp(&net, &[pat(&[0, 2]), pat(&[])], &c).unwrap();
        assert_eq!(s.len(), 1);
        let x = s[0].witness.as_ref().unwrap();
        assert!((x[0] + x[1] - 1.0).abs() < 1e-9 && c.contains(x, 1e-12));
        // region {2,4} is the third quadrant, away from this cell
        assert!(prune_by_lp(&net, &[pat(&[1, 3])], &c).unwrap().is_empty());
    }

    #[test]
    fn vertex_tuple_has_four_patterns() {
        let net = l1();
        let c = cube(&[-0.1, 0.8], &[0.1, 1.1]);
        let atlas = enumerate_cell(&net, &c, &EnumConfig::default()).unwrap();
        let pats: Vec<_> = atlas.patterns.iter().map(|p| p.pattern.clone()).collect();
        assert_eq!(pats, vec![pat(&[1, 2]), pat(&[0, 2])]);
        assert_eq!(atlas.intersections.len(), 1);
        let t = &atlas.intersections[0];
        assert_eq!(t.shared, vec![NeuronId::new(0, 0), NeuronId::new(0, 1)]);
        assert_eq!(t.patterns().len(), 4);
        assert!(t.witness[0].abs() < 1e-9 && (t.witness[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn disjoint_regions_give_no_tuple() {
        let net = l1();
        let c = cube(&[0.4, 0.4], &[0.6, 0.6]);
        let atlas = enumerate_cell(&net, &c, &EnumConfig::default()).unwrap();
        assert_eq!(atlas.patterns.len(), 1);
        assert!(atlas.intersections.is_empty());
    }

    #[test]
    fn diamond_atlas() {
        let net = l1();
        let bx = cube(&[-2.0, -2.0], &[2.0, 2.0]);
        let atlas = build_atlas(&net, &bx, &EnumConfig::default()).unwrap();
        assert!(atlas.is_complete());
        let pats: Vec<_> = atlas.patterns.iter().map(|p| p.pattern.to_string()).collect();
        assert_eq!(pats, vec!["{2,4}", "{2,3}", "{1,4}", "{1,3}"]);
        let mut vertices: Vec<(i64, i64)> = atlas
            .intersections
            .iter()
            .map(|t| (t.witness[0].round() as i64, t.witness[1].round() as i64))
            .collect();
        vertices.sort();
        assert_eq!(vertices, vec![(-1, 0), (0, -1), (0, 1), (1, 0)]);
        for p in &atlas.patterns {
            let r = net.affine_region(&p.pattern).unwrap();
            assert!(r.apply(&p.witness).abs() <= 1e-7);
            assert!(r.min_slack(&p.witness) >= -1e-7);
            assert!((net.evaluate(&p.witness).unwrap()).abs() <= 1e-7);
        }
        for t in &atlas.intersections {
            assert!(!t.shared.is_empty());
            assert!(net.evaluate(&t.witness).unwrap().abs() <= 1e-7);
            for p in t.patterns() {
                assert!(net.affine_region(&p).unwrap().min_slack(&t.witness) >= -1e-7);
            }
        }
    }

    #[test]
    fn positive_net_has_empty_atlas() {
        let base = l1();
        let net = ReluNetwork::new(2, base.layers().to_vec(), base.output_weights().clone(), 10.0).unwrap();
        let atlas = build_atlas(&net, &cube(&[-2.0, -2.0], &[2.0, 2.0]), &EnumConfig::default()).unwrap();
        assert!(atlas.patterns.is_empty() && atlas.intersections.is_empty());
    }

    #[test]
    fn cap_forces_bisection() {
        let net = l1();
        let cfg = EnumConfig {
            unstable_cap: 1,
            max_split_depth: 0,
            ..EnumConfig::default()
        };
        let atlas = enumerate_cell(&net, &cube(&[-0.1, 0.8], &[0.1, 1.1]), &cfg).unwrap();
        assert_eq!(atlas.inconclusive.len(), 1);
        assert!(!atlas.is_complete());
    }
}
