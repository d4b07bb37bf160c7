//! Feedforward ReLU networks, activation patterns and per-pattern affine maps.

mod io;
mod region;
mod zoo;

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub use io::{load_network, save_network};
pub use region::{affine_region, AffineRegion, RegionConstraint, Sense};
pub use zoo::{builtin_network, BUILTIN_NETWORKS};

pub const DEFAULT_ZERO_TOL: f64 = 1e-9;

/// Largest unstable set that `enumerate_patterns_at` will expand.
pub const MAX_TOGGLED: usize = 24;

/// One hidden layer: `weights` is `M_{i-1} x M_i`, column `j` feeds neuron `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReluNetwork {
    input_dim: usize,
    layers: Vec<Layer>,
    output_weights: DVector<f64>,
    output_bias: f64,
}

impl ReluNetwork {
    pub fn new(
        input_dim: usize,
        layers: Vec<Layer>,
        output_weights: DVector<f64>,
        output_bias: f64,
    ) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidNetwork("input dimension must be positive".into()));
        }
        if layers.is_empty() {
            return Err(Error::InvalidNetwork("at least one hidden layer is required".into()));
        }
        let mut prev = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            let (rows, cols) = layer.weights.shape();
            if rows != prev {
                return Err(Error::InvalidNetwork(format!(
                    "layer {} weights have {rows} rows, expected {prev}",
                    i + 1
                )));
            }
            if cols == 0 {
                return Err(Error::InvalidNetwork(format!("layer {} has no neurons", i + 1)));
            }
            if layer.bias.len() != cols {
                return Err(Error::InvalidNetwork(format!(
                    "layer {} bias has length {}, expected {cols}",
                    i + 1,
                    layer.bias.len()
                )));
            }
            if !layer.weights.iter().chain(layer.bias.iter()).all(|v| v.is_finite()) {
                return Err(Error::InvalidNetwork(format!(
                    "layer {} has non-finite entries",
                    i + 1
                )));
            }
            prev = cols;
        }
        if output_weights.len() != prev {
            return Err(Error::InvalidNetwork(format!(
                "output weights have length {}, expected {prev}",
                output_weights.len()
            )));
        }
        if !output_weights.iter().all(|v| v.is_finite()) || !output_bias.is_finite() {
            return Err(Error::InvalidNetwork("output head has non-finite entries".into()));
        }
        Ok(Self {
            input_dim,
            layers,
            output_weights,
            output_bias,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.bias.len()).collect()
    }

    pub fn num_neurons(&self) -> usize {
        self.layers.iter().map(|l| l.bias.len()).sum()
    }

    pub fn output_weights(&self) -> &DVector<f64> {
        &self.output_weights
    }

    pub fn output_bias(&self) -> f64 {
        self.output_bias
    }

    pub fn neurons(&self) -> impl Iterator<Item = NeuronId> + '_ {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| (0..l.bias.len()).map(move |j| NeuronId::new(i, j)))
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Pre-activations of every hidden layer at `x`.
    pub fn pre_activations(&self, x: &[f64]) -> Result<Vec<DVector<f64>>> {
        self.check_input(x)?;
        let mut z = DVector::from_column_slice(x);
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let pre = layer.weights.tr_mul(&z) + &layer.bias;
            z = pre.map(|v| v.max(0.0));
            out.push(pre);
        }
        Ok(out)
    }

    /// The forward pass `b(x)`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let pre = self.pre_activations(x)?;
        let z = pre.last().expect("non-empty").map(|v| v.max(0.0));
        Ok(self.output_weights.dot(&z) + self.output_bias)
    }

    /// Canonical pattern at `x` (unstable neurons counted active) and the
    /// unstable set `T(x)`.
    pub fn activation_pattern(
        &self,
        x: &[f64],
        zero_tol: f64,
    ) -> Result<(ActivationPattern, UnstableSet)> {
        let pre = self.pre_activations(x)?;
        let mut pattern = ActivationPattern::all_inactive(&self.widths());
        let mut unstable = UnstableSet::default();
        for (i, p) in pre.iter().enumerate() {
            for (j, &v) in p.iter().enumerate() {
                if v.abs() <= zero_tol {
                    unstable.neurons.insert(NeuronId::new(i, j));
                    pattern.set(NeuronId::new(i, j), true);
                } else if v > zero_tol {
                    pattern.set(NeuronId::new(i, j), true);
                }
            }
        }
        Ok((pattern, unstable))
    }

    /// Every pattern whose closed region contains `x`: all togglings of `T(x)`.
    pub fn enumerate_patterns_at(&self, x: &[f64], zero_tol: f64) -> Result<Vec<ActivationPattern>> {
        let (base, unstable) = self.activation_pattern(x, zero_tol)?;
        if unstable.len() > MAX_TOGGLED {
            return Err(Error::TooManyUnstable {
                count: unstable.len(),
                cap: MAX_TOGGLED,
            });
        }
        Ok(base.togglings(&unstable.neurons.iter().copied().collect::<Vec<_>>()))
    }

    pub fn affine_region(&self, pattern: &ActivationPattern) -> Result<AffineRegion> {
        affine_region(self, pattern)
    }
}

/// A hidden neuron, 0-based internally and shown 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NeuronId {
    pub layer: usize,
    pub index: usize,
}

impl NeuronId {
    pub fn new(layer: usize, index: usize) -> Self {
        Self { layer, index }
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.layer + 1, self.index + 1)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UnstableSet {
    pub neurons: BTreeSet<NeuronId>,
}

impl UnstableSet {
    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    pub fn contains(&self, id: NeuronId) -> bool {
        self.neurons.contains(&id)
    }
}

impl FromIterator<NeuronId> for UnstableSet {
    fn from_iter<I: IntoIterator<Item = NeuronId>>(iter: I) -> Self {
        Self {
            neurons: iter.into_iter().collect(),
        }
    }
}

/// Per-layer activation flags. Structural equality and ordering are
/// canonical because every layer has a fixed width.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActivationPattern {
    layers: Vec<Vec<bool>>,
}

impl ActivationPattern {
    pub fn all_inactive(widths: &[usize]) -> Self {
        Self {
            layers: widths.iter().map(|&w| vec![false; w]).collect(),
        }
    }

    /// Builds a pattern from 0-based active index sets, one per layer.
    pub fn from_active(widths: &[usize], active: &[&[usize]]) -> Result<Self> {
        if active.len() != widths.len() {
            return Err(Error::DimensionMismatch {
                expected: widths.len(),
                got: active.len(),
            });
        }
        let mut p = Self::all_inactive(widths);
        for (i, set) in active.iter().enumerate() {
            for &j in set.iter() {
                if j >= widths[i] {
                    return Err(Error::DimensionMismatch {
                        expected: widths[i],
                        got: j + 1,
                    });
                }
                p.layers[i][j] = true;
            }
        }
        Ok(p)
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(Vec::len).collect()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, i: usize) -> &[bool] {
        &self.layers[i]
    }

    pub fn is_active(&self, id: NeuronId) -> bool {
        self.layers[id.layer][id.index]
    }

    pub fn set(&mut self, id: NeuronId, active: bool) {
        self.layers[id.layer][id.index] = active;
    }

    pub fn toggled(&self, id: NeuronId) -> Self {
        let mut p = self.clone();
        p.layers[id.layer][id.index] = !p.layers[id.layer][id.index];
        p
    }

    /// 0-based active indices of layer `i`.
    pub fn active_indices(&self, i: usize) -> Vec<usize> {
        self.layers[i]
            .iter()
            .enumerate()
            .filter_map(|(j, &a)| a.then_some(j))
            .collect()
    }

    pub fn active_neurons(&self) -> impl Iterator<Item = NeuronId> + '_ {
        self.layers.iter().enumerate().flat_map(|(i, l)| {
            l.iter()
                .enumerate()
                .filter_map(move |(j, &a)| a.then_some(NeuronId::new(i, j)))
        })
    }

    /// All `2^k` patterns obtained by toggling subsets of `neurons`, sorted.
    pub fn togglings(&self, neurons: &[NeuronId]) -> Vec<Self> {
        let mut out = Vec::with_capacity(1 << neurons.len());
        for mask in 0u64..(1u64 << neurons.len()) {
            let mut p = self.clone();
            for (k, &id) in neurons.iter().enumerate() {
                if mask >> k & 1 == 1 {
                    p.layers[id.layer][id.index] = !p.layers[id.layer][id.index];
                }
            }
            out.push(p);
        }
        out.sort();
        out.dedup();
        out
    }

    /// Neurons whose state differs between at least two of `patterns`:
    /// the union of active sets minus their intersection.
    pub fn disagreement(patterns: &[ActivationPattern]) -> UnstableSet {
        let Some(first) = patterns.first() else {
            return UnstableSet::default();
        };
        let mut out = UnstableSet::default();
        for (i, layer) in first.layers.iter().enumerate() {
            for j in 0..layer.len() {
                let v = layer[j];
                if patterns.iter().any(|p| p.layers[i][j] != v) {
                    out.neurons.insert(NeuronId::new(i, j));
                }
            }
        }
        out
    }

    /// Compact form: one `0`/`1` per neuron, layers separated by `|`.
    pub fn bitstring(&self) -> String {
        self.layers
            .iter()
            .map(|l| l.iter().map(|&a| if a { '1' } else { '0' }).collect::<String>())
            .collect::<Vec<_>>()
            .join("|")
    }

    pub fn from_bitstring(s: &str) -> Result<Self> {
        let layers = s
            .split('|')
            .map(|part| {
                part.chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        other => Err(Error::InvalidNetwork(format!(
                            "invalid pattern character `{other}`"
                        ))),
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }
}

impl fmt::Display for ActivationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, _) in self.layers.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            let idx: Vec<String> = self
                .active_indices(i)
                .iter()
                .map(|j| (j + 1).to_string())
                .collect();
            write!(f, "{{{}}}", idx.join(","))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l1() -> ReluNetwork {
        builtin_network("l1_diamond").unwrap()
    }

    #[test]
    fn evaluates_diamond_net() {
        let net = l1();
        assert_eq!(net.evaluate(&[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(net.evaluate(&[0.0, 1.0]).unwrap(), 0.0);
        assert!((net.evaluate(&[0.3, 0.2]).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            net.evaluate(&[0.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn pattern_at_vertex_counts_unstable_neurons_active() {
        let net = l1();
        let (p, t) = net.activation_pattern(&[0.0, 1.0], DEFAULT_ZERO_TOL).unwrap();
        let expected: UnstableSet = [NeuronId::new(0, 0), NeuronId::new(0, 1)].into_iter().collect();
        assert_eq!(t, expected);
        assert_eq!(p.to_string(), "{1,2,3}");

        let (p, t) = net.activation_pattern(&[0.5, 0.5], DEFAULT_ZERO_TOL).unwrap();
        assert!(t.is_empty());
        assert_eq!(p.to_string(), "{1,3}");
    }

    #[test]
    fn patterns_at_vertices_toggle_unstable_neurons() {
        let net = l1();
        let at = |x: [f64; 2]| -> Vec<String> {
            net.enumerate_patterns_at(&x, DEFAULT_ZERO_TOL)
                .unwrap()
                .iter()
                .map(|p| p.to_string())
                .collect()
        };
        let mut top = at([0.0, 1.0]);
        top.sort();
        assert_eq!(top, ["{1,2,3}", "{1,3}", "{2,3}", "{3}"]);
        let mut right = at([1.0, 0.0]);
        right.sort();
        assert_eq!(right, ["{1,3,4}", "{1,3}", "{1,4}", "{1}"]);
        assert_eq!(at([0.2, 0.1]).len(), 1);
    }

    #[test]
    fn disagreement_is_union_minus_intersection() {
        let w = [4];
        let a = ActivationPattern::from_active(&w, &[&[0, 2]]).unwrap();
        let b = ActivationPattern::from_active(&w, &[&[1, 2]]).unwrap();
        let t = ActivationPattern::disagreement(&[a, b]);
        let ids: Vec<_> = t.neurons.iter().map(|n| n.index).collect();
        assert_eq!(ids, [0, 1]);
    }

    #[test]
    fn bitstring_round_trips() {
        let p = ActivationPattern::from_active(&[3, 2], &[&[0, 2], &[1]]).unwrap();
        assert_eq!(p.bitstring(), "101|01");
        assert_eq!(ActivationPattern::from_bitstring("101|01").unwrap(), p);
        assert_eq!(p.to_string(), "{1,3} {2}");
    }

    #[test]
    fn constructor_rejects_inconsistent_shapes() {
        let layer = Layer {
            weights: DMatrix::zeros(3, 2),
            bias: DVector::zeros(2),
        };
        assert!(ReluNetwork::new(2, vec![layer.clone()], DVector::zeros(2), 0.0).is_err());
        assert!(ReluNetwork::new(3, vec![layer.clone()], DVector::zeros(3), 0.0).is_err());
        assert!(ReluNetwork::new(3, vec![], DVector::zeros(0), 0.0).is_err());
        assert!(ReluNetwork::new(3, vec![layer], DVector::zeros(2), f64::NAN).is_err());
    }
}
