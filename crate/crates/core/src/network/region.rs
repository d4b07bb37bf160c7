use nalgebra::{DMatrix, DVector};

use super::{ActivationPattern, NeuronId, ReluNetwork};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    /// `normalᵀx + offset ≥ 0`
    NonNegative,
    /// `normalᵀx + offset ≤ 0`
    NonPositive,
}

impl Sense {
    pub fn sign(self) -> f64 {
        match self {
            Sense::NonNegative => 1.0,
            Sense::NonPositive => -1.0,
        }
    }
}

/// One closed half-space of a region, attached to the neuron that induces it.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionConstraint {
    pub neuron: NeuronId,
    pub normal: DVector<f64>,
    pub offset: f64,
    pub sense: Sense,
}

impl RegionConstraint {
    /// Signed slack: non-negative exactly when `x` satisfies the constraint.
    pub fn slack(&self, x: &[f64]) -> f64 {
        let v = dot(&self.normal, x) + self.offset;
        self.sense.sign() * v
    }
}

/// The affine map of a network restricted to the closed region of one pattern.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineRegion {
    pub pattern: ActivationPattern,
    pub output_gradient: DVector<f64>,
    pub output_offset: f64,
    neuron_maps: Vec<Vec<(DVector<f64>, f64)>>,
    pub constraints: Vec<RegionConstraint>,
}

impl AffineRegion {
    /// `W̄(S)ᵀx + r̄(S)`.
    pub fn apply(&self, x: &[f64]) -> f64 {
        dot(&self.output_gradient, x) + self.output_offset
    }

    /// Pre-activation map `(W̄_ij(S), r̄_ij(S))` of a neuron.
    pub fn neuron_map(&self, id: NeuronId) -> (&DVector<f64>, f64) {
        let (g, c) = &self.neuron_maps[id.layer][id.index];
        (g, *c)
    }

    pub fn pre_activation(&self, id: NeuronId, x: &[f64]) -> f64 {
        let (g, c) = self.neuron_map(id);
        dot(g, x) + c
    }

    /// Smallest constraint slack at `x`; non-negative inside the region.
    pub fn min_slack(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.slack(x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.min_slack(x) >= -tol
    }
}

/// Builds the region algebra of `pattern` by the layer-wise recursion
/// starting from the identity map on the input.
pub fn affine_region(net: &ReluNetwork, pattern: &ActivationPattern) -> Result<AffineRegion> {
    let widths = net.widths();
    if pattern.widths() != widths {
        return Err(Error::DimensionMismatch {
            expected: widths.iter().sum(),
            got: pattern.widths().iter().sum(),
        });
    }
    let n = net.input_dim();
    let mut grad = DMatrix::<f64>::identity(n, n);
    let mut off = DVector::<f64>::zeros(n);
    let mut neuron_maps = Vec::with_capacity(widths.len());
    let mut constraints = Vec::with_capacity(net.num_neurons());
    for (i, layer) in net.layers().iter().enumerate() {
        let m = widths[i];
        let mut next_grad = DMatrix::<f64>::zeros(n, m);
        let mut next_off = DVector::<f64>::zeros(m);
        let mut maps = Vec::with_capacity(m);
        for j in 0..m {
            let w = layer.weights.column(j);
            let g = &grad * w;
            let c = w.dot(&off) + layer.bias[j];
            let id = NeuronId::new(i, j);
            let active = pattern.is_active(id);
            if active {
                next_grad.set_column(j, &g);
                next_off[j] = c;
            }
            constraints.push(RegionConstraint {
                neuron: id,
                normal: g.clone(),
                offset: c,
                sense: if active {
                    Sense::NonNegative
                } else {
                    Sense::NonPositive
                },
            });
            maps.push((g, c));
        }
        neuron_maps.push(maps);
        grad = next_grad;
        off = next_off;
    }
    let output_gradient = &grad * net.output_weights();
    let output_offset = net.output_weights().dot(&off) + net.output_bias();
    Ok(AffineRegion {
        pattern: pattern.clone(),
        output_gradient,
        output_offset,
        neuron_maps,
        constraints,
    })
}

pub(crate) fn dot(v: &DVector<f64>, x: &[f64]) -> f64 {
    v.iter().zip(x).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::builtin_network;

    fn region(active: &[usize]) -> AffineRegion {
        let net = builtin_network("l1_diamond").unwrap();
        let p = ActivationPattern::from_active(&[4], &[active]).unwrap();
        affine_region(&net, &p).unwrap()
    }

    #[test]
    fn first_quadrant_region() {
        let r = region(&[0, 2]);
        assert_eq!(r.output_gradient.as_slice(), &[-1.0, -1.0]);
        assert_eq!(r.output_offset, 1.0);
        let rows: Vec<(Vec<f64>, f64, Sense)> = r
            .constraints
            .iter()
            .map(|c| (c.normal.as_slice().to_vec(), c.offset, c.sense))
            .collect();
        assert_eq!(
            rows,
            vec![
                (vec![1.0, 0.0], 0.0, Sense::NonNegative),
                (vec![-1.0, 0.0], 0.0, Sense::NonPositive),
                (vec![0.0, 1.0], 0.0, Sense::NonNegative),
                (vec![0.0, -1.0], 0.0, Sense::NonPositive),
            ]
        );
        assert!(r.contains(&[0.2, 0.3], 0.0));
        assert!(!r.contains(&[-0.2, 0.3], 1e-9));
    }

    #[test]
    fn second_quadrant_region() {
        let r = region(&[1, 2]);
        assert_eq!(r.output_gradient.as_slice(), &[1.0, -1.0]);
        assert_eq!(r.output_offset, 1.0);
        assert_eq!(r.apply(&[-0.25, 0.5]), 0.25);
    }

    #[test]
    fn empty_pattern_is_constant() {
        let r = region(&[]);
        assert_eq!(r.output_gradient.as_slice(), &[0.0, 0.0]);
        assert_eq!(r.output_offset, 1.0);
    }

    #[test]
    fn deep_net_region_matches_evaluation() {
        let net = ReluNetwork::new(
            2,
            vec![
                crate::network::Layer {
                    weights: DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 0.3, 1.0, -1.0]),
                    bias: DVector::from_vec(vec![0.1, -0.2, 0.3]),
                },
                crate::network::Layer {
                    weights: DMatrix::from_row_slice(3, 2, &[1.0, -1.0, 0.5, 2.0, -0.7, 0.4]),
                    bias: DVector::from_vec(vec![0.05, 0.2]),
                },
            ],
            DVector::from_vec(vec![1.5, -0.8]),
            0.25,
        )
        .unwrap();
        for x in [[0.3, -0.4], [-1.0, 0.7], [0.9, 0.9], [-0.2, -0.6]] {
            let (p, _) = net.activation_pattern(&x, 1e-9).unwrap();
            let r = affine_region(&net, &p).unwrap();
            assert!((r.apply(&x) - net.evaluate(&x).unwrap()).abs() < 1e-12);
            assert!(r.contains(&x, 1e-12));
            let pre = net.pre_activations(&x).unwrap();
            for id in net.neurons() {
                assert!((r.pre_activation(id, &x) - pre[id.layer][id.index]).abs() < 1e-12);
            }
        }
    }
}
