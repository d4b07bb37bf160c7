use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Layer, ReluNetwork};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    input_dim: usize,
    layers: Vec<LayerFile>,
    output: OutputFile,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    /// Row-major `M_{i-1} x M_i`.
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputFile {
    weights: Vec<f64>,
    bias: f64,
}

/// Parses a JSON weights document.
pub fn load_network(bytes: &[u8]) -> Result<ReluNetwork> {
    let file: NetworkFile =
        serde_json::from_slice(bytes).map_err(|e| Error::MalformedNetwork(e.to_string()))?;
    let mut layers = Vec::with_capacity(file.layers.len());
    let mut prev = file.input_dim;
    for (i, l) in file.layers.into_iter().enumerate() {
        if l.weights.len() != prev {
            return Err(Error::MalformedNetwork(format!(
                "layer {} has {} weight rows, expected {prev}",
                i + 1,
                l.weights.len()
            )));
        }
        let cols = l.bias.len();
        if let Some(bad) = l.weights.iter().find(|row| row.len() != cols) {
            return Err(Error::MalformedNetwork(format!(
                "layer {} has a weight row of length {}, expected {cols}",
                i + 1,
                bad.len()
            )));
        }
        let flat: Vec<f64> = l.weights.into_iter().flatten().collect();
        layers.push(Layer {
            weights: DMatrix::from_row_slice(prev, cols, &flat),
            bias: DVector::from_vec(l.bias),
        });
        prev = cols;
    }
    ReluNetwork::new(
        file.input_dim,
        layers,
        DVector::from_vec(file.output.weights),
        file.output.bias,
    )
}

/// Serializes to pretty JSON with shortest round-trip decimal floats.
pub fn save_network(net: &ReluNetwork) -> Vec<u8> {
    let file = NetworkFile {
        input_dim: net.input_dim(),
        layers: net
            .layers()
            .iter()
            .map(|l| LayerFile {
                weights: l
                    .weights
                    .row_iter()
                    .map(|r| r.iter().copied().collect())
                    .collect(),
                bias: l.bias.iter().copied().collect(),
            })
            .collect(),
        output: OutputFile {
            weights: net.output_weights().iter().copied().collect(),
            bias: net.output_bias(),
        },
    };
    let mut out = serde_json::to_vec_pretty(&file).expect("finite network serializes");
    out.push(b'\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::builtin_network;

    #[test]
    fn diamond_file_round_trips() {
        let net = builtin_network("l1_diamond").unwrap();
        let bytes = save_network(&net);
        let back = load_network(&bytes).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.num_layers(), 1);
        assert_eq!(back.widths(), [4]);
    }

    #[test]
    fn awkward_decimals_round_trip_exactly() {
        let src = br#"{"input_dim":1,"layers":[{"weights":[[0.1,3.0000000000000004]],"bias":[1e-300,-2.5]}],"output":{"weights":[0.30000000000000004,-1.7976931348623157e308],"bias":5e-324}}"#;
        let net = load_network(src).unwrap();
        assert_eq!(load_network(&save_network(&net)).unwrap(), net);
    }

    #[test]
    fn rejects_bad_files() {
        let empty = br#"{"input_dim":2,"layers":[],"output":{"weights":[],"bias":0}}"#;
        assert!(matches!(load_network(empty), Err(Error::InvalidNetwork(_))));
        let nan = br#"{"input_dim":1,"layers":[{"weights":[[1]],"bias":[NaN]}],"output":{"weights":[1],"bias":0}}"#;
        assert!(matches!(load_network(nan), Err(Error::MalformedNetwork(_))));
        let overflow = br#"{"input_dim":1,"layers":[{"weights":[[1e999]],"bias":[0]}],"output":{"weights":[1],"bias":0}}"#;
        assert!(load_network(overflow).is_err());
        let ragged = br#"{"input_dim":2,"layers":[{"weights":[[1,2],[3]],"bias":[0,0]}],"output":{"weights":[1,1],"bias":0}}"#;
        assert!(matches!(load_network(ragged), Err(Error::MalformedNetwork(_))));
        let head = br#"{"input_dim":1,"layers":[{"weights":[[1,2]],"bias":[0,0]}],"output":{"weights":[1],"bias":0}}"#;
        assert!(matches!(load_network(head), Err(Error::InvalidNetwork(_))));
        assert!(load_network(b"not json").is_err());
    }
}
