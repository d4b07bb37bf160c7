use nalgebra::{DMatrix, DVector};

use super::{load_network, Layer, ReluNetwork};
use crate::{Error, Result};

pub const BUILTIN_NETWORKS: &[&str] = &["l1_diamond", "darboux_fixture"];

const DARBOUX_FIXTURE: &str = include_str!("../../fixtures/darboux_net.json");

/// Hand-built or shipped networks addressable by name.
pub fn builtin_network(name: &str) -> Result<ReluNetwork> {
    match name {
        // b(x) = 1 - |x1| - |x2|
        "l1_diamond" => ReluNetwork::new(
            2,
            vec![Layer {
                weights: DMatrix::from_row_slice(2, 4, &[1.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0]),
                bias: DVector::zeros(4),
            }],
            DVector::from_element(4, -1.0),
            1.0,
        ),
        "darboux_fixture" => load_network(DARBOUX_FIXTURE.as_bytes()),
        other => Err(Error::UnknownBuiltin(other.to_string())),
    }
}
