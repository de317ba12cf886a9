//! JSON wire schema for networks.
//!
//! ```json
//! {"layers": [{"kind": "dense", "in_dim": 2, "out_dim": 1,
//!              "activation": "relu", "weights": [1.0, 1.0]}],
//!  "head": {"kind": "dense", ...}}
//! ```
//!
//! Convolution and pooling layers add a `geometry` object. Weights are the
//! row-major flattening of the weight tensor and are empty for pooling.

use serde::{Deserialize, Serialize};

use super::{Activation, ConvGeometry, Layer, LayerKind, NetError, Network, PoolGeometry};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum KindTag {
    Dense,
    Conv2d,
    Maxpool,
    Avgpool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum GeometryRecord {
    Conv(ConvGeometry),
    Pool(PoolGeometry),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(super) struct LayerRecord {
    kind: KindTag,
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    #[serde(default)]
    weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    geometry: Option<GeometryRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(super) struct NetworkRecord {
    layers: Vec<LayerRecord>,
    head: LayerRecord,
}

impl From<&Layer> for LayerRecord {
    fn from(l: &Layer) -> Self {
        let (kind, geometry) = match l.kind() {
            LayerKind::Dense => (KindTag::Dense, None),
            LayerKind::Conv2d(g) => (KindTag::Conv2d, Some(GeometryRecord::Conv(g))),
            LayerKind::MaxPool(g) => (KindTag::Maxpool, Some(GeometryRecord::Pool(g))),
            LayerKind::AvgPool(g) => (KindTag::Avgpool, Some(GeometryRecord::Pool(g))),
        };
        LayerRecord {
            kind,
            in_dim: l.in_dim(),
            out_dim: l.out_dim(),
            activation: l.activation(),
            weights: l.weights().data().to_vec(),
            geometry,
        }
    }
}

impl TryFrom<LayerRecord> for Layer {
    type Error = NetError;

    fn try_from(r: LayerRecord) -> Result<Self, NetError> {
        let layer = match (r.kind, r.geometry) {
            (KindTag::Dense, None) => Layer::dense(Tensor::new(vec![r.out_dim, r.in_dim], r.weights)?, r.activation)?,
            (KindTag::Conv2d, Some(GeometryRecord::Conv(g))) => {
                Layer::conv2d(g, Tensor::new(g.weight_shape(), r.weights)?, r.activation)?
            }
            (KindTag::Maxpool | KindTag::Avgpool, Some(GeometryRecord::Pool(g))) => {
                if !r.weights.is_empty() {
                    return Err(NetError::InvalidLayer("pooling layers carry no weights".into()));
                }
                let l = if r.kind == KindTag::Maxpool {
                    Layer::max_pool(g)?
                } else {
                    Layer::avg_pool(g)?
                };
                l.with_activation(r.activation)
            }
            (kind, g) => {
                return Err(NetError::InvalidLayer(format!(
                    "layer kind {kind:?} does not accept geometry {g:?}"
                )))
            }
        };
        if layer.in_dim() != r.in_dim || layer.out_dim() != r.out_dim {
            return Err(NetError::InvalidLayer(format!(
                "declared dims ({}, {}) disagree with weights/geometry ({}, {})",
                r.in_dim,
                r.out_dim,
                layer.in_dim(),
                layer.out_dim()
            )));
        }
        Ok(layer)
    }
}

impl From<Network> for NetworkRecord {
    fn from(n: Network) -> Self {
        NetworkRecord {
            layers: n.layers().iter().map(LayerRecord::from).collect(),
            head: LayerRecord::from(n.head()),
        }
    }
}

impl TryFrom<NetworkRecord> for Network {
    type Error = NetError;

    fn try_from(r: NetworkRecord) -> Result<Self, NetError> {
        let layers = r
            .layers
            .into_iter()
            .map(Layer::try_from)
            .collect::<Result<Vec<_>, _>>()?;
        Network::new(layers, Layer::try_from(r.head)?)
    }
}

impl Serialize for Layer {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        LayerRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Layer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = LayerRecord::deserialize(d)?;
        Layer::try_from(r).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::ArchSpec;

    #[test]
    fn documented_schema_parses() {
        let doc = r#"{
            "layers": [{"kind": "dense", "in_dim": 2, "out_dim": 1,
                        "activation": "relu", "weights": [1.0, 1.0]}],
            "head": {"kind": "dense", "in_dim": 1, "out_dim": 2,
                     "activation": "identity", "weights": [1.0, -1.0]}
        }"#;
        let net = Network::from_json(doc).unwrap();
        assert_eq!(net.depth(), 1);
        assert_eq!(net.num_outputs(), 2);
    }

    #[test]
    fn declared_dims_must_match() {
        let doc = r#"{"layers": [], "head": {"kind": "dense", "in_dim": 3, "out_dim": 2,
                     "activation": "identity", "weights": [1.0, -1.0]}}"#;
        assert!(Network::from_json(doc).is_err());
    }

    #[test]
    fn json_round_trip_is_deterministic() {
        let arch: ArchSpec = serde_json::from_str(
            r#"{"input_shape": [1, 4, 4], "num_classes": 3, "hidden": [
                {"kind": "conv2d", "out_channels": 2, "kernel": 2, "stride": 1, "activation": "tanh"},
                {"kind": "maxpool", "window": 2, "stride": 1},
                {"kind": "dense", "out_dim": 3, "activation": "sigmoid"}]}"#,
        )
        .unwrap();
        let net = arch.build(11).unwrap();
        let s1 = net.to_json().unwrap();
        let back = Network::from_json(&s1).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_json().unwrap(), s1);
    }
}
