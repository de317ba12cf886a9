//! Architecture descriptions and seeded initialization.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Activation, ConvGeometry, Layer, NetError, Network, PoolGeometry};
use crate::rng::{self, tag};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerInit {
    /// i.i.d. `N(0, 1/fan_in)`.
    #[default]
    Gaussian,
    /// Identity matrix; square dense layers only.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        out_dim: usize,
        activation: Activation,
        #[serde(default)]
        init: LayerInit,
    },
    Conv2d {
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        activation: Activation,
    },
    Maxpool {
        window: usize,
        #[serde(default = "one")]
        stride: usize,
    },
    Avgpool {
        window: usize,
        #[serde(default = "one")]
        stride: usize,
    },
}

fn one() -> usize {
    1
}

fn default_head_activation() -> Activation {
    Activation::Identity
}

/// Input volume, hidden stack and number of classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    /// `(channels, height, width)`; a flat `d`-vector is `(d, 1, 1)`.
    pub input_shape: [usize; 3],
    #[serde(default)]
    pub hidden: Vec<LayerSpec>,
    pub num_classes: usize,
    #[serde(default = "default_head_activation")]
    pub head_activation: Activation,
}

impl ArchSpec {
    pub fn flat(input_dim: usize, hidden: Vec<LayerSpec>, num_classes: usize) -> Self {
        Self {
            input_shape: [input_dim, 1, 1],
            hidden,
            num_classes,
            head_activation: Activation::Identity,
        }
    }

    /// Width-halving dense stack `d, d/2, .., d/2^L` (floored at 1).
    pub fn halving(input_dim: usize, depth: usize, activation: Activation, num_classes: usize) -> Self {
        let mut width = input_dim;
        let hidden = (0..depth)
            .map(|_| {
                width = (width / 2).max(1);
                LayerSpec::Dense {
                    out_dim: width,
                    activation,
                    init: LayerInit::Gaussian,
                }
            })
            .collect();
        Self::flat(input_dim, hidden, num_classes)
    }

    /// `depth` square identity layers with identity activation.
    pub fn identity_stack(input_dim: usize, depth: usize, num_classes: usize) -> Self {
        let hidden = (0..depth)
            .map(|_| LayerSpec::Dense {
                out_dim: input_dim,
                activation: Activation::Identity,
                init: LayerInit::Identity,
            })
            .collect();
        Self::flat(input_dim, hidden, num_classes)
    }

    pub fn input_dim(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Builds the network with weights drawn from the seeded init stream.
    pub fn build(&self, seed: u64) -> Result<Network, NetError> {
        let mut shape = self.input_shape;
        if shape.contains(&0) || self.num_classes == 0 {
            return Err(NetError::InvalidLayer(format!(
                "input shape {:?} / num_classes {} must be positive",
                self.input_shape, self.num_classes
            )));
        }
        let mut layers = Vec::with_capacity(self.hidden.len());
        for (k, spec) in self.hidden.iter().enumerate() {
            let [c, h, w] = shape;
            let in_dim = c * h * w;
            let mut init_rng = rng::stream(seed, &[tag::INIT, k as u64]);
            let layer = match *spec {
                LayerSpec::Dense {
                    out_dim,
                    activation,
                    init,
                } => {
                    let weights = match init {
                        LayerInit::Gaussian => gaussian(&mut init_rng, vec![out_dim, in_dim], in_dim),
                        LayerInit::Identity => {
                            if out_dim != in_dim {
                                return Err(NetError::InvalidLayer(format!(
                                    "identity init needs a square layer, got {out_dim}x{in_dim}"
                                )));
                            }
                            let mut t = Tensor::zeros(&[out_dim, in_dim]);
                            for i in 0..out_dim {
                                t.data_mut()[i * in_dim + i] = 1.0;
                            }
                            t
                        }
                    };
                    shape = [out_dim, 1, 1];
                    Layer::dense(weights, activation)?
                }
                LayerSpec::Conv2d {
                    out_channels,
                    kernel,
                    stride,
                    activation,
                } => {
                    let g = ConvGeometry {
                        in_channels: c,
                        in_height: h,
                        in_width: w,
                        out_channels,
                        kernel,
                        stride,
                    };
                    let fan_in = c * kernel * kernel;
                    let layer = Layer::conv2d(g, gaussian(&mut init_rng, g.weight_shape(), fan_in), activation)?;
                    shape = [out_channels, g.out_height(), g.out_width()];
                    layer
                }
                LayerSpec::Maxpool { window, stride } | LayerSpec::Avgpool { window, stride } => {
                    let g = PoolGeometry {
                        channels: c,
                        in_height: h,
                        in_width: w,
                        window,
                        stride,
                    };
                    let layer = if matches!(spec, LayerSpec::Maxpool { .. }) {
                        Layer::max_pool(g)?
                    } else {
                        Layer::avg_pool(g)?
                    };
                    shape = [c, g.out_height(), g.out_width()];
                    layer
                }
            };
            layers.push(layer);
        }
        let in_dim: usize = shape.iter().product();
        let mut head_rng = rng::stream(seed, &[tag::INIT, self.hidden.len() as u64]);
        let head = Layer::dense(
            gaussian(&mut head_rng, vec![self.num_classes, in_dim], in_dim),
            self.head_activation,
        )?;
        Network::new(layers, head)
    }
}

fn gaussian<R: Rng>(rng: &mut R, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let scale = 1.0 / (fan_in as f64).sqrt();
    let len = shape.iter().product();
    let data = (0..len).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::from_parts_unchecked(shape, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halving_stack_dims() {
        let net = ArchSpec::halving(16, 3, Activation::Relu, 2).build(1).unwrap();
        let dims: Vec<usize> = net.layers().iter().map(Layer::out_dim).collect();
        assert_eq!(dims, vec![8, 4, 2]);
        assert_eq!(net.head().in_dim(), 2);
    }

    #[test]
    fn build_is_seed_deterministic() {
        let arch = ArchSpec::halving(8, 2, Activation::Tanh, 3);
        assert_eq!(arch.build(5).unwrap(), arch.build(5).unwrap());
        assert_ne!(arch.build(5).unwrap(), arch.build(6).unwrap());
    }

    #[test]
    fn identity_init_requires_square() {
        let arch = ArchSpec::flat(
            3,
            vec![LayerSpec::Dense {
                out_dim: 2,
                activation: Activation::Identity,
                init: LayerInit::Identity,
            }],
            2,
        );
        assert!(arch.build(0).is_err());
    }
}
