//! Information-theoretic generalization analysis for layered networks.
//!
//! The crate measures and property-tests the objects behind exponential
//! depth-dependent generalization bounds: the layer-wise mutual-information
//! chain of a feed-forward network, contraction-layer detection, noisy SGD
//! with its information budget, the family of generalization, stability and
//! excess-risk bounds, and exact enumeration oracles on tiny worlds.
//!
//! All information quantities are in nats.

pub mod bounds;
pub mod cli;
pub mod data;
pub mod experiments;
pub mod info;
pub mod net;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use net::{Activation, ArchSpec, Layer, LossEvaluator, LossKind, Network};
pub use tensor::Tensor;
