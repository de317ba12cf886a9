//! Layer types: dense, 2-D convolution, max/avg pooling.
//!
//! All layers consume and produce flattened per-example rows. Convolution and
//! pooling interpret a row as a `(channels, height, width)` volume in row-major
//! order. Biases are not stored separately; an affine map is expressed through
//! a homogeneous (constant-one) input coordinate.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::NetError;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

/// Geometry of an unpadded 2-D convolution with square kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeometry {
    fn validate(&self) -> Result<(), NetError> {
        let dims = [
            self.in_channels,
            self.in_height,
            self.in_width,
            self.out_channels,
            self.kernel,
            self.stride,
        ];
        if dims.contains(&0) {
            return Err(NetError::InvalidLayer(format!(
                "conv2d geometry has a zero entry: {self:?}"
            )));
        }
        if self.kernel > self.in_height || self.kernel > self.in_width {
            return Err(NetError::InvalidLayer(format!(
                "conv2d kernel {} exceeds input {}x{}",
                self.kernel, self.in_height, self.in_width
            )));
        }
        Ok(())
    }

    pub fn out_height(&self) -> usize {
        (self.in_height - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.in_width - self.kernel) / self.stride + 1
    }

    pub fn in_dim(&self) -> usize {
        self.in_channels * self.in_height * self.in_width
    }

    pub fn out_dim(&self) -> usize {
        self.out_channels * self.out_height() * self.out_width()
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.out_channels, self.in_channels, self.kernel, self.kernel]
    }
}

/// Geometry of a per-channel pooling window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolGeometry {
    pub channels: usize,
    pub in_height: usize,
    pub in_width: usize,
    pub window: usize,
    pub stride: usize,
}

impl PoolGeometry {
    fn validate(&self) -> Result<(), NetError> {
        let dims = [self.channels, self.in_height, self.in_width, self.window, self.stride];
        if dims.contains(&0) || self.window > self.in_height || self.window > self.in_width {
            return Err(NetError::InvalidLayer(format!("invalid pooling geometry {self:?}")));
        }
        Ok(())
    }

    pub fn out_height(&self) -> usize {
        (self.in_height - self.window) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.in_width - self.window) / self.stride + 1
    }

    pub fn in_dim(&self) -> usize {
        self.channels * self.in_height * self.in_width
    }

    pub fn out_dim(&self) -> usize {
        self.channels * self.out_height() * self.out_width()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Dense,
    Conv2d(ConvGeometry),
    MaxPool(PoolGeometry),
    AvgPool(PoolGeometry),
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Dense => "dense",
            LayerKind::Conv2d(_) => "conv2d",
            LayerKind::MaxPool(_) => "maxpool",
            LayerKind::AvgPool(_) => "avgpool",
        }
    }

    pub fn is_pooling(&self) -> bool {
        matches!(self, LayerKind::MaxPool(_) | LayerKind::AvgPool(_))
    }
}

/// One feature map `x_k = act(w_k x_{k-1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    kind: LayerKind,
    weights: Tensor,
    activation: Activation,
    in_dim: usize,
    out_dim: usize,
}

impl Layer {
    /// Dense layer with weight matrix of shape `(out_dim, in_dim)`.
    pub fn dense(weights: Tensor, activation: Activation) -> Result<Self, NetError> {
        if weights.shape().len() != 2 {
            return Err(NetError::InvalidLayer(format!(
                "dense weights must be rank 2, got shape {:?}",
                weights.shape()
            )));
        }
        let (out_dim, in_dim) = (weights.shape()[0], weights.shape()[1]);
        Ok(Self {
            kind: LayerKind::Dense,
            weights,
            activation,
            in_dim,
            out_dim,
        })
    }

    /// Dense layer from row-major nested rows.
    pub fn dense_from_rows(rows: &[Vec<f64>], activation: Activation) -> Result<Self, NetError> {
        Self::dense(Tensor::from_rows(rows)?, activation)
    }

    pub fn conv2d(geometry: ConvGeometry, weights: Tensor, activation: Activation) -> Result<Self, NetError> {
        geometry.validate()?;
        if weights.shape() != geometry.weight_shape().as_slice() {
            return Err(NetError::InvalidLayer(format!(
                "conv2d weights have shape {:?}, geometry requires {:?}",
                weights.shape(),
                geometry.weight_shape()
            )));
        }
        Ok(Self {
            kind: LayerKind::Conv2d(geometry),
            weights,
            activation,
            in_dim: geometry.in_dim(),
            out_dim: geometry.out_dim(),
        })
    }

    pub fn max_pool(geometry: PoolGeometry) -> Result<Self, NetError> {
        Self::pool(LayerKind::MaxPool(geometry), geometry)
    }

    pub fn avg_pool(geometry: PoolGeometry) -> Result<Self, NetError> {
        Self::pool(LayerKind::AvgPool(geometry), geometry)
    }

    fn pool(kind: LayerKind, geometry: PoolGeometry) -> Result<Self, NetError> {
        geometry.validate()?;
        Ok(Self {
            kind,
            weights: Tensor::empty(),
            activation: Activation::Identity,
            in_dim: geometry.in_dim(),
            out_dim: geometry.out_dim(),
        })
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn kind(&self) -> LayerKind {
        self.kind
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn is_trainable(&self) -> bool {
        !self.kind.is_pooling()
    }

    /// Copy of this layer with replaced weights of the same shape.
    pub fn with_weights(&self, weights: Tensor) -> Result<Self, NetError> {
        if weights.shape() != self.weights.shape() {
            return Err(NetError::GradientShape {
                expected: self.weights.shape().to_vec(),
                found: weights.shape().to_vec(),
            });
        }
        Ok(Self {
            weights,
            ..self.clone()
        })
    }

    /// Maps an `(n, in_dim)` batch to `(n, out_dim)`.
    pub fn apply(&self, input: &Tensor) -> Result<Tensor, NetError> {
        let (_, out) = self.apply_with_pre(input)?;
        Ok(out)
    }

    /// Pre-activations and outputs for a batch.
    pub(crate) fn apply_with_pre(&self, input: &Tensor) -> Result<(Vec<f64>, Tensor), NetError> {
        if input.shape().len() != 2 || input.cols() != self.in_dim {
            return Err(NetError::Shape {
                layer: 0,
                expected: self.in_dim,
                found: input.cols(),
            });
        }
        let n = input.rows();
        let mut pre = vec![0.0; n * self.out_dim];
        for (i, x) in input.iter_rows().enumerate().take(n) {
            self.pre_activation_row(x, &mut pre[i * self.out_dim..(i + 1) * self.out_dim]);
        }
        let out: Vec<f64> = pre.iter().map(|&z| self.activation.apply(z)).collect();
        let out = Tensor::new(vec![n, self.out_dim], out)?;
        Ok((pre, out))
    }

    fn pre_activation_row(&self, x: &[f64], z: &mut [f64]) {
        let w = self.weights.data();
        match self.kind {
            LayerKind::Dense => {
                for (o, zo) in z.iter_mut().enumerate() {
                    let row = &w[o * self.in_dim..(o + 1) * self.in_dim];
                    *zo = row.iter().zip(x).map(|(a, b)| a * b).sum();
                }
            }
            LayerKind::Conv2d(g) => {
                let (oh, ow) = (g.out_height(), g.out_width());
                let k = g.kernel;
                for oc in 0..g.out_channels {
                    for r in 0..oh {
                        for c in 0..ow {
                            let mut acc = 0.0;
                            for ic in 0..g.in_channels {
                                for kr in 0..k {
                                    for kc in 0..k {
                                        let wi = ((oc * g.in_channels + ic) * k + kr) * k + kc;
                                        let xi =
                                            (ic * g.in_height + r * g.stride + kr) * g.in_width + c * g.stride + kc;
                                        acc += w[wi] * x[xi];
                                    }
                                }
                            }
                            z[(oc * oh + r) * ow + c] = acc;
                        }
                    }
                }
            }
            LayerKind::MaxPool(g) | LayerKind::AvgPool(g) => {
                let is_max = matches!(self.kind, LayerKind::MaxPool(_));
                let (oh, ow) = (g.out_height(), g.out_width());
                let area = (g.window * g.window) as f64;
                for ch in 0..g.channels {
                    for r in 0..oh {
                        for c in 0..ow {
                            let mut acc = if is_max { f64::NEG_INFINITY } else { 0.0 };
                            for wr in 0..g.window {
                                for wc in 0..g.window {
                                    let v = x[pool_index(&g, ch, r, c, wr, wc)];
                                    if is_max {
                                        acc = acc.max(v);
                                    } else {
                                        acc += v;
                                    }
                                }
                            }
                            z[(ch * oh + r) * ow + c] = if is_max { acc } else { acc / area };
                        }
                    }
                }
            }
        }
    }

    /// Back-propagates `grad_out` (gradient w.r.t. this layer's outputs) for a
    /// batch, returning `(grad_weights, grad_input)`.
    pub(crate) fn backward(&self, input: &Tensor, pre: &[f64], out: &Tensor, grad_out: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = input.rows();
        let (din, dout) = (self.in_dim, self.out_dim);
        let grad_pre: Vec<f64> = grad_out
            .iter()
            .zip(pre)
            .zip(out.data())
            .map(|((g, &z), &a)| g * self.activation.derivative(z, a))
            .collect();
        let mut grad_w = vec![0.0; self.weights.len()];
        let mut grad_in = vec![0.0; n * din];
        let w = self.weights.data();
        for i in 0..n {
            let x = input.row(i);
            let gz = &grad_pre[i * dout..(i + 1) * dout];
            let gx = &mut grad_in[i * din..(i + 1) * din];
            match self.kind {
                LayerKind::Dense => {
                    for (o, &g) in gz.iter().enumerate() {
                        if g == 0.0 {
                            continue;
                        }
                        let wrow = &w[o * din..(o + 1) * din];
                        let grow = &mut grad_w[o * din..(o + 1) * din];
                        for j in 0..din {
                            grow[j] += g * x[j];
                            gx[j] += g * wrow[j];
                        }
                    }
                }
                LayerKind::Conv2d(geo) => {
                    let (oh, ow) = (geo.out_height(), geo.out_width());
                    let k = geo.kernel;
                    for oc in 0..geo.out_channels {
                        for r in 0..oh {
                            for c in 0..ow {
                                let g = gz[(oc * oh + r) * ow + c];
                                if g == 0.0 {
                                    continue;
                                }
                                for ic in 0..geo.in_channels {
                                    for kr in 0..k {
                                        for kc in 0..k {
                                            let wi = ((oc * geo.in_channels + ic) * k + kr) * k + kc;
                                            let xi = (ic * geo.in_height + r * geo.stride + kr) * geo.in_width
                                                + c * geo.stride
                                                + kc;
                                            grad_w[wi] += g * x[xi];
                                            gx[xi] += g * w[wi];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                LayerKind::MaxPool(geo) => {
                    let (oh, ow) = (geo.out_height(), geo.out_width());
                    for ch in 0..geo.channels {
                        for r in 0..oh {
                            for c in 0..ow {
                                let g = gz[(ch * oh + r) * ow + c];
                                // first maximal element receives the gradient
                                let mut best = pool_index(&geo, ch, r, c, 0, 0);
                                for wr in 0..geo.window {
                                    for wc in 0..geo.window {
                                        let idx = pool_index(&geo, ch, r, c, wr, wc);
                                        if x[idx] > x[best] {
                                            best = idx;
                                        }
                                    }
                                }
                                gx[best] += g;
                            }
                        }
                    }
                }
                LayerKind::AvgPool(geo) => {
                    let (oh, ow) = (geo.out_height(), geo.out_width());
                    let area = (geo.window * geo.window) as f64;
                    for ch in 0..geo.channels {
                        for r in 0..oh {
                            for c in 0..ow {
                                let g = gz[(ch * oh + r) * ow + c] / area;
                                for wr in 0..geo.window {
                                    for wc in 0..geo.window {
                                        gx[pool_index(&geo, ch, r, c, wr, wc)] += g;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        (grad_w, grad_in)
    }

    /// The linear operator `x -> w x` as a `(out_dim, in_dim)` matrix.
    ///
    /// Convolutions are unrolled into their Toeplitz-structured matrix.
    /// Pooling has no linear operator and returns `None`.
    pub fn operator_matrix(&self) -> Option<DMatrix<f64>> {
        match self.kind {
            LayerKind::Dense => Some(DMatrix::from_row_slice(self.out_dim, self.in_dim, self.weights.data())),
            LayerKind::Conv2d(g) => {
                let mut m = DMatrix::zeros(self.out_dim, self.in_dim);
                let w = self.weights.data();
                let (oh, ow, k) = (g.out_height(), g.out_width(), g.kernel);
                for oc in 0..g.out_channels {
                    for r in 0..oh {
                        for c in 0..ow {
                            let row = (oc * oh + r) * ow + c;
                            for ic in 0..g.in_channels {
                                for kr in 0..k {
                                    for kc in 0..k {
                                        let col =
                                            (ic * g.in_height + r * g.stride + kr) * g.in_width + c * g.stride + kc;
                                        m[(row, col)] += w[((oc * g.in_channels + ic) * k + kr) * k + kc];
                                    }
                                }
                            }
                        }
                    }
                }
                Some(m)
            }
            LayerKind::MaxPool(_) | LayerKind::AvgPool(_) => None,
        }
    }
}

#[inline]
fn pool_index(g: &PoolGeometry, ch: usize, r: usize, c: usize, wr: usize, wc: usize) -> usize {
    (ch * g.in_height + r * g.stride + wr) * g.in_width + c * g.stride + wc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_operator_matrix_matches_apply() {
        let g = ConvGeometry {
            in_channels: 2,
            in_height: 4,
            in_width: 3,
            out_channels: 3,
            kernel: 2,
            stride: 1,
        };
        let weights: Vec<f64> = (0..g.weight_shape().iter().product::<usize>())
            .map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0)
            .collect();
        let layer = Layer::conv2d(g, Tensor::new(g.weight_shape(), weights).unwrap(), Activation::Identity).unwrap();
        let x: Vec<f64> = (0..g.in_dim()).map(|i| (i as f64).sin()).collect();
        let out = layer
            .apply(&Tensor::new(vec![1, g.in_dim()], x.clone()).unwrap())
            .unwrap();
        let m = layer.operator_matrix().unwrap();
        let y = m * nalgebra::DVector::from_vec(x);
        for (a, b) in out.data().iter().zip(y.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(layer.out_dim(), 3 * 3 * 2);
    }

    #[test]
    fn pooling_forward() {
        let g = PoolGeometry {
            channels: 1,
            in_height: 2,
            in_width: 4,
            window: 2,
            stride: 2,
        };
        let x = Tensor::new(vec![1, 8], vec![1.0, 5.0, 2.0, 0.0, 3.0, -1.0, 4.0, 8.0]).unwrap();
        let max = Layer::max_pool(g).unwrap().apply(&x).unwrap();
        assert_eq!(max.data(), &[5.0, 8.0]);
        let avg = Layer::avg_pool(g).unwrap().apply(&x).unwrap();
        assert_eq!(avg.data(), &[2.0, 3.5]);
    }

    #[test]
    fn conv_rejects_bad_weight_shape() {
        let g = ConvGeometry {
            in_channels: 1,
            in_height: 3,
            in_width: 3,
            out_channels: 1,
            kernel: 2,
            stride: 1,
        };
        assert!(Layer::conv2d(g, Tensor::zeros(&[1, 1, 3, 3]), Activation::Relu).is_err());
    }
}
