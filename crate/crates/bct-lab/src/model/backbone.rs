//! Fully-connected embedding backbone with manual backpropagation.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng::Stream;

/// One affine layer; `weight` is out×in so a batch maps as `x · wᵀ + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// An MLP mapping `in_dim` inputs to `embed_dim` embeddings. ReLU follows
/// every layer except the last, which stays affine so embeddings can point
/// anywhere on the sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    layers: Vec<DenseLayer>,
}

/// Per-layer activations recorded by `forward_traced`, consumed by `backward`.
pub struct ForwardTrace {
    /// Input to each layer: `inputs[0]` is the batch, `inputs[l]` the
    /// post-activation output of layer l-1.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation output of each layer (ReLU mask source).
    pre: Vec<Array2<f64>>,
}

/// Parameter gradients, shaped exactly like the backbone's layers.
#[derive(Debug, Clone)]
pub struct BackboneGrads {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Backbone {
    /// He-style initialization: weights ~ N(0, 2/fan_in), zero biases.
    /// `widths` lists every layer width including input and embedding ends.
    pub fn init(widths: &[usize], rng: &mut Stream) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument(
                "backbone needs at least input and embedding widths".into(),
            ));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidArgument("zero layer width".into()));
        }
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for w in widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = (2.0 / fan_in as f64).sqrt();
            let mut weight = Array2::<f64>::zeros((fan_out, fan_in));
            for v in weight.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = std * z;
            }
            layers.push(DenseLayer { weight, bias: Array1::zeros(fan_out) });
        }
        Ok(Self { layers })
    }

    /// Wraps existing layers, validating the shape chain and finiteness.
    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("backbone needs at least one layer".into()));
        }
        for (l, layer) in layers.iter().enumerate() {
            if layer.weight.nrows() != layer.bias.len() {
                return Err(Error::InvalidArgument(format!(
                    "layer {l}: weight rows {} != bias len {}",
                    layer.weight.nrows(),
                    layer.bias.len()
                )));
            }
            if l > 0 && layers[l - 1].weight.nrows() != layer.weight.ncols() {
                return Err(Error::InvalidArgument(format!(
                    "layer {l}: input width {} does not chain from previous output {}",
                    layer.weight.ncols(),
                    layers[l - 1].weight.nrows()
                )));
            }
            let finite = layer.weight.iter().chain(layer.bias.iter()).all(|v| v.is_finite());
            if !finite {
                return Err(Error::InvalidArgument(format!("layer {l}: non-finite parameter")));
            }
        }
        Ok(Self { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn embed_dim(&self) -> usize {
        self.layers.last().unwrap().weight.nrows()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// Layer widths including both ends, e.g. `[16, 64, 64, 8]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.in_dim()];
        w.extend(self.layers.iter().map(|l| l.weight.nrows()));
        w
    }

    fn check_batch(&self, batch: &ArrayView2<f64>) -> Result<()> {
        if batch.ncols() != self.in_dim() {
            return Err(Error::InvalidArgument(format!(
                "batch width {} != backbone input width {}",
                batch.ncols(),
                self.in_dim()
            )));
        }
        Ok(())
    }

    /// Embeds a batch: affine+ReLU chain, last layer affine only.
    pub fn forward_embed(&self, batch: &ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_batch(batch)?;
        let mut a = batch.to_owned();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weight.t());
            z += &layer.bias;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok(a)
    }

    /// Like `forward_embed` but records activations for `backward`.
    pub fn forward_traced(&self, batch: &ArrayView2<f64>) -> Result<(Array2<f64>, ForwardTrace)> {
        self.check_batch(batch)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = batch.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            inputs.push(a.clone());
            let mut z = a.dot(&layer.weight.t());
            z += &layer.bias;
            pre.push(z.clone());
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            a = z;
        }
        Ok((a, ForwardTrace { inputs, pre }))
    }

    /// Backpropagates `grad_emb` (dLoss/dEmbedding) through the trace,
    /// returning parameter gradients for every layer.
    pub fn backward(&self, trace: &ForwardTrace, grad_emb: &ArrayView2<f64>) -> Result<BackboneGrads> {
        if trace.inputs.len() != self.layers.len() {
            return Err(Error::InvalidArgument("trace does not match backbone depth".into()));
        }
        if grad_emb.ncols() != self.embed_dim() || grad_emb.nrows() != trace.inputs[0].nrows() {
            return Err(Error::InvalidArgument("grad_emb shape mismatch".into()));
        }
        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = self
            .layers
            .iter()
            .map(|l| (Array2::zeros(l.weight.raw_dim()), Array1::zeros(l.bias.raw_dim())))
            .collect();

        // d holds dLoss/d(pre-activation of layer l) while iterating downward.
        let mut d = grad_emb.to_owned();
        for l in (0..self.layers.len()).rev() {
            grads[l].0 = d.t().dot(&trace.inputs[l]);
            grads[l].1 = d.sum_axis(Axis(0));
            if l > 0 {
                let mut back = d.dot(&self.layers[l].weight);
                // ReLU mask of the previous layer: gradient flows where the
                // pre-activation was strictly positive.
                back.zip_mut_with(&trace.pre[l - 1], |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
                d = back;
            }
        }
        Ok(BackboneGrads { layers: grads })
    }
}
