//! Fully connected autoencoder with ELU hidden layers, a linear bottleneck
//! and a softmax output, trained on a mix of Jensen-Shannon reconstruction
//! and squared-distance geometric losses.
//!
//! Forward and backward passes are written out by hand over `ndarray`
//! matrices; batches are row-major `B x features`.

pub mod loss;
mod optim;
mod train;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{RfaeError, Result};
use crate::rng;
use crate::scalar::Scalar;

pub use loss::{geometric_loss, jsd, total_loss, LossParts};
pub use optim::{AdamW, AdamWConfig};
pub use train::{embed, train, train_from, write_loss_history, EpochLoss, TrainConfig, TrainOutput};

/// Default encoder widths; the decoder mirrors them.
pub const DEFAULT_HIDDEN: [usize; 3] = [800, 400, 100];

/// Layer widths of the autoencoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub decoder_hidden: Vec<usize>,
}

impl MlpSpec {
    /// Encoder widths as given, decoder mirrored, output width = input width.
    pub fn new(input_dim: usize, encoder_hidden: Vec<usize>, latent_dim: usize) -> Self {
        let decoder_hidden = encoder_hidden.iter().rev().copied().collect();
        MlpSpec {
            input_dim,
            encoder_hidden,
            latent_dim,
            decoder_hidden,
        }
    }

    /// 800-400-100 encoder into a 2-d bottleneck, each hidden width capped at
    /// `4 * input_dim`.
    pub fn rfae(input_dim: usize) -> Self {
        Self::clamped(input_dim, &DEFAULT_HIDDEN, 2)
    }

    pub fn clamped(input_dim: usize, hidden: &[usize], latent_dim: usize) -> Self {
        let cap = 4 * input_dim.max(1);
        Self::new(input_dim, hidden.iter().map(|&h| h.min(cap)).collect(), latent_dim)
    }

    pub fn validate(&self) -> Result<()> {
        let zero = self.input_dim == 0
            || self.latent_dim == 0
            || self.encoder_hidden.contains(&0)
            || self.decoder_hidden.contains(&0);
        if zero {
            return Err(RfaeError::invalid("layer widths must be positive"));
        }
        Ok(())
    }

    pub fn output_dim(&self) -> usize {
        self.input_dim
    }

    /// Number of weight layers in the encoder (the last one is the bottleneck).
    pub fn n_encoder_layers(&self) -> usize {
        self.encoder_hidden.len() + 1
    }

    /// `(fan_in, fan_out)` of every weight layer, encoder first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![self.input_dim];
        widths.extend(&self.encoder_hidden);
        widths.push(self.latent_dim);
        widths.extend(&self.decoder_hidden);
        widths.push(self.output_dim());
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

/// Weight matrix stored `fan_out x fan_in` plus bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            weight: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    /// `A W^T + b`
    fn affine(&self, a: ArrayView2<T>) -> Array2<T> {
        let mut z = a.dot(&self.weight.t());
        z += &self.bias;
        z
    }
}

/// Network parameters together with the optimizer state that updates them.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights<T> {
    pub spec: MlpSpec,
    pub layers: Vec<Layer<T>>,
    pub optimizer: AdamW<T>,
}

#[inline]
fn elu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
fn elu_grad<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        x.exp()
    }
}

/// Row-wise numerically stable softmax.
pub fn softmax_rows<T: Scalar>(z: &Array2<T>) -> Array2<T> {
    let mut out = z.clone();
    for mut row in out.outer_iter_mut() {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.iter().fold(T::zero(), |a, &b| a + b);
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// Input to every evaluated layer.
    pub inputs: Vec<Array2<T>>,
    /// Pre-activation output of every evaluated layer.
    pub pre: Vec<Array2<T>>,
}

/// Output of a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput<T> {
    pub latent: Array2<T>,
    /// Softmax reconstruction; `None` when the decoder was skipped.
    pub recon: Option<Array2<T>>,
    pub cache: ForwardCache<T>,
}

/// Gradients, one entry per layer, shaped like the parameters.
pub type Gradients<T> = Vec<Layer<T>>;

impl<T: Scalar> NetworkWeights<T> {
    /// He-normal weights (`variance = 2 / fan_in`) and zero biases.
    pub fn init(spec: &MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_shapes()
            .into_iter()
            .enumerate()
            .map(|(l, (fan_in, fan_out))| {
                let mut rng = rng::stream(seed, "init", l as u64);
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive sd");
                Layer {
                    weight: Array2::from_shape_simple_fn((fan_out, fan_in), || {
                        T::of(normal.sample(&mut rng))
                    }),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect::<Vec<_>>();
        let optimizer = AdamW::new(&layers);
        Ok(NetworkWeights {
            spec: spec.clone(),
            layers,
            optimizer,
        })
    }

    /// Parameters with fresh optimizer state.
    pub fn from_layers(spec: MlpSpec, layers: Vec<Layer<T>>) -> Result<Self> {
        let shapes = spec.layer_shapes();
        if shapes.len() != layers.len() {
            return Err(RfaeError::invalid("layer count does not match the spec"));
        }
        for (&(fi, fo), l) in shapes.iter().zip(&layers) {
            if l.weight.dim() != (fo, fi) || l.bias.len() != fo {
                return Err(RfaeError::invalid("layer shape does not match the spec"));
            }
        }
        let optimizer = AdamW::new(&layers);
        Ok(NetworkWeights {
            spec,
            layers,
            optimizer,
        })
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, batch: ArrayView2<T>) -> Result<()> {
        if batch.ncols() != self.spec.input_dim {
            return Err(RfaeError::DimensionMismatch {
                expected: self.spec.input_dim,
                found: batch.ncols(),
            });
        }
        if let Some(((row, column), _)) = batch.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(RfaeError::NonFinite { row, column });
        }
        Ok(())
    }

    /// Encoder only: bottleneck coordinates for each input row.
    pub fn encode(&self, batch: ArrayView2<T>) -> Result<Array2<T>> {
        self.check_input(batch)?;
        let n_enc = self.spec.n_encoder_layers();
        let mut a = batch.to_owned();
        for (l, layer) in self.layers[..n_enc].iter().enumerate() {
            let z = layer.affine(a.view());
            a = if l + 1 == n_enc { z } else { z.mapv(elu) };
        }
        Ok(a)
    }

    /// Full forward pass. With `decode = false` the decoder is skipped, which
    /// is exact for training when the reconstruction weight is zero.
    pub fn forward(&self, batch: ArrayView2<T>, decode: bool) -> Result<ForwardOutput<T>> {
        self.check_input(batch)?;
        let n_enc = self.spec.n_encoder_layers();
        let n_layers = if decode { self.layers.len() } else { n_enc };
        let mut inputs = Vec::with_capacity(n_layers);
        let mut pre = Vec::with_capacity(n_layers);
        let mut a = batch.to_owned();
        let mut latent = None;
        for l in 0..n_layers {
            let z = self.layers[l].affine(a.view());
            inputs.push(a);
            let last_of_encoder = l + 1 == n_enc;
            let last = l + 1 == self.layers.len();
            a = if last_of_encoder || last {
                z.clone()
            } else {
                z.mapv(elu)
            };
            if last_of_encoder {
                latent = Some(z.clone());
            }
            pre.push(z);
        }
        let recon = decode.then(|| softmax_rows(&a));
        Ok(ForwardOutput {
            latent: latent.expect("encoder always runs"),
            recon,
            cache: ForwardCache { inputs, pre },
        })
    }

    /// Gradients of the mean batch loss
    /// `lambda * JSD(p, p̂) + (1 - lambda) * |z - z^G|^2`.
    pub fn backward(
        &self,
        out: &ForwardOutput<T>,
        batch_p: ArrayView2<T>,
        batch_target: ArrayView2<T>,
        lambda: T,
    ) -> Gradients<T> {
        let b = batch_p.nrows();
        let inv_b = T::one() / T::of_usize(b.max(1));
        let n_enc = self.spec.n_encoder_layers();
        let n_eval = out.cache.pre.len();
        let mut grads: Gradients<T> = self
            .spec
            .layer_shapes()
            .into_iter()
            .map(|(i, o)| Layer::zeros(i, o))
            .collect();

        // gradient w.r.t. the pre-activation of the current layer
        let mut delta: Option<Array2<T>> = None;
        if n_eval == self.layers.len() && lambda != T::zero() {
            let q = out.recon.as_ref().expect("decoder evaluated");
            let mut d = Array2::zeros(q.raw_dim());
            let mut g = vec![T::zero(); q.ncols()];
            for i in 0..b {
                loss::jsd_grad_q(batch_p.row(i), q.row(i), &mut g);
                let qi = q.row(i);
                let mean: T = qi.iter().zip(&g).map(|(&a, &b)| a * b).fold(T::zero(), |x, y| x + y);
                let scale = lambda * inv_b;
                for (k, dv) in d.row_mut(i).iter_mut().enumerate() {
                    *dv = scale * qi[k] * (g[k] - mean);
                }
            }
            delta = Some(d);
        }
        for l in (0..n_eval).rev() {
            if l + 1 == n_enc {
                // bottleneck: add the geometric term
                let geo_scale = (T::one() - lambda) * T::of(2.0) * inv_b;
                let mut geo = &out.latent - &batch_target;
                geo.mapv_inplace(|v| v * geo_scale);
                delta = Some(match delta {
                    Some(d) => d + geo,
                    None => geo,
                });
            }
            let Some(d) = delta.take() else {
                // decoder layers with no reconstruction gradient stay zero
                continue;
            };
            grads[l].weight = d.t().dot(&out.cache.inputs[l]);
            grads[l].bias = d.sum_axis(Axis(0));
            if l > 0 {
                let mut upstream = d.dot(&self.layers[l].weight);
                // the bottleneck is linear; every other hidden layer is ELU
                if l != n_enc {
                    upstream.zip_mut_with(&out.cache.pre[l - 1], |u, &z| *u = *u * elu_grad(z));
                }
                delta = Some(upstream);
            }
        }
        grads
    }

    /// Forward plus backward; returns the loss parts and the gradients.
    pub fn loss_and_gradients(
        &self,
        batch_p: ArrayView2<T>,
        batch_target: ArrayView2<T>,
        lambda: T,
    ) -> Result<(LossParts<T>, Gradients<T>)> {
        let decode = lambda != T::zero();
        let out = self.forward(batch_p, decode)?;
        let parts = match &out.recon {
            Some(r) => total_loss(batch_p, batch_target, out.latent.view(), r.view(), lambda),
            None => {
                // decoder skipped: the reconstruction term has zero weight
                let geo = total_loss(batch_p, batch_target, out.latent.view(), batch_p, T::zero());
                LossParts {
                    recon: T::zero(),
                    geo: geo.geo,
                    total: geo.total,
                }
            }
        };
        let grads = self.backward(&out, batch_p, batch_target, lambda);
        Ok((parts, grads))
    }
}
