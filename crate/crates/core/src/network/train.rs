//! Mini-batch training loop and encoder-only inference.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AdamWConfig, MlpSpec, NetworkWeights};
use crate::error::{RfaeError, Result};
use crate::rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the reconstruction term; `1 - lambda` goes to the geometric term.
    pub lambda: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.01,
            lr: 1e-3,
            weight_decay: 1e-5,
            batch_size: 512,
            epochs: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(RfaeError::invalid(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(RfaeError::invalid("learning rate must be positive and weight decay non-negative"));
        }
        if self.batch_size == 0 {
            return Err(RfaeError::invalid("batch size must be positive"));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamWConfig::default()
        }
    }
}

/// Row-averaged losses over one epoch. `recon` is `None` when the decoder was
/// not evaluated (`lambda = 0`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub epoch: usize,
    pub recon: Option<f64>,
    pub geo: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput<T> {
    pub weights: NetworkWeights<T>,
    pub history: Vec<EpochLoss>,
}

/// Trains a freshly initialized network on `p_star` (rows are probability
/// vectors) towards the target coordinates `target`.
pub fn train<T: Scalar>(
    p_star: ArrayView2<T>,
    target: ArrayView2<T>,
    spec: &MlpSpec,
    config: &TrainConfig,
) -> Result<TrainOutput<T>> {
    let weights = NetworkWeights::init(spec, config.seed)?;
    train_from(weights, p_star, target, config)
}

/// Continues training from existing weights and optimizer state.
pub fn train_from<T: Scalar>(
    mut weights: NetworkWeights<T>,
    p_star: ArrayView2<T>,
    target: ArrayView2<T>,
    config: &TrainConfig,
) -> Result<TrainOutput<T>> {
    config.validate()?;
    let n = p_star.nrows();
    if target.nrows() != n {
        return Err(RfaeError::RowCountMismatch {
            expected: n,
            found: target.nrows(),
        });
    }
    if target.ncols() != weights.spec.latent_dim {
        return Err(RfaeError::DimensionMismatch {
            expected: weights.spec.latent_dim,
            found: target.ncols(),
        });
    }
    if p_star.ncols() != weights.spec.input_dim {
        return Err(RfaeError::DimensionMismatch {
            expected: weights.spec.input_dim,
            found: p_star.ncols(),
        });
    }
    let mut history = Vec::with_capacity(config.epochs);
    if n == 0 {
        return Ok(TrainOutput { weights, history });
    }
    let batch = config.batch_size.min(n);
    let lambda = T::of(config.lambda);
    let decode = config.lambda != 0.0;
    let adamw = config.adamw();
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=config.epochs {
        let mut shuffle = rng::stream(config.seed, "shuffle", epoch as u64);
        order.shuffle(&mut shuffle);
        let (mut recon_sum, mut geo_sum, mut total_sum) = (0.0, 0.0, 0.0);
        for idx in order.chunks(batch) {
            let bp = p_star.select(Axis(0), idx);
            let bt = target.select(Axis(0), idx);
            let (parts, grads) = weights.loss_and_gradients(bp.view(), bt.view(), lambda)?;
            let (r, g, t) = (parts.recon.as_f64(), parts.geo.as_f64(), parts.total.as_f64());
            if !(r.is_finite() && g.is_finite() && t.is_finite()) {
                return Err(RfaeError::NonFiniteLoss { epoch, recon: r, geo: g });
            }
            let w = idx.len() as f64;
            recon_sum += r * w;
            geo_sum += g * w;
            total_sum += t * w;
            let NetworkWeights { layers, optimizer, .. } = &mut weights;
            optimizer.step(&adamw, layers, &grads);
        }
        if !weights.is_finite() {
            return Err(RfaeError::NonFiniteLoss {
                epoch,
                recon: f64::NAN,
                geo: f64::NAN,
            });
        }
        let nf = n as f64;
        let entry = EpochLoss {
            epoch,
            recon: decode.then_some(recon_sum / nf),
            geo: geo_sum / nf,
            total: total_sum / nf,
        };
        log::debug!(
            "epoch {epoch}: total {:.6e}, geo {:.6e}, recon {:?}",
            entry.total,
            entry.geo,
            entry.recon
        );
        history.push(entry);
    }
    Ok(TrainOutput { weights, history })
}

/// Rows per encoder call in [`embed`]; fixed so results do not depend on
/// the number of worker threads.
const EMBED_CHUNK: usize = 1024;

/// Encoder-only embedding of (possibly out-of-sample) probability rows.
pub fn embed<T: Scalar>(weights: &NetworkWeights<T>, p_star: ArrayView2<T>) -> Result<Array2<T>> {
    if p_star.ncols() != weights.spec.input_dim {
        return Err(RfaeError::DimensionMismatch {
            expected: weights.spec.input_dim,
            found: p_star.ncols(),
        });
    }
    let d = weights.spec.latent_dim;
    if p_star.nrows() == 0 {
        return Ok(Array2::zeros((0, d)));
    }
    let parts: Vec<Array2<T>> = p_star
        .axis_chunks_iter(Axis(0), EMBED_CHUNK)
        .into_par_iter()
        .map(|chunk| weights.encode(chunk))
        .collect::<Result<_>>()?;
    let views: Vec<_> = parts.iter().map(|a| a.view()).collect();
    Ok(ndarray::concatenate(Axis(0), &views).expect("equal widths"))
}

/// Writes the loss history as `epoch,recon_loss,geo_loss,total`. A skipped
/// reconstruction term is written as an empty field.
pub fn write_loss_history(path: impl AsRef<Path>, history: &[EpochLoss]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "recon_loss", "geo_loss", "total"])?;
    for h in history {
        w.write_record([
            h.epoch.to_string(),
            h.recon.map(|r| r.to_string()).unwrap_or_default(),
            h.geo.to_string(),
            h.total.to_string(),
        ])?;
    }
    w.flush().map_err(|e| RfaeError::io(path, e))?;
    Ok(())
}
