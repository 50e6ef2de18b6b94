//! The end-to-end model: forest, RF-GAP proximities, class-wise prototypes,
//! geometric target, and the autoencoder trained on prototype probabilities.

use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Normalizer};
use crate::error::{RfaeError, Result};
use crate::forest::{prototype_probabilities, symmetrize, symmetrize_and_normalize, Forest, ForestParams};
use crate::kernel_extension::{
    fit_least_squares, fit_linear_reconstruction, fit_nystrom, EigenSelection, ExtensionKind, LinearExtension,
    Ridge,
};
use crate::network::{embed, train, EpochLoss, MlpSpec, NetworkWeights, TrainConfig, DEFAULT_HIDDEN};
use crate::prototypes::{build_dissimilarity, kmedoids_classwise, MedoidSet, PrototypeCount};
use crate::rng::derive_seed;
use crate::scalar::Scalar;
use crate::target::{diffusion_embed, DiffusionParams, TargetEmbedding};

/// Every hyperparameter of a fit. Stage seeds are derived from one master
/// seed by [`RfAeConfig::new`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfAeConfig {
    pub seed: u64,
    pub forest: ForestParams,
    pub n_prototypes: PrototypeCount,
    pub diffusion: DiffusionParams,
    /// Centre the target and scale it to unit RMS radius before training.
    pub standardize_target: bool,
    pub hidden: Vec<usize>,
    /// Cap every hidden width at `4 * N*`.
    pub clamp_hidden: bool,
    pub latent_dim: usize,
    pub train: TrainConfig,
    /// Also fit the least-squares, Nyström and linear-reconstruction baselines.
    pub kernel_extensions: bool,
    pub eigen_selection: EigenSelection,
}

impl RfAeConfig {
    pub fn new(seed: u64) -> Self {
        let mut c = RfAeConfig {
            seed,
            forest: ForestParams::default(),
            n_prototypes: PrototypeCount::default(),
            diffusion: DiffusionParams::default(),
            standardize_target: true,
            hidden: DEFAULT_HIDDEN.to_vec(),
            clamp_hidden: true,
            latent_dim: 2,
            train: TrainConfig::default(),
            kernel_extensions: true,
            eigen_selection: EigenSelection::default(),
        };
        c.reseed(seed);
        c
    }

    /// Re-derives every stage seed from `seed`.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.forest.seed = derive_seed(seed, "forest", 0);
        self.diffusion.seed = derive_seed(seed, "diffusion", 0);
        self.train.seed = derive_seed(seed, "network", 0);
    }

    pub fn network_spec(&self, n_prototypes: usize) -> MlpSpec {
        if self.clamp_hidden {
            MlpSpec::clamped(n_prototypes, &self.hidden, self.latent_dim)
        } else {
            MlpSpec::new(n_prototypes, self.hidden.clone(), self.latent_dim)
        }
    }
}

impl Default for RfAeConfig {
    fn default() -> Self {
        Self::new(0)
    }
}

/// How new points are mapped to the embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extension {
    RfAe,
    LeastSquares,
    Nystrom,
    LinearReconstruction,
}

impl Extension {
    pub fn kind(self) -> Option<ExtensionKind> {
        match self {
            Extension::RfAe => None,
            Extension::LeastSquares => Some(ExtensionKind::LeastSquares),
            Extension::Nystrom => Some(ExtensionKind::Nystrom),
            Extension::LinearReconstruction => Some(ExtensionKind::LinearReconstruction),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Extension::RfAe => "rfae",
            Extension::LeastSquares => "least-squares",
            Extension::Nystrom => "nystrom",
            Extension::LinearReconstruction => "linear-reconstruction",
        }
    }
}

impl FromStr for Extension {
    type Err = RfaeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rfae" => Ok(Extension::RfAe),
            "least-squares" => Ok(Extension::LeastSquares),
            "nystrom" => Ok(Extension::Nystrom),
            "linear-reconstruction" => Ok(Extension::LinearReconstruction),
            _ => Err(RfaeError::invalid(format!(
                "unknown extension {s:?} (expected rfae, least-squares, nystrom or linear-reconstruction)"
            ))),
        }
    }
}

/// Intermediate products of a fit, kept only on request.
#[derive(Debug, Clone)]
pub struct FitArtifacts {
    /// Raw RF-GAP matrix with self-similarity on the diagonal.
    pub rfgap: Array2<f64>,
    /// Symmetrized, row-normalized transition matrix.
    pub transition: Array2<f64>,
    pub dissimilarity: Array2<f64>,
    /// Target before standardization.
    pub raw_target: Array2<f64>,
    pub stage_seconds: Vec<(&'static str, f64)>,
}

/// A fitted model; the network runs in `T`, everything else in `f64`.
#[derive(Debug, Clone)]
pub struct RfAe<T> {
    pub config: RfAeConfig,
    pub normalizer: Normalizer,
    pub forest: Forest,
    pub medoids: MedoidSet,
    pub network: NetworkWeights<T>,
    pub target: TargetEmbedding<f64>,
    /// Prototype probabilities of the training rows, `N_train x N*`.
    pub train_p_star: Array2<f64>,
    /// Normalized training features.
    pub x_train: Array2<f64>,
    pub y_train: Vec<usize>,
    pub class_names: Vec<String>,
    pub feature_names: Option<Vec<String>>,
    pub history: Vec<EpochLoss>,
    pub extensions: Vec<LinearExtension<f64>>,
}

fn timed<R>(name: &'static str, log: &mut Vec<(&'static str, f64)>, f: impl FnOnce() -> Result<R>) -> Result<R> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(name))?;
    let secs = start.elapsed().as_secs_f64();
    log::info!("stage {name}: {secs:.2}s");
    log.push((name, secs));
    Ok(out)
}

/// Uniform distribution over the prototypes of `class`.
fn uniform_over_class(medoids: &MedoidSet, class: usize) -> Array1<f64> {
    let own = &medoids.per_class[class];
    let mut v = Array1::zeros(medoids.indices.len());
    let w = 1.0 / own.len() as f64;
    for (k, m) in medoids.indices.iter().enumerate() {
        if own.binary_search(m).is_ok() {
            v[k] = w;
        }
    }
    v
}

/// Restricts a proximity row to the prototypes; a row with no mass there
/// falls back to uniform weights over the prototypes of `class`.
fn p_star_row(row: ArrayView1<f64>, medoids: &MedoidSet, class: impl FnOnce() -> usize) -> Result<Array1<f64>> {
    match prototype_probabilities(row, &medoids.indices) {
        Ok(r) => Ok(r.values),
        Err(RfaeError::DisconnectedFromPrototypes) => {
            let c = class();
            log::warn!("point has no proximity to any prototype; using the prototypes of class {c}");
            Ok(uniform_over_class(medoids, c))
        }
        Err(e) => Err(e),
    }
}

impl<T: Scalar> RfAe<T> {
    pub fn fit(train_data: &Dataset, config: &RfAeConfig, target: Option<TargetEmbedding<f64>>) -> Result<Self> {
        Self::fit_detailed(train_data, config, target).map(|(m, _)| m)
    }

    /// Fits every stage in order; stage failures carry the stage name.
    pub fn fit_detailed(
        train_data: &Dataset,
        config: &RfAeConfig,
        target: Option<TargetEmbedding<f64>>,
    ) -> Result<(Self, FitArtifacts)> {
        config.train.validate()?;
        let n = train_data.n_samples();
        let q = train_data.n_classes();
        let y = train_data.labels.clone();
        let mut times = Vec::new();
        let all: Vec<usize> = (0..n).collect();
        let normalizer = Normalizer::fit(train_data.features.view(), &all)?;
        let x = normalizer.apply(train_data.features.view())?;

        if let Some(t) = &target {
            if t.n_points() != n {
                return Err(RfaeError::RowCountMismatch {
                    expected: n,
                    found: t.n_points(),
                }
                .in_stage("target"));
            }
        }

        let forest = timed("forest", &mut times, || Forest::fit(x.view(), &y, q, &config.forest))?;
        log::info!("forest OOB accuracy {:.4}", forest.oob_accuracy(&y));
        let (rfgap, transition) = timed("proximities", &mut times, || {
            let p = forest.rfgap_matrix()?;
            let pp = symmetrize_and_normalize(p.view())?;
            Ok((p, pp))
        })?;
        let (dissimilarity, medoids) = timed("prototypes", &mut times, || {
            let d = build_dissimilarity(transition.view())?;
            let k = config.n_prototypes.resolve(n);
            let m = kmedoids_classwise(&d, &y, q, k)?;
            Ok((d.values, m))
        })?;
        let train_p_star = timed("prototype-probabilities", &mut times, || {
            let rows: Vec<Array1<f64>> = (0..n)
                .into_par_iter()
                .map(|i| p_star_row(transition.row(i), &medoids, || forest.predict_one(x.row(i))))
                .collect::<Result<_>>()?;
            let mut m = Array2::zeros((n, medoids.indices.len()));
            for (i, r) in rows.into_iter().enumerate() {
                m.row_mut(i).assign(&r);
            }
            Ok(m)
        })?;
        let raw_target = timed("target", &mut times, || match target {
            Some(t) => Ok(t),
            None => {
                let mut params = config.diffusion;
                params.dim = config.latent_dim;
                Ok(diffusion_embed(transition.view(), &params)?.embedding)
            }
        })?;
        if raw_target.dim() != config.latent_dim {
            return Err(RfaeError::DimensionMismatch {
                expected: config.latent_dim,
                found: raw_target.dim(),
            }
            .in_stage("target"));
        }
        let target = if config.standardize_target {
            raw_target.standardized()
        } else {
            raw_target.clone()
        };

        let spec = config.network_spec(medoids.indices.len());
        let trained = timed("network", &mut times, || {
            let p: Array2<T> = train_p_star.mapv(T::of);
            let z: Array2<T> = target.coords.mapv(T::of);
            train(p.view(), z.view(), &spec, &config.train)
        })?;
        if let (Some(first), Some(last)) = (trained.history.first(), trained.history.last()) {
            log::info!("training loss {:.6e} -> {:.6e}", first.total, last.total);
        }

        let extensions = if config.kernel_extensions {
            timed("kernel-extensions", &mut times, || {
                let y = target.coords.view();
                let sym = symmetrize(rfgap.view())?;
                Ok(vec![
                    fit_least_squares(transition.view(), y, Ridge::Auto)?,
                    fit_nystrom(sym.view(), config.latent_dim, config.eigen_selection)?,
                    fit_linear_reconstruction(y),
                ])
            })?
        } else {
            Vec::new()
        };

        let model = RfAe {
            config: config.clone(),
            normalizer,
            forest,
            medoids,
            network: trained.weights,
            target,
            train_p_star,
            x_train: x,
            y_train: y,
            class_names: train_data.class_names.clone(),
            feature_names: train_data.feature_names.clone(),
            history: trained.history,
            extensions,
        };
        let artifacts = FitArtifacts {
            rfgap,
            transition,
            dissimilarity,
            raw_target: raw_target.coords,
            stage_seconds: times,
        };
        Ok((model, artifacts))
    }

    pub fn n_features(&self) -> usize {
        self.normalizer.dim()
    }

    pub fn n_prototypes(&self) -> usize {
        self.medoids.indices.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.network.spec.latent_dim
    }

    fn normalize(&self, x_raw: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x_raw.ncols() != self.n_features() {
            return Err(RfaeError::DimensionMismatch {
                expected: self.n_features(),
                found: x_raw.ncols(),
            });
        }
        self.normalizer.apply(x_raw)
    }

    /// Prototype probabilities of new (raw, unnormalized) rows.
    pub fn p_star(&self, x_raw: ArrayView2<f64>) -> Result<Array2<f64>> {
        let x = self.normalize(x_raw)?;
        self.p_star_normalized(x.view())
    }

    fn p_star_normalized(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((x.nrows(), self.n_prototypes()));
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(x.axis_iter(Axis(0)))
            .try_for_each(|(mut dst, row)| -> Result<()> {
                let prox = self.forest.rfgap_oos(row)?;
                dst.assign(&p_star_row(prox.view(), &self.medoids, || self.forest.predict_one(row))?);
                Ok(())
            })?;
        Ok(out)
    }

    /// Encoder embedding of new raw rows; labels are never used.
    pub fn transform(&self, x_raw: ArrayView2<f64>) -> Result<Array2<T>> {
        let p = self.p_star(x_raw)?.mapv(T::of);
        embed(&self.network, p.view())
    }

    /// Encoder embedding of the stored training rows.
    pub fn embed_training(&self) -> Result<Array2<T>> {
        embed(&self.network, self.train_p_star.mapv(T::of).view())
    }

    pub fn extension(&self, kind: ExtensionKind) -> Option<&LinearExtension<f64>> {
        self.extensions.iter().find(|e| e.kind == kind)
    }

    /// Training embedding of the chosen method. Kernel extensions are applied
    /// to the in-sample kernel they were fitted on, recomputed from the forest.
    pub fn embed_training_with(&self, method: Extension) -> Result<Array2<f64>> {
        let Some(kind) = method.kind() else {
            return Ok(self.embed_training()?.mapv(|v| v.as_f64()));
        };
        let ext = self.extension(kind).ok_or_else(|| {
            RfaeError::invalid(format!("model was saved without the {} extension", method.name()))
        })?;
        let raw = self.forest.rfgap_matrix()?;
        let k = if kind == ExtensionKind::Nystrom {
            symmetrize(raw.view())?
        } else {
            symmetrize_and_normalize(raw.view())?
        };
        ext.apply_rows(k.view())
    }

    /// Embedding of new raw rows by the chosen method, as `f64`.
    pub fn transform_with(&self, x_raw: ArrayView2<f64>, method: Extension) -> Result<Array2<f64>> {
        let Some(kind) = method.kind() else {
            return Ok(self.transform(x_raw)?.mapv(|v| v.as_f64()));
        };
        let ext = self.extension(kind).ok_or_else(|| {
            RfaeError::invalid(format!("model was saved without the {} extension", method.name()))
        })?;
        let x = self.normalize(x_raw)?;
        let mut k = self.forest.rfgap_oos_matrix(x.view())?;
        if kind != ExtensionKind::Nystrom {
            // least squares and linear reconstruction were fitted on row-stochastic kernels
            for mut row in k.outer_iter_mut() {
                let s = row.sum();
                if s > 0.0 {
                    row.mapv_inplace(|v| v / s);
                }
            }
        }
        ext.apply_rows(k.view())
    }
}
