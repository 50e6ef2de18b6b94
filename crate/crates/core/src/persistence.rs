//! `.rfae` model files.
//!
//! Layout: 8-byte magic, little-endian `u64` header length, JSON header,
//! then the sections listed in the header, each a little-endian `u64` byte
//! length followed by little-endian `f64` or `u32` values. A CRC32 of
//! everything before it closes the file.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dataset::Normalizer;
use crate::error::{RfaeError, Result};
use crate::forest::{Forest, Tree, TreeNode};
use crate::kernel_extension::{ExtensionKind, LinearExtension};
use crate::network::{EpochLoss, Layer, MlpSpec, NetworkWeights};
use crate::pipeline::{RfAe, RfAeConfig};
use crate::prototypes::MedoidSet;
use crate::scalar::Scalar;
use crate::target::{TargetEmbedding, TargetSource};

pub const MAGIC: &[u8; 8] = b"RFAEMDL\0";
pub const FORMAT_VERSION: u32 = 1;

/// Everything inference and evaluation need, as stored on disk.
pub type ModelBundle<T> = RfAe<T>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Dtype {
    F64,
    U32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SectionMeta {
    name: String,
    dtype: Dtype,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Dims {
    n_train: usize,
    n_features: usize,
    n_classes: usize,
    n_prototypes: usize,
    n_trees: usize,
    latent_dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    scalar: String,
    dims: Dims,
    config: RfAeConfig,
    network: MlpSpec,
    optimizer_step: u64,
    target_source: TargetSource,
    class_names: Vec<String>,
    feature_names: Option<Vec<String>>,
    extensions: Vec<ExtensionKind>,
    sections: Vec<SectionMeta>,
}

#[derive(Default)]
struct Writer {
    sections: Vec<SectionMeta>,
    body: Vec<u8>,
}

impl Writer {
    fn f64s(&mut self, name: impl Into<String>, shape: &[usize], data: impl IntoIterator<Item = f64>) {
        let start = self.body.len();
        self.body.extend_from_slice(&0u64.to_le_bytes());
        for v in data {
            self.body.extend_from_slice(&v.to_le_bytes());
        }
        self.finish(start, name.into(), Dtype::F64, shape);
    }

    fn u32s(&mut self, name: impl Into<String>, shape: &[usize], data: impl IntoIterator<Item = u32>) {
        let start = self.body.len();
        self.body.extend_from_slice(&0u64.to_le_bytes());
        for v in data {
            self.body.extend_from_slice(&v.to_le_bytes());
        }
        self.finish(start, name.into(), Dtype::U32, shape);
    }

    fn finish(&mut self, start: usize, name: String, dtype: Dtype, shape: &[usize]) {
        let len = (self.body.len() - start - 8) as u64;
        self.body[start..start + 8].copy_from_slice(&len.to_le_bytes());
        let width = match dtype {
            Dtype::F64 => 8,
            Dtype::U32 => 4,
        };
        debug_assert_eq!(len as usize, shape.iter().product::<usize>() * width, "section {name}");
        self.sections.push(SectionMeta {
            name,
            dtype,
            shape: shape.to_vec(),
        });
    }

    fn matrix<T: Scalar>(&mut self, name: impl Into<String>, m: &Array2<T>) {
        self.f64s(name, &[m.nrows(), m.ncols()], m.iter().map(|v| v.as_f64()));
    }
}

fn to_u32(v: usize) -> u32 {
    u32::try_from(v).expect("value fits in u32")
}

fn write_forest(w: &mut Writer, forest: &Forest) {
    let n = forest.n_train;
    let t = forest.n_trees();
    let mut node_offsets = vec![0u32];
    let mut leaf_offsets = vec![0u32];
    let (mut feature, mut left, mut right, mut threshold) = (vec![], vec![], vec![], vec![]);
    for tree in &forest.trees {
        for node in &tree.nodes {
            match *node {
                TreeNode::Split {
                    feature: f,
                    threshold: th,
                    left: l,
                    right: r,
                } => {
                    feature.push(to_u32(f));
                    left.push(to_u32(l));
                    right.push(to_u32(r));
                    threshold.push(th);
                }
                TreeNode::Leaf { leaf_id } => {
                    feature.push(u32::MAX);
                    left.push(to_u32(leaf_id));
                    right.push(0);
                    threshold.push(0.0);
                }
            }
        }
        node_offsets.push(to_u32(feature.len()));
        leaf_offsets.push(leaf_offsets.last().unwrap() + to_u32(tree.n_leaves()));
    }
    let n_nodes = feature.len();
    let n_leaves = *leaf_offsets.last().unwrap() as usize;
    w.u32s("forest.node_offsets", &[t + 1], node_offsets);
    w.u32s("forest.node_feature", &[n_nodes], feature);
    w.u32s("forest.node_left", &[n_nodes], left);
    w.u32s("forest.node_right", &[n_nodes], right);
    w.f64s("forest.node_threshold", &[n_nodes], threshold);
    w.u32s("forest.leaf_offsets", &[t + 1], leaf_offsets);
    w.u32s("forest.leaf_mass", &[n_leaves], forest.trees.iter().flat_map(|tr| tr.leaf_mass.iter().copied()));
    w.u32s("forest.leaf_class", &[n_leaves], forest.trees.iter().flat_map(|tr| tr.leaf_class.iter().copied()));
    w.u32s("forest.inbag_counts", &[t, n], forest.trees.iter().flat_map(|tr| tr.inbag_counts.iter().copied()));
    w.u32s("forest.leaf_of_train", &[t, n], forest.trees.iter().flat_map(|tr| tr.leaf_of_train.iter().copied()));
}

/// Serializes a fitted model.
pub fn save<T: Scalar>(model: &RfAe<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(model)?;
    std::fs::write(path, bytes).map_err(|e| RfaeError::io(path, e))
}

pub fn to_bytes<T: Scalar>(model: &RfAe<T>) -> Result<Vec<u8>> {
    let mut w = Writer::default();
    w.f64s("normalizer.min", &[model.normalizer.dim()], model.normalizer.min.iter().copied());
    w.f64s("normalizer.max", &[model.normalizer.dim()], model.normalizer.max.iter().copied());
    write_forest(&mut w, &model.forest);
    w.u32s("medoids.indices", &[model.medoids.indices.len()], model.medoids.indices.iter().map(|&i| to_u32(i)));
    let class_of_medoid: Vec<u32> = model
        .medoids
        .indices
        .iter()
        .map(|m| {
            let c = model.medoids.per_class.iter().position(|pc| pc.binary_search(m).is_ok());
            to_u32(c.expect("every medoid belongs to a class"))
        })
        .collect();
    w.u32s("medoids.class", &[class_of_medoid.len()], class_of_medoid);
    for (l, layer) in model.network.layers.iter().enumerate() {
        w.matrix(format!("network.{l}.weight"), &layer.weight);
        w.f64s(format!("network.{l}.bias"), &[layer.bias.len()], layer.bias.iter().map(|v| v.as_f64()));
    }
    let opt = &model.network.optimizer;
    for (l, (m, v)) in opt.m.iter().zip(&opt.v).enumerate() {
        w.matrix(format!("adamw.{l}.m_weight"), &m.weight);
        w.f64s(format!("adamw.{l}.m_bias"), &[m.bias.len()], m.bias.iter().map(|x| x.as_f64()));
        w.matrix(format!("adamw.{l}.v_weight"), &v.weight);
        w.f64s(format!("adamw.{l}.v_bias"), &[v.bias.len()], v.bias.iter().map(|x| x.as_f64()));
    }
    w.matrix("target", &model.target.coords);
    w.matrix("train_p_star", &model.train_p_star);
    w.matrix("x_train", &model.x_train);
    w.u32s("y_train", &[model.y_train.len()], model.y_train.iter().map(|&y| to_u32(y)));
    w.f64s(
        "history",
        &[model.history.len(), 4],
        model
            .history
            .iter()
            .flat_map(|h| [h.epoch as f64, h.recon.unwrap_or(f64::NAN), h.geo, h.total]),
    );
    for ext in &model.extensions {
        w.matrix(format!("extension.{}", ext.kind), &ext.w);
    }

    let header = Header {
        format_version: FORMAT_VERSION,
        scalar: std::any::type_name::<T>().to_string(),
        dims: Dims {
            n_train: model.forest.n_train,
            n_features: model.forest.n_features,
            n_classes: model.forest.n_classes,
            n_prototypes: model.medoids.indices.len(),
            n_trees: model.forest.n_trees(),
            latent_dim: model.network.spec.latent_dim,
        },
        config: model.config.clone(),
        network: model.network.spec.clone(),
        optimizer_step: opt.step,
        target_source: model.target.source,
        class_names: model.class_names.clone(),
        feature_names: model.feature_names.clone(),
        extensions: model.extensions.iter().map(|e| e.kind).collect(),
        sections: w.sections,
    };
    let json = serde_json::to_vec_pretty(&header).map_err(|e| RfaeError::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(8 + 8 + json.len() + w.body.len() + 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&w.body);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

enum Data {
    F64(Vec<f64>),
    U32(Vec<u32>),
}

struct Reader {
    sections: HashMap<String, (Vec<usize>, Data)>,
}

impl Reader {
    fn take(&mut self, name: &str) -> Result<(Vec<usize>, Data)> {
        self.sections
            .remove(name)
            .ok_or_else(|| RfaeError::Format(format!("missing section {name}")))
    }

    fn f64s(&mut self, name: &str) -> Result<(Vec<usize>, Vec<f64>)> {
        match self.take(name)? {
            (s, Data::F64(v)) => Ok((s, v)),
            _ => Err(RfaeError::Format(format!("section {name} is not f64"))),
        }
    }

    fn u32s(&mut self, name: &str) -> Result<Vec<u32>> {
        match self.take(name)? {
            (_, Data::U32(v)) => Ok(v),
            _ => Err(RfaeError::Format(format!("section {name} is not u32"))),
        }
    }

    fn vector(&mut self, name: &str) -> Result<Array1<f64>> {
        Ok(Array1::from(self.f64s(name)?.1))
    }

    fn matrix<T: Scalar>(&mut self, name: &str) -> Result<Array2<T>> {
        let (shape, v) = self.f64s(name)?;
        if shape.len() != 2 {
            return Err(RfaeError::Format(format!("section {name} is not a matrix")));
        }
        Array2::from_shape_vec((shape[0], shape[1]), v.into_iter().map(T::of).collect())
            .map_err(|e| RfaeError::Format(format!("section {name}: {e}")))
    }
}

fn read_forest(r: &mut Reader, dims: &Dims) -> Result<Forest> {
    let node_offsets = r.u32s("forest.node_offsets")?;
    let feature = r.u32s("forest.node_feature")?;
    let left = r.u32s("forest.node_left")?;
    let right = r.u32s("forest.node_right")?;
    let (_, threshold) = r.f64s("forest.node_threshold")?;
    let leaf_offsets = r.u32s("forest.leaf_offsets")?;
    let leaf_mass = r.u32s("forest.leaf_mass")?;
    let leaf_class = r.u32s("forest.leaf_class")?;
    let inbag = r.u32s("forest.inbag_counts")?;
    let leaf_of_train = r.u32s("forest.leaf_of_train")?;
    let (t, n) = (dims.n_trees, dims.n_train);
    let consistent = node_offsets.len() == t + 1
        && leaf_offsets.len() == t + 1
        && inbag.len() == t * n
        && leaf_of_train.len() == t * n
        && [left.len(), right.len(), threshold.len()].iter().all(|&l| l == feature.len())
        && node_offsets.last().map(|&o| o as usize) == Some(feature.len())
        && leaf_offsets.last().map(|&o| o as usize) == Some(leaf_mass.len())
        && leaf_class.len() == leaf_mass.len();
    if !consistent {
        return Err(RfaeError::Format("forest sections are inconsistent".into()));
    }
    let mut trees = Vec::with_capacity(t);
    for k in 0..t {
        let (a, b) = (node_offsets[k] as usize, node_offsets[k + 1] as usize);
        let (la, lb) = (leaf_offsets[k] as usize, leaf_offsets[k + 1] as usize);
        let n_leaves = lb - la;
        let n_nodes = b - a;
        let nodes = (a..b)
            .map(|i| {
                if feature[i] == u32::MAX {
                    let leaf_id = left[i] as usize;
                    (leaf_id < n_leaves)
                        .then_some(TreeNode::Leaf { leaf_id })
                        .ok_or_else(|| RfaeError::Format("leaf id out of range".into()))
                } else {
                    let (l, r) = (left[i] as usize, right[i] as usize);
                    if l >= n_nodes || r >= n_nodes || feature[i] as usize >= dims.n_features {
                        return Err(RfaeError::Format("tree node out of range".into()));
                    }
                    Ok(TreeNode::Split {
                        feature: feature[i] as usize,
                        threshold: threshold[i],
                        left: l,
                        right: r,
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let lot = leaf_of_train[k * n..(k + 1) * n].to_vec();
        if lot.iter().any(|&l| l as usize >= n_leaves) {
            return Err(RfaeError::Format("training leaf index out of range".into()));
        }
        let tree = Tree::from_parts(
            nodes,
            inbag[k * n..(k + 1) * n].to_vec(),
            lot,
            leaf_mass[la..lb].to_vec(),
            leaf_class[la..lb].to_vec(),
        );
        trees.push(tree);
    }
    Ok(Forest::from_trees(trees, n, dims.n_classes, dims.n_features))
}

/// Restores a model written by [`save`]. Network parameters are converted
/// to `T`.
pub fn load<T: Scalar>(path: impl AsRef<Path>) -> Result<RfAe<T>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| RfaeError::io(path, e))?;
    from_bytes(&bytes)
}

pub fn from_bytes<T: Scalar>(bytes: &[u8]) -> Result<RfAe<T>> {
    let truncated = || RfaeError::Format("truncated file".into());
    if bytes.len() < MAGIC.len() + 8 + 4 {
        return Err(truncated());
    }
    if &bytes[..8] != MAGIC {
        return Err(RfaeError::Format("not an rfae model file".into()));
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(payload);
    if stored != computed {
        return Err(RfaeError::Checksum { stored, computed });
    }
    let header_len = u64::from_le_bytes(payload[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize.checked_add(header_len).filter(|&e| e <= payload.len()).ok_or_else(truncated)?;
    // read the version alone first so newer headers fail with a clear message
    let version: serde_json::Value =
        serde_json::from_slice(&payload[16..header_end]).map_err(|e| RfaeError::Format(e.to_string()))?;
    let found = version.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != FORMAT_VERSION {
        return Err(RfaeError::UnsupportedVersion {
            found,
            supported: FORMAT_VERSION,
        });
    }
    let header: Header = serde_json::from_value(version).map_err(|e| RfaeError::Format(e.to_string()))?;

    let mut pos = header_end;
    let mut sections = HashMap::new();
    for meta in &header.sections {
        let len_end = pos.checked_add(8).filter(|&e| e <= payload.len()).ok_or_else(truncated)?;
        let len = u64::from_le_bytes(payload[pos..len_end].try_into().expect("8 bytes")) as usize;
        let end = len_end.checked_add(len).filter(|&e| e <= payload.len()).ok_or_else(truncated)?;
        let raw = &payload[len_end..end];
        let count: usize = meta.shape.iter().product();
        let data = match meta.dtype {
            Dtype::F64 if raw.len() == count * 8 => Data::F64(
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect(),
            ),
            Dtype::U32 if raw.len() == count * 4 => Data::U32(
                raw.chunks_exact(4)
                    .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            ),
            _ => return Err(RfaeError::Format(format!("section {} has the wrong length", meta.name))),
        };
        sections.insert(meta.name.clone(), (meta.shape.clone(), data));
        pos = end;
    }
    if pos != payload.len() {
        return Err(RfaeError::Format("trailing bytes after the last section".into()));
    }
    let mut r = Reader { sections };
    let dims = &header.dims;

    let normalizer = Normalizer {
        min: r.vector("normalizer.min")?,
        max: r.vector("normalizer.max")?,
    };
    let forest = read_forest(&mut r, dims)?;
    let indices: Vec<usize> = r.u32s("medoids.indices")?.into_iter().map(|v| v as usize).collect();
    let classes = r.u32s("medoids.class")?;
    let mut per_class = vec![Vec::new(); dims.n_classes];
    for (&m, &c) in indices.iter().zip(&classes) {
        per_class
            .get_mut(c as usize)
            .ok_or_else(|| RfaeError::Format("medoid class out of range".into()))?
            .push(m);
    }
    let medoids = MedoidSet { indices, per_class };

    let n_layers = header.network.layer_shapes().len();
    let mut layers = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        layers.push(Layer {
            weight: r.matrix(&format!("network.{l}.weight"))?,
            bias: r.vector(&format!("network.{l}.bias"))?.mapv(T::of),
        });
    }
    let mut network = NetworkWeights::from_layers(header.network.clone(), layers)?;
    for l in 0..n_layers {
        network.optimizer.m[l] = Layer {
            weight: r.matrix(&format!("adamw.{l}.m_weight"))?,
            bias: r.vector(&format!("adamw.{l}.m_bias"))?.mapv(T::of),
        };
        network.optimizer.v[l] = Layer {
            weight: r.matrix(&format!("adamw.{l}.v_weight"))?,
            bias: r.vector(&format!("adamw.{l}.v_bias"))?.mapv(T::of),
        };
    }
    network.optimizer.step = header.optimizer_step;

    let target = TargetEmbedding {
        coords: r.matrix("target")?,
        source: header.target_source,
    };
    let train_p_star = r.matrix("train_p_star")?;
    let x_train = r.matrix("x_train")?;
    let y_train: Vec<usize> = r.u32s("y_train")?.into_iter().map(|v| v as usize).collect();
    let hist: Array2<f64> = r.matrix("history")?;
    let history = hist
        .outer_iter()
        .map(|h| EpochLoss {
            epoch: h[0] as usize,
            recon: (!h[1].is_nan()).then_some(h[1]),
            geo: h[2],
            total: h[3],
        })
        .collect();
    let mut extensions = Vec::new();
    for kind in &header.extensions {
        extensions.push(LinearExtension {
            w: r.matrix(&format!("extension.{kind}"))?,
            kind: *kind,
        });
    }
    let shapes_ok = train_p_star.dim() == (dims.n_train, dims.n_prototypes)
        && x_train.dim() == (dims.n_train, dims.n_features)
        && y_train.len() == dims.n_train
        && target.coords.dim() == (dims.n_train, dims.latent_dim)
        && normalizer.dim() == dims.n_features
        && medoids.indices.iter().all(|&m| m < dims.n_train);
    if !shapes_ok {
        return Err(RfaeError::Format("section shapes disagree with the header".into()));
    }
    Ok(RfAe {
        config: header.config,
        normalizer,
        forest,
        medoids,
        network,
        target,
        train_p_star,
        x_train,
        y_train,
        class_names: header.class_names,
        feature_names: header.feature_names,
        history,
        extensions,
    })
}
