//! The NF and NV estimators: architectures, target scaling, training,
//! inference and model files.
//!
//! Model file layout (all integers little-endian):
//!
//! ```text
//! magic "ANISOMDL" | version u32 | header_len u64 | header JSON
//! | spec_len u64 | layer spec JSON | n_params u64 | n_params × f64
//! | crc32 of everything before it (u32)
//! ```

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::grid::FieldGrid;
use crate::nn::{mae_loss, Activation, AdamW, AdamWConfig, LayerShape, LayerSpec, Network, NetworkSpec, Tensor};
use crate::rng::stream;
use crate::simulate::Label;
use crate::variogram::{variogram_map, varmap_image, VarmapImage, NV_MAX_LAG};

pub const MODEL_MAGIC: &[u8; 8] = b"ANISOMDL";
pub const MODEL_VERSION: u32 = 1;
const NF_SIDE: usize = 16;
const NV_SIDE: usize = 2 * NV_MAX_LAG + 1;
/// Samples per forward/backward pass inside one optimizer batch.
const CHUNK: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "raw-field-16x16")]
    Nf,
    #[serde(rename = "varmap-13x13")]
    Nv,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Nf => "NF",
            EstimatorKind::Nv => "NV",
        }
    }

    pub fn input_tag(self) -> &'static str {
        match self {
            EstimatorKind::Nf => "raw-field-16x16",
            EstimatorKind::Nv => "varmap-13x13",
        }
    }

    pub fn spec(self) -> NetworkSpec {
        match self {
            EstimatorKind::Nf => nf_spec(),
            EstimatorKind::Nv => nv_spec(),
        }
    }

    pub fn input_len(self) -> usize {
        match self {
            EstimatorKind::Nf => NF_SIDE * NF_SIDE,
            EstimatorKind::Nv => NV_SIDE * NV_SIDE,
        }
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nf" => Ok(EstimatorKind::Nf),
            "nv" => Ok(EstimatorKind::Nv),
            other => Err(Error::Parse(format!("unknown estimator `{other}` (expected nf or nv)"))),
        }
    }
}

fn conv(filters: usize, kernel: usize) -> LayerSpec {
    LayerSpec::Conv2d {
        filters,
        kernel,
        activation: Activation::Relu,
    }
}

fn head() -> [LayerSpec; 3] {
    [
        LayerSpec::Flatten,
        LayerSpec::Dense {
            units: 300,
            activation: Activation::Relu,
        },
        LayerSpec::Dense {
            units: 3,
            activation: Activation::Linear,
        },
    ]
}

fn single_channel(side: usize) -> LayerShape {
    LayerShape::Image {
        height: side,
        width: side,
        channels: 1,
    }
}

/// Raw-field network: 16×16×1 → 3.
pub fn nf_spec() -> NetworkSpec {
    let mut layers = vec![conv(128, 9), conv(256, 5), conv(512, 4), conv(1024, 1)];
    layers.extend(head());
    NetworkSpec {
        input: single_channel(NF_SIDE),
        layers,
    }
}

/// Variogram-map network: 13×13×1 → 3.
pub fn nv_spec() -> NetworkSpec {
    let mut layers = vec![conv(128, 8), conv(128, 4), conv(256, 3), conv(512, 1)];
    layers.extend(head());
    NetworkSpec {
        input: single_channel(NV_SIDE),
        layers,
    }
}

/// Per-target standardization of `(alpha, lambda, theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetNormalizer {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl TargetNormalizer {
    /// Population mean and standard deviation of the labels.
    pub fn fit(labels: &[Label]) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyData);
        }
        let n = labels.len() as f64;
        let mut mean = [0.0; 3];
        for l in labels {
            for (m, v) in mean.iter_mut().zip(l.to_array()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = [0.0; 3];
        for l in labels {
            for ((s, v), m) in var.iter_mut().zip(l.to_array()).zip(mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.map(|s| (s / n).sqrt());
        for (name, s) in ["alpha", "lambda", "theta"].iter().zip(std) {
            if !(s > 0.0) {
                return Err(Error::domain(name, s, "labels with nonzero spread"));
            }
        }
        Ok(Self { mean, std })
    }

    pub fn normalize(&self, y: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|i| (y[i] - self.mean[i]) / self.std[i])
    }

    pub fn denormalize(&self, z: [f64; 3]) -> [f64; 3] {
        [0, 1, 2].map(|i| z[i] * self.std[i] + self.mean[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    /// Add the 180° rotation of every field to each epoch.
    pub augment: bool,
    pub seed: u64,
    /// Share of samples held out for a per-epoch validation loss.
    pub validation_fraction: f64,
}

impl TrainingConfig {
    pub fn for_kind(kind: EstimatorKind) -> Self {
        Self {
            batch_size: 500,
            epochs: match kind {
                EstimatorKind::Nf => 50,
                EstimatorKind::Nv => 100,
            },
            learning_rate: 0.01,
            weight_decay: AdamWConfig::default().weight_decay,
            augment: kind == EstimatorKind::Nf,
            seed: 0,
            validation_fraction: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::domain("batch_size", 0.0, "at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::domain("epochs", 0.0, "at least 1"));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::domain("validation_fraction", self.validation_fraction, "in [0, 1)"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::domain("learning_rate", self.learning_rate, "positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean normalized MAE over the epoch's batches, weighted by batch size.
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
    /// Gradient-contributing samples in this epoch.
    pub samples_seen: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingManifest {
    /// Description of the parameter grid the training data came from.
    pub grid: String,
    pub dataset_seed: u64,
    pub config: TrainingConfig,
    pub train_samples: usize,
    pub validation_samples: usize,
    pub final_loss: f64,
    pub log: Vec<EpochStats>,
}

/// Where the training data came from, recorded in the model manifest.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataProvenance {
    pub grid: String,
    pub dataset_seed: u64,
}

#[derive(Debug, Clone)]
pub struct ModelArtifact {
    pub kind: EstimatorKind,
    pub network: Network,
    pub normalizer: TargetNormalizer,
    pub manifest: TrainingManifest,
}

/// Raw network estimate mapped back to parameter units. Values are never
/// clamped; `out_of_domain` marks any that leave `[0, π) × (0, 1] × (0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub alpha: f64,
    pub lambda: f64,
    pub theta: f64,
    pub out_of_domain: bool,
}

impl Estimate {
    fn from_raw(y: [f64; 3]) -> Self {
        let [alpha, lambda, theta] = y;
        let inside = (0.0..std::f64::consts::PI).contains(&alpha) && lambda > 0.0 && lambda <= 1.0 && theta > 0.0;
        Self {
            alpha,
            lambda,
            theta,
            out_of_domain: !inside,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.alpha, self.lambda, self.theta]
    }
}

/// Network input for `field`: the values themselves for NF, the filled
/// 13×13 variogram map for NV.
pub fn model_input(kind: EstimatorKind, field: &FieldGrid) -> Result<Vec<f64>> {
    match kind {
        EstimatorKind::Nf => {
            if field.width() != NF_SIDE || field.height() != NF_SIDE {
                return Err(Error::Shape(format!(
                    "NF needs a 16x16 field, got {}x{}",
                    field.width(),
                    field.height()
                )));
            }
            if !field.is_complete() {
                return Err(Error::Missing(format!(
                    "NF needs a complete field, {} cells missing",
                    field.missing_count()
                )));
            }
            Ok(field.values().to_vec())
        }
        EstimatorKind::Nv => Ok(varmap_image(&variogram_map(field, NV_MAX_LAG)?)?.pixels),
    }
}

struct TrainingData {
    kind: EstimatorKind,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl TrainingData {
    fn len(&self) -> usize {
        self.targets.len() / 3
    }

    fn input(&self, i: usize) -> &[f64] {
        let n = self.kind.input_len();
        &self.inputs[i * n..(i + 1) * n]
    }

    fn target(&self, i: usize) -> &[f64] {
        &self.targets[3 * i..3 * i + 3]
    }

    /// Input/target batch tensors; `rotated` entries use the field turned
    /// by 180°, which for a single-channel image is the reversed buffer.
    fn batch(&self, entries: &[(usize, bool)]) -> Result<(Tensor, Tensor)> {
        let n = self.kind.input_len();
        let mut x = Vec::with_capacity(entries.len() * n);
        let mut y = Vec::with_capacity(entries.len() * 3);
        for &(i, rotated) in entries {
            if rotated {
                x.extend(self.input(i).iter().rev());
            } else {
                x.extend_from_slice(self.input(i));
            }
            y.extend_from_slice(self.target(i));
        }
        let side = (n as f64).sqrt() as usize;
        Ok((
            Tensor::new(vec![entries.len(), side, side, 1], x)?,
            Tensor::new(vec![entries.len(), 3], y)?,
        ))
    }
}

fn prepare(kind: EstimatorKind, dataset: &Dataset, indices: &[usize], normalizer: &TargetNormalizer) -> Result<TrainingData> {
    let mut inputs = Vec::with_capacity(indices.len() * kind.input_len());
    let mut targets = Vec::with_capacity(indices.len() * 3);
    for &i in indices {
        inputs.extend(model_input(kind, &dataset.field(i))?);
        targets.extend(normalizer.normalize(dataset.labels[i].to_array()));
    }
    Ok(TrainingData { kind, inputs, targets })
}

/// Mean normalized MAE of `net` on `data`.
fn evaluate(net: &Network, data: &TrainingData) -> Result<f64> {
    let entries: Vec<(usize, bool)> = (0..data.len()).map(|i| (i, false)).collect();
    let mut total = 0.0;
    for chunk in entries.chunks(CHUNK) {
        let (x, y) = data.batch(chunk)?;
        total += mae_loss(&net.predict(&x)?, &y)?.0 * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Trains a fresh network of the given kind.
pub fn train(dataset: &Dataset, kind: EstimatorKind, config: &TrainingConfig, provenance: &DataProvenance) -> Result<ModelArtifact> {
    train_with(dataset, kind, config, provenance, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    dataset: &Dataset,
    kind: EstimatorKind,
    config: &TrainingConfig,
    provenance: &DataProvenance,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<ModelArtifact> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyData);
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let n_val = (n as f64 * config.validation_fraction).floor() as usize;
    if n_val > 0 {
        order.shuffle(&mut stream(config.seed, &[u64::MAX]));
    }
    let (train_idx, val_idx) = order.split_at(n - n_val);
    if train_idx.is_empty() {
        return Err(Error::EmptyData);
    }
    let mut train_idx = train_idx.to_vec();
    train_idx.sort_unstable();
    let mut val_idx = val_idx.to_vec();
    val_idx.sort_unstable();

    let train_labels: Vec<Label> = train_idx.iter().map(|&i| dataset.labels[i]).collect();
    let normalizer = TargetNormalizer::fit(&train_labels)?;
    let train_data = prepare(kind, dataset, &train_idx, &normalizer)?;
    let val_data = prepare(kind, dataset, &val_idx, &normalizer)?;

    let mut net = Network::new(kind.spec(), config.seed)?;
    let mut opt = AdamW::new(
        AdamWConfig {
            learning_rate: config.learning_rate,
            weight_decay: config.weight_decay,
            ..AdamWConfig::default()
        },
        net.num_params(),
    );
    let mut grads = vec![0.0; net.num_params()];
    let mut log = Vec::with_capacity(config.epochs);
    let mut entries: Vec<(usize, bool)> = (0..train_data.len()).map(|i| (i, false)).collect();
    if config.augment {
        entries.extend((0..train_data.len()).map(|i| (i, true)));
    }

    for epoch in 1..=config.epochs {
        entries.shuffle(&mut stream(config.seed, &[epoch as u64]));
        let mut epoch_total = 0.0;
        for batch in entries.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| *g = 0.0);
            let mut batch_loss = 0.0;
            let share = |len: usize| len as f64 / batch.len() as f64;
            for chunk in batch.chunks(CHUNK) {
                let (x, y) = train_data.batch(chunk)?;
                let (pred, cache) = net.forward(&x)?;
                let (loss, grad) = mae_loss(&pred, &y)?;
                let w = share(chunk.len());
                batch_loss += loss * w;
                let scaled = Tensor::new(grad.shape().to_vec(), grad.data().iter().map(|g| g * w).collect())?;
                net.backward(&cache, &scaled, &mut grads)?;
            }
            if !batch_loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch });
            }
            opt.step(net.params_mut(), &grads);
            epoch_total += batch_loss * batch.len() as f64;
        }
        let stats = EpochStats {
            epoch,
            train_loss: epoch_total / entries.len() as f64,
            validation_loss: if val_data.len() > 0 {
                Some(evaluate(&net, &val_data)?)
            } else {
                None
            },
            samples_seen: entries.len(),
        };
        if !stats.train_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        on_epoch(&stats);
        log.push(stats);
    }

    let final_loss = log.last().map(|s| s.train_loss).unwrap_or(f64::NAN);
    Ok(ModelArtifact {
        kind,
        network: net,
        normalizer,
        manifest: TrainingManifest {
            grid: provenance.grid.clone(),
            dataset_seed: provenance.dataset_seed,
            config: *config,
            train_samples: train_data.len(),
            validation_samples: val_data.len(),
            final_loss,
            log,
        },
    })
}

impl ModelArtifact {
    /// Normalized MAE of the model on `dataset` (in target-standard-deviation
    /// units, averaged over the three targets).
    pub fn normalized_mae(&self, dataset: &Dataset) -> Result<f64> {
        let idx: Vec<usize> = (0..dataset.len()).collect();
        evaluate(&self.network, &prepare(self.kind, dataset, &idx, &self.normalizer)?)
    }

    /// Estimates from preprocessed network inputs (one per sample).
    pub fn estimate_inputs(&self, inputs: &[Vec<f64>]) -> Result<Vec<Estimate>> {
        let len = self.kind.input_len();
        let side = (len as f64).sqrt() as usize;
        let mut out = Vec::with_capacity(inputs.len());
        for chunk in inputs.chunks(CHUNK) {
            let mut data = Vec::with_capacity(chunk.len() * len);
            for x in chunk {
                if x.len() != len {
                    return Err(Error::Shape(format!("{} input needs {len} values, got {}", self.kind.name(), x.len())));
                }
                data.extend_from_slice(x);
            }
            let y = self.network.predict(&Tensor::new(vec![chunk.len(), side, side, 1], data)?)?;
            out.extend(
                y.data()
                    .chunks_exact(3)
                    .map(|z| Estimate::from_raw(self.normalizer.denormalize([z[0], z[1], z[2]]))),
            );
        }
        Ok(out)
    }

    /// Estimate from a field; NV builds the variogram map internally.
    pub fn estimate(&self, field: &FieldGrid) -> Result<Estimate> {
        let x = model_input(self.kind, field)?;
        Ok(self.estimate_inputs(&[x])?[0])
    }

    pub fn estimate_many(&self, fields: &[FieldGrid]) -> Result<Vec<Estimate>> {
        let inputs = fields
            .iter()
            .map(|f| model_input(self.kind, f))
            .collect::<Result<Vec<_>>>()?;
        self.estimate_inputs(&inputs)
    }

    /// NV estimate from an already computed map image.
    pub fn estimate_varmap(&self, image: &VarmapImage) -> Result<Estimate> {
        if self.kind != EstimatorKind::Nv {
            return Err(Error::Shape("variogram-map input needs an NV model".into()));
        }
        Ok(self.estimate_inputs(&[image.pixels.clone()])?[0])
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&Header {
            kind: self.kind,
            input: self.kind.input_tag().to_string(),
            normalizer: self.normalizer,
            training: self.manifest.clone(),
        })
        .map_err(|e| Error::Format(e.to_string()))?;
        let spec = serde_json::to_vec(self.network.spec()).map_err(|e| Error::Format(e.to_string()))?;
        let params = self.network.params();
        let mut out = Vec::with_capacity(40 + header.len() + spec.len() + 8 * params.len());
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        for block in [&header, &spec] {
            out.extend_from_slice(&(block.len() as u64).to_le_bytes());
            out.extend_from_slice(block);
        }
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MODEL_MAGIC.len() + 4 + 4 {
            return Err(Error::Checksum);
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        if bytes.starts_with(MODEL_MAGIC) {
            // Valid magic: a bad checksum means corruption or truncation.
            if crc32fast::hash(body).to_le_bytes() != tail {
                return Err(Error::Checksum);
            }
        } else {
            return Err(Error::Format("not a model file (bad magic bytes)".into()));
        }
        let mut r = Reader {
            buf: body,
            pos: MODEL_MAGIC.len(),
        };
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "model format version {version} is not supported (expected {MODEL_VERSION})"
            )));
        }
        let header_len = r.u64()? as usize;
        let header: Header = serde_json::from_slice(r.take(header_len)?).map_err(|e| Error::Format(e.to_string()))?;
        let spec_len = r.u64()? as usize;
        let spec: NetworkSpec = serde_json::from_slice(r.take(spec_len)?).map_err(|e| Error::Format(e.to_string()))?;
        if spec != header.kind.spec() {
            return Err(Error::Format(format!("layer stack does not match the {} architecture", header.kind.name())));
        }
        let n = r.u64()? as usize;
        let params: Vec<f64> = r
            .take(n.checked_mul(8).ok_or(Error::Checksum)?)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if r.pos != body.len() {
            return Err(Error::Format("trailing bytes after weights".into()));
        }
        Ok(Self {
            kind: header.kind,
            network: Network::with_params(spec, params)?,
            normalizer: header.normalizer,
            manifest: header.training,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: EstimatorKind,
    input: String,
    normalizer: TargetNormalizer,
    training: TrainingManifest,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(Error::Checksum)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
