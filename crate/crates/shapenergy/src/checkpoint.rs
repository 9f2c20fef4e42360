//! Trained models on disk: `checkpoint.json` beside little-endian `params.bin`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use shapenergy_core::dataset::{DatasetConfig, Normalizer, Sample};
use shapenergy_core::energy::EnergyBreakdown;
use shapenergy_core::geometry::{build_footprint, ShapeParams};
use shapenergy_core::nn::{build_cnn, build_dnn, CnnConfig, ModelSpec, ModelState};
use shapenergy_core::raster::{rasterize, RasterSpec};
use shapenergy_core::train::{predict, TrainConfig};

use crate::error::{self, Error, Result};
use crate::store::WeatherSpec;
use crate::{sha256_hex, VERSION};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const PARAMS_FILE: &str = "params.bin";

/// The architecture choice as given on the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelChoice {
    Dnn { depth: usize },
    Cnn { depth: usize, filters: usize, kernel: usize, pool: usize },
}

impl ModelChoice {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Dnn { .. } => "dnn",
            Self::Cnn { .. } => "cnn",
        }
    }

    pub fn depth(&self) -> usize {
        match *self {
            Self::Dnn { depth } | Self::Cnn { depth, .. } => depth,
        }
    }

    /// CNNs take the raster's size as their input shape.
    pub fn build(&self, raster: &RasterSpec) -> Result<ModelSpec> {
        Ok(match *self {
            Self::Dnn { depth } => build_dnn(depth)?,
            Self::Cnn { depth, filters, kernel, pool } => build_cnn(&CnnConfig {
                n_conv: depth,
                filters,
                kernel,
                pool,
                input_height: raster.height_px,
                input_width: raster.width_px,
            })?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub model: ModelChoice,
    pub spec: ModelSpec,
    pub param_count: usize,
    pub train: TrainConfig,
    /// Target scaling fitted on the training split; predictions are inverted through it.
    pub normalizer: Normalizer,
    /// Geometry, building and raster the model was trained against.
    pub dataset: DatasetConfig,
    pub weather: WeatherSpec,
    pub dataset_labels_sha256: String,
    pub params_sha256: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub state: ModelState,
}

impl Checkpoint {
    /// Denormalized prediction for one shape, drawn with the geometry and raster the
    /// model was trained on.
    pub fn predict_kwh(&self, params: &ShapeParams) -> Result<f64> {
        let cfg = &self.manifest.dataset;
        let footprint = build_footprint(params, &cfg.geometry);
        let image = rasterize(&footprint, &cfg.raster).map_err(|e| Error::Usage(e.to_string()))?;
        let sample = Sample { id: 0, params: *params, image, label: EnergyBreakdown::new(0.0, 0.0, 0.0) };
        let z = predict(&self.state, &[&sample], &self.manifest.normalizer)?;
        Ok(self.manifest.normalizer.invert(z[0]))
    }
}

pub fn params_bytes(params: &[f64]) -> Vec<u8> {
    params.iter().flat_map(|p| p.to_le_bytes()).collect()
}

pub fn save_checkpoint(dir: &Path, checkpoint: &Checkpoint) -> Result<()> {
    error::create_dir(dir)?;
    error::write(&dir.join(PARAMS_FILE), params_bytes(checkpoint.state.params()))?;
    error::write_json(&dir.join(CHECKPOINT_FILE), &checkpoint.manifest)
}

pub fn new_checkpoint(
    model: ModelChoice,
    state: ModelState,
    train: TrainConfig,
    normalizer: Normalizer,
    dataset: DatasetConfig,
    weather: WeatherSpec,
    dataset_labels_sha256: String,
) -> Checkpoint {
    let manifest = CheckpointManifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        tool_version: VERSION.to_string(),
        model,
        spec: state.spec().clone(),
        param_count: state.params().len(),
        train,
        normalizer,
        dataset,
        weather,
        dataset_labels_sha256,
        params_sha256: sha256_hex(&params_bytes(state.params())),
    };
    Checkpoint { manifest, state }
}

pub fn load_checkpoint(dir: &Path) -> Result<Checkpoint> {
    let path = dir.join(CHECKPOINT_FILE);
    let value: serde_json::Value = error::read_json(&path)?;
    let version = value.get("format_version").and_then(|v| v.as_u64());
    if version != Some(u64::from(CHECKPOINT_FORMAT_VERSION)) {
        return Err(Error::format(
            &path,
            format!("unsupported format version {version:?}, expected {CHECKPOINT_FORMAT_VERSION}"),
        ));
    }
    let manifest: CheckpointManifest = serde_json::from_value(value).map_err(|e| Error::format(&path, e.to_string()))?;
    let rebuilt = manifest.model.build(&manifest.dataset.raster)?;
    if rebuilt != manifest.spec {
        return Err(Error::format(&path, "layer list does not match the model choice"));
    }
    if manifest.spec.param_count() != manifest.param_count {
        return Err(Error::format(&path, "param_count does not match the layer list"));
    }

    let params_path = dir.join(PARAMS_FILE);
    let bytes = error::read(&params_path)?;
    if bytes.len() != 8 * manifest.param_count {
        return Err(Error::format(
            &params_path,
            format!("expected {} bytes for {} parameters, found {}", 8 * manifest.param_count, manifest.param_count, bytes.len()),
        ));
    }
    if sha256_hex(&bytes) != manifest.params_sha256 {
        return Err(Error::format(&params_path, "checksum does not match the checkpoint manifest"));
    }
    let params: Vec<f64> =
        bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    let state = ModelState::from_params(manifest.spec.clone(), params, manifest.train.seed)
        .map_err(|e| Error::format(&params_path, e.to_string()))?;
    Ok(Checkpoint { manifest, state })
}
