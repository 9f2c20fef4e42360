//! Labelled samples: shape parameters, plan image and annual energy.

use alloc::vec::Vec;
use core::fmt;

use crate::energy::{annual_energy, BuildingConfig, EnergyBreakdown, EnergyError};
use crate::geometry::{build_footprint, GeometryConfig, GeometryError, ShapeParams, OFFSET_LIMIT};
use crate::raster::{rasterize, BinaryImage, RasterError, RasterSpec};
use crate::rng::{derive_seed, Prng};
use crate::weather::WeatherSeries;

/// Stream tag separating the split permutation from the parameter draws.
pub const SPLIT_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetError {
    InvalidConfig(&'static str),
    /// A pipeline stage failed for one sample.
    Sample { id: usize, source: SampleError },
    DegenerateTargets,
    TooFewSamples(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum SampleError {
    Geometry(GeometryError),
    Raster(RasterError),
    Energy(EnergyError),
}

impl fmt::Display for SampleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Geometry(e) => e.fmt(f),
            Self::Raster(e) => e.fmt(f),
            Self::Energy(e) => e.fmt(f),
        }
    }
}

impl fmt::Display for DatasetError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidConfig(m) => write!(f, "invalid dataset config: {m}"),
            Self::Sample { id, source } => write!(f, "sample {id}: {source}"),
            Self::DegenerateTargets => {
                f.write_str("training labels are constant, cannot fit a z-score normalizer")
            }
            Self::TooFewSamples(n) => write!(f, "need at least 2 training samples, got {n}"),
        }
    }
}

impl core::error::Error for DatasetError {}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: usize,
    pub params: ShapeParams,
    pub image: BinaryImage,
    pub label: EnergyBreakdown,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DatasetConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub split_ratio: f64,
    pub geometry: GeometryConfig,
    pub building: BuildingConfig,
    pub raster: RasterSpec,
}

impl DatasetConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        let geometry = GeometryConfig::default();
        Self {
            n_samples,
            seed,
            split_ratio: 0.8,
            geometry,
            building: BuildingConfig::default(),
            raster: RasterSpec::for_geometry(&geometry),
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.n_samples < 10 {
            return Err(DatasetError::InvalidConfig("n_samples must be at least 10"));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(DatasetError::InvalidConfig("split_ratio must lie in (0, 1)"));
        }
        self.geometry
            .validate()
            .map_err(|_| DatasetError::InvalidConfig("invalid geometry config"))?;
        self.building
            .validate()
            .map_err(|_| DatasetError::InvalidConfig("invalid building config"))?;
        Ok(())
    }

    pub fn split_seed(&self) -> u64 {
        derive_seed(self.seed, SPLIT_STREAM)
    }
}

/// `n` parameter vectors, each coordinate uniform on `[-3.5, 3.5)`, drawn x1..x4 per sample.
pub fn sample_params(n: usize, seed: u64) -> Vec<ShapeParams> {
    let mut rng = Prng::new(seed);
    (0..n)
        .map(|_| {
            let x = core::array::from_fn(|_| rng.uniform(-OFFSET_LIMIT, OFFSET_LIMIT));
            ShapeParams::from_array(x).expect("uniform draw stays in range")
        })
        .collect()
}

/// Seeded random partition of ids `0..n`: the first `floor(ratio·n)` of a Fisher–Yates
/// permutation train, the rest test. Both lists come back sorted.
pub fn split(n: usize, ratio: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut ids: Vec<usize> = (0..n).collect();
    Prng::new(seed).shuffle(&mut ids);
    let n_train = libm::floor(ratio * n as f64 + 1e-9) as usize;
    let mut test = ids.split_off(n_train.min(n));
    ids.sort_unstable();
    test.sort_unstable();
    (ids, test)
}

/// Geometry → raster → energy for one parameter vector.
pub fn label_sample(
    id: usize,
    params: ShapeParams,
    cfg: &DatasetConfig,
    weather: &WeatherSeries,
) -> Result<Sample, DatasetError> {
    let wrap = |source| DatasetError::Sample { id, source };
    let footprint = build_footprint(&params, &cfg.geometry);
    let image = rasterize(&footprint, &cfg.raster).map_err(|e| wrap(SampleError::Raster(e)))?;
    let label = annual_energy(&footprint, weather, &cfg.building).map_err(|e| wrap(SampleError::Energy(e)))?;
    Ok(Sample { id, params, image, label })
}

/// Z-score scaling of the total-energy target, fitted on training labels only.
/// Shape parameters are divided by 3.5 and images pass through unchanged.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Normalizer {
    pub target_mean: f64,
    /// Population standard deviation.
    pub target_std: f64,
}

impl Normalizer {
    pub fn fit(train_targets: &[f64]) -> Result<Self, DatasetError> {
        let n = train_targets.len();
        if n < 2 {
            return Err(DatasetError::TooFewSamples(n));
        }
        let mean = train_targets.iter().sum::<f64>() / n as f64;
        let var = train_targets.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n as f64;
        let std = libm::sqrt(var);
        if !(std > 0.0) || !std.is_finite() {
            return Err(DatasetError::DegenerateTargets);
        }
        Ok(Self { target_mean: mean, target_std: std })
    }

    pub fn apply(&self, y: f64) -> f64 {
        (y - self.target_mean) / self.target_std
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.target_std + self.target_mean
    }

    pub fn apply_params(params: &ShapeParams) -> [f64; 4] {
        params.as_array().map(|x| x / OFFSET_LIMIT)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub samples: Vec<Sample>,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub normalizer: Normalizer,
}

impl Dataset {
    /// Assembles a dataset from labelled samples whose ids are `0..n` in order.
    pub fn from_samples(config: DatasetConfig, samples: Vec<Sample>) -> Result<Self, DatasetError> {
        let (train_ids, test_ids) = split(samples.len(), config.split_ratio, config.split_seed());
        let totals: Vec<f64> = train_ids.iter().map(|&i| samples[i].label.total_kwh).collect();
        let normalizer = Normalizer::fit(&totals)?;
        Ok(Self { config, samples, train_ids, test_ids, normalizer })
    }

    pub fn train(&self) -> impl Iterator<Item = &Sample> {
        self.train_ids.iter().map(move |&i| &self.samples[i])
    }

    pub fn test(&self) -> impl Iterator<Item = &Sample> {
        self.test_ids.iter().map(move |&i| &self.samples[i])
    }
}

/// Samples `cfg.n_samples` shapes and labels each one against `weather`.
pub fn generate(cfg: &DatasetConfig, weather: &WeatherSeries) -> Result<Dataset, DatasetError> {
    cfg.validate()?;
    let samples = sample_params(cfg.n_samples, cfg.seed)
        .into_iter()
        .enumerate()
        .map(|(id, p)| label_sample(id, p, cfg, weather))
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::from_samples(cfg.clone(), samples)
}
