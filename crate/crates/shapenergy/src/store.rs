//! Dataset directories and the weather they were labelled against.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shapenergy_core::dataset::{Dataset, DatasetConfig, Normalizer, Sample};
use shapenergy_core::energy::{annual_energy, EnergyBreakdown};
use shapenergy_core::geometry::{build_footprint, ShapeParams};
use shapenergy_core::raster::rasterize;
use shapenergy_core::rng::{derive_seed, Prng, PRNG_NAME};
use shapenergy_core::weather::{synthesize_weather, SiteSpec, SyntheticWeatherConfig, WeatherSeries};

use crate::checkpoint::Checkpoint;
use crate::error::{self, Error, Result};
use crate::{epw, pgm, sha256_hex, VERSION};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LABELS_FILE: &str = "labels.csv";
pub const LABELS_HEADER: &str = "id,x1,x2,x3,x4,heating_kwh,cooling_kwh,lighting_kwh,total_kwh";

/// Samples re-rendered on every load.
pub const AUDIT_SAMPLES: usize = 5;
const AUDIT_STREAM: u64 = 0xA0D1;

/// Where a dataset's weather came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeatherSpec {
    Synthetic { site: SiteSpec, config: SyntheticWeatherConfig },
    /// `sha256` pins the file contents so a changed file is caught on reload.
    Epw { path: PathBuf, sha256: String },
}

impl Default for WeatherSpec {
    fn default() -> Self {
        Self::Synthetic { site: SiteSpec::default(), config: SyntheticWeatherConfig::default() }
    }
}

impl WeatherSpec {
    /// `synthetic` or `epw:<path>`, as given on the command line.
    pub fn from_flag(flag: &str) -> Result<Self> {
        if flag == "synthetic" {
            return Ok(Self::default());
        }
        match flag.strip_prefix("epw:") {
            Some(path) if !path.is_empty() => {
                let path = PathBuf::from(path);
                let sha256 = sha256_hex(&error::read(&path)?);
                Ok(Self::Epw { path, sha256 })
            }
            _ => Err(Error::Usage(format!("weather must be `synthetic` or `epw:<path>`, got {flag:?}"))),
        }
    }

    pub fn load(&self) -> Result<WeatherSeries> {
        match self {
            Self::Synthetic { site, config } => Ok(synthesize_weather(config, site)?),
            Self::Epw { path, sha256 } => {
                let bytes = error::read(path)?;
                if &sha256_hex(&bytes) != sha256 {
                    return Err(Error::format(path, "weather file changed since the dataset was generated"));
                }
                let text = String::from_utf8(bytes).map_err(|_| Error::format(path, "not valid UTF-8"))?;
                epw::parse_epw(&text).map_err(|e| Error::format(path, e.to_string()))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub prng: String,
    pub config: DatasetConfig,
    pub weather: WeatherSpec,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub normalizer: Normalizer,
    pub labels_sha256: String,
}

pub fn image_file(id: usize) -> String {
    format!("img_{id}.pgm")
}

/// `labels.csv` contents: shortest round-trip decimals, one row per sample.
pub fn labels_csv(samples: &[Sample]) -> String {
    let mut out = String::with_capacity(samples.len() * 160);
    out.push_str(LABELS_HEADER);
    out.push('\n');
    for s in samples {
        let [x1, x2, x3, x4] = s.params.as_array();
        let l = &s.label;
        let _ = writeln!(
            out,
            "{},{x1},{x2},{x3},{x4},{},{},{},{}",
            s.id, l.heating_kwh, l.cooling_kwh, l.lighting_kwh, l.total_kwh
        );
    }
    out
}

/// Writes images and labels, then the manifest as the commit marker.
pub fn save_dataset(dir: &Path, dataset: &Dataset, weather: &WeatherSpec) -> Result<DatasetManifest> {
    error::create_dir(dir)?;
    for s in &dataset.samples {
        error::write(&dir.join(image_file(s.id)), pgm::encode_pgm(&s.image))?;
    }
    let labels = labels_csv(&dataset.samples);
    error::write(&dir.join(LABELS_FILE), &labels)?;
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        tool_version: VERSION.to_string(),
        prng: PRNG_NAME.to_string(),
        config: dataset.config.clone(),
        weather: weather.clone(),
        train_ids: dataset.train_ids.clone(),
        test_ids: dataset.test_ids.clone(),
        normalizer: dataset.normalizer,
        labels_sha256: sha256_hex(labels.as_bytes()),
    };
    error::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn load_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    let value: serde_json::Value = error::read_json(&path)?;
    let version = value.get("format_version").and_then(|v| v.as_u64());
    if version != Some(DATASET_FORMAT_VERSION as u64) {
        return Err(Error::format(
            &path,
            format!("unsupported format version {version:?}, expected {DATASET_FORMAT_VERSION}"),
        ));
    }
    serde_json::from_value(value).map_err(|e| Error::format(&path, e.to_string()))
}

fn parse_labels(path: &Path, text: &str, n: usize) -> Result<Vec<(ShapeParams, EnergyBreakdown)>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::format(path, e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != LABELS_HEADER {
        return Err(Error::format(path, format!("header must be `{LABELS_HEADER}`")));
    }
    let mut rows = Vec::with_capacity(n);
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
        let num = |j: usize| -> Result<f64> {
            record[j].parse().map_err(|_| Error::format(path, format!("line {line}: field {} is not a number", j + 1)))
        };
        let id: usize =
            record[0].parse().map_err(|_| Error::format(path, format!("line {line}: bad sample id")))?;
        if id != i {
            return Err(Error::format(path, format!("line {line}: expected sample id {i}, found {id}")));
        }
        let params = ShapeParams::from_array([num(1)?, num(2)?, num(3)?, num(4)?])
            .map_err(|e| Error::format(path, format!("line {line}: {e}")))?;
        let label = EnergyBreakdown::new(num(5)?, num(6)?, num(7)?);
        if label.total_kwh != num(8)? {
            return Err(Error::format(path, format!("line {line}: total is not the sum of its parts")));
        }
        rows.push((params, label));
    }
    if rows.len() != n {
        return Err(Error::format(path, format!("expected {n} samples, found {}", rows.len())));
    }
    Ok(rows)
}

/// Ids re-rendered by [`load_dataset`], fixed by the dataset seed.
pub fn audit_ids(n: usize, seed: u64) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..n).collect();
    Prng::new(derive_seed(seed, AUDIT_STREAM)).shuffle(&mut ids);
    ids.truncate(AUDIT_SAMPLES);
    ids.sort_unstable();
    ids
}

/// Loads a dataset directory and checks it against its manifest: label checksum, image
/// shapes, split, normalizer, and a re-render of [`AUDIT_SAMPLES`] images.
pub fn load_dataset(dir: &Path) -> Result<(Dataset, DatasetManifest)> {
    let manifest = load_manifest(dir)?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let cfg = &manifest.config;
    cfg.validate().map_err(|e| Error::format(&manifest_path, e.to_string()))?;
    if manifest.prng != PRNG_NAME {
        return Err(Error::format(&manifest_path, format!("generated with PRNG {:?}", manifest.prng)));
    }

    let labels_path = dir.join(LABELS_FILE);
    let labels = error::read_string(&labels_path)?;
    if sha256_hex(labels.as_bytes()) != manifest.labels_sha256 {
        return Err(Error::format(&labels_path, "checksum does not match the manifest"));
    }
    let rows = parse_labels(&labels_path, &labels, cfg.n_samples)?;

    let mut samples = Vec::with_capacity(rows.len());
    for (id, (params, label)) in rows.into_iter().enumerate() {
        let path = dir.join(image_file(id));
        let image = pgm::decode_pgm(&error::read(&path)?, cfg.raster.width_px, cfg.raster.height_px)
            .map_err(|e| Error::format(&path, e.to_string()))?;
        samples.push(Sample { id, params, image, label });
    }

    for id in audit_ids(samples.len(), cfg.seed) {
        let s = &samples[id];
        let expected = rasterize(&build_footprint(&s.params, &cfg.geometry), &cfg.raster)
            .map_err(|e| Error::format(&labels_path, format!("sample {id}: {e}")))?;
        if expected != s.image {
            return Err(Error::format(
                &dir.join(image_file(id)),
                "image does not match the footprint of its shape parameters",
            ));
        }
    }

    let dataset = Dataset::from_samples(cfg.clone(), samples)?;
    if dataset.train_ids != manifest.train_ids || dataset.test_ids != manifest.test_ids {
        return Err(Error::format(&manifest_path, "split ids do not match the seed"));
    }
    if dataset.normalizer != manifest.normalizer {
        return Err(Error::format(&manifest_path, "normalizer does not match the training labels"));
    }
    Ok((dataset, manifest))
}

/// Geometry, building, raster and weather used to draw and simulate new shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct Context {
    pub config: DatasetConfig,
    pub weather: WeatherSpec,
}

impl Context {
    /// Prefers the dataset directory, then the first checkpoint, then the defaults.
    pub fn resolve(data: Option<&Path>, checkpoints: &[&Checkpoint]) -> Result<Self> {
        if let Some(dir) = data {
            let m = load_manifest(dir)?;
            return Ok(Self { config: m.config, weather: m.weather });
        }
        if let Some(c) = checkpoints.first() {
            return Ok(Self { config: c.manifest.dataset.clone(), weather: c.manifest.weather.clone() });
        }
        Ok(Self { config: DatasetConfig::new(0, 0), weather: WeatherSpec::default() })
    }

    pub fn simulate(&self, params: &ShapeParams, weather: &WeatherSeries) -> Result<EnergyBreakdown> {
        let footprint = build_footprint(params, &self.config.geometry);
        Ok(annual_energy(&footprint, weather, &self.config.building)?)
    }
}
