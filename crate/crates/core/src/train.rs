//! Mini-batch training, evaluation, k-fold cross-validation, depth grid search and step timing.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::dataset::{Dataset, DatasetError, Normalizer, Sample};
use crate::nn::{build_cnn, build_dnn, AdamConfig, AdamState, CnnConfig, ModelSpec, ModelState, NnError, Tensor};
use crate::rng::{derive_seed, Prng};

/// Stream tags for the per-run shuffle, fold assignment and per-fold init draws.
pub const SHUFFLE_STREAM: u64 = 0x5A0F;
pub const FOLD_STREAM: u64 = 0xF01D;
const FOLD_INIT_STREAM: u64 = 0xF100;

/// Samples per forward pass during evaluation.
const EVAL_CHUNK: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 100, batch_size: 32, lr: 1e-3, seed: 0, shuffle: true }
    }
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::InvalidConfig("epochs must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be at least 1"));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(TrainError::InvalidConfig("learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainError {
    InvalidConfig(&'static str),
    Nn(NnError),
    Dataset(DatasetError),
    /// Loss or gradient blew up; `step` counts from 0 within the epoch.
    NonFiniteLoss { epoch: usize, step: usize },
    EmptyTestSet,
    InvalidFolds { k: usize, n: usize },
    /// The model's input shape is neither a parameter vector nor an image of the dataset's size.
    UnsupportedInput(Vec<usize>),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidConfig(m) => write!(f, "invalid training config: {m}"),
            Self::Nn(e) => e.fmt(f),
            Self::Dataset(e) => e.fmt(f),
            Self::NonFiniteLoss { epoch, step } => {
                write!(f, "non-finite loss at epoch {} step {}", epoch + 1, step)
            }
            Self::EmptyTestSet => f.write_str("test set is empty"),
            Self::InvalidFolds { k, n } => write!(f, "cannot split {n} training samples into {k} folds"),
            Self::UnsupportedInput(s) => write!(f, "model input shape {s:?} does not match the dataset"),
        }
    }
}

impl core::error::Error for TrainError {}

impl From<NnError> for TrainError {
    fn from(e: NnError) -> Self {
        Self::Nn(e)
    }
}

impl From<DatasetError> for TrainError {
    fn from(e: DatasetError) -> Self {
        Self::Dataset(e)
    }
}

/// Monotonic seconds. The core crate has no clock of its own.
pub trait Clock {
    fn now(&self) -> f64;
}

/// A clock that never advances; timings come out as zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

/// Which representation of a sample a model consumes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputKind {
    /// The four shape parameters scaled to `[-1, 1]`.
    Params,
    /// The plan image as one channel, interior = 1.
    Image { height: usize, width: usize },
}

impl InputKind {
    pub fn of(spec: &ModelSpec) -> Result<Self, TrainError> {
        match spec.input_shape[..] {
            [4] => Ok(Self::Params),
            [1, height, width] => Ok(Self::Image { height, width }),
            _ => Err(TrainError::UnsupportedInput(spec.input_shape.clone())),
        }
    }

    fn len(&self) -> usize {
        match *self {
            Self::Params => 4,
            Self::Image { height, width } => height * width,
        }
    }

    fn write(&self, sample: &Sample, out: &mut [f64]) -> Result<(), TrainError> {
        match *self {
            Self::Params => out.copy_from_slice(&Normalizer::apply_params(&sample.params)),
            Self::Image { height, width } => {
                let img = &sample.image;
                if img.height() != height || img.width() != width {
                    return Err(TrainError::UnsupportedInput(vec![1, img.height(), img.width()]));
                }
                for (o, &p) in out.iter_mut().zip(img.pixels()) {
                    *o = f64::from(p);
                }
            }
        }
        Ok(())
    }
}

/// Batched model input for `samples`, shaped `(n, 4)` or `(n, 1, h, w)`.
pub fn features(spec: &ModelSpec, samples: &[&Sample]) -> Result<Tensor, TrainError> {
    let kind = InputKind::of(spec)?;
    let len = kind.len();
    let mut data = vec![0.0; samples.len() * len];
    for (s, chunk) in samples.iter().zip(data.chunks_exact_mut(len.max(1))) {
        kind.write(s, chunk)?;
    }
    let mut shape = vec![samples.len()];
    shape.extend_from_slice(&spec.input_shape);
    Ok(Tensor::new(shape, data)?)
}

/// Feature rows and normalized targets held contiguously so batches can be gathered cheaply.
struct Table {
    row: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    shape: Vec<usize>,
}

impl Table {
    fn new(spec: &ModelSpec, samples: &[&Sample], norm: &Normalizer) -> Result<Self, TrainError> {
        let x = features(spec, samples)?;
        Ok(Self {
            row: spec.input_len(),
            shape: spec.input_shape.clone(),
            x: x.into_data(),
            y: samples.iter().map(|s| norm.apply(s.label.total_kwh)).collect(),
        })
    }

    fn len(&self) -> usize {
        self.y.len()
    }

    fn gather(&self, rows: &[usize]) -> (Tensor, Vec<f64>) {
        let mut data = Vec::with_capacity(rows.len() * self.row);
        for &r in rows {
            data.extend_from_slice(&self.x[r * self.row..(r + 1) * self.row]);
        }
        let mut shape = vec![rows.len()];
        shape.extend_from_slice(&self.shape);
        let x = Tensor::new(shape, data).expect("rows have the spec's length");
        (x, rows.iter().map(|&r| self.y[r]).collect())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct History {
    /// Mean mini-batch loss over each epoch, weighted by batch size.
    pub train_loss: Vec<f64>,
    /// Loss on held-out samples after each epoch; empty when none were given.
    pub val_loss: Vec<f64>,
    /// Mean wall time of one optimizer step in each epoch.
    pub seconds_per_step: Vec<f64>,
    pub steps: usize,
}

/// Trains a fresh model on the dataset's training split.
pub fn train_model(
    spec: &ModelSpec,
    dataset: &Dataset,
    cfg: &TrainConfig,
    clock: &dyn Clock,
) -> Result<(ModelState, History), TrainError> {
    let train: Vec<&Sample> = dataset.train().collect();
    let init = ModelState::init(spec, cfg.seed)?;
    fit(init, &train, None, &dataset.normalizer, cfg, clock)
}

/// Runs `cfg.epochs` passes of Adam over `train` starting from `state`.
///
/// Each epoch draws a fresh permutation (when shuffling) and steps through it in
/// batches of `cfg.batch_size`, keeping the short final batch.
pub fn fit(
    mut state: ModelState,
    train: &[&Sample],
    validation: Option<&[&Sample]>,
    norm: &Normalizer,
    cfg: &TrainConfig,
    clock: &dyn Clock,
) -> Result<(ModelState, History), TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(DatasetError::TooFewSamples(0).into());
    }
    let table = Table::new(state.spec(), train, norm)?;
    let val = validation.map(|v| Table::new(state.spec(), v, norm)).transpose()?;
    let mut adam = AdamState::new(state.params().len(), AdamConfig::default());
    let mut rng = Prng::new(derive_seed(cfg.seed, SHUFFLE_STREAM));
    let mut order: Vec<usize> = (0..table.len()).collect();
    let mut history = History::default();
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        let mut loss_sum = 0.0;
        let start = clock.now();
        let mut steps = 0;
        for (step, rows) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = table.gather(rows);
            let (loss, grad) = state.loss_and_gradient(&x, &y).map_err(|e| match e {
                NnError::NonFinite { .. } => TrainError::NonFiniteLoss { epoch, step },
                e => e.into(),
            })?;
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, step });
            }
            adam.step(state.params_mut(), &grad, cfg.lr).map_err(|e| match e {
                NnError::NonFiniteGradient { .. } => TrainError::NonFiniteLoss { epoch, step },
                e => e.into(),
            })?;
            loss_sum += loss * rows.len() as f64;
            steps += 1;
        }
        history.seconds_per_step.push((clock.now() - start) / steps as f64);
        history.train_loss.push(loss_sum / table.len() as f64);
        history.steps += steps;
        if let Some(v) = &val {
            let pred = predict_rows(&state, v)?;
            history.val_loss.push(crate::nn::loss_mse(&pred, &v.y)?);
        }
    }
    Ok((state, history))
}

fn predict_rows(state: &ModelState, table: &Table) -> Result<Vec<f64>, TrainError> {
    let mut out = Vec::with_capacity(table.len());
    let rows: Vec<usize> = (0..table.len()).collect();
    for chunk in rows.chunks(EVAL_CHUNK) {
        let (x, _) = table.gather(chunk);
        out.extend_from_slice(state.forward(&x)?.data());
    }
    Ok(out)
}

/// Normalized predictions for arbitrary samples.
pub fn predict(state: &ModelState, samples: &[&Sample], norm: &Normalizer) -> Result<Vec<f64>, TrainError> {
    predict_rows(state, &Table::new(state.spec(), samples, norm)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Prediction {
    pub id: usize,
    pub simulated_kwh: f64,
    pub predicted_kwh: f64,
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Metrics {
    pub mse: f64,
    pub rmse: f64,
    /// `1 − SS_res / SS_tot` around the test-set mean.
    pub r2: f64,
    pub mse_kwh2: f64,
    pub rmse_kwh: f64,
    pub n_test: usize,
    #[cfg_attr(feature = "serde", serde(skip))]
    pub predictions: Vec<Prediction>,
}

/// Scores a model on `samples`, reporting normalized and kWh-scale errors.
pub fn evaluate(state: &ModelState, samples: &[&Sample], norm: &Normalizer) -> Result<Metrics, TrainError> {
    if samples.is_empty() {
        return Err(TrainError::EmptyTestSet);
    }
    let table = Table::new(state.spec(), samples, norm)?;
    let pred = predict_rows(state, &table)?;
    let predictions = samples
        .iter()
        .zip(&pred)
        .map(|(s, &z)| Prediction { id: s.id, simulated_kwh: s.label.total_kwh, predicted_kwh: norm.invert(z) })
        .collect();
    Ok(metrics_from(&pred, &table.y, norm, predictions))
}

/// Metrics for normalized predictions against normalized targets.
pub fn metrics_from(pred: &[f64], target: &[f64], norm: &Normalizer, predictions: Vec<Prediction>) -> Metrics {
    let n = target.len() as f64;
    let ss_res: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    let mean = target.iter().sum::<f64>() / n;
    let ss_tot: f64 = target.iter().map(|t| (t - mean) * (t - mean)).sum();
    let mse = ss_res / n;
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    let mse_kwh2 = mse * norm.target_std * norm.target_std;
    Metrics {
        mse,
        rmse: libm::sqrt(mse),
        r2,
        mse_kwh2,
        rmse_kwh: libm::sqrt(mse_kwh2),
        n_test: target.len(),
        predictions,
    }
}

/// Shuffles `ids` with a seeded permutation and cuts it into `k` contiguous folds.
/// The first `len % k` folds hold one extra id.
pub fn kfold_assign(ids: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, TrainError> {
    if k < 2 || k > ids.len() {
        return Err(TrainError::InvalidFolds { k, n: ids.len() });
    }
    let mut order = ids.to_vec();
    Prng::new(derive_seed(seed, FOLD_STREAM)).shuffle(&mut order);
    let (base, extra) = (ids.len() / k, ids.len() % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CvReport {
    pub k: usize,
    pub folds: Vec<Vec<usize>>,
    pub fold_mse: Vec<f64>,
    pub mean_mse: f64,
    /// Population standard deviation across folds.
    pub std_mse: f64,
}

/// k-fold cross-validation over the training split. Each fold trains a fresh model,
/// with its own normalizer fitted on the remaining folds.
pub fn kfold(
    spec: &ModelSpec,
    dataset: &Dataset,
    k: usize,
    cfg: &TrainConfig,
    clock: &dyn Clock,
) -> Result<CvReport, TrainError> {
    let folds = kfold_assign(&dataset.train_ids, k, cfg.seed)?;
    let mut fold_mse = Vec::with_capacity(k);
    for (f, held_out) in folds.iter().enumerate() {
        let train: Vec<&Sample> = folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, ids)| ids.iter().map(|&i| &dataset.samples[i]))
            .collect();
        let val: Vec<&Sample> = held_out.iter().map(|&i| &dataset.samples[i]).collect();
        let totals: Vec<f64> = train.iter().map(|s| s.label.total_kwh).collect();
        let norm = Normalizer::fit(&totals)?;
        let fold_cfg = TrainConfig { seed: derive_seed(cfg.seed, FOLD_INIT_STREAM + f as u64), ..*cfg };
        let init = ModelState::init(spec, fold_cfg.seed)?;
        let (state, _) = fit(init, &train, None, &norm, &fold_cfg, clock)?;
        fold_mse.push(evaluate(&state, &val, &norm)?.mse);
    }
    let mean_mse = fold_mse.iter().sum::<f64>() / k as f64;
    let var = fold_mse.iter().map(|m| (m - mean_mse) * (m - mean_mse)).sum::<f64>() / k as f64;
    Ok(CvReport { k, folds, fold_mse, mean_mse, std_mse: libm::sqrt(var) })
}

/// Median wall time of one forward + backward + Adam step at `cfg.batch_size`,
/// after `warmup` untimed steps. Batches cycle through the training split in order.
pub fn measure_step_time(
    spec: &ModelSpec,
    dataset: &Dataset,
    cfg: &TrainConfig,
    warmup: usize,
    timed: usize,
    clock: &dyn Clock,
) -> Result<f64, TrainError> {
    cfg.validate()?;
    let train: Vec<&Sample> = dataset.train().collect();
    if train.is_empty() {
        return Err(DatasetError::TooFewSamples(0).into());
    }
    let table = Table::new(spec, &train, &dataset.normalizer)?;
    let mut state = ModelState::init(spec, cfg.seed)?;
    let mut adam = AdamState::new(state.params().len(), AdamConfig::default());
    let mut times = Vec::with_capacity(timed);
    let mut cursor = 0;
    for i in 0..warmup + timed {
        let rows: Vec<usize> = (0..cfg.batch_size).map(|j| (cursor + j) % table.len()).collect();
        cursor = (cursor + cfg.batch_size) % table.len();
        let (x, y) = table.gather(&rows);
        let start = clock.now();
        let (_, grad) = state.loss_and_gradient(&x, &y)?;
        adam.step(state.params_mut(), &grad, cfg.lr)?;
        let elapsed = clock.now() - start;
        if i >= warmup {
            times.push(elapsed);
        }
    }
    Ok(median(&mut times))
}

/// Median of a non-empty slice (mean of the middle pair for even lengths); 0 when empty.
pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ModelFamily {
    Dnn,
    /// Convolutional family with fixed filters, kernel and pool; depth sets `n_conv`.
    Cnn { filters: usize, kernel: usize, pool: usize },
}

impl ModelFamily {
    pub fn cnn_default() -> Self {
        let c = CnnConfig::new(1);
        Self::Cnn { filters: c.filters, kernel: c.kernel, pool: c.pool }
    }

    pub fn build(&self, depth: usize, input_height: usize, input_width: usize) -> Result<ModelSpec, NnError> {
        match *self {
            Self::Dnn => build_dnn(depth),
            Self::Cnn { filters, kernel, pool } => {
                build_cnn(&CnnConfig { n_conv: depth, filters, kernel, pool, input_height, input_width })
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GridSearchRow {
    pub depth: usize,
    pub params: usize,
    pub mse: f64,
    pub time_per_step_s: f64,
}

/// Builds, trains, evaluates and times one model per depth.
pub fn grid_search(
    family: ModelFamily,
    depths: &[usize],
    dataset: &Dataset,
    cfg: &TrainConfig,
    clock: &dyn Clock,
) -> Result<Vec<GridSearchRow>, TrainError> {
    if depths.is_empty() {
        return Err(TrainError::InvalidConfig("grid search needs at least one depth"));
    }
    let raster = &dataset.config.raster;
    let test: Vec<&Sample> = dataset.test().collect();
    depths
        .iter()
        .map(|&depth| {
            let spec = family.build(depth, raster.height_px, raster.width_px)?;
            let (state, _) = train_model(&spec, dataset, cfg, clock)?;
            let metrics = evaluate(&state, &test, &dataset.normalizer)?;
            let time = measure_step_time(&spec, dataset, cfg, 10, 100, clock)?;
            Ok(GridSearchRow { depth, params: spec.param_count(), mse: metrics.mse, time_per_step_s: time })
        })
        .collect()
}
