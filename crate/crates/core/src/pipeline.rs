//! Full-signal denoising and the synthetic train-and-score experiment.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::MetricsReport;
use crate::model::{ModelConfig, SsrganModel};
use crate::real::Real;
use crate::signal::{segment, stitch, Recording, WindowedDataset};
use crate::synth::{make_datasets, SynthConfig, SynthDatasets};
use crate::tensor::Tensor;
use crate::trainer::{train_with, IterationRecord, TrainConfig, TrainHistory};

const CHUNK: usize = 64;

/// Runs `G_f` over normalized windows in fixed-size chunks.
pub fn denoise_windows<F: Real>(model: &SsrganModel<F>, windows: &Tensor<f64>) -> Result<Tensor<f64>> {
    let n = windows.batch();
    let mut parts = Vec::with_capacity(n.div_ceil(CHUNK));
    for start in (0..n).step_by(CHUNK) {
        let rows: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
        let out = model.generator_forward(&windows.gather(&rows)?.cast::<F>())?;
        parts.push(out.cast::<f64>());
    }
    if parts.is_empty() {
        return Ok(windows.clone());
    }
    Tensor::concat_batch(&parts.iter().collect::<Vec<_>>())
}

/// Denoises a windowed dataset in place of its contents.
pub fn denoise_dataset<F: Real>(model: &SsrganModel<F>, ds: &WindowedDataset) -> Result<WindowedDataset> {
    ds.with_windows(denoise_windows(model, &ds.windows)?)
}

/// Segments `rec` with the model's normalization scale, maps every window
/// through `G_f` and stitches the result. Samples after the last whole
/// window are dropped.
pub fn denoise<F: Real>(model: &SsrganModel<F>, rec: &Recording) -> Result<Recording> {
    let ds = segment(rec, 1.0, Some(model.norm_scale))?;
    stitch(&denoise_dataset(model, &ds)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    pub n_train_a: usize,
    pub n_train_b: usize,
    pub n_eval: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            n_train_a: 512,
            n_train_b: 512,
            n_eval: 64,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Uses `seed` for the data, the initialization and the minibatch order.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.synth.seed = seed;
        self.model.seed = seed;
        self.train.seed = seed;
        self
    }
}

pub struct ExperimentResult {
    pub model: SsrganModel<f32>,
    pub history: TrainHistory,
    /// Denoised evaluation recording scored against the contaminated input
    /// and the clean ground truth.
    pub report: MetricsReport,
    pub denoised: Recording,
    pub data: SynthDatasets,
}

/// Builds a model from `model_cfg` and trains it on windowed datasets
/// sharing the normalization scale of `a`.
pub fn fit(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    a: &WindowedDataset,
    b: &WindowedDataset,
    on_iter: impl FnMut(&IterationRecord),
) -> Result<(SsrganModel<f32>, TrainHistory)> {
    let mut model_cfg = model_cfg.clone();
    model_cfg.sharing = train_cfg.sharing_enabled;
    let mut model = SsrganModel::<f32>::build(model_cfg)?;
    model.norm_scale = a.scale;
    let history = train_with(
        &mut model,
        &a.windows.cast::<f32>(),
        &b.windows.cast::<f32>(),
        train_cfg,
        on_iter,
    )?;
    Ok((model, history))
}

/// Denoises paired evaluation windows and scores the stitched result
/// against the contaminated input and the clean ground truth.
pub fn score<F: Real>(
    model: &SsrganModel<F>,
    contaminated: &WindowedDataset,
    clean: &WindowedDataset,
) -> Result<(Recording, MetricsReport)> {
    let denoised = stitch(&denoise_dataset(model, contaminated)?)?;
    let before = stitch(contaminated)?;
    let clean = stitch(clean)?;
    let report = MetricsReport::compute(&before, &denoised, Some(&clean))?;
    Ok((denoised, report))
}

/// Generates data, trains a fresh model and scores it on the paired
/// evaluation set.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    on_iter: impl FnMut(&IterationRecord),
) -> Result<ExperimentResult> {
    let data = make_datasets(&cfg.synth, cfg.n_train_a, cfg.n_train_b, cfg.n_eval)?;
    let (model, history) = fit(&cfg.model, &cfg.train, &data.a, &data.b, on_iter)?;
    let (denoised, report) = score(&model, &data.eval_contaminated, &data.eval_clean)?;
    Ok(ExperimentResult {
        model,
        history,
        report,
        denoised,
        data,
    })
}
