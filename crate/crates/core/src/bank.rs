//! The horizon bank: `h` networks `M_1..M_h`, one per offset inside a block
//! of `h` hours with no real observations.
//!
//! `M_i` sees `ℓ − i + 1` real vectors followed by the `i − 1` forecasts
//! already made in the current block (only the last `ℓ` of them once
//! `i − 1 ≥ ℓ`). Training is a cascade: each stage's stride-1 predictions
//! over the training and validation rows become the forecast overlay that
//! later stages read.

use std::path::Path;

use chrono::{DateTime, Utc};

use crate::dataset::{
    assemble_from, fit_normalizer, format_timestamp, input_recipe, make_samples, normalize, ForecastOverlay,
    InputSource, Normalizer, TimeSeriesPanel,
};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::lstm::{init_params, LstmLayerParams, LstmNetwork};
use crate::tensor::{ActivationKind, Matrix, Vector};
use crate::training::{train_model_with, TrainConfig, TrainHistory};

pub const FORMAT_VERSION: u32 = 1;
pub const MAGIC: &[u8; 6] = b"DLSTF\0";

#[derive(Clone, Debug, PartialEq)]
pub struct HorizonConfig {
    pub h: usize,
    pub ell: usize,
    pub n: usize,
    /// Hidden widths of each model, `widths[i - 1]` for `M_i`.
    pub widths: Vec<Vec<usize>>,
    /// Training settings of each model, `train[i - 1]` for `M_i`.
    pub train: Vec<TrainConfig>,
}

impl HorizonConfig {
    /// Defaults: one layer of 32 for `M_1`, two stacked layers of 64 after.
    pub fn new(h: usize, ell: usize, n: usize) -> Self {
        let widths = (1..=h).map(|i| if i == 1 { vec![32] } else { vec![64, 64] }).collect();
        Self {
            h,
            ell,
            n,
            widths,
            train: vec![TrainConfig::default(); h],
        }
    }

    /// Same training settings for every model, with seed `base + i − 1`.
    pub fn with_train_config(mut self, cfg: &TrainConfig) -> Self {
        self.train = (0..self.h)
            .map(|i| TrainConfig {
                seed: cfg.seed.wrapping_add(i as u64),
                ..cfg.clone()
            })
            .collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.h == 0 || self.ell == 0 || self.n == 0 {
            return Err(Error::Config(format!(
                "h, ell and n must be >= 1 (got h = {}, ell = {}, n = {})",
                self.h, self.ell, self.n
            )));
        }
        if self.widths.len() != self.h || self.train.len() != self.h {
            return Err(Error::Config(format!(
                "need exactly h = {} width and training specs, got {} and {}",
                self.h,
                self.widths.len(),
                self.train.len()
            )));
        }
        if let Some(i) = self.widths.iter().position(|w| w.is_empty() || w.contains(&0)) {
            return Err(Error::Config(format!("model M{} has an empty or zero layer width", i + 1)));
        }
        self.train.iter().try_for_each(TrainConfig::validate)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelBank {
    pub config: HorizonConfig,
    pub models: Vec<LstmNetwork>,
    pub normalizer: Normalizer,
    pub format_version: u32,
}

/// `h` consecutive forecasts in m/s, `predictions[i - 1]` for offset `i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastBlock {
    pub block_start: DateTime<Utc>,
    pub predictions: Vec<Vec<f64>>,
}

/// Per-stage outcome of [`train_bank_with`].
#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub offset: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub skipped: usize,
    pub history: TrainHistory,
}

/// Model used for global time `t`: `t mod h`, with 0 mapped to `h`.
pub fn model_index(t: usize, h: usize) -> usize {
    match t % h {
        0 => h,
        r => r,
    }
}

/// Input sequence for row `t` of a block starting at row `block_start`.
///
/// `history` must be normalized and hold the real rows before the block;
/// `forecasts[k - 1]` is the block's forecast at offset `k`. Rows of
/// `history` at or after `block_start` are never read.
pub fn assemble_input(
    history: &TimeSeriesPanel,
    forecasts: &[Vector],
    block_start: usize,
    t: usize,
    h: usize,
    ell: usize,
) -> Result<Vec<Vector>> {
    if t < block_start {
        return Err(Error::Config(format!("target row {t} precedes block start {block_start}")));
    }
    let i = model_index(t - block_start + 1, h);
    let recipe = input_recipe(ell, i, t as i64);
    let mut seq = Vec::with_capacity(ell);
    for src in recipe {
        let v = match src {
            InputSource::Real { t: tau } => (tau >= 0 && (tau as usize) < history.len())
                .then(|| history.complete_row(tau as usize))
                .flatten()
                .ok_or(tau),
            InputSource::Forecast { offset, t: tau } => forecasts.get(offset - 1).cloned().ok_or(tau),
        };
        seq.push(v.map_err(|tau| Error::MissingCoverage {
            timestamp: format_timestamp(history.timestamp(tau)),
        })?);
    }
    Ok(seq)
}

pub fn train_bank(train: &TimeSeriesPanel, val: &TimeSeriesPanel, cfg: &HorizonConfig) -> Result<ModelBank> {
    train_bank_with(train, val, cfg, Exec::default()).map(|(bank, _)| bank)
}

/// Cascade training on raw (m/s) panels. The normalizer is fitted on
/// `train` and stored in the bank. `val` may be empty, in which case early
/// stopping monitors the training loss.
pub fn train_bank_with(
    train: &TimeSeriesPanel,
    val: &TimeSeriesPanel,
    cfg: &HorizonConfig,
    exec: Exec,
) -> Result<(ModelBank, Vec<StageReport>)> {
    cfg.validate()?;
    if train.n() != cfg.n || (!val.is_empty() && val.n() != cfg.n) {
        return Err(Error::Shape(format!(
            "config expects {} stations, panels have {} and {}",
            cfg.n,
            train.n(),
            val.n()
        )));
    }
    if train.len() <= cfg.ell + cfg.h {
        return Err(Error::InsufficientData(format!(
            "training panel has {} rows, need more than ell + h = {}",
            train.len(),
            cfg.ell + cfg.h
        )));
    }
    let normalizer = fit_normalizer(train, 0..train.len())?;
    let train_n = normalize(train, &normalizer)?;
    let val_n = if val.is_empty() { None } else { Some(normalize(val, &normalizer)?) };

    let mut overlays = (ForecastOverlay::new(), ForecastOverlay::new());
    let mut models = Vec::with_capacity(cfg.h);
    let mut reports = Vec::with_capacity(cfg.h);
    for i in 1..=cfg.h {
        let stage_err = |e: Error| Error::ModelTraining {
            model: i,
            source: Box::new(e),
        };
        let train_set = make_samples(&train_n, &overlays.0, cfg.ell, i)?;
        let val_set = match &val_n {
            Some(v) => make_samples(v, &overlays.1, cfg.ell, i)?,
            None => Default::default(),
        };
        if train_set.samples.is_empty() {
            return Err(stage_err(Error::InsufficientData("no complete training samples".into())));
        }
        let tc = &cfg.train[i - 1];
        let net = init_params(&cfg.widths[i - 1], cfg.n, tc.seed).map_err(stage_err)?;
        let (net, history) =
            train_model_with(net, &train_set.samples, &val_set.samples, tc, exec).map_err(stage_err)?;
        log::info!(
            "M{i}: {} train / {} val samples, best epoch {} of {}, val MAE {:.5}",
            train_set.samples.len(),
            val_set.samples.len(),
            history.best_epoch,
            history.stopped_epoch,
            history.val_loss.get(history.best_epoch.saturating_sub(1)).copied().unwrap_or(f64::NAN)
        );
        if i < cfg.h {
            let next_train = stage_overlay(&net, &train_n, &overlays.0, cfg.ell, i, exec).map_err(stage_err)?;
            overlays.0.push_offset(next_train);
            if let Some(v) = &val_n {
                let next_val = stage_overlay(&net, v, &overlays.1, cfg.ell, i, exec).map_err(stage_err)?;
                overlays.1.push_offset(next_val);
            }
        }
        reports.push(StageReport {
            offset: i,
            train_samples: train_set.samples.len(),
            val_samples: val_set.samples.len(),
            skipped: train_set.skipped,
            history,
        });
        models.push(net);
    }
    let bank = ModelBank {
        config: cfg.clone(),
        models,
        normalizer,
        format_version: FORMAT_VERSION,
    };
    Ok((bank, reports))
}

/// Stride-1 predictions of `M_i` for every row whose inputs are available.
fn stage_overlay(
    net: &LstmNetwork,
    panel: &TimeSeriesPanel,
    overlay: &ForecastOverlay,
    ell: usize,
    i: usize,
    exec: Exec,
) -> Result<Vec<Option<Vector>>> {
    exec.map_range(0..panel.len(), |t| {
        if t < ell {
            return Ok(None);
        }
        assemble_from(panel, overlay, ell, i, t).map(|seq| net.predict(&seq)).transpose()
    })
    .into_iter()
    .collect()
}

impl ModelBank {
    pub fn h(&self) -> usize {
        self.config.h
    }

    pub fn ell(&self) -> usize {
        self.config.ell
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn forecast(&self, history: &TimeSeriesPanel, block_start: DateTime<Utc>) -> Result<ForecastBlock> {
        forecast_block(self, history, block_start)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_bank(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        load_bank(path)
    }
}

/// Forecasts the `h` rows starting at `block_start` from the `ℓ` real rows
/// of `history` (m/s) immediately before it.
pub fn forecast_block(bank: &ModelBank, history: &TimeSeriesPanel, block_start: DateTime<Utc>) -> Result<ForecastBlock> {
    let (h, ell) = (bank.h(), bank.ell());
    if history.n() != bank.n() {
        return Err(Error::Shape(format!("bank has {} stations, history {}", bank.n(), history.n())));
    }
    let b = history
        .index_of(block_start)
        .ok_or_else(|| Error::Config(format!("{} is not on the hourly grid", format_timestamp(block_start))))?;
    let first = b - ell as i64;
    if first < 0 || b > history.len() as i64 {
        let absent = if first < 0 { first } else { history.len() as i64 };
        return Err(Error::MissingCoverage {
            timestamp: format_timestamp(history.timestamp(absent)),
        });
    }
    let window = normalize(&history.slice(first as usize..b as usize)?, &bank.normalizer)?;
    let mut buffer: Vec<Vector> = Vec::with_capacity(h);
    for offset in 1..=h {
        let t = ell + offset - 1;
        let seq = assemble_input(&window, &buffer, ell, t, h, ell)?;
        let i = model_index(offset, h);
        buffer.push(bank.models[i - 1].predict(&seq)?);
    }
    let predictions = buffer
        .iter()
        .map(|v| crate::dataset::denormalize(v, &bank.normalizer))
        .collect::<Result<_>>()?;
    Ok(ForecastBlock {
        block_start,
        predictions,
    })
}

fn check_serializable(bank: &ModelBank) -> Result<()> {
    if bank.models.len() != bank.h() || bank.normalizer.n() != bank.n() {
        return Err(Error::Shape("bank holds the wrong number of models or normalizer entries".into()));
    }
    for (i, m) in bank.models.iter().enumerate() {
        m.check()?;
        if m.input_dim() != bank.n() || m.output_dim() != bank.n() {
            return Err(Error::Shape(format!("M{} is not {n} -> {n}", i + 1, n = bank.n())));
        }
        if m.head_activation != ActivationKind::Identity
            || m.layers.iter().any(|l| l.gate_activation != ActivationKind::Sigmoid)
        {
            return Err(Error::Config(format!(
                "M{}: only sigmoid gates and an identity head can be saved",
                i + 1
            )));
        }
    }
    Ok(())
}

pub fn bank_to_bytes(bank: &ModelBank) -> Result<Vec<u8>> {
    check_serializable(bank)?;
    let mut out = Vec::new();
    let put_u32 = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
    let mut count: u64 = 0;
    let mut put_f64s = |out: &mut Vec<u8>, vs: &[f64]| {
        for v in vs {
            out.extend_from_slice(&v.to_le_bytes());
        }
        count += vs.len() as u64;
    };
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&bank.format_version.to_le_bytes());
    put_u32(&mut out, bank.h());
    put_u32(&mut out, bank.ell());
    put_u32(&mut out, bank.n());
    for j in 0..bank.n() {
        put_f64s(&mut out, &[bank.normalizer.min[j], bank.normalizer.max[j]]);
    }
    for m in &bank.models {
        put_u32(&mut out, m.layers.len());
        for layer in &m.layers {
            put_u32(&mut out, layer.input_dim);
            put_u32(&mut out, layer.hidden_dim);
            for block in layer.blocks() {
                put_f64s(&mut out, block);
            }
        }
        put_f64s(&mut out, m.head_weights.as_slice());
        put_f64s(&mut out, &m.head_bias);
    }
    out.extend_from_slice(&count.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    f64s: u64,
}

impl<'a> Reader<'a> {
    /// Fails unless `len` more bytes are available.
    fn ensure(&self, len: usize) -> Result<()> {
        let rest = self.bytes.len() - self.pos;
        if rest < len {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: len - rest,
            });
        }
        Ok(())
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        self.ensure(len)?;
        let out = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64s(&mut self, len: usize) -> Result<Vec<f64>> {
        let bytes = self.take(len.checked_mul(8).ok_or(Error::Truncated {
            offset: self.pos,
            needed: usize::MAX,
        })?)?;
        self.f64s += len as u64;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn fill(&mut self, dst: &mut [f64]) -> Result<()> {
        let vals = self.f64s(dst.len())?;
        dst.copy_from_slice(&vals);
        Ok(())
    }
}

pub fn bank_from_bytes(bytes: &[u8]) -> Result<ModelBank> {
    let found = &bytes[..bytes.len().min(MAGIC.len())];
    if found != &MAGIC[..found.len()] || found.is_empty() {
        return Err(Error::BadMagic {
            expected: MAGIC.to_vec(),
            found: found.to_vec(),
        });
    }
    let mut r = Reader { bytes, pos: 0, f64s: 0 };
    r.take(MAGIC.len())?;
    let version = r.u32()? as u32;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            expected: FORMAT_VERSION,
            found: version,
        });
    }
    let (h, ell, n) = (r.u32()?, r.u32()?, r.u32()?);
    if h == 0 || ell == 0 || n == 0 {
        return Err(Error::Shape(format!("header has h = {h}, ell = {ell}, n = {n}")));
    }
    let mut normalizer = Normalizer {
        min: Vec::new(),
        max: Vec::new(),
    };
    for _ in 0..n {
        let pair = r.f64s(2)?;
        normalizer.min.push(pair[0]);
        normalizer.max.push(pair[1]);
    }
    let mut models = Vec::new();
    for i in 1..=h {
        let layer_count = r.u32()?;
        let mut layers = Vec::new();
        let mut expected_in = n;
        for _ in 0..layer_count {
            let (input_dim, hidden_dim) = (r.u32()?, r.u32()?);
            if input_dim != expected_in || hidden_dim == 0 {
                return Err(Error::Shape(format!(
                    "M{i}: layer is {input_dim} -> {hidden_dim}, expected input {expected_in}"
                )));
            }
            // bound the allocation by what the file can actually hold
            r.ensure(32 * hidden_dim * (input_dim + hidden_dim + 1))?;
            let mut layer = LstmLayerParams::zeros(input_dim, hidden_dim, ActivationKind::Sigmoid);
            for block in layer.blocks_mut() {
                r.fill(block)?;
            }
            layers.push(layer);
            expected_in = hidden_dim;
        }
        if layers.is_empty() {
            return Err(Error::Shape(format!("M{i} has no layers")));
        }
        r.ensure(8 * n * expected_in)?;
        let head_weights = Matrix::from_vec(n, expected_in, r.f64s(n * expected_in)?)?;
        let head_bias = Vector::from(r.f64s(n)?);
        models.push(LstmNetwork {
            layers,
            head_weights,
            head_bias,
            head_activation: ActivationKind::Identity,
        });
    }
    let counted = r.f64s;
    let rest = bytes.len() - r.pos;
    if rest != 8 {
        return Err(Error::LengthMismatch {
            header: counted,
            payload: counted + (rest as u64).saturating_sub(8) / 8,
        });
    }
    let trailer = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    if trailer != counted {
        return Err(Error::LengthMismatch {
            header: counted,
            payload: trailer,
        });
    }
    let widths = models.iter().map(LstmNetwork::hidden_widths).collect();
    let config = HorizonConfig {
        h,
        ell,
        n,
        widths,
        train: vec![TrainConfig::default(); h],
    };
    Ok(ModelBank {
        config,
        models,
        normalizer,
        format_version: version,
    })
}

pub fn save_bank(bank: &ModelBank, path: &Path) -> Result<()> {
    let bytes = bank_to_bytes(bank)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_bank(path: &Path) -> Result<ModelBank> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    bank_from_bytes(&bytes)
}
