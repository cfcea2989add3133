//! Multi-station hourly panels: CSV I/O, gap repair, min-max scaling,
//! chronological splits and training-sample assembly.
//!
//! CSV layout:
//!
//! ```text
//! timestamp,<id1>,<id2>,...
//! 2014-01-06T00:00:00Z,4.1,NA,...
//! ```
//!
//! Timestamps are UTC on the hour with a constant one-hour step. Missing
//! values are empty fields or `NA`. CRLF line endings are accepted.

use std::fmt::Write as _;
use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime, Timelike, Utc};

use crate::error::{Error, Result};
use crate::tensor::Vector;
use crate::training::Sample;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// `T × n` hourly observations, row-major, `None` marking a missing value.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesPanel {
    station_ids: Vec<String>,
    start: DateTime<Utc>,
    values: Vec<Option<f64>>,
}

pub fn parse_timestamp(s: &str) -> Result<DateTime<Utc>> {
    let naive = NaiveDateTime::parse_from_str(s.trim(), TIMESTAMP_FORMAT)
        .map_err(|e| Error::Config(format!("bad timestamp '{s}': {e}")))?;
    if naive.minute() != 0 || naive.second() != 0 {
        return Err(Error::Config(format!("timestamp '{s}' is not on the hour")));
    }
    Ok(naive.and_utc())
}

pub fn format_timestamp(t: DateTime<Utc>) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

impl TimeSeriesPanel {
    pub fn new(station_ids: Vec<String>, start: DateTime<Utc>, rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let n = station_ids.len();
        if n == 0 {
            return Err(Error::Shape("panel needs at least one station".into()));
        }
        if let Some(r) = rows.iter().position(|r| r.len() != n) {
            return Err(Error::Shape(format!("row {r} has {} values, expected {n}", rows[r].len())));
        }
        Ok(Self {
            station_ids,
            start,
            values: rows.concat(),
        })
    }

    /// Convenience constructor for gap-free data.
    pub fn from_dense(station_ids: Vec<String>, start: DateTime<Utc>, rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(
            station_ids,
            start,
            rows.iter().map(|r| r.iter().copied().map(Some).collect()).collect(),
        )
    }

    pub fn station_ids(&self) -> &[String] {
        &self.station_ids
    }

    pub fn n(&self) -> usize {
        self.station_ids.len()
    }

    /// Number of hourly rows.
    pub fn len(&self) -> usize {
        self.values.len() / self.n()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    /// Timestamp of row `t`; `t` may lie outside the panel.
    pub fn timestamp(&self, t: i64) -> DateTime<Utc> {
        self.start + Duration::hours(t)
    }

    /// Row index of `ts`, if it falls on the panel's hourly grid.
    pub fn index_of(&self, ts: DateTime<Utc>) -> Option<i64> {
        let d = ts - self.start;
        (d.num_seconds() % 3600 == 0).then(|| d.num_hours())
    }

    pub fn row(&self, t: usize) -> &[Option<f64>] {
        let n = self.n();
        &self.values[t * n..(t + 1) * n]
    }

    pub fn get(&self, t: usize, station: usize) -> Option<f64> {
        self.values[t * self.n() + station]
    }

    /// The row as plain values, or `None` if any station is missing.
    pub fn complete_row(&self, t: usize) -> Option<Vector> {
        self.row(t).iter().copied().collect::<Option<Vec<f64>>>().map(Vector::from)
    }

    pub fn column(&self, station: usize) -> Vec<Option<f64>> {
        (0..self.len()).map(|t| self.get(t, station)).collect()
    }

    pub fn station_index(&self, id: &str) -> Result<usize> {
        self.station_ids
            .iter()
            .position(|s| s == id)
            .ok_or_else(|| Error::UnknownStation(id.to_string()))
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Rows `range`, keeping station order and the timestamp grid.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end > self.len() {
            return Err(Error::InsufficientData(format!(
                "rows {range:?} outside panel of {} rows",
                self.len()
            )));
        }
        let n = self.n();
        Ok(Self {
            station_ids: self.station_ids.clone(),
            start: self.timestamp(range.start as i64),
            values: self.values[range.start * n..range.end * n].to_vec(),
        })
    }

    /// Keeps only the listed stations, in the given order.
    pub fn select(&self, ids: &[&str]) -> Result<Self> {
        let idx: Vec<usize> = ids.iter().map(|id| self.station_index(id)).collect::<Result<_>>()?;
        let rows = (0..self.len()).map(|t| idx.iter().map(|&j| self.get(t, j)).collect()).collect();
        Self::new(ids.iter().map(|s| s.to_string()).collect(), self.start, rows)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("timestamp");
        for id in &self.station_ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for t in 0..self.len() {
            out.push_str(&format_timestamp(self.timestamp(t as i64)));
            for v in self.row(t) {
                match v {
                    Some(x) => write!(out, ",{x:.4}").expect("write to string"),
                    None => out.push_str(",NA"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }
}

pub fn ingest_csv(path: &Path) -> Result<TimeSeriesPanel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<TimeSeriesPanel> {
    let mut lines = text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l)).enumerate();
    let parse_err = |line: usize, message: String| Error::Parse { line: line + 1, message };

    let (_, header) = lines.next().ok_or_else(|| parse_err(0, "empty file".into()))?;
    let mut fields = header.split(',');
    if fields.next().map(str::trim) != Some("timestamp") {
        return Err(parse_err(0, "missing header: first column must be 'timestamp'".into()));
    }
    let ids: Vec<String> = fields.map(|f| f.trim().to_string()).collect();
    if ids.is_empty() || ids.iter().any(String::is_empty) {
        return Err(parse_err(0, "header must name every station column".into()));
    }

    let mut start = None;
    let mut prev: Option<DateTime<Utc>> = None;
    let mut rows = Vec::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let ts_field = fields.next().unwrap_or_default();
        let ts = parse_timestamp(ts_field).map_err(|e| parse_err(ln, e.to_string()))?;
        if let Some(p) = prev {
            if ts == p {
                return Err(parse_err(ln, format!("duplicated timestamp {}", format_timestamp(ts))));
            }
            if ts < p {
                return Err(parse_err(ln, format!("timestamp {} goes backwards", format_timestamp(ts))));
            }
            if ts - p != Duration::hours(1) {
                return Err(parse_err(
                    ln,
                    format!("gap before {}: rows must be consecutive hours", format_timestamp(ts)),
                ));
            }
        } else {
            start = Some(ts);
        }
        prev = Some(ts);

        let cells: Vec<&str> = fields.collect();
        if cells.len() != ids.len() {
            return Err(parse_err(ln, format!("expected {} values, found {}", ids.len(), cells.len())));
        }
        let mut row = Vec::with_capacity(ids.len());
        for (cell, id) in cells.iter().zip(&ids) {
            let cell = cell.trim();
            if cell.is_empty() || cell == "NA" {
                row.push(None);
                continue;
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(ln, format!("column '{id}': non-numeric value '{cell}'")))?;
            if !v.is_finite() {
                return Err(parse_err(ln, format!("column '{id}': non-finite value '{cell}'")));
            }
            row.push(Some(v));
        }
        rows.push(row);
    }
    let start = start.ok_or_else(|| parse_err(1, "no data rows".into()))?;
    TimeSeriesPanel::new(ids, start, rows)
}

/// A run of consecutive missing values for one station.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GapRun {
    pub station: String,
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GapReport {
    pub filled: Vec<GapRun>,
    pub unfilled: Vec<GapRun>,
}

impl GapReport {
    pub fn is_empty(&self) -> bool {
        self.filled.is_empty() && self.unfilled.is_empty()
    }
}

/// Linearly interpolates interior gaps of at most `max_gap` hours. Longer
/// gaps and gaps touching either end of the panel are left missing.
pub fn fill_missing(panel: &TimeSeriesPanel, max_gap: usize) -> (TimeSeriesPanel, GapReport) {
    let mut out = panel.clone();
    let mut report = GapReport::default();
    let (t_len, n) = (panel.len(), panel.n());
    for j in 0..n {
        let mut t = 0;
        while t < t_len {
            if panel.get(t, j).is_some() {
                t += 1;
                continue;
            }
            let start = t;
            while t < t_len && panel.get(t, j).is_none() {
                t += 1;
            }
            let run = GapRun {
                station: panel.station_ids[j].clone(),
                start,
                len: t - start,
            };
            let interior = start > 0 && t < t_len;
            if interior && run.len <= max_gap {
                let left = panel.get(start - 1, j).expect("value before gap");
                let right = panel.get(t, j).expect("value after gap");
                let span = (run.len + 1) as f64;
                for (step, idx) in (start..t).enumerate() {
                    let w = (step + 1) as f64 / span;
                    out.values[idx * n + j] = Some(left + (right - left) * w);
                }
                report.filled.push(run);
            } else {
                report.unfilled.push(run);
            }
        }
    }
    (out, report)
}

/// Per-station min-max scaling fitted on the training rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Normalizer {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Normalizer {
    pub fn n(&self) -> usize {
        self.min.len()
    }

    /// Scale of station `j`; a constant station uses 1.0.
    pub fn range(&self, j: usize) -> f64 {
        let r = self.max[j] - self.min[j];
        if r > 0.0 {
            r
        } else {
            1.0
        }
    }

    /// Stations whose training range was degenerate (max = min).
    pub fn degenerate_stations(&self) -> Vec<usize> {
        (0..self.n()).filter(|&j| !(self.max[j] > self.min[j])).collect()
    }

    pub fn normalize_value(&self, j: usize, x: f64) -> f64 {
        (x - self.min[j]) / self.range(j)
    }

    pub fn denormalize_value(&self, j: usize, x: f64) -> f64 {
        x * self.range(j) + self.min[j]
    }

    pub fn normalize_row(&self, row: &[f64]) -> Vector {
        row.iter().enumerate().map(|(j, &x)| self.normalize_value(j, x)).collect::<Vec<_>>().into()
    }
}

pub fn fit_normalizer(panel: &TimeSeriesPanel, train_range: Range<usize>) -> Result<Normalizer> {
    if train_range.is_empty() || train_range.end > panel.len() {
        return Err(Error::InsufficientData(format!(
            "training range {train_range:?} is empty or outside {} rows",
            panel.len()
        )));
    }
    let mut min = Vec::with_capacity(panel.n());
    let mut max = Vec::with_capacity(panel.n());
    for j in 0..panel.n() {
        let observed = train_range.clone().filter_map(|t| panel.get(t, j));
        let (lo, hi) = observed.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if lo > hi {
            return Err(Error::InsufficientData(format!(
                "station '{}' has no observations in the training range",
                panel.station_ids[j]
            )));
        }
        if lo == hi {
            log::warn!(
                "station '{}' is constant ({lo}) on the training range; using unit scale",
                panel.station_ids[j]
            );
        }
        min.push(lo);
        max.push(hi);
    }
    Ok(Normalizer { min, max })
}

pub fn normalize(panel: &TimeSeriesPanel, nz: &Normalizer) -> Result<TimeSeriesPanel> {
    map_values(panel, nz, Normalizer::normalize_value)
}

pub fn denormalize_panel(panel: &TimeSeriesPanel, nz: &Normalizer) -> Result<TimeSeriesPanel> {
    map_values(panel, nz, Normalizer::denormalize_value)
}

/// Inverse scaling of one station vector.
pub fn denormalize(values: &[f64], nz: &Normalizer) -> Result<Vec<f64>> {
    if values.len() != nz.n() {
        return Err(Error::Shape(format!("{} values for {} stations", values.len(), nz.n())));
    }
    Ok(values.iter().enumerate().map(|(j, &x)| nz.denormalize_value(j, x)).collect())
}

fn map_values(
    panel: &TimeSeriesPanel,
    nz: &Normalizer,
    f: fn(&Normalizer, usize, f64) -> f64,
) -> Result<TimeSeriesPanel> {
    if nz.n() != panel.n() {
        return Err(Error::Shape(format!("normalizer has {} stations, panel {}", nz.n(), panel.n())));
    }
    let n = panel.n();
    let mut out = panel.clone();
    for (idx, v) in out.values.iter_mut().enumerate() {
        if let Some(x) = v {
            *x = f(nz, idx % n, *x);
        }
    }
    Ok(out)
}

/// Half-open timestamp intervals for the three chronological partitions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: Range<DateTime<Utc>>,
    pub val: Range<DateTime<Utc>>,
    pub test: Range<DateTime<Utc>>,
}

impl SplitSpec {
    /// Consecutive fractions of the panel, test taking the remainder.
    pub fn by_fractions(panel: &TimeSeriesPanel, train: f64, val: f64) -> Result<Self> {
        if !(train > 0.0 && val >= 0.0 && train + val < 1.0) {
            return Err(Error::Config(format!("invalid split fractions {train}/{val}")));
        }
        let t = panel.len();
        let a = (t as f64 * train).round() as i64;
        let b = (t as f64 * (train + val)).round() as i64;
        let at = |i: i64| panel.timestamp(i);
        Ok(Self {
            train: at(0)..at(a),
            val: at(a)..at(b),
            test: at(b)..at(t as i64),
        })
    }

    /// Explicit test window; validation is the `val_hours` right before it
    /// and training is everything earlier.
    pub fn with_test_window(
        panel: &TimeSeriesPanel,
        test_start: DateTime<Utc>,
        test_end: DateTime<Utc>,
        val_hours: i64,
    ) -> Self {
        let val_start = test_start - Duration::hours(val_hours);
        Self {
            train: panel.start()..val_start,
            val: val_start..test_start,
            test: test_start..test_end,
        }
    }

    /// Row ranges within `panel`.
    pub fn index_ranges(&self, panel: &TimeSeriesPanel) -> Result<[Range<usize>; 3]> {
        let parts = [&self.train, &self.val, &self.test];
        if parts.iter().any(|r| r.start >= r.end) {
            return Err(Error::Config("every split range must be nonempty".into()));
        }
        if self.train.end > self.val.start || self.val.end > self.test.start {
            return Err(Error::Config("split ranges overlap or are out of order".into()));
        }
        let end = panel.timestamp(panel.len() as i64);
        let to_idx = |ts: DateTime<Utc>| -> Result<usize> {
            if ts < panel.start() || ts > end {
                return Err(Error::InsufficientData(format!(
                    "split boundary {} outside panel {} .. {}",
                    format_timestamp(ts),
                    format_timestamp(panel.start()),
                    format_timestamp(end)
                )));
            }
            panel
                .index_of(ts)
                .map(|i| i as usize)
                .ok_or_else(|| Error::Config(format!("{} is not on the hourly grid", format_timestamp(ts))))
        };
        let mut out: [Range<usize>; 3] = [0..0, 0..0, 0..0];
        for (slot, r) in out.iter_mut().zip(parts) {
            *slot = to_idx(r.start)?..to_idx(r.end)?;
        }
        Ok(out)
    }
}

pub fn split(panel: &TimeSeriesPanel, spec: &SplitSpec) -> Result<(TimeSeriesPanel, TimeSeriesPanel, TimeSeriesPanel)> {
    let [a, b, c] = spec.index_ranges(panel)?;
    Ok((panel.slice(a)?, panel.slice(b)?, panel.slice(c)?))
}

/// Forecasts made at each in-block offset: `get(k, t)` is the prediction of
/// row `t` produced by model `M_k`, i.e. from a block starting at `t − k + 1`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForecastOverlay {
    offsets: Vec<Vec<Option<Vector>>>,
}

impl ForecastOverlay {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn offsets(&self) -> usize {
        self.offsets.len()
    }

    /// Appends the predictions of the next offset (`k = offsets() + 1`).
    pub fn push_offset(&mut self, predictions: Vec<Option<Vector>>) {
        self.offsets.push(predictions);
    }

    pub fn get(&self, k: usize, t: usize) -> Option<&Vector> {
        self.offsets.get(k.checked_sub(1)?)?.get(t)?.as_ref()
    }
}

/// Where each of the `ell` input vectors for target `t` at offset `i` comes
/// from. Rows before the block start `t − i + 1` are real; the rest are the
/// block's own forecasts. When `i − 1 ≥ ell` every slot is a forecast.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InputSource {
    Real { t: i64 },
    Forecast { offset: usize, t: i64 },
}

pub fn input_recipe(ell: usize, i: usize, t: i64) -> Vec<InputSource> {
    let block_start = t - i as i64 + 1;
    (t - ell as i64..t)
        .map(|tau| {
            if tau < block_start {
                InputSource::Real { t: tau }
            } else {
                InputSource::Forecast {
                    offset: (tau - block_start + 1) as usize,
                    t: tau,
                }
            }
        })
        .collect()
}

/// Input sequence for target row `t` at offset `i`, or `None` when a needed
/// real row is incomplete or a forecast is absent.
pub(crate) fn assemble_from(
    panel: &TimeSeriesPanel,
    overlay: &ForecastOverlay,
    ell: usize,
    i: usize,
    t: usize,
) -> Option<Vec<Vector>> {
    input_recipe(ell, i, t as i64)
        .into_iter()
        .map(|src| match src {
            InputSource::Real { t } if t >= 0 => panel.complete_row(t as usize),
            InputSource::Forecast { offset, t } if t >= 0 => overlay.get(offset, t as usize).cloned(),
            _ => None,
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
    /// Target row of each sample.
    pub targets: Vec<usize>,
    /// Candidate targets dropped for missing real values or forecasts.
    pub skipped: usize,
}

/// Training samples for model `M_i`: every row `t ≥ ell` becomes a target,
/// with input `[s^{t−ell} .. s^{t−i}, ŝ^{t−i+1} .. ŝ^{t−1}]`.
pub fn make_samples(panel: &TimeSeriesPanel, overlay: &ForecastOverlay, ell: usize, i: usize) -> Result<SampleSet> {
    if ell == 0 || i == 0 {
        return Err(Error::Config(format!("ell and i must be >= 1 (got ell = {ell}, i = {i})")));
    }
    let mut set = SampleSet::default();
    for t in ell..panel.len() {
        let target = panel.complete_row(t);
        match (assemble_from(panel, overlay, ell, i, t), target) {
            (Some(input), Some(target)) => {
                set.samples.push(Sample { input, target });
                set.targets.push(t);
            }
            _ => set.skipped += 1,
        }
    }
    Ok(set)
}
