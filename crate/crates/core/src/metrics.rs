//! Error measures and the block-by-block evaluation walk.

use std::fmt::Write as _;

use crate::bank::ModelBank;
use crate::dataset::TimeSeriesPanel;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// `100 · RMSE / (max − min)` of the actuals; `None` when the range is zero.
    pub nrmse: Option<f64>,
}

pub fn compute_metrics(pred: &[f64], actual: &[f64]) -> Result<Metrics> {
    if pred.len() != actual.len() {
        return Err(Error::Shape(format!("{} predictions for {} actuals", pred.len(), actual.len())));
    }
    if pred.is_empty() {
        return Err(Error::InsufficientData("no values to score".into()));
    }
    let m = pred.len() as f64;
    let (mut abs, mut sq) = (0.0, 0.0);
    for (p, a) in pred.iter().zip(actual) {
        let e = p - a;
        abs += e.abs();
        sq += e * e;
    }
    let (lo, hi) = actual
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)));
    let rmse = (sq / m).sqrt();
    Ok(Metrics {
        mae: abs / m,
        rmse,
        nrmse: (hi > lo).then(|| 100.0 * rmse / (hi - lo)),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationErrors {
    pub station: String,
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorReport {
    pub stations: Vec<StationErrors>,
    /// Arithmetic mean over stations. The NRMSE mean skips undefined entries.
    pub mean: Metrics,
    /// Scored values per station.
    pub sample_count: usize,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:.6}"))
}

impl ErrorReport {
    pub fn from_stations(stations: Vec<StationErrors>, sample_count: usize) -> Result<Self> {
        if stations.is_empty() {
            return Err(Error::InsufficientData("report has no stations".into()));
        }
        let k = stations.len() as f64;
        let defined: Vec<f64> = stations.iter().filter_map(|s| s.metrics.nrmse).collect();
        let mean = Metrics {
            mae: stations.iter().map(|s| s.metrics.mae).sum::<f64>() / k,
            rmse: stations.iter().map(|s| s.metrics.rmse).sum::<f64>() / k,
            nrmse: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        };
        Ok(Self {
            stations,
            mean,
            sample_count,
        })
    }

    pub fn station_count(&self) -> usize {
        self.stations.len()
    }

    pub fn station(&self, id: &str) -> Option<&Metrics> {
        self.stations.iter().find(|s| s.station == id).map(|s| &s.metrics)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("station,mae,rmse,nrmse\n");
        let rows = self.stations.iter().map(|s| (s.station.as_str(), &s.metrics));
        for (name, m) in rows.chain(std::iter::once(("MEAN", &self.mean))) {
            writeln!(out, "{name},{:.6},{:.6},{}", m.mae, m.rmse, fmt_opt(m.nrmse)).expect("write to string");
        }
        out
    }
}

/// Anything that can fill a block of `h` rows from the rows before it.
pub trait Forecaster {
    /// Predictions (m/s) for rows `block_start .. block_start + h`,
    /// `result[i][j]` for offset `i + 1` and station `j`. Implementations
    /// must not read rows at or after `block_start`.
    fn forecast_block(&self, history: &TimeSeriesPanel, block_start: usize, h: usize) -> Result<Vec<Vec<f64>>>;

    fn name(&self) -> &str;
}

impl Forecaster for ModelBank {
    fn forecast_block(&self, history: &TimeSeriesPanel, block_start: usize, h: usize) -> Result<Vec<Vec<f64>>> {
        if h != self.h() {
            return Err(Error::Config(format!("bank forecasts blocks of {}, asked for {h}", self.h())));
        }
        Ok(crate::bank::forecast_block(self, history, history.timestamp(block_start as i64))?.predictions)
    }

    fn name(&self) -> &str {
        "dl-stf"
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalConfig {
    pub h: usize,
    pub ell: usize,
}

/// One scored value: panel row, actual, forecast.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredPoint {
    pub t: usize,
    pub actual: f64,
    pub forecast: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub report: ErrorReport,
    /// `series[j]` holds station `j`'s scored points in time order.
    pub series: Vec<Vec<ScoredPoint>>,
    pub blocks: usize,
    pub skipped_blocks: usize,
}

/// Block starts used by [`evaluate`]: `ell, ell + h, ...` while the block
/// fits, excluding blocks whose history or targets contain missing values.
pub fn block_schedule(panel: &TimeSeriesPanel, cfg: EvalConfig) -> (Vec<usize>, usize) {
    let mut starts = Vec::new();
    let mut skipped = 0;
    let mut b = cfg.ell;
    while b + cfg.h <= panel.len() {
        if (b - cfg.ell..b + cfg.h).all(|t| panel.complete_row(t).is_some()) {
            starts.push(b);
        } else {
            skipped += 1;
        }
        b += cfg.h;
    }
    (starts, skipped)
}

/// Walks `panel` in blocks of `h` after the first `ell` history rows and
/// scores every forecast against the actual value.
pub fn evaluate(forecaster: &dyn Forecaster, panel: &TimeSeriesPanel, cfg: EvalConfig) -> Result<Evaluation> {
    if cfg.h == 0 || cfg.ell == 0 {
        return Err(Error::Config("h and ell must be >= 1".into()));
    }
    let (starts, skipped_blocks) = block_schedule(panel, cfg);
    if starts.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no complete block of {} rows after {} history rows in a panel of {}",
            cfg.h,
            cfg.ell,
            panel.len()
        )));
    }
    let n = panel.n();
    let mut series: Vec<Vec<ScoredPoint>> = vec![Vec::with_capacity(starts.len() * cfg.h); n];
    for &b in &starts {
        let block = forecaster.forecast_block(panel, b, cfg.h)?;
        if block.len() != cfg.h || block.iter().any(|r| r.len() != n) {
            return Err(Error::Shape(format!("{} returned a malformed block", forecaster.name())));
        }
        for (i, row) in block.iter().enumerate() {
            for (j, s) in series.iter_mut().enumerate() {
                s.push(ScoredPoint {
                    t: b + i,
                    actual: panel.get(b + i, j).expect("scheduled rows are complete"),
                    forecast: row[j],
                });
            }
        }
    }
    let stations = series
        .iter()
        .zip(panel.station_ids())
        .map(|(pts, id)| {
            let pred: Vec<f64> = pts.iter().map(|p| p.forecast).collect();
            let actual: Vec<f64> = pts.iter().map(|p| p.actual).collect();
            Ok(StationErrors {
                station: id.clone(),
                metrics: compute_metrics(&pred, &actual)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Evaluation {
        report: ErrorReport::from_stations(stations, starts.len() * cfg.h)?,
        series,
        blocks: starts.len(),
        skipped_blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::baselines::Persistence;
    use proptest::prelude::*;

    struct Oracle;

    impl Forecaster for Oracle {
        fn forecast_block(&self, history: &TimeSeriesPanel, b: usize, h: usize) -> Result<Vec<Vec<f64>>> {
            Ok((b..b + h).map(|t| history.complete_row(t).unwrap().into_inner()).collect())
        }

        fn name(&self) -> &str {
            "oracle"
        }
    }

    fn panel(cols: &[Vec<f64>]) -> TimeSeriesPanel {
        let rows: Vec<Vec<f64>> = (0..cols[0].len()).map(|t| cols.iter().map(|c| c[t]).collect()).collect();
        TimeSeriesPanel::from_dense(
            (0..cols.len()).map(|j| format!("S{j}")).collect(),
            crate::synth::synth_start(),
            &rows,
        )
        .unwrap()
    }

    #[test]
    fn hand_example() {
        let m = compute_metrics(&[0.0, 0.0], &[3.0, 4.0]).unwrap();
        assert_eq!(m.mae, 3.5);
        assert!((m.rmse - 12.5f64.sqrt()).abs() < 1e-12);
        assert!((m.nrmse.unwrap() - 353.5533905932738).abs() < 1e-9);
    }

    #[test]
    fn perfect_and_degenerate() {
        let m = compute_metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap();
        assert_eq!((m.mae, m.rmse, m.nrmse), (0.0, 0.0, Some(0.0)));
        assert_eq!(compute_metrics(&[1.0, 1.0], &[2.0, 2.0]).unwrap().nrmse, None);
        assert!(compute_metrics(&[], &[]).is_err());
        assert!(compute_metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn report_csv_layout() {
        let stations = vec![
            StationErrors {
                station: "A".into(),
                metrics: Metrics { mae: 1.0, rmse: 2.0, nrmse: Some(10.0) },
            },
            StationErrors {
                station: "B".into(),
                metrics: Metrics { mae: 3.0, rmse: 4.0, nrmse: None },
            },
        ];
        let r = ErrorReport::from_stations(stations, 12).unwrap();
        assert_eq!(
            r.to_csv(),
            "station,mae,rmse,nrmse\nA,1.000000,2.000000,10.000000\nB,3.000000,4.000000,NA\nMEAN,2.000000,3.000000,10.000000\n"
        );
    }

    #[test]
    fn oracle_scores_zero() {
        let p = panel(&[(0..50).map(|t| (t as f64).sin()).collect(), vec![2.0; 50]]);
        let ev = evaluate(&Oracle, &p, EvalConfig { h: 6, ell: 12 }).unwrap();
        assert_eq!(ev.report.mean.mae, 0.0);
        assert_eq!(ev.report.mean.rmse, 0.0);
        assert_eq!(ev.blocks, 6);
        assert_eq!(ev.report.sample_count, 36);
    }

    #[test]
    fn persistence_on_unit_ramp() {
        let h = 6;
        let p = panel(&[(0..60).map(|t| t as f64).collect()]);
        let ev = evaluate(&Persistence, &p, EvalConfig { h, ell: 3 }).unwrap();
        let expected = (1..=h).sum::<usize>() as f64 / h as f64;
        assert!((ev.report.stations[0].metrics.mae - expected).abs() < 1e-12);
        for pts in ev.series[0].chunks(h) {
            for (i, pt) in pts.iter().enumerate() {
                assert_eq!(pt.actual - pt.forecast, (i + 1) as f64);
            }
        }
    }

    #[test]
    fn schedule_skips_gaps_for_every_forecaster() {
        let mut rows: Vec<Vec<Option<f64>>> = (0..40).map(|t| vec![Some(t as f64)]).collect();
        rows[20][0] = None;
        let p = TimeSeriesPanel::new(vec!["A".into()], crate::synth::synth_start(), rows).unwrap();
        let cfg = EvalConfig { h: 4, ell: 4 };
        let (starts, skipped) = block_schedule(&p, cfg);
        assert_eq!(starts, vec![4, 8, 12, 16, 28, 32, 36]);
        assert_eq!(skipped, 2);
        let a = evaluate(&Persistence, &p, cfg).unwrap();
        let times = |e: &Evaluation| e.series[0].iter().map(|pt| pt.t).collect::<Vec<_>>();
        // the oracle would read the gap, so compare against a forecaster that does not
        let b = evaluate(&crate::baselines::ArBaseline::fit(&p, 1, 0..20).unwrap(), &p, cfg).unwrap();
        assert_eq!(times(&a), times(&b));
    }

    #[test]
    fn too_short_panel() {
        let p = panel(&[vec![1.0; 10]]);
        assert!(matches!(
            evaluate(&Persistence, &p, EvalConfig { h: 6, ell: 12 }),
            Err(Error::InsufficientData(_))
        ));
    }

    proptest! {
        #[test]
        fn mae_never_exceeds_rmse(pairs in proptest::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 1..60)) {
            let (p, a): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let m = compute_metrics(&p, &a).unwrap();
            prop_assert!(m.mae <= m.rmse + 1e-12);
        }
    }
}
