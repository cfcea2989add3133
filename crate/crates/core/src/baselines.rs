//! Reference forecasters: persistence and per-station AR(p).

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::dataset::TimeSeriesPanel;
use crate::error::{Error, Result};
use crate::metrics::Forecaster;

/// Holds the last observation before the block for every step.
#[derive(Clone, Copy, Debug, Default)]
pub struct Persistence;

/// Last observed value of each station before row `block_start`, repeated
/// `h` times.
pub fn persistence_forecast(history: &TimeSeriesPanel, block_start: usize, h: usize) -> Result<Vec<Vec<f64>>> {
    let end = block_start.min(history.len());
    let last: Vec<f64> = (0..history.n())
        .map(|j| {
            (0..end).rev().find_map(|t| history.get(t, j)).ok_or_else(|| {
                Error::InsufficientData(format!(
                    "station '{}' has no observation before row {block_start}",
                    history.station_ids()[j]
                ))
            })
        })
        .collect::<Result<_>>()?;
    Ok(vec![last; h])
}

impl Forecaster for Persistence {
    fn forecast_block(&self, history: &TimeSeriesPanel, block_start: usize, h: usize) -> Result<Vec<Vec<f64>>> {
        persistence_forecast(history, block_start, h)
    }

    fn name(&self) -> &str {
        "persistence"
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArModel {
    pub station_id: String,
    pub order: usize,
    pub intercept: f64,
    /// Lag-1 coefficient first.
    pub coefficients: Vec<f64>,
}

/// Ordinary least squares with intercept on the lagged values of `series`
/// whose target lies in `train_range`. Windows with a missing value are
/// left out. Solved by Householder QR.
pub fn ar_fit(series: &[Option<f64>], p: usize, train_range: Range<usize>, station_id: &str) -> Result<ArModel> {
    if p == 0 {
        return Err(Error::Config("AR order must be >= 1".into()));
    }
    if train_range.end > series.len() || train_range.len() <= p + 1 {
        return Err(Error::InsufficientData(format!(
            "AR({p}) needs more than {} rows in range {train_range:?} of a {}-row series",
            p + 1,
            series.len()
        )));
    }
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for t in train_range.start + p..train_range.end {
        let lags: Option<Vec<f64>> = (1..=p).map(|k| series[t - k]).collect();
        if let (Some(lags), Some(y)) = (lags, series[t]) {
            rows.push((lags, y));
        }
    }
    let (m, k) = (rows.len(), p + 1);
    if m < k {
        return Err(Error::InsufficientData(format!(
            "only {m} complete lag windows for {k} unknowns"
        )));
    }
    let x = DMatrix::from_fn(m, k, |r, c| if c == 0 { 1.0 } else { rows[r].0[c - 1] });
    let mut y = DVector::from_iterator(m, rows.iter().map(|r| r.1));
    let qr = x.qr();
    let r = qr.r();
    let scale = r.diagonal().amax();
    if !(scale > 0.0) || r.diagonal().iter().any(|d| d.abs() <= 1e-10 * scale) {
        return Err(Error::Singular);
    }
    qr.q_tr_mul(&mut y);
    let beta = r.solve_upper_triangular(&y.rows(0, k).into_owned()).ok_or(Error::Singular)?;
    Ok(ArModel {
        station_id: station_id.to_string(),
        order: p,
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
    })
}

/// Recursive multi-step forecast: each prediction becomes the newest lag.
pub fn ar_forecast(model: &ArModel, history: &[f64], h: usize) -> Result<Vec<f64>> {
    let p = model.order;
    if history.len() < p {
        return Err(Error::InsufficientData(format!(
            "AR({p}) needs {p} history values, got {}",
            history.len()
        )));
    }
    let mut window: Vec<f64> = history[history.len() - p..].to_vec();
    let mut out = Vec::with_capacity(h);
    for _ in 0..h {
        let next = model.intercept
            + model
                .coefficients
                .iter()
                .zip(window.iter().rev())
                .map(|(phi, x)| phi * x)
                .sum::<f64>();
        out.push(next);
        window.remove(0);
        window.push(next);
    }
    Ok(out)
}

/// One AR(p) model per station.
#[derive(Clone, Debug, PartialEq)]
pub struct ArBaseline {
    pub models: Vec<ArModel>,
}

impl ArBaseline {
    pub fn fit(panel: &TimeSeriesPanel, p: usize, train_range: Range<usize>) -> Result<Self> {
        let models = (0..panel.n())
            .map(|j| ar_fit(&panel.column(j), p, train_range.clone(), &panel.station_ids()[j]))
            .collect::<Result<_>>()?;
        Ok(Self { models })
    }
}

impl Forecaster for ArBaseline {
    fn forecast_block(&self, history: &TimeSeriesPanel, block_start: usize, h: usize) -> Result<Vec<Vec<f64>>> {
        if history.n() != self.models.len() {
            return Err(Error::Shape(format!(
                "{} AR models for {} stations",
                self.models.len(),
                history.n()
            )));
        }
        let mut per_station = Vec::with_capacity(self.models.len());
        for (j, model) in self.models.iter().enumerate() {
            let p = model.order;
            let past: Option<Vec<f64>> = (block_start.saturating_sub(p)..block_start)
                .map(|t| if t < history.len() { history.get(t, j) } else { None })
                .collect();
            let past = past.filter(|v| v.len() == p).ok_or_else(|| {
                Error::InsufficientData(format!(
                    "station '{}' lacks {p} complete rows before row {block_start}",
                    model.station_id
                ))
            })?;
            per_station.push(ar_forecast(model, &past, h)?);
        }
        Ok((0..h).map(|i| per_station.iter().map(|s| s[i]).collect()).collect())
    }

    fn name(&self) -> &str {
        "ar"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::ar_series;
    use proptest::prelude::*;

    fn some(xs: &[f64]) -> Vec<Option<f64>> {
        xs.iter().copied().map(Some).collect()
    }

    fn model(intercept: f64, coefficients: Vec<f64>) -> ArModel {
        ArModel {
            station_id: "A".into(),
            order: coefficients.len(),
            intercept,
            coefficients,
        }
    }

    #[test]
    fn persistence_repeats_last_value() {
        let p = TimeSeriesPanel::from_dense(
            vec!["A".into(), "B".into()],
            crate::synth::synth_start(),
            &[vec![1.0, 7.0], vec![4.2, 8.0], vec![9.9, 9.9]],
        )
        .unwrap();
        let f = persistence_forecast(&p, 2, 3).unwrap();
        assert_eq!(f, vec![vec![4.2, 8.0]; 3]);
        assert!(persistence_forecast(&p, 0, 3).is_err());
    }

    #[test]
    fn ar_hand_recursion() {
        let m = model(0.0, vec![0.5]);
        assert_eq!(ar_forecast(&m, &[7.0, 2.0], 3).unwrap(), vec![1.0, 0.5, 0.25]);
        let m = model(0.0, vec![0.3, -0.1, 0.2]);
        assert_eq!(ar_forecast(&m, &[0.0; 3], 4).unwrap(), vec![0.0; 4]);
        assert!(ar_forecast(&m, &[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn ar_lag_order() {
        // x_t = 1·x_{t-1} + 10·x_{t-2}: lag 1 must multiply the newest value
        let m = model(0.0, vec![1.0, 10.0]);
        assert_eq!(ar_forecast(&m, &[2.0, 3.0], 1).unwrap(), vec![3.0 + 20.0]);
    }

    #[test]
    fn recovers_ar1() {
        let x = ar_series(&[0.8], 0.0, 0.1, 5000, 1);
        let m = ar_fit(&some(&x), 1, 0..5000, "A").unwrap();
        assert!((m.coefficients[0] - 0.8).abs() < 0.05, "{m:?}");
    }

    #[test]
    fn white_noise_has_no_structure() {
        let x = ar_series(&[], 0.0, 1.0, 5000, 2);
        let m = ar_fit(&some(&x), 3, 0..5000, "A").unwrap();
        assert!(m.coefficients.iter().all(|c| c.abs() < 0.05), "{m:?}");
    }

    #[test]
    fn recovers_ar3() {
        let truth = [0.5, -0.2, 0.1];
        let x = ar_series(&truth, 0.0, 0.1, 5000, 3);
        let m = ar_fit(&some(&x), 3, 0..5000, "A").unwrap();
        for (c, t) in m.coefficients.iter().zip(truth) {
            assert!((c - t).abs() < 0.05, "{m:?}");
        }
    }

    #[test]
    fn fit_errors() {
        let x = some(&ar_series(&[0.5], 0.0, 1.0, 50, 4));
        assert!(matches!(ar_fit(&x, 0, 0..50, "A"), Err(Error::Config(_))));
        assert!(matches!(ar_fit(&x, 3, 0..4, "A"), Err(Error::InsufficientData(_))));
        assert!(matches!(ar_fit(&some(&[2.0; 40]), 2, 0..40, "A"), Err(Error::Singular)));
    }

    #[test]
    fn fit_skips_missing_windows() {
        let x = ar_series(&[0.6], 1.0, 0.1, 2000, 5);
        let mut s = some(&x);
        for t in (100..2000).step_by(97) {
            s[t] = None;
        }
        let m = ar_fit(&s, 1, 0..2000, "A").unwrap();
        assert!((m.coefficients[0] - 0.6).abs() < 0.05);
    }

    #[test]
    fn baseline_on_panel() {
        let p = crate::synth::SynthConfig { n: 2, t: 400, ..Default::default() }.generate().unwrap();
        let ar = ArBaseline::fit(&p, 2, 0..300).unwrap();
        let block = ar.forecast_block(&p, 350, 6).unwrap();
        assert_eq!((block.len(), block[0].len()), (6, 2));
        let direct = ar_forecast(&ar.models[1], &[p.get(348, 1).unwrap(), p.get(349, 1).unwrap()], 6).unwrap();
        assert_eq!(block.iter().map(|r| r[1]).collect::<Vec<_>>(), direct);
    }

    proptest! {
        #[test]
        fn noiseless_ar_is_recovered_exactly(
            a in -0.5f64..0.5, b in -0.3f64..0.3, c in -0.2f64..0.2,
            intercept in -1.0f64..1.0,
            init in proptest::collection::vec(-5.0f64..5.0, 3),
        ) {
            let truth = [a, b, c];
            let mut x = init.clone();
            for t in 3..60 {
                let v = intercept + truth[0] * x[t - 1] + truth[1] * x[t - 2] + truth[2] * x[t - 3];
                x.push(v);
            }
            let m = ar_fit(&some(&x), 3, 0..x.len(), "A");
            // a transient that collapses too fast can leave the design rank deficient
            prop_assume!(m.is_ok());
            let m = m.unwrap();
            for (est, t) in m.coefficients.iter().zip(truth) {
                prop_assert!((est - t).abs() < 1e-6, "{:?} vs {:?}", m.coefficients, truth);
            }
            prop_assert!((m.intercept - intercept).abs() < 1e-6);
        }
    }
}
