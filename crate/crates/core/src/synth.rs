//! Seeded synthetic data: a coupled wind-speed-like panel and plain AR(p)
//! series.
//!
//! Panel model, for stations `j = 0..n`:
//!
//! ```text
//! y_0(t) = D(t) + r_0(t)
//! y_j(t) = (1 − c)·own_j(t) + c·y_{j−1}(t − L_j)          j ≥ 1
//! x_j(t) = base + y_j(t) + ε_j(t)
//! ```
//!
//! `D` is the shared driver (two sinusoids with seeded phases), `own_j` is a
//! private pair of sinusoids plus AR(1) red noise `r_j`, `L_j ∈ {1, 2, 3}` is
//! the lag to the upwind neighbour `j − 1`, and `ε` is white noise. Every
//! sinusoid sits on its own frequency slot so that uncoupled stations are
//! uncorrelated. Values are rounded to four decimals so the CSV form
//! round-trips exactly.

use chrono::{DateTime, TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::TimeSeriesPanel;
use crate::error::{Error, Result};

const BASE_LEVEL: f64 = 6.0;
const RED_PHI: f64 = 0.7;
const RED_SIGMA: f64 = 0.5;
const FREQ_FIRST: f64 = 0.010;
const FREQ_STEP: f64 = 0.003;
const FREQ_SLOTS: usize = 30;
const DRIVER_SLOTS: [usize; 2] = [2, 11];
const DRIVER_AMPS: [f64; 2] = [1.2, 2.0];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub t: usize,
    pub seed: u64,
    pub coupling: f64,
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 6,
            t: 5000,
            seed: 0,
            coupling: 0.8,
            noise: 0.3,
        }
    }
}

pub fn synth_start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2014, 1, 1, 0, 0, 0).unwrap()
}

/// Station whose forecasts benefit most from the others: the end of the
/// upwind chain.
pub fn designated_target(n: usize) -> usize {
    n.saturating_sub(1)
}

pub fn station_id(j: usize) -> String {
    format!("S{j:02}")
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Frequency slots not used by the driver, handed out to stations in order.
fn private_slots() -> impl Iterator<Item = usize> {
    (0..FREQ_SLOTS).filter(|s| !DRIVER_SLOTS.contains(s)).cycle()
}

fn slot_freq(slot: usize) -> f64 {
    FREQ_FIRST + FREQ_STEP * slot as f64
}

struct Sinusoid {
    amp: f64,
    freq: f64,
    phase: f64,
}

impl Sinusoid {
    fn at(&self, t: f64) -> f64 {
        self.amp * (std::f64::consts::TAU * self.freq * t + self.phase).sin()
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.t < 100 {
            return Err(Error::Config(format!(
                "synthetic panel needs n >= 2 and T >= 100 (got n = {}, T = {})",
                self.n, self.t
            )));
        }
        if !(0.0..=1.0).contains(&self.coupling) {
            return Err(Error::Config(format!("coupling must be in [0, 1], got {}", self.coupling)));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise must be >= 0, got {}", self.noise)));
        }
        Ok(())
    }

    /// Upwind lags `L_j` (entry 0 unused and set to 0).
    pub fn lags(&self) -> Vec<usize> {
        self.draw().1
    }

    fn draw(&self) -> (Vec<Vec<Sinusoid>>, Vec<usize>, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut slots = private_slots();
        let mut waves = Vec::with_capacity(self.n);
        let mut lags = vec![0];
        for j in 0..self.n {
            let pair = if j == 0 {
                DRIVER_SLOTS
                    .iter()
                    .zip(DRIVER_AMPS)
                    .map(|(&s, amp)| Sinusoid {
                        amp,
                        freq: slot_freq(s),
                        phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    })
                    .collect()
            } else {
                lags.push(rng.gen_range(1..=3));
                [(1.0, 2.0), (0.5, 1.0)]
                    .iter()
                    .map(|&(lo, hi)| Sinusoid {
                        amp: rng.gen_range(lo..hi),
                        freq: slot_freq(slots.next().expect("cycled")),
                        phase: rng.gen_range(0.0..std::f64::consts::TAU),
                    })
                    .collect()
            };
            waves.push(pair);
        }
        (waves, lags, rng)
    }

    pub fn generate(&self) -> Result<TimeSeriesPanel> {
        self.validate()?;
        let (waves, lags, mut rng) = self.draw();
        let (n, t_len) = (self.n, self.t);
        let burn = 3 * n + 50;
        let total = t_len + burn;
        let unit = Normal::new(0.0, 1.0).expect("unit normal");

        let mut latent = vec![vec![0.0; total]; n];
        for j in 0..n {
            let mut red = 0.0;
            for t in 0..total {
                red = RED_PHI * red + RED_SIGMA * unit.sample(&mut rng);
                let own: f64 = waves[j].iter().map(|w| w.at(t as f64)).sum::<f64>() + red;
                latent[j][t] = if j == 0 {
                    own
                } else {
                    let upwind = t.checked_sub(lags[j]).map_or(0.0, |s| latent[j - 1][s]);
                    (1.0 - self.coupling) * own + self.coupling * upwind
                };
            }
        }

        let mut cols: Vec<Vec<f64>> = latent
            .iter()
            .map(|y| {
                y[burn..]
                    .iter()
                    .map(|v| BASE_LEVEL + v + self.noise * unit.sample(&mut rng))
                    .collect()
            })
            .collect();
        for col in &mut cols {
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            if lo < 0.0 {
                col.iter_mut().for_each(|v| *v -= lo);
            }
        }
        let rows: Vec<Vec<f64>> = (0..t_len).map(|t| cols.iter().map(|c| round4(c[t])).collect()).collect();
        TimeSeriesPanel::from_dense((0..n).map(station_id).collect(), synth_start(), &rows)
    }
}

pub fn synth_generate(n: usize, t: usize, seed: u64, coupling: f64, noise: f64) -> Result<TimeSeriesPanel> {
    SynthConfig { n, t, seed, coupling, noise }.generate()
}

/// `x_t = c + Σ_k φ_k x_{t−k} + σ·e_t` after a burn-in, lag-1 coefficient first.
pub fn ar_series(coefficients: &[f64], intercept: f64, sigma: f64, t: usize, seed: u64) -> Vec<f64> {
    let p = coefficients.len();
    let burn = 500 + p;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let mut x = vec![0.0; burn + t];
    for i in p..x.len() {
        let lagged: f64 = coefficients.iter().enumerate().map(|(k, phi)| phi * x[i - 1 - k]).sum();
        x[i] = intercept + lagged + sigma * unit.sample(&mut rng);
    }
    x.split_off(burn)
}

/// Pearson correlation of `a[t]` with `b[t − lag]`.
pub fn lagged_correlation(a: &[f64], b: &[f64], lag: usize) -> f64 {
    let len = a.len().min(b.len());
    let xs = &a[lag..len];
    let ys = &b[..len - lag];
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn column(p: &TimeSeriesPanel, j: usize) -> Vec<f64> {
        p.column(j).into_iter().map(Option::unwrap).collect()
    }

    #[test]
    fn same_seed_same_panel() {
        let cfg = SynthConfig { t: 500, ..Default::default() };
        assert_eq!(cfg.generate().unwrap(), cfg.generate().unwrap());
        let other = SynthConfig { seed: 1, ..cfg.clone() };
        assert_ne!(cfg.generate().unwrap(), other.generate().unwrap());
    }

    #[test]
    fn shape_grid_and_sign() {
        let p = SynthConfig::default().generate().unwrap();
        assert_eq!((p.len(), p.n()), (5000, 6));
        assert_eq!(p.start(), synth_start());
        assert_eq!(p.missing_count(), 0);
        assert!((0..6).all(|j| column(&p, j).iter().all(|&v| v >= 0.0)));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let p = SynthConfig { t: 300, ..Default::default() }.generate().unwrap();
        assert_eq!(crate::dataset::parse_csv(&p.to_csv_string()).unwrap(), p);
    }

    #[test]
    fn uncoupled_stations_are_uncorrelated() {
        for seed in 0..3 {
            let p = SynthConfig { coupling: 0.0, seed, ..Default::default() }.generate().unwrap();
            for a in 0..p.n() {
                for b in 0..p.n() {
                    if a != b {
                        let r = lagged_correlation(&column(&p, a), &column(&p, b), 1);
                        assert!(r.abs() < 0.1, "seed {seed} pair ({a},{b}): {r}");
                    }
                }
            }
        }
    }

    #[test]
    fn coupled_stations_follow_upwind_neighbour() {
        for seed in 0..3 {
            let p = SynthConfig { seed, ..Default::default() }.generate().unwrap();
            for j in 1..p.n() {
                let r = lagged_correlation(&column(&p, j), &column(&p, j - 1), 1);
                assert!(r > 0.4, "seed {seed} station {j}: {r}");
            }
        }
    }

    #[test]
    fn lags_in_range() {
        let lags = SynthConfig { n: 40, ..Default::default() }.lags();
        assert_eq!(lags.len(), 40);
        assert!(lags[1..].iter().all(|l| (1..=3).contains(l)));
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(synth_generate(1, 5000, 0, 0.8, 0.3).is_err());
        assert!(synth_generate(6, 99, 0, 0.8, 0.3).is_err());
        assert!(synth_generate(6, 500, 0, 1.5, 0.3).is_err());
        assert!(synth_generate(6, 500, 0, 0.5, -1.0).is_err());
    }

    #[test]
    fn ar_series_is_seeded() {
        let a = ar_series(&[0.5, -0.2], 0.0, 0.1, 100, 3);
        assert_eq!(a, ar_series(&[0.5, -0.2], 0.0, 0.1, 100, 3));
        assert_eq!(a.len(), 100);
    }
}
