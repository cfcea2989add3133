//! Flat `key = value` run configuration.
//!
//! `#` starts a comment. Unknown and repeated keys are rejected. Command-line
//! flags override file values; [`RunConfig::dump`] writes every key in a
//! fixed order, so dumping a parsed dump reproduces it byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use dlstf::bank::HorizonConfig;
use dlstf::dataset::{format_timestamp, parse_timestamp, SplitSpec, TimeSeriesPanel};
use dlstf::training::TrainConfig;

use crate::Failure;

pub const SEED_ENV: &str = "DLSTF_SEED";

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    /// Station subset, in order; all stations when `None`.
    pub stations: Option<Vec<String>>,
    pub h: usize,
    pub ell: usize,
    /// Per-model widths; the last entry repeats for the remaining models.
    pub widths: Vec<Vec<usize>>,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: Option<u64>,
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub test_start: Option<DateTime<Utc>>,
    pub test_end: Option<DateTime<Utc>>,
    pub val_hours: i64,
    pub max_gap: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            data: None,
            stations: None,
            h: 6,
            ell: 12,
            widths: vec![vec![32], vec![64, 64]],
            learning_rate: t.learning_rate,
            rho: t.rho,
            epsilon: t.epsilon,
            batch_size: t.batch_size,
            max_epochs: t.max_epochs,
            patience: t.patience,
            clip_norm: t.clip_norm,
            seed: None,
            train_fraction: 0.7,
            val_fraction: 0.1,
            test_start: None,
            test_end: None,
            val_hours: 24 * 14,
            max_gap: 3,
        }
    }
}

pub fn parse_widths(s: &str) -> Result<Vec<Vec<usize>>, String> {
    s.split('/')
        .map(|model| {
            model
                .split(',')
                .map(|w| match w.trim().parse::<usize>() {
                    Ok(v) if v > 0 => Ok(v),
                    _ => Err(format!("bad layer width '{w}' in '{s}'")),
                })
                .collect()
        })
        .collect()
}

pub fn format_widths(widths: &[Vec<usize>]) -> String {
    widths
        .iter()
        .map(|m| m.iter().map(usize::to_string).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("/")
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse().map_err(|_| format!("{key}: cannot parse '{value}'"))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::Core(dlstf::Error::io(path, e)))?;
        Self::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected 'key = value'", ln + 1))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.contains(&key) {
                return Err(format!("line {}: '{key}' given twice", ln + 1));
            }
            seen.push(key);
            cfg.set(key, value).map_err(|e| format!("line {}: {e}", ln + 1))?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let ts = |v: &str| parse_timestamp(v).map_err(|e| e.to_string());
        match key {
            "data" => self.data = Some(PathBuf::from(value)),
            "stations" => self.stations = Some(value.split(',').map(|s| s.trim().to_string()).collect()),
            "h" => self.h = parse_num(key, value)?,
            "ell" => self.ell = parse_num(key, value)?,
            "widths" => self.widths = parse_widths(value)?,
            "learning_rate" => self.learning_rate = parse_num(key, value)?,
            "rho" => self.rho = parse_num(key, value)?,
            "epsilon" => self.epsilon = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "max_epochs" => self.max_epochs = parse_num(key, value)?,
            "patience" => self.patience = parse_num(key, value)?,
            "clip_norm" => self.clip_norm = parse_num(key, value)?,
            "seed" => self.seed = Some(parse_num(key, value)?),
            "train_fraction" => self.train_fraction = parse_num(key, value)?,
            "val_fraction" => self.val_fraction = parse_num(key, value)?,
            "test_start" => self.test_start = Some(ts(value)?),
            "test_end" => self.test_end = Some(ts(value)?),
            "val_hours" => self.val_hours = parse_num(key, value)?,
            "max_gap" => self.max_gap = parse_num(key, value)?,
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    pub fn dump(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("write to string");
        if let Some(d) = &self.data {
            kv("data", d.display().to_string());
        }
        if let Some(s) = &self.stations {
            kv("stations", s.join(","));
        }
        kv("h", self.h.to_string());
        kv("ell", self.ell.to_string());
        kv("widths", format_widths(&self.widths));
        kv("learning_rate", self.learning_rate.to_string());
        kv("rho", self.rho.to_string());
        kv("epsilon", self.epsilon.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("max_epochs", self.max_epochs.to_string());
        kv("patience", self.patience.to_string());
        kv("clip_norm", self.clip_norm.to_string());
        if let Some(s) = self.seed {
            kv("seed", s.to_string());
        }
        kv("train_fraction", self.train_fraction.to_string());
        kv("val_fraction", self.val_fraction.to_string());
        if let Some(t) = self.test_start {
            kv("test_start", format_timestamp(t));
        }
        if let Some(t) = self.test_end {
            kv("test_end", format_timestamp(t));
        }
        kv("val_hours", self.val_hours.to_string());
        kv("max_gap", self.max_gap.to_string());
        out
    }

    /// Fills `seed` from the environment when neither file nor flag set it.
    pub fn resolve_seed(&mut self, env: Option<&str>) -> Result<u64, Failure> {
        if self.seed.is_none() {
            if let Some(v) = env {
                let s = v
                    .trim()
                    .parse()
                    .map_err(|_| Failure::Usage(format!("{SEED_ENV}: cannot parse '{v}'")))?;
                self.seed = Some(s);
            }
        }
        Ok(*self.seed.get_or_insert(0))
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            rho: self.rho,
            epsilon: self.epsilon,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            seed: self.seed.unwrap_or(0),
            clip_norm: self.clip_norm,
        }
    }

    pub fn horizon_config(&self, n: usize) -> HorizonConfig {
        let mut cfg = HorizonConfig::new(self.h, self.ell, n).with_train_config(&self.train_config());
        if let Some(last) = self.widths.last() {
            cfg.widths = (0..self.h).map(|i| self.widths.get(i).unwrap_or(last).clone()).collect();
        }
        cfg
    }

    pub fn split_spec(&self, panel: &TimeSeriesPanel) -> dlstf::Result<SplitSpec> {
        match self.test_start {
            Some(start) => {
                let end = self.test_end.unwrap_or_else(|| panel.timestamp(panel.len() as i64));
                Ok(SplitSpec::with_test_window(panel, start, end, self.val_hours))
            }
            None => SplitSpec::by_fractions(panel, self.train_fraction, self.val_fraction),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widths_syntax() {
        assert_eq!(parse_widths("32/64,64").unwrap(), vec![vec![32], vec![64, 64]]);
        assert!(parse_widths("32/0").is_err());
        assert!(parse_widths("a").is_err());
        assert_eq!(format_widths(&[vec![8], vec![4, 4]]), "8/4,4");
        let cfg = RunConfig { h: 4, widths: vec![vec![8], vec![4, 4]], ..Default::default() };
        let hc = cfg.horizon_config(3);
        assert_eq!(hc.widths, vec![vec![8], vec![4, 4], vec![4, 4], vec![4, 4]]);
    }

    #[test]
    fn parse_and_dump_round_trip() {
        let text = "# demo\nh = 4\nwidths = 8/4,4   # trailing comment\nlearning_rate = 0.005\n\nstations = S01,S05\ntest_start = 2014-01-06T00:00:00Z\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.h, 4);
        assert_eq!(cfg.learning_rate, 0.005);
        assert_eq!(cfg.stations.as_deref(), Some(&["S01".to_string(), "S05".to_string()][..]));
        let dump = cfg.dump();
        assert_eq!(RunConfig::parse(&dump).unwrap(), cfg);
        assert_eq!(RunConfig::parse(&dump).unwrap().dump(), dump);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(RunConfig::parse("h 4").unwrap_err().contains("line 1"));
        assert!(RunConfig::parse("colour = red").unwrap_err().contains("unknown key"));
        assert!(RunConfig::parse("h = 2\nh = 3").unwrap_err().contains("twice"));
        assert!(RunConfig::parse("ell = -1").is_err());
    }

    #[test]
    fn seed_precedence() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.resolve_seed(None).unwrap(), 0);
        let mut cfg2 = RunConfig::default();
        assert_eq!(cfg2.resolve_seed(Some("17")).unwrap(), 17);
        let mut cfg3 = RunConfig { seed: Some(3), ..Default::default() };
        assert_eq!(cfg3.resolve_seed(Some("17")).unwrap(), 3);
        assert!(RunConfig::default().resolve_seed(Some("x")).is_err());
        cfg.seed = Some(9);
        assert_eq!(cfg.train_config().seed, 9);
    }
}
