use std::fmt::Write as _;
use std::path::Path;

use dlstf::bank::{forecast_block, load_bank, save_bank, train_bank_with, ModelBank};
use dlstf::baselines::{ArBaseline, Persistence};
use dlstf::dataset::{fill_missing, format_timestamp, ingest_csv, parse_timestamp, split, SplitSpec, TimeSeriesPanel};
use dlstf::lstm::random_gradient_check;
use dlstf::metrics::{evaluate as eval_walk, EvalConfig, Evaluation, Forecaster};
use dlstf::synth::SynthConfig;
use dlstf::Exec;

use crate::config::RunConfig;
use crate::manifest::{config_digest, Manifest};
use crate::Failure;

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents).map_err(|e| Failure::Core(dlstf::Error::io(path, e)))
}

fn log_run(command: &str, cfg: &RunConfig) {
    log::info!("{command}: seed {}, config sha256 {}", cfg.seed.unwrap_or(0), config_digest(cfg));
}

/// Reads the configured CSV, repairs short gaps and applies the station
/// subset.
fn load_panel(cfg: &RunConfig) -> Result<(TimeSeriesPanel, std::path::PathBuf), Failure> {
    let path = cfg
        .data
        .clone()
        .ok_or_else(|| Failure::Usage("no input data: pass --data or set 'data' in the config".into()))?;
    let raw = ingest_csv(&path)?;
    let (mut panel, gaps) = fill_missing(&raw, cfg.max_gap);
    if !gaps.is_empty() {
        log::info!(
            "{}: interpolated {} gaps, left {} longer or boundary gaps missing",
            path.display(),
            gaps.filled.len(),
            gaps.unfilled.len()
        );
    }
    if let Some(ids) = &cfg.stations {
        let ids: Vec<&str> = ids.iter().map(String::as_str).collect();
        panel = panel.select(&ids)?;
    }
    Ok((panel, path))
}

/// Test range preceded by `ell` history rows, so the first block can start
/// exactly at the beginning of the test range.
fn evaluation_window(panel: &TimeSeriesPanel, spec: &SplitSpec, ell: usize) -> Result<TimeSeriesPanel, Failure> {
    let [_, _, test] = spec.index_ranges(panel)?;
    Ok(panel.slice(test.start.saturating_sub(ell)..test.end)?)
}

fn check_stations(bank: &ModelBank, panel: &TimeSeriesPanel) -> Result<(), Failure> {
    if bank.n() != panel.n() {
        return Err(Failure::Core(dlstf::Error::Shape(format!(
            "bank was trained on {} stations but the data has {}; select stations with --use-stations",
            bank.n(),
            panel.n()
        ))));
    }
    Ok(())
}

pub fn train(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    log_run("train", cfg);
    let (panel, data) = load_panel(cfg)?;
    let spec = cfg.split_spec(&panel)?;
    let (train, val, _) = split(&panel, &spec)?;
    let hc = cfg.horizon_config(panel.n());
    let (bank, reports) = train_bank_with(&train, &val, &hc, Exec::default())?;
    save_bank(&bank, out)?;
    let mut m = Manifest::new("train", cfg.seed.unwrap_or(0))
        .config(cfg)
        .entry("stations", panel.station_ids().join(","))
        .input(&data)?;
    for r in &reports {
        m = m.entry(
            &format!("model.{}", r.offset),
            format!(
                "samples {}, best epoch {} of {}",
                r.train_samples, r.history.best_epoch, r.history.stopped_epoch
            ),
        );
    }
    m.output(out)?.write_for(out)?;
    println!("trained {} models on {} stations, saved {}", bank.h(), bank.n(), out.display());
    Ok(())
}

pub fn forecast(cfg: &RunConfig, model: &Path, at: &str, out: Option<&Path>) -> Result<(), Failure> {
    log_run("forecast", cfg);
    let bank = load_bank(model)?;
    let (panel, data) = load_panel(cfg)?;
    check_stations(&bank, &panel)?;
    let start = parse_timestamp(at).map_err(|e| Failure::Usage(format!("--at: {e}")))?;
    let block = forecast_block(&bank, &panel, start)?;
    let mut text = format!("timestamp,{}\n", panel.station_ids().join(","));
    for (i, row) in block.predictions.iter().enumerate() {
        text.push_str(&format_timestamp(start + chrono::Duration::hours(i as i64)));
        for v in row {
            write!(text, ",{v}").expect("write to string");
        }
        text.push('\n');
    }
    match out {
        Some(path) => {
            write_file(path, &text)?;
            Manifest::new("forecast", cfg.seed.unwrap_or(0))
                .config(cfg)
                .entry("at", at)
                .input(model)?
                .input(&data)?
                .output(path)?
                .write_for(path)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn score(
    cfg: &RunConfig,
    forecaster: &dyn Forecaster,
    panel: &TimeSeriesPanel,
    h: usize,
    ell: usize,
) -> Result<Evaluation, Failure> {
    let spec = cfg.split_spec(panel)?;
    let window = evaluation_window(panel, &spec, ell)?;
    let ev = eval_walk(forecaster, &window, EvalConfig { h, ell })?;
    log::info!(
        "{}: {} blocks scored, {} skipped for missing data",
        forecaster.name(),
        ev.blocks,
        ev.skipped_blocks
    );
    Ok(ev)
}

fn finish_report(
    command: &str,
    cfg: &RunConfig,
    ev: &Evaluation,
    report: &Path,
    inputs: &[&Path],
) -> Result<(), Failure> {
    write_file(report, &ev.report.to_csv())?;
    let mut m = Manifest::new(command, cfg.seed.unwrap_or(0)).config(cfg);
    for p in inputs {
        m = m.input(p)?;
    }
    m.output(report)?.write_for(report)?;
    let mean = &ev.report.mean;
    println!(
        "MEAN mae {:.4} rmse {:.4} nrmse {} over {} stations",
        mean.mae,
        mean.rmse,
        mean.nrmse.map_or("NA".into(), |v| format!("{v:.2}")),
        ev.report.station_count()
    );
    Ok(())
}

pub fn evaluate(cfg: &RunConfig, model: &Path, report: &Path) -> Result<(), Failure> {
    log_run("evaluate", cfg);
    let bank = load_bank(model)?;
    let (panel, data) = load_panel(cfg)?;
    check_stations(&bank, &panel)?;
    let ev = score(cfg, &bank, &panel, bank.h(), bank.ell())?;
    finish_report("evaluate", cfg, &ev, report, &[model, &data])
}

pub fn baseline(cfg: &RunConfig, ar_order: Option<usize>, report: &Path) -> Result<(), Failure> {
    log_run("baseline", cfg);
    let (panel, data) = load_panel(cfg)?;
    let ev = match ar_order {
        None => score(cfg, &Persistence, &panel, cfg.h, cfg.ell)?,
        Some(p) => {
            let [train, _, _] = cfg.split_spec(&panel)?.index_ranges(&panel)?;
            let ar = ArBaseline::fit(&panel, p, train)?;
            for m in &ar.models {
                log::info!("AR({p}) {}: intercept {:.4}, coefficients {:?}", m.station_id, m.intercept, m.coefficients);
            }
            score(cfg, &ar, &panel, cfg.h, cfg.ell)?
        }
    };
    finish_report("baseline", cfg, &ev, report, &[&data])
}

pub fn gradcheck(seed: u64, nets: usize, eps: f64) -> Result<(), Failure> {
    log::info!("gradcheck: seed {seed}");
    let s = random_gradient_check(seed, nets, eps)?;
    println!(
        "max relative error {:.3e} over {} networks (worst: {})",
        s.max_rel_error, s.networks, s.worst_shape
    );
    if s.max_rel_error < 1e-6 {
        Ok(())
    } else {
        Err(Failure::Check(format!("gradient check failed: {:.3e} >= 1e-6", s.max_rel_error)))
    }
}

pub fn synth(cfg: &SynthConfig, out: &Path) -> Result<(), Failure> {
    log::info!("synth: seed {}", cfg.seed);
    let panel = cfg.generate()?;
    panel.write_csv(out)?;
    Manifest::new("synth", cfg.seed)
        .entry("n", cfg.n)
        .entry("T", cfg.t)
        .entry("coupling", cfg.coupling)
        .entry("noise", cfg.noise)
        .output(out)?
        .write_for(out)?;
    println!("wrote {} rows x {} stations to {}", panel.len(), panel.n(), out.display());
    Ok(())
}

pub fn plot(cfg: &RunConfig, model: &Path, stations: &[String], out: &Path) -> Result<(), Failure> {
    log_run("plot", cfg);
    let bank = load_bank(model)?;
    let (panel, data) = load_panel(cfg)?;
    check_stations(&bank, &panel)?;
    let columns: Vec<usize> = stations
        .iter()
        .map(|id| panel.station_index(id))
        .collect::<dlstf::Result<_>>()?;
    let ev = score(cfg, &bank, &panel, bank.h(), bank.ell())?;
    std::fs::create_dir_all(out).map_err(|e| Failure::Core(dlstf::Error::io(out, e)))?;
    let mut index = String::from("station,file,points\n");
    let mut manifest = Manifest::new("plot", cfg.seed.unwrap_or(0)).config(cfg).input(model)?.input(&data)?;
    for (id, &j) in stations.iter().zip(&columns) {
        let mut text = String::from("time_index,actual,forecast\n");
        for pt in &ev.series[j] {
            writeln!(text, "{},{},{}", pt.t, pt.actual, pt.forecast).expect("write to string");
        }
        let file = format!("{id}.csv");
        let path = out.join(&file);
        write_file(&path, &text)?;
        manifest = manifest.output(&path)?;
        writeln!(index, "{id},{file},{}", ev.series[j].len()).expect("write to string");
    }
    let index_path = out.join("index.csv");
    write_file(&index_path, &index)?;
    manifest.output(&index_path)?.write_for(out)?;
    println!("wrote {} station series to {}", stations.len(), out.display());
    Ok(())
}
