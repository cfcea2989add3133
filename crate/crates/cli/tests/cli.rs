use std::path::{Path, PathBuf};
use std::process::Command;

use dlstf::bank::load_bank;
use dlstf::dataset::{ingest_csv, SplitSpec};
use dlstf::metrics::{evaluate, EvalConfig};
use dlstf_cli::run_cli;

const TINY: &str = "widths = 6/5,5\nmax_epochs = 2\nlearning_rate = 0.005\n";

fn run(args: &[&str]) -> i32 {
    run_cli(std::iter::once("dlstf").chain(args.iter().copied()))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Synthetic data plus a tiny training config pointing at it.
    fn with_data(t: usize) -> (Self, PathBuf) {
        let ws = Self::new();
        let data = ws.path("s.csv");
        assert_eq!(run(&["synth", "--T", &t.to_string(), "--seed", "2", "--out", p(&data)]), 0);
        let cfg = ws.path("run.cfg");
        std::fs::write(&cfg, format!("data = {}\n{TINY}", data.display())).unwrap();
        (ws, cfg)
    }
}

#[test]
fn train_then_evaluate_writes_report_with_mean_row() {
    let (ws, cfg) = Workspace::with_data(500);
    let bank = ws.path("m.bank");
    let report = ws.path("r.csv");
    assert_eq!(run(&["train", "--config", p(&cfg), "--out", p(&bank)]), 0);
    assert!(ws.path("m.bank.manifest").exists());
    assert_eq!(run(&["evaluate", "--config", p(&cfg), "--model", p(&bank), "--report", p(&report)]), 0);
    let text = std::fs::read_to_string(&report).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "station,mae,rmse,nrmse");
    assert_eq!(lines.len(), 1 + 6 + 1);
    assert!(lines[7].starts_with("MEAN,"));
    let manifest = std::fs::read_to_string(ws.path("r.csv.manifest")).unwrap();
    assert!(manifest.contains("output.r.csv.sha256 = "));
    assert!(manifest.contains("input.m.bank.sha256 = "));
}

#[test]
fn baselines_write_reports() {
    let (ws, cfg) = Workspace::with_data(400);
    for (method, name) in [("persistence", "p.csv"), ("ar", "ar.csv")] {
        let report = ws.path(name);
        assert_eq!(run(&["baseline", "--config", p(&cfg), "--method", method, "--report", p(&report)]), 0);
        assert!(std::fs::read_to_string(&report).unwrap().contains("\nMEAN,"));
    }
    assert_eq!(run(&["baseline", "--config", p(&cfg), "--method", "magic", "--report", "x"]), 1);
}

#[test]
fn missing_model_is_a_data_error() {
    let (ws, cfg) = Workspace::with_data(200);
    let code = run(&[
        "evaluate",
        "--config",
        p(&cfg),
        "--model",
        p(&ws.path("missing.bank")),
        "--report",
        p(&ws.path("r.csv")),
    ]);
    assert_eq!(code, 2);
}

#[test]
fn malformed_data_is_a_data_error() {
    let ws = Workspace::new();
    let data = ws.path("bad.csv");
    std::fs::write(&data, "timestamp,A\n2014-01-01T00:00:00Z,1\n2014-01-01T00:00:00Z,2\n").unwrap();
    assert_eq!(run(&["train", "--data", p(&data), "--out", p(&ws.path("m.bank"))]), 2);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["bogus"]), 1);
    assert_eq!(run(&["train", "--no-such-flag"]), 1);
    assert_eq!(run(&[]), 1);
    assert_eq!(run(&["train", "--h", "0", "--data", "x.csv", "--dump-config"]), 0);
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["--version"]), 0);
}

#[test]
fn bad_config_file_is_a_usage_error() {
    let ws = Workspace::new();
    let cfg = ws.path("bad.cfg");
    std::fs::write(&cfg, "colour = blue\n").unwrap();
    assert_eq!(run(&["train", "--config", p(&cfg), "--out", "x"]), 1);
}

#[test]
fn gradcheck_passes() {
    assert_eq!(run(&["gradcheck", "--seed", "7", "--nets", "8"]), 0);
}

#[test]
fn divergent_training_exits_three() {
    let (ws, cfg) = Workspace::with_data(300);
    let code = run(&[
        "train",
        "--config",
        p(&cfg),
        "--learning-rate",
        "1e300",
        "--clip-norm",
        "0",
        "--out",
        p(&ws.path("m.bank")),
    ]);
    assert_eq!(code, 3);
}

#[test]
fn dump_config_is_idempotent_and_flags_override() {
    let (ws, cfg) = Workspace::with_data(200);
    let bin = env!("CARGO_BIN_EXE_dlstf");
    let dump = |args: &[&str]| {
        let out = Command::new(bin).args(args).env_remove("DLSTF_SEED").output().unwrap();
        assert!(out.status.success());
        String::from_utf8(out.stdout).unwrap()
    };
    let first = dump(&["train", "--config", p(&cfg), "--ell", "8", "--dump-config"]);
    assert!(first.contains("\nell = 8\n"));
    assert!(first.contains("\nwidths = 6/5,5\n"));
    let again = ws.path("again.cfg");
    std::fs::write(&again, &first).unwrap();
    assert_eq!(dump(&["train", "--config", p(&again), "--dump-config"]), first);
}

#[test]
fn seed_falls_back_to_environment() {
    let ws = Workspace::new();
    let bin = env!("CARGO_BIN_EXE_dlstf");
    let synth = |out: &Path, seed_flag: Option<&str>, env: Option<&str>| {
        let mut cmd = Command::new(bin);
        cmd.args(["synth", "--T", "150", "--out", p(out)]);
        if let Some(s) = seed_flag {
            cmd.args(["--seed", s]);
        }
        match env {
            Some(v) => cmd.env("DLSTF_SEED", v),
            None => cmd.env_remove("DLSTF_SEED"),
        };
        assert!(cmd.status().unwrap().success());
        std::fs::read(out).unwrap()
    };
    let from_env = synth(&ws.path("a.csv"), None, Some("5"));
    let from_flag = synth(&ws.path("b.csv"), Some("5"), Some("9"));
    let default = synth(&ws.path("c.csv"), None, None);
    assert_eq!(from_env, from_flag);
    assert_ne!(from_env, default);
}

#[test]
fn forecast_prints_one_block() {
    let (ws, cfg) = Workspace::with_data(400);
    let bank = ws.path("m.bank");
    assert_eq!(run(&["train", "--config", p(&cfg), "--out", p(&bank)]), 0);
    let out = ws.path("f.csv");
    let code = run(&[
        "forecast",
        "--config",
        p(&cfg),
        "--model",
        p(&bank),
        "--at",
        "2014-01-10T00:00:00Z",
        "--out",
        p(&out),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 6);
    assert!(text.lines().nth(1).unwrap().starts_with("2014-01-10T00:00:00Z,"));
    let early = &["forecast", "--config", p(&cfg), "--model", p(&bank), "--at", "2014-01-01T03:00:00Z"];
    assert_eq!(run(early), 2);
}

#[test]
fn plot_series_match_evaluation() {
    let (ws, cfg) = Workspace::with_data(400);
    let bank_path = ws.path("m.bank");
    assert_eq!(run(&["train", "--config", p(&cfg), "--out", p(&bank_path)]), 0);
    let out = ws.path("plots");
    assert_eq!(
        run(&["plot", "--config", p(&cfg), "--model", p(&bank_path), "--stations", "S01,S04", "--out", p(&out)]),
        0
    );
    let index = std::fs::read_to_string(out.join("index.csv")).unwrap();
    assert_eq!(index.lines().count(), 1 + 2);
    assert!(out.join("run.manifest").exists());

    let panel = ingest_csv(&ws.path("s.csv")).unwrap();
    let bank = load_bank(&bank_path).unwrap();
    let spec = SplitSpec::by_fractions(&panel, 0.7, 0.1).unwrap();
    let [_, _, test] = spec.index_ranges(&panel).unwrap();
    let window = panel.slice(test.start - bank.ell()..test.end).unwrap();
    let ev = evaluate(&bank, &window, EvalConfig { h: bank.h(), ell: bank.ell() }).unwrap();

    let text = std::fs::read_to_string(out.join("S04.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time_index,actual,forecast"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), ev.series[4].len());
    for (row, pt) in rows.iter().zip(&ev.series[4]) {
        let t: usize = row[0].parse().unwrap();
        assert_eq!(t, pt.t);
        let actual: f64 = row[1].parse().unwrap();
        assert_eq!(actual.to_bits(), window.get(t, 4).unwrap().to_bits());
        let forecast: f64 = row[2].parse().unwrap();
        assert_eq!(forecast.to_bits(), pt.forecast.to_bits());
    }

    let bad = &["plot", "--config", p(&cfg), "--model", p(&bank_path), "--stations", "NOPE", "--out", p(&out)];
    assert_eq!(run(bad), 2);
}

#[test]
fn station_subset_needs_matching_bank() {
    let (ws, cfg) = Workspace::with_data(400);
    let bank = ws.path("one.bank");
    assert_eq!(run(&["train", "--config", p(&cfg), "--use-stations", "S05", "--out", p(&bank)]), 0);
    let report = ws.path("r.csv");
    let eval = |extra: &[&str]| {
        let mut args = vec!["evaluate", "--config", p(&cfg), "--model", p(&bank), "--report", p(&report)];
        args.extend_from_slice(extra);
        run(&args)
    };
    assert_eq!(eval(&[]), 2);
    assert_eq!(eval(&["--use-stations", "S05"]), 0);
    let text = std::fs::read_to_string(&report).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("S05,"));
}
