use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use ipred::data::read_dataset_file;
use ipred_cli::commands::{self, INTERVALS_FILE, METRICS_FILE, PDF_FILE, TUNING_FILE};
use ipred_cli::RunConfig;
use tempfile::TempDir;

fn small_config(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.apply_text(
        "steps = 400\nn_train = 60\nn_validation = 60\nn_test = 60\n\
         gamma_max = 1\ngamma_step = 0.5\ngrid_size = 201\n",
    )
    .unwrap();
    cfg.out = out.to_path_buf();
    cfg
}

fn generated(dir: &TempDir) -> (RunConfig, PathBuf) {
    let data = dir.path().join("data");
    let cfg = small_config(&data);
    commands::generate(&cfg).unwrap();
    (cfg, data)
}

#[test]
fn default_generation_yields_2498_pairs() {
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig::default();
    cfg.out = dir.path().join("nested/out");
    let summary = commands::generate(&cfg).unwrap();
    assert_eq!(summary.pairs, 2498);
    let train = read_dataset_file(&cfg.out.join("train.csv")).unwrap();
    assert_eq!(train.pairs.len(), 200);
    assert!(train.scale.is_some());
}

#[test]
fn ten_samples_yield_eight_pairs() {
    let dir = TempDir::new().unwrap();
    let mut cfg = RunConfig::default();
    cfg.apply_text("steps = 10\nn_train = 3\nn_validation = 2\nn_test = 3\n").unwrap();
    cfg.out = dir.path().to_path_buf();
    assert_eq!(commands::generate(&cfg).unwrap().pairs, 8);
}

#[test]
fn manifest_records_every_parameter() {
    let dir = TempDir::new().unwrap();
    let (mut cfg, data) = generated(&dir);
    let text = fs::read_to_string(data.join("manifest_generate.txt")).unwrap();
    let mut back = RunConfig::default();
    back.apply_text(&text).unwrap();
    assert_eq!(back, cfg);

    cfg.tau = 0.1;
    cfg.padding = 0.3;
    cfg.out = dir.path().join("tuned");
    commands::tune(&cfg, &data.join("train.csv"), &data.join("validation.csv"), |_, _, _| {}).unwrap();
    let text = fs::read_to_string(cfg.out.join("manifest_tune.txt")).unwrap();
    let mut back = RunConfig::default();
    back.apply_text(&text).unwrap();
    assert_eq!(back, cfg);
    assert!(text.contains("# train_rows = 60"));
}

#[test]
fn single_gamma_gives_single_row() {
    let dir = TempDir::new().unwrap();
    let (mut cfg, data) = generated(&dir);
    cfg.gamma_max = 0.0;
    cfg.out = dir.path().join("tune");
    let (report, _) = commands::tune(&cfg, &data.join("train.csv"), &data.join("validation.csv"), |_, _, _| {}).unwrap();
    assert_eq!(report.rows.len(), 1);
    assert_eq!(report.gamma_star, 0.0);
    let csv = fs::read_to_string(cfg.out.join(TUNING_FILE)).unwrap();
    let data_rows = csv.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(data_rows, 2);
    let (g, c) = commands::read_tuning_choice(&cfg.out.join(TUNING_FILE)).unwrap();
    assert_eq!((g, c), (report.gamma_star, report.c_star));
}

#[test]
fn empty_validation_file_is_an_error() {
    let dir = TempDir::new().unwrap();
    let (cfg, data) = generated(&dir);
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "y_km1,y_km2,y\n").unwrap();
    assert!(commands::tune(&cfg, &data.join("train.csv"), &empty, |_, _, _| {}).is_err());
}

#[test]
fn flat_density_intervals_span_most_of_the_grid() {
    let dir = TempDir::new().unwrap();
    let (mut cfg, data) = generated(&dir);
    cfg.gamma = Some(0.5);
    cfg.c = Some(0.0);
    cfg.out = dir.path().join("flat");
    commands::predict(&cfg, &data.join("train.csv"), &data.join("test.csv")).unwrap();
    let csv = fs::read_to_string(cfg.out.join(INTERVALS_FILE)).unwrap();
    let train = read_dataset_file(&data.join("train.csv")).unwrap();
    let ys: Vec<f64> = train.pairs.iter().map(|p| p.y).collect();
    let grid = ipred::build_output_grid(&ys, cfg.grid_size, cfg.padding).unwrap();
    let span = grid.last() - grid.first();
    let step = span / (cfg.grid_size - 1) as f64;
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 60);
    for row in rows {
        let width: f64 = row.split(',').nth(4).unwrap().parse().unwrap();
        assert!(width >= (1.0 - 2.0 * cfg.tau) * span - 2.0 * step, "{width} vs {span}");
        assert!(width <= span);
    }
}

#[test]
fn single_query_row_gives_single_output_row() {
    let dir = TempDir::new().unwrap();
    let (mut cfg, data) = generated(&dir);
    let test = fs::read_to_string(data.join("test.csv")).unwrap();
    let query: Vec<&str> = test.lines().take(3).collect();
    let query_path = dir.path().join("query.csv");
    fs::write(&query_path, query.join("\n") + "\n").unwrap();
    cfg.gamma = Some(0.5);
    cfg.c = Some(5.0);
    cfg.out = dir.path().join("one");
    commands::predict(&cfg, &data.join("train.csv"), &query_path).unwrap();
    let csv = fs::read_to_string(cfg.out.join(INTERVALS_FILE)).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn predict_requires_gamma_and_c() {
    let dir = TempDir::new().unwrap();
    let (cfg, data) = generated(&dir);
    assert!(commands::predict(&cfg, &data.join("train.csv"), &data.join("test.csv")).is_err());
}

#[test]
fn near_flat_density_covers_every_test_output() {
    let dir = TempDir::new().unwrap();
    let (mut cfg, data) = generated(&dir);
    cfg.tau = 0.01;
    cfg.padding = 1.0;
    cfg.gamma = Some(0.0);
    cfg.c = Some(0.0);
    cfg.out = dir.path().join("eval");
    let summary = commands::evaluate(&cfg, &data.join("train.csv"), &data.join("test.csv")).unwrap();
    assert_eq!(summary.proposed.empirical_probability, 1.0);
    assert_eq!(summary.proposed.dataset_length, 60);
    assert!(summary.table.contains("Empirical Probability"));
    assert!(summary.table.contains("Quantile regression"));
    let csv = fs::read_to_string(cfg.out.join(METRICS_FILE)).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn evaluation_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let (mut cfg, data) = generated(&dir);
    cfg.gamma = Some(0.5);
    cfg.c = Some(6.0);
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        cfg.out = dir.path().join(run);
        commands::evaluate(&cfg, &data.join("train.csv"), &data.join("test.csv")).unwrap();
        outputs.push(fs::read(cfg.out.join(METRICS_FILE)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn density_on_a_line_integrates_to_one() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("points.csv");
    fs::write(&data, "value\n0.1\n0.5\n0.35\n0.9\n0.4\n").unwrap();
    let mut cfg = RunConfig::default();
    cfg.grid_size = 401;
    cfg.padding = 2.0;
    cfg.out = dir.path().join("pdf");
    commands::pdf(&cfg, &data).unwrap();
    let csv = fs::read_to_string(cfg.out.join(PDF_FILE)).unwrap();
    let rows: Vec<(f64, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split(',').map(|v| v.parse::<f64>().unwrap());
            (it.next().unwrap(), it.next().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 401);
    let h = rows[1].0 - rows[0].0;
    let mass: f64 = rows.iter().map(|r| r.1).sum::<f64>() * h;
    assert!((mass - 1.0).abs() < 1e-9, "{mass}");
}

#[test]
fn invalid_configuration_is_rejected() {
    let dir = TempDir::new().unwrap();
    let mut cfg = small_config(dir.path());
    cfg.tau = 0.5;
    assert!(commands::generate(&cfg).is_err());
    let mut cfg = small_config(dir.path());
    cfg.source = ipred_cli::DataSource::File(dir.path().join("missing.csv"));
    assert!(commands::generate(&cfg).is_err());
}

#[test]
fn series_file_source() {
    let dir = TempDir::new().unwrap();
    let series = dir.path().join("series.csv");
    let body: String = (0..50).map(|k| format!("{}\n", (k as f64 * 0.3).sin())).collect();
    fs::write(&series, format!("value\n{body}")).unwrap();
    let mut cfg = RunConfig::default();
    cfg.apply_text(&format!(
        "source = {}\nn_train = 20\nn_validation = 10\nn_test = 10\n",
        series.display()
    ))
    .unwrap();
    cfg.out = dir.path().join("out");
    assert_eq!(commands::generate(&cfg).unwrap().pairs, 48);
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ipred"))
}

#[test]
fn binary_runs_generate_with_overrides() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("run.conf");
    fs::write(&config, "# tiny run\nsteps = 10\nn_train = 4\nn_validation = 2\nn_test = 2\n").unwrap();
    let out = dir.path().join("gen");
    let status = binary()
        .args(["generate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .args(["--tau", "0.1"])
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(String::from_utf8_lossy(&status.stdout).contains("8 pairs"));
    let manifest = fs::read_to_string(out.join("manifest_generate.txt")).unwrap();
    assert!(manifest.contains("tau = 0.1"));
}

#[test]
fn binary_reports_errors_with_nonzero_exit() {
    let dir = TempDir::new().unwrap();
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let status = binary()
        .arg("tune")
        .arg("--train")
        .arg(&empty)
        .arg("--validation")
        .arg(&empty)
        .output()
        .unwrap();
    assert!(!status.status.success());
    let bad = binary().args(["generate", "--set", "no_such_key=1"]).output().unwrap();
    assert!(!bad.status.success());
}
