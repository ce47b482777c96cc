//! Pipeline subcommands. Each one computes everything first and writes its
//! output files only at the end.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ipred::baseline::{fit_quantile_regression, LinearModel};
use ipred::data::{
    read_dataset_file, write_dataset, DatasetFile, Pair, Scale, SeriesDataset,
};
use ipred::epdf::RegularGrid;
use ipred::tune::{predict_intervals, tune_gamma_levels};
use ipred::{
    build_output_grid, empirical_pdf_on_grid, evaluate as evaluate_method, joint_point_set, OutputGrid,
    PointSet, TuningReport, ValidationSet,
};

use crate::config::{DataSource, RunConfig};

pub const TRAIN_FILE: &str = "train.csv";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const TEST_FILE: &str = "test.csv";
pub const SERIES_FILE: &str = "series.csv";
pub const TUNING_FILE: &str = "tuning.csv";
pub const INTERVALS_FILE: &str = "intervals.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_TABLE_FILE: &str = "metrics_table.txt";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const PDF_FILE: &str = "pdf.csv";

/// Largest number of points `pdf` will evaluate.
const MAX_PDF_POINTS: usize = 4_000_000;

/// Files produced by a command, relative paths joined onto the output directory.
pub type Outputs = Vec<(PathBuf, String)>;

fn write_outputs(out: &Path, files: &Outputs) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))?;
    let mut written = Vec::with_capacity(files.len());
    for (name, body) in files {
        let path = out.join(name);
        fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    Ok(written)
}

fn manifest(cfg: &RunConfig, command: &str, extra: &[(&str, String)]) -> String {
    let mut s = format!("# ipred {command} manifest\n");
    s.push_str(&cfg.manifest());
    for (k, v) in extra {
        let _ = writeln!(s, "# {k} = {v}");
    }
    s
}

fn load_pairs(path: &Path, what: &str) -> Result<DatasetFile> {
    let file = read_dataset_file(path).with_context(|| format!("reading {what} file {}", path.display()))?;
    if file.pairs.is_empty() {
        bail!("{what} file {} contains no rows", path.display());
    }
    Ok(file)
}

/// Identity scale when the training file carries none.
fn scale_of(file: &DatasetFile) -> Scale {
    file.scale.unwrap_or(Scale { min: 0.0, max: 1.0 })
}

fn check_dims(reference: &[Pair], other: &[Pair], what: &str) -> Result<()> {
    let n = reference[0].x.len();
    if let Some(p) = other.iter().find(|p| p.x.len() != n) {
        bail!("{what} rows have {} regressors, training rows have {n}", p.x.len());
    }
    Ok(())
}

struct Model {
    train: DatasetFile,
    set: PointSet,
    grid: OutputGrid,
}

fn load_model(cfg: &RunConfig, train_path: &Path) -> Result<Model> {
    let train = load_pairs(train_path, "training")?;
    let set = joint_point_set(&train.pairs)?;
    let outputs: Vec<f64> = train.pairs.iter().map(|p| p.y).collect();
    let grid = build_output_grid(&outputs, cfg.grid_size, cfg.padding)?;
    Ok(Model { train, set, grid })
}

/// Raw series, one value per line; a non-numeric first line is a header.
pub fn read_series(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading series {}", path.display()))?;
    let header_line = first_data_line(&text);
    let mut values = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.split(',').next().unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if i == header_line => continue,
            Err(_) => bail!("{}: line {}: `{field}` is not a number", path.display(), i + 1),
        }
    }
    Ok(values)
}

fn first_data_line(text: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        })
        .unwrap_or(0)
}

pub struct GenerateSummary {
    pub pairs: usize,
    pub files: Vec<PathBuf>,
}

pub fn generate(cfg: &RunConfig) -> Result<GenerateSummary> {
    cfg.validate()?;
    let ds = match &cfg.source {
        DataSource::GenerateLorenz => SeriesDataset::lorenz(&cfg.lorenz, cfg.lags, cfg.split)?,
        DataSource::File(p) => SeriesDataset::from_series(read_series(p)?, cfg.lags, cfg.split)?,
    };
    let split = ds.split();
    let mut files: Outputs = Vec::new();
    for (name, pairs) in [
        (TRAIN_FILE, &split.train),
        (VALIDATION_FILE, &split.validation),
        (TEST_FILE, &split.test),
    ] {
        let mut buf = Vec::new();
        write_dataset(&mut buf, pairs, Some(ds.scale))?;
        files.push((name.into(), String::from_utf8(buf)?));
    }
    let mut series = String::from("k,raw,normalized\n");
    for (k, (r, n)) in ds.raw.iter().zip(&ds.series).enumerate() {
        let _ = writeln!(series, "{k},{r},{n}");
    }
    files.push((SERIES_FILE.into(), series));
    files.push((
        "manifest_generate.txt".into(),
        manifest(
            cfg,
            "generate",
            &[
                ("pairs", ds.pairs.len().to_string()),
                ("scale_min", ds.scale.min.to_string()),
                ("scale_max", ds.scale.max.to_string()),
            ],
        ),
    ));
    let written = write_outputs(&cfg.out, &files)?;
    Ok(GenerateSummary {
        pairs: ds.pairs.len(),
        files: written,
    })
}

pub fn tuning_csv(report: &TuningReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# tau = {}", report.tau);
    let _ = writeln!(s, "# gamma_star = {}", report.gamma_star);
    let _ = writeln!(s, "# c_star = {}", report.c_star);
    s.push_str("gamma,c_gamma,log_likelihood,upper_violations,lower_violations,c_max_passes,non_monotone\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.gamma, r.c, r.log_likelihood, r.upper_violations, r.lower_violations, r.c_max_passes, r.non_monotone
        );
    }
    s
}

/// `(γ*, c*)` from the comment lines of a tuning report.
pub fn read_tuning_choice(path: &Path) -> Result<(f64, f64)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading report {}", path.display()))?;
    let mut gamma = None;
    let mut c = None;
    for line in text.lines() {
        let Some(rest) = line.strip_prefix('#') else { continue };
        let Some((k, v)) = rest.split_once('=') else { continue };
        match k.trim() {
            "gamma_star" => gamma = Some(v.trim().parse::<f64>()?),
            "c_star" => c = Some(v.trim().parse::<f64>()?),
            _ => {}
        }
    }
    match (gamma, c) {
        (Some(g), Some(c)) => Ok((g, c)),
        _ => bail!("{} does not contain gamma_star and c_star", path.display()),
    }
}

/// `progress(γ, done, total)` is called after each `γ` of the sweep.
pub fn tune<P>(cfg: &RunConfig, train: &Path, validation: &Path, mut progress: P) -> Result<(TuningReport, Vec<PathBuf>)>
where
    P: FnMut(f64, usize, usize),
{
    cfg.validate()?;
    let model = load_model(cfg, train)?;
    let val_file = load_pairs(validation, "validation")?;
    check_dims(&model.train.pairs, &val_file.pairs, "validation")?;
    let val = ValidationSet::new(val_file.pairs)?;
    let overlap = val.overlap_with(&model.set);
    if overlap > 0 {
        eprintln!("warning: {overlap} validation pairs also occur in the training set");
    }
    let gammas = cfg.gammas();
    let options = cfg.tune_options(model.set.len());
    let mut reports = tune_gamma_levels(&gammas, &[cfg.tau], &model.set, &val, &model.grid, &options, |i| {
        progress(gammas[i], i + 1, gammas.len())
    })?;
    let report = reports.remove(0);
    for r in report.rows.iter().filter(|r| r.c_max_passes) {
        eprintln!("warning: gamma {}: c_max = {} still passes validation; consider raising c_max", r.gamma, options.c_max);
    }
    for r in report.rows.iter().filter(|r| r.non_monotone) {
        eprintln!("warning: gamma {}: violation counts were not monotone in c", r.gamma);
    }
    let files: Outputs = vec![
        (TUNING_FILE.into(), tuning_csv(&report)),
        (
            "manifest_tune.txt".into(),
            manifest(
                cfg,
                "tune",
                &[
                    ("train", train.display().to_string()),
                    ("validation", validation.display().to_string()),
                    ("train_rows", model.set.len().to_string()),
                    ("validation_rows", val.len().to_string()),
                    ("c_max_resolved", options.c_max.to_string()),
                    ("grid_first", model.grid.first().to_string()),
                    ("grid_last", model.grid.last().to_string()),
                ],
            ),
        ),
    ];
    let written = write_outputs(&cfg.out, &files)?;
    Ok((report, written))
}

fn require_gamma_c(cfg: &RunConfig) -> Result<(f64, f64)> {
    let gamma = cfg.gamma.ok_or_else(|| anyhow!("gamma is required (--gamma, config key, or --report)"))?;
    let c = cfg.c.ok_or_else(|| anyhow!("c is required (--c, config key, or --report)"))?;
    if !(gamma >= 0.0 && gamma.is_finite()) {
        bail!("gamma must be finite and nonnegative");
    }
    if !(c >= 0.0 && c.is_finite()) {
        bail!("c must be finite and nonnegative");
    }
    Ok((gamma, c))
}

pub fn predict(cfg: &RunConfig, train: &Path, query: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let (gamma, c) = require_gamma_c(cfg)?;
    let model = load_model(cfg, train)?;
    let queries = load_pairs(query, "query")?;
    check_dims(&model.train.pairs, &queries.pairs, "query")?;
    let scale = scale_of(&model.train);
    let predictions = predict_intervals(
        &model.set,
        queries.pairs.iter().map(|p| p.x.as_slice()),
        &model.grid,
        gamma,
        c,
        cfg.tau,
        &cfg.solver,
    )?;
    let mut s = String::from("index,lower,upper,median,width,y,lower_orig,upper_orig,median_orig,width_orig,y_orig\n");
    for (k, ((iv, median), p)) in predictions.iter().zip(&queries.pairs).enumerate() {
        let _ = writeln!(
            s,
            "{k},{},{},{},{},{},{},{},{},{},{}",
            iv.lower,
            iv.upper,
            median,
            iv.width(),
            p.y,
            scale.denormalize(iv.lower),
            scale.denormalize(iv.upper),
            scale.denormalize(*median),
            scale.denormalize_width(iv.width()),
            scale.denormalize(p.y),
        );
    }
    let files: Outputs = vec![
        (INTERVALS_FILE.into(), s),
        (
            "manifest_predict.txt".into(),
            manifest(
                cfg,
                "predict",
                &[
                    ("train", train.display().to_string()),
                    ("query", query.display().to_string()),
                    ("train_rows", model.set.len().to_string()),
                    ("query_rows", queries.pairs.len().to_string()),
                ],
            ),
        ),
    ];
    write_outputs(&cfg.out, &files)
}

/// Side-by-side metrics of the proposed method and the quantile-regression band.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodMetrics {
    pub name: &'static str,
    pub dataset_length: usize,
    pub empirical_probability: f64,
    pub mean_width: f64,
    pub mean_width_original: f64,
}

pub struct EvaluateSummary {
    pub proposed: MethodMetrics,
    pub baseline: MethodMetrics,
    pub table: String,
    pub files: Vec<PathBuf>,
}

pub fn metrics_table(tau: f64, gamma: f64, c: f64, rows: &[&MethodMetrics]) -> String {
    let mut s = format!("tau = {tau}, gamma = {gamma}, c = {c}\n");
    let _ = writeln!(
        s,
        "{:<21} | {:>14} | {:>21} | {:>14} | {:>25}",
        "Method", "Dataset length", "Empirical Probability", "Interval Width", "Interval Width (normalized)"
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{:<21} | {:>14} | {:>21.4} | {:>14.4} | {:>27.4}",
            r.name, r.dataset_length, r.empirical_probability, r.mean_width_original, r.mean_width
        );
    }
    s
}

fn band_outcome(lo: &LinearModel, hi: &LinearModel, p: &Pair) -> Result<(f64, f64, bool)> {
    let a = lo.predict(&p.x)?;
    let b = hi.predict(&p.x)?;
    Ok((a, b, a <= p.y && p.y <= b))
}

pub fn evaluate(cfg: &RunConfig, train: &Path, test: &Path) -> Result<EvaluateSummary> {
    cfg.validate()?;
    let (gamma, c) = require_gamma_c(cfg)?;
    let model = load_model(cfg, train)?;
    let test_file = load_pairs(test, "test")?;
    check_dims(&model.train.pairs, &test_file.pairs, "test")?;
    let scale = scale_of(&model.train);
    let test_set = ValidationSet::new(test_file.pairs)?;
    let n_train = model.train.pairs.len();

    let metrics = evaluate_method(&model.set, &test_set, &model.grid, gamma, c, cfg.tau, &cfg.solver)?;
    let lo = fit_quantile_regression(&model.train.pairs, cfg.tau)?;
    let hi = fit_quantile_regression(&model.train.pairs, 1.0 - cfg.tau)?;
    let bands = test_set
        .pairs()
        .iter()
        .map(|p| band_outcome(&lo, &hi, p))
        .collect::<Result<Vec<_>>>()?;
    let n_test = bands.len() as f64;
    let qr_hits = bands.iter().filter(|b| b.2).count();
    let qr_width = bands.iter().map(|b| b.1 - b.0).sum::<f64>() / n_test;

    let proposed = MethodMetrics {
        name: "Proposed approach",
        dataset_length: n_train,
        empirical_probability: metrics.empirical_probability,
        mean_width: metrics.mean_width,
        mean_width_original: metrics.denormalized_mean_width(&scale),
    };
    let baseline = MethodMetrics {
        name: "Quantile regression",
        dataset_length: n_train,
        empirical_probability: qr_hits as f64 / n_test,
        mean_width: qr_width,
        mean_width_original: scale.denormalize_width(qr_width),
    };

    let mut csv = String::from("method,dataset_length,tau,gamma,c,empirical_probability,mean_width,mean_width_original\n");
    for (key, m) in [("proposed", &proposed), ("quantile_regression", &baseline)] {
        let _ = writeln!(
            csv,
            "{key},{},{},{},{},{},{},{}",
            m.dataset_length, cfg.tau, gamma, c, m.empirical_probability, m.mean_width, m.mean_width_original
        );
    }
    let mut samples = String::from("index,y,lower,upper,median,width,hit,qr_lower,qr_upper,qr_width,qr_hit\n");
    for (k, (s, b)) in metrics.samples.iter().zip(&bands).enumerate() {
        let _ = writeln!(
            samples,
            "{k},{},{},{},{},{},{},{},{},{},{}",
            s.y,
            s.interval.lower,
            s.interval.upper,
            s.median,
            s.width,
            s.hit,
            b.0,
            b.1,
            b.1 - b.0,
            b.2
        );
    }
    let table = metrics_table(cfg.tau, gamma, c, &[&proposed, &baseline]);
    let files: Outputs = vec![
        (METRICS_FILE.into(), csv),
        (METRICS_TABLE_FILE.into(), table.clone()),
        (SAMPLES_FILE.into(), samples),
        (
            "manifest_evaluate.txt".into(),
            manifest(
                cfg,
                "evaluate",
                &[
                    ("train", train.display().to_string()),
                    ("test", test.display().to_string()),
                    ("train_rows", n_train.to_string()),
                    ("test_rows", bands.len().to_string()),
                ],
            ),
        ),
    ];
    let written = write_outputs(&cfg.out, &files)?;
    Ok(EvaluateSummary {
        proposed,
        baseline,
        table,
        files: written,
    })
}

/// Numeric CSV rows; a non-numeric first row is taken as a header.
pub fn read_points(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let header_line = first_data_line(&text);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = line.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(row) => {
                if let Some(first) = rows.first() {
                    if first.len() != row.len() {
                        bail!("{}: line {}: expected {} columns", path.display(), i + 1, first.len());
                    }
                }
                rows.push(row);
            }
            Err(_) if i == header_line => continue,
            Err(e) => bail!("{}: line {}: {e}", path.display(), i + 1),
        }
    }
    if rows.is_empty() {
        bail!("{} contains no data rows", path.display());
    }
    Ok(rows)
}

/// Density fit on a regular grid spanning the data, padded per axis.
/// `γ` defaults to 0 and `c` to `N/2`.
pub fn pdf(cfg: &RunConfig, data: &Path) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let points = read_points(data)?;
    let n = points.len();
    let dim = points[0].len();
    let gamma = cfg.gamma.unwrap_or(0.0);
    let c = cfg.c.unwrap_or(n as f64 / 2.0);
    let total = (cfg.grid_size as f64).powi(dim as i32);
    if total > MAX_PDF_POINTS as f64 {
        bail!("grid of {} points per axis in {dim} dimensions is too large", cfg.grid_size);
    }
    let axes = (0..dim)
        .map(|j| {
            let (lo, hi) = points
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p[j]), b.max(p[j])));
            let pad = cfg.padding * (hi - lo);
            (lo - pad, hi + pad, cfg.grid_size)
        })
        .collect::<Vec<_>>();
    let grid = RegularGrid::new(&axes)?;
    let set = PointSet::new(points)?;
    let density = empirical_pdf_on_grid(&set, &grid, gamma, c, &cfg.solver)?;
    let mut s = String::new();
    let names: Vec<String> = (1..=dim).map(|j| format!("z{j}")).collect();
    let _ = writeln!(s, "{},density", names.join(","));
    for (z, p) in grid.points().iter().zip(&density) {
        let coords: Vec<String> = z.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{},{p}", coords.join(","));
    }
    let files: Outputs = vec![
        (PDF_FILE.into(), s),
        (
            "manifest_pdf.txt".into(),
            manifest(
                cfg,
                "pdf",
                &[
                    ("data", data.display().to_string()),
                    ("data_rows", n.to_string()),
                    ("gamma_used", gamma.to_string()),
                    ("c_used", c.to_string()),
                ],
            ),
        ),
    ];
    write_outputs(&cfg.out, &files)
}
