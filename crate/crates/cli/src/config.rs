//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown keys are an
//! error so that typos do not silently fall back to defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ipred::data::{LorenzParams, SplitSizes};
use ipred::{DualMethod, SolverSettings, TuneOptions};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    GenerateLorenz,
    /// Single-column file with the raw output series.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: DataSource,
    pub lorenz: LorenzParams,
    pub lags: usize,
    pub split: SplitSizes,
    pub tau: f64,
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub gamma_step: f64,
    pub grid_size: usize,
    pub padding: f64,
    pub solver: SolverSettings,
    /// `None` means `10 · N` for a training set of size `N`.
    pub c_max: Option<f64>,
    pub epsilon: f64,
    pub gamma: Option<f64>,
    pub c: Option<f64>,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source: DataSource::GenerateLorenz,
            lorenz: LorenzParams::default(),
            lags: 2,
            split: SplitSizes {
                train: 200,
                validation: 1000,
                test: 1000,
            },
            tau: 0.05,
            gamma_min: 0.0,
            gamma_max: 3.0,
            gamma_step: 0.1,
            grid_size: 2001,
            padding: 0.15,
            solver: SolverSettings::default(),
            c_max: None,
            epsilon: 1e-2,
            gamma: None,
            c: None,
            out: PathBuf::from("out"),
        }
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .with_context(|| format!("`{key}` expects a number, got `{v}`"))
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse::<usize>()
        .with_context(|| format!("`{key}` expects a nonnegative integer, got `{v}`"))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)
            .with_context(|| format!("in config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", i + 1))?;
            self.set(key.trim(), value.trim())
                .with_context(|| format!("line {}", i + 1))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "source" => {
                self.source = if v == "generate-lorenz" {
                    DataSource::GenerateLorenz
                } else {
                    DataSource::File(PathBuf::from(v))
                }
            }
            "lorenz_sigma" => self.lorenz.sigma = parse_f64(key, v)?,
            "lorenz_rho" => self.lorenz.rho = parse_f64(key, v)?,
            "lorenz_beta" => self.lorenz.beta = parse_f64(key, v)?,
            "lorenz_step" => self.lorenz.step = parse_f64(key, v)?,
            "lorenz_initial" => {
                let parts: Vec<f64> = v
                    .split(',')
                    .map(|p| parse_f64(key, p.trim()))
                    .collect::<Result<_>>()?;
                if parts.len() != 3 {
                    bail!("`lorenz_initial` expects three comma-separated values");
                }
                self.lorenz.initial = [parts[0], parts[1], parts[2]];
            }
            "steps" => self.lorenz.steps = parse_usize(key, v)?,
            "lags" => self.lags = parse_usize(key, v)?,
            "n_train" => self.split.train = parse_usize(key, v)?,
            "n_validation" => self.split.validation = parse_usize(key, v)?,
            "n_test" => self.split.test = parse_usize(key, v)?,
            "tau" => self.tau = parse_f64(key, v)?,
            "gamma_min" => self.gamma_min = parse_f64(key, v)?,
            "gamma_max" => self.gamma_max = parse_f64(key, v)?,
            "gamma_step" => self.gamma_step = parse_f64(key, v)?,
            "grid_size" => self.grid_size = parse_usize(key, v)?,
            "padding" => self.padding = parse_f64(key, v)?,
            "primal_tolerance" => self.solver.primal_tolerance = parse_f64(key, v)?,
            "max_iterations" => self.solver.max_iterations = parse_usize(key, v)?,
            "solver" => {
                self.solver.method = match v {
                    "newton" => DualMethod::Newton,
                    "accelerated-gradient" => DualMethod::AcceleratedGradient,
                    other => bail!("unknown solver `{other}`"),
                }
            }
            "c_max" => {
                self.c_max = if v == "auto" {
                    None
                } else {
                    Some(parse_f64(key, v)?)
                }
            }
            "epsilon" => self.epsilon = parse_f64(key, v)?,
            "gamma" => self.gamma = Some(parse_f64(key, v)?),
            "c" => self.c = Some(parse_f64(key, v)?),
            "out" => self.out = PathBuf::from(v),
            other => bail!("unknown configuration key `{other}`"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 0.5) {
            bail!("tau must lie in (0, 0.5), got {}", self.tau);
        }
        if !(self.gamma_step > 0.0) {
            bail!("gamma_step must be positive");
        }
        if !(self.gamma_min >= 0.0) || self.gamma_max < self.gamma_min {
            bail!("gamma range must satisfy 0 <= gamma_min <= gamma_max");
        }
        if self.grid_size < 2 {
            bail!("grid_size must be at least 2");
        }
        if !(self.padding >= 0.0) {
            bail!("padding must be nonnegative");
        }
        if !(self.epsilon > 0.0) {
            bail!("epsilon must be positive");
        }
        if let Some(c) = self.c_max {
            if !(c > 0.0) {
                bail!("c_max must be positive");
            }
        }
        if self.lags == 0 {
            bail!("lags must be at least 1");
        }
        if let DataSource::File(p) = &self.source {
            if !p.exists() {
                bail!("data source {} does not exist", p.display());
            }
        }
        self.solver.validate()?;
        self.lorenz.validate()?;
        Ok(())
    }

    /// `Γ = {γ_min, γ_min + step, …} ∩ [γ_min, γ_max]`, rounded to 12 decimals.
    pub fn gammas(&self) -> Vec<f64> {
        let count = ((self.gamma_max - self.gamma_min) / self.gamma_step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| {
                let g = self.gamma_min + i as f64 * self.gamma_step;
                (g * 1e12).round() / 1e12
            })
            .collect()
    }

    pub fn tune_options(&self, n_train: usize) -> TuneOptions {
        TuneOptions {
            c_max: self.c_max.unwrap_or(10.0 * n_train as f64),
            epsilon: self.epsilon,
            solver: self.solver,
        }
    }

    /// Every parameter as `key = value` lines, parseable by [`apply_text`](Self::apply_text).
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        let source = match &self.source {
            DataSource::GenerateLorenz => "generate-lorenz".to_string(),
            DataSource::File(p) => p.display().to_string(),
        };
        let l = &self.lorenz;
        let method = match self.solver.method {
            DualMethod::Newton => "newton",
            DualMethod::AcceleratedGradient => "accelerated-gradient",
        };
        let _ = writeln!(s, "source = {source}");
        let _ = writeln!(s, "lorenz_sigma = {}", l.sigma);
        let _ = writeln!(s, "lorenz_rho = {}", l.rho);
        let _ = writeln!(s, "lorenz_beta = {}", l.beta);
        let _ = writeln!(s, "lorenz_step = {}", l.step);
        let _ = writeln!(s, "lorenz_initial = {},{},{}", l.initial[0], l.initial[1], l.initial[2]);
        let _ = writeln!(s, "steps = {}", l.steps);
        let _ = writeln!(s, "lags = {}", self.lags);
        let _ = writeln!(s, "n_train = {}", self.split.train);
        let _ = writeln!(s, "n_validation = {}", self.split.validation);
        let _ = writeln!(s, "n_test = {}", self.split.test);
        let _ = writeln!(s, "tau = {}", self.tau);
        let _ = writeln!(s, "gamma_min = {}", self.gamma_min);
        let _ = writeln!(s, "gamma_max = {}", self.gamma_max);
        let _ = writeln!(s, "gamma_step = {}", self.gamma_step);
        let _ = writeln!(s, "grid_size = {}", self.grid_size);
        let _ = writeln!(s, "padding = {}", self.padding);
        let _ = writeln!(s, "primal_tolerance = {:e}", self.solver.primal_tolerance);
        let _ = writeln!(s, "max_iterations = {}", self.solver.max_iterations);
        let _ = writeln!(s, "solver = {method}");
        match self.c_max {
            Some(c) => {
                let _ = writeln!(s, "c_max = {c}");
            }
            None => {
                let _ = writeln!(s, "c_max = auto");
            }
        }
        let _ = writeln!(s, "epsilon = {}", self.epsilon);
        if let Some(g) = self.gamma {
            let _ = writeln!(s, "gamma = {g}");
        }
        if let Some(c) = self.c {
            let _ = writeln!(s, "c = {c}");
        }
        let _ = writeln!(s, "out = {}", self.out.display());
        s
    }
}
