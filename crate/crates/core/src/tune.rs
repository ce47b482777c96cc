//! Validation-based tuning of the concentration `c` (bisection) and of the
//! sparsity weight `γ` (discrete maximum likelihood), plus test-set metrics.
//!
//! For a fixed `γ` the dissimilarities on the output grid do not depend on
//! `c`, so they are computed once per validation sample in a
//! [`DissimilarityTable`] and reused by every bisection midpoint and by the
//! likelihood.

use crate::data::{Pair, Scale};
use crate::dissim::{DissimilaritySolver, PointSet, SolverSettings};
use crate::epdf::{
    dissimilarity_profile, interval_indices, normalized_probabilities, ConditionalDistribution, OutputGrid,
    PredictionInterval,
};
use crate::error::{Error, Result};

/// Held-out `(x̃_s, ỹ_s)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationSet {
    pairs: Vec<Pair>,
}

impl ValidationSet {
    pub fn new(pairs: Vec<Pair>) -> Result<Self> {
        let dim = match pairs.first() {
            Some(p) => p.x.len(),
            None => return Err(Error::InvalidParameter("validation set is empty".into())),
        };
        if let Some(p) = pairs.iter().find(|p| p.x.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: p.x.len(),
            });
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[Pair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Number of samples that also appear verbatim in the training set.
    pub fn overlap_with(&self, training: &PointSet) -> usize {
        self.pairs
            .iter()
            .filter(|p| {
                let z = p.stacked();
                training.points().any(|q| q == z.as_slice())
            })
            .count()
    }
}

/// Grid dissimilarities `d_{s,j}` and observed-output dissimilarities for one `γ`.
#[derive(Debug, Clone)]
pub struct DissimilarityTable {
    gamma: f64,
    grid_len: usize,
    grid_values: Vec<f64>,
    observed: Vec<f64>,
    outputs: Vec<f64>,
}

impl DissimilarityTable {
    pub fn compute(
        set: &PointSet,
        samples: &ValidationSet,
        grid: &OutputGrid,
        gamma: f64,
        settings: &SolverSettings,
    ) -> Result<Self> {
        let mut solver = DissimilaritySolver::new(set, *settings)?;
        let mut grid_values = Vec::with_capacity(samples.len() * grid.len());
        let mut observed = Vec::with_capacity(samples.len());
        for p in samples.pairs() {
            grid_values.extend(dissimilarity_profile(&mut solver, &p.x, grid, gamma)?);
            solver.reset();
            observed.push(solver.value(&p.stacked(), gamma)?);
        }
        Ok(Self {
            gamma,
            grid_len: grid.len(),
            grid_values,
            observed,
            outputs: samples.pairs().iter().map(|p| p.y).collect(),
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.grid_values[s * self.grid_len..(s + 1) * self.grid_len]
    }

    /// `(n⁺, n⁻)`: outputs above their upper endpoint and below their lower one.
    pub fn violations(&self, grid: &OutputGrid, c: f64, tau: f64) -> (usize, usize) {
        let mut probs = vec![0.0; self.grid_len];
        let values = grid.values();
        let mut upper = 0;
        let mut lower = 0;
        for (s, &y) in self.outputs.iter().enumerate() {
            normalized_probabilities(self.row(s), c, &mut probs);
            let (lo, hi) = interval_indices(&probs, tau);
            if y > values[hi] {
                upper += 1;
            }
            if y < values[lo] {
                lower += 1;
            }
        }
        (upper, lower)
    }

    /// `Σ_s log[exp(−c d(ỹ_s)) / Σ_j exp(−c d_{s,j})]`, shifted by `min_j d_{s,j}`.
    pub fn log_likelihood(&self, c: f64) -> f64 {
        (0..self.len()).map(|s| self.log_likelihood_term(s, c)).sum()
    }

    pub fn log_likelihood_term(&self, s: usize, c: f64) -> f64 {
        let row = self.row(s);
        let dmin = row.iter().copied().fold(f64::INFINITY, f64::min);
        let partition: f64 = row.iter().map(|d| (-c * (d - dmin)).exp()).sum();
        -c * (self.observed[s] - dmin) - partition.ln()
    }
}

/// Result of the bisection on `c` for one `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationFit {
    pub c: f64,
    /// `(n⁺, n⁻)` at the returned `c`.
    pub violations: (usize, usize),
    /// The initial upper bracket passed the validation test, so the bracket
    /// may be too small.
    pub c_max_passes: bool,
    /// Some tested `c` failed while a larger one passed.
    pub non_monotone: bool,
    /// Every `(c, passed)` evaluated, in order.
    pub trace: Vec<(f64, bool)>,
}

/// Bisection on `[0, c_max]` against a violation-count oracle.
///
/// `c` is accepted iff `max(n⁺, n⁻) / n_samples < τ`. Stops once the bracket
/// is narrower than `epsilon` and returns the last accepted value (or 0).
pub fn bisect_concentration<F>(
    tau: f64,
    n_samples: usize,
    c_max: f64,
    epsilon: f64,
    mut violations: F,
) -> Result<ConcentrationFit>
where
    F: FnMut(f64) -> Result<(usize, usize)>,
{
    if !(c_max > 0.0) || !c_max.is_finite() {
        return Err(Error::InvalidBracket(c_max));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(tau > 0.0 && tau < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "tau must lie in (0, 0.5), got {tau}"
        )));
    }
    if n_samples == 0 {
        return Err(Error::InvalidParameter("no validation samples".into()));
    }
    let passes = |v: (usize, usize)| (v.0.max(v.1) as f64) / (n_samples as f64) < tau;

    let mut trace = Vec::new();
    let mut lo = 0.0;
    let mut hi = c_max;
    let mut accepted = None;
    while hi - lo >= epsilon {
        let c = 0.5 * (lo + hi);
        let v = violations(c)?;
        let ok = passes(v);
        trace.push((c, ok));
        if ok {
            lo = c;
            accepted = Some(v);
        } else {
            hi = c;
        }
    }
    let end = violations(c_max)?;
    let c_max_passes = passes(end);
    trace.push((c_max, c_max_passes));
    let non_monotone = trace.iter().any(|&(cf, okf)| {
        !okf && trace.iter().any(|&(cp, okp)| okp && cp > cf)
    });
    let at_result = match accepted {
        Some(v) => v,
        None => violations(lo)?,
    };
    Ok(ConcentrationFit {
        c: lo,
        violations: at_result,
        c_max_passes,
        non_monotone,
        trace,
    })
}

/// Bisection on `c` for one `γ` using a precomputed table.
pub fn tune_c_cached(
    table: &DissimilarityTable,
    grid: &OutputGrid,
    tau: f64,
    c_max: f64,
    epsilon: f64,
) -> Result<ConcentrationFit> {
    bisect_concentration(tau, table.len(), c_max, epsilon, |c| {
        Ok(table.violations(grid, c, tau))
    })
}

/// Tuning knobs shared by every `γ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuneOptions {
    pub c_max: f64,
    pub epsilon: f64,
    pub solver: SolverSettings,
}

impl TuneOptions {
    /// `c_max = 10 N`, `ε = 10⁻²`.
    pub fn for_training_size(n: usize) -> Self {
        Self {
            c_max: 10.0 * n as f64,
            epsilon: 1e-2,
            solver: SolverSettings::default(),
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn tune_c(
    gamma: f64,
    tau: f64,
    set: &PointSet,
    validation: &ValidationSet,
    grid: &OutputGrid,
    c_max: f64,
    epsilon: f64,
    settings: &SolverSettings,
) -> Result<ConcentrationFit> {
    if !(c_max > 0.0) {
        return Err(Error::InvalidBracket(c_max));
    }
    let table = DissimilarityTable::compute(set, validation, grid, gamma, settings)?;
    tune_c_cached(&table, grid, tau, c_max, epsilon)
}

pub fn log_likelihood(
    gamma: f64,
    c: f64,
    set: &PointSet,
    validation: &ValidationSet,
    grid: &OutputGrid,
    settings: &SolverSettings,
) -> Result<f64> {
    Ok(DissimilarityTable::compute(set, validation, grid, gamma, settings)?.log_likelihood(c))
}

/// One `γ` of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaRow {
    pub gamma: f64,
    pub c: f64,
    pub log_likelihood: f64,
    pub upper_violations: usize,
    pub lower_violations: usize,
    pub c_max_passes: bool,
    pub non_monotone: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningReport {
    pub tau: f64,
    pub gamma_star: f64,
    pub c_star: f64,
    pub rows: Vec<GammaRow>,
}

impl TuningReport {
    /// `(γ, c_γ, L_γ)` triples.
    pub fn likelihoods(&self) -> Vec<(f64, f64, f64)> {
        self.rows.iter().map(|r| (r.gamma, r.c, r.log_likelihood)).collect()
    }

    /// `(n⁺, n⁻)` at each `c_γ`.
    pub fn violations(&self) -> Vec<(usize, usize)> {
        self.rows
            .iter()
            .map(|r| (r.upper_violations, r.lower_violations))
            .collect()
    }

    fn from_rows(tau: f64, rows: Vec<GammaRow>) -> Self {
        // strict comparison keeps the smallest γ on ties
        let best = rows
            .iter()
            .fold(None::<&GammaRow>, |best, r| match best {
                Some(b) if !(r.log_likelihood > b.log_likelihood) => Some(b),
                _ => Some(r),
            })
            .expect("gamma set is non-empty");
        Self {
            tau,
            gamma_star: best.gamma,
            c_star: best.c,
            rows,
        }
    }
}

fn validate_gammas(gammas: &[f64]) -> Result<()> {
    if gammas.is_empty() {
        return Err(Error::InvalidParameter("gamma set is empty".into()));
    }
    if gammas.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
        return Err(Error::InvalidParameter("gammas must be finite and nonnegative".into()));
    }
    if gammas.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidParameter("gammas must be sorted ascending".into()));
    }
    Ok(())
}

/// Sweeps `γ ∈ gammas` for a single `τ`.
pub fn tune_gamma(
    gammas: &[f64],
    tau: f64,
    set: &PointSet,
    validation: &ValidationSet,
    grid: &OutputGrid,
    options: &TuneOptions,
) -> Result<TuningReport> {
    let mut reports = tune_gamma_levels(gammas, &[tau], set, validation, grid, options, |_| {})?;
    Ok(reports.remove(0))
}

/// Sweeps `γ ∈ gammas` for several `τ` at once, sharing the per-`γ`
/// dissimilarity table. `progress` is called after each `γ` with its index.
pub fn tune_gamma_levels<P>(
    gammas: &[f64],
    taus: &[f64],
    set: &PointSet,
    validation: &ValidationSet,
    grid: &OutputGrid,
    options: &TuneOptions,
    mut progress: P,
) -> Result<Vec<TuningReport>>
where
    P: FnMut(usize),
{
    validate_gammas(gammas)?;
    if taus.is_empty() {
        return Err(Error::InvalidParameter("no tau levels given".into()));
    }
    let mut rows: Vec<Vec<GammaRow>> = vec![Vec::with_capacity(gammas.len()); taus.len()];
    for (i, &gamma) in gammas.iter().enumerate() {
        let table = DissimilarityTable::compute(set, validation, grid, gamma, &options.solver)?;
        for (t, &tau) in taus.iter().enumerate() {
            let fit = tune_c_cached(&table, grid, tau, options.c_max, options.epsilon)?;
            rows[t].push(GammaRow {
                gamma,
                c: fit.c,
                log_likelihood: table.log_likelihood(fit.c),
                upper_violations: fit.violations.0,
                lower_violations: fit.violations.1,
                c_max_passes: fit.c_max_passes,
                non_monotone: fit.non_monotone,
            });
        }
        progress(i);
    }
    Ok(taus
        .iter()
        .zip(rows)
        .map(|(&tau, r)| TuningReport::from_rows(tau, r))
        .collect())
}

/// Per-sample outcome on a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub interval: PredictionInterval,
    pub median: f64,
    pub y: f64,
    pub hit: bool,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationMetrics {
    /// Fraction of test outputs inside their interval.
    pub empirical_probability: f64,
    /// Mean `y⁺ − y⁻`, in the units of the data.
    pub mean_width: f64,
    pub samples: Vec<SampleOutcome>,
}

impl EvaluationMetrics {
    pub fn from_samples(samples: Vec<SampleOutcome>) -> Self {
        let n = samples.len().max(1) as f64;
        let hits = samples.iter().filter(|s| s.hit).count();
        let width = samples.iter().map(|s| s.width).sum::<f64>();
        Self {
            empirical_probability: hits as f64 / n,
            mean_width: width / n,
            samples,
        }
    }

    pub fn hits(&self) -> usize {
        self.samples.iter().filter(|s| s.hit).count()
    }

    pub fn denormalized_mean_width(&self, scale: &Scale) -> f64 {
        scale.denormalize_width(self.mean_width)
    }
}

/// Interval and conditioned median for every test regressor.
pub fn evaluate(
    set: &PointSet,
    test: &ValidationSet,
    grid: &OutputGrid,
    gamma: f64,
    c: f64,
    tau: f64,
    settings: &SolverSettings,
) -> Result<EvaluationMetrics> {
    let predictions = predict_intervals(set, test.pairs().iter().map(|p| p.x.as_slice()), grid, gamma, c, tau, settings)?;
    let samples = predictions
        .into_iter()
        .zip(test.pairs())
        .map(|((interval, median), p)| SampleOutcome {
            hit: interval.contains(p.y),
            width: interval.width(),
            interval,
            median,
            y: p.y,
        })
        .collect();
    Ok(EvaluationMetrics::from_samples(samples))
}

/// `(interval, conditioned median)` for each regressor.
pub fn predict_intervals<'x, I>(
    set: &PointSet,
    regressors: I,
    grid: &OutputGrid,
    gamma: f64,
    c: f64,
    tau: f64,
    settings: &SolverSettings,
) -> Result<Vec<(PredictionInterval, f64)>>
where
    I: IntoIterator<Item = &'x [f64]>,
{
    let mut solver = DissimilaritySolver::new(set, *settings)?;
    regressors
        .into_iter()
        .map(|x| {
            let d = dissimilarity_profile(&mut solver, x, grid, gamma)?;
            let dist = ConditionalDistribution::from_dissimilarities(grid, d, c)?;
            let interval = crate::epdf::interval_estimate(&dist, tau)?;
            Ok((interval, crate::epdf::conditioned_median(&dist)))
        })
        .collect()
}
