//! Empirical conditional densities over a discretized output grid, interval
//! estimates built from their cumulative sums, and the central estimate.

use crate::data::Pair;
use crate::dissim::{DissimilaritySolver, PointSet, SolverSettings};
use crate::error::{Error, Result};

/// Strictly increasing candidate outputs `ȳ_1 < … < ȳ_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGrid {
    values: Vec<f64>,
}

impl OutputGrid {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidParameter(
                "output grid needs at least two points".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "output grid must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Equally spaced grid from `min(outputs) − pad` to `max(outputs) + pad`,
/// where `pad = padding_fraction · (max − min)`.
pub fn build_output_grid(outputs: &[f64], size: usize, padding_fraction: f64) -> Result<OutputGrid> {
    if outputs.is_empty() {
        return Err(Error::InvalidParameter("no outputs to build a grid from".into()));
    }
    if size < 2 {
        return Err(Error::InvalidParameter("grid size must be at least 2".into()));
    }
    if !(padding_fraction >= 0.0) || !padding_fraction.is_finite() {
        return Err(Error::InvalidParameter(
            "padding fraction must be finite and nonnegative".into(),
        ));
    }
    let lo = outputs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = outputs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::DegenerateRange(lo));
    }
    let pad = padding_fraction * (hi - lo);
    let (first, last) = (lo - pad, hi + pad);
    let step = (last - first) / (size - 1) as f64;
    let mut values: Vec<f64> = (0..size).map(|j| first + step * j as f64).collect();
    values[size - 1] = last;
    OutputGrid::new(values)
}

/// Stacks each pair as `[y; x]`.
pub fn joint_point_set(pairs: &[Pair]) -> Result<PointSet> {
    PointSet::new(pairs.iter().map(Pair::stacked).collect())
}

/// Discrete conditional distribution over an [`OutputGrid`] for one regressor.
#[derive(Debug, Clone)]
pub struct ConditionalDistribution<'g> {
    grid: &'g OutputGrid,
    probs: Vec<f64>,
    dissimilarities: Vec<f64>,
}

impl<'g> ConditionalDistribution<'g> {
    pub fn from_dissimilarities(grid: &'g OutputGrid, dissimilarities: Vec<f64>, c: f64) -> Result<Self> {
        if dissimilarities.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: dissimilarities.len(),
            });
        }
        validate_concentration(c)?;
        let mut probs = vec![0.0; grid.len()];
        normalized_probabilities(&dissimilarities, c, &mut probs);
        Ok(Self {
            grid,
            probs,
            dissimilarities,
        })
    }

    pub fn grid(&self) -> &'g OutputGrid {
        self.grid
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn dissimilarities(&self) -> &[f64] {
        &self.dissimilarities
    }
}

fn validate_concentration(c: f64) -> Result<()> {
    if !(c >= 0.0) || !c.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "concentration c must be finite and nonnegative, got {c}"
        )));
    }
    Ok(())
}

/// `p_j ∝ exp(−c (d_j − min d))`, normalized to sum to one.
pub fn normalized_probabilities(dissimilarities: &[f64], c: f64, out: &mut [f64]) {
    let dmin = dissimilarities.iter().copied().fold(f64::INFINITY, f64::min);
    let mut total = 0.0;
    for (p, d) in out.iter_mut().zip(dissimilarities) {
        *p = (-c * (d - dmin)).exp();
        total += *p;
    }
    for p in out.iter_mut() {
        *p /= total;
    }
}

/// `d_j = J_γ([ȳ_j; x], D)` for every grid point, swept in grid order from a
/// cold start so the result does not depend on earlier solver use.
pub fn dissimilarity_profile(
    solver: &mut DissimilaritySolver<'_>,
    x: &[f64],
    grid: &OutputGrid,
    gamma: f64,
) -> Result<Vec<f64>> {
    let dim = solver.point_set().dim();
    if x.len() + 1 != dim {
        return Err(Error::DimensionMismatch {
            expected: dim - 1,
            got: x.len(),
        });
    }
    let mut z = Vec::with_capacity(dim);
    z.push(0.0);
    z.extend_from_slice(x);
    solver.reset();
    grid.values()
        .iter()
        .map(|&y| {
            z[0] = y;
            solver.value(&z, gamma)
        })
        .collect()
}

/// Conditional distribution of the output on `grid` given regressor `x`.
pub fn conditional_distribution<'g>(
    x: &[f64],
    set: &PointSet,
    grid: &'g OutputGrid,
    gamma: f64,
    c: f64,
    settings: &SolverSettings,
) -> Result<ConditionalDistribution<'g>> {
    let mut solver = DissimilaritySolver::new(set, *settings)?;
    let d = dissimilarity_profile(&mut solver, x, grid, gamma)?;
    ConditionalDistribution::from_dissimilarities(grid, d, c)
}

/// Interval `[ȳ_lower, ȳ_upper]` with zero-based grid indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
    pub lower_index: usize,
    pub upper_index: usize,
    pub tau: f64,
}

impl PredictionInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }
}

/// Zero-based `(lower, upper)` quantile indices.
///
/// `upper` is the smallest index whose forward cumulative sum reaches `1 − τ`,
/// `lower` the largest index whose backward cumulative sum reaches `1 − τ`.
/// The two can only cross at `τ = 0.5` when a cumulative sum hits exactly
/// one half; they are then returned in increasing order.
pub fn interval_indices(probs: &[f64], tau: f64) -> (usize, usize) {
    let level = 1.0 - tau;
    let m = probs.len();
    let mut acc = 0.0;
    let mut upper = m - 1;
    for (j, p) in probs.iter().enumerate() {
        acc += p;
        if acc >= level {
            upper = j;
            break;
        }
    }
    acc = 0.0;
    let mut lower = 0;
    for j in (0..m).rev() {
        acc += probs[j];
        if acc >= level {
            lower = j;
            break;
        }
    }
    if lower > upper {
        (upper, lower)
    } else {
        (lower, upper)
    }
}

pub fn interval_estimate(dist: &ConditionalDistribution<'_>, tau: f64) -> Result<PredictionInterval> {
    if !(tau > 0.0 && tau <= 0.5) {
        return Err(Error::InvalidParameter(format!(
            "tau must lie in (0, 0.5], got {tau}"
        )));
    }
    let (lo, hi) = interval_indices(&dist.probs, tau);
    let values = dist.grid.values();
    Ok(PredictionInterval {
        lower: values[lo],
        upper: values[hi],
        lower_index: lo,
        upper_index: hi,
        tau,
    })
}

/// Midpoint of the `τ = 0.5` interval.
pub fn conditioned_median(dist: &ConditionalDistribution<'_>) -> f64 {
    let (lo, hi) = interval_indices(&dist.probs, 0.5);
    let values = dist.grid.values();
    0.5 * (values[lo] + values[hi])
}

/// Regression estimate `Σ λ_i* y_i`, where `λ*` solves the dissimilarity
/// problem on the regressor coordinates only.
pub fn central_estimate(x: &[f64], set: &PointSet, gamma: f64, settings: &SolverSettings) -> Result<f64> {
    CentralEstimator::new(set, *settings)?.estimate(x, gamma)
}

/// Batch form of [`central_estimate`] that builds the regressor marginal once.
#[derive(Debug, Clone)]
pub struct CentralEstimator {
    outputs: Vec<f64>,
    marginal: PointSet,
    settings: SolverSettings,
}

impl CentralEstimator {
    pub fn new(set: &PointSet, settings: SolverSettings) -> Result<Self> {
        settings.validate()?;
        Ok(Self {
            outputs: set.points().map(|p| p[0]).collect(),
            marginal: set.drop_leading(1)?,
            settings,
        })
    }

    /// Builds the estimator from pairs directly; outputs may be constant here
    /// since only the regressors need to span their space.
    pub fn from_pairs(pairs: &[Pair], settings: SolverSettings) -> Result<Self> {
        settings.validate()?;
        Ok(Self {
            outputs: pairs.iter().map(|p| p.y).collect(),
            marginal: PointSet::new(pairs.iter().map(|p| p.x.clone()).collect())?,
            settings,
        })
    }

    pub fn estimate(&self, x: &[f64], gamma: f64) -> Result<f64> {
        let mut solver = DissimilaritySolver::new(&self.marginal, self.settings)?;
        let result = solver.solve(x, gamma)?;
        Ok(result.lambda.iter().zip(&self.outputs).map(|(l, y)| l * y).sum())
    }
}

/// Tensor grid with equal spacing along each axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularGrid {
    axes: Vec<Vec<f64>>,
}

impl RegularGrid {
    /// One `(lower, upper, count)` triple per axis.
    pub fn new(axes: &[(f64, f64, usize)]) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::InvalidParameter("grid needs at least one axis".into()));
        }
        let mut out = Vec::with_capacity(axes.len());
        for &(lo, hi, count) in axes {
            if count < 2 || !(hi > lo) {
                return Err(Error::InvalidParameter(format!(
                    "invalid axis ({lo}, {hi}, {count})"
                )));
            }
            let h = (hi - lo) / (count - 1) as f64;
            out.push((0..count).map(|i| lo + h * i as f64).collect());
        }
        Ok(Self { axes: out })
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(Vec::len).product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a[1] - a[0]).product()
    }

    /// Points in row-major order (last axis varies fastest).
    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut pts = Vec::with_capacity(self.len());
        let mut index = vec![0usize; self.axes.len()];
        loop {
            pts.push(index.iter().zip(&self.axes).map(|(&i, a)| a[i]).collect());
            let mut axis = self.axes.len();
            loop {
                if axis == 0 {
                    return pts;
                }
                axis -= 1;
                index[axis] += 1;
                if index[axis] < self.axes[axis].len() {
                    break;
                }
                index[axis] = 0;
            }
        }
    }
}

/// Empirical density `exp(−c J_γ(z, D))` on `grid`, normalized so that its
/// Riemann sum times the cell volume equals one.
pub fn empirical_pdf_on_grid(
    set: &PointSet,
    grid: &RegularGrid,
    gamma: f64,
    c: f64,
    settings: &SolverSettings,
) -> Result<Vec<f64>> {
    if grid.dim() != set.dim() {
        return Err(Error::DimensionMismatch {
            expected: set.dim(),
            got: grid.dim(),
        });
    }
    validate_concentration(c)?;
    let mut solver = DissimilaritySolver::new(set, *settings)?;
    let d = grid
        .points()
        .iter()
        .map(|z| solver.value(z, gamma))
        .collect::<Result<Vec<f64>>>()?;
    let mut density = vec![0.0; d.len()];
    normalized_probabilities(&d, c, &mut density);
    let volume = grid.cell_volume();
    density.iter_mut().for_each(|p| *p /= volume);
    Ok(density)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid(m: usize) -> OutputGrid {
        OutputGrid::new((1..=m).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn grid_construction() {
        let g = build_output_grid(&[0.0, 1.0], 3, 0.0).unwrap();
        assert_eq!(g.values(), &[0.0, 0.5, 1.0]);
        let g = build_output_grid(&[1.0, 0.0, 0.3], 5, 0.0).unwrap();
        assert_eq!(g.values(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = build_output_grid(&[0.0, 0.4, 1.0], 2, 0.1).unwrap();
        assert_relative_eq!(g.values()[0], -0.1);
        assert_relative_eq!(g.values()[1], 1.1);
        assert!(matches!(
            build_output_grid(&[2.0, 2.0], 5, 0.0),
            Err(Error::DegenerateRange(_))
        ));
        assert!(build_output_grid(&[0.0, 1.0], 1, 0.0).is_err());
        assert!(OutputGrid::new(vec![0.0, 0.0, 1.0]).is_err());
    }

    #[test]
    fn probabilities_from_dissimilarities() {
        let g = grid(3);
        let dist = ConditionalDistribution::from_dissimilarities(&g, vec![1.0, 1.0, 2.0], 2f64.ln()).unwrap();
        assert_relative_eq!(dist.probs()[0], 0.4, epsilon = 1e-15);
        assert_relative_eq!(dist.probs()[1], 0.4, epsilon = 1e-15);
        assert_relative_eq!(dist.probs()[2], 0.2, epsilon = 1e-15);

        let flat = ConditionalDistribution::from_dissimilarities(&g, vec![1.0, 7.0, 2.0], 0.0).unwrap();
        assert!(flat.probs().iter().all(|p| (*p - 1.0 / 3.0).abs() < 1e-15));

        let sharp = ConditionalDistribution::from_dissimilarities(&g, vec![1.0, 2.0, 3.0], 1e4).unwrap();
        assert_eq!(sharp.probs()[0], 1.0);
        assert_eq!(sharp.probs()[2], 0.0);

        // Large c·d stays finite thanks to the shift.
        let big = ConditionalDistribution::from_dissimilarities(&g, vec![900.0, 901.0, 905.0], 10.0).unwrap();
        assert!(big.probs().iter().all(|p| p.is_finite()));
        assert!(ConditionalDistribution::from_dissimilarities(&g, vec![1.0; 3], -1.0).is_err());
    }

    fn dist_from_probs<'g>(g: &'g OutputGrid, p: &[f64]) -> ConditionalDistribution<'g> {
        // c = 1 and d = −ln p reproduces p exactly up to normalization.
        let d = p.iter().map(|v| -v.ln()).collect();
        ConditionalDistribution::from_dissimilarities(g, d, 1.0).unwrap()
    }

    #[test]
    fn golden_interval() {
        let g = grid(5);
        let dist = dist_from_probs(&g, &[0.1, 0.2, 0.4, 0.2, 0.1]);
        let iv = interval_estimate(&dist, 0.25).unwrap();
        // one-based (2, 4)
        assert_eq!((iv.lower_index, iv.upper_index), (1, 3));
        assert_eq!((iv.lower, iv.upper), (2.0, 4.0));
        assert_eq!(conditioned_median(&dist), 3.0);
    }

    #[test]
    fn uniform_interval_spans_grid() {
        let g = grid(10);
        let dist = dist_from_probs(&g, &[0.1; 10]);
        let iv = interval_estimate(&dist, 0.05).unwrap();
        assert_eq!((iv.lower_index, iv.upper_index), (0, 9));
    }

    #[test]
    fn point_mass_interval() {
        let g = grid(6);
        let eps = 1e-9;
        let mut p = vec![eps; 6];
        p[0] = 1.0;
        let dist = dist_from_probs(&g, &p);
        for &tau in &[0.01, 0.1, 0.5] {
            let iv = interval_estimate(&dist, tau).unwrap();
            assert_eq!((iv.lower_index, iv.upper_index), (0, 0));
        }
        let mut p = vec![eps; 6];
        p[4] = 1.0;
        assert_eq!(conditioned_median(&dist_from_probs(&g, &p)), 5.0);
    }

    #[test]
    fn symmetric_median_is_center() {
        let g = grid(4);
        let dist = dist_from_probs(&g, &[0.25; 4]);
        assert_eq!(conditioned_median(&dist), 2.5);
        let iv = interval_estimate(&dist, 0.5).unwrap();
        assert!(iv.lower <= iv.upper);
        let g = grid(5);
        assert_eq!(conditioned_median(&dist_from_probs(&g, &[0.05, 0.2, 0.5, 0.2, 0.05])), 3.0);
    }

    #[test]
    fn tau_out_of_range() {
        let g = grid(3);
        let dist = dist_from_probs(&g, &[0.3, 0.4, 0.3]);
        assert!(interval_estimate(&dist, 0.0).is_err());
        assert!(interval_estimate(&dist, 0.6).is_err());
    }

    fn prob_vector() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 2..40).prop_filter_map("nonzero", |v| {
            let s: f64 = v.iter().sum();
            (s > 1e-6).then(|| v.iter().map(|x| x / s).collect())
        })
    }

    proptest! {
        #[test]
        fn interval_coverage_and_minimality(p in prob_vector(), tau in 0.01f64..0.5) {
            let (lo, hi) = interval_indices(&p, tau);
            prop_assert!(lo <= hi);
            let mass: f64 = p[lo..=hi].iter().sum();
            prop_assert!(mass >= 1.0 - 2.0 * tau - 1e-12);
            let forward: f64 = p[..hi].iter().sum();
            prop_assert!(hi == 0 || forward < 1.0 - tau);
            let backward: f64 = p[lo + 1..].iter().sum();
            prop_assert!(lo + 1 == p.len() || backward < 1.0 - tau);
        }

        #[test]
        fn intervals_nest(p in prob_vector(), a in 0.01f64..0.5, b in 0.01f64..0.5) {
            let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
            let (lo1, hi1) = interval_indices(&p, t1);
            let (lo2, hi2) = interval_indices(&p, t2);
            prop_assert!(lo1 <= lo2 && hi2 <= hi1);
        }

        #[test]
        fn probabilities_normalized(d in prop::collection::vec(0.0f64..50.0, 2..30), c in 0.0f64..14.0) {
            // c · (d_j − min d) < 700 keeps every weight above the subnormal range
            let mut p = vec![0.0; d.len()];
            normalized_probabilities(&d, c, &mut p);
            let s: f64 = p.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|v| *v > 0.0));
        }
    }

    #[test]
    fn regular_grid_points_and_volume() {
        let g = RegularGrid::new(&[(0.0, 1.0, 3), (10.0, 12.0, 2)]).unwrap();
        assert_eq!(g.len(), 6);
        assert_relative_eq!(g.cell_volume(), 1.0);
        let pts = g.points();
        assert_eq!(pts[0], vec![0.0, 10.0]);
        assert_eq!(pts[1], vec![0.0, 12.0]);
        assert_eq!(pts[5], vec![1.0, 12.0]);
    }

    #[test]
    fn pdf_flat_and_peak() {
        let set = PointSet::new(vec![vec![0.0], vec![1.0]]).unwrap();
        let g = RegularGrid::new(&[(-1.0, 2.0, 31)]).unwrap();
        let s = SolverSettings::default();
        let flat = empirical_pdf_on_grid(&set, &g, 0.0, 0.0, &s).unwrap();
        for v in &flat {
            assert_relative_eq!(*v, 1.0 / (31.0 * 0.1), epsilon = 1e-12);
        }
        let peaked = empirical_pdf_on_grid(&set, &g, 0.0, 1.0, &s).unwrap();
        let argmax = peaked
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert_relative_eq!(g.axes()[0][argmax], 0.5, epsilon = 1e-12);
        let integral: f64 = peaked.iter().sum::<f64>() * g.cell_volume();
        assert_relative_eq!(integral, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn central_estimate_constant_outputs() {
        let pairs: Vec<Pair> = [0.0, 1.0, 2.0, 5.0]
            .iter()
            .map(|&x| Pair::new(vec![x], 4.25))
            .collect();
        let est = CentralEstimator::from_pairs(&pairs, SolverSettings::default()).unwrap();
        for &x in &[-3.0, 0.4, 7.0] {
            for &gamma in &[0.0, 0.5, 2.0] {
                assert_relative_eq!(est.estimate(&[x], gamma).unwrap(), 4.25, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn central_estimate_at_regressor_mean() {
        let pairs: Vec<Pair> = [(0.0, 1.0), (1.0, 3.0), (2.0, -1.0), (5.0, 0.5)]
            .iter()
            .map(|&(x, y)| Pair::new(vec![x], y))
            .collect();
        let set = joint_point_set(&pairs).unwrap();
        let value = central_estimate(&[2.0], &set, 0.0, &SolverSettings::default()).unwrap();
        assert_relative_eq!(value, 0.875, epsilon = 1e-9);
    }

    #[test]
    fn conditional_distribution_dimension_check() {
        let pairs: Vec<Pair> = (0..6)
            .map(|i| Pair::new(vec![i as f64, (i * i) as f64], (i as f64).sin()))
            .collect();
        let set = joint_point_set(&pairs).unwrap();
        let g = build_output_grid(&[-1.0, 1.0], 11, 0.0).unwrap();
        let s = SolverSettings::default();
        assert!(conditional_distribution(&[1.0], &set, &g, 0.0, 1.0, &s).is_err());
        let dist = conditional_distribution(&[1.0, 2.0], &set, &g, 0.5, 1.0, &s).unwrap();
        let total: f64 = dist.probs().iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }
}
