//! Dissimilarity between a point and a stored set of measurements.
//!
//! `J_γ(z, D)` is the optimal value of
//!
//! ```text
//! minimize    Σ w_i λ_i² + γ Σ |λ_i|
//! subject to  Σ λ_i z_i = z,   Σ λ_i = 1
//! ```
//!
//! The problem is solved through its dual, which has only `n + 1` variables.
//! For fixed multipliers the primal minimizer is an explicit soft threshold
//! per coordinate ([`inner_minimizer`]), so the dual value and gradient cost a
//! single pass over the data. Data are standardized once per [`PointSet`]
//! (centered and whitened); `J_γ` is invariant under that affine map, and it
//! makes the dual Hessian at `γ = 0` a multiple of the identity.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot threshold below which the scatter matrix is treated as singular.
const SPAN_RTOL: f64 = 1e-12;
const POWER_ITERATIONS: usize = 50;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 40;

/// An immutable set of `N` points in `R^n` with optional positive weights.
///
/// Construction verifies that the points affinely span `R^n`, which makes the
/// dissimilarity problem feasible for every `z`.
#[derive(Debug, Clone)]
pub struct PointSet {
    dim: usize,
    len: usize,
    points: Vec<f64>,
    weights: Option<Vec<f64>>,
    mean: Vec<f64>,
    // W = L^{-1} where L L^T is the empirical covariance; row-major, lower triangular.
    whitening: Vec<f64>,
    // Rows [W (z_i - mean); 1], length dim + 1 each.
    standardized: Vec<f64>,
    min_weight: f64,
    lipschitz: f64,
}

impl PointSet {
    /// Builds a point set with unit weights.
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        Self::build(points, None)
    }

    /// Builds a point set whose quadratic term is weighted per point.
    pub fn with_weights(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != points.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidWeights);
        }
        Self::build(points, Some(weights))
    }

    fn build(points: Vec<Vec<f64>>, weights: Option<Vec<f64>>) -> Result<Self> {
        let dim = points.first().map(Vec::len).unwrap_or(0);
        if dim == 0 {
            return Err(Error::InvalidParameter(
                "points must be non-empty vectors".into(),
            ));
        }
        let len = points.len();
        if len < dim + 1 {
            return Err(Error::TooFewPoints {
                dim,
                needed: dim + 1,
                got: len,
            });
        }
        let mut flat = Vec::with_capacity(len * dim);
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("points must be finite".into()));
            }
            flat.extend_from_slice(p);
        }

        let n = len as f64;
        let mut mean = vec![0.0; dim];
        for p in flat.chunks_exact(dim) {
            for (m, v) in mean.iter_mut().zip(p) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);

        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        for p in flat.chunks_exact(dim) {
            for a in 0..dim {
                let da = p[a] - mean[a];
                for b in 0..=a {
                    cov[(a, b)] += da * (p[b] - mean[b]);
                }
            }
        }
        for a in 0..dim {
            for b in 0..=a {
                cov[(a, b)] /= n;
                cov[(b, a)] = cov[(a, b)];
            }
        }
        let max_diag = (0..dim).map(|a| cov[(a, a)]).fold(0.0, f64::max);
        let chol = cov
            .clone()
            .cholesky()
            .ok_or(Error::NotSpanning { dim })?;
        let lower = chol.l();
        let min_pivot = (0..dim).map(|a| lower[(a, a)].powi(2)).fold(f64::INFINITY, f64::min);
        if !(max_diag > 0.0) || min_pivot <= SPAN_RTOL * max_diag {
            return Err(Error::NotSpanning { dim });
        }
        let inv = lower
            .solve_lower_triangular(&DMatrix::identity(dim, dim))
            .ok_or(Error::NotSpanning { dim })?;
        let mut whitening = vec![0.0; dim * dim];
        for a in 0..dim {
            for b in 0..=a {
                whitening[a * dim + b] = inv[(a, b)];
            }
        }

        let k = dim + 1;
        let mut standardized = vec![0.0; len * k];
        let mut centered = vec![0.0; dim];
        for (i, p) in flat.chunks_exact(dim).enumerate() {
            for a in 0..dim {
                centered[a] = p[a] - mean[a];
            }
            let row = &mut standardized[i * k..(i + 1) * k];
            apply_lower(&whitening, dim, &centered, &mut row[..dim]);
            row[dim] = 1.0;
        }

        let min_weight = weights
            .as_ref()
            .map(|w| w.iter().copied().fold(f64::INFINITY, f64::min))
            .unwrap_or(1.0);
        let lipschitz = power_method_lipschitz(&standardized, k, min_weight);

        Ok(Self {
            dim,
            len,
            points: flat,
            weights,
            mean,
            whitening,
            standardized,
            min_weight,
            lipschitz,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks_exact(self.dim)
    }

    /// Sample mean `z̄ = N⁻¹ Z u`.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn has_unit_weights(&self) -> bool {
        self.weights
            .as_ref()
            .map_or(true, |w| w.iter().all(|&v| v == 1.0))
    }

    #[inline]
    fn weight(&self, i: usize) -> f64 {
        match &self.weights {
            Some(w) => w[i],
            None => 1.0,
        }
    }

    /// Step-size constant for the accelerated gradient iteration.
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Point set over the coordinates `first..dim` of every point, keeping weights.
    pub fn drop_leading(&self, first: usize) -> Result<PointSet> {
        if first >= self.dim {
            return Err(Error::InvalidParameter(format!(
                "cannot drop {first} of {} coordinates",
                self.dim
            )));
        }
        let pts = self.points().map(|p| p[first..].to_vec()).collect();
        Self::build(pts, self.weights.clone())
    }

    fn standardize_into(&self, z: &[f64], out: &mut [f64]) {
        let centered: Vec<f64> = z.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        apply_lower(&self.whitening, self.dim, &centered, &mut out[..self.dim]);
        out[self.dim] = 1.0;
    }

    /// Dual function at multipliers `(mu, nu)` expressed in the original coordinates.
    ///
    /// Any `(mu, nu)` gives a lower bound on `J_γ(z, D)`.
    pub fn dual_objective(&self, z: &[f64], gamma: f64, mu: &[f64], nu: f64) -> f64 {
        let mut value = -nu - dot(mu, z);
        for i in 0..self.len {
            let c = dot(mu, self.point(i)) + nu;
            let excess = (c.abs() - gamma).max(0.0);
            value -= excess * excess / (4.0 * self.weight(i));
        }
        value
    }

    /// Primal objective `Σ w_i λ_i² + γ Σ |λ_i|`.
    pub fn primal_objective(&self, lambda: &[f64], gamma: f64) -> f64 {
        lambda
            .iter()
            .enumerate()
            .map(|(i, l)| self.weight(i) * l * l + gamma * l.abs())
            .sum()
    }
}

fn apply_lower(w: &[f64], dim: usize, v: &[f64], out: &mut [f64]) {
    for a in 0..dim {
        let row = &w[a * dim..a * dim + a + 1];
        out[a] = row.iter().zip(&v[..=a]).map(|(x, y)| x * y).sum();
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn power_method_lipschitz(rows: &[f64], k: usize, min_weight: f64) -> f64 {
    let mut gram = vec![0.0; k * k];
    for row in rows.chunks_exact(k) {
        for a in 0..k {
            for b in 0..k {
                gram[a * k + b] += row[a] * row[b];
            }
        }
    }
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    let mut eig = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let next: Vec<f64> = (0..k).map(|a| dot(&gram[a * k..(a + 1) * k], &v)).collect();
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        eig = norm;
        v = next.into_iter().map(|x| x / norm).collect();
    }
    // Power iteration approaches the top eigenvalue from below.
    1.01 * eig / (2.0 * min_weight)
}

/// Minimizer over `λ` of `w λ² + γ |λ| + c λ`.
#[inline]
pub fn inner_minimizer(c: f64, gamma: f64, weight: f64) -> f64 {
    if c.abs() <= gamma {
        0.0
    } else {
        -(c - gamma * c.signum()) / (2.0 * weight)
    }
}

/// Closed-form `J_0(z, D) = N⁻¹ + (z − z̄)ᵀ (Z Zᵀ − N z̄ z̄ᵀ)⁻¹ (z − z̄)` for unit weights.
pub fn closed_form_gamma0(z: &[f64], set: &PointSet) -> Result<f64> {
    if z.len() != set.dim {
        return Err(Error::DimensionMismatch {
            expected: set.dim,
            got: z.len(),
        });
    }
    if !set.has_unit_weights() {
        return Err(Error::InvalidParameter(
            "closed form requires unit weights".into(),
        ));
    }
    let dim = set.dim;
    let n = set.len as f64;
    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    for p in set.points() {
        for a in 0..dim {
            for b in 0..dim {
                gram[(a, b)] += p[a] * p[b];
            }
        }
    }
    let mean = DVector::from_column_slice(set.mean());
    let scatter = gram - (&mean * mean.transpose()) * n;
    let chol = scatter.cholesky().ok_or(Error::SingularMatrix)?;
    let diff = DVector::from_column_slice(z) - mean;
    let solved = chol.solve(&diff);
    Ok(1.0 / n + diff.dot(&solved))
}

/// Algorithm used to maximize the dual.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualMethod {
    /// Damped Newton steps on the piecewise-quadratic dual using the Hessian of
    /// the current active set, falling back to accelerated gradient ascent if a
    /// line search stalls.
    Newton,
    /// Nesterov-accelerated gradient ascent with fixed step `1/L` and restart
    /// whenever the dual value decreases.
    AcceleratedGradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Bound on `max(‖Zλ − z‖∞, |uᵀλ − 1|)`, measured in standardized coordinates.
    pub primal_tolerance: f64,
    pub max_iterations: usize,
    pub method: DualMethod,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            primal_tolerance: 1e-8,
            max_iterations: 50_000,
            method: DualMethod::Newton,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.primal_tolerance > 0.0) {
            return Err(Error::InvalidParameter(
                "primal tolerance must be positive".into(),
            ));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissimilarityResult {
    /// `J_γ(z, D)` evaluated at the returned weights.
    pub value: f64,
    pub lambda: Vec<f64>,
    pub dual_mu: Vec<f64>,
    pub dual_nu: f64,
    pub primal_residual: f64,
    pub iterations: usize,
}

/// Solves a single dissimilarity problem from a cold start.
pub fn solve_dissimilarity(
    z: &[f64],
    set: &PointSet,
    gamma: f64,
    settings: &SolverSettings,
) -> Result<DissimilarityResult> {
    DissimilaritySolver::new(set, *settings)?.solve(z, gamma)
}

/// Reusable solver bound to one [`PointSet`].
///
/// Consecutive calls to [`value`](Self::value) warm start from the previous
/// dual solution, which is what makes sweeping a fine output grid cheap.
/// Results depend only on the sequence of calls since the last
/// [`reset`](Self::reset).
#[derive(Debug, Clone)]
pub struct DissimilaritySolver<'a> {
    set: &'a PointSet,
    settings: SolverSettings,
    warm: bool,
    eta: Vec<f64>,
    target: Vec<f64>,
    lambda: Vec<f64>,
    grad: Vec<f64>,
    trial_eta: Vec<f64>,
    trial_lambda: Vec<f64>,
    trial_grad: Vec<f64>,
    momentum: Vec<f64>,
    hessian: Vec<f64>,
    direction: Vec<f64>,
    residual: f64,
    iterations: usize,
}

impl<'a> DissimilaritySolver<'a> {
    pub fn new(set: &'a PointSet, settings: SolverSettings) -> Result<Self> {
        settings.validate()?;
        let k = set.dim + 1;
        Ok(Self {
            set,
            settings,
            warm: false,
            eta: vec![0.0; k],
            target: vec![0.0; k],
            lambda: vec![0.0; set.len],
            grad: vec![0.0; k],
            trial_eta: vec![0.0; k],
            trial_lambda: vec![0.0; set.len],
            trial_grad: vec![0.0; k],
            momentum: vec![0.0; k],
            hessian: vec![0.0; k * k],
            direction: vec![0.0; k],
            residual: f64::INFINITY,
            iterations: 0,
        })
    }

    pub fn point_set(&self) -> &'a PointSet {
        self.set
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    /// Forgets the warm start.
    pub fn reset(&mut self) {
        self.warm = false;
    }

    /// Solves for `z` and returns the full result (cold start).
    pub fn solve(&mut self, z: &[f64], gamma: f64) -> Result<DissimilarityResult> {
        self.reset();
        let value = self.value(z, gamma)?;
        let dim = self.set.dim;
        // mu = W^T mu_std, nu = nu_std - mu^T mean
        let mut mu = vec![0.0; dim];
        for a in 0..dim {
            for b in 0..=a {
                mu[b] += self.set.whitening[a * dim + b] * self.eta[a];
            }
        }
        let nu = self.eta[dim] - dot(&mu, &self.set.mean);
        Ok(DissimilarityResult {
            value,
            lambda: self.lambda.clone(),
            dual_mu: mu,
            dual_nu: nu,
            primal_residual: self.residual,
            iterations: self.iterations,
        })
    }

    /// Returns `J_γ(z, D)`, warm starting from the previous call.
    pub fn value(&mut self, z: &[f64], gamma: f64) -> Result<f64> {
        if z.len() != self.set.dim {
            return Err(Error::DimensionMismatch {
                expected: self.set.dim,
                got: z.len(),
            });
        }
        if !(gamma >= 0.0) || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gamma must be finite and nonnegative, got {gamma}"
            )));
        }
        let mut target = std::mem::take(&mut self.target);
        self.set.standardize_into(z, &mut target);
        self.target = target;
        if !self.warm {
            self.cold_start(gamma);
        }
        let outcome = match self.settings.method {
            DualMethod::Newton => self.run_newton(gamma),
            DualMethod::AcceleratedGradient => self.run_accelerated(gamma, 0),
        };
        match outcome {
            Ok(()) => {
                self.warm = true;
                Ok(self.set.primal_objective(&self.lambda, gamma))
            }
            Err(e) => {
                self.warm = false;
                Err(e)
            }
        }
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn last_residual(&self) -> f64 {
        self.residual
    }

    pub fn last_iterations(&self) -> usize {
        self.iterations
    }

    // Exact dual optimum at γ = 0 in standardized coordinates, shifted by -γ in nu.
    fn cold_start(&mut self, gamma: f64) {
        let dim = self.set.dim;
        let n = self.set.len as f64;
        for a in 0..dim {
            self.eta[a] = -2.0 * self.target[a] / n;
        }
        self.eta[dim] = -2.0 / n - gamma;
    }

    /// Writes λ(η) and ∇g(η) = Ãλ − b̃, returns the dual value g(η).
    fn dual_pass(
        set: &PointSet,
        eta: &[f64],
        target: &[f64],
        gamma: f64,
        lambda: &mut [f64],
        grad: &mut [f64],
    ) -> f64 {
        let k = set.dim + 1;
        grad.fill(0.0);
        let mut value = 0.0;
        for (i, row) in set.standardized.chunks_exact(k).enumerate() {
            let c = dot(row, eta);
            let w = set.weight(i);
            let l = inner_minimizer(c, gamma, w);
            lambda[i] = l;
            if l != 0.0 {
                let excess = c.abs() - gamma;
                value -= excess * excess / (4.0 * w);
                for (g, r) in grad.iter_mut().zip(row) {
                    *g += l * r;
                }
            }
        }
        for ((g, e), t) in grad.iter_mut().zip(eta).zip(target) {
            *g -= t;
            value -= e * t;
        }
        value
    }

    fn run_newton(&mut self, gamma: f64) -> Result<()> {
        let set = self.set;
        let k = set.dim + 1;
        let tol = self.settings.primal_tolerance;
        let ridge = 1e-12 * set.len as f64 / (2.0 * set.min_weight);
        let mut value = Self::dual_pass(
            set,
            &self.eta,
            &self.target,
            gamma,
            &mut self.lambda,
            &mut self.grad,
        );
        self.residual = max_abs(&self.grad);
        self.iterations = 0;
        while self.residual > tol {
            if self.iterations >= self.settings.max_iterations {
                return Err(Error::NonConvergence {
                    iterations: self.iterations,
                    residual: self.residual,
                });
            }
            self.iterations += 1;

            // Negated dual Hessian restricted to the active coordinates.
            self.hessian.fill(0.0);
            for (i, row) in set.standardized.chunks_exact(k).enumerate() {
                if self.lambda[i] != 0.0 {
                    let s = 0.5 / set.weight(i);
                    for a in 0..k {
                        let ra = s * row[a];
                        for b in 0..=a {
                            self.hessian[a * k + b] += ra * row[b];
                        }
                    }
                }
            }
            for a in 0..k {
                self.hessian[a * k + a] += ridge;
            }
            self.direction.copy_from_slice(&self.grad);
            if !cholesky_solve(&mut self.hessian, k, &mut self.direction) {
                return self.run_accelerated(gamma, self.iterations);
            }
            let slope = dot(&self.grad, &self.direction);

            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_BACKTRACKS {
                for a in 0..k {
                    self.trial_eta[a] = self.eta[a] + step * self.direction[a];
                }
                let trial_value = Self::dual_pass(
                    set,
                    &self.trial_eta,
                    &self.target,
                    gamma,
                    &mut self.trial_lambda,
                    &mut self.trial_grad,
                );
                let trial_residual = max_abs(&self.trial_grad);
                if trial_value >= value + ARMIJO * step * slope
                    || trial_residual <= 0.5 * self.residual
                {
                    std::mem::swap(&mut self.eta, &mut self.trial_eta);
                    std::mem::swap(&mut self.lambda, &mut self.trial_lambda);
                    std::mem::swap(&mut self.grad, &mut self.trial_grad);
                    value = trial_value;
                    self.residual = trial_residual;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                return self.run_accelerated(gamma, self.iterations);
            }
        }
        Ok(())
    }

    fn run_accelerated(&mut self, gamma: f64, spent: usize) -> Result<()> {
        let set = self.set;
        let k = set.dim + 1;
        let tol = self.settings.primal_tolerance;
        let step = 1.0 / set.lipschitz;
        // trial_eta holds the extrapolated point y; eta holds the last gradient iterate x.
        self.trial_eta.copy_from_slice(&self.eta);
        self.momentum.fill(0.0);
        let mut t = 1.0_f64;
        let mut last_value = f64::NEG_INFINITY;
        self.iterations = spent;
        loop {
            let value = Self::dual_pass(
                set,
                &self.trial_eta,
                &self.target,
                gamma,
                &mut self.lambda,
                &mut self.grad,
            );
            self.residual = max_abs(&self.grad);
            if self.residual <= tol {
                self.eta.copy_from_slice(&self.trial_eta);
                return Ok(());
            }
            if self.iterations >= self.settings.max_iterations {
                self.eta.copy_from_slice(&self.trial_eta);
                return Err(Error::NonConvergence {
                    iterations: self.iterations,
                    residual: self.residual,
                });
            }
            self.iterations += 1;

            let restart = value < last_value;
            last_value = value;
            let t_next = if restart {
                1.0
            } else {
                0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())
            };
            let beta = if restart { 0.0 } else { (t - 1.0) / t_next };
            for a in 0..k {
                let next = self.trial_eta[a] + step * self.grad[a];
                self.momentum[a] = next - self.eta[a];
                self.eta[a] = next;
                self.trial_eta[a] = next + beta * self.momentum[a];
            }
            t = t_next;
        }
    }
}

#[inline]
fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// In-place Cholesky solve of a small SPD system stored in the lower triangle
/// of `a` (row-major, `k × k`). Returns false if a pivot is not positive.
fn cholesky_solve(a: &mut [f64], k: usize, rhs: &mut [f64]) -> bool {
    for j in 0..k {
        let mut d = a[j * k + j];
        for p in 0..j {
            d -= a[j * k + p] * a[j * k + p];
        }
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        a[j * k + j] = d;
        for i in j + 1..k {
            let mut s = a[i * k + j];
            for p in 0..j {
                s -= a[i * k + p] * a[j * k + p];
            }
            a[i * k + j] = s / d;
        }
    }
    for i in 0..k {
        let mut s = rhs[i];
        for p in 0..i {
            s -= a[i * k + p] * rhs[p];
        }
        rhs[i] = s / a[i * k + i];
    }
    for i in (0..k).rev() {
        let mut s = rhs[i];
        for p in i + 1..k {
            s -= a[p * k + i] * rhs[p];
        }
        rhs[i] = s / a[i * k + i];
    }
    true
}
