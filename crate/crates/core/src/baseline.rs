//! Linear baselines: quantile regression (pinball loss, solved exactly as a
//! linear program) and ordinary least squares. Both append an intercept as the
//! last coefficient.

use nalgebra::{DMatrix, DVector};

use crate::data::Pair;
use crate::error::{Error, Result};

const RANK_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    /// Regressor coefficients followed by the intercept.
    pub theta: Vec<f64>,
    pub tau: Option<f64>,
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        predict_linear(self, x)
    }
}

/// `θᵀ [x; 1]`
pub fn predict_linear(model: &LinearModel, x: &[f64]) -> Result<f64> {
    let p = model.theta.len();
    if x.len() + 1 != p {
        return Err(Error::DimensionMismatch {
            expected: p.saturating_sub(1),
            got: x.len(),
        });
    }
    Ok(x.iter().zip(&model.theta).map(|(a, b)| a * b).sum::<f64>() + model.theta[p - 1])
}

/// `Σ (1−τ) max(0, θᵀx_j − y_j) + τ max(0, y_j − θᵀx_j)`
pub fn pinball_objective(pairs: &[Pair], theta: &[f64], tau: f64) -> f64 {
    let model = LinearModel {
        theta: theta.to_vec(),
        tau: None,
    };
    pairs
        .iter()
        .map(|p| {
            let e = predict_linear(&model, &p.x).expect("dimension checked by caller") - p.y;
            if e > 0.0 {
                (1.0 - tau) * e
            } else {
                -tau * e
            }
        })
        .sum()
}

fn design(pairs: &[Pair]) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let first = pairs
        .first()
        .ok_or_else(|| Error::InvalidParameter("no training pairs".into()))?;
    let p = first.x.len() + 1;
    if let Some(bad) = pairs.iter().find(|q| q.x.len() + 1 != p) {
        return Err(Error::DimensionMismatch {
            expected: p - 1,
            got: bad.x.len(),
        });
    }
    let x = DMatrix::from_fn(pairs.len(), p, |r, c| if c + 1 == p { 1.0 } else { pairs[r].x[c] });
    let y = DVector::from_iterator(pairs.len(), pairs.iter().map(|q| q.y));
    Ok((x, y))
}

fn check_rank(r: &DMatrix<f64>) -> Result<()> {
    let diag: Vec<f64> = (0..r.ncols()).map(|i| r[(i, i)].abs()).collect();
    let max = diag.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) || diag.iter().any(|d| *d <= RANK_RTOL * max) {
        return Err(Error::RankDeficient);
    }
    Ok(())
}

fn require_full_rank(x: &DMatrix<f64>) -> Result<()> {
    if x.nrows() < x.ncols() {
        return Err(Error::RankDeficient);
    }
    check_rank(&x.clone().qr().r())
}

pub fn fit_least_squares(pairs: &[Pair]) -> Result<LinearModel> {
    let (x, y) = design(pairs)?;
    if x.nrows() < x.ncols() {
        return Err(Error::RankDeficient);
    }
    let qr = x.qr();
    let r = qr.r();
    check_rank(&r)?;
    let qty = qr.q().transpose() * y;
    let theta = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::RankDeficient)?;
    Ok(LinearModel {
        theta: theta.iter().copied().collect(),
        tau: None,
    })
}

/// Exact pinball-loss minimizer via the simplex method on
///
/// ```text
/// minimize    Σ τ u_j + (1−τ) v_j
/// subject to  X(θ⁺ − θ⁻) + u − v = y,   θ±, u, v ≥ 0
/// ```
pub fn fit_quantile_regression(pairs: &[Pair], tau: f64) -> Result<LinearModel> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tau must lie in (0, 1), got {tau}"
        )));
    }
    let (x, y) = design(pairs)?;
    require_full_rank(&x)?;
    let (n, p) = (x.nrows(), x.ncols());
    let cols = 2 * p + 2 * n;
    let mut a = vec![0.0; n * cols];
    let mut b = vec![0.0; n];
    let mut basis = vec![0; n];
    for j in 0..n {
        let sign = if y[j] < 0.0 { -1.0 } else { 1.0 };
        let row = &mut a[j * cols..(j + 1) * cols];
        for k in 0..p {
            row[k] = sign * x[(j, k)];
            row[p + k] = -sign * x[(j, k)];
        }
        row[2 * p + j] = sign;
        row[2 * p + n + j] = -sign;
        b[j] = sign * y[j];
        basis[j] = if sign > 0.0 { 2 * p + j } else { 2 * p + n + j };
    }
    let mut cost = vec![0.0; cols];
    for j in 0..n {
        cost[2 * p + j] = tau;
        cost[2 * p + n + j] = 1.0 - tau;
    }
    let solution = simplex::minimize(a, b, &cost, basis)?;
    let theta = (0..p).map(|k| solution[k] - solution[p + k]).collect();
    Ok(LinearModel {
        theta,
        tau: Some(tau),
    })
}

mod simplex {
    //! Dense tableau simplex for `min cᵀx, Ax = b, x ≥ 0` started from a
    //! feasible basis whose columns form an identity.

    use crate::error::{Error, Result};

    const PIVOT_TOL: f64 = 1e-11;
    const COST_TOL: f64 = 1e-12;
    // Switch from Dantzig's rule to Bland's rule after this many degenerate pivots in a row.
    const DEGENERATE_STREAK: usize = 50;

    pub fn minimize(mut a: Vec<f64>, mut b: Vec<f64>, cost: &[f64], mut basis: Vec<usize>) -> Result<Vec<f64>> {
        let rows = b.len();
        let cols = cost.len();
        debug_assert_eq!(a.len(), rows * cols);
        let mut reduced = cost.to_vec();
        for (i, &bi) in basis.iter().enumerate() {
            let cb = cost[bi];
            if cb != 0.0 {
                for (r, v) in reduced.iter_mut().zip(&a[i * cols..(i + 1) * cols]) {
                    *r -= cb * v;
                }
            }
        }

        let max_iterations = 50 * (rows + cols);
        let mut streak = 0;
        for _ in 0..max_iterations {
            let entering = if streak < DEGENERATE_STREAK {
                reduced
                    .iter()
                    .enumerate()
                    .filter(|(_, r)| **r < -COST_TOL)
                    .min_by(|x, y| x.1.partial_cmp(y.1).unwrap())
                    .map(|(j, _)| j)
            } else {
                reduced.iter().position(|r| *r < -COST_TOL)
            };
            let Some(col) = entering else {
                let mut x = vec![0.0; cols];
                for (i, &bi) in basis.iter().enumerate() {
                    x[bi] = b[i];
                }
                return Ok(x);
            };

            let mut leave: Option<(usize, f64)> = None;
            for i in 0..rows {
                let aij = a[i * cols + col];
                if aij > PIVOT_TOL {
                    let ratio = b[i] / aij;
                    let better = match leave {
                        None => true,
                        Some((l, best)) => ratio < best || (ratio == best && basis[i] < basis[l]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((row, ratio)) = leave else {
                return Err(Error::Unbounded);
            };
            streak = if ratio <= 0.0 { streak + 1 } else { 0 };

            let pivot = a[row * cols + col];
            for v in &mut a[row * cols..(row + 1) * cols] {
                *v /= pivot;
            }
            b[row] /= pivot;
            let pivot_row: Vec<f64> = a[row * cols..(row + 1) * cols].to_vec();
            for i in 0..rows {
                if i == row {
                    continue;
                }
                let factor = a[i * cols + col];
                if factor != 0.0 {
                    for (v, pv) in a[i * cols..(i + 1) * cols].iter_mut().zip(&pivot_row) {
                        *v -= factor * pv;
                    }
                    a[i * cols + col] = 0.0;
                    b[i] -= factor * b[row];
                    if b[i] < 0.0 && b[i] > -1e-12 {
                        b[i] = 0.0;
                    }
                }
            }
            let factor = reduced[col];
            for (r, pv) in reduced.iter_mut().zip(&pivot_row) {
                *r -= factor * pv;
            }
            reduced[col] = 0.0;
            basis[row] = col;
        }
        Err(Error::NonConvergence {
            iterations: max_iterations,
            residual: f64::NAN,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line(points: &[(f64, f64)]) -> Vec<Pair> {
        points.iter().map(|&(x, y)| Pair::new(vec![x], y)).collect()
    }

    #[test]
    fn predict_examples() {
        let m = LinearModel { theta: vec![0.0, 0.0, 4.5], tau: None };
        assert_eq!(predict_linear(&m, &[1.0, -7.0]).unwrap(), 4.5);
        let m = LinearModel { theta: vec![1.0, 0.0], tau: None };
        assert_eq!(predict_linear(&m, &[5.0]).unwrap(), 5.0);
        let m = LinearModel { theta: vec![2.0, 1.0], tau: None };
        assert_eq!(predict_linear(&m, &[3.0]).unwrap(), 7.0);
        assert!(predict_linear(&m, &[3.0, 1.0]).is_err());
    }

    #[test]
    fn least_squares_exact_fits() {
        let pairs = line(&[(0.0, -2.0), (1.0, 1.0), (2.5, 5.5), (-3.0, -11.0)]);
        let m = fit_least_squares(&pairs).unwrap();
        assert_relative_eq!(m.theta[0], 3.0, epsilon = 1e-10);
        assert_relative_eq!(m.theta[1], -2.0, epsilon = 1e-10);

        let flat = line(&[(0.0, 1.5), (1.0, 1.5), (4.0, 1.5)]);
        let m = fit_least_squares(&flat).unwrap();
        assert!(m.theta[0].abs() < 1e-12);
        assert_relative_eq!(m.theta[1], 1.5, epsilon = 1e-12);

        let collinear = vec![Pair::new(vec![1.0, 2.0], 0.0), Pair::new(vec![2.0, 4.0], 1.0), Pair::new(vec![3.0, 6.0], 0.5)];
        assert!(matches!(fit_least_squares(&collinear), Err(Error::RankDeficient)));
    }

    #[test]
    fn least_squares_residuals_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pairs: Vec<Pair> = (0..80)
            .map(|_| {
                let x = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-3.0..2.0)];
                let y = 0.3 * x[0] - 1.1 * x[1] + 0.2 + rng.gen_range(-0.5..0.5);
                Pair::new(x, y)
            })
            .collect();
        let m = fit_least_squares(&pairs).unwrap();
        let mut normal = [0.0; 3];
        for p in &pairs {
            let r = p.y - m.predict(&p.x).unwrap();
            normal[0] += p.x[0] * r;
            normal[1] += p.x[1] * r;
            normal[2] += r;
        }
        assert!(normal.iter().all(|v| v.abs() < 1e-8), "{normal:?}");
    }

    fn breakpoint_minimum(ys: &[f64], tau: f64) -> f64 {
        let pairs: Vec<Pair> = ys.iter().map(|&y| Pair::new(vec![], y)).collect();
        ys.iter()
            .map(|&c| pinball_objective(&pairs, &[c], tau))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn intercept_only_quantile() {
        let ys: Vec<f64> = (1..=100).map(f64::from).collect();
        let pairs: Vec<Pair> = ys.iter().map(|&y| Pair::new(vec![], y)).collect();
        let m = fit_quantile_regression(&pairs, 0.9).unwrap();
        assert!((90.0 - 1e-9..=91.0 + 1e-9).contains(&m.theta[0]), "{}", m.theta[0]);
        let obj = pinball_objective(&pairs, &m.theta, 0.9);
        assert!((obj - breakpoint_minimum(&ys, 0.9)).abs() < 1e-9);
    }

    #[test]
    fn median_regression_on_exact_line() {
        let pairs = line(&[(-2.0, -3.0), (-1.0, -1.0), (0.0, 1.0), (1.0, 3.0), (2.0, 5.0)]);
        let m = fit_quantile_regression(&pairs, 0.5).unwrap();
        assert_relative_eq!(m.theta[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(m.theta[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn quantile_counts_and_certificate() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for &tau in &[0.05, 0.1, 0.5, 0.9] {
            let pairs: Vec<Pair> = (0..120)
                .map(|_| {
                    let x = vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
                    let y = x[0] - 0.5 * x[1] + rng.gen_range(-0.3..0.3);
                    Pair::new(x, y)
                })
                .collect();
            let m = fit_quantile_regression(&pairs, tau).unwrap();
            let below = pairs
                .iter()
                .filter(|p| p.y < m.predict(&p.x).unwrap() - 1e-9)
                .count();
            assert!(below as f64 <= (tau * 120.0).ceil(), "tau {tau}: {below} below");
            let base = pinball_objective(&pairs, &m.theta, tau);
            for k in 0..m.theta.len() {
                for &delta in &[1e-6, -1e-6] {
                    let mut t = m.theta.clone();
                    t[k] += delta;
                    assert!(pinball_objective(&pairs, &t, tau) >= base - 1e-9);
                }
            }
        }
    }

    #[test]
    fn quantile_errors() {
        let pairs = line(&[(0.0, 1.0), (1.0, 2.0)]);
        assert!(fit_quantile_regression(&pairs, 0.0).is_err());
        assert!(fit_quantile_regression(&pairs, 1.0).is_err());
        let same_x = line(&[(1.0, 1.0), (1.0, 2.0), (1.0, 0.0)]);
        assert!(matches!(fit_quantile_regression(&same_x, 0.3), Err(Error::RankDeficient)));
    }
}
