//! Coordinate-descent lasso with a BIC-selected penalty.
//!
//! The objective is `sum (y - X b)^2 + lambda * sum |b_j|`, so each coordinate
//! update thresholds at `lambda / 2`.

use nalgebra::{DMatrix, DVector};

use super::design::{dot, ColMatrix, Standardized};
use crate::error::{Error, Result};

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoConfig {
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Stop the path once extra penalty reduction no longer improves the fit.
    pub early_stop: bool,
    /// Stop the path once the support exceeds this many coefficients.
    pub max_support: Option<usize>,
    /// Stop the path after this many grid points without a lower BIC.
    pub bic_patience: Option<usize>,
}

impl Default for LassoConfig {
    fn default() -> Self {
        LassoConfig {
            n_lambda: 100,
            lambda_min_ratio: 1e-3,
            tol: 1e-7,
            max_iter: 100_000,
            early_stop: true,
            max_support: None,
            bic_patience: Some(10),
        }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_lambda == 0 {
            return Err(Error::InvalidParameter("n_lambda must be positive".into()));
        }
        if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::InvalidParameter(
                "lambda_min_ratio must lie in (0, 1)".into(),
            ));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::InvalidParameter(
                "tol and max_iter must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Sweeps between attempts to jump to the sign-fixed solution.
const POLISH_EVERY: usize = 20;

/// Smallest penalty with an all-zero solution.
pub fn lambda_max(x: &ColMatrix, y: &[f64]) -> f64 {
    (0..x.n_cols())
        .map(|j| dot(x.col(j), y).abs())
        .fold(0.0, f64::max)
        * 2.0
}

pub fn objective(x: &ColMatrix, y: &[f64], beta: &[f64], lambda: f64) -> f64 {
    let fit = x.mul_vec(beta);
    let rss: f64 = y.iter().zip(&fit).map(|(a, b)| (a - b).powi(2)).sum();
    rss + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Covariance-update solver state with warm starts.
///
/// `grad[j] = x_j' (y - X beta)` is exact for active coordinates during the inner
/// loop and refreshed for all coordinates before each optimality check.
pub struct Solver<'a> {
    x: &'a ColMatrix,
    yty: f64,
    xty: Vec<f64>,
    norms: Vec<f64>,
    beta: Vec<f64>,
    grad: Vec<f64>,
    active: Vec<usize>,
    in_active: Vec<bool>,
    gram: Vec<Option<Vec<f64>>>,
}

impl<'a> Solver<'a> {
    pub fn new(x: &'a ColMatrix, y: &[f64]) -> Solver<'a> {
        assert_eq!(x.n_rows(), y.len());
        let p = x.n_cols();
        let xty: Vec<f64> = (0..p).map(|j| dot(x.col(j), y)).collect();
        let norms = (0..p).map(|j| dot(x.col(j), x.col(j))).collect();
        Solver {
            x,
            yty: dot(y, y),
            grad: xty.clone(),
            xty,
            norms,
            beta: vec![0.0; p],
            active: Vec::new(),
            in_active: vec![false; p],
            gram: vec![None; p],
        }
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn lambda_max(&self) -> f64 {
        self.xty.iter().fold(0.0, |m: f64, v| m.max(v.abs())) * 2.0
    }

    pub fn support(&self) -> usize {
        self.beta.iter().filter(|b| **b != 0.0).count()
    }

    /// `||y - X beta||^2` from cached inner products.
    pub fn rss(&self) -> f64 {
        let mut s = self.yty;
        for &j in &self.active {
            s -= self.beta[j] * (self.xty[j] + self.grad[j]);
        }
        s.max(0.0)
    }

    fn activate(&mut self, j: usize) {
        if self.gram[j].is_none() {
            let xj = self.x.col(j);
            let g = (0..self.x.n_cols())
                .map(|k| dot(self.x.col(k), xj))
                .collect();
            self.gram[j] = Some(g);
        }
        self.active.push(j);
        self.in_active[j] = true;
    }

    fn refresh_gradient(&mut self) {
        self.grad.copy_from_slice(&self.xty);
        for &k in &self.active {
            let b = self.beta[k];
            if b != 0.0 {
                let g = self.gram[k]
                    .as_ref()
                    .expect("active column has a gram column");
                for (gr, gk) in self.grad.iter_mut().zip(g) {
                    *gr -= b * gk;
                }
            }
        }
    }

    /// Change in `RSS + lambda * ||beta||_1` when moving to `candidate`, which
    /// may differ from the current point on active coordinates only. Uses the
    /// exact active gradient, so small changes are not lost to cancellation.
    fn objective_change(&self, candidate: &[f64], half: f64) -> f64 {
        let mut change = 0.0;
        for &j in &self.active {
            let dj = candidate[j] - self.beta[j];
            if dj == 0.0 {
                continue;
            }
            let g = self.gram[j]
                .as_ref()
                .expect("active column has a gram column");
            let gd: f64 = self
                .active
                .iter()
                .map(|&k| g[k] * (candidate[k] - self.beta[k]))
                .sum();
            change += dj * (gd - 2.0 * self.grad[j])
                + 2.0 * half * (candidate[j].abs() - self.beta[j].abs());
        }
        change
    }

    /// Moves toward the minimum of the objective with the current signs held
    /// fixed, stopping where the first coefficient reaches zero. When the Gram
    /// block is singular and that minimum is unbounded, moves along the null
    /// direction that lowers the penalty instead. Either way the objective is
    /// non-increasing along the segment. Rescues coordinate descent on
    /// collinear columns, where mass drifts between them in tiny sweeps.
    fn polish(&mut self, half: f64) -> bool {
        let mut changed = false;
        loop {
            let support: Vec<usize> = self
                .active
                .iter()
                .copied()
                .filter(|&j| self.beta[j] != 0.0)
                .collect();
            let m = support.len();
            if m == 0 {
                return changed;
            }
            let g = DMatrix::from_fn(m, m, |a, b| {
                self.gram[support[a]]
                    .as_ref()
                    .expect("active column has a gram column")[support[b]]
            });
            let rhs = DVector::from_fn(m, |a, _| {
                self.xty[support[a]] - half * self.beta[support[a]].signum()
            });
            let beta = DVector::from_fn(m, |a, _| self.beta[support[a]]);
            let svd = g.clone().svd(true, true);
            let eps = svd.singular_values.max() * 1e-10;
            let Ok(sol) = svd.solve(&rhs, eps) else {
                return changed;
            };
            let rank = svd.rank(eps);
            let residual = &rhs - &g * &sol;
            let unbounded = rank < m && residual.norm() > 1e-8 * rhs.norm();
            // Direction and the largest step allowed before signs change.
            let (direction, mut step) = if unbounded {
                (residual, f64::INFINITY)
            } else {
                // Nearest minimizer: keep the null-space part of the current point.
                let projector = svd.solve(&g, eps).expect("factorization succeeded above");
                (&projector * (&sol - &beta), 1.0)
            };
            if direction.iter().any(|v| !v.is_finite()) {
                return changed;
            }
            let mut blocking = None;
            for (a, &j) in support.iter().enumerate() {
                if beta[a] * direction[a] < 0.0 {
                    let t = -beta[a] / direction[a];
                    if t < step {
                        step = t;
                        blocking = Some(j);
                    }
                }
            }
            if !step.is_finite() {
                return changed;
            }
            let mut candidate = self.beta.clone();
            for (a, &j) in support.iter().enumerate() {
                candidate[j] += step * direction[a];
            }
            if let Some(j) = blocking {
                candidate[j] = 0.0;
            }
            if self.objective_change(&candidate, half) > 0.0 {
                return changed;
            }
            self.beta = candidate;
            for &k in &self.active {
                let gk = self.gram[k]
                    .as_ref()
                    .expect("active column has a gram column");
                self.grad[k] =
                    self.xty[k] - support.iter().map(|&j| gk[j] * self.beta[j]).sum::<f64>();
            }
            changed = true;
            if blocking.is_none() {
                return changed;
            }
        }
    }

    /// Solves at `lambda` from the current coefficients. `on_sweep` sees the
    /// coefficients after every full sweep over the active set.
    pub fn solve(
        &mut self,
        lambda: f64,
        tol: f64,
        max_iter: usize,
        mut on_sweep: Option<&mut dyn FnMut(&[f64])>,
    ) -> Result<usize> {
        let half = lambda / 2.0;
        let mut sweeps = 0;
        loop {
            loop {
                if sweeps >= max_iter {
                    return Err(Error::NoConvergence {
                        lambda,
                        iterations: sweeps,
                    });
                }
                sweeps += 1;
                let mut max_delta: f64 = 0.0;
                for ai in 0..self.active.len() {
                    let j = self.active[ai];
                    let c = self.norms[j];
                    let old = self.beta[j];
                    let new = soft_threshold(self.grad[j] + c * old, half) / c;
                    let delta = new - old;
                    if delta != 0.0 {
                        self.beta[j] = new;
                        let g = self.gram[j]
                            .as_ref()
                            .expect("active column has a gram column");
                        for &k in &self.active {
                            self.grad[k] -= delta * g[k];
                        }
                        max_delta = max_delta.max(delta.abs());
                    }
                }
                if let Some(cb) = on_sweep.as_mut() {
                    cb(&self.beta);
                }
                if max_delta < tol {
                    break;
                }
                if sweeps % POLISH_EVERY == 0 && self.polish(half) {
                    if let Some(cb) = on_sweep.as_mut() {
                        cb(&self.beta);
                    }
                }
            }
            self.refresh_gradient();
            let mut added = false;
            for j in 0..self.beta.len() {
                if !self.in_active[j] && self.norms[j] > 0.0 && self.grad[j].abs() > half {
                    self.activate(j);
                    added = true;
                }
            }
            if !added {
                return Ok(sweeps);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub lambda: f64,
    pub df: usize,
    pub rss: f64,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathFit {
    pub path: Vec<PathPoint>,
    /// Index into `path` of the BIC minimizer.
    pub selected: usize,
    /// Coefficients at the selected penalty, on the standardized scale.
    pub beta: Vec<f64>,
}

impl PathFit {
    pub fn lambda(&self) -> f64 {
        self.path[self.selected].lambda
    }
}

pub fn bic(n: usize, rss: f64, df: usize) -> f64 {
    let n = n as f64;
    // A perfect fit would make the criterion unbounded below.
    let rss = rss.max(f64::MIN_POSITIVE);
    n * (rss / n).ln() + df as f64 * n.ln()
}

/// Geometric penalty grid from `lambda_max` down to `ratio * lambda_max`.
pub fn lambda_grid(lambda_max: f64, n_lambda: usize, ratio: f64) -> Vec<f64> {
    if n_lambda == 1 {
        return vec![lambda_max];
    }
    let step = ratio.ln() / (n_lambda - 1) as f64;
    (0..n_lambda)
        .map(|i| lambda_max * (step * i as f64).exp())
        .collect()
}

/// Runs the warm-started path and keeps the BIC minimizer.
pub fn lasso_path(x: &ColMatrix, y: &[f64], cfg: &LassoConfig) -> Result<PathFit> {
    cfg.validate()?;
    let n = y.len();
    let mut solver = Solver::new(x, y);
    let lmax = solver.lambda_max();
    let null_rss = solver.rss();
    let mut path = Vec::new();
    let mut best: Option<(f64, usize, Vec<f64>)> = None;
    if lmax == 0.0 {
        path.push(PathPoint {
            lambda: 0.0,
            df: 0,
            rss: null_rss,
            bic: bic(n, null_rss, 0),
        });
        return Ok(PathFit {
            path,
            selected: 0,
            beta: vec![0.0; x.n_cols()],
        });
    }
    let mut prev_rss = null_rss;
    for (i, lambda) in lambda_grid(lmax, cfg.n_lambda, cfg.lambda_min_ratio)
        .into_iter()
        .enumerate()
    {
        solver.solve(lambda, cfg.tol, cfg.max_iter, None)?;
        let df = solver.support();
        let rss = solver.rss();
        let point = PathPoint {
            lambda,
            df,
            rss,
            bic: bic(n, rss, df),
        };
        // Saturated fits leave no residual degrees of freedom.
        let admissible = df + 1 < n;
        if admissible && best.as_ref().is_none_or(|(b, _, _)| point.bic < *b) {
            best = Some((point.bic, path.len(), solver.beta().to_vec()));
        }
        path.push(point);
        if !admissible || cfg.max_support.is_some_and(|m| df >= m) {
            break;
        }
        let since_best = best.as_ref().map_or(0, |(_, at, _)| path.len() - 1 - at);
        if cfg.bic_patience.is_some_and(|k| since_best >= k) {
            break;
        }
        if cfg.early_stop && null_rss > 0.0 && i >= 5 {
            let explained = 1.0 - rss / null_rss;
            let gain = (prev_rss - rss) / null_rss;
            if explained > 0.999 || gain < 1e-5 * explained.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        prev_rss = rss;
    }
    let (_, selected, beta) = best.expect("the first grid point has an empty support");
    Ok(PathFit {
        path,
        selected,
        beta,
    })
}

/// Lasso fit mapped back to the original units of one design.
#[derive(Debug, Clone, PartialEq)]
pub struct OriginalScaleFit {
    /// `(column, coefficient, column mean)` for every nonzero coefficient.
    pub coefficients: Vec<(usize, f64, f64)>,
    pub y_mean: f64,
    pub lambda: f64,
    pub df: usize,
    pub residuals: Vec<f64>,
    pub sigma2: f64,
}

impl OriginalScaleFit {
    pub fn intercept(&self) -> f64 {
        self.y_mean - self.coefficients.iter().map(|(_, b, m)| b * m).sum::<f64>()
    }

    /// Prediction for one row of original-scale regressors.
    pub fn predict_row(&self, row: impl Fn(usize) -> f64) -> f64 {
        self.y_mean
            + self
                .coefficients
                .iter()
                .map(|&(j, b, m)| b * (row(j) - m))
                .sum::<f64>()
    }
}

pub fn destandardize(s: &Standardized, fit: &PathFit) -> OriginalScaleFit {
    let coefficients: Vec<(usize, f64, f64)> = fit
        .beta
        .iter()
        .enumerate()
        .filter(|(_, b)| **b != 0.0)
        .map(|(j, b)| (j, b * s.y_scale / s.col_scales[j], s.col_means[j]))
        .collect();
    let scaled_fit = s.x.mul_vec(&fit.beta);
    let residuals: Vec<f64> =
        s.y.iter()
            .zip(&scaled_fit)
            .map(|(y, f)| (y - f) * s.y_scale)
            .collect();
    let n = residuals.len() as f64;
    let sigma2 = residuals.iter().map(|e| e * e).sum::<f64>() / n;
    OriginalScaleFit {
        coefficients,
        y_mean: s.y_mean,
        lambda: fit.lambda(),
        df: fit.path[fit.selected].df,
        residuals,
        sigma2,
    }
}

/// Standardized BIC-lasso on a raw design. Constant targets skip estimation.
pub fn fit_bic_lasso(s: &Standardized, cfg: &LassoConfig) -> Result<OriginalScaleFit> {
    if s.y_constant {
        return Ok(OriginalScaleFit {
            coefficients: Vec::new(),
            y_mean: s.y_mean,
            lambda: f64::INFINITY,
            df: 0,
            residuals: vec![0.0; s.y.len()],
            sigma2: 0.0,
        });
    }
    let path = lasso_path(&s.x, &s.y, cfg)?;
    Ok(destandardize(s, &path))
}
