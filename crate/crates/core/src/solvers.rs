//! Penalized least-squares solvers and the candidate pool built from them.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::child_seed;
use crate::error::{invalid, Result};
use crate::norms::{check_weights, slope_weights};
use crate::params::Penalty;
use crate::tournament::{Candidate, Fold};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop once no coordinate moves by more than this.
    pub tol: f64,
    /// Strictly decreasing penalty levels.
    pub lambda_grid: Vec<f64>,
    pub subsample_count: usize,
    pub subsample_fraction: f64,
    /// Candidates within this `ℓ₂` distance of an earlier one are dropped.
    pub dedup_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-10,
            lambda_grid: vec![0.4, 0.2, 0.1, 0.05, 0.025],
            subsample_count: 2,
            subsample_fraction: 0.8,
            dedup_tol: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return invalid("solver tolerance must be positive");
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be at least 1");
        }
        if self.lambda_grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return invalid("lambda grid entries must be finite and positive");
        }
        if self.lambda_grid.windows(2).any(|w| w[0] <= w[1]) {
            return invalid("lambda grid must be strictly decreasing");
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return invalid("subsample fraction must lie in (0, 1]");
        }
        if !(self.dedup_tol >= 0.0) {
            return invalid("dedup tolerance must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Fit {
    pub coef: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest violation of the optimality conditions.
    pub kkt_residual: f64,
    /// Objective value after each iteration (proximal gradient only).
    pub objective_trace: Vec<f64>,
}

/// `XᵀX/N` and `XᵀY/N`.
struct Moments {
    gram: Array2<f64>,
    xty: Array1<f64>,
    yy: f64,
}

impl Moments {
    fn new(x: ArrayView2<f64>, y: &[f64]) -> Result<Self> {
        let n = x.nrows();
        if n == 0 || x.ncols() == 0 {
            return invalid("solvers need N, d >= 1");
        }
        if n != y.len() {
            return invalid("design and response lengths differ");
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return invalid("non-finite entries in the data");
        }
        let nf = n as f64;
        let ya = Array1::from(y.to_vec());
        Ok(Self {
            gram: x.t().dot(&x) / nf,
            xty: x.t().dot(&ya) / nf,
            yy: ya.dot(&ya) / nf,
        })
    }

    /// `(1/N)‖Xt - Y‖²`.
    fn loss(&self, t: &Array1<f64>) -> f64 {
        t.dot(&self.gram.dot(t)) - 2.0 * t.dot(&self.xty) + self.yy
    }

    /// Gradient of the loss: `2(Gt - b)`.
    fn grad(&self, t: &Array1<f64>) -> Array1<f64> {
        (self.gram.dot(t) - &self.xty) * 2.0
    }
}

fn soft(x: f64, thr: f64) -> f64 {
    if x > thr {
        x - thr
    } else if x < -thr {
        x + thr
    } else {
        0.0
    }
}

fn lasso_kkt(m: &Moments, t: &Array1<f64>, lambda: f64) -> f64 {
    let g = m.grad(t);
    g.iter()
        .zip(t)
        .map(|(&gj, &tj)| {
            if tj != 0.0 {
                (gj + lambda * tj.signum()).abs()
            } else {
                (gj.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

fn lasso_from_moments(m: &Moments, lambda: f64, warm: Option<&[f64]>, config: &SolverConfig) -> Fit {
    let d = m.xty.len();
    let mut t = match warm {
        Some(w) => Array1::from(w.to_vec()),
        None => Array1::zeros(d),
    };
    // c = b - G t, kept current as coordinates move
    let mut c = &m.xty - &m.gram.dot(&t);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        iterations += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..d {
            let gjj = m.gram[[j, j]];
            let old = t[j];
            let new = if gjj > 0.0 {
                soft(c[j] + gjj * old, lambda / 2.0) / gjj
            } else {
                0.0
            };
            let delta = new - old;
            if delta != 0.0 {
                t[j] = new;
                c.scaled_add(-delta, &m.gram.column(j));
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < config.tol {
            converged = true;
            break;
        }
    }
    Fit {
        kkt_residual: lasso_kkt(m, &t, lambda),
        coef: t.to_vec(),
        iterations,
        converged,
        objective_trace: Vec::new(),
    }
}

/// Cyclic coordinate descent on `(1/N)‖Xt - Y‖² + λ‖t‖₁`.
pub fn lasso_cd(x: ArrayView2<f64>, y: &[f64], lambda: f64, config: &SolverConfig) -> Result<Fit> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return invalid(format!("lambda must be finite and non-negative, got {lambda}"));
    }
    let m = Moments::new(x, y)?;
    Ok(lasso_from_moments(&m, lambda, None, config))
}

/// LASSO fits along a decreasing grid, each warm-started from the previous one.
pub fn lasso_path(x: ArrayView2<f64>, y: &[f64], grid: &[f64], config: &SolverConfig) -> Result<Vec<Fit>> {
    let m = Moments::new(x, y)?;
    let mut fits: Vec<Fit> = Vec::with_capacity(grid.len());
    for &lambda in grid {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return invalid(format!("lambda must be finite and non-negative, got {lambda}"));
        }
        let warm = fits.last().map(|f| f.coef.as_slice());
        fits.push(lasso_from_moments(&m, lambda, warm, config));
    }
    Ok(fits)
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
fn cholesky(a: &Array2<f64>) -> Option<Array2<f64>> {
    let d = a.nrows();
    let mut l = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 1e-12 * a[[i, i]].abs().max(1e-300) {
                    return None;
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Ordinary least squares through the normal equations.
pub fn least_squares(x: ArrayView2<f64>, y: &[f64]) -> Result<Vec<f64>> {
    let m = Moments::new(x, y)?;
    let Some(l) = cholesky(&m.gram) else {
        return invalid("design is rank deficient; least squares is not unique");
    };
    let d = l.nrows();
    let mut z = vec![0.0; d];
    for i in 0..d {
        let s: f64 = (0..i).map(|k| l[[i, k]] * z[k]).sum();
        z[i] = (m.xty[i] - s) / l[[i, i]];
    }
    let mut t = vec![0.0; d];
    for i in (0..d).rev() {
        let s: f64 = (i + 1..d).map(|k| l[[k, i]] * t[k]).sum();
        t[i] = (z[i] - s) / l[[i, i]];
    }
    Ok(t)
}

/// `argmin_v ½‖v - z‖² + step · Σ β_i |v|*_i`.
///
/// Magnitudes are sorted, shifted by the weights, projected onto the
/// non-increasing cone by pooling adjacent violators on a stack, clipped at
/// zero and put back in place with the original signs.
pub fn sorted_l1_prox(z: &[f64], weights: &[f64], step: f64) -> Result<Vec<f64>> {
    if weights.len() != z.len() {
        return invalid(format!("{} weights for a vector of length {}", weights.len(), z.len()));
    }
    check_weights(weights)?;
    if !(step >= 0.0 && step.is_finite()) {
        return invalid("prox step must be finite and non-negative");
    }
    let d = z.len();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| z[b].abs().total_cmp(&z[a].abs()).then(a.cmp(&b)));

    // blocks of (start, len, sum)
    let mut stack: Vec<(usize, usize, f64)> = Vec::with_capacity(d);
    for (k, &i) in order.iter().enumerate() {
        let mut block = (k, 1, z[i].abs() - step * weights[k]);
        while let Some(&(start, len, sum)) = stack.last() {
            if sum / len as f64 > block.2 / block.1 as f64 {
                break;
            }
            stack.pop();
            block = (start, len + block.1, sum + block.2);
        }
        stack.push(block);
    }
    let mut out = vec![0.0; d];
    for (start, len, sum) in stack {
        let v = (sum / len as f64).max(0.0);
        for &i in &order[start..start + len] {
            out[i] = v * z[i].signum();
        }
    }
    Ok(out)
}

fn sorted_l1_value(t: &Array1<f64>, weights: &[f64]) -> f64 {
    let mut a: Vec<f64> = t.iter().map(|v| v.abs()).collect();
    a.sort_unstable_by(|x, y| y.total_cmp(x));
    a.iter().zip(weights).map(|(a, w)| a * w).sum()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepRule {
    /// Start from `1 / initial_lipschitz` and shrink by `shrink` until the
    /// quadratic upper bound holds.
    Backtracking { initial_lipschitz: f64, shrink: f64 },
    /// Constant step `1/L` with `L` the largest eigenvalue of `2XᵀX/N`,
    /// found by power iteration.
    Lipschitz,
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Backtracking {
            initial_lipschitz: 1.0,
            shrink: 0.5,
        }
    }
}

fn power_lipschitz(gram: &Array2<f64>) -> f64 {
    let d = gram.nrows();
    let mut v = Array1::from_elem(d, 1.0 / (d as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..500 {
        let w = gram.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        let diff = (&next - &v).mapv(f64::abs).sum();
        v = next;
        est = norm;
        if diff < 1e-12 {
            break;
        }
    }
    // small safety margin on the eigenvalue estimate
    2.0 * est * (1.0 + 1e-9)
}

/// Proximal gradient on `(1/N)‖Xt - Y‖² + Σ β_i |t|*_i`.
pub fn slope_pg(x: ArrayView2<f64>, y: &[f64], weights: &[f64], step_rule: StepRule, config: &SolverConfig) -> Result<Fit> {
    let m = Moments::new(x, y)?;
    slope_from_moments(&m, weights, step_rule, None, config)
}

fn slope_from_moments(
    m: &Moments,
    weights: &[f64],
    step_rule: StepRule,
    warm: Option<&[f64]>,
    config: &SolverConfig,
) -> Result<Fit> {
    let d = m.xty.len();
    if weights.len() != d {
        return invalid(format!("{} weights for dimension {d}", weights.len()));
    }
    check_weights(weights)?;
    let (mut lip, shrink) = match step_rule {
        StepRule::Backtracking { initial_lipschitz, shrink } => {
            if !(initial_lipschitz > 0.0 && shrink > 0.0 && shrink < 1.0) {
                return invalid("backtracking needs a positive initial Lipschitz guess and shrink in (0, 1)");
            }
            (initial_lipschitz, Some(shrink))
        }
        StepRule::Lipschitz => (power_lipschitz(&m.gram).max(f64::MIN_POSITIVE), None),
    };
    let mut t = match warm {
        Some(w) => Array1::from(w.to_vec()),
        None => Array1::zeros(d),
    };
    let mut loss = m.loss(&t);
    let mut trace = vec![loss + sorted_l1_value(&t, weights)];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iters {
        iterations += 1;
        let g = m.grad(&t);
        let (next, next_loss) = loop {
            let step = 1.0 / lip;
            let z: Vec<f64> = t.iter().zip(&g).map(|(t, g)| t - step * g).collect();
            let p = Array1::from(sorted_l1_prox(&z, weights, step)?);
            let diff = &p - &t;
            let p_loss = m.loss(&p);
            let bound = loss + g.dot(&diff) + 0.5 * lip * diff.dot(&diff);
            match shrink {
                Some(s) if p_loss > bound + 1e-12 * bound.abs().max(1.0) => lip /= s,
                _ => break (p, p_loss),
            }
        };
        let change = (&next - &t).iter().fold(0.0f64, |a, v| a.max(v.abs()));
        t = next;
        loss = next_loss;
        trace.push(loss + sorted_l1_value(&t, weights));
        if change < config.tol {
            converged = true;
            break;
        }
    }
    Ok(Fit {
        kkt_residual: slope_kkt(m, &t, weights),
        coef: t.to_vec(),
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Distance from `t` to the prox of a unit gradient step, a fixed-point residual.
fn slope_kkt(m: &Moments, t: &Array1<f64>, weights: &[f64]) -> f64 {
    let g = m.grad(t);
    let z: Vec<f64> = t.iter().zip(&g).map(|(t, g)| t - g).collect();
    let p = sorted_l1_prox(&z, weights, 1.0).expect("weights already checked");
    p.iter().zip(t).fold(0.0, |a, (p, t)| a.max((p - t).abs()))
}

fn rows_subsample(n: usize, fraction: f64, seed: u64) -> Vec<usize> {
    let k = ((fraction * n as f64).round() as usize).clamp(1, n);
    if k == n {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = index::sample(&mut rng, n, k).into_vec();
    rows.sort_unstable();
    rows
}

/// Builds the tournament pool from fits on row subsamples of `fit_fold`.
///
/// Ids: 0 is the zero vector, 1 is the truth when given, fits follow from 2
/// in (subsample, λ) order. Duplicates within `dedup_tol` keep the lowest id.
pub fn build_pool(
    fit_fold: &Fold,
    penalty: Penalty,
    config: &SolverConfig,
    include_truth: Option<&[f64]>,
    seed: u64,
) -> Result<Vec<Candidate>> {
    config.validate()?;
    let d = fit_fold.dim();
    if let Some(t0) = include_truth {
        if t0.len() != d {
            return invalid("truth dimension does not match the data");
        }
    }
    let shape = match penalty {
        Penalty::Lasso => None,
        Penalty::Slope { c0 } => {
            if !(c0 > 0.0) {
                return invalid("SLOPE weight constant must be positive");
            }
            Some(slope_weights(d, c0))
        }
    };

    let fits: Vec<Vec<Candidate>> = (0..config.subsample_count)
        .into_par_iter()
        .map(|b| -> Result<Vec<Candidate>> {
            let rows = rows_subsample(fit_fold.len(), config.subsample_fraction, child_seed(seed, b as u64));
            let x = fit_fold.x.select(Axis(0), &rows);
            let y: Vec<f64> = rows.iter().map(|&i| fit_fold.y[i]).collect();
            let m = Moments::new(x.view(), &y)?;
            let mut out = Vec::with_capacity(config.lambda_grid.len());
            let mut warm: Option<Vec<f64>> = None;
            for (k, &lambda) in config.lambda_grid.iter().enumerate() {
                let fit = match &shape {
                    None => lasso_from_moments(&m, lambda, warm.as_deref(), config),
                    Some(w) => {
                        let scaled: Vec<f64> = w.iter().map(|w| w * lambda).collect();
                        slope_from_moments(&m, &scaled, StepRule::default(), warm.as_deref(), config)?
                    }
                };
                let id = 2 + (b * config.lambda_grid.len() + k) as u64;
                out.push(Candidate::new(
                    id,
                    fit.coef.clone(),
                    format!("{}:lambda={lambda}:subsample={b}", penalty.tag()),
                ));
                warm = Some(fit.coef);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut all = vec![Candidate::new(0, vec![0.0; d], "zero")];
    if let Some(t0) = include_truth {
        all.push(Candidate::new(1, t0.to_vec(), "truth"));
    }
    all.extend(fits.into_iter().flatten());
    Ok(dedup(all, config.dedup_tol))
}

/// Keeps a candidate only if it is farther than `tol` from every kept one.
pub fn dedup(candidates: Vec<Candidate>, tol: f64) -> Vec<Candidate> {
    let mut kept: Vec<Candidate> = Vec::with_capacity(candidates.len());
    for c in candidates {
        let dup = kept.iter().any(|k| {
            let d2: f64 = k.t.iter().zip(&c.t).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() <= tol
        });
        if !dup {
            kept.push(c);
        }
    }
    kept
}
