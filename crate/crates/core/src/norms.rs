//! Regularization norms and the sparsity hierarchy they induce.

use crate::error::{invalid, Result};

/// Regularization norm: plain ℓ₁ or the sorted-ℓ₁ (SLOPE) norm
/// `Σ β_i z*_i` with non-increasing positive weights.
#[derive(Clone, Debug, PartialEq)]
pub enum RegNorm {
    L1,
    SortedL1 { weights: Vec<f64> },
}

impl RegNorm {
    pub fn sorted_l1(weights: Vec<f64>) -> Result<Self> {
        check_weights(&weights)?;
        Ok(RegNorm::SortedL1 { weights })
    }

    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        if let RegNorm::SortedL1 { weights } = self {
            if weights.len() != z.len() {
                return invalid(format!(
                    "vector of length {} for a sorted-l1 norm of dimension {}",
                    z.len(),
                    weights.len()
                ));
            }
        }
        Ok(self.value(z))
    }

    /// Like [`RegNorm::eval`] but assumes the dimension was already checked.
    pub(crate) fn value(&self, z: &[f64]) -> f64 {
        match self {
            RegNorm::L1 => z.iter().map(|x| x.abs()).sum(),
            RegNorm::SortedL1 { weights } => {
                debug_assert_eq!(weights.len(), z.len());
                let mags = sorted_magnitudes(z);
                weights.iter().zip(&mags).map(|(b, m)| b * m).sum()
            }
        }
    }

    /// Norm of `a - b`.
    pub(crate) fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.value(&diff)
    }
}

pub fn norm_eval(norm: &RegNorm, z: &[f64]) -> Result<f64> {
    norm.eval(z)
}

pub(crate) fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return invalid("sorted-l1 weights must be finite and positive");
    }
    if weights.windows(2).any(|w| w[1] > w[0]) {
        return invalid("sorted-l1 weights must be non-increasing");
    }
    Ok(())
}

/// Magnitudes of `z` in non-increasing order.
pub(crate) fn sorted_magnitudes(z: &[f64]) -> Vec<f64> {
    let mut mags: Vec<f64> = z.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    mags
}

/// SLOPE weights `β_i = c0 * sqrt(log(e d / i))`.
pub fn slope_weights(d: usize, c0: f64) -> Vec<f64> {
    (1..=d)
        .map(|i| c0 * (1.0 + (d as f64 / i as f64).ln()).sqrt())
        .collect()
}

/// Indices of the `s` largest-magnitude entries, ties broken by lower index.
pub(crate) fn top_indices(z: &[f64], s: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..z.len()).collect();
    idx.sort_by(|&i, &j| z[j].abs().total_cmp(&z[i].abs()).then(i.cmp(&j)));
    idx.truncate(s.min(z.len()));
    idx
}

/// Norm of the residual left after hard-thresholding `z` to its `s` largest entries.
pub fn best_sparse_residual(norm: &RegNorm, z: &[f64], s: usize) -> Result<f64> {
    if let RegNorm::SortedL1 { weights } = norm {
        if weights.len() != z.len() {
            return invalid("dimension mismatch");
        }
    }
    if s >= z.len() {
        return Ok(0.0);
    }
    let mut tail = z.to_vec();
    for i in top_indices(z, s) {
        tail[i] = 0.0;
    }
    Ok(norm.value(&tail))
}

/// Number of hierarchy levels for ambient dimension `d`: `⌈log₂ d⌉ + 1`.
pub fn level_count(d: usize) -> usize {
    assert!(d >= 1);
    (usize::BITS - (d - 1).leading_zeros()) as usize + 1
}

/// Sparsity budget `⌈d / 2^{ℓ-1}⌉` of level `ℓ` (1-based).
pub fn level_sparsity(d: usize, level: usize) -> usize {
    assert!(level >= 1);
    let denom = 1usize.checked_shl(level as u32 - 1).unwrap_or(usize::MAX);
    d.div_ceil(denom).max(1)
}

/// Nested classes of vectors within `ρ_ℓ` (in the regularization norm) of an
/// `s_ℓ`-sparse vector.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsityHierarchy {
    d: usize,
    sparsity: Vec<usize>,
    radius: Vec<f64>,
}

impl SparsityHierarchy {
    /// `radii[ℓ-1]` is `ρ_ℓ`; `f64::INFINITY` marks a level with no constraint.
    pub fn new(d: usize, radii: Vec<f64>) -> Result<Self> {
        if d == 0 || radii.is_empty() {
            return invalid("hierarchy needs d >= 1 and at least one level");
        }
        if radii.len() > level_count(d) {
            return invalid(format!(
                "{} levels requested but dimension {d} supports {}",
                radii.len(),
                level_count(d)
            ));
        }
        if radii.iter().any(|r| r.is_nan() || *r < 0.0) {
            return invalid("hierarchy radii must be non-negative");
        }
        let finite: Vec<f64> = radii.iter().copied().filter(|r| r.is_finite()).collect();
        if finite.windows(2).any(|w| w[1] > w[0]) {
            return invalid("finite hierarchy radii must be non-increasing");
        }
        let sparsity = (1..=radii.len()).map(|l| level_sparsity(d, l)).collect();
        Ok(Self {
            d,
            sparsity,
            radius: radii,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn levels(&self) -> usize {
        self.radius.len()
    }

    pub fn sparsity(&self, level: usize) -> usize {
        self.sparsity[level - 1]
    }

    pub fn radius(&self, level: usize) -> f64 {
        self.radius[level - 1]
    }

    pub fn contains(&self, norm: &RegNorm, t: &[f64], level: usize) -> Result<bool> {
        if level < 1 || level > self.levels() {
            return invalid(format!("level {level} outside 1..={}", self.levels()));
        }
        if t.len() != self.d {
            return invalid("vector dimension does not match hierarchy");
        }
        let rho = self.radius(level);
        if rho.is_infinite() {
            return Ok(true);
        }
        Ok(best_sparse_residual(norm, t, self.sparsity(level))? <= rho)
    }
}

pub fn hierarchy_membership(
    h: &SparsityHierarchy,
    norm: &RegNorm,
    t: &[f64],
    level: usize,
) -> Result<bool> {
    h.contains(norm, t, level)
}

/// Sufficient condition for the penalty to separate the sphere `Ψ(t - t*) = ρ`
/// from `t*` when `t*` is `s`-sparse: `√s ≤ c ρ/r` for ℓ₁ and
/// `Σ_{i≤s} β_i/√i ≤ c ρ/r` for sorted-ℓ₁.
pub fn delta_condition(norm: &RegNorm, s: usize, rho: f64, r: f64, c_delta: f64) -> Result<bool> {
    if !(rho > 0.0 && r > 0.0) {
        return invalid("delta condition needs positive rho and r");
    }
    let ratio = c_delta * rho / r;
    let lhs = match norm {
        RegNorm::L1 => (s as f64).sqrt(),
        RegNorm::SortedL1 { weights } => weights
            .iter()
            .take(s)
            .enumerate()
            .map(|(i, b)| b / ((i + 1) as f64).sqrt())
            .sum(),
    };
    Ok(lhs <= ratio)
}
