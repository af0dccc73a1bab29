//! Gaussian mean width of `ρB₁ ∩ rB₂` and the fixed-point radii it controls.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Error, Result};

/// `sup { <g, v> : ‖v‖₁ ≤ ρ, ‖v‖₂ ≤ r }`, computed exactly.
///
/// The support function of the intersection is the infimal convolution of
/// the two support functions, `min_{τ ≥ 0} ρτ + r‖S_τ(g)‖₂` with `S_τ` the
/// soft-threshold. The objective is convex and, between consecutive sorted
/// magnitudes, its stationarity condition is a quadratic in `τ`; the minimum
/// is taken over all breakpoints and admissible roots.
pub fn l1_l2_support(g: &[f64], rho: f64, r: f64) -> f64 {
    let mut a: Vec<f64> = g.iter().map(|x| x.abs()).collect();
    a.sort_unstable_by(|x, y| y.total_cmp(x));
    let d = a.len();
    if d == 0 || a[0] == 0.0 {
        return 0.0;
    }

    let objective = |tau: f64| -> f64 {
        let tail: f64 = a
            .iter()
            .take_while(|&&x| x > tau)
            .map(|x| (x - tau) * (x - tau))
            .sum();
        rho * tau + r * tail.sqrt()
    };

    let mut best = objective(0.0).min(rho * a[0]);
    let c2 = (rho / r) * (rho / r);
    let (mut s1, mut s2) = (0.0, 0.0);
    for k in 1..=d {
        s1 += a[k - 1];
        s2 += a[k - 1] * a[k - 1];
        let hi = a[k - 1];
        let lo = if k < d { a[k] } else { 0.0 };
        best = best.min(objective(lo));
        // ρ‖S‖₂ = r‖S‖₁ on this segment, with k active entries:
        // (s1 - kτ)² = c²(s2 - 2τ s1 + kτ²)
        let kf = k as f64;
        let qa = kf * kf - c2 * kf;
        let qb = -2.0 * kf * s1 + 2.0 * c2 * s1;
        let qc = s1 * s1 - c2 * s2;
        for tau in quadratic_roots(qa, qb, qc) {
            if tau >= lo && tau <= hi {
                best = best.min(objective(tau));
            }
        }
    }
    best
}

fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    if a.abs() < 1e-14 * (b.abs() + c.abs()).max(1.0) {
        if b.abs() < f64::MIN_POSITIVE {
            return vec![];
        }
        return vec![-c / b];
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return vec![];
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    let mut roots = vec![q / a];
    if q != 0.0 {
        roots.push(c / q);
    }
    roots
}

/// Monte-Carlo estimate of `E sup_{v ∈ ρB₁ ∩ rB₂} <g, v>`.
pub fn gaussian_mean_width_mc(d: usize, rho: f64, r: f64, samples: usize, seed: u64) -> Result<f64> {
    if !(rho > 0.0 && r > 0.0) || samples == 0 || d == 0 {
        return invalid("mean width needs rho, r > 0, d >= 1 and samples >= 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = vec![0.0; d];
    let mut total = 0.0;
    for _ in 0..samples {
        for x in g.iter_mut() {
            *x = StandardNormal.sample(&mut rng);
        }
        total += l1_l2_support(&g, rho, r);
    }
    Ok(total / samples as f64)
}

/// Closed-form upper estimate of the mean width (absolute constant 1):
/// `min(ρ, r√k) √log(ed/k)` with `k = (ρ/r)²` clamped to `[1, d]`.
///
/// It reduces to `r√d` when `rB₂ ⊂ ρB₁` and to `ρ√log(ed)` when `ρ ≤ r`.
pub fn mean_width_bound(rho: f64, r: f64, d: usize) -> f64 {
    let df = d as f64;
    let k = ((rho / r) * (rho / r)).clamp(1.0, df);
    rho.min(r * k.sqrt()) * (1.0 + (df / k).ln()).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FixedPointKind {
    /// `ℓ*(V) ≤ κ√N r`
    Quadratic,
    /// `σ ℓ*(V) ≤ κ√N r²`
    Multiplier,
}

/// Smallest `r` in `[1e-12, ρ√d]` satisfying the chosen fixed-point inequality,
/// located by bisection in log scale to relative tolerance `1e-6`.
pub fn fixed_point_radius(
    rho: f64,
    d: usize,
    n: usize,
    sigma: f64,
    kappa: f64,
    kind: FixedPointKind,
) -> Result<f64> {
    if !(rho > 0.0 && sigma > 0.0 && kappa > 0.0) || d == 0 || n == 0 {
        return invalid("fixed point needs positive rho, sigma, kappa, d and N");
    }
    let root_n = (n as f64).sqrt();
    let holds = |r: f64| match kind {
        FixedPointKind::Quadratic => mean_width_bound(rho, r, d) <= kappa * root_n * r,
        FixedPointKind::Multiplier => sigma * mean_width_bound(rho, r, d) <= kappa * root_n * r * r,
    };
    let mut lo = 1e-12;
    let mut hi = rho * (d as f64).sqrt();
    if hi < lo {
        hi = lo;
    }
    if !holds(hi) {
        return Err(Error::NumericFailure(format!(
            "{kind:?} fixed point has no crossing on [{lo:e}, {hi:e}] (rho = {rho}, d = {d}, N = {n}, sigma = {sigma}, kappa = {kappa})"
        )));
    }
    if holds(lo) {
        return Ok(lo);
    }
    while hi / lo - 1.0 > 1e-6 {
        let mid = (lo * hi).sqrt();
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
