//! Per-level tournament parameters for the LASSO and SLOPE hierarchies.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::norms::{level_count, level_sparsity, slope_weights, RegNorm};

/// Which regularizer the tournament is built around.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    Lasso,
    /// Sorted-ℓ₁ with weights `c0 * sqrt(log(e d / i))`.
    Slope { c0: f64 },
}

impl Penalty {
    pub fn norm(&self, d: usize) -> RegNorm {
        match *self {
            Penalty::Lasso => RegNorm::L1,
            Penalty::Slope { c0 } => RegNorm::SortedL1 {
                weights: slope_weights(d, c0),
            },
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Penalty::Lasso => "lasso",
            Penalty::Slope { .. } => "slope",
        }
    }
}

/// Tuning constants of the procedure. None of them is pinned down by the
/// theory beyond its admissible range, so all of them are configurable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcedureConstants {
    /// L4/L2 norm-equivalence constant of the class.
    pub l_equiv: f64,
    /// Noise scale; sets both the radii and the elimination block count.
    pub sigma4: f64,
    /// Lower distortion of the distance oracle, `0 < alpha < 1`.
    pub alpha: f64,
    /// Upper distortion of the distance oracle, `beta > 1`.
    pub beta: f64,
    /// Block size of the distance-oracle partition.
    pub m1: usize,
    /// Elimination block-count constant, `0 < theta1 <= 1`.
    pub theta1: f64,
    /// Penalty constant: `lambda = theta2 * r_hat^2 / rho`.
    pub theta2: f64,
    /// Small-ball constant `C` bounding the admissible `theta2` window `[C/2, 3C/4]`.
    pub c_quad: f64,
    pub kappa: f64,
    pub eta: f64,
    /// Multiplies the champions-league margin `(2 (beta/alpha) r_hat)^2 / 10`.
    pub c_cl: f64,
    pub c_delta: f64,
    /// A level is active only while `s < c_active * N / max(1, log(e d / N))`.
    pub c_active: f64,
    /// Constant in front of `r_l`.
    pub c_rate: f64,
    /// Constant in front of `rho_l`.
    pub c_rho: f64,
    /// `r_hat_l = max(r_hat_factor * r_l, override)`.
    pub r_hat_factor: f64,
    /// Forces the elimination/champions block count at every level.
    pub n2_override: Option<usize>,
}

impl Default for ProcedureConstants {
    fn default() -> Self {
        Self {
            l_equiv: 1.0,
            sigma4: 1.0,
            alpha: 0.5,
            beta: 2.0,
            m1: 5,
            theta1: 0.25,
            theta2: 0.5,
            c_quad: 1.0,
            kappa: 1.0,
            eta: 1.0,
            c_cl: 1.0,
            c_delta: 0.5,
            c_active: 1.0,
            c_rate: 1.0,
            c_rho: 1.0,
            r_hat_factor: 1.0,
            n2_override: None,
        }
    }
}

impl ProcedureConstants {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("l_equiv", self.l_equiv),
            ("sigma4", self.sigma4),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("theta1", self.theta1),
            ("theta2", self.theta2),
            ("c_quad", self.c_quad),
            ("kappa", self.kappa),
            ("eta", self.eta),
            ("c_cl", self.c_cl),
            ("c_delta", self.c_delta),
            ("c_active", self.c_active),
            ("c_rate", self.c_rate),
            ("c_rho", self.c_rho),
            ("r_hat_factor", self.r_hat_factor),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return invalid(format!("constant {name} must be finite and positive, got {v}"));
            }
        }
        if self.m1 == 0 {
            return invalid("m1 must be at least 1");
        }
        if !(self.alpha < 1.0 && self.beta > 1.0) {
            return invalid("distance oracle constants need alpha < 1 < beta");
        }
        if self.theta1 > 1.0 {
            return invalid("theta1 must not exceed 1");
        }
        let (lo, hi) = self.lambda_window();
        if self.theta2 < lo || self.theta2 > hi {
            return invalid(format!(
                "theta2 = {} lies outside the admissible window [{lo}, {hi}] for c_quad = {}",
                self.theta2, self.c_quad
            ));
        }
        if self.n2_override == Some(0) {
            return invalid("n2_override must be at least 1");
        }
        Ok(())
    }

    /// Admissible range `[C/2, 3C/4]` for `lambda * rho / r_hat^2`.
    pub fn lambda_window(&self) -> (f64, f64) {
        (self.c_quad / 2.0, 0.75 * self.c_quad)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelParams {
    pub level: usize,
    pub sparsity: usize,
    pub rho: f64,
    pub r_star: f64,
    pub r_hat: f64,
    /// Distance-oracle threshold `beta * r_hat`.
    pub r1: f64,
    /// Champions-league radius; the match threshold is `-r3^2`.
    pub r3: f64,
    pub lambda: f64,
    pub n1: usize,
    pub n2: usize,
    pub m2: usize,
    pub active: bool,
}

impl LevelParams {
    pub fn r3_sq(&self) -> f64 {
        self.r3 * self.r3
    }

    /// Recomputes every quantity that depends on `r_hat`. `n` is the fold size.
    pub fn set_r_hat(&mut self, consts: &ProcedureConstants, r_hat: f64, n: usize) {
        let sigma = consts.sigma4;
        self.r_hat = r_hat;
        self.r1 = consts.beta * r_hat;
        self.r3 = champions_margin(consts, r_hat).sqrt();
        self.lambda = consts.theta2 * r_hat * r_hat / self.rho;
        self.n2 = match consts.n2_override {
            Some(b) => b.min(n),
            None => {
                let ratio = (r_hat * r_hat / (sigma * sigma)).min(1.0);
                ((consts.theta1 * n as f64 * ratio).round() as usize).clamp(1, n)
            }
        };
        self.m2 = n / self.n2;
    }
}

/// `ln(e d / s)`.
fn log_ratio(d: usize, s: usize) -> f64 {
    1.0 + (d as f64 / s as f64).ln()
}

fn level_params(
    penalty: Penalty,
    consts: &ProcedureConstants,
    d: usize,
    n: usize,
    level: usize,
    r_hat_override: Option<f64>,
) -> Result<LevelParams> {
    consts.validate()?;
    if d == 0 || n == 0 {
        return invalid("d and N must be at least 1");
    }
    let k = level_count(d);
    if level < 1 || level > k {
        return invalid(format!("level {level} outside 1..={k}"));
    }
    let s = level_sparsity(d, level);
    let n1 = (n / consts.m1).max(1);

    // log(ed/N) drops below 1 once N > d; the floor keeps the threshold positive.
    let threshold = consts.c_active * n as f64 / log_ratio(d, n).max(1.0);
    if s as f64 >= threshold {
        return Ok(LevelParams {
            level,
            sparsity: s,
            rho: f64::INFINITY,
            r_star: f64::INFINITY,
            r_hat: f64::INFINITY,
            r1: f64::INFINITY,
            r3: f64::INFINITY,
            lambda: 0.0,
            n1,
            n2: 1,
            m2: n,
            active: false,
        });
    }

    let nf = n as f64;
    let sf = s as f64;
    let lr = log_ratio(d, s);
    let sigma = consts.sigma4;
    let r_star = consts.c_rate * sigma * (sf / nf * lr).sqrt();
    let rho = match penalty {
        Penalty::Lasso => consts.c_rho * sigma * sf / nf.sqrt() * lr.sqrt(),
        Penalty::Slope { .. } => consts.c_rho * sigma * sf / nf.sqrt() * lr,
    };
    let r_hat = (consts.r_hat_factor * r_star).max(r_hat_override.unwrap_or(0.0));
    let mut p = LevelParams {
        level,
        sparsity: s,
        rho,
        r_star,
        r_hat,
        r1: 0.0,
        r3: 0.0,
        lambda: 0.0,
        n1,
        n2: 1,
        m2: n,
        active: true,
    };
    p.set_r_hat(consts, r_hat, n);
    Ok(p)
}

pub fn lasso_level_params(
    consts: &ProcedureConstants,
    d: usize,
    n: usize,
    level: usize,
    r_hat_override: Option<f64>,
) -> Result<LevelParams> {
    level_params(Penalty::Lasso, consts, d, n, level, r_hat_override)
}

pub fn slope_level_params(
    consts: &ProcedureConstants,
    d: usize,
    n: usize,
    level: usize,
    r_hat_override: Option<f64>,
) -> Result<LevelParams> {
    level_params(Penalty::Slope { c0: 1.0 }, consts, d, n, level, r_hat_override)
}

/// Parameters for every level `1..=⌈log₂ d⌉ + 1`.
pub fn all_level_params(
    penalty: Penalty,
    consts: &ProcedureConstants,
    d: usize,
    n: usize,
    r_hat_override: Option<f64>,
) -> Result<Vec<LevelParams>> {
    (1..=level_count(d))
        .map(|l| level_params(penalty, consts, d, n, l, r_hat_override))
        .collect()
}

/// Squared champions-league threshold `(2 c_cl (beta/alpha) r_hat)^2 / 10`.
pub fn champions_margin(consts: &ProcedureConstants, r_hat: f64) -> f64 {
    let c = consts.c_cl * consts.beta / consts.alpha;
    let x = 2.0 * c * r_hat;
    x * x / 10.0
}

/// Halving grid `r0, r0/2, …, r0/2^{depth-1}`.
pub fn radius_grid(r0: f64, depth: usize) -> Result<Vec<f64>> {
    if !(r0 > 0.0) || depth == 0 {
        return invalid("radius grid needs r0 > 0 and depth >= 1");
    }
    Ok((0..depth).map(|j| r0 / f64::powi(2.0, j as i32)).collect())
}
