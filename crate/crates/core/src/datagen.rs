//! Synthetic sparse regression data with isotropic designs and heavy-tailed noise.

use std::io::Write;

use ndarray::Array2;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};
use crate::tournament::{Fold, ThreeFoldData};

/// Law of each (independent, unit-variance) coordinate of `X`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Design {
    Gaussian,
    Rademacher,
    /// Student-t with `nu` degrees of freedom, rescaled to unit variance.
    StudentT { nu: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Noise {
    Gaussian { sigma: f64 },
    /// Student-t with `nu` degrees of freedom, rescaled to standard deviation `sigma`.
    StudentT { nu: f64, sigma: f64 },
    /// `N(0, sigma²)`, replaced with probability `outlier_prob` by `N(0, (outlier_scale sigma)²)`.
    Contaminated {
        sigma: f64,
        outlier_prob: f64,
        outlier_scale: f64,
    },
}

impl Noise {
    /// Standard deviation of the noise.
    pub fn l2_norm(&self) -> f64 {
        match *self {
            Noise::Gaussian { sigma } | Noise::StudentT { sigma, .. } => sigma,
            Noise::Contaminated {
                sigma,
                outlier_prob,
                outlier_scale,
            } => sigma * (1.0 - outlier_prob + outlier_prob * outlier_scale * outlier_scale).sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportRule {
    /// Coordinates `0..s`.
    First,
    /// `s` coordinates drawn uniformly without replacement.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthSpec {
    pub sparsity: usize,
    pub support: SupportRule,
    /// Absolute value of every non-zero coefficient; signs are random.
    pub magnitude: f64,
    /// ℓ₁ size of a dense perturbation spread over the off-support coordinates.
    #[serde(default)]
    pub perturbation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub d: usize,
    pub n_per_fold: usize,
    pub design: Design,
    pub noise: Noise,
    pub truth: TruthSpec,
    /// Extra folds generated after the three tournament folds.
    pub extra_folds: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_per_fold == 0 {
            return invalid("scenario needs d >= 1 and N >= 1");
        }
        if self.truth.sparsity > self.d {
            return invalid(format!(
                "sparsity {} exceeds dimension {}",
                self.truth.sparsity, self.d
            ));
        }
        if !(self.truth.magnitude.is_finite() && self.truth.perturbation >= 0.0) {
            return invalid("truth magnitude must be finite and perturbation non-negative");
        }
        if let Design::StudentT { nu } = self.design {
            if !(nu > 4.0) {
                return invalid(format!("student-t design needs nu > 4, got {nu}"));
            }
        }
        match self.noise {
            Noise::Gaussian { sigma } => check_sigma(sigma)?,
            Noise::StudentT { nu, sigma } => {
                check_sigma(sigma)?;
                if !(nu > 2.0) {
                    return invalid(format!("student-t noise must be square integrable (nu > 2), got {nu}"));
                }
            }
            Noise::Contaminated {
                sigma,
                outlier_prob,
                outlier_scale,
            } => {
                check_sigma(sigma)?;
                if !(0.0..=1.0).contains(&outlier_prob) || !(outlier_scale >= 0.0) {
                    return invalid("contamination needs outlier_prob in [0, 1] and outlier_scale >= 0");
                }
            }
        }
        Ok(())
    }

    /// Short hex digest identifying the scenario (seed excluded).
    pub fn digest(&self) -> String {
        let mut spec = self.clone();
        spec.seed = 0;
        let bytes = Sha256::digest(format!("{spec:?}").as_bytes());
        bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return invalid(format!("noise sigma must be finite and non-negative, got {sigma}"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroundTruth {
    pub t0: Vec<f64>,
    pub support: Vec<usize>,
    /// `‖W‖_{L₂}`.
    pub noise_l2: f64,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub data: ThreeFoldData,
    pub extra: Vec<Fold>,
    pub truth: GroundTruth,
}

/// Child seed for trial `index` of a run seeded with `seed`: one splitmix64
/// finalization of `seed + (index + 1) * 0x9E3779B97F4A7C15`.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream 0 draws the truth; fold `k` (0-based) is drawn from stream `k + 1`.
pub fn generate(spec: &ScenarioSpec) -> Result<Dataset> {
    spec.validate()?;
    let truth = draw_truth(spec);
    let folds: Vec<Fold> = (0..3 + spec.extra_folds)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(k as u64 + 1);
            draw_fold(spec, &truth.t0, &mut rng)
        })
        .collect();
    let mut it = folds.into_iter();
    let data = ThreeFoldData::new(it.next().unwrap(), it.next().unwrap(), it.next().unwrap())?;
    Ok(Dataset {
        data,
        extra: it.collect(),
        truth,
    })
}

fn draw_truth(spec: &ScenarioSpec) -> GroundTruth {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(0);
    let d = spec.d;
    let s = spec.truth.sparsity;
    let mut support: Vec<usize> = match spec.truth.support {
        SupportRule::First => (0..s).collect(),
        SupportRule::Random => index::sample(&mut rng, d, s).into_vec(),
    };
    support.sort_unstable();
    let mut t0 = vec![0.0; d];
    for &i in &support {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        t0[i] = sign * spec.truth.magnitude;
    }
    if spec.truth.perturbation > 0.0 && s < d {
        let off: Vec<usize> = (0..d).filter(|i| !support.contains(i)).collect();
        let raw: Vec<f64> = off.iter().map(|_| StandardNormal.sample(&mut rng)).collect();
        let l1: f64 = raw.iter().map(|x: &f64| x.abs()).sum();
        if l1 > 0.0 {
            for (&i, x) in off.iter().zip(&raw) {
                t0[i] = spec.truth.perturbation * x / l1;
            }
        }
    }
    GroundTruth {
        t0,
        support,
        noise_l2: spec.noise.l2_norm(),
    }
}

fn draw_fold(spec: &ScenarioSpec, t0: &[f64], rng: &mut ChaCha8Rng) -> Fold {
    let (n, d) = (spec.n_per_fold, spec.d);
    let design_t = match spec.design {
        Design::StudentT { nu } => Some((StudentT::new(nu).unwrap(), ((nu - 2.0) / nu).sqrt())),
        _ => None,
    };
    let mut x = Array2::<f64>::zeros((n, d));
    for v in x.iter_mut() {
        *v = match spec.design {
            Design::Gaussian => StandardNormal.sample(rng),
            Design::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Design::StudentT { .. } => {
                let (dist, scale) = design_t.as_ref().unwrap();
                scale * dist.sample(rng)
            }
        };
    }
    let noise_t = match spec.noise {
        Noise::StudentT { nu, sigma } => Some((StudentT::new(nu).unwrap(), sigma * ((nu - 2.0) / nu).sqrt())),
        _ => None,
    };
    let y = x
        .rows()
        .into_iter()
        .map(|row| {
            let signal: f64 = row.iter().zip(t0).map(|(a, b)| a * b).sum();
            let w = match spec.noise {
                Noise::Gaussian { sigma } => sigma * Distribution::<f64>::sample(&StandardNormal, rng),
                Noise::StudentT { .. } => {
                    let (dist, scale) = noise_t.as_ref().unwrap();
                    scale * dist.sample(rng)
                }
                Noise::Contaminated {
                    sigma,
                    outlier_prob,
                    outlier_scale,
                } => {
                    let g: f64 = StandardNormal.sample(rng);
                    if rng.random::<f64>() < outlier_prob {
                        outlier_scale * sigma * g
                    } else {
                        sigma * g
                    }
                }
            };
            signal + w
        })
        .collect();
    Fold::new(x, y).expect("generated fold is consistent")
}

/// Empirical `L₄/L₂` ratio `(mean x⁴)^{1/4} / (mean x²)^{1/2}`.
pub fn moment_ratio_check(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return invalid("moment ratio needs at least two samples");
    }
    let n = samples.len() as f64;
    let m2 = samples.iter().map(|x| x * x).sum::<f64>() / n;
    if m2 == 0.0 {
        return invalid("moment ratio of an all-zero sample");
    }
    let m4 = samples.iter().map(|x| x.powi(4)).sum::<f64>() / n;
    Ok(m4.powf(0.25) / m2.sqrt())
}

/// Writes `# d=..,N=..,seed=..,digest=..` followed by one `y,x_1,…,x_d` row per
/// sample, folds in order.
pub fn write_dataset<W: Write>(mut out: W, spec: &ScenarioSpec, data: &Dataset) -> Result<()> {
    writeln!(
        out,
        "# d={},N={},seed={},digest={}",
        spec.d,
        spec.n_per_fold,
        spec.seed,
        spec.digest()
    )?;
    let folds = data.data.folds().into_iter().chain(data.extra.iter());
    for fold in folds {
        for (row, y) in fold.x.rows().into_iter().zip(&fold.y) {
            write!(out, "{y}")?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spec(d: usize, n: usize, noise: Noise) -> ScenarioSpec {
        ScenarioSpec {
            d,
            n_per_fold: n,
            design: Design::Gaussian,
            noise,
            truth: TruthSpec {
                sparsity: 3.min(d),
                support: SupportRule::Random,
                magnitude: 1.0,
                perturbation: 0.0,
            },
            extra_folds: 0,
            seed: 11,
        }
    }

    #[test]
    fn noiseless_responses_are_exact() {
        let ds = generate(&spec(10, 50, Noise::Gaussian { sigma: 0.0 })).unwrap();
        for fold in ds.data.folds() {
            for (row, y) in fold.x.rows().into_iter().zip(&fold.y) {
                let s: f64 = row.iter().zip(&ds.truth.t0).map(|(a, b)| a * b).sum();
                assert_eq!(*y, s);
            }
        }
    }

    #[test]
    fn truth_sparsity_and_perturbation() {
        let mut sp = spec(20, 5, Noise::Gaussian { sigma: 1.0 });
        sp.truth.sparsity = 4;
        let ds = generate(&sp).unwrap();
        assert_eq!(ds.truth.t0.iter().filter(|v| **v != 0.0).count(), 4);
        assert_eq!(ds.truth.support.len(), 4);
        sp.truth.perturbation = 0.3;
        let ds2 = generate(&sp).unwrap();
        let off: f64 = (0..20)
            .filter(|i| !ds2.truth.support.contains(i))
            .map(|i| ds2.truth.t0[i].abs())
            .sum();
        assert!((off - 0.3).abs() < 1e-12);
        assert_eq!(ds.truth.support, ds2.truth.support);
    }

    #[test]
    fn same_seed_same_data_and_disjoint_folds() {
        let sp = spec(6, 40, Noise::StudentT { nu: 3.0, sigma: 1.0 });
        let a = generate(&sp).unwrap();
        let b = generate(&sp).unwrap();
        for (fa, fb) in a.data.folds().into_iter().zip(b.data.folds()) {
            assert_eq!(fa.x, fb.x);
            assert_eq!(fa.y, fb.y);
        }
        let [f1, f2, f3] = a.data.folds();
        assert_ne!(f1.x, f2.x);
        assert_ne!(f2.x, f3.x);
    }

    #[test]
    fn empirical_covariance_close_to_identity() {
        let (d, n) = (16, 2000);
        let ds = generate(&spec(d, n, Noise::Gaussian { sigma: 1.0 })).unwrap();
        let mut cov = Array2::<f64>::zeros((d, d));
        for fold in ds.data.folds() {
            cov = cov + fold.x.t().dot(&fold.x);
        }
        cov /= (3 * n) as f64;
        let tol = 5.0 * ((d as f64).ln() / (3 * n) as f64).sqrt();
        for i in 0..d {
            for j in 0..d {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((cov[[i, j]] - target).abs() <= tol, "{i},{j}: {}", cov[[i, j]]);
            }
        }
    }

    #[test]
    fn student_t_noise_has_requested_variance() {
        let mut sp = spec(1, 100_000, Noise::StudentT { nu: 5.0, sigma: 2.0 });
        sp.truth.magnitude = 0.0;
        let ds = generate(&sp).unwrap();
        let y = &ds.data.fold1().y;
        let var = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
        assert!((var / 4.0 - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn moment_ratios() {
        let signs: Vec<f64> = (0..10).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        assert!((moment_ratio_check(&signs).unwrap() - 1.0).abs() < 1e-15);
        assert!(moment_ratio_check(&[0.0, 0.0]).is_err());
        assert!(moment_ratio_check(&[1.0]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g: Vec<f64> = (0..400_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let rg = moment_ratio_check(&g).unwrap();
        assert!((rg / 3f64.powf(0.25) - 1.0).abs() < 0.01, "{rg}");
        let t5 = StudentT::new(5.0).unwrap();
        let t: Vec<f64> = (0..400_000).map(|_| t5.sample(&mut rng)).collect();
        assert!(moment_ratio_check(&t).unwrap() > rg);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut sp = spec(4, 10, Noise::StudentT { nu: 2.0, sigma: 1.0 });
        assert!(generate(&sp).is_err());
        sp.noise = Noise::Gaussian { sigma: 1.0 };
        sp.truth.sparsity = 5;
        assert!(generate(&sp).is_err());
        sp.truth.sparsity = 2;
        sp.design = Design::StudentT { nu: 4.0 };
        assert!(generate(&sp).is_err());
    }

    #[test]
    fn child_seeds_differ() {
        let s: Vec<u64> = (0..100).map(|i| child_seed(42, i)).collect();
        let mut u = s.clone();
        u.sort_unstable();
        u.dedup();
        assert_eq!(u.len(), s.len());
        assert_eq!(child_seed(42, 7), s[7]);
    }

    #[test]
    fn dump_format() {
        let sp = spec(3, 2, Noise::Gaussian { sigma: 0.5 });
        let ds = generate(&sp).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &sp, &ds).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# d=3,N=2,seed=11,digest="));
        assert_eq!(lines.len(), 1 + 6);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 4));
    }
}
