//! When rho is large enough relative to r_hat and the pool is fitted on data
//! the tournament does not see, the true vector should not lose played
//! elimination matches.

use momtour_core::datagen::{child_seed, generate, Design, Noise, ScenarioSpec, SupportRule, TruthSpec};
use momtour_core::solvers::{build_pool, SolverConfig};
use momtour_core::tournament::{run_tournament, TournamentConfig};
use momtour_core::{delta_condition, Error, Penalty, ProcedureConstants};

fn losses(consts: ProcedureConstants, trials: u64) -> usize {
    let (d, n) = (32, 800);
    let cfg = TournamentConfig::new(Penalty::Lasso, consts);
    let unit = ((1.0 + (d as f64).ln()) / n as f64).sqrt();
    let solver = SolverConfig {
        lambda_grid: [4.0, 2.0, 1.0, 0.5].iter().map(|g| g * unit).collect(),
        ..SolverConfig::default()
    };
    (0..trials)
        .filter(|&t| {
            let seed = child_seed(17, t);
            let spec = ScenarioSpec {
                d,
                n_per_fold: n,
                design: Design::Gaussian,
                noise: Noise::StudentT { nu: 3.0, sigma: 1.0 },
                truth: TruthSpec {
                    sparsity: 2,
                    support: SupportRule::Random,
                    magnitude: 1.0,
                    perturbation: 0.0,
                },
                extra_folds: 1,
                seed,
            };
            let ds = generate(&spec).unwrap();
            let pool = build_pool(&ds.extra[0], Penalty::Lasso, &solver, Some(&ds.truth.t0), seed).unwrap();
            let reports = match run_tournament(&pool, &ds.data, &cfg) {
                Ok(o) => o.reports,
                Err(Error::NoWinner { reports }) => reports,
                Err(e) => panic!("{e}"),
            };
            reports
                .iter()
                .any(|r| r.params.active && r.contenders.contains(&1) && !r.survivors_prime.contains(&1))
        })
        .count()
}

#[test]
fn calibrated_constants_keep_truth_unbeaten() {
    let consts = ProcedureConstants {
        c_rho: 40.0,
        r_hat_factor: 2.0,
        ..ProcedureConstants::default()
    };
    let cfg = TournamentConfig::new(Penalty::Lasso, consts);
    let params = cfg.level_params(32, 800).unwrap();
    let norm = Penalty::Lasso.norm(32);
    for p in params.iter().filter(|p| p.active) {
        // rho >= 10 sqrt(s) r_hat
        assert!(delta_condition(&norm, p.sparsity, p.rho, p.r_hat, 0.1).unwrap(), "level {}", p.level);
    }
    assert!(losses(cfg.consts, 30) <= 3);
}
