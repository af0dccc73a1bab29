//! The regularized median-of-means tournament over a finite candidate pool.
//!
//! Each level `ℓ` of the sparsity hierarchy runs three phases on three
//! independent folds:
//!
//! 1. a distance oracle on fold 1 decides which pairs are far enough apart,
//!    either in the regularization norm or in an empirical `L₂` proxy, for a
//!    match between them to be informative;
//! 2. an elimination round on fold 2 keeps the candidates that win every
//!    match the oracle allows, a match being a majority vote over blocks of
//!    the penalized excess empirical loss;
//! 3. a champions league on fold 3 keeps the elimination survivors whose
//!    multiplier statistic against every other survivor stays above
//!    `-r_{ℓ,3}²` on a majority of blocks.
//!
//! The winner comes from the deepest level whose champions sets, intersected
//! with those of every shallower level, are still non-empty.

use std::collections::BTreeSet;

use ndarray::{aview1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::mom::{lower_median, majority_count, median_of_block_means, BlockPartition};
use crate::norms::{RegNorm, SparsityHierarchy};
use crate::params::{all_level_params, radius_grid, LevelParams, Penalty, ProcedureConstants};

/// A coefficient vector competing in the tournament.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub id: u64,
    pub t: Vec<f64>,
    /// Where the candidate came from (solver, penalty level, subsample).
    pub provenance: String,
}

impl Candidate {
    pub fn new(id: u64, t: Vec<f64>, provenance: impl Into<String>) -> Self {
        Self {
            id,
            t,
            provenance: provenance.into(),
        }
    }
}

/// A design matrix with its responses.
#[derive(Clone, Debug, PartialEq)]
pub struct Fold {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
}

impl Fold {
    pub fn new(x: Array2<f64>, y: Vec<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return invalid(format!("{} design rows but {} responses", x.nrows(), y.len()));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn predict(&self, t: &[f64]) -> Vec<f64> {
        self.x.dot(&aview1(t)).into_raw_vec_and_offset().0
    }

    /// Splits off the first `k` rows.
    pub fn split_at(&self, k: usize) -> (Fold, Fold) {
        let head = Fold {
            x: self.x.slice(ndarray::s![..k, ..]).to_owned(),
            y: self.y[..k].to_vec(),
        };
        let tail = Fold {
            x: self.x.slice(ndarray::s![k.., ..]).to_owned(),
            y: self.y[k..].to_vec(),
        };
        (head, tail)
    }

    /// Restriction to the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Fold {
        Fold {
            x: self.x.select(ndarray::Axis(0), rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

/// Three independent samples: fold 1 feeds the distance oracle, fold 2 the
/// elimination round and fold 3 the champions league.
#[derive(Clone, Debug)]
pub struct ThreeFoldData {
    fold1: Fold,
    fold2: Fold,
    fold3: Fold,
}

impl ThreeFoldData {
    pub fn new(fold1: Fold, fold2: Fold, fold3: Fold) -> Result<Self> {
        let d = fold1.dim();
        if fold2.dim() != d || fold3.dim() != d {
            return invalid("folds disagree on the dimension");
        }
        if fold1.is_empty() || fold2.is_empty() || fold3.is_empty() {
            return invalid("every fold needs at least one sample");
        }
        Ok(Self { fold1, fold2, fold3 })
    }

    pub fn dim(&self) -> usize {
        self.fold1.dim()
    }

    pub fn fold1(&self) -> &Fold {
        &self.fold1
    }

    pub fn fold2(&self) -> &Fold {
        &self.fold2
    }

    pub fn fold3(&self) -> &Fold {
        &self.fold3
    }

    pub fn folds(&self) -> [&Fold; 3] {
        [&self.fold1, &self.fold2, &self.fold3]
    }
}

/// How the distance oracle estimates `‖f - h‖_{L₂}` for pairs that are close
/// in the regularization norm.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Median of block means of `|f(X) - h(X)|` on fold 1.
    #[default]
    Empirical,
    /// `‖t_f - t_h‖₂`, exact for isotropic designs; fold 1 is not used.
    Isotropic,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TournamentConfig {
    pub penalty: Penalty,
    pub consts: ProcedureConstants,
    pub r_hat_override: Option<f64>,
    /// Use `r_hat_override` verbatim at every level instead of
    /// `max(r_hat_factor * r_l, override)`.
    pub r_hat_exact: bool,
    pub oracle: OracleMode,
}

impl TournamentConfig {
    pub fn new(penalty: Penalty, consts: ProcedureConstants) -> Self {
        Self {
            penalty,
            consts,
            r_hat_override: None,
            r_hat_exact: false,
            oracle: OracleMode::Empirical,
        }
    }

    pub fn level_params(&self, d: usize, n: usize) -> Result<Vec<LevelParams>> {
        let mut params = all_level_params(self.penalty, &self.consts, d, n, self.r_hat_override)?;
        if let (true, Some(r)) = (self.r_hat_exact, self.r_hat_override) {
            for p in params.iter_mut().filter(|p| p.active) {
                p.set_r_hat(&self.consts, r, n);
            }
        }
        Ok(params)
    }
}

/// What happened at one level of the hierarchy.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseReport {
    pub level: usize,
    pub params: LevelParams,
    /// Pool members inside the level's class, i.e. the players.
    pub contenders: Vec<u64>,
    /// Elimination survivors.
    pub survivors_prime: Vec<u64>,
    /// Champions-league survivors.
    pub survivors: Vec<u64>,
    pub matches_played: usize,
    pub matches_abandoned: usize,
    pub oracle_calls: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TournamentOutcome {
    pub winner: Candidate,
    /// Deepest level whose prefix intersection of champions sets is non-empty.
    pub level: usize,
    pub reports: Vec<PhaseReport>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EliminationOutcome {
    pub survivors: Vec<u64>,
    pub matches_played: usize,
    pub matches_abandoned: usize,
    pub oracle_calls: usize,
}

fn check_dims(f: &Candidate, h: &Candidate, fold: &Fold) -> Result<()> {
    if f.t.len() != fold.dim() || h.t.len() != fold.dim() {
        return invalid(format!(
            "candidates {} and {} do not match the data dimension {}",
            f.id,
            h.id,
            fold.dim()
        ));
    }
    Ok(())
}

/// `Φ(f, h)`: median over blocks of the mean of `|f(X_i) - h(X_i)|`.
pub fn distance_stat(f: &Candidate, h: &Candidate, fold1: &Fold, partition: &BlockPartition) -> Result<f64> {
    check_dims(f, h, fold1)?;
    let (pf, ph) = (fold1.predict(&f.t), fold1.predict(&h.t));
    let gaps: Vec<f64> = pf.iter().zip(&ph).map(|(a, b)| (a - b).abs()).collect();
    median_of_block_means(&gaps, partition)
}

/// The oracle's verdict given a precomputed `Φ`: `true` when the pair is far
/// enough apart for a match to take place.
pub fn distance_oracle(f: &Candidate, h: &Candidate, params: &LevelParams, norm: &RegNorm, phi: f64) -> bool {
    if !params.active {
        return false;
    }
    norm.distance(&f.t, &h.t) >= params.rho || phi >= params.r1
}

/// Block statistics `B^λ_{h,f}(j)` of a match between `f` and `h`; positive
/// entries are blocks won by `f`.
pub fn elimination_block_stats(
    f: &Candidate,
    h: &Candidate,
    fold2: &Fold,
    partition: &BlockPartition,
    lambda: f64,
    norm: &RegNorm,
) -> Result<Vec<f64>> {
    check_dims(f, h, fold2)?;
    partition.check_len(fold2.len())?;
    let sq_f = squared_residuals(&fold2.predict(&f.t), &fold2.y);
    let sq_h = squared_residuals(&fold2.predict(&h.t), &fold2.y);
    let pen = lambda * (norm.value(&h.t) - norm.value(&f.t));
    Ok(excess_blocks(&sq_f, &sq_h, partition, pen))
}

/// `f ≻ h`: `f` wins a strict majority of the blocks.
pub fn elimination_match(
    f: &Candidate,
    h: &Candidate,
    fold2: &Fold,
    partition: &BlockPartition,
    lambda: f64,
    norm: &RegNorm,
) -> Result<bool> {
    let stats = elimination_block_stats(f, h, fold2, partition, lambda, norm)?;
    Ok(majority_count(stats.iter().filter(|b| **b > 0.0).count(), stats.len()))
}

/// Champions-league block statistics `(2/m) Σ (h - f)(X_i) (f(X_i) - Y_i)`.
pub fn champions_block_stats(
    f: &Candidate,
    h: &Candidate,
    fold3: &Fold,
    partition: &BlockPartition,
) -> Result<Vec<f64>> {
    check_dims(f, h, fold3)?;
    partition.check_len(fold3.len())?;
    let pf = fold3.predict(&f.t);
    let ph = fold3.predict(&h.t);
    Ok(multiplier_blocks(&pf, &ph, &fold3.y, partition))
}

/// `f ≫ h`: the multiplier statistic is at least `-r3_sq` on more than half of the blocks.
pub fn champions_match(f: &Candidate, h: &Candidate, fold3: &Fold, partition: &BlockPartition, r3_sq: f64) -> Result<bool> {
    let stats = champions_block_stats(f, h, fold3, partition)?;
    Ok(majority_count(stats.iter().filter(|b| **b >= -r3_sq).count(), stats.len()))
}

fn squared_residuals(pred: &[f64], y: &[f64]) -> Vec<f64> {
    pred.iter().zip(y).map(|(p, y)| (p - y) * (p - y)).collect()
}

fn excess_blocks(sq_f: &[f64], sq_h: &[f64], partition: &BlockPartition, pen: f64) -> Vec<f64> {
    let m = partition.block_size() as f64;
    partition
        .index_sets()
        .map(|r| {
            let mut acc = 0.0;
            for i in r {
                acc += sq_h[i] - sq_f[i];
            }
            acc / m + pen
        })
        .collect()
}

fn multiplier_blocks(pf: &[f64], ph: &[f64], y: &[f64], partition: &BlockPartition) -> Vec<f64> {
    let m = partition.block_size() as f64;
    partition
        .index_sets()
        .map(|r| {
            let mut acc = 0.0;
            for i in r {
                acc += (ph[i] - pf[i]) * (pf[i] - y[i]);
            }
            2.0 * acc / m
        })
        .collect()
}

/// Cached per-candidate quantities shared by every level of one run.
struct Arena<'a> {
    pool: &'a [Candidate],
    norm: &'a RegNorm,
    mode: OracleMode,
    pred1: Vec<Vec<f64>>,
    sq2: Vec<Vec<f64>>,
    pred3: Vec<Vec<f64>>,
    y3: &'a [f64],
    psi: Vec<f64>,
    psi_dist: Vec<Option<f64>>,
    phi: Vec<Option<f64>>,
    part1: BlockPartition,
    oracle_calls: usize,
}

impl<'a> Arena<'a> {
    fn new(pool: &'a [Candidate], data: &'a ThreeFoldData, norm: &'a RegNorm, mode: OracleMode, m1: usize) -> Result<Self> {
        let d = data.dim();
        if pool.is_empty() {
            return invalid("empty candidate pool");
        }
        let mut ids = BTreeSet::new();
        for c in pool {
            if c.t.len() != d {
                return invalid(format!("candidate {} has dimension {} but data has {d}", c.id, c.t.len()));
            }
            if !ids.insert(c.id) {
                return invalid(format!("duplicate candidate id {}", c.id));
            }
        }
        if let RegNorm::SortedL1 { weights } = norm {
            if weights.len() != d {
                return invalid("regularization norm dimension does not match the data");
            }
        }
        let n1 = (data.fold1.len() / m1.max(1)).max(1);
        let p = pool.len();
        Ok(Self {
            pool,
            norm,
            mode,
            pred1: match mode {
                OracleMode::Empirical => pool.iter().map(|c| data.fold1.predict(&c.t)).collect(),
                OracleMode::Isotropic => Vec::new(),
            },
            sq2: pool
                .iter()
                .map(|c| squared_residuals(&data.fold2.predict(&c.t), &data.fold2.y))
                .collect(),
            pred3: pool.iter().map(|c| data.fold3.predict(&c.t)).collect(),
            y3: &data.fold3.y,
            psi: pool.iter().map(|c| norm.value(&c.t)).collect(),
            psi_dist: vec![None; p * p],
            phi: vec![None; p * p],
            part1: BlockPartition::new(data.fold1.len(), n1)?,
            oracle_calls: 0,
        })
    }

    fn key(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        a * self.pool.len() + b
    }

    fn psi_distance(&mut self, i: usize, j: usize) -> f64 {
        let k = self.key(i, j);
        if let Some(v) = self.psi_dist[k] {
            return v;
        }
        let v = self.norm.distance(&self.pool[i].t, &self.pool[j].t);
        self.psi_dist[k] = Some(v);
        v
    }

    fn phi(&mut self, i: usize, j: usize) -> f64 {
        let k = self.key(i, j);
        if let Some(v) = self.phi[k] {
            return v;
        }
        self.oracle_calls += 1;
        let v = match self.mode {
            OracleMode::Empirical => {
                let gaps: Vec<f64> = self.pred1[i]
                    .iter()
                    .zip(&self.pred1[j])
                    .map(|(a, b)| (a - b).abs())
                    .collect();
                let mut means = self.part1.block_means(&gaps).expect("fold-1 partition fits");
                lower_median(&mut means).expect("non-empty partition")
            }
            OracleMode::Isotropic => self.pool[i]
                .t
                .iter()
                .zip(&self.pool[j].t)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt(),
        };
        self.phi[k] = Some(v);
        v
    }

    fn oracle(&mut self, i: usize, j: usize, params: &LevelParams) -> bool {
        if !params.active {
            return false;
        }
        // the pair is far in the regularization norm; no need to estimate L2
        if self.psi_distance(i, j) >= params.rho {
            return true;
        }
        self.phi(i, j) >= params.r1
    }

    /// Elimination round over pool indices; returns surviving indices and match counts.
    fn eliminate(&mut self, players: &[usize], params: &LevelParams, part2: &BlockPartition) -> (Vec<usize>, usize, usize) {
        let mut lost = vec![false; players.len()];
        let (mut played, mut abandoned) = (0, 0);
        for a in 0..players.len() {
            for b in a + 1..players.len() {
                let (i, j) = (players[a], players[b]);
                if !self.oracle(i, j, params) {
                    abandoned += 1;
                    continue;
                }
                played += 1;
                let pen = params.lambda * (self.psi[j] - self.psi[i]);
                let stats = excess_blocks(&self.sq2[i], &self.sq2[j], part2, pen);
                let n = stats.len();
                let i_wins = stats.iter().filter(|s| **s > 0.0).count();
                let j_wins = stats.iter().filter(|s| **s < 0.0).count();
                if !majority_count(i_wins, n) {
                    lost[a] = true;
                }
                if !majority_count(j_wins, n) {
                    lost[b] = true;
                }
            }
        }
        let survivors = players
            .iter()
            .zip(&lost)
            .filter(|(_, l)| !**l)
            .map(|(i, _)| *i)
            .collect();
        (survivors, played, abandoned)
    }

    fn champions(&self, players: &[usize], r3_sq: f64, part3: &BlockPartition) -> Vec<usize> {
        players
            .iter()
            .copied()
            .filter(|&i| {
                players.iter().all(|&j| {
                    if i == j {
                        return true;
                    }
                    let stats = multiplier_blocks(&self.pred3[i], &self.pred3[j], self.y3, part3);
                    majority_count(stats.iter().filter(|s| **s >= -r3_sq).count(), stats.len())
                })
            })
            .collect()
    }

    fn ids(&self, idx: &[usize]) -> Vec<u64> {
        idx.iter().map(|&i| self.pool[i].id).collect()
    }
}

fn level_partition(len: usize, blocks: usize) -> Result<BlockPartition> {
    BlockPartition::new(len, blocks.clamp(1, len))
}

/// Elimination round among `pool`, which is assumed to lie inside the level's class.
/// A pair whose match the oracle abandons counts as a win for both.
pub fn elimination_round(
    pool: &[Candidate],
    params: &LevelParams,
    norm: &RegNorm,
    data: &ThreeFoldData,
    consts: &ProcedureConstants,
    mode: OracleMode,
) -> Result<EliminationOutcome> {
    let mut arena = Arena::new(pool, data, norm, mode, consts.m1)?;
    let part2 = level_partition(data.fold2.len(), params.n2)?;
    let players: Vec<usize> = (0..pool.len()).collect();
    let (surv, played, abandoned) = arena.eliminate(&players, params, &part2);
    Ok(EliminationOutcome {
        survivors: arena.ids(&surv),
        matches_played: played,
        matches_abandoned: abandoned,
        oracle_calls: arena.oracle_calls,
    })
}

/// Members of `hprime` that beat every other member in the champions league.
pub fn champions_round(hprime: &[Candidate], fold3: &Fold, params: &LevelParams) -> Result<Vec<u64>> {
    if hprime.is_empty() {
        return Ok(Vec::new());
    }
    let part3 = level_partition(fold3.len(), params.n2)?;
    let r3_sq = params.r3_sq();
    let preds: Vec<Vec<f64>> = hprime
        .iter()
        .map(|c| {
            if c.t.len() != fold3.dim() {
                return invalid(format!("candidate {} does not match the data dimension", c.id));
            }
            Ok(fold3.predict(&c.t))
        })
        .collect::<Result<_>>()?;
    Ok((0..hprime.len())
        .filter(|&i| {
            (0..hprime.len()).all(|j| {
                i == j || {
                    let stats = multiplier_blocks(&preds[i], &preds[j], &fold3.y, &part3);
                    majority_count(stats.iter().filter(|s| **s >= -r3_sq).count(), stats.len())
                }
            })
        })
        .map(|i| hprime[i].id)
        .collect())
}

/// Largest `ℓ` with `H_1 ∩ … ∩ H_ℓ ≠ ∅`, and the smallest id in that intersection.
pub fn final_selection(sets: &[Vec<u64>]) -> Option<(usize, u64)> {
    let mut inter: BTreeSet<u64> = sets.first()?.iter().copied().collect();
    if inter.is_empty() {
        return None;
    }
    let mut level = 1;
    for set in &sets[1..] {
        let next: BTreeSet<u64> = set.iter().copied().filter(|id| inter.contains(id)).collect();
        if next.is_empty() {
            break;
        }
        inter = next;
        level += 1;
    }
    inter.first().map(|&id| (level, id))
}

/// Runs all phases at every level and names a winner.
pub fn run_tournament(pool: &[Candidate], data: &ThreeFoldData, config: &TournamentConfig) -> Result<TournamentOutcome> {
    let d = data.dim();
    let n = data.fold2.len();
    let params = config.level_params(d, n)?;
    let norm = config.penalty.norm(d);
    let radii = params.iter().map(|p| p.rho).collect();
    let hierarchy = SparsityHierarchy::new(d, radii)?;
    let mut arena = Arena::new(pool, data, &norm, config.oracle, config.consts.m1)?;

    let mut reports = Vec::with_capacity(params.len());
    for p in &params {
        let before = arena.oracle_calls;
        let mut players = Vec::new();
        for (i, c) in pool.iter().enumerate() {
            if hierarchy.contains(&norm, &c.t, p.level)? {
                players.push(i);
            }
        }
        let part2 = level_partition(data.fold2.len(), p.n2)?;
        let part3 = level_partition(data.fold3.len(), p.n2)?;
        let (hprime, played, abandoned) = arena.eliminate(&players, p, &part2);
        let h = arena.champions(&hprime, p.r3_sq(), &part3);
        reports.push(PhaseReport {
            level: p.level,
            params: p.clone(),
            contenders: arena.ids(&players),
            survivors_prime: arena.ids(&hprime),
            survivors: arena.ids(&h),
            matches_played: played,
            matches_abandoned: abandoned,
            oracle_calls: arena.oracle_calls - before,
        });
    }

    let sets: Vec<Vec<u64>> = reports.iter().map(|r| r.survivors.clone()).collect();
    match final_selection(&sets) {
        Some((level, id)) => {
            let winner = pool.iter().find(|c| c.id == id).expect("winner is a pool member").clone();
            Ok(TournamentOutcome { winner, level, reports })
        }
        None => Err(Error::NoWinner { reports }),
    }
}

/// Median-of-means estimate of the squared-loss risk of `t` on `fold`,
/// using about `√len` blocks.
pub fn mom_risk(fold: &Fold, t: &[f64]) -> Result<f64> {
    if fold.is_empty() {
        return invalid("empty validation fold");
    }
    let sq = squared_residuals(&fold.predict(t), &fold.y);
    let blocks = ((fold.len() as f64).sqrt().round() as usize).clamp(1, fold.len());
    median_of_block_means(&sq, &BlockPartition::new(fold.len(), blocks)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptiveOutcome {
    pub winner: Candidate,
    pub r_hat: f64,
    pub level: usize,
    pub validation_risk: f64,
    /// Set when the largest radius produced no winner and a smaller one had to.
    pub warning: bool,
    /// `(r_hat, validation risk)` of every radius that produced a winner, in grid order.
    pub trace: Vec<(f64, f64)>,
}

/// Runs the tournament on the halving grid `r0 / 2^j` and keeps shrinking the
/// radius while the winner's median-of-means validation risk stays within a
/// factor 1.5 of the previously accepted winner's.
///
/// The validation slice is the first `⌊validation_fraction · N⌋` rows of fold 2;
/// the tournament sees only the remaining rows of that fold.
pub fn adaptive_radius_run(
    pool: &[Candidate],
    data: &ThreeFoldData,
    config: &TournamentConfig,
    r0: f64,
    depth: usize,
    validation_fraction: f64,
) -> Result<AdaptiveOutcome> {
    if !(validation_fraction > 0.0 && validation_fraction <= 0.5) {
        return invalid(format!("validation fraction {validation_fraction} outside (0, 1/2]"));
    }
    let grid = radius_grid(r0, depth)?;
    let n2 = data.fold2.len();
    let n_val = ((validation_fraction * n2 as f64).floor() as usize).max(1);
    if n_val >= n2 {
        return invalid("fold 2 is too small to carve out a validation slice");
    }
    let (val, rest) = data.fold2.split_at(n_val);
    let sub = ThreeFoldData::new(data.fold1.clone(), rest, data.fold3.clone())?;

    let mut accepted: Option<AdaptiveOutcome> = None;
    let mut trace = Vec::new();
    let mut last_failure = None;
    for (j, &r) in grid.iter().enumerate() {
        let cfg = TournamentConfig {
            r_hat_override: Some(r),
            r_hat_exact: true,
            ..config.clone()
        };
        match run_tournament(pool, &sub, &cfg) {
            Ok(out) => {
                let risk = mom_risk(&val, &out.winner.t)?;
                let keep = match &accepted {
                    None => true,
                    Some(prev) => risk <= 1.5 * prev.validation_risk,
                };
                if !keep {
                    break;
                }
                trace.push((r, risk));
                accepted = Some(AdaptiveOutcome {
                    winner: out.winner,
                    r_hat: r,
                    level: out.level,
                    validation_risk: risk,
                    warning: accepted.as_ref().map_or(j > 0, |a| a.warning),
                    trace: Vec::new(),
                });
            }
            Err(Error::NoWinner { reports }) => {
                if accepted.is_some() {
                    break;
                }
                last_failure = Some(reports);
            }
            Err(e) => return Err(e),
        }
    }
    match accepted {
        Some(mut out) => {
            out.trace = trace;
            Ok(out)
        }
        None => Err(Error::NoWinner {
            reports: last_failure.unwrap_or_default(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn fold(x: Array2<f64>, y: Vec<f64>) -> Fold {
        Fold::new(x, y).unwrap()
    }

    fn ones(n: usize) -> Array2<f64> {
        Array2::from_elem((n, 1), 1.0)
    }

    fn cand(id: u64, t: Vec<f64>) -> Candidate {
        Candidate::new(id, t, "test")
    }

    fn params(rho: f64, r_hat: f64, lambda: f64, n2: usize, active: bool) -> LevelParams {
        let c = ProcedureConstants::default();
        LevelParams {
            level: 1,
            sparsity: 1,
            rho,
            r_star: r_hat,
            r_hat,
            r1: c.beta * r_hat,
            r3: crate::params::champions_margin(&c, r_hat).sqrt(),
            lambda,
            n1: 1,
            n2,
            m2: 1,
            active,
        }
    }

    #[test]
    fn distance_stat_examples() {
        let x = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let f1 = fold(x, vec![0.0; 3]);
        let one = BlockPartition::new(3, 1).unwrap();
        let f = cand(0, vec![1.0, -2.0, 0.5]);
        let h = cand(1, vec![0.0, 1.0, 0.5]);
        assert_eq!(distance_stat(&f, &f, &f1, &one).unwrap(), 0.0);
        let a = distance_stat(&f, &h, &f1, &one).unwrap();
        assert_eq!(a, distance_stat(&h, &f, &f1, &one).unwrap());
        assert!((a - (1.0 + 3.0 + 0.0) / 3.0).abs() < 1e-15);
        assert!(distance_stat(&f, &cand(2, vec![1.0]), &f1, &one).is_err());
    }

    #[test]
    fn oracle_examples() {
        let p = params(1.0, 0.5, 0.0, 1, true);
        let f = cand(0, vec![0.0]);
        // boundary counts as far
        assert!(distance_oracle(&f, &cand(1, vec![1.0]), &p, &RegNorm::L1, 0.0));
        assert!(!distance_oracle(&f, &f, &p, &RegNorm::L1, 0.0));
        // Ψ = ρ/2 with Φ = 2βr̂
        assert!(distance_oracle(&f, &cand(1, vec![0.5]), &p, &RegNorm::L1, 2.0 * p.r1));
        assert!(!distance_oracle(&f, &cand(1, vec![0.5]), &p, &RegNorm::L1, 0.5 * p.r1));
        let off = params(1.0, 0.5, 0.0, 1, false);
        assert!(!distance_oracle(&f, &cand(1, vec![9.0]), &off, &RegNorm::L1, 9.0));
    }

    #[test]
    fn elimination_match_examples() {
        let one = BlockPartition::new(3, 1).unwrap();
        let f2 = fold(ones(3), vec![2.0; 3]);
        // f fits exactly, h is off by one everywhere
        assert!(elimination_match(&cand(0, vec![2.0]), &cand(1, vec![1.0]), &f2, &one, 0.0, &RegNorm::L1).unwrap());

        // per-block statistics {+1, +1, -5}: the vote goes to f, the mean would not
        let f2 = fold(ones(3), vec![0.0, 0.0, 3.0]);
        let three = BlockPartition::new(3, 3).unwrap();
        let (f, h) = (cand(0, vec![0.0]), cand(1, vec![1.0]));
        let b = elimination_block_stats(&f, &h, &f2, &three, 0.0, &RegNorm::L1).unwrap();
        assert_eq!(b, vec![1.0, 1.0, -5.0]);
        assert!(elimination_match(&f, &h, &f2, &three, 0.0, &RegNorm::L1).unwrap());
        assert!(!elimination_match(&h, &f, &f2, &three, 0.0, &RegNorm::L1).unwrap());
    }

    #[test]
    fn champions_match_examples() {
        let three = BlockPartition::new(3, 3).unwrap();
        let f3 = fold(ones(3), vec![1.0, 0.0, 0.0]);
        let (f, h) = (cand(0, vec![0.0]), cand(1, vec![1.0]));
        // statistics {-2, 0, 0} against the margin r3² = 1
        assert_eq!(champions_block_stats(&f, &h, &f3, &three).unwrap(), vec![-2.0, 0.0, 0.0]);
        assert!(champions_match(&f, &h, &f3, &three, 1.0).unwrap());
        assert!(champions_match(&f, &f, &f3, &three, 0.0).unwrap());
        // zero residuals make every statistic vanish
        let exact = fold(ones(3), vec![0.0; 3]);
        assert!(champions_match(&f, &cand(2, vec![-7.0]), &exact, &three, 0.0).unwrap());
    }

    fn data_from(f1: Fold, f2: Fold, f3: Fold) -> ThreeFoldData {
        ThreeFoldData::new(f1, f2, f3).unwrap()
    }

    #[test]
    fn elimination_round_examples() {
        let x = Array2::from_shape_fn((6, 1), |(i, _)| 1.0 + i as f64);
        let y: Vec<f64> = (0..6).map(|i| 2.0 * (1.0 + i as f64)).collect();
        let f = fold(x, y);
        let data = data_from(f.clone(), f.clone(), f);
        let c = ProcedureConstants::default();
        let perfect = cand(0, vec![2.0]);
        let bad = cand(1, vec![-1.0]);

        let p = params(1.0, 0.1, 0.0, 3, true);
        let single = elimination_round(std::slice::from_ref(&bad), &p, &RegNorm::L1, &data, &c, OracleMode::Empirical).unwrap();
        assert_eq!(single.survivors, vec![1]);

        let pool = [perfect.clone(), bad.clone()];
        let out = elimination_round(&pool, &p, &RegNorm::L1, &data, &c, OracleMode::Empirical).unwrap();
        assert_eq!(out.survivors, vec![0]);
        assert_eq!((out.matches_played, out.matches_abandoned), (1, 0));

        let off = params(1.0, 0.1, 0.0, 3, false);
        let out = elimination_round(&pool, &off, &RegNorm::L1, &data, &c, OracleMode::Empirical).unwrap();
        assert_eq!(out.survivors, vec![0, 1]);
        assert_eq!(out.matches_abandoned, 1);

        assert_eq!(champions_round(&pool, data.fold3(), &p).unwrap(), vec![0]);
        assert_eq!(champions_round(&[bad], data.fold3(), &p).unwrap(), vec![1]);
        assert!(champions_round(&[], data.fold3(), &p).unwrap().is_empty());
    }

    #[test]
    fn final_selection_examples() {
        let (a, b) = (1, 2);
        assert_eq!(final_selection(&[vec![a, b], vec![b], vec![]]), Some((2, b)));
        assert_eq!(final_selection(&[vec![a], vec![a], vec![a]]), Some((3, a)));
        assert_eq!(final_selection(&[vec![a], vec![b]]), Some((1, a)));
        assert_eq!(final_selection(&[vec![], vec![a]]), None);
        assert_eq!(final_selection(&[]), None);
    }

    fn gaussian_data(d: usize, n: usize, t0: &[f64], sigma: f64, seed: u64) -> ThreeFoldData {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut mk = || {
            let x = Array2::from_shape_fn((n, d), |_| StandardNormal.sample(&mut rng));
            let y = x
                .dot(&aview1(t0))
                .iter()
                .map(|v| v + sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            Fold::new(x, y).unwrap()
        };
        let (a, b, c) = (mk(), mk(), mk());
        data_from(a, b, c)
    }

    #[test]
    fn lone_truth_wins_at_its_deepest_level() {
        let mut t0 = vec![0.0; 8];
        t0[0] = 1.0;
        t0[3] = -1.0;
        let data = gaussian_data(8, 64, &t0, 1.0, 5);
        let cfg = TournamentConfig::new(Penalty::Lasso, ProcedureConstants::default());
        let out = run_tournament(&[cand(7, t0.clone())], &data, &cfg).unwrap();
        assert_eq!(out.winner.id, 7);
        // sparsity levels 8, 4, 2, 1: the two-sparse truth is outside the last class
        assert_eq!(out.level, 3);
        assert!(out.reports[3].contenders.is_empty());
    }

    #[test]
    fn survivor_sets_do_not_depend_on_pool_order() {
        let t0 = vec![1.0, 0.0, 0.0, -0.5, 0.0, 0.0];
        let data = gaussian_data(6, 60, &t0, 1.0, 9);
        let pool: Vec<Candidate> = (0..6)
            .map(|k| {
                let t = t0.iter().enumerate().map(|(i, v)| v + 0.15 * ((i + k) % 3) as f64 - 0.1).collect();
                cand(k as u64 + 10, t)
            })
            .chain([cand(0, vec![0.0; 6]), cand(1, t0.clone())])
            .collect();
        let cfg = TournamentConfig::new(Penalty::Lasso, ProcedureConstants::default());
        let a = run_tournament(&pool, &data, &cfg);
        let mut rev = pool.clone();
        rev.reverse();
        let b = run_tournament(&rev, &data, &cfg);
        let sets = |r: &Result<TournamentOutcome>| -> Vec<(BTreeSet<u64>, BTreeSet<u64>)> {
            let reports = match r {
                Ok(o) => o.reports.clone(),
                Err(Error::NoWinner { reports }) => reports.clone(),
                Err(e) => panic!("{e}"),
            };
            reports
                .iter()
                .map(|p| {
                    let hp: BTreeSet<u64> = p.survivors_prime.iter().copied().collect();
                    let h: BTreeSet<u64> = p.survivors.iter().copied().collect();
                    let players: BTreeSet<u64> = p.contenders.iter().copied().collect();
                    assert!(h.is_subset(&hp) && hp.is_subset(&players));
                    (hp, h)
                })
                .collect()
        };
        assert_eq!(sets(&a), sets(&b));
        assert_eq!(a.map(|o| o.winner.id).ok(), b.map(|o| o.winner.id).ok());
    }

    #[test]
    fn perfect_fit_with_smallest_norm_survives() {
        let t0 = vec![0.5, 0.0, 0.0, 0.0];
        let data = gaussian_data(4, 40, &t0, 0.0, 2);
        let pool = vec![
            cand(3, vec![0.5, 0.4, 0.0, 0.0]),
            cand(4, vec![0.9, 0.0, -0.3, 0.0]),
            cand(5, t0.clone()),
        ];
        let cfg = TournamentConfig::new(Penalty::Lasso, ProcedureConstants::default());
        let out = run_tournament(&pool, &data, &cfg).unwrap();
        for r in &out.reports {
            if r.contenders.contains(&5) {
                assert!(r.survivors.contains(&5));
            }
        }
        assert_eq!(out.winner.id, 5);
    }

    #[test]
    fn isotropic_oracle_skips_fold_one() {
        let t0 = vec![1.0, 0.0, 0.0, 0.0];
        let data = gaussian_data(4, 40, &t0, 0.5, 3);
        let pool = vec![cand(0, vec![0.0; 4]), cand(1, t0.clone()), cand(2, vec![0.8, 0.1, 0.0, 0.0])];
        let mut cfg = TournamentConfig::new(Penalty::Lasso, ProcedureConstants::default());
        cfg.oracle = OracleMode::Isotropic;
        let out = run_tournament(&pool, &data, &cfg).unwrap();
        assert!(pool.iter().any(|c| c.id == out.winner.id));
    }

    #[test]
    fn rejects_bad_pools() {
        let data = gaussian_data(3, 10, &[0.0; 3], 1.0, 1);
        let cfg = TournamentConfig::new(Penalty::Lasso, ProcedureConstants::default());
        assert!(run_tournament(&[], &data, &cfg).is_err());
        assert!(run_tournament(&[cand(0, vec![0.0; 2])], &data, &cfg).is_err());
        assert!(run_tournament(&[cand(0, vec![0.0; 3]), cand(0, vec![1.0; 3])], &data, &cfg).is_err());
    }

    #[test]
    fn adaptive_depth_one_matches_plain_run() {
        let t0 = vec![1.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0];
        let data = gaussian_data(8, 80, &t0, 1.0, 4);
        let pool = vec![cand(0, vec![0.0; 8]), cand(1, t0.clone()), cand(2, vec![0.5; 8])];
        let cfg = TournamentConfig::new(Penalty::Lasso, ProcedureConstants::default());
        let adaptive = adaptive_radius_run(&pool, &data, &cfg, 2.0, 1, 0.25).unwrap();
        let (_, rest) = data.fold2().split_at(20);
        let sub = data_from(data.fold1().clone(), rest, data.fold3().clone());
        let exact = TournamentConfig {
            r_hat_override: Some(2.0),
            r_hat_exact: true,
            ..cfg.clone()
        };
        let plain = run_tournament(&pool, &sub, &exact).unwrap();
        assert_eq!(adaptive.winner, plain.winner);
        assert_eq!(adaptive.r_hat, 2.0);
        assert!(!adaptive.warning);
        assert!(adaptive_radius_run(&pool, &data, &cfg, 2.0, 1, 0.75).is_err());
    }

    #[test]
    fn adaptive_stable_winner_reaches_smallest_radius() {
        let t0 = vec![1.0, 0.0, 0.0, 0.0];
        let data = gaussian_data(4, 60, &t0, 0.0, 6);
        let cfg = TournamentConfig::new(Penalty::Lasso, ProcedureConstants::default());
        let out = adaptive_radius_run(&[cand(1, t0)], &data, &cfg, 1.0, 5, 0.25).unwrap();
        assert_eq!(out.r_hat, 1.0 / 16.0);
        assert_eq!(out.trace.len(), 5);
    }

    /// Two one-dimensional candidates 0.1 apart, each winning one of two
    /// elimination blocks: the match is abandoned while `βr̂ > 0.1` and
    /// eliminates both once the radius drops further.
    #[test]
    fn adaptive_stops_before_the_radius_that_empties_the_survivors() {
        let f1 = fold(ones(8), vec![0.0; 8]);
        let mut y2 = vec![0.05, 0.05];
        y2.extend([0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let f2 = fold(ones(8), y2);
        let f3 = fold(ones(6), vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let data = data_from(f1, f2, f3);
        let consts = ProcedureConstants {
            n2_override: Some(2),
            ..ProcedureConstants::default()
        };
        let cfg = TournamentConfig::new(Penalty::Lasso, consts);
        let pool = [cand(0, vec![0.0]), cand(1, vec![0.1])];
        let out = adaptive_radius_run(&pool, &data, &cfg, 1.0, 8, 0.25).unwrap();
        assert_eq!(out.r_hat, 0.0625);
        assert_eq!(out.trace.len(), 5);

        let (_, rest) = data.fold2().split_at(2);
        let sub = data_from(data.fold1().clone(), rest, data.fold3().clone());
        let tight = TournamentConfig {
            r_hat_override: Some(0.03125),
            r_hat_exact: true,
            ..cfg
        };
        assert!(matches!(run_tournament(&pool, &sub, &tight), Err(Error::NoWinner { .. })));
    }

    #[test]
    fn mom_risk_is_median_of_block_means() {
        let f = fold(ones(4), vec![0.0, 1.0, 2.0, 10.0]);
        // two blocks of squared residuals {0, 1} and {4, 100}
        assert_eq!(mom_risk(&f, &[0.0]).unwrap(), 0.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn block_statistics_are_antisymmetric(
            tf in prop::collection::vec(-3.0f64..3.0, 3),
            th in prop::collection::vec(-3.0f64..3.0, 3),
            xs in prop::collection::vec(-2.0f64..2.0, 36),
            ys in prop::collection::vec(-5.0f64..5.0, 12),
            lambda in 0.0f64..2.0,
        ) {
            let x = Array2::from_shape_vec((12, 3), xs).unwrap();
            let f2 = fold(x, ys);
            let part = BlockPartition::new(12, 4).unwrap();
            let (f, h) = (cand(0, tf), cand(1, th));
            let norm = RegNorm::sorted_l1(vec![1.5, 1.0, 0.5]).unwrap();
            let a = elimination_block_stats(&f, &h, &f2, &part, lambda, &norm).unwrap();
            let b = elimination_block_stats(&h, &f, &f2, &part, lambda, &norm).unwrap();
            for (u, v) in a.iter().zip(&b) {
                prop_assert_eq!(*u, -*v);
            }
            // odd block count, no ties: at most one side wins
            let odd = BlockPartition::new(12, 3).unwrap();
            let fw = elimination_match(&f, &h, &f2, &odd, lambda, &norm).unwrap();
            let hw = elimination_match(&h, &f, &f2, &odd, lambda, &norm).unwrap();
            prop_assert!(!(fw && hw));
        }

        #[test]
        fn oracle_is_symmetric(
            tf in prop::collection::vec(-1.0f64..1.0, 4),
            th in prop::collection::vec(-1.0f64..1.0, 4),
            xs in prop::collection::vec(-2.0f64..2.0, 40),
            rho in 0.1f64..3.0,
            r_hat in 0.01f64..1.0,
        ) {
            let x = Array2::from_shape_vec((10, 4), xs).unwrap();
            let f1 = fold(x, vec![0.0; 10]);
            let part = BlockPartition::new(10, 2).unwrap();
            let (f, h) = (cand(0, tf), cand(1, th));
            let p = params(rho, r_hat, 0.0, 1, true);
            let phi_fh = distance_stat(&f, &h, &f1, &part).unwrap();
            let phi_hf = distance_stat(&h, &f, &f1, &part).unwrap();
            prop_assert_eq!(phi_fh, phi_hf);
            prop_assert_eq!(
                distance_oracle(&f, &h, &p, &RegNorm::L1, phi_fh),
                distance_oracle(&h, &f, &p, &RegNorm::L1, phi_hf)
            );
        }
    }
}
