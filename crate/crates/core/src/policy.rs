//! Adaptive explore-then-commit (AETC).
//!
//! Every exploration round samples all models jointly. After the warm-up of
//! `n + 2` rounds, each round refits every candidate subset, estimates its
//! `(k1, k2)` (with `k2` inflated by `α_t = regBase^{-t}`), and compares the
//! empirical loss at `max(m_S(t), t)`. Exploration continues while the
//! estimated optimal round of the current best subset lies beyond `t`; the
//! remaining budget then buys fresh draws of that subset for the LRMC average.
//!
//! Scalar and vector responses share one loop: only the trace terms behind
//! `k1` and `k2` differ.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ensemble::{regressor_sum, sample_joint, EnsembleError, ModelEnsemble};
use crate::losscalc::{affordable_draws, k_coefficients, lrmc_from_sum, optimal_round, select_best, LossError, LrmcEstimate};
use crate::regress::{fit_subset, ExplorationLog, IncrementalFit, RegressError, SubsetStats};
use crate::rng::{combine_seed, label_hash, RandomStream};
use crate::subset::{enumerate_subsets, Subset};

pub const DEFAULT_REG_BASE: f64 = 4.0;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("budget {budget} cannot pay for the warm-up; at least {needed} is required")]
    InsufficientBudget { budget: f64, needed: f64 },
    #[error("no exploitation budget left for {subset} after {m} exploration rounds")]
    NoExploitationBudget { subset: Subset, m: u64 },
    #[error("every candidate subset is rank deficient or unaffordable at the final round t = {t}")]
    AllSubsetsInfeasible { t: u64 },
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

fn default_reg_base() -> f64 {
    DEFAULT_REG_BASE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AetcConfig {
    /// Total budget `B`.
    pub budget: f64,
    /// Largest subset considered; defaults to all `n` models.
    #[serde(rename = "maxCard", default, skip_serializing_if = "Option::is_none")]
    pub max_card: Option<usize>,
    /// `α_t = regBase^{-t}`.
    #[serde(rename = "regBase", default = "default_reg_base")]
    pub reg_base: f64,
    /// Pool the exploration regressors into the exploitation average.
    #[serde(default)]
    pub recycle: bool,
    /// Risk weights, `q × k0`. Absent: scalar MSE for `k0 = 1`, identity otherwise.
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub seed: u64,
}

impl AetcConfig {
    pub fn new(budget: f64, seed: u64) -> Self {
        Self {
            budget,
            max_card: None,
            reg_base: DEFAULT_REG_BASE,
            recycle: false,
            q: None,
            seed,
        }
    }

    pub fn q_matrix(&self, k0: usize) -> Result<Option<DMatrix<f64>>, PolicyError> {
        let Some(rows) = &self.q else { return Ok(None) };
        if rows.is_empty() || rows.iter().any(|r| r.len() != k0) {
            return Err(PolicyError::InvalidConfig(format!("Q must have {k0} columns and at least one row")));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(PolicyError::InvalidConfig("Q has a non-finite entry".into()));
        }
        Ok(Some(DMatrix::from_fn(rows.len(), k0, |i, j| rows[i][j])))
    }

    fn validate(&self, n: usize) -> Result<usize, PolicyError> {
        if !(self.budget.is_finite() && self.budget > 0.0) {
            return Err(PolicyError::InvalidConfig(format!("budget must be positive, got {}", self.budget)));
        }
        if !(self.reg_base.is_finite() && self.reg_base > 1.0) {
            return Err(PolicyError::InvalidConfig(format!("regBase must exceed 1, got {}", self.reg_base)));
        }
        let max_card = self.max_card.unwrap_or(n);
        if max_card == 0 || max_card > n {
            return Err(PolicyError::InvalidConfig(format!("maxCard {max_card} outside [1, {n}]")));
        }
        Ok(max_card)
    }

    /// Regularization added to `k2` at round `t`.
    pub fn alpha(&self, t: u64) -> f64 {
        self.reg_base.powf(-(t as f64))
    }
}

/// Decision inputs of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u64,
    /// Best subset this round; absent when no subset could be scored.
    #[serde(rename = "S")]
    pub best: Option<Subset>,
    #[serde(rename = "mOpt")]
    pub m_opt: f64,
    /// Empirical loss at `max(m_S(t), t)`.
    pub h: f64,
    pub k1: f64,
    pub k2: f64,
    pub alpha: f64,
    /// Subsets that could be scored this round.
    pub scored: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AetcResult {
    #[serde(rename = "chosenS")]
    pub chosen: Subset,
    #[serde(rename = "mExplore")]
    pub m_explore: u64,
    pub estimate: Vec<f64>,
    #[serde(rename = "nExploit")]
    pub n_exploit: u64,
    #[serde(rename = "budgetSpent")]
    pub budget_spent: f64,
    /// Exploration hit `M = floor(B / c_epr)` before the stopping rule fired.
    #[serde(rename = "budgetExhausted")]
    pub budget_exhausted: bool,
    pub recycled: bool,
    pub trail: Vec<RoundRecord>,
}

struct Scored {
    index: usize,
    stats: SubsetStats,
    c_ept: f64,
    k1: f64,
    k2: f64,
    m_opt: f64,
    h: f64,
}

/// Empirical loss at round `m`, `+∞` once exploration would eat the budget.
fn loss_at(budget: f64, c_epr: f64, m: f64, k1: f64, k2: f64) -> f64 {
    let remaining = budget - c_epr * m;
    if remaining <= 0.0 {
        return if k1 == 0.0 { k2 / m } else { f64::INFINITY };
    }
    k1 / remaining + k2 / m
}

fn exploitation_seed(seed: u64) -> u64 {
    combine_seed(&[seed, label_hash("exploitation")])
}

fn exploration_stream(seed: u64) -> RandomStream {
    RandomStream::derive(seed, "exploration", 0)
}

fn explore_round(
    ensemble: &dyn ModelEnsemble,
    stream: &mut RandomStream,
    log: &mut ExplorationLog,
    fits: &mut [IncrementalFit],
) -> Result<(), PolicyError> {
    let sample = sample_joint(ensemble, 1, stream).map_err(|e| match e {
        EnsembleError::Sampling { reason, .. } => EnsembleError::Sampling { index: log.t(), reason },
        other => other,
    })?;
    let s = &sample[0];
    log.push(&s.regressors, &s.response)?;
    for fit in fits.iter_mut() {
        fit.push(&s.regressors, &s.response);
    }
    Ok(())
}

/// Runs AETC to completion and returns the committed estimate with its audit trail.
pub fn run_aetc(ensemble: &dyn ModelEnsemble, config: &AetcConfig) -> Result<AetcResult, PolicyError> {
    let n = ensemble.n_regressors();
    let k0 = ensemble.response_dim();
    let max_card = config.validate(n)?;
    let q = config.q_matrix(k0)?;
    let costs = ensemble.costs();
    let budget = config.budget;
    let c_epr = costs.c_epr();
    let max_round = (budget / c_epr).floor() as u64;
    let warm_up = n as u64 + 2;
    if max_round < warm_up {
        return Err(PolicyError::InsufficientBudget {
            budget,
            needed: warm_up as f64 * c_epr,
        });
    }

    let subsets = enumerate_subsets(n, max_card);
    let mut fits: Vec<IncrementalFit> = subsets.iter().map(|s| IncrementalFit::new(s.clone(), k0)).collect();
    let mut log = ExplorationLog::new(n, k0);
    let mut stream = exploration_stream(config.seed);
    for _ in 0..warm_up {
        explore_round(ensemble, &mut stream, &mut log, &mut fits)?;
    }

    let mut trail = Vec::new();
    let (choice, exhausted) = loop {
        let t = log.t() as u64;
        let alpha = config.alpha(t);
        let mut scored = Vec::with_capacity(fits.len());
        for (index, fit) in fits.iter().enumerate() {
            let stats = match fit.stats(&log) {
                Ok(stats) => stats,
                Err(RegressError::RankDeficient { .. }) | Err(RegressError::TooFewRounds { .. }) => continue,
                Err(e) => return Err(e.into()),
            };
            let c_ept = costs.c_ept(&subsets[index]);
            if affordable_draws(budget, c_epr, t, c_ept) == 0 {
                continue;
            }
            let (k1, k2) = k_coefficients(&stats, costs, q.as_ref(), alpha)?;
            let m_opt = if k2 > 0.0 { optimal_round(budget, c_epr, k1, k2)? } else { 0.0 };
            let h = loss_at(budget, c_epr, m_opt.max(t as f64), k1, k2);
            scored.push(Scored {
                index,
                stats,
                c_ept,
                k1,
                k2,
                m_opt,
                h,
            });
        }
        let best = select_best(scored.iter().map(|s| (s.h, s.c_ept, &subsets[s.index])));
        let record = match best {
            Some(b) => RoundRecord {
                t,
                best: Some(subsets[scored[b].index].clone()),
                m_opt: scored[b].m_opt,
                h: scored[b].h,
                k1: scored[b].k1,
                k2: scored[b].k2,
                alpha,
                scored: scored.len(),
            },
            None => RoundRecord {
                t,
                best: None,
                m_opt: f64::NAN,
                h: f64::NAN,
                k1: f64::NAN,
                k2: f64::NAN,
                alpha,
                scored: 0,
            },
        };
        trail.push(record);
        match best {
            Some(b) if scored[b].m_opt <= t as f64 => break (scored.swap_remove(b), false),
            Some(b) if t >= max_round => break (scored.swap_remove(b), true),
            None if t >= max_round => return Err(PolicyError::AllSubsetsInfeasible { t }),
            _ => explore_round(ensemble, &mut stream, &mut log, &mut fits)?,
        }
    };

    let m = log.t() as u64;
    let subset = subsets[choice.index].clone();
    let n_exploit = affordable_draws(budget, c_epr, m, choice.c_ept);
    if n_exploit == 0 {
        return Err(PolicyError::NoExploitationBudget { subset, m });
    }
    let mut sum = regressor_sum(ensemble, &subset, n_exploit as usize, exploitation_seed(config.seed))?;
    let mut count = n_exploit;
    if config.recycle {
        for (a, b) in sum.iter_mut().zip(log.regressor_sums(&subset)) {
            *a += b;
        }
        count += m;
    }
    let estimate = lrmc_from_sum(&choice.stats, &sum, count)?;
    Ok(AetcResult {
        budget_spent: m as f64 * c_epr + n_exploit as f64 * choice.c_ept,
        chosen: subset,
        m_explore: m,
        estimate,
        n_exploit,
        budget_exhausted: exhausted,
        recycled: config.recycle,
        trail,
    })
}

/// Uniform exploration with a prescribed round count `m` and subset, then
/// exploitation of the remaining budget.
pub fn run_etc_fixed(
    ensemble: &dyn ModelEnsemble,
    subset: &Subset,
    m: u64,
    budget: f64,
    seed: u64,
) -> Result<LrmcEstimate, PolicyError> {
    let n = ensemble.n_regressors();
    subset.check_range(n).map_err(RegressError::from)?;
    if m < subset.len() as u64 + 2 {
        return Err(PolicyError::InvalidConfig(format!(
            "{subset} needs at least {} exploration rounds, got {m}",
            subset.len() + 2
        )));
    }
    let costs = ensemble.costs();
    let c_epr = costs.c_epr();
    let c_ept = costs.c_ept(subset);
    if !(budget >= m as f64 * c_epr) {
        return Err(PolicyError::InsufficientBudget {
            budget,
            needed: m as f64 * c_epr,
        });
    }
    let n_exploit = affordable_draws(budget, c_epr, m, c_ept);
    if n_exploit == 0 {
        return Err(PolicyError::NoExploitationBudget {
            subset: subset.clone(),
            m,
        });
    }
    let samples = sample_joint(ensemble, m as usize, &mut exploration_stream(seed))?;
    let log = ExplorationLog::from_samples(n, ensemble.response_dim(), &samples)?;
    let stats = fit_subset(&log, subset)?;
    let sum = regressor_sum(ensemble, subset, n_exploit as usize, exploitation_seed(seed))?;
    Ok(LrmcEstimate {
        value: lrmc_from_sum(&stats, &sum, n_exploit)?,
        subset: subset.clone(),
        n_exploit,
        m_explore: m,
        budget_spent: m as f64 * c_epr + n_exploit as f64 * c_ept,
    })
}

/// Trail as CSV: `t,S,mOpt,h,k1,k2,alpha,scored`.
pub fn write_trail_csv<W: Write>(trail: &[RoundRecord], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "S", "mOpt", "h", "k1", "k2", "alpha", "scored"])?;
    for r in trail {
        w.write_record([
            r.t.to_string(),
            r.best.as_ref().map(Subset::to_string).unwrap_or_default(),
            r.m_opt.to_string(),
            r.h.to_string(),
            r.k1.to_string(),
            r.k2.to_string(),
            r.alpha.to_string(),
            r.scored.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
