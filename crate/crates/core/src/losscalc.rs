//! Loss calculus for linear-regression Monte Carlo (LRMC) estimators.
//!
//! An LRMC estimate fits `f(Y) ≈ β_S (1, X_S)` on exploration data and then
//! averages the fitted predictions over cheap exploitation draws of `X_S`.
//! Its loss splits into an exploitation-variance term `k1 / (B − c_epr m)` and
//! an exploration-bias term `k2 / m`; everything here is built on that split.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ensemble::{CostSchedule, EnsembleError, SyntheticEnsemble};
use crate::linalg::{quad_form, with_intercept};
use crate::regress::{trace_risk_terms, RegressError, SubsetStats};
use crate::subset::{enumerate_subsets, Subset};

#[derive(Debug, thiserror::Error)]
pub enum LossError {
    #[error("no draws supplied")]
    EmptyDraws,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("Gram matrix is singular")]
    SingularGram,
    #[error(transparent)]
    Regress(#[from] RegressError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// Loss summary of one subset at a given budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossProfile {
    #[serde(rename = "S")]
    pub subset: Subset,
    pub k1: f64,
    /// Includes any regularization.
    pub k2: f64,
    /// Continuous minimizer of the loss in `m`, before rounding.
    #[serde(rename = "mOpt")]
    pub m_opt: f64,
    #[serde(rename = "optLoss")]
    pub opt_loss: f64,
    pub feasible: bool,
}

/// An LRMC estimate with its budget accounting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrmcEstimate {
    pub value: Vec<f64>,
    #[serde(rename = "S")]
    pub subset: Subset,
    #[serde(rename = "nExploit")]
    pub n_exploit: u64,
    #[serde(rename = "mExplore")]
    pub m_explore: u64,
    #[serde(rename = "budgetSpent")]
    pub budget_spent: f64,
}

/// Affordable exploitation draws after `m` exploration rounds:
/// `floor((B − c_epr m) / c_ept)`, never overspending `B` through round-off.
pub fn affordable_draws(budget: f64, c_epr: f64, m: u64, c_ept: f64) -> u64 {
    let remaining = budget - c_epr * m as f64;
    if remaining < c_ept {
        return 0;
    }
    let mut n = (remaining / c_ept).floor() as u64;
    while n > 0 && c_epr * m as f64 + n as f64 * c_ept > budget {
        n -= 1;
    }
    n
}

/// Applies `β̂` to `(1, mean)`.
pub fn predict_at_mean(stats: &SubsetStats, mean: &[f64]) -> Vec<f64> {
    let x = with_intercept(mean);
    (&stats.beta_hat * x).iter().copied().collect()
}

/// LRMC estimate from a sum of `count` exploitation draws.
pub fn lrmc_from_sum(stats: &SubsetStats, sum: &[f64], count: u64) -> Result<Vec<f64>, LossError> {
    if count == 0 {
        return Err(LossError::EmptyDraws);
    }
    check_width(stats, sum.len())?;
    let mean: Vec<f64> = sum.iter().map(|v| v / count as f64).collect();
    Ok(predict_at_mean(stats, &mean))
}

fn check_width(stats: &SubsetStats, width: usize) -> Result<(), LossError> {
    if width != stats.subset.len() {
        return Err(LossError::DimensionMismatch(format!(
            "draws have {width} coordinates, subset {} has {}",
            stats.subset,
            stats.subset.len()
        )));
    }
    Ok(())
}

fn column_sums(stats: &SubsetStats, draws: &[Vec<f64>]) -> Result<Vec<f64>, LossError> {
    let mut sum = vec![0.0; stats.subset.len()];
    for d in draws {
        check_width(stats, d.len())?;
        for (a, v) in sum.iter_mut().zip(d) {
            *a += v;
        }
    }
    Ok(sum)
}

/// `(1/N) Σ_ℓ β̂ (1, X_{S,ℓ})` over the exploitation draws.
pub fn lrmc(stats: &SubsetStats, exploit_draws: &[Vec<f64>]) -> Result<Vec<f64>, LossError> {
    if exploit_draws.is_empty() {
        return Err(LossError::EmptyDraws);
    }
    let sum = column_sums(stats, exploit_draws)?;
    lrmc_from_sum(stats, &sum, exploit_draws.len() as u64)
}

/// LRMC with the exploration regressors pooled into the average, each of the
/// `m + N` draws weighted `1 / (m + N)`.
pub fn lrmc_recycled(
    stats: &SubsetStats,
    exploration_regressors: &[Vec<f64>],
    exploit_draws: &[Vec<f64>],
) -> Result<Vec<f64>, LossError> {
    if exploration_regressors.is_empty() || exploit_draws.is_empty() {
        return Err(LossError::EmptyDraws);
    }
    let mut sum = column_sums(stats, exploit_draws)?;
    for (a, b) in sum.iter_mut().zip(column_sums(stats, exploration_regressors)?) {
        *a += b;
    }
    lrmc_from_sum(stats, &sum, (exploration_regressors.len() + exploit_draws.len()) as u64)
}

fn identity_if_none(q: Option<&DMatrix<f64>>, k0: usize) -> DMatrix<f64> {
    q.cloned().unwrap_or_else(|| DMatrix::identity(k0, k0))
}

/// Conditional (Q-)risk of LRMC given fitted coefficients:
/// `‖Q (β̂ − β) x‖² + tr(Σ β̂ᵀ QᵀQ β̂) / N`. For scalar responses with no `Q`
/// this is the squared bias plus `β̂ᵀ Σ β̂ / N`.
pub fn conditional_mse(
    beta_hat: &DMatrix<f64>,
    beta: &DMatrix<f64>,
    x: &DVector<f64>,
    sigma: &DMatrix<f64>,
    n_exploit: u64,
    q: Option<&DMatrix<f64>>,
) -> Result<f64, LossError> {
    if beta_hat.shape() != beta.shape() || beta.ncols() != x.len() || sigma.shape() != (x.len(), x.len()) {
        return Err(LossError::DimensionMismatch("coefficient, mean and covariance shapes disagree".into()));
    }
    if n_exploit == 0 {
        return Err(LossError::EmptyDraws);
    }
    let q = identity_if_none(q, beta.nrows());
    let bias = &q * ((beta_hat - beta) * x);
    let w = &q * beta_hat;
    let variance: f64 = w.row_iter().map(|r| quad_form(&r.iter().copied().collect::<Vec<_>>(), sigma)).sum();
    Ok(bias.norm_squared() + variance / n_exploit as f64)
}

/// Average of the conditional risk over exploration noise at a fixed design:
/// `(tr(Σ βᵀQᵀQβ) + tr(QΓQᵀ) tr(Σ G⁻¹)) / N + tr(QΓQᵀ) xᵀ G⁻¹ x`
/// with `G = Z_SᵀZ_S`.
pub fn avg_conditional_mse(
    beta: &DMatrix<f64>,
    x: &DVector<f64>,
    sigma: &DMatrix<f64>,
    gamma: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    n_exploit: u64,
    q: Option<&DMatrix<f64>>,
) -> Result<f64, LossError> {
    let w = x.len();
    if beta.ncols() != w || sigma.shape() != (w, w) || gram.shape() != (w, w) {
        return Err(LossError::DimensionMismatch("coefficient, mean, covariance and Gram shapes disagree".into()));
    }
    if gamma.shape() != (beta.nrows(), beta.nrows()) {
        return Err(LossError::DimensionMismatch("noise covariance does not match response dimension".into()));
    }
    if n_exploit == 0 {
        return Err(LossError::EmptyDraws);
    }
    let gram_inv = gram.clone().cholesky().ok_or(LossError::SingularGram)?.inverse();
    let q = identity_if_none(q, beta.nrows());
    let qb = &q * beta;
    let signal: f64 = qb.row_iter().map(|r| quad_form(&r.iter().copied().collect::<Vec<_>>(), sigma)).sum();
    let noise = (&q * gamma * q.transpose()).trace();
    let spread = (sigma * &gram_inv).trace();
    let bias = quad_form(x.as_slice(), &gram_inv);
    Ok((signal + noise * spread) / n_exploit as f64 + noise * bias)
}

/// `(k1, k2)` for a fitted subset:
/// `k1 = c_ept(S) tr(Σ̂ β̂ᵀQᵀQβ̂)`, `k2 = tr(QΓ̂Qᵀ) tr(x̂x̂ᵀΛ̂⁻¹) + α`.
///
/// With `q = None` a scalar response uses `β̂ᵀΣ̂β̂` and `σ̂²` directly and a
/// vector response uses `Q = I`.
pub fn k_coefficients(
    stats: &SubsetStats,
    costs: &CostSchedule,
    q: Option<&DMatrix<f64>>,
    alpha: f64,
) -> Result<(f64, f64), LossError> {
    if !(alpha >= 0.0) {
        return Err(LossError::Domain(format!("regularization must be nonnegative, got {alpha}")));
    }
    let (tr_beta, tr_gamma) = match (q, stats.sigma_hat_sq()) {
        (None, Some(sigma_sq)) => {
            let b: Vec<f64> = stats.beta_hat.row(0).iter().copied().collect();
            (quad_form(&b, &stats.sigma_hat).max(0.0), sigma_sq.max(0.0))
        }
        (None, None) => trace_risk_terms(stats, &DMatrix::identity(stats.response_dim(), stats.response_dim()))?,
        (Some(q), _) => trace_risk_terms(stats, q)?,
    };
    let leverage = quad_form(stats.x_hat.as_slice(), &stats.lambda_inv);
    let k1 = costs.c_ept(&stats.subset) * tr_beta;
    let k2 = tr_gamma * leverage + alpha;
    Ok((k1, k2))
}

fn check_budget(budget: f64, c_epr: f64, k1: f64, k2: f64) -> Result<(), LossError> {
    if !(budget > 0.0) || !(c_epr > 0.0) {
        return Err(LossError::Domain("budget and exploration cost must be positive".into()));
    }
    if !(k1 >= 0.0) {
        return Err(LossError::Domain(format!("k1 must be nonnegative, got {k1}")));
    }
    if !(k2 > 0.0) {
        return Err(LossError::Domain(format!("k2 must be positive, got {k2}")));
    }
    Ok(())
}

/// Continuous minimizer of `k1 / (B − c_epr m) + k2 / m`:
/// `B / (c_epr + √(c_epr k1 / k2))`. `k1 = 0` gives `B / c_epr`.
pub fn optimal_round(budget: f64, c_epr: f64, k1: f64, k2: f64) -> Result<f64, LossError> {
    check_budget(budget, c_epr, k1, k2)?;
    Ok(budget / (c_epr + (c_epr * k1 / k2).sqrt()))
}

/// Minimum of the loss over `m`: `(√k1 + √(c_epr k2))² / B`.
pub fn optimal_loss(budget: f64, c_epr: f64, k1: f64, k2: f64) -> Result<f64, LossError> {
    check_budget(budget, c_epr, k1, k2)?;
    let root = k1.sqrt() + (c_epr * k2).sqrt();
    Ok(root * root / budget)
}

/// Empirical average conditional MSE (or Q-risk) at exploration round `m`:
/// `k1 / (B − c_epr m) + k2 / m` for `0 < m < B / c_epr`.
pub fn empirical_mse(budget: f64, m: f64, c_epr: f64, k1: f64, k2: f64) -> Result<f64, LossError> {
    if !(m > 0.0) || !(c_epr * m < budget) {
        return Err(LossError::Domain(format!(
            "exploration round {m} outside (0, {})",
            budget / c_epr
        )));
    }
    Ok(k1 / (budget - c_epr * m) + k2 / m)
}

/// Large-`m` average loss of plain LRMC: `βᵀΣβ / N + σ² xᵀΛ⁻¹x / m`.
pub fn asymptotic_loss(signal: f64, noise_leverage: f64, m: f64, n_exploit: f64) -> f64 {
    signal / n_exploit + noise_leverage / m
}

/// First two terms of the large-`m` average loss of the recycled estimator:
/// `N / (N + m)² βᵀΣβ + σ² xᵀΛ⁻¹x / m`.
pub fn recycled_asymptotic_loss(signal: f64, noise_leverage: f64, m: f64, n_exploit: f64) -> f64 {
    n_exploit / ((n_exploit + m) * (n_exploit + m)) * signal + noise_leverage / m
}

/// Index of the best candidate: smallest loss, then smallest exploitation
/// cost, then lexicographically smallest subset.
pub fn select_best<'a, I>(candidates: I) -> Option<usize>
where
    I: IntoIterator<Item = (f64, f64, &'a Subset)>,
{
    let mut best: Option<(usize, f64, f64, &Subset)> = None;
    for (i, (loss, cost, subset)) in candidates.into_iter().enumerate() {
        if loss.is_nan() {
            continue;
        }
        let better = match best {
            None => true,
            Some((_, bl, bc, bs)) => {
                loss < bl || (loss == bl && (cost < bc || (cost == bc && subset.indices() < bs.indices())))
            }
        };
        if better {
            best = Some((i, loss, cost, subset));
        }
    }
    best.map(|b| b.0)
}

/// Oracle `(k1, k2)` profile of one subset of a synthetic ensemble.
pub fn oracle_profile(
    ensemble: &SyntheticEnsemble,
    subset: &Subset,
    q: Option<&DMatrix<f64>>,
    budget: f64,
) -> Result<LossProfile, LossError> {
    let oracle = ensemble.oracle_quantities(subset)?;
    let costs = &ensemble.spec().costs;
    let c_epr = costs.c_epr();
    let infeasible = |k1: f64, k2: f64| LossProfile {
        subset: subset.clone(),
        k1,
        k2,
        m_opt: f64::NAN,
        opt_loss: f64::INFINITY,
        feasible: false,
    };
    if oracle.degenerate {
        return Ok(infeasible(f64::NAN, f64::NAN));
    }
    let lambda_inv = match oracle.lambda.clone().cholesky() {
        Some(c) => c.inverse(),
        None => return Ok(infeasible(f64::NAN, f64::NAN)),
    };
    let k0 = oracle.beta.nrows();
    let (tr_beta, tr_gamma) = match (q, oracle.sigma_sq()) {
        (None, Some(sigma_sq)) => {
            let b: Vec<f64> = oracle.beta.row(0).iter().copied().collect();
            (quad_form(&b, &oracle.sigma), sigma_sq)
        }
        _ => {
            let q = identity_if_none(q, k0);
            if q.ncols() != k0 {
                return Err(LossError::DimensionMismatch(format!("Q has {} columns, k0 = {k0}", q.ncols())));
            }
            let qb = &q * &oracle.beta;
            let tb: f64 = qb.row_iter().map(|r| quad_form(&r.iter().copied().collect::<Vec<_>>(), &oracle.sigma)).sum();
            (tb, (&q * &oracle.gamma * q.transpose()).trace())
        }
    };
    let k1 = costs.c_ept(subset) * tr_beta.max(0.0);
    let k2 = tr_gamma.max(0.0) * quad_form(oracle.x.as_slice(), &lambda_inv);
    if !(k2 > 0.0) {
        // noiseless subset: the loss is k1 / (B − c_epr m) and exploration is free of bias
        return Ok(LossProfile {
            subset: subset.clone(),
            k1,
            k2,
            m_opt: f64::NAN,
            opt_loss: k1 / budget,
            feasible: true,
        });
    }
    Ok(LossProfile {
        subset: subset.clone(),
        k1,
        k2,
        m_opt: optimal_round(budget, c_epr, k1, k2)?,
        opt_loss: optimal_loss(budget, c_epr, k1, k2)?,
        feasible: true,
    })
}

/// Oracle-optimal subset and the per-subset profiles it was chosen from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSelection {
    pub best: Option<Subset>,
    pub profiles: Vec<LossProfile>,
}

impl OracleSelection {
    pub fn best_profile(&self) -> Option<&LossProfile> {
        let best = self.best.as_ref()?;
        self.profiles.iter().find(|p| &p.subset == best)
    }
}

/// Exhaustive search over nonempty subsets with at most `max_card` models.
pub fn oracle_best_subset(
    ensemble: &SyntheticEnsemble,
    q: Option<&DMatrix<f64>>,
    max_card: usize,
    budget: f64,
) -> Result<OracleSelection, LossError> {
    let n = ensemble.spec().mean_x.len();
    if max_card == 0 || max_card > n {
        return Err(LossError::Domain(format!("max cardinality {max_card} outside [1, {n}]")));
    }
    let costs = &ensemble.spec().costs;
    let profiles = enumerate_subsets(n, max_card)
        .iter()
        .map(|s| oracle_profile(ensemble, s, q, budget))
        .collect::<Result<Vec<_>, _>>()?;
    let best = select_best(
        profiles
            .iter()
            .filter(|p| p.feasible)
            .map(|p| (p.opt_loss, costs.c_ept(&p.subset), &p.subset)),
    );
    let best = best.map(|i| profiles.iter().filter(|p| p.feasible).nth(i).expect("index from filter").subset.clone());
    Ok(OracleSelection { best, profiles })
}

/// CSV with columns `S,k1,k2,mOpt,optLoss,feasible`.
pub fn write_profiles_csv<W: Write>(profiles: &[LossProfile], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["S", "k1", "k2", "mOpt", "optLoss", "feasible"])?;
    for p in profiles {
        w.write_record([
            p.subset.to_string(),
            p.k1.to_string(),
            p.k2.to_string(),
            p.m_opt.to_string(),
            p.opt_loss.to_string(),
            p.feasible.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
