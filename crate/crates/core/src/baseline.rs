//! Single-fidelity Monte Carlo: spend the whole budget on the high-fidelity model.

use serde::{Deserialize, Serialize};

use crate::ensemble::{response_sum, EnsembleError, ModelEnsemble};
use crate::rng::{combine_seed, label_hash};

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("budget {budget} cannot afford one high-fidelity sample at cost {c0}")]
    InsufficientBudget { budget: f64, c0: f64 },
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: Vec<f64>,
    #[serde(rename = "nSamples")]
    pub n_samples: u64,
    #[serde(rename = "budgetSpent")]
    pub budget_spent: f64,
}

/// Sample count `floor(B / c0)`; leftover budget stays unspent.
pub fn mc_sample_count(budget: f64, c0: f64) -> u64 {
    if !(budget.is_finite() && budget > 0.0) {
        return 0;
    }
    (budget / c0).floor() as u64
}

pub fn run_mc(ensemble: &dyn ModelEnsemble, budget: f64, seed: u64) -> Result<McEstimate, BaselineError> {
    let c0 = ensemble.costs().c0;
    let n_samples = mc_sample_count(budget, c0);
    if n_samples == 0 {
        return Err(BaselineError::InsufficientBudget { budget, c0 });
    }
    let sum = response_sum(ensemble, n_samples as usize, combine_seed(&[seed, label_hash("mc")]))?;
    Ok(McEstimate {
        value: sum.into_iter().map(|s| s / n_samples as f64).collect(),
        n_samples,
        budget_spent: n_samples as f64 * c0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{CostSchedule, RegressorLaw, SyntheticEnsemble, SyntheticLinearSpec};

    fn point_mass() -> SyntheticEnsemble {
        SyntheticEnsemble::new(SyntheticLinearSpec {
            mean_x: vec![1.0, 2.0],
            cov_x: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            beta: vec![vec![0.0, 3.0, 4.0]],
            noise_cov: vec![vec![0.0]],
            costs: CostSchedule::new(2.0, vec![0.1, 0.1]).unwrap(),
            regressor_law: RegressorLaw::Gaussian,
            seed: 0,
        })
        .unwrap()
    }

    #[test]
    fn point_mass_is_exact() {
        for budget in [2.0, 7.3, 1000.0] {
            let r = run_mc(&point_mass(), budget, 9).unwrap();
            assert_eq!(r.value, vec![11.0]);
        }
    }

    #[test]
    fn floors_sample_count() {
        let r = run_mc(&point_mass(), 5.0, 0).unwrap();
        assert_eq!(r.n_samples, 2);
        assert_eq!(r.budget_spent, 4.0);
    }

    #[test]
    fn rejects_tiny_budget() {
        assert!(matches!(
            run_mc(&point_mass(), 1.9, 0),
            Err(BaselineError::InsufficientBudget { .. })
        ));
        assert!(run_mc(&point_mass(), f64::NAN, 0).is_err());
    }
}
