//! Repeated-trial experiments over a budget grid.
//!
//! Each `(method, budget index, trial index)` triple gets its own seed,
//! `combine_seed([baseSeed, label_hash(tag), budget index, trial index])`.
//! `aetc` and `aetc-re` share the tag `"aetc"`, so trial `i` of both methods
//! sees the same exploration and exploitation draws and differs only in the
//! recycling step. Trials run in parallel; results are collected in job order,
//! so reports are identical for any thread count.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{run_mc, BaselineError};
use crate::ensemble::{EnsembleError, ModelEnsemble, SyntheticEnsemble, SyntheticLinearSpec};
use crate::losscalc::{oracle_best_subset, write_profiles_csv, LossError, OracleSelection};
use crate::policy::{run_aetc, run_etc_fixed, AetcConfig, PolicyError};
use crate::rng::{combine_seed, label_hash};
use crate::subset::Subset;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid trial spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Aetc,
    AetcRe,
    Mc,
    EtcFixed,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Aetc => "aetc",
            Method::AetcRe => "aetc-re",
            Method::Mc => "mc",
            Method::EtcFixed => "etc-fixed",
        }
    }

    fn seed_tag(self) -> u64 {
        match self {
            Method::Aetc | Method::AetcRe => label_hash("aetc"),
            other => label_hash(other.name()),
        }
    }
}

/// Fixed `(S, m)` for the `etc-fixed` method. Missing parts come from the
/// oracle at each budget: `S*` and `floor(m_{S*})`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EtcFixedConfig {
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<Subset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u64>,
}

fn default_trials() -> usize {
    1
}

fn default_methods() -> Vec<Method> {
    vec![Method::Aetc]
}

/// Experiment description; also the configuration file of the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    #[serde(rename = "ensembleSpec")]
    pub ensemble: SyntheticLinearSpec,
    /// Template for every AETC run; `budget`, `seed` and `recycle` are
    /// overridden per trial.
    #[serde(rename = "aetcConfig")]
    pub aetc: AetcConfig,
    #[serde(default)]
    pub budgets: Vec<f64>,
    #[serde(rename = "trialsPerBudget", default = "default_trials")]
    pub trials_per_budget: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(rename = "baseSeed", default)]
    pub base_seed: u64,
    /// Defaults to the exact mean of the synthetic ensemble.
    #[serde(rename = "groundTruth", default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<Vec<f64>>,
    #[serde(rename = "etcFixed", default, skip_serializing_if = "Option::is_none")]
    pub etc_fixed: Option<EtcFixedConfig>,
}

impl TrialSpec {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.budgets.is_empty() {
            return Err(HarnessError::InvalidSpec("budgets is empty".into()));
        }
        if self.budgets.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(HarnessError::InvalidSpec("budgets must be positive and finite".into()));
        }
        if self.budgets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HarnessError::InvalidSpec("budgets must be strictly increasing".into()));
        }
        if self.trials_per_budget == 0 {
            return Err(HarnessError::InvalidSpec("trialsPerBudget must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(HarnessError::InvalidSpec("methods is empty".into()));
        }
        Ok(())
    }
}

pub fn trial_seed(base_seed: u64, method: Method, budget_index: usize, trial: usize) -> u64 {
    combine_seed(&[base_seed, method.seed_tag(), budget_index as u64, trial as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRun {
    pub estimate: Vec<f64>,
    /// `‖Q (estimate − truth)‖²`, plain squared norm without `Q`.
    #[serde(rename = "sqError")]
    pub sq_error: f64,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub subset: Option<Subset>,
    #[serde(rename = "mExplore")]
    pub m_explore: u64,
    #[serde(rename = "nExploit")]
    pub n_exploit: u64,
    #[serde(rename = "budgetExhausted")]
    pub budget_exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub method: Method,
    #[serde(rename = "budgetIndex")]
    pub budget_index: usize,
    pub trial: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<TrialRun>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Summary of one `(method, budget)` cell. Quantiles and medians are `NaN`
/// when every trial in the cell failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub method: Method,
    pub budget: f64,
    pub trials: usize,
    pub failures: usize,
    #[serde(rename = "mseQ05")]
    pub mse_q05: f64,
    #[serde(rename = "mseQ50")]
    pub mse_q50: f64,
    #[serde(rename = "mseQ95")]
    pub mse_q95: f64,
    #[serde(rename = "mseMean")]
    pub mse_mean: f64,
    #[serde(rename = "medianMExplore")]
    pub median_m_explore: f64,
    #[serde(rename = "medianNExploit")]
    pub median_n_exploit: f64,
    /// Chosen-subset frequencies among successful trials.
    #[serde(rename = "subsetFrequency")]
    pub subset_frequency: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    #[serde(rename = "groundTruth")]
    pub ground_truth: Vec<f64>,
    /// Per-budget `(S, m)` used by `etc-fixed`, when that method ran.
    #[serde(rename = "etcFixedPlan", default, skip_serializing_if = "Vec::is_empty")]
    pub etc_fixed_plan: Vec<(Subset, u64)>,
    pub cells: Vec<ReportCell>,
    pub outcomes: Vec<TrialOutcome>,
}

impl TrialReport {
    pub fn cell(&self, method: Method, budget_index: usize) -> Option<&ReportCell> {
        let budget = self.budget_of(budget_index)?;
        self.cells.iter().find(|c| c.method == method && c.budget == budget)
    }

    fn budget_of(&self, budget_index: usize) -> Option<f64> {
        let mut budgets: Vec<f64> = self.cells.iter().map(|c| c.budget).collect();
        budgets.sort_by(f64::total_cmp);
        budgets.dedup();
        budgets.get(budget_index).copied()
    }

    pub fn outcomes_for(&self, method: Method, budget_index: usize) -> impl Iterator<Item = &TrialOutcome> {
        self.outcomes
            .iter()
            .filter(move |o| o.method == method && o.budget_index == budget_index)
    }
}

/// Linear-interpolation quantile of sorted data (`NaN` when empty).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        len => {
            let h = p.clamp(0.0, 1.0) * (len - 1) as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

fn risk(q: Option<&DMatrix<f64>>, estimate: &[f64], truth: &[f64]) -> f64 {
    let diff = DVector::from_iterator(truth.len(), estimate.iter().zip(truth).map(|(e, t)| e - t));
    match q {
        Some(q) => (q * diff).norm_squared(),
        None => diff.norm_squared(),
    }
}

struct Context<'a> {
    spec: &'a TrialSpec,
    ensemble: &'a dyn ModelEnsemble,
    truth: &'a [f64],
    q: Option<DMatrix<f64>>,
    etc_plan: Vec<(Subset, u64)>,
}

impl Context<'_> {
    fn run_one(&self, method: Method, budget_index: usize, trial: usize) -> TrialOutcome {
        let seed = trial_seed(self.spec.base_seed, method, budget_index, trial);
        let budget = self.spec.budgets[budget_index];
        let run = match method {
            Method::Aetc | Method::AetcRe => {
                let config = AetcConfig {
                    budget,
                    seed,
                    recycle: method == Method::AetcRe,
                    ..self.spec.aetc.clone()
                };
                run_aetc(self.ensemble, &config)
                    .map(|r| TrialRun {
                        sq_error: risk(self.q.as_ref(), &r.estimate, self.truth),
                        estimate: r.estimate,
                        subset: Some(r.chosen),
                        m_explore: r.m_explore,
                        n_exploit: r.n_exploit,
                        budget_exhausted: r.budget_exhausted,
                    })
                    .map_err(|e| e.to_string())
            }
            Method::Mc => run_mc(self.ensemble, budget, seed)
                .map(|r| TrialRun {
                    sq_error: risk(self.q.as_ref(), &r.value, self.truth),
                    estimate: r.value,
                    subset: None,
                    m_explore: 0,
                    n_exploit: r.n_samples,
                    budget_exhausted: false,
                })
                .map_err(|e| e.to_string()),
            Method::EtcFixed => {
                let (subset, m) = &self.etc_plan[budget_index];
                run_etc_fixed(self.ensemble, subset, *m, budget, seed)
                    .map(|r| TrialRun {
                        sq_error: risk(self.q.as_ref(), &r.value, self.truth),
                        estimate: r.value,
                        subset: Some(r.subset),
                        m_explore: r.m_explore,
                        n_exploit: r.n_exploit,
                        budget_exhausted: false,
                    })
                    .map_err(|e| e.to_string())
            }
        };
        let (run, error) = match run {
            Ok(r) => (Some(r), None),
            Err(e) => (None, Some(e)),
        };
        TrialOutcome {
            method,
            budget_index,
            trial,
            seed,
            run,
            error,
        }
    }
}

fn etc_plan(
    spec: &TrialSpec,
    ensemble: &SyntheticEnsemble,
    q: Option<&DMatrix<f64>>,
) -> Result<Vec<(Subset, u64)>, HarnessError> {
    let fixed = spec.etc_fixed.clone().unwrap_or_default();
    let n = spec.ensemble.mean_x.len();
    let max_card = spec.aetc.max_card.unwrap_or(n);
    spec.budgets
        .iter()
        .map(|&budget| {
            if let (Some(s), Some(m)) = (&fixed.subset, fixed.m) {
                return Ok((s.clone(), m));
            }
            let selection = oracle_best_subset(ensemble, q, max_card, budget)?;
            let subset = match &fixed.subset {
                Some(s) => s.clone(),
                None => selection
                    .best
                    .clone()
                    .ok_or_else(|| HarnessError::InvalidSpec("etc-fixed: no feasible oracle subset".into()))?,
            };
            let m = match fixed.m {
                Some(m) => m,
                None => {
                    let profile = selection
                        .profiles
                        .iter()
                        .find(|p| p.subset == subset)
                        .ok_or_else(|| HarnessError::InvalidSpec(format!("etc-fixed: {subset} exceeds maxCard")))?;
                    if !profile.m_opt.is_finite() {
                        return Err(HarnessError::InvalidSpec(format!(
                            "etc-fixed: oracle round for {subset} is undefined; set etcFixed.m"
                        )));
                    }
                    (profile.m_opt.floor() as u64).max(subset.len() as u64 + 2)
                }
            };
            Ok((subset, m))
        })
        .collect()
}

fn summarize(method: Method, budget: f64, outcomes: &[&TrialOutcome]) -> ReportCell {
    let runs: Vec<&TrialRun> = outcomes.iter().filter_map(|o| o.run.as_ref()).collect();
    let mut errors: Vec<f64> = runs.iter().map(|r| r.sq_error).collect();
    errors.sort_by(f64::total_cmp);
    let mean = if errors.is_empty() {
        f64::NAN
    } else {
        errors.iter().sum::<f64>() / errors.len() as f64
    };
    let mut frequency = BTreeMap::new();
    for r in &runs {
        if let Some(s) = &r.subset {
            *frequency.entry(s.to_string()).or_insert(0.0) += 1.0;
        }
    }
    for v in frequency.values_mut() {
        *v /= runs.len() as f64;
    }
    let m: Vec<f64> = runs.iter().map(|r| r.m_explore as f64).collect();
    let n: Vec<f64> = runs.iter().map(|r| r.n_exploit as f64).collect();
    ReportCell {
        method,
        budget,
        trials: outcomes.len(),
        failures: outcomes.len() - runs.len(),
        mse_q05: quantile_sorted(&errors, 0.05),
        mse_q50: quantile_sorted(&errors, 0.50),
        mse_q95: quantile_sorted(&errors, 0.95),
        mse_mean: mean,
        median_m_explore: median(&m),
        median_n_exploit: median(&n),
        subset_frequency: frequency,
    }
}

/// Runs every `(method, budget, trial)` job of a synthetic experiment.
pub fn run_trials(spec: &TrialSpec) -> Result<TrialReport, HarnessError> {
    spec.validate()?;
    let ensemble = SyntheticEnsemble::new(spec.ensemble.clone())?;
    let k0 = ensemble.spec().beta.len();
    let q = spec.aetc.q_matrix(k0)?;
    let truth = match &spec.ground_truth {
        Some(t) if t.len() != k0 => {
            return Err(HarnessError::InvalidSpec(format!("groundTruth has {} entries, k0 = {k0}", t.len())))
        }
        Some(t) => t.clone(),
        None => ensemble.response_mean().iter().copied().collect(),
    };
    let etc_plan = if spec.methods.contains(&Method::EtcFixed) {
        etc_plan(spec, &ensemble, q.as_ref())?
    } else {
        Vec::new()
    };
    let context = Context {
        spec,
        ensemble: &ensemble,
        truth: &truth,
        q,
        etc_plan,
    };
    let jobs: Vec<(Method, usize, usize)> = spec
        .methods
        .iter()
        .flat_map(|&m| (0..spec.budgets.len()).flat_map(move |b| (0..spec.trials_per_budget).map(move |i| (m, b, i))))
        .collect();
    let outcomes: Vec<TrialOutcome> = jobs.par_iter().map(|&(m, b, i)| context.run_one(m, b, i)).collect();

    let mut cells = Vec::new();
    for &method in &spec.methods {
        for (b, &budget) in spec.budgets.iter().enumerate() {
            let cell: Vec<&TrialOutcome> = outcomes
                .iter()
                .filter(|o| o.method == method && o.budget_index == b)
                .collect();
            cells.push(summarize(method, budget, &cell));
        }
    }
    let Context { etc_plan, .. } = context;
    Ok(TrialReport {
        ground_truth: truth,
        etc_fixed_plan: etc_plan,
        cells,
        outcomes,
    })
}

/// Report CSV, one row per `(method, budget)`. Subset frequencies are
/// `S:fraction` pairs joined by `;`.
pub fn write_report_csv<W: Write>(cells: &[ReportCell], writer: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "method",
        "budget",
        "trials",
        "failures",
        "mseQ05",
        "mseQ50",
        "mseQ95",
        "mseMean",
        "medianMExplore",
        "medianNExploit",
        "subsetFrequency",
    ])?;
    for c in cells {
        let freq: Vec<String> = c.subset_frequency.iter().map(|(s, f)| format!("{s}:{f}")).collect();
        w.write_record([
            c.method.name().to_string(),
            c.budget.to_string(),
            c.trials.to_string(),
            c.failures.to_string(),
            c.mse_q05.to_string(),
            c.mse_q50.to_string(),
            c.mse_q95.to_string(),
            c.mse_mean.to_string(),
            c.median_m_explore.to_string(),
            c.median_n_exploit.to_string(),
            freq.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Manifest<'a> {
    version: &'static str,
    spec: &'a TrialSpec,
    #[serde(rename = "groundTruth")]
    ground_truth: &'a [f64],
    #[serde(rename = "etcFixedPlan", skip_serializing_if = "<[_]>::is_empty")]
    etc_fixed_plan: &'a [(Subset, u64)],
    report: &'static str,
}

/// Writes `report.csv` and `manifest.json` into `dir`.
pub fn write_report(dir: &Path, spec: &TrialSpec, report: &TrialReport) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let mut csv_bytes = Vec::new();
    write_report_csv(&report.cells, &mut csv_bytes)?;
    fs::write(dir.join("report.csv"), csv_bytes)?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        spec,
        ground_truth: &report.ground_truth,
        etc_fixed_plan: &report.etc_fixed_plan,
        report: "report.csv",
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(dir.join("manifest.json"), json)?;
    Ok(())
}

/// Oracle loss table of every subset at `budget`.
pub fn oracle_report(
    spec: &SyntheticLinearSpec,
    budget: f64,
    q: Option<&DMatrix<f64>>,
    max_card: Option<usize>,
) -> Result<OracleSelection, HarnessError> {
    let ensemble = SyntheticEnsemble::new(spec.clone())?;
    let n = spec.mean_x.len();
    Ok(oracle_best_subset(&ensemble, q, max_card.unwrap_or(n), budget)?)
}

pub fn write_oracle_csv<W: Write>(selection: &OracleSelection, writer: W) -> Result<(), csv::Error> {
    write_profiles_csv(&selection.profiles, writer)
}

impl From<BaselineError> for HarnessError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::Ensemble(e) => HarnessError::Ensemble(e),
            other => HarnessError::InvalidSpec(other.to_string()),
        }
    }
}
