//! Model ensembles: one high-fidelity response and `n` low-fidelity regressors
//! with a per-query cost schedule.
//!
//! [`ModelEnsemble`] is the sampling interface the policies consume. The
//! synthetic [`SyntheticEnsemble`] is a linear-Gaussian (or affine-uniform)
//! family whose population regression quantities are available in closed
//! form through [`SyntheticEnsemble::oracle_quantities`].

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, is_symmetric_psd, psd_factor, symmetric_pinv};
use crate::rng::RandomStream;
use crate::subset::{Subset, SubsetError};

/// Draws per chunk when sampling in parallel. Fixed so chunk boundaries, and
/// therefore results, do not depend on the number of workers.
pub const SAMPLE_CHUNK: usize = 1 << 14;

/// Relative eigenvalue cutoff below which a restricted regressor covariance
/// is treated as singular by the oracle.
const ORACLE_SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error("invalid ensemble specification: {0}")]
    InvalidSpec(String),
    #[error("sample count must be at least 1")]
    ZeroCount,
    #[error(transparent)]
    Subset(#[from] SubsetError),
    #[error("sampler failed at draw {index}: {reason}")]
    Sampling { index: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSchedule {
    /// Cost of one high-fidelity query.
    pub c0: f64,
    /// Cost of one query of each low-fidelity model.
    pub c: Vec<f64>,
}

impl CostSchedule {
    pub fn new(c0: f64, c: Vec<f64>) -> Result<Self, EnsembleError> {
        let costs = Self { c0, c };
        costs.validate()?;
        Ok(costs)
    }

    pub fn validate(&self) -> Result<(), EnsembleError> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.c0) || !self.c.iter().all(|&v| ok(v)) {
            return Err(EnsembleError::InvalidSpec(
                "all costs must be finite and strictly positive".into(),
            ));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    /// Cost of one joint exploration round: every model, high fidelity included.
    pub fn c_epr(&self) -> f64 {
        self.c0 + self.c.iter().sum::<f64>()
    }

    /// Cost of one exploitation draw of the models in `subset`.
    pub fn c_ept(&self, subset: &Subset) -> f64 {
        subset.indices().iter().map(|&i| self.c[i]).sum()
    }
}

/// One exploration draw: all regressors and the response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSample {
    pub regressors: Vec<f64>,
    pub response: Vec<f64>,
}

/// Joint sampling interface over the model family.
///
/// Implementors provide the two `*_into` draws; they write into caller-owned
/// buffers so hot loops stay allocation free. Failures are reported as
/// strings and wrapped with the failing draw index by the sampling helpers.
pub trait ModelEnsemble: Sync {
    fn n_regressors(&self) -> usize;

    fn response_dim(&self) -> usize;

    fn costs(&self) -> &CostSchedule;

    fn draw_joint_into(
        &self,
        rng: &mut RandomStream,
        regressors: &mut [f64],
        response: &mut [f64],
    ) -> Result<(), String>;

    /// Draws the `subset` coordinates only. The default draws a joint sample
    /// and restricts it.
    fn draw_regressors_into(
        &self,
        subset: &Subset,
        rng: &mut RandomStream,
        out: &mut [f64],
    ) -> Result<(), String> {
        let mut x = vec![0.0; self.n_regressors()];
        let mut y = vec![0.0; self.response_dim()];
        self.draw_joint_into(rng, &mut x, &mut y)?;
        for (o, &i) in out.iter_mut().zip(subset.indices()) {
            *o = x[i];
        }
        Ok(())
    }

    /// Draws the high-fidelity response only.
    fn draw_response_into(&self, rng: &mut RandomStream, out: &mut [f64]) -> Result<(), String> {
        let mut x = vec![0.0; self.n_regressors()];
        self.draw_joint_into(rng, &mut x, out)
    }
}

/// `count` independent joint draws. The caller charges `count · c_epr`.
pub fn sample_joint(
    ensemble: &dyn ModelEnsemble,
    count: usize,
    stream: &mut RandomStream,
) -> Result<Vec<JointSample>, EnsembleError> {
    if count == 0 {
        return Err(EnsembleError::ZeroCount);
    }
    let n = ensemble.n_regressors();
    let k0 = ensemble.response_dim();
    (0..count)
        .map(|index| {
            let mut s = JointSample {
                regressors: vec![0.0; n],
                response: vec![0.0; k0],
            };
            ensemble
                .draw_joint_into(stream, &mut s.regressors, &mut s.response)
                .map_err(|reason| EnsembleError::Sampling { index, reason })?;
            Ok(s)
        })
        .collect()
}

/// `count` independent draws of the `subset` coordinates. The caller charges
/// `count · c_ept(subset)`.
pub fn sample_regressors(
    ensemble: &dyn ModelEnsemble,
    subset: &Subset,
    count: usize,
    stream: &mut RandomStream,
) -> Result<Vec<Vec<f64>>, EnsembleError> {
    if count == 0 {
        return Err(EnsembleError::ZeroCount);
    }
    subset.check_range(ensemble.n_regressors())?;
    (0..count)
        .map(|index| {
            let mut x = vec![0.0; subset.len()];
            ensemble
                .draw_regressors_into(subset, stream, &mut x)
                .map_err(|reason| EnsembleError::Sampling { index, reason })?;
            Ok(x)
        })
        .collect()
}

/// Sums `count` draws produced by `draw`, in fixed-size chunks that run in
/// parallel. Chunk `i` uses the stream `(seed, label, i)` and partial sums
/// are combined in chunk order.
fn chunked_sum<F>(count: usize, dim: usize, seed: u64, label: &str, draw: F) -> Result<Vec<f64>, EnsembleError>
where
    F: Fn(&mut RandomStream, &mut [f64]) -> Result<(), String> + Sync,
{
    let chunks = count.div_ceil(SAMPLE_CHUNK);
    let partials: Vec<Result<Vec<f64>, EnsembleError>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut stream = RandomStream::derive(seed, label, chunk as u64);
            let start = chunk * SAMPLE_CHUNK;
            let end = (start + SAMPLE_CHUNK).min(count);
            let mut acc = vec![0.0; dim];
            let mut buf = vec![0.0; dim];
            for index in start..end {
                draw(&mut stream, &mut buf).map_err(|reason| EnsembleError::Sampling { index, reason })?;
                for (a, b) in acc.iter_mut().zip(&buf) {
                    *a += b;
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![0.0; dim];
    for partial in partials {
        for (t, p) in total.iter_mut().zip(partial?) {
            *t += p;
        }
    }
    Ok(total)
}

/// Coordinate-wise sum of `count` fresh draws of the `subset` regressors.
pub fn regressor_sum(
    ensemble: &dyn ModelEnsemble,
    subset: &Subset,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>, EnsembleError> {
    if count == 0 {
        return Err(EnsembleError::ZeroCount);
    }
    subset.check_range(ensemble.n_regressors())?;
    chunked_sum(count, subset.len(), seed, "regressors", |rng, out| {
        ensemble.draw_regressors_into(subset, rng, out)
    })
}

/// Coordinate-wise sum of `count` fresh high-fidelity draws.
pub fn response_sum(ensemble: &dyn ModelEnsemble, count: usize, seed: u64) -> Result<Vec<f64>, EnsembleError> {
    if count == 0 {
        return Err(EnsembleError::ZeroCount);
    }
    chunked_sum(count, ensemble.response_dim(), seed, "response", |rng, out| {
        ensemble.draw_response_into(rng, out)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RegressorLaw {
    #[default]
    Gaussian,
    /// `meanX + L u` with `u` independent uniforms scaled to unit variance.
    UniformAffine,
}

/// JSON shape for matrices that may be written as a bare vector (one row) or
/// a bare number (1×1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixRepr {
    Scalar(f64),
    Row(Vec<f64>),
    Rows(Vec<Vec<f64>>),
}

mod matrix_serde {
    use super::MatrixRepr;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(rows: &[Vec<f64>], serializer: S) -> Result<S::Ok, S::Error> {
        rows.serialize(serializer)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<Vec<f64>>, D::Error> {
        Ok(match MatrixRepr::deserialize(deserializer)? {
            MatrixRepr::Scalar(v) => vec![vec![v]],
            MatrixRepr::Row(r) => vec![r],
            MatrixRepr::Rows(r) => r,
        })
    }
}

/// Ground-truth linear model: `X ~ law(meanX, covX)`,
/// `f(Y) = beta · (1, X) + ε` with `ε ~ N(0, noiseCov)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticLinearSpec {
    #[serde(rename = "meanX")]
    pub mean_x: Vec<f64>,
    #[serde(rename = "covX", with = "matrix_serde")]
    pub cov_x: Vec<Vec<f64>>,
    /// `k0 × (n + 1)`, intercept column first.
    #[serde(with = "matrix_serde")]
    pub beta: Vec<Vec<f64>>,
    #[serde(rename = "noiseCov", with = "matrix_serde")]
    pub noise_cov: Vec<Vec<f64>>,
    pub costs: CostSchedule,
    #[serde(rename = "regressorLaw", default)]
    pub regressor_law: RegressorLaw,
    #[serde(default)]
    pub seed: u64,
}

fn to_matrix(rows: &[Vec<f64>], name: &str) -> Result<DMatrix<f64>, EnsembleError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(EnsembleError::InvalidSpec(format!("{name}: ragged rows")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(EnsembleError::InvalidSpec(format!("{name}: non-finite entry")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl SyntheticLinearSpec {
    /// Gaussian one-factor completion from per-model marginals.
    ///
    /// Inputs are the response mean and standard deviation, and for every
    /// low-fidelity model its mean, standard deviation and correlation with
    /// the response. A single latent factor `Z` drives everything:
    /// `f = mean_f + sd_f Z` and `X_i = mean_i + sd_i (ρ_i Z + √(1-ρ_i²) e_i)`,
    /// which pins the cross-regressor correlations to `ρ_i ρ_j`.
    pub fn one_factor(
        response_mean: f64,
        response_sd: f64,
        means: &[f64],
        sds: &[f64],
        correlations: &[f64],
        costs: CostSchedule,
    ) -> Result<Self, EnsembleError> {
        let n = means.len();
        if sds.len() != n || correlations.len() != n || costs.n() != n {
            return Err(EnsembleError::InvalidSpec("one-factor inputs disagree on n".into()));
        }
        if correlations.iter().any(|r| r.abs() >= 1.0) || sds.iter().any(|&s| s <= 0.0) || response_sd <= 0.0 {
            return Err(EnsembleError::InvalidSpec(
                "one-factor completion needs |ρ| < 1 and positive standard deviations".into(),
            ));
        }
        let cov_x = DMatrix::from_fn(n, n, |i, j| {
            let corr = if i == j { 1.0 } else { correlations[i] * correlations[j] };
            corr * sds[i] * sds[j]
        });
        let cross = DVector::from_fn(n, |i, _| correlations[i] * sds[i] * response_sd);
        let chol = cov_x
            .clone()
            .cholesky()
            .ok_or_else(|| EnsembleError::InvalidSpec("one-factor covariance not positive definite".into()))?;
        let slope = chol.solve(&cross);
        let explained = cross.dot(&slope);
        let noise = (response_sd * response_sd - explained).max(0.0);
        let intercept = response_mean - slope.iter().zip(means).map(|(b, m)| b * m).sum::<f64>();
        let mut beta = vec![intercept];
        beta.extend(slope.iter());
        Ok(Self {
            mean_x: means.to_vec(),
            cov_x: to_rows(&cov_x),
            beta: vec![beta],
            noise_cov: vec![vec![noise]],
            costs,
            regressor_law: RegressorLaw::Gaussian,
            seed: 0,
        })
    }

    /// One-factor ensemble calibrated to the published compliance statistics
    /// of the square-domain elasticity problem (six low-fidelity models).
    pub fn square_domain_compliance() -> Self {
        Self::one_factor(
            9.641,
            0.127,
            &[9.197, 8.749, 8.287, 7.782, 7.141, 6.160],
            &[0.113, 0.099, 0.086, 0.072, 0.052, 0.027],
            &[0.998, 0.992, 0.976, 0.940, 0.841, -0.146],
            CostSchedule::new(4096.0, vec![1024.0, 256.0, 64.0, 16.0, 4.0, 1.0]).expect("positive costs"),
        )
        .expect("valid calibration")
    }

    /// Same for the L-shaped domain.
    pub fn l_shape_compliance() -> Self {
        Self::one_factor(
            25.940,
            0.290,
            &[24.256, 22.902, 21.180, 19.054, 16.072, 12.275],
            &[0.242, 0.195, 0.149, 0.104, 0.061, 0.070],
            &[0.999, 0.995, 0.980, 0.932, 0.733, -0.344],
            CostSchedule::new(4096.0, vec![1024.0, 256.0, 64.0, 16.0, 4.0, 1.0]).expect("positive costs"),
        )
        .expect("valid calibration")
    }
}

/// Population quantities of the regression of `f(Y)` on `(1, X_S)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleStats {
    pub subset: Subset,
    /// `E[(1, X_S)]`.
    pub x: DVector<f64>,
    /// `Cov[(1, X_S)]`; the intercept row and column are zero.
    pub sigma: DMatrix<f64>,
    /// `k0 × (s+1)` projection coefficients.
    pub beta: DMatrix<f64>,
    /// Residual covariance of the projection.
    pub gamma: DMatrix<f64>,
    /// `x xᵀ + Σ`.
    pub lambda: DMatrix<f64>,
    /// Set when `Cov[X_S]` is singular; `beta` then uses the pseudoinverse.
    pub degenerate: bool,
}

impl OracleStats {
    /// Residual variance for scalar responses.
    pub fn sigma_sq(&self) -> Option<f64> {
        (self.gamma.nrows() == 1).then(|| self.gamma[(0, 0)])
    }
}

/// Validated [`SyntheticLinearSpec`] with precomputed sampling factors.
#[derive(Debug, Clone)]
pub struct SyntheticEnsemble {
    spec: SyntheticLinearSpec,
    mean_x: DVector<f64>,
    cov_x: DMatrix<f64>,
    beta: DMatrix<f64>,
    noise_cov: DMatrix<f64>,
    x_factor: DMatrix<f64>,
    noise_factor: DMatrix<f64>,
}

impl SyntheticEnsemble {
    pub fn new(spec: SyntheticLinearSpec) -> Result<Self, EnsembleError> {
        spec.costs.validate()?;
        let n = spec.mean_x.len();
        if n == 0 {
            return Err(EnsembleError::InvalidSpec("need at least one low-fidelity model".into()));
        }
        if spec.costs.n() != n {
            return Err(EnsembleError::InvalidSpec(format!(
                "costs list {} low-fidelity models, meanX has {n}",
                spec.costs.n()
            )));
        }
        let mean_x = DVector::from_vec(spec.mean_x.clone());
        if mean_x.iter().any(|v| !v.is_finite()) {
            return Err(EnsembleError::InvalidSpec("meanX: non-finite entry".into()));
        }
        let cov_x = to_matrix(&spec.cov_x, "covX")?;
        let beta = to_matrix(&spec.beta, "beta")?;
        let noise_cov = to_matrix(&spec.noise_cov, "noiseCov")?;
        if cov_x.shape() != (n, n) {
            return Err(EnsembleError::InvalidSpec(format!("covX must be {n}×{n}")));
        }
        let k0 = beta.nrows();
        if k0 == 0 || beta.ncols() != n + 1 {
            return Err(EnsembleError::InvalidSpec(format!("beta must be k0×{}", n + 1)));
        }
        if noise_cov.shape() != (k0, k0) {
            return Err(EnsembleError::InvalidSpec(format!("noiseCov must be {k0}×{k0}")));
        }
        if !is_symmetric_psd(&cov_x) {
            return Err(EnsembleError::InvalidSpec("covX is not symmetric positive semidefinite".into()));
        }
        if !is_symmetric_psd(&noise_cov) {
            return Err(EnsembleError::InvalidSpec(
                "noiseCov is not symmetric positive semidefinite".into(),
            ));
        }
        let x_factor = psd_factor(&cov_x);
        let noise_factor = psd_factor(&noise_cov);
        Ok(Self {
            spec,
            mean_x,
            cov_x,
            beta,
            noise_cov,
            x_factor,
            noise_factor,
        })
    }

    pub fn spec(&self) -> &SyntheticLinearSpec {
        &self.spec
    }

    pub fn mean_x(&self) -> &DVector<f64> {
        &self.mean_x
    }

    pub fn cov_x(&self) -> &DMatrix<f64> {
        &self.cov_x
    }

    pub fn beta(&self) -> &DMatrix<f64> {
        &self.beta
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }

    fn slope(&self) -> DMatrix<f64> {
        self.beta.columns(1, self.mean_x.len()).into_owned()
    }

    /// Exact `E[f(Y)] = beta · (1, meanX)`.
    pub fn response_mean(&self) -> DVector<f64> {
        &self.beta * linalg::with_intercept(self.mean_x.as_slice())
    }

    /// Exact `Cov[f(Y)]`.
    pub fn response_cov(&self) -> DMatrix<f64> {
        let b = self.slope();
        linalg::symmetrize(&b * &self.cov_x * b.transpose() + &self.noise_cov)
    }

    /// Population projection of `f(Y)` on `(1, X_S)`.
    ///
    /// The coefficients are the Gaussian conditioning formulas
    /// `B C_{·S} C_{SS}⁻¹`; they are the population least-squares projection
    /// under either regressor law. A singular `C_{SS}` is replaced by its
    /// pseudoinverse and the result is flagged `degenerate`. The full model
    /// returns the generating coefficients untouched.
    pub fn oracle_quantities(&self, subset: &Subset) -> Result<OracleStats, EnsembleError> {
        let n = self.mean_x.len();
        subset.check_range(n)?;
        let idx = subset.indices();
        let s = idx.len();
        let mu_s: Vec<f64> = idx.iter().map(|&i| self.mean_x[i]).collect();
        let x = linalg::with_intercept(&mu_s);
        let c_ss = linalg::restrict(&self.cov_x, idx);
        let sigma = linalg::pad_intercept(&c_ss);
        let lambda = &x * x.transpose() + &sigma;

        let (beta, gamma, degenerate) = if s == n {
            let (_, singular) = symmetric_pinv(&c_ss, ORACLE_SINGULAR_TOL);
            (self.beta.clone(), self.noise_cov.clone(), singular)
        } else {
            let (c_ss_pinv, singular) = symmetric_pinv(&c_ss, ORACLE_SINGULAR_TOL);
            let c_xs = DMatrix::from_fn(n, s, |i, j| self.cov_x[(i, idx[j])]);
            let b = self.slope();
            let slope_s = &b * &c_xs * &c_ss_pinv;
            let intercept = self.response_mean() - &slope_s * DVector::from_vec(mu_s);
            let mut beta = DMatrix::zeros(b.nrows(), s + 1);
            beta.set_column(0, &intercept);
            beta.columns_mut(1, s).copy_from(&slope_s);
            let unexplained = &self.cov_x - &c_xs * &c_ss_pinv * c_xs.transpose();
            let gamma = linalg::symmetrize(&self.noise_cov + &b * unexplained * b.transpose());
            (beta, gamma, singular)
        };
        Ok(OracleStats {
            subset: subset.clone(),
            x,
            sigma,
            beta,
            gamma,
            lambda,
            degenerate,
        })
    }

    fn draw_x(&self, rng: &mut RandomStream, out: &mut [f64]) {
        let n = self.mean_x.len();
        let mut z = vec![0.0; n];
        match self.spec.regressor_law {
            RegressorLaw::Gaussian => {
                for v in z.iter_mut() {
                    *v = StandardNormal.sample(rng);
                }
            }
            RegressorLaw::UniformAffine => {
                let u = Uniform::new_inclusive(-1.0f64, 1.0).expect("valid bounds");
                for v in z.iter_mut() {
                    *v = 3f64.sqrt() * u.sample(rng);
                }
            }
        }
        for i in 0..n {
            let mut acc = self.mean_x[i];
            for (j, zj) in z.iter().enumerate() {
                acc += self.x_factor[(i, j)] * zj;
            }
            out[i] = acc;
        }
    }
}

impl ModelEnsemble for SyntheticEnsemble {
    fn n_regressors(&self) -> usize {
        self.mean_x.len()
    }

    fn response_dim(&self) -> usize {
        self.beta.nrows()
    }

    fn costs(&self) -> &CostSchedule {
        &self.spec.costs
    }

    fn draw_joint_into(
        &self,
        rng: &mut RandomStream,
        regressors: &mut [f64],
        response: &mut [f64],
    ) -> Result<(), String> {
        self.draw_x(rng, regressors);
        let k0 = self.beta.nrows();
        let xi: Vec<f64> = (0..k0).map(|_| StandardNormal.sample(rng)).collect();
        for (r, out) in response.iter_mut().enumerate() {
            let mut acc = self.beta[(r, 0)];
            for (i, x) in regressors.iter().enumerate() {
                acc += self.beta[(r, i + 1)] * x;
            }
            for (j, e) in xi.iter().enumerate() {
                acc += self.noise_factor[(r, j)] * e;
            }
            *out = acc;
        }
        Ok(())
    }

    fn draw_regressors_into(
        &self,
        subset: &Subset,
        rng: &mut RandomStream,
        out: &mut [f64],
    ) -> Result<(), String> {
        let mut x = vec![0.0; self.mean_x.len()];
        self.draw_x(rng, &mut x);
        for (o, &i) in out.iter_mut().zip(subset.indices()) {
            *o = x[i];
        }
        Ok(())
    }
}

type JointSampler = dyn Fn(&mut RandomStream, &mut [f64], &mut [f64]) -> Result<(), String> + Send + Sync;

/// Ensemble backed by a user-supplied sampling closure. No oracle quantities.
pub struct FnEnsemble {
    n: usize,
    k0: usize,
    costs: CostSchedule,
    sampler: Box<JointSampler>,
}

impl FnEnsemble {
    pub fn new<F>(n: usize, k0: usize, costs: CostSchedule, sampler: F) -> Result<Self, EnsembleError>
    where
        F: Fn(&mut RandomStream, &mut [f64], &mut [f64]) -> Result<(), String> + Send + Sync + 'static,
    {
        costs.validate()?;
        if costs.n() != n || n == 0 || k0 == 0 {
            return Err(EnsembleError::InvalidSpec("dimensions disagree with the cost schedule".into()));
        }
        Ok(Self {
            n,
            k0,
            costs,
            sampler: Box::new(sampler),
        })
    }
}

impl ModelEnsemble for FnEnsemble {
    fn n_regressors(&self) -> usize {
        self.n
    }

    fn response_dim(&self) -> usize {
        self.k0
    }

    fn costs(&self) -> &CostSchedule {
        &self.costs
    }

    fn draw_joint_into(
        &self,
        rng: &mut RandomStream,
        regressors: &mut [f64],
        response: &mut [f64],
    ) -> Result<(), String> {
        (self.sampler)(rng, regressors, response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn point_mass() -> SyntheticEnsemble {
        SyntheticEnsemble::new(SyntheticLinearSpec {
            mean_x: vec![1.0, 2.0],
            cov_x: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
            beta: vec![vec![0.0, 3.0, 4.0]],
            noise_cov: vec![vec![0.0]],
            costs: CostSchedule::new(1.0, vec![0.1, 0.1]).unwrap(),
            regressor_law: RegressorLaw::Gaussian,
            seed: 0,
        })
        .unwrap()
    }

    fn gaussian_pair(mean2: f64, noise: f64) -> SyntheticEnsemble {
        SyntheticEnsemble::new(SyntheticLinearSpec {
            mean_x: vec![0.5, mean2],
            cov_x: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            beta: vec![vec![0.0, 1.0, 1.0]],
            noise_cov: vec![vec![noise]],
            costs: CostSchedule::new(1.0, vec![0.1, 0.2]).unwrap(),
            regressor_law: RegressorLaw::Gaussian,
            seed: 0,
        })
        .unwrap()
    }

    #[test]
    fn costs() {
        let c = CostSchedule::new(4.0, vec![1.0, 0.5, 0.25]).unwrap();
        assert_eq!(c.c_epr(), 5.75);
        assert_eq!(c.c_ept(&Subset::from_one_based(&[1, 3]).unwrap()), 1.25);
        assert!(CostSchedule::new(0.0, vec![1.0]).is_err());
        assert!(CostSchedule::new(1.0, vec![-1.0]).is_err());
    }

    #[test]
    fn point_mass_draws() {
        let ens = point_mass();
        let mut rng = RandomStream::from_seed(1);
        for s in sample_joint(&ens, 20, &mut rng).unwrap() {
            assert_eq!(s.regressors, vec![1.0, 2.0]);
            assert_eq!(s.response, vec![11.0]);
        }
        let s2 = Subset::from_one_based(&[2]).unwrap();
        for x in sample_regressors(&ens, &s2, 10, &mut rng).unwrap() {
            assert_eq!(x, vec![2.0]);
        }
        assert!(matches!(sample_joint(&ens, 0, &mut rng), Err(EnsembleError::ZeroCount)));
        assert!(Subset::new(vec![]).is_err());
    }

    #[test]
    fn point_mass_oracle() {
        let ens = point_mass();
        for s in crate::subset::enumerate_subsets(2, 2) {
            let o = ens.oracle_quantities(&s).unwrap();
            assert!(o.sigma.iter().all(|v| *v == 0.0));
            assert_eq!(o.lambda, &o.x * o.x.transpose());
            assert!(o.degenerate);
        }
    }

    #[test]
    fn full_model_oracle_is_generating_model() {
        let ens = gaussian_pair(2.0, 0.3);
        let o = ens.oracle_quantities(&Subset::full(2)).unwrap();
        assert_eq!(&o.beta, ens.beta());
        assert_eq!(&o.gamma, ens.noise_cov());
        assert!(!o.degenerate);
    }

    #[test]
    fn dropped_regressor_moves_into_intercept_and_noise() {
        let ens = gaussian_pair(2.0, 0.3);
        let o = ens.oracle_quantities(&Subset::from_one_based(&[1]).unwrap()).unwrap();
        assert!((o.beta[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((o.beta[(0, 1)] - 1.0).abs() < 1e-14);
        assert!((o.sigma_sq().unwrap() - 1.3).abs() < 1e-14);
    }

    #[test]
    fn sampler_failure_reports_index() {
        let costs = CostSchedule::new(1.0, vec![1.0]).unwrap();
        let counter = std::sync::atomic::AtomicUsize::new(0);
        let ens = FnEnsemble::new(1, 1, costs, move |_rng, x, y| {
            let k = counter.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
            if k == 3 {
                return Err("solver diverged".into());
            }
            x[0] = 1.0;
            y[0] = 2.0;
            Ok(())
        })
        .unwrap();
        let err = sample_joint(&ens, 10, &mut RandomStream::from_seed(0)).unwrap_err();
        assert!(matches!(err, EnsembleError::Sampling { index: 3, .. }));
    }

    #[test]
    fn spec_validation() {
        let mut spec = point_mass().spec().clone();
        spec.cov_x = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(SyntheticEnsemble::new(spec).is_err());
        let mut spec = point_mass().spec().clone();
        spec.beta = vec![vec![0.0, 1.0]];
        assert!(SyntheticEnsemble::new(spec).is_err());
    }

    #[test]
    fn json_field_names_and_shorthand() {
        let json = r#"{
            "meanX": [1, 2], "covX": [[0, 0], [0, 0]], "beta": [0, 3, 4],
            "noiseCov": 0, "costs": {"c0": 1, "c": [0.1, 0.1]},
            "regressorLaw": "uniform-affine", "seed": 9
        }"#;
        let spec: SyntheticLinearSpec = serde_json::from_str(json).unwrap();
        assert_eq!(spec.beta, vec![vec![0.0, 3.0, 4.0]]);
        assert_eq!(spec.noise_cov, vec![vec![0.0]]);
        assert_eq!(spec.regressor_law, RegressorLaw::UniformAffine);
        let text = serde_json::to_string(&spec).unwrap();
        for key in ["meanX", "covX", "beta", "noiseCov", "costs", "c0", "regressorLaw", "seed"] {
            assert!(text.contains(&format!("\"{key}\"")), "{key} missing from {text}");
        }
        let back: SyntheticLinearSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn one_factor_reproduces_marginals() {
        let spec = SyntheticLinearSpec::square_domain_compliance();
        let ens = SyntheticEnsemble::new(spec).unwrap();
        assert!((ens.response_mean()[0] - 9.641).abs() < 1e-10);
        let var_f = ens.response_cov()[(0, 0)];
        assert!((var_f.sqrt() - 0.127).abs() < 1e-10);
        let corr = [0.998, 0.992, 0.976, 0.940, 0.841, -0.146];
        let sds = [0.113, 0.099, 0.086, 0.072, 0.052, 0.027];
        let b = ens.beta().columns(1, 6).into_owned();
        let cross = ens.cov_x() * b.transpose();
        for i in 0..6 {
            let rho = cross[(i, 0)] / (sds[i] * 0.127);
            assert!((rho - corr[i]).abs() < 1e-10, "model {i}: {rho}");
        }
    }
}
