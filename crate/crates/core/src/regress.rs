//! Least-squares fits and moment estimates from exploration data.
//!
//! [`fit_subset`] is the reference batch computation: a Householder QR of the
//! design matrix. [`IncrementalFit`] maintains the same triangular factor
//! under row appends (Givens rotations) so a policy can refit every subset
//! after each exploration round in `O(s²)` work. Neither ever forms or
//! inverts `ZᵀZ` directly.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};

use crate::ensemble::JointSample;
use crate::linalg::{quad_form, symmetrize};
use crate::subset::{Subset, SubsetError};

/// Designs whose triangular factor has a condition number above this are
/// treated as rank deficient.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, thiserror::Error)]
pub enum RegressError {
    #[error(transparent)]
    Subset(#[from] SubsetError),
    #[error("subset {subset} needs at least {needed} exploration rounds, log has {t}")]
    TooFewRounds { subset: Subset, t: usize, needed: usize },
    #[error("design matrix for {subset} is rank deficient at t = {t} (condition estimate {condition:e})")]
    RankDeficient { subset: Subset, t: usize, condition: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed exploration log: {0}")]
    Malformed(String),
}

/// Running mean and co-moment of the full regressor vector (Welford).
#[derive(Debug, Clone, PartialEq)]
struct RegressorMoments {
    mean: Vec<f64>,
    comoment: DMatrix<f64>,
}

impl RegressorMoments {
    fn new(n: usize) -> Self {
        Self {
            mean: vec![0.0; n],
            comoment: DMatrix::zeros(n, n),
        }
    }

    fn push(&mut self, x: &[f64], t_after: usize) {
        let n = x.len();
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, d) in self.mean.iter_mut().zip(&delta) {
            *m += d / t_after as f64;
        }
        for i in 0..n {
            let after_i = x[i] - self.mean[i];
            for j in 0..n {
                self.comoment[(j, i)] += delta[j] * after_i;
            }
        }
    }
}

/// Append-only table of joint exploration draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationLog {
    n: usize,
    k0: usize,
    regressors: Vec<f64>,
    responses: Vec<f64>,
    moments: RegressorMoments,
}

impl ExplorationLog {
    pub fn new(n: usize, k0: usize) -> Self {
        Self {
            n,
            k0,
            regressors: Vec::new(),
            responses: Vec::new(),
            moments: RegressorMoments::new(n),
        }
    }

    pub fn from_samples(n: usize, k0: usize, samples: &[JointSample]) -> Result<Self, RegressError> {
        let mut log = Self::new(n, k0);
        for s in samples {
            log.push(&s.regressors, &s.response)?;
        }
        Ok(log)
    }

    pub fn push(&mut self, regressors: &[f64], response: &[f64]) -> Result<(), RegressError> {
        if regressors.len() != self.n || response.len() != self.k0 {
            return Err(RegressError::DimensionMismatch(format!(
                "row has {} regressors and {} responses, log expects {} and {}",
                regressors.len(),
                response.len(),
                self.n,
                self.k0
            )));
        }
        self.regressors.extend_from_slice(regressors);
        self.responses.extend_from_slice(response);
        let t = self.t();
        self.moments.push(regressors, t);
        Ok(())
    }

    /// Number of exploration rounds recorded.
    pub fn t(&self) -> usize {
        if self.n > 0 {
            self.regressors.len() / self.n
        } else {
            self.responses.len() / self.k0
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k0(&self) -> usize {
        self.k0
    }

    pub fn regressor_row(&self, l: usize) -> &[f64] {
        &self.regressors[l * self.n..(l + 1) * self.n]
    }

    pub fn response_row(&self, l: usize) -> &[f64] {
        &self.responses[l * self.k0..(l + 1) * self.k0]
    }

    /// `t × (s+1)` matrix: a column of ones, then the `subset` columns.
    pub fn design_matrix(&self, subset: &Subset) -> Result<DMatrix<f64>, RegressError> {
        subset.check_range(self.n)?;
        let idx = subset.indices();
        Ok(DMatrix::from_fn(self.t(), idx.len() + 1, |l, j| {
            if j == 0 {
                1.0
            } else {
                self.regressors[l * self.n + idx[j - 1]]
            }
        }))
    }

    /// `t × k0` response matrix.
    pub fn response_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.t(), self.k0, &self.responses)
    }

    /// Column sums of the `subset` regressors over all rounds.
    pub fn regressor_sums(&self, subset: &Subset) -> Vec<f64> {
        let mut sums = vec![0.0; subset.len()];
        for l in 0..self.t() {
            let row = self.regressor_row(l);
            for (acc, &i) in sums.iter_mut().zip(subset.indices()) {
                *acc += row[i];
            }
        }
        sums
    }

    /// CSV with header `x1..xn,y1..yk0`, one row per round.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), RegressError> {
        let mut w = csv::Writer::from_writer(writer);
        let header: Vec<String> = (1..=self.n)
            .map(|i| format!("x{i}"))
            .chain((1..=self.k0).map(|j| format!("y{j}")))
            .collect();
        w.write_record(&header)?;
        for l in 0..self.t() {
            let record: Vec<String> = self
                .regressor_row(l)
                .iter()
                .chain(self.response_row(l))
                .map(|v| v.to_string())
                .collect();
            w.write_record(&record)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, RegressError> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let mut n = 0;
        let mut k0 = 0;
        for (pos, name) in header.iter().enumerate() {
            let (kind, idx) = name.split_at(1.min(name.len()));
            let idx: usize = idx
                .parse()
                .map_err(|_| RegressError::Malformed(format!("bad column name {name:?}")))?;
            match kind {
                "x" if k0 == 0 && idx == n + 1 => n += 1,
                "y" if idx == k0 + 1 && pos == n + k0 => k0 += 1,
                _ => return Err(RegressError::Malformed(format!("unexpected column {name:?}"))),
            }
        }
        if k0 == 0 {
            return Err(RegressError::Malformed("no response columns".into()));
        }
        let mut log = Self::new(n, k0);
        for record in r.records() {
            let record = record?;
            let values = record
                .iter()
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| RegressError::Malformed(e.to_string()))?;
            log.push(&values[..n], &values[n..])?;
        }
        Ok(log)
    }
}

/// Per-subset regression estimates at exploration time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubsetStats {
    pub subset: Subset,
    pub t: usize,
    /// `k0 × (s+1)`, intercept first.
    pub beta_hat: DMatrix<f64>,
    /// Sample mean of `(1, X_S)`.
    pub x_hat: DVector<f64>,
    /// Residual covariance, divisor `t − s − 1`.
    pub gamma_hat: DMatrix<f64>,
    /// `(t⁻¹ Z_Sᵀ Z_S)⁻¹`.
    pub lambda_inv: DMatrix<f64>,
    /// Sample covariance of `(1, X_S)`, divisor `t − 1`; intercept row/column zero.
    pub sigma_hat: DMatrix<f64>,
    /// Condition number of the triangular factor of `Z_S`.
    pub condition: f64,
}

impl SubsetStats {
    /// Residual variance, scalar responses only.
    pub fn sigma_hat_sq(&self) -> Option<f64> {
        (self.gamma_hat.nrows() == 1).then(|| self.gamma_hat[(0, 0)])
    }

    pub fn response_dim(&self) -> usize {
        self.beta_hat.nrows()
    }
}

fn check_rounds(subset: &Subset, t: usize) -> Result<(), RegressError> {
    let needed = subset.len() + 2;
    if t < needed {
        return Err(RegressError::TooFewRounds {
            subset: subset.clone(),
            t,
            needed,
        });
    }
    Ok(())
}

fn condition_of(r: &DMatrix<f64>) -> f64 {
    let sv = r.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 && max.is_finite() {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Coefficients and `Λ̂⁻¹` from the upper-triangular factor `R` of `Z_S` and
/// the rotated responses `Qᵀ Y`.
fn solve_from_factor(
    subset: &Subset,
    t: usize,
    r: &DMatrix<f64>,
    qty: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, f64), RegressError> {
    let condition = condition_of(r);
    let deficient = || RegressError::RankDeficient {
        subset: subset.clone(),
        t,
        condition,
    };
    if !(condition <= MAX_CONDITION) {
        return Err(deficient());
    }
    let coef = r.solve_upper_triangular(qty).ok_or_else(deficient)?;
    let width = r.nrows();
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(width, width))
        .ok_or_else(deficient)?;
    let lambda_inv = symmetrize(&r_inv * r_inv.transpose() * t as f64);
    Ok((coef.transpose(), lambda_inv, condition))
}

fn padded_covariance(comoment: &DMatrix<f64>, idx: &[usize], t: usize) -> DMatrix<f64> {
    let s = idx.len();
    let mut out = DMatrix::zeros(s + 1, s + 1);
    for a in 0..s {
        for b in 0..s {
            out[(a + 1, b + 1)] = comoment[(idx[a], idx[b])] / (t - 1) as f64;
        }
    }
    symmetrize(out)
}

/// Batch least-squares fit of every response column on `(1, X_S)`.
pub fn fit_subset(log: &ExplorationLog, subset: &Subset) -> Result<SubsetStats, RegressError> {
    subset.check_range(log.n())?;
    let t = log.t();
    check_rounds(subset, t)?;
    let s = subset.len();
    let z = log.design_matrix(subset)?;
    let y = log.response_matrix();

    let qr = z.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * &y;
    let (beta_hat, lambda_inv, condition) = solve_from_factor(subset, t, &r, &qty)?;

    let residuals = &y - &z * beta_hat.transpose();
    let gamma_hat = symmetrize(residuals.transpose() * &residuals / (t - s - 1) as f64);

    let x_hat = DVector::from_iterator(s + 1, z.column_iter().map(|c| c.sum() / t as f64));
    let mut centered = z.columns(1, s).into_owned();
    for j in 0..s {
        let m = x_hat[j + 1];
        centered.column_mut(j).add_scalar_mut(-m);
    }
    let comoment = centered.transpose() * &centered;
    let local: Vec<usize> = (0..s).collect();
    let sigma_hat = padded_covariance(&comoment, &local, t);

    Ok(SubsetStats {
        subset: subset.clone(),
        t,
        beta_hat,
        x_hat,
        gamma_hat,
        lambda_inv,
        sigma_hat,
        condition,
    })
}

/// Least-squares state for one subset, updated one exploration row at a time.
///
/// Holds the augmented triangular factor `[R | QᵀY]` of `[Z_S | Y]` and the
/// residual scatter `Σ rₗ rₗᵀ` accumulated from the rotated-out rows.
#[derive(Debug, Clone)]
pub struct IncrementalFit {
    subset: Subset,
    k0: usize,
    tri: DMatrix<f64>,
    scatter: DMatrix<f64>,
    t: usize,
}

impl IncrementalFit {
    pub fn new(subset: Subset, k0: usize) -> Self {
        let width = subset.len() + 1;
        Self {
            subset,
            k0,
            tri: DMatrix::zeros(width, width + k0),
            scatter: DMatrix::zeros(k0, k0),
            t: 0,
        }
    }

    pub fn subset(&self) -> &Subset {
        &self.subset
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Appends one exploration row (full regressor vector and response).
    pub fn push(&mut self, regressors: &[f64], response: &[f64]) {
        let width = self.subset.len() + 1;
        let cols = width + self.k0;
        let mut w = Vec::with_capacity(cols);
        w.push(1.0);
        w.extend(self.subset.indices().iter().map(|&i| regressors[i]));
        w.extend_from_slice(response);
        for i in 0..width {
            let b = w[i];
            if b == 0.0 {
                continue;
            }
            let a = self.tri[(i, i)];
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for j in i..cols {
                let tij = self.tri[(i, j)];
                let wj = w[j];
                self.tri[(i, j)] = c * tij + s * wj;
                w[j] = c * wj - s * tij;
            }
            w[i] = 0.0;
        }
        let e = &w[width..];
        for a in 0..self.k0 {
            for b in 0..self.k0 {
                self.scatter[(a, b)] += e[a] * e[b];
            }
        }
        self.t += 1;
    }

    /// Estimates at the current round. `log` must be the log this fit has
    /// consumed, row for row; it supplies the regressor moments.
    pub fn stats(&self, log: &ExplorationLog) -> Result<SubsetStats, RegressError> {
        if log.t() != self.t || log.k0() != self.k0 {
            return Err(RegressError::DimensionMismatch(format!(
                "incremental fit has seen {} rounds, log has {}",
                self.t,
                log.t()
            )));
        }
        let t = self.t;
        check_rounds(&self.subset, t)?;
        let width = self.subset.len() + 1;
        let r = self.tri.columns(0, width).into_owned();
        let qty = self.tri.columns(width, self.k0).into_owned();
        let (beta_hat, lambda_inv, condition) = solve_from_factor(&self.subset, t, &r, &qty)?;
        let gamma_hat = symmetrize(&self.scatter / (t - width) as f64);
        let idx = self.subset.indices();
        let mut x_hat = DVector::zeros(width);
        x_hat[0] = 1.0;
        for (k, &i) in idx.iter().enumerate() {
            x_hat[k + 1] = log.moments.mean[i];
        }
        let sigma_hat = padded_covariance(&log.moments.comoment, idx, t);
        Ok(SubsetStats {
            subset: self.subset.clone(),
            t,
            beta_hat,
            x_hat,
            gamma_hat,
            lambda_inv,
            sigma_hat,
            condition,
        })
    }
}

/// Rows of `Q β̂`, accumulated term by term so that a `1 × 1` unit `Q`
/// reproduces `β̂` exactly.
fn q_times_beta(q: &DMatrix<f64>, beta: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, inner) = q.shape();
    DMatrix::from_fn(rows, beta.ncols(), |r, j| {
        let mut acc = q[(r, 0)] * beta[(0, j)];
        for k in 1..inner {
            acc += q[(r, k)] * beta[(k, j)];
        }
        acc
    })
}

/// `(tr(Σ̂ β̂ᵀ Qᵀ Q β̂), tr(Q Γ̂ Qᵀ))` for a `q × k0` weight matrix `Q`.
///
/// When `q > k0` both traces go through the `k0 × k0` Gram `QᵀQ` so no
/// `q × q` matrix is formed.
pub fn trace_risk_terms(stats: &SubsetStats, q: &DMatrix<f64>) -> Result<(f64, f64), RegressError> {
    let k0 = stats.response_dim();
    if q.ncols() != k0 || q.nrows() == 0 {
        return Err(RegressError::DimensionMismatch(format!(
            "Q is {}×{}, responses have dimension {k0}",
            q.nrows(),
            q.ncols()
        )));
    }
    let (tr_beta, tr_gamma) = if q.nrows() <= k0 {
        let w = q_times_beta(q, &stats.beta_hat);
        let mut tb = 0.0;
        let mut tg = 0.0;
        for r in 0..q.nrows() {
            let w_r: Vec<f64> = w.row(r).iter().copied().collect();
            let q_r: Vec<f64> = q.row(r).iter().copied().collect();
            tb += quad_form(&w_r, &stats.sigma_hat);
            tg += quad_form(&q_r, &stats.gamma_hat);
        }
        (tb, tg)
    } else {
        let gram = q.transpose() * q;
        // tr(Σ̂ β̂ᵀ G β̂) = Σ_ab G_ab · (β̂_a Σ̂ β̂_bᵀ)
        let b_sigma = &stats.beta_hat * &stats.sigma_hat * stats.beta_hat.transpose();
        let tb = gram.component_mul(&b_sigma).sum();
        let tg = gram.component_mul(&stats.gamma_hat).sum();
        (tb, tg)
    };
    Ok((tr_beta.max(0.0), tr_gamma.max(0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use rand::Rng;

    fn log_from(rows: &[(&[f64], &[f64])]) -> ExplorationLog {
        let n = rows[0].0.len();
        let k0 = rows[0].1.len();
        let mut log = ExplorationLog::new(n, k0);
        for (x, y) in rows {
            log.push(x, y).unwrap();
        }
        log
    }

    fn random_log(n: usize, k0: usize, t: usize, seed: u64) -> ExplorationLog {
        let mut rng = RandomStream::from_seed(seed);
        let mut log = ExplorationLog::new(n, k0);
        for _ in 0..t {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..k0)
                .map(|j| x.iter().sum::<f64>() * (j as f64 + 1.0) + rng.random_range(-0.5..0.5))
                .collect();
            log.push(&x, &y).unwrap();
        }
        log
    }

    #[test]
    fn design_matrix_layout() {
        let log = log_from(&[(&[5.0, 7.0], &[0.0])]);
        let z = log.design_matrix(&Subset::from_one_based(&[2]).unwrap()).unwrap();
        assert_eq!(z, DMatrix::from_row_slice(1, 2, &[1.0, 7.0]));

        let log = log_from(&[(&[1.0, 2.0], &[0.0]), (&[3.0, 4.0], &[0.0])]);
        let z = log.design_matrix(&Subset::full(2)).unwrap();
        assert_eq!(z, DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 2.0, 1.0, 3.0, 4.0]));

        let err = log.design_matrix(&Subset::from_one_based(&[3]).unwrap()).unwrap_err();
        assert!(matches!(err, RegressError::Subset(SubsetError::OutOfRange { index: 3, n: 2 })));
    }

    #[test]
    fn exact_interpolation_of_linear_rule() {
        let xs = [-1.0, 0.0, 0.5, 2.0, 3.0];
        let mut log = ExplorationLog::new(1, 1);
        for x in xs {
            log.push(&[x], &[2.0 + 3.0 * x]).unwrap();
        }
        let stats = fit_subset(&log, &Subset::full(1)).unwrap();
        assert!((stats.beta_hat[(0, 0)] - 2.0).abs() < 1e-13);
        assert!((stats.beta_hat[(0, 1)] - 3.0).abs() < 1e-13);
        assert!(stats.sigma_hat_sq().unwrap() < 1e-26);
    }

    #[test]
    fn too_few_rounds_and_rank_deficiency() {
        let log = log_from(&[(&[1.0, 2.0], &[0.0]), (&[3.0, 4.0], &[1.0]), (&[0.0, 1.0], &[1.0])]);
        let err = fit_subset(&log, &Subset::full(2)).unwrap_err();
        assert!(matches!(err, RegressError::TooFewRounds { needed: 4, t: 3, .. }));

        // second column is a copy of the first
        let log = log_from(&[
            (&[1.0, 1.0], &[0.0]),
            (&[2.0, 2.0], &[1.0]),
            (&[3.0, 3.0], &[1.0]),
            (&[5.0, 5.0], &[2.0]),
        ]);
        let err = fit_subset(&log, &Subset::full(2)).unwrap_err();
        assert!(matches!(err, RegressError::RankDeficient { .. }));
        assert!(fit_subset(&log, &Subset::from_one_based(&[1]).unwrap()).is_ok());
    }

    #[test]
    fn moments_use_documented_divisors() {
        let log = log_from(&[
            (&[0.0], &[1.0]),
            (&[1.0], &[2.0]),
            (&[2.0], &[5.0]),
            (&[3.0], &[4.0]),
        ]);
        let st = fit_subset(&log, &Subset::full(1)).unwrap();
        assert_eq!(st.x_hat.as_slice(), &[1.0, 1.5]);
        // var of 0,1,2,3 with divisor t-1
        assert!((st.sigma_hat[(1, 1)] - 5.0 / 3.0).abs() < 1e-14);
        assert_eq!(st.sigma_hat[(0, 0)], 0.0);
        assert_eq!(st.sigma_hat[(0, 1)], 0.0);
        // ols by hand: slope 1.2, intercept 1.2; residuals -0.2, -0.4, 1.4, -0.8
        assert!((st.beta_hat[(0, 1)] - 1.2).abs() < 1e-13);
        assert!((st.beta_hat[(0, 0)] - 1.2).abs() < 1e-13);
        let rss = 0.04 + 0.16 + 1.96 + 0.64;
        assert!((st.sigma_hat_sq().unwrap() - rss / 2.0).abs() < 1e-13);
        // (ZᵀZ / t)⁻¹ with ZᵀZ = [[4, 6], [6, 14]]
        let expected = DMatrix::from_row_slice(2, 2, &[14.0, -6.0, -6.0, 4.0]) * (4.0 / 20.0);
        assert!((&st.lambda_inv - expected).amax() < 1e-12);
    }

    #[test]
    fn incremental_matches_batch() {
        let log = random_log(3, 2, 40, 11);
        for subset in crate::subset::enumerate_subsets(3, 3) {
            let mut inc = IncrementalFit::new(subset.clone(), 2);
            let mut partial = ExplorationLog::new(3, 2);
            for l in 0..log.t() {
                inc.push(log.regressor_row(l), log.response_row(l));
                partial.push(log.regressor_row(l), log.response_row(l)).unwrap();
                if l + 1 >= subset.len() + 2 {
                    let a = fit_subset(&partial, &subset).unwrap();
                    let b = inc.stats(&partial).unwrap();
                    let close = |x: &DMatrix<f64>, y: &DMatrix<f64>| {
                        (x - y).amax() <= 1e-9 * (1.0 + x.amax())
                    };
                    assert!(close(&a.beta_hat, &b.beta_hat));
                    assert!(close(&a.gamma_hat, &b.gamma_hat));
                    assert!(close(&a.lambda_inv, &b.lambda_inv));
                    assert!(close(&a.sigma_hat, &b.sigma_hat));
                    assert!((&a.x_hat - &b.x_hat).amax() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn scalar_vector_consistency() {
        let log = random_log(2, 1, 25, 3);
        let st = fit_subset(&log, &Subset::full(2)).unwrap();
        assert_eq!(st.gamma_hat.shape(), (1, 1));
        assert_eq!(st.sigma_hat_sq(), Some(st.gamma_hat[(0, 0)]));
        let (tb, tg) = trace_risk_terms(&st, &DMatrix::from_element(1, 1, 1.0)).unwrap();
        let b: Vec<f64> = st.beta_hat.row(0).iter().copied().collect();
        assert_eq!(tb, quad_form(&b, &st.sigma_hat));
        assert_eq!(tg, st.sigma_hat_sq().unwrap());
    }

    #[test]
    fn trace_terms_match_dense_evaluation() {
        let log = random_log(2, 2, 30, 5);
        let st = fit_subset(&log, &Subset::full(2)).unwrap();
        let mut rng = RandomStream::from_seed(99);
        for rows in [1usize, 2, 3, 5] {
            let q = DMatrix::from_fn(rows, 2, |_, _| rng.random_range(-1.0..1.0));
            let (tb, tg) = trace_risk_terms(&st, &q).unwrap();
            let dense_b = (&st.sigma_hat * st.beta_hat.transpose() * q.transpose() * &q * &st.beta_hat).trace();
            let dense_g = (&q * &st.gamma_hat * q.transpose()).trace();
            assert!((tb - dense_b).abs() <= 1e-12 * dense_b.abs().max(1e-300));
            assert!((tg - dense_g).abs() <= 1e-12 * dense_g.abs().max(1e-300));
        }
        assert_eq!(trace_risk_terms(&st, &DMatrix::zeros(3, 2)).unwrap(), (0.0, 0.0));
        assert!(trace_risk_terms(&st, &DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let log = random_log(3, 2, 7, 1);
        let mut buf = Vec::new();
        log.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,x3,y1,y2\n"));
        let back = ExplorationLog::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.regressors, log.regressors);
        assert_eq!(back.responses, log.responses);
        assert!(ExplorationLog::read_csv("x1,z1\n1,2\n".as_bytes()).is_err());
    }
}
