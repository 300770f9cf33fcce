//! Nuisance models: participation `Pr[S=1|X]`, treatment propensities by
//! study and pooled, and outcome regressions by (arm, study) and pooled by arm.
//!
//! All models are main-effects GLMs (intercept plus the selected covariates).
//! Probabilities use logistic regression fitted by IRLS; continuous outcomes
//! use ordinary least squares.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Arm, Dataset, Stratum};
use crate::error::{Error, FitError, Result};
use crate::linalg;

/// Fitted probabilities are kept strictly inside `(0, 1)`.
const PROB_MAX: f64 = 1.0 - f64::EPSILON / 2.0;
/// Working weights below this mean fitted probabilities are numerically 0 or 1.
const MIN_WORKING_WEIGHT: f64 = 1e-14;
/// Residual below which a row counts as fitted exactly.
const PERFECT_FIT: f64 = 1e-6;
/// Relative log-likelihood slack when accepting an IRLS update; below this the
/// objective is not resolvable in floating point.
pub const LL_SLACK: f64 = 1e-12;
/// Ridge penalty on slopes used by the separation fallback.
pub const FALLBACK_RIDGE: f64 = 1e-6;

pub fn expit(eta: f64) -> f64 {
    let p = if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, PROB_MAX)
}

/// `log(1 + exp(eta))` without overflow.
fn softplus(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

/// Row-major `n x p` design matrix. Column 0 is conventionally the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    n: usize,
    p: usize,
    values: Vec<f64>,
}

impl Design {
    pub fn new(n: usize, p: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * p || p == 0 {
            return Err(Error::InvalidArgument(format!(
                "design of {n}x{p} needs {} values, got {}",
                n * p,
                values.len()
            )));
        }
        Ok(Design { n, p, values })
    }

    /// Prepend an intercept column to raw covariate rows.
    pub fn with_intercept<'a>(rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut values = Vec::new();
        let mut n = 0;
        let mut p = None;
        for r in rows {
            if *p.get_or_insert(r.len() + 1) != r.len() + 1 {
                return Err(Error::InvalidArgument("ragged covariate rows".into()));
            }
            values.push(1.0);
            values.extend_from_slice(r);
            n += 1;
        }
        Design::new(n, p.unwrap_or(1), values)
    }

    /// Intercept plus `columns` of the dataset's covariates, for the given rows.
    pub fn from_dataset(d: &Dataset, rows: &[usize], columns: &[usize]) -> Self {
        let p = columns.len() + 1;
        let mut values = Vec::with_capacity(rows.len() * p);
        for &i in rows {
            let x = d.x(i);
            values.push(1.0);
            values.extend(columns.iter().map(|&j| x[j]));
        }
        Design {
            n: rows.len(),
            p,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.p)
    }

    /// `X^T diag(w) X`, or `X^T X` when `w` is `None`.
    fn gram(&self, w: Option<&[f64]>) -> Vec<f64> {
        let p = self.p;
        let mut g = vec![0.0; p * p];
        for (i, r) in self.rows().enumerate() {
            let wi = w.map_or(1.0, |w| w[i]);
            for a in 0..p {
                let ra = r[a] * wi;
                for b in 0..=a {
                    g[a * p + b] += ra * r[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                g[b * p + a] = g[a * p + b];
            }
        }
        g
    }

    /// `X^T v`.
    fn t_mul(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.p];
        for (r, &vi) in self.rows().zip(v) {
            for (o, &x) in out.iter_mut().zip(r) {
                *o += x * vi;
            }
        }
        out
    }

    fn mul(&self, beta: &[f64]) -> Vec<f64> {
        self.rows().map(|r| dot(r, beta)).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IrlsOptions {
    pub max_iter: usize,
    /// Convergence threshold on the sup-norm of the score.
    pub tol: f64,
    /// Ridge penalty on the slopes (never the intercept).
    pub ridge: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        IrlsOptions {
            max_iter: 100,
            tol: 1e-8,
            ridge: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Intercept first, then one slope per selected covariate.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Log-likelihood after each accepted IRLS update, starting at the initial point.
    #[serde(skip)]
    pub trace: Vec<f64>,
    /// Score sup-norm at the returned coefficients.
    pub score_norm: f64,
    pub ridge: f64,
    pub n_rows: usize,
    /// Dataset covariate indices feeding the slopes.
    pub covariates: Vec<usize>,
    /// Arity of covariate vectors accepted by `predict`.
    pub arity: usize,
}

impl LogisticModel {
    fn eta(&self, x: &[f64]) -> f64 {
        self.coefficients[0]
            + self
                .covariates
                .iter()
                .zip(&self.coefficients[1..])
                .map(|(&j, b)| x[j] * b)
                .sum::<f64>()
    }

    /// `Pr[label = 1 | x]`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_arity(self.arity, x)?;
        Ok(expit(self.eta(x)))
    }

    /// `Pr[label = level | x]`, computed without cancellation for either level.
    pub(crate) fn prob(&self, x: &[f64], level: u8) -> f64 {
        let eta = self.eta(x);
        if level == 1 {
            expit(eta)
        } else {
            expit(-eta)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    /// `RSS / (n - p)`; zero when there are no residual degrees of freedom.
    pub residual_variance: f64,
    pub n_rows: usize,
    pub covariates: Vec<usize>,
    pub arity: usize,
}

impl LinearModel {
    fn mean(&self, x: &[f64]) -> f64 {
        self.coefficients[0]
            + self
                .covariates
                .iter()
                .zip(&self.coefficients[1..])
                .map(|(&j, b)| x[j] * b)
                .sum::<f64>()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_arity(self.arity, x)?;
        Ok(self.mean(x))
    }
}

fn check_arity(expected: usize, x: &[f64]) -> Result<()> {
    if x.len() != expected {
        return Err(Error::ArityMismatch {
            expected,
            found: x.len(),
        });
    }
    Ok(())
}

fn identity_columns(p: usize) -> Vec<usize> {
    (0..p.saturating_sub(1)).collect()
}

/// Maximum-likelihood logistic regression by IRLS from a zero start.
///
/// Stops when the score sup-norm drops below `opts.tol` or after
/// `opts.max_iter` updates. Each update is step-halved until the
/// log-likelihood does not decrease (up to [`LL_SLACK`], relative).
pub fn fit_logistic(
    features: &Design,
    labels: &[f64],
    opts: &IrlsOptions,
) -> Result<LogisticModel, FitError> {
    let (n, p) = (features.n(), features.p());
    if labels.len() != n {
        return Err(FitError::NonFinite);
    }
    if n < p {
        return Err(FitError::TooFewRows { rows: n, needed: p });
    }
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(FitError::NonBinaryLabel);
    }
    if features.values.iter().any(|v| !v.is_finite()) {
        return Err(FitError::NonFinite);
    }
    let ones = labels.iter().filter(|&&y| y == 1.0).count();
    if ones == 0 || ones == n {
        return Err(FitError::SingleClass);
    }

    let ridge = opts.ridge;
    let penalty = |beta: &[f64]| 0.5 * ridge * beta[1..].iter().map(|b| b * b).sum::<f64>();
    let objective = |eta: &[f64], beta: &[f64]| -> f64 {
        eta.iter()
            .zip(labels)
            .map(|(&e, &y)| y * e - softplus(e))
            .sum::<f64>()
            - penalty(beta)
    };

    let mut beta = vec![0.0; p];
    let mut eta = vec![0.0; n];
    let mut ll = objective(&eta, &beta);
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut mu = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut resid = vec![0.0; n];

    loop {
        for i in 0..n {
            mu[i] = expit(eta[i]);
            w[i] = mu[i] * (1.0 - mu[i]);
            resid[i] = labels[i] - mu[i];
        }
        if w.iter().any(|v| !v.is_finite())
            || (ridge == 0.0 && w.iter().any(|&v| v < MIN_WORKING_WEIGHT))
        {
            return Err(FitError::Separation {
                iteration: iterations,
            });
        }
        let mut score = features.t_mul(&resid);
        for j in 1..p {
            score[j] -= ridge * beta[j];
        }
        let score_norm = score.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let converged = score_norm < opts.tol;
        if converged && ridge == 0.0 && resid.iter().all(|r| r.abs() < PERFECT_FIT) {
            // the score vanished because every row is fitted exactly
            return Err(FitError::Separation {
                iteration: iterations,
            });
        }
        if converged || iterations >= opts.max_iter {
            return Ok(LogisticModel {
                coefficients: beta,
                converged,
                iterations,
                log_likelihood: ll,
                trace,
                score_norm,
                ridge,
                n_rows: n,
                covariates: identity_columns(p),
                arity: p - 1,
            });
        }

        let mut info = features.gram(Some(&w));
        for j in 1..p {
            info[j * p + j] += ridge;
        }
        let l = linalg::cholesky(&info, p).map_err(|column| FitError::Singular { column })?;
        let step = linalg::chol_solve(&l, p, &score);

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            let cand_eta = features.mul(&cand);
            let cand_ll = objective(&cand_eta, &cand);
            if cand_ll.is_finite() && cand_ll >= ll - LL_SLACK * (1.0 + ll.abs()) {
                accepted = Some((cand, cand_eta, cand_ll));
                break;
            }
            scale *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((b, e, l)) => {
                beta = b;
                eta = e;
                ll = l;
                trace.push(ll);
            }
            None => {
                // no ascent direction left at machine precision
                return Ok(LogisticModel {
                    coefficients: beta,
                    converged: false,
                    iterations,
                    log_likelihood: ll,
                    trace,
                    score_norm,
                    ridge,
                    n_rows: n,
                    covariates: identity_columns(p),
                    arity: p - 1,
                });
            }
        }
    }
}

/// Ordinary least squares via the normal equations with one step of
/// iterative refinement.
pub fn fit_linear(features: &Design, response: &[f64]) -> Result<LinearModel, FitError> {
    let (n, p) = (features.n(), features.p());
    if response.len() != n {
        return Err(FitError::NonFinite);
    }
    if n < p {
        return Err(FitError::TooFewRows { rows: n, needed: p });
    }
    if features
        .values
        .iter()
        .chain(response)
        .any(|v| !v.is_finite())
    {
        return Err(FitError::NonFinite);
    }
    let gram = features.gram(None);
    let l = linalg::cholesky(&gram, p).map_err(|column| FitError::Singular { column })?;
    let mut beta = linalg::chol_solve(&l, p, &features.t_mul(response));
    let residuals = |beta: &[f64]| -> Vec<f64> {
        features
            .rows()
            .zip(response)
            .map(|(r, &y)| y - dot(r, beta))
            .collect()
    };
    let correction = linalg::chol_solve(&l, p, &features.t_mul(&residuals(&beta)));
    for (b, c) in beta.iter_mut().zip(correction) {
        *b += c;
    }
    let rss: f64 = residuals(&beta).iter().map(|r| r * r).sum();
    let df = n - p;
    Ok(LinearModel {
        coefficients: beta,
        residual_variance: if df > 0 { rss / df as f64 } else { 0.0 },
        n_rows: n,
        covariates: identity_columns(p),
        arity: p - 1,
    })
}

/// Heteroskedasticity-robust (HC1) covariance of OLS coefficients.
pub(crate) fn linear_robust_covariance(
    features: &Design,
    response: &[f64],
    coefficients: &[f64],
) -> Result<Vec<f64>, FitError> {
    let (n, p) = (features.n(), features.p());
    let bread = linalg::spd_inverse(&features.gram(None), p)
        .map_err(|column| FitError::Singular { column })?;
    let sq: Vec<f64> = features
        .rows()
        .zip(response)
        .map(|(r, &y)| (y - dot(r, coefficients)).powi(2))
        .collect();
    let meat = features.gram(Some(&sq));
    let mut cov = sandwich(&bread, &meat, p);
    let adj = if n > p {
        n as f64 / (n - p) as f64
    } else {
        1.0
    };
    cov.iter_mut().for_each(|v| *v *= adj);
    Ok(cov)
}

/// Inverse Fisher information of a logistic fit.
pub(crate) fn logistic_covariance(
    features: &Design,
    coefficients: &[f64],
) -> Result<Vec<f64>, FitError> {
    let w: Vec<f64> = features
        .rows()
        .map(|r| {
            let m = expit(dot(r, coefficients));
            m * (1.0 - m)
        })
        .collect();
    linalg::spd_inverse(&features.gram(Some(&w)), features.p())
        .map_err(|column| FitError::Singular { column })
}

fn sandwich(bread: &[f64], meat: &[f64], p: usize) -> Vec<f64> {
    let mul = |a: &[f64], b: &[f64]| {
        let mut c = vec![0.0; p * p];
        for i in 0..p {
            for k in 0..p {
                let aik = a[i * p + k];
                for j in 0..p {
                    c[i * p + j] += aik * b[k * p + j];
                }
            }
        }
        c
    };
    mul(&mul(bread, meat), bread)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    #[default]
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum OutcomeModel {
    Linear(LinearModel),
    Logistic(LogisticModel),
}

impl OutcomeModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        match self {
            OutcomeModel::Linear(m) => m.predict(x),
            OutcomeModel::Logistic(m) => m.predict(x),
        }
    }

    pub(crate) fn mean(&self, x: &[f64]) -> f64 {
        match self {
            OutcomeModel::Linear(m) => m.mean(x),
            OutcomeModel::Logistic(m) => expit(m.eta(x)),
        }
    }

    pub fn coefficients(&self) -> &[f64] {
        match self {
            OutcomeModel::Linear(m) => &m.coefficients,
            OutcomeModel::Logistic(m) => &m.coefficients,
        }
    }
}

/// Identifies one model in a [`NuisanceSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelName {
    /// `Pr[S = 1 | X]` on the composite sample.
    Participation,
    /// `Pr[A = 1 | X, S = s]`, or `Pr[A = 1 | X]` when pooled.
    Propensity(Stratum),
    /// `E[Y | X, S = s, A = a]`, or `E[Y | X, A = a]` when pooled.
    Outcome(Arm, Stratum),
}

impl ModelName {
    pub fn all() -> Vec<ModelName> {
        let mut v = vec![ModelName::Participation];
        for s in [Stratum::Emulation, Stratum::Trial, Stratum::Pooled] {
            v.push(ModelName::Propensity(s));
        }
        for a in Arm::BOTH {
            for s in [Stratum::Emulation, Stratum::Trial, Stratum::Pooled] {
                v.push(ModelName::Outcome(a, s));
            }
        }
        v
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelName::Participation => write!(f, "participation"),
            ModelName::Propensity(s) => write!(f, "propensity_{}", s.tag()),
            ModelName::Outcome(a, s) => write!(f, "outcome_a{a}_{}", s.tag()),
        }
    }
}

impl FromStr for ModelName {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ModelName::all()
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| format!("unknown model name `{s}`"))
    }
}

impl Serialize for ModelName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModelName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Deliberate misspecification: the listed models omit one covariate.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Misspecification {
    pub models: Vec<ModelName>,
    /// Index of the covariate to omit.
    #[serde(default)]
    pub covariate: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub outcome_kind: OutcomeKind,
    pub irls: IrlsOptions,
    /// Refit with a small ridge penalty on the slopes when a logistic fit separates.
    pub ridge_fallback: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub misspecification: Option<Misspecification>,
}

impl FitOptions {
    pub fn new(outcome_kind: OutcomeKind) -> Self {
        FitOptions {
            outcome_kind,
            ..Default::default()
        }
    }

    fn columns_for(&self, model: ModelName, k: usize) -> Vec<usize> {
        match &self.misspecification {
            Some(m) if m.models.contains(&model) => (0..k).filter(|&j| j != m.covariate).collect(),
            _ => (0..k).collect(),
        }
    }
}

/// Every nuisance model the three estimators use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSet {
    pub outcome_kind: OutcomeKind,
    pub participation: LogisticModel,
    pub propensity_s0: LogisticModel,
    pub propensity_s1: LogisticModel,
    pub propensity_pooled: LogisticModel,
    /// Indexed by `arm * 3 + stratum` (emulation, trial, pooled).
    outcome: Vec<OutcomeModel>,
}

fn stratum_index(s: Stratum) -> usize {
    match s {
        Stratum::Emulation => 0,
        Stratum::Trial => 1,
        Stratum::Pooled => 2,
    }
}

impl NuisanceSet {
    pub fn propensity(&self, stratum: Stratum) -> &LogisticModel {
        match stratum {
            Stratum::Emulation => &self.propensity_s0,
            Stratum::Trial => &self.propensity_s1,
            Stratum::Pooled => &self.propensity_pooled,
        }
    }

    pub fn outcome(&self, arm: Arm, stratum: Stratum) -> &OutcomeModel {
        &self.outcome[arm.index() * 3 + stratum_index(stratum)]
    }

    /// A copy of `self` with the named models taken from `other`.
    ///
    /// Every model is fitted independently, so splicing the models of a
    /// misspecified fit into a correct one equals fitting with that
    /// misspecification directly.
    pub fn splice(&self, other: &NuisanceSet, models: &[ModelName]) -> NuisanceSet {
        let mut out = self.clone();
        for &m in models {
            match m {
                ModelName::Participation => out.participation = other.participation.clone(),
                ModelName::Propensity(Stratum::Emulation) => {
                    out.propensity_s0 = other.propensity_s0.clone()
                }
                ModelName::Propensity(Stratum::Trial) => {
                    out.propensity_s1 = other.propensity_s1.clone()
                }
                ModelName::Propensity(Stratum::Pooled) => {
                    out.propensity_pooled = other.propensity_pooled.clone()
                }
                ModelName::Outcome(a, st) => {
                    let j = a.index() * 3 + stratum_index(st);
                    out.outcome[j] = other.outcome[j].clone();
                }
            }
        }
        out
    }

    /// Summaries for reporting, in [`ModelName::all`] order.
    pub fn summaries(&self, covariate_names: &[String]) -> Vec<ModelSummary> {
        ModelName::all()
            .into_iter()
            .map(|name| {
                let names =
                    |cols: &[usize]| cols.iter().map(|&j| covariate_names[j].clone()).collect();
                match name {
                    ModelName::Participation | ModelName::Propensity(_) => {
                        let m = match name {
                            ModelName::Participation => &self.participation,
                            ModelName::Propensity(s) => self.propensity(s),
                            _ => unreachable!(),
                        };
                        ModelSummary::logistic(name, m, names(&m.covariates))
                    }
                    ModelName::Outcome(a, s) => match self.outcome(a, s) {
                        OutcomeModel::Logistic(m) => {
                            ModelSummary::logistic(name, m, names(&m.covariates))
                        }
                        OutcomeModel::Linear(m) => ModelSummary {
                            name,
                            family: "linear",
                            covariates: names(&m.covariates),
                            coefficients: m.coefficients.clone(),
                            n_rows: m.n_rows,
                            converged: true,
                            iterations: None,
                            log_likelihood: None,
                            residual_variance: Some(m.residual_variance),
                            ridge: None,
                        },
                    },
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: ModelName,
    pub family: &'static str,
    pub covariates: Vec<String>,
    pub coefficients: Vec<f64>,
    pub n_rows: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_variance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
}

impl ModelSummary {
    fn logistic(name: ModelName, m: &LogisticModel, covariates: Vec<String>) -> Self {
        ModelSummary {
            name,
            family: "logistic",
            covariates,
            coefficients: m.coefficients.clone(),
            n_rows: m.n_rows,
            converged: m.converged,
            iterations: Some(m.iterations),
            log_likelihood: Some(m.log_likelihood),
            residual_variance: None,
            ridge: (m.ridge > 0.0).then_some(m.ridge),
        }
    }
}

fn tag_error(d: &Dataset, name: ModelName, columns: &[usize], source: FitError) -> Error {
    let column = match source {
        FitError::Singular { column: 0 } => Some("intercept".to_string()),
        FitError::Singular { column } => Some(d.covariate_names()[columns[column - 1]].clone()),
        _ => None,
    };
    Error::Fit {
        model: name.to_string(),
        column,
        source,
    }
}

fn fit_probability(
    d: &Dataset,
    name: ModelName,
    rows: &[usize],
    labels: &[f64],
    opts: &FitOptions,
) -> Result<LogisticModel> {
    let columns = opts.columns_for(name, d.n_covariates());
    let design = Design::from_dataset(d, rows, &columns);
    let fitted = match fit_logistic(&design, labels, &opts.irls) {
        Err(FitError::Separation { .. }) if opts.ridge_fallback => {
            let irls = IrlsOptions {
                ridge: FALLBACK_RIDGE,
                ..opts.irls
            };
            fit_logistic(&design, labels, &irls)
        }
        other => other,
    };
    let mut m = fitted.map_err(|e| tag_error(d, name, &columns, e))?;
    m.covariates = columns;
    m.arity = d.n_covariates();
    Ok(m)
}

fn fit_outcome(
    d: &Dataset,
    name: ModelName,
    rows: &[usize],
    opts: &FitOptions,
) -> Result<OutcomeModel> {
    let y: Vec<f64> = rows.iter().map(|&i| d.y()[i]).collect();
    match opts.outcome_kind {
        OutcomeKind::Binary => fit_probability(d, name, rows, &y, opts).map(OutcomeModel::Logistic),
        OutcomeKind::Continuous => {
            let columns = opts.columns_for(name, d.n_covariates());
            let design = Design::from_dataset(d, rows, &columns);
            let mut m = fit_linear(&design, &y).map_err(|e| tag_error(d, name, &columns, e))?;
            m.covariates = columns;
            m.arity = d.n_covariates();
            Ok(OutcomeModel::Linear(m))
        }
    }
}

/// Fit all nuisance models on their strata.
pub fn fit_nuisances(d: &Dataset, opts: &FitOptions) -> Result<NuisanceSet> {
    if opts.outcome_kind == OutcomeKind::Binary {
        if let Some(i) = d.y().iter().position(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::Domain {
                row: i + 1,
                column: "Y".into(),
                message: "binary outcome must be 0 or 1".into(),
            });
        }
    }
    if let Some(m) = &opts.misspecification {
        if m.covariate >= d.n_covariates() {
            return Err(Error::InvalidArgument(format!(
                "misspecification drops covariate {} but the data have {}",
                m.covariate,
                d.n_covariates()
            )));
        }
    }
    let all: Vec<usize> = (0..d.len()).collect();
    let in_stratum = |st: Stratum| -> Vec<usize> {
        all.iter()
            .copied()
            .filter(|&i| st.contains(d.s()[i]))
            .collect()
    };
    let labels =
        |rows: &[usize], col: &[u8]| -> Vec<f64> { rows.iter().map(|&i| col[i] as f64).collect() };

    let participation = fit_probability(
        d,
        ModelName::Participation,
        &all,
        &labels(&all, d.s()),
        opts,
    )?;
    let mut propensity = Vec::with_capacity(3);
    let mut outcome = Vec::with_capacity(6);
    let strata = [Stratum::Emulation, Stratum::Trial, Stratum::Pooled];
    let rows_by: Vec<Vec<usize>> = strata.iter().map(|&s| in_stratum(s)).collect();
    for (st, rows) in strata.iter().zip(&rows_by) {
        propensity.push(fit_probability(
            d,
            ModelName::Propensity(*st),
            rows,
            &labels(rows, d.a()),
            opts,
        )?);
    }
    for arm in Arm::BOTH {
        for (st, rows) in strata.iter().zip(&rows_by) {
            let arm_rows: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|&i| d.a()[i] == arm.as_u8())
                .collect();
            outcome.push(fit_outcome(
                d,
                ModelName::Outcome(arm, *st),
                &arm_rows,
                opts,
            )?);
        }
    }
    let mut propensity = propensity.into_iter();
    Ok(NuisanceSet {
        outcome_kind: opts.outcome_kind,
        participation,
        propensity_s0: propensity.next().unwrap(),
        propensity_s1: propensity.next().unwrap(),
        propensity_pooled: propensity.next().unwrap(),
        outcome,
    })
}
