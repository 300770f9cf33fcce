//! Observed-data diagnostics for benchmarking.
//!
//! When the emulation is unconfounded and the trial results are
//! transportable, `E[Y | X, S=1, A=a] = E[Y | X, S=0, A=a]`. That equality
//! only involves observed variables, so it can be checked: the pooled arm-`a`
//! outcome model is augmented with study terms and a Wald test asks whether
//! they are all zero. A rejection cannot say which condition failed.
//!
//! Overlap summaries describe the fitted probabilities and the inverse
//! weights each estimator applies.

use serde::{Deserialize, Serialize};

use crate::data::{Arm, Dataset};
use crate::error::{Error, FitError, Result};
use crate::estimators::Estimator;
use crate::inference::{chi_square_p, quantile_sorted, TestResult};
use crate::linalg;
use crate::nuisance::{
    fit_linear, fit_logistic, linear_robust_covariance, logistic_covariance, Design, IrlsOptions,
    NuisanceSet, OutcomeKind,
};

/// Alternatives compatible with a failed restriction. The data cannot rank them.
pub const RESTRICTION_FAILURE_ALTERNATIVES: [&str; 3] = [
    "unmeasured confounding in the emulation while the trial and emulation populations are exchangeable \
     (the emulation is invalid; benchmarking detects it)",
    "no confounding in the emulation but non-exchangeable trial and emulation populations \
     (the emulation may be valid; benchmarking is not possible)",
    "both confounding in the emulation and non-exchangeable populations \
     (the emulation is invalid and benchmarking is not possible)",
];

/// Caveat attached to agreement between the trial and its emulation.
pub const AGREEMENT_CAVEAT: &str = "Agreement supports, but does not prove, that the identifying conditions hold: \
     violations can offset each other or cancel after averaging over the emulation's covariate distribution.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestrictionStatus {
    Consistent,
    Inconsistent,
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RestrictionOptions {
    pub outcome_kind: OutcomeKind,
    pub include_interactions: bool,
    /// p-values at or above this mark the data as consistent with the restriction.
    pub threshold: f64,
    pub irls: IrlsOptions,
}

impl Default for RestrictionOptions {
    fn default() -> Self {
        RestrictionOptions {
            outcome_kind: OutcomeKind::Continuous,
            include_interactions: false,
            threshold: 0.05,
            irls: IrlsOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTerm {
    pub name: String,
    pub coefficient: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictionResult {
    pub arm: Arm,
    pub test: TestResult,
    pub study_terms: Vec<StudyTerm>,
    pub status: RestrictionStatus,
    pub threshold: f64,
}

/// Wald test that the study main effect (and, optionally, study-by-covariate
/// products) vanish in the arm-`a` outcome model fitted on both studies.
pub fn restriction_test(
    d: &Dataset,
    a: Arm,
    opts: &RestrictionOptions,
) -> Result<RestrictionResult> {
    let rows: Vec<usize> = (0..d.len()).filter(|&i| d.a()[i] == a.as_u8()).collect();
    for s in [0u8, 1] {
        if !rows.iter().any(|&i| d.s()[i] == s) {
            return Err(Error::Precondition(format!("no rows with S={s}, A={a}")));
        }
    }
    let k = d.n_covariates();
    let mut names: Vec<String> = std::iter::once("intercept".to_string())
        .chain(d.covariate_names().iter().cloned())
        .collect();
    names.push("S".into());
    if opts.include_interactions {
        names.extend(d.covariate_names().iter().map(|c| format!("S:{c}")));
    }
    let p = names.len();
    let mut values = Vec::with_capacity(rows.len() * p);
    for &i in &rows {
        let x = d.x(i);
        let s = d.s()[i] as f64;
        values.push(1.0);
        values.extend_from_slice(x);
        values.push(s);
        if opts.include_interactions {
            values.extend(x.iter().map(|v| s * v));
        }
    }
    let design = Design::new(rows.len(), p, values)?;
    let y: Vec<f64> = rows.iter().map(|&i| d.y()[i]).collect();
    let model = format!("restriction_a{a}");
    let tag = |source: FitError| {
        let column = match source {
            FitError::Singular { column } => Some(names[column].clone()),
            _ => None,
        };
        Error::Fit {
            model: model.clone(),
            column,
            source,
        }
    };

    let (coef, cov, converged) = match opts.outcome_kind {
        OutcomeKind::Continuous => {
            let m = fit_linear(&design, &y).map_err(tag)?;
            let cov = linear_robust_covariance(&design, &y, &m.coefficients).map_err(tag)?;
            (m.coefficients, cov, true)
        }
        OutcomeKind::Binary => {
            let m = fit_logistic(&design, &y, &opts.irls).map_err(tag)?;
            let cov = logistic_covariance(&design, &m.coefficients).map_err(tag)?;
            (m.coefficients, cov, m.converged)
        }
    };

    let first = k + 1;
    let m = p - first;
    let b: Vec<f64> = coef[first..].to_vec();
    let mut v = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            v[i * m + j] = cov[(first + i) * p + first + j];
        }
    }
    let statistic = match linalg::cholesky(&v, m) {
        Ok(l) => {
            let z = linalg::chol_solve(&l, m, &b);
            b.iter().zip(&z).map(|(x, y)| x * y).sum::<f64>()
        }
        Err(_) => f64::NAN,
    };
    let p_value = if statistic.is_finite() {
        chi_square_p(statistic, m)
    } else {
        f64::NAN
    };
    let status = if !converged || !p_value.is_finite() {
        RestrictionStatus::Indeterminate
    } else if p_value >= opts.threshold {
        RestrictionStatus::Consistent
    } else {
        RestrictionStatus::Inconsistent
    };
    let study_terms = (0..m)
        .map(|j| StudyTerm {
            name: names[first + j].clone(),
            coefficient: b[j],
            std_error: v[j * m + j].max(0.0).sqrt(),
        })
        .collect();
    Ok(RestrictionResult {
        arm: a,
        test: TestResult {
            statistic,
            p_value,
            null_description: format!(
                "E[Y | X, S=1, A={a}] = E[Y | X, S=0, A={a}] (study terms all zero)"
            ),
            df: Some(m),
        },
        study_terms,
        status,
        threshold: opts.threshold,
    })
}

/// Overall status across arms: any rejection is inconsistent.
pub fn combined_status(results: &[RestrictionResult]) -> RestrictionStatus {
    if results
        .iter()
        .any(|r| r.status == RestrictionStatus::Inconsistent)
    {
        RestrictionStatus::Inconsistent
    } else if results.is_empty()
        || results
            .iter()
            .any(|r| r.status == RestrictionStatus::Indeterminate)
    {
        RestrictionStatus::Indeterminate
    } else {
        RestrictionStatus::Consistent
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub p1: f64,
    pub p5: f64,
    pub median: f64,
    pub p95: f64,
    pub p99: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p| quantile_sorted(&v, p);
        Some(Quantiles {
            min: v[0],
            p1: q(0.01),
            p5: q(0.05),
            median: q(0.5),
            p95: q(0.95),
            p99: q(0.99),
            max: v[v.len() - 1],
        })
    }

    pub fn is_monotone(&self) -> bool {
        let v = [
            self.min,
            self.p1,
            self.p5,
            self.median,
            self.p95,
            self.p99,
            self.max,
        ];
        v.windows(2).all(|w| w[0] <= w[1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilitySummary {
    /// Model name, e.g. `participation` or `propensity_s0`.
    pub model: String,
    /// Rows the summary is taken over.
    pub rows: String,
    /// Summary of `Pr[label = 1 | X]`.
    pub quantiles: Quantiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub estimator: Estimator,
    pub arm: Arm,
    pub n_rows: usize,
    pub quantiles: Quantiles,
    pub max_weight: f64,
    pub n_above_threshold: usize,
    /// 1-based row numbers with weight above the threshold (first few only).
    pub rows_above_threshold: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub weight_threshold: f64,
    pub probabilities: Vec<ProbabilitySummary>,
    pub weights: Vec<WeightSummary>,
}

impl OverlapReport {
    pub fn max_weight(&self) -> f64 {
        self.weights
            .iter()
            .map(|w| w.max_weight)
            .fold(0.0, f64::max)
    }

    pub fn weights_for(&self, estimator: Estimator, arm: Arm) -> Option<&WeightSummary> {
        self.weights
            .iter()
            .find(|w| w.estimator == estimator && w.arm == arm)
    }
}

const LISTED_ROWS: usize = 50;

/// Default weight above which rows are counted as extreme.
pub const DEFAULT_WEIGHT_THRESHOLD: f64 = 10.0;

pub fn overlap_summary(d: &Dataset, nu: &NuisanceSet, weight_threshold: f64) -> OverlapReport {
    let by_study = |s: Option<u8>| -> Vec<usize> {
        (0..d.len())
            .filter(|&i| s.is_none_or(|s| d.s()[i] == s))
            .collect()
    };
    let all = by_study(None);
    let trial = by_study(Some(1));
    let emulation = by_study(Some(0));

    let mut probabilities = Vec::new();
    for (name, model, rows, label) in [
        ("participation", &nu.participation, &all, "all"),
        ("propensity_s0", &nu.propensity_s0, &emulation, "S=0"),
        ("propensity_s1", &nu.propensity_s1, &trial, "S=1"),
        ("propensity_pooled", &nu.propensity_pooled, &all, "all"),
    ] {
        let p: Vec<f64> = rows.iter().map(|&i| model.prob(d.x(i), 1)).collect();
        if let Some(quantiles) = Quantiles::of(&p) {
            probabilities.push(ProbabilitySummary {
                model: name.into(),
                rows: label.into(),
                quantiles,
            });
        }
    }

    let mut weights = Vec::new();
    for arm in [Arm::Treated, Arm::Control] {
        let a = arm.as_u8();
        for est in Estimator::ALL {
            let w: Vec<(usize, f64)> = (0..d.len())
                .filter(|&i| d.a()[i] == a)
                .filter_map(|i| {
                    let x = d.x(i);
                    match (est, d.s()[i]) {
                        (Estimator::Phi, 0) => Some((i, 1.0 / nu.propensity_s0.prob(x, a))),
                        (Estimator::Chi, 1) => Some((
                            i,
                            nu.participation.prob(x, 0)
                                / nu.participation.prob(x, 1)
                                / nu.propensity_s1.prob(x, a),
                        )),
                        (Estimator::Psi, _) => Some((
                            i,
                            nu.participation.prob(x, 0) / nu.propensity_pooled.prob(x, a),
                        )),
                        _ => None,
                    }
                })
                .collect();
            let values: Vec<f64> = w.iter().map(|&(_, v)| v).collect();
            let Some(quantiles) = Quantiles::of(&values) else {
                continue;
            };
            let above: Vec<usize> = w
                .iter()
                .filter(|&&(_, v)| v > weight_threshold)
                .map(|&(i, _)| i + 1)
                .collect();
            weights.push(WeightSummary {
                estimator: est,
                arm,
                n_rows: values.len(),
                quantiles,
                max_weight: quantiles.max,
                n_above_threshold: above.len(),
                rows_above_threshold: above.into_iter().take(LISTED_ROWS).collect(),
            });
        }
    }
    OverlapReport {
        weight_threshold,
        probabilities,
        weights,
    }
}
