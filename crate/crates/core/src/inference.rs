//! Confidence intervals and tests from influence curves, and the
//! study-stratified nonparametric bootstrap.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::data::{Arm, Dataset};
use crate::error::{Error, Result};
use crate::estimators::{contrast, EstimateWithIF, Estimator, EstimatorOptions};
use crate::nuisance::{fit_nuisances, FitOptions, NuisanceSet};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntervalMethod {
    #[serde(rename = "sandwich")]
    Sandwich,
    #[serde(rename = "bootstrap-percentile")]
    BootstrapPercentile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub std_error: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub method: IntervalMethod,
}

impl Interval {
    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub null_description: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub df: Option<usize>,
}

impl TestResult {
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value < alpha
    }
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "level must lie in (0, 1), got {level}"
        )))
    }
}

/// `z_{(1 + level) / 2}`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    check_level(level)?;
    Ok(standard_normal().inverse_cdf((1.0 + level) / 2.0))
}

/// Two-sided p-value of a standard normal statistic.
pub fn normal_two_sided_p(z: f64) -> f64 {
    (2.0 * standard_normal().cdf(-z.abs())).min(1.0)
}

/// Upper-tail p-value of a chi-square statistic.
pub fn chi_square_p(statistic: f64, df: usize) -> f64 {
    ChiSquared::new(df as f64)
        .map(|d| d.sf(statistic.max(0.0)))
        .unwrap_or(f64::NAN)
}

/// `sqrt(sample variance of the influence values / n)`.
pub fn sandwich_se(e: &EstimateWithIF) -> f64 {
    let n = e.n();
    if n < 2 {
        return 0.0;
    }
    let mean = e.if_values.iter().sum::<f64>() / n as f64;
    let ss: f64 = e.if_values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1) as f64 / n as f64).sqrt()
}

pub fn sandwich_ci(e: &EstimateWithIF, level: f64) -> Result<Interval> {
    let z = normal_quantile(level)?;
    let se = sandwich_se(e);
    Ok(Interval {
        estimate: e.value,
        std_error: se,
        lower: e.value - z * se,
        upper: e.value + z * se,
        level,
        method: IntervalMethod::Sandwich,
    })
}

/// Two-sided Wald test of `value == null_value` with the sandwich standard error.
pub fn wald_test(e: &EstimateWithIF, null_value: f64) -> Result<TestResult> {
    let se = sandwich_se(e);
    if se.is_nan() || se <= 0.0 {
        return Err(Error::DegenerateTest);
    }
    let z = (e.value - null_value) / se;
    Ok(TestResult {
        statistic: z,
        p_value: normal_two_sided_p(z),
        null_description: format!("{} = {null_value}", e.label),
        df: None,
    })
}

/// What to estimate on one dataset: used for the main analysis, each
/// bootstrap replicate and each Monte Carlo replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisPlan {
    pub fit: FitOptions,
    pub estimation: EstimatorOptions,
    pub arms: Vec<Arm>,
    pub estimators: Vec<Estimator>,
}

impl Default for AnalysisPlan {
    fn default() -> Self {
        AnalysisPlan {
            fit: FitOptions::default(),
            estimation: EstimatorOptions::default(),
            arms: Arm::BOTH.to_vec(),
            estimators: Estimator::ALL.to_vec(),
        }
    }
}

/// Label of the treatment effect `est(1) - est(0)`.
pub fn ate_label(est: Estimator) -> String {
    format!("ate[{est}]")
}

/// Label of the benchmarking contrast `phi(a) - chi(a)`.
pub fn delta_label(a: Arm) -> String {
    format!("delta({a})")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanEstimates {
    /// One per (arm, estimator), arm-major.
    pub estimates: Vec<(Arm, Estimator, EstimateWithIF)>,
    /// Per estimator, when both arms are in the plan.
    pub treatment_effects: Vec<(Estimator, EstimateWithIF)>,
    /// Per arm, when both `phi` and `chi` are in the plan.
    pub deltas: Vec<(Arm, EstimateWithIF)>,
}

impl PlanEstimates {
    pub fn all(&self) -> impl Iterator<Item = &EstimateWithIF> {
        self.estimates
            .iter()
            .map(|(_, _, e)| e)
            .chain(self.treatment_effects.iter().map(|(_, e)| e))
            .chain(self.deltas.iter().map(|(_, e)| e))
    }

    pub fn get(&self, label: &str) -> Option<&EstimateWithIF> {
        self.all().find(|e| e.label == label)
    }

    pub fn estimate(&self, arm: Arm, est: Estimator) -> Option<&EstimateWithIF> {
        self.estimates
            .iter()
            .find(|(a, e, _)| *a == arm && *e == est)
            .map(|(_, _, v)| v)
    }

    pub fn delta(&self, arm: Arm) -> Option<&EstimateWithIF> {
        self.deltas.iter().find(|(a, _)| *a == arm).map(|(_, e)| e)
    }
}

impl AnalysisPlan {
    pub fn validate(&self) -> Result<()> {
        if self.estimators.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one estimator must be selected".into(),
            ));
        }
        if self.arms.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one treatment arm must be selected".into(),
            ));
        }
        Ok(())
    }

    pub fn has_benchmark(&self) -> bool {
        self.estimators.contains(&Estimator::Phi) && self.estimators.contains(&Estimator::Chi)
    }

    fn arms(&self) -> Vec<Arm> {
        let mut arms = self.arms.clone();
        arms.sort();
        arms.dedup();
        arms.reverse();
        arms
    }

    fn estimators(&self) -> Vec<Estimator> {
        let mut e = self.estimators.clone();
        e.sort();
        e.dedup();
        e
    }

    /// Labels of every quantity [`AnalysisPlan::evaluate`] produces, in order.
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        for a in self.arms() {
            for est in self.estimators() {
                out.push(est.label(a));
            }
        }
        if self.arms().len() == 2 {
            out.extend(self.estimators().into_iter().map(ate_label));
        }
        if self.has_benchmark() {
            out.extend(self.arms().into_iter().map(delta_label));
        }
        out
    }

    pub fn evaluate(&self, d: &Dataset) -> Result<(NuisanceSet, PlanEstimates)> {
        let nu = fit_nuisances(d, &self.fit)?;
        let est = self.evaluate_with(d, &nu)?;
        Ok((nu, est))
    }

    pub fn evaluate_with(&self, d: &Dataset, nu: &NuisanceSet) -> Result<PlanEstimates> {
        self.validate()?;
        let arms = self.arms();
        let ests = self.estimators();
        let mut estimates = Vec::new();
        for &a in &arms {
            for &est in &ests {
                estimates.push((a, est, est.estimate(d, nu, a, &self.estimation)?));
            }
        }
        let find = |a: Arm, est: Estimator| {
            estimates
                .iter()
                .find(|(x, y, _)| *x == a && *y == est)
                .map(|(_, _, e)| e)
                .expect("estimate present")
        };
        let mut treatment_effects = Vec::new();
        if arms.len() == 2 {
            for &est in &ests {
                let mut c = contrast(find(Arm::Treated, est), find(Arm::Control, est))?;
                c.label = ate_label(est);
                treatment_effects.push((est, c));
            }
        }
        let mut deltas = Vec::new();
        if self.has_benchmark() {
            for &a in &arms {
                let mut c = contrast(find(a, Estimator::Phi), find(a, Estimator::Chi))?;
                c.label = delta_label(a);
                deltas.push((a, c));
            }
        }
        Ok(PlanEstimates {
            estimates,
            treatment_effects,
            deltas,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Successful replicate estimates in replicate-index order.
    pub replicates: Vec<f64>,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub failures: usize,
}

impl BootstrapResult {
    pub fn std_error(&self) -> f64 {
        let n = self.replicates.len();
        if n < 2 {
            return 0.0;
        }
        let mean = self.replicates.iter().sum::<f64>() / n as f64;
        (self
            .replicates
            .iter()
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / (n - 1) as f64)
            .sqrt()
    }

    /// Percentile interval around `estimate`, the full-sample point estimate.
    pub fn percentile_interval(&self, estimate: f64, level: f64) -> Result<Interval> {
        check_level(level)?;
        if self.replicates.is_empty() {
            return Err(Error::InvalidArgument(
                "no successful bootstrap replicates".into(),
            ));
        }
        let mut sorted = self.replicates.clone();
        sorted.sort_by(f64::total_cmp);
        let alpha = (1.0 - level) / 2.0;
        Ok(Interval {
            estimate,
            std_error: self.std_error(),
            lower: quantile_sorted(&sorted, alpha),
            upper: quantile_sorted(&sorted, 1.0 - alpha),
            level,
            method: IntervalMethod::BootstrapPercentile,
        })
    }
}

/// Linearly interpolated quantile of sorted data (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Resample `S = 1` rows among themselves and `S = 0` rows among themselves.
pub fn stratified_resample<R: Rng>(d: &Dataset, rng: &mut R) -> Result<Dataset> {
    let trial: Vec<usize> = (0..d.len()).filter(|&i| d.s()[i] == 1).collect();
    let emulation: Vec<usize> = (0..d.len()).filter(|&i| d.s()[i] == 0).collect();
    let mut rows = Vec::with_capacity(d.len());
    for group in [&trial, &emulation] {
        for _ in 0..group.len() {
            rows.push(group[rng.random_range(0..group.len())]);
        }
    }
    d.select(&rows)
}

/// Study-stratified bootstrap with nuisances refitted per replicate.
///
/// Replicate `r` draws from [`stream_rng`]`(seed, r)`, so the output is
/// identical under any degree of parallelism. Replicates whose fits fail
/// are counted in `failures`; more than `B / 2` failures abort.
pub fn bootstrap(
    d: &Dataset,
    plan: &AnalysisPlan,
    b: usize,
    seed: u64,
) -> Result<BTreeMap<String, BootstrapResult>> {
    if b == 0 {
        return Err(Error::InvalidArgument("bootstrap needs B >= 1".into()));
    }
    plan.validate()?;
    let labels = plan.labels();
    let runs: Vec<Result<Vec<f64>>> = (0..b as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(seed, r);
            let sample = stratified_resample(d, &mut rng)?;
            let (_, est) = plan.evaluate(&sample)?;
            Ok(labels
                .iter()
                .map(|l| est.get(l).map(|e| e.value).unwrap_or(f64::NAN))
                .collect())
        })
        .collect();

    let mut replicates = vec![Vec::with_capacity(b); labels.len()];
    let mut failures = 0;
    for run in runs {
        match run {
            Ok(values) => {
                for (slot, v) in replicates.iter_mut().zip(values) {
                    slot.push(v);
                }
            }
            Err(e) if e.is_replicate_failure() => failures += 1,
            Err(e) => return Err(e),
        }
    }
    if 2 * failures > b {
        return Err(Error::TooManyFailures {
            what: "bootstrap",
            failures,
            replicates: b,
        });
    }
    Ok(labels
        .into_iter()
        .zip(replicates)
        .map(|(label, replicates)| {
            (
                label,
                BootstrapResult {
                    replicates,
                    b,
                    seed,
                    failures,
                },
            )
        })
        .collect())
}
