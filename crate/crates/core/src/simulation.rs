//! Synthetic trial + emulation data with known ground truth, and a Monte
//! Carlo harness for bias, variance, coverage and benchmarking behavior.
//!
//! A scenario describes a super-population law for the covariates, a
//! participation model `Pr[S=1 | X]`, a randomized trial arm probability, an
//! emulation propensity `Pr[A=1 | X, S=0]` and an outcome law. Two optional
//! unmeasured binary variables break the identifying conditions:
//!
//! * a confounder `U_c` acting on treatment in the emulation and on the
//!   outcome (no-confounding in the emulation fails);
//! * a transport modifier `U_t` acting on participation and on the outcome
//!   (exchangeability between the study populations fails).
//!
//! Each study is sampled on its own stream from the study-conditional law
//! `f(x, u | S = s)`, so per-study sample sizes are fixed by design. The
//! unmeasured variables never appear in the emitted dataset.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Arm, Dataset};
use crate::diagnostics::{restriction_test, RestrictionOptions};
use crate::error::{Error, Result};
use crate::estimators::{Estimator, EstimatorOptions};
use crate::inference::{
    ate_label, delta_label, normal_quantile, sandwich_se, wald_test, AnalysisPlan,
};
use crate::nuisance::{
    expit, fit_nuisances, FitOptions, IrlsOptions, Misspecification, ModelName, OutcomeKind,
};
use crate::rng::{derived_seed, stream_rng};

/// Draws used for the ground truth of non-enumerable covariate laws.
pub const DEFAULT_TRUTH_DRAWS: usize = 10_000_000;
const MAX_BINARY_COVARIATES: usize = 16;
const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CovariateLaw {
    /// Independent Bernoulli covariates with the given `Pr[X_j = 1]`.
    Binary { probs: Vec<f64> },
    /// `dim` independent standard normal covariates.
    Normal { dim: usize },
}

impl CovariateLaw {
    pub fn dim(&self) -> usize {
        match self {
            CovariateLaw::Binary { probs } => probs.len(),
            CovariateLaw::Normal { dim } => *dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeCoefficients {
    pub intercept: f64,
    pub covariates: Vec<f64>,
    pub treatment: f64,
    /// Treatment-by-covariate effects.
    pub interactions: Vec<f64>,
}

fn half() -> f64 {
    0.5
}

fn one() -> f64 {
    1.0
}

/// Unmeasured `U_c ~ Bernoulli(prevalence)` shifting the emulation's
/// treatment logit and the outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfoundingViolation {
    #[serde(default = "half")]
    pub prevalence: f64,
    #[serde(default = "one")]
    pub on_treatment: f64,
    #[serde(default = "one")]
    pub on_outcome: f64,
}

impl Default for ConfoundingViolation {
    fn default() -> Self {
        ConfoundingViolation {
            prevalence: 0.5,
            on_treatment: 1.0,
            on_outcome: 1.0,
        }
    }
}

/// Unmeasured `U_t ~ Bernoulli(prevalence)` shifting the participation logit
/// and the outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportViolation {
    #[serde(default = "half")]
    pub prevalence: f64,
    #[serde(default = "one")]
    pub on_participation: f64,
    #[serde(default = "one")]
    pub on_outcome: f64,
}

impl Default for TransportViolation {
    fn default() -> Self {
        TransportViolation {
            prevalence: 0.5,
            on_participation: 1.0,
            on_outcome: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub covariates: CovariateLaw,
    /// Super-population participation logit: intercept then one per covariate.
    pub participation: Vec<f64>,
    pub trial_arm_prob: f64,
    /// Emulation treatment logit: intercept then one per covariate.
    pub emulation_propensity: Vec<f64>,
    pub outcome: OutcomeCoefficients,
    #[serde(default = "one")]
    pub noise_sd: f64,
    #[serde(default)]
    pub outcome_kind: OutcomeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confounding: Option<ConfoundingViolation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport: Option<TransportViolation>,
}

impl ScenarioConfig {
    /// Canonical correctly specified scenario: one binary covariate,
    /// `Pr[X=1] = 0.5`, participation logit `-0.4 + 0.8 X`, trial arm
    /// probability 0.5, emulation logit `-0.2 + 0.6 X`, outcome mean
    /// `1 + X + 2A + AX` with unit noise.
    pub fn d1() -> Self {
        ScenarioConfig {
            name: "D1".into(),
            covariates: CovariateLaw::Binary { probs: vec![0.5] },
            participation: vec![-0.4, 0.8],
            trial_arm_prob: 0.5,
            emulation_propensity: vec![-0.2, 0.6],
            outcome: OutcomeCoefficients {
                intercept: 1.0,
                covariates: vec![1.0],
                treatment: 2.0,
                interactions: vec![1.0],
            },
            noise_sd: 1.0,
            outcome_kind: OutcomeKind::Continuous,
            confounding: None,
            transport: None,
        }
    }

    /// D1 with no confounding in the emulation (`emulation`) and
    /// exchangeability across studies (`transport`) holding or failing as
    /// requested, using default violation strengths.
    pub fn truth_row(emulation: bool, transport: bool) -> Self {
        let flag = |b: bool| if b { "T" } else { "F" };
        ScenarioConfig {
            name: format!("truth-{}{}", flag(emulation), flag(transport)),
            confounding: (!emulation).then(ConfoundingViolation::default),
            transport: (!transport).then(TransportViolation::default),
            ..Self::d1()
        }
    }

    pub fn dim(&self) -> usize {
        self.covariates.dim()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.dim();
        let bad = |m: String| {
            Err(Error::InvalidArgument(format!(
                "unattainable scenario: {m}"
            )))
        };
        if k == 0 {
            return bad("at least one covariate is required".into());
        }
        if self.participation.len() != k + 1 || self.emulation_propensity.len() != k + 1 {
            return bad(format!(
                "participation and emulation logits need {} coefficients",
                k + 1
            ));
        }
        if self.outcome.covariates.len() != k || self.outcome.interactions.len() != k {
            return bad(format!(
                "outcome needs {k} covariate and {k} interaction effects"
            ));
        }
        if !(self.trial_arm_prob > 0.0 && self.trial_arm_prob < 1.0) {
            return bad("trial arm probability must lie in (0, 1)".into());
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return bad("noise sd must be finite and non-negative".into());
        }
        let coefs = self
            .participation
            .iter()
            .chain(&self.emulation_propensity)
            .chain(&self.outcome.covariates)
            .chain(&self.outcome.interactions)
            .chain([&self.outcome.intercept, &self.outcome.treatment]);
        if coefs.into_iter().any(|c| !c.is_finite()) {
            return bad("coefficients must be finite".into());
        }
        for prev in [
            self.confounding.as_ref().map(|c| c.prevalence),
            self.transport.as_ref().map(|t| t.prevalence),
        ]
        .into_iter()
        .flatten()
        {
            if !(prev > 0.0 && prev < 1.0) {
                return bad("unmeasured-variable prevalence must lie in (0, 1)".into());
            }
        }
        if let CovariateLaw::Binary { probs } = &self.covariates {
            if k > MAX_BINARY_COVARIATES {
                return bad(format!("at most {MAX_BINARY_COVARIATES} binary covariates"));
            }
            if probs.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
                return bad("binary covariate probabilities must lie in (0, 1)".into());
            }
            for atom in self.atoms() {
                for uc in [0.0, 1.0] {
                    for p in [
                        self.participation_prob(&atom.x, atom.ut),
                        self.emulation_treatment_prob(&atom.x, uc),
                    ] {
                        if !(p > PROB_EPS && p < 1.0 - PROB_EPS) {
                            return bad(format!("probability {p} at x = {:?}", atom.x));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn covariate_names(&self) -> Vec<String> {
        (1..=self.dim()).map(|j| format!("X{j}")).collect()
    }

    fn linear(coefs: &[f64], x: &[f64]) -> f64 {
        coefs[0] + coefs[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
    }

    fn ut_effect(&self) -> (f64, f64) {
        self.transport
            .as_ref()
            .map_or((0.0, 0.0), |t| (t.on_participation, t.on_outcome))
    }

    fn uc_effect(&self) -> (f64, f64) {
        self.confounding
            .as_ref()
            .map_or((0.0, 0.0), |c| (c.on_treatment, c.on_outcome))
    }

    fn ut_prevalence(&self) -> f64 {
        self.transport.as_ref().map_or(0.0, |t| t.prevalence)
    }

    fn uc_prevalence(&self) -> f64 {
        self.confounding.as_ref().map_or(0.0, |c| c.prevalence)
    }

    /// Super-population `Pr[S = 1 | x, U_t]`.
    pub fn participation_prob(&self, x: &[f64], ut: f64) -> f64 {
        expit(Self::linear(&self.participation, x) + self.ut_effect().0 * ut)
    }

    /// `Pr[A = 1 | x, U_c, S = 0]`.
    pub fn emulation_treatment_prob(&self, x: &[f64], uc: f64) -> f64 {
        expit(Self::linear(&self.emulation_propensity, x) + self.uc_effect().0 * uc)
    }

    /// `E[Y^a | x, U_c, U_t]`.
    pub fn outcome_mean(&self, x: &[f64], a: u8, uc: f64, ut: f64) -> f64 {
        let o = &self.outcome;
        let a = a as f64;
        let lp = o.intercept
            + o.treatment * a
            + o.covariates
                .iter()
                .zip(&o.interactions)
                .zip(x)
                .map(|((b, g), v)| (b + g * a) * v)
                .sum::<f64>()
            + self.uc_effect().1 * uc
            + self.ut_effect().1 * ut;
        match self.outcome_kind {
            OutcomeKind::Continuous => lp,
            OutcomeKind::Binary => expit(lp),
        }
    }

    /// `E[Y^a | x, U_t]`, averaging over the confounder's prior.
    fn outcome_mean_given_ut(&self, x: &[f64], a: u8, ut: f64) -> f64 {
        let q = self.uc_prevalence();
        (1.0 - q) * self.outcome_mean(x, a, 0.0, ut) + q * self.outcome_mean(x, a, 1.0, ut)
    }

    /// Super-population atoms `(x, U_t)` of an enumerable law with their mass.
    fn atoms(&self) -> Vec<Atom> {
        let CovariateLaw::Binary { probs } = &self.covariates else {
            return Vec::new();
        };
        let k = probs.len();
        let q = self.ut_prevalence();
        let uts: &[(f64, f64)] = if self.transport.is_some() {
            &[(0.0, 1.0 - q), (1.0, q)]
        } else {
            &[(0.0, 1.0)]
        };
        let mut out = Vec::with_capacity((1 << k) * uts.len());
        for bits in 0..(1u32 << k) {
            let x: Vec<f64> = (0..k).map(|j| ((bits >> j) & 1) as f64).collect();
            let px: f64 = probs
                .iter()
                .zip(&x)
                .map(|(&p, &v)| if v == 1.0 { p } else { 1.0 - p })
                .product();
            for &(ut, pu) in uts {
                out.push(Atom {
                    x: x.clone(),
                    ut,
                    mass: px * pu,
                });
            }
        }
        out
    }

    /// Atoms reweighted to the study-conditional law `f(x, U_t | S = s)`.
    fn conditional_atoms(&self, s: u8) -> Vec<Atom> {
        let mut atoms = self.atoms();
        for a in &mut atoms {
            let p1 = self.participation_prob(&a.x, a.ut);
            a.mass *= if s == 1 { p1 } else { 1.0 - p1 };
        }
        let total: f64 = atoms.iter().map(|a| a.mass).sum();
        for a in &mut atoms {
            a.mass /= total;
        }
        atoms
    }
}

#[derive(Debug, Clone)]
struct Atom {
    x: Vec<f64>,
    ut: f64,
    mass: f64,
}

fn bernoulli<R: Rng>(rng: &mut R, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// Draw a dataset with `n_trial` rows from `S = 1` followed by `n_emulation`
/// rows from `S = 0`. The trial uses stream 0 of `seed`, the emulation stream 1.
pub fn generate(
    cfg: &ScenarioConfig,
    n_trial: usize,
    n_emulation: usize,
    seed: u64,
) -> Result<Dataset> {
    cfg.validate()?;
    if n_trial == 0 || n_emulation == 0 {
        return Err(Error::InvalidArgument(
            "both studies need at least one row".into(),
        ));
    }
    let k = cfg.dim();
    let n = n_trial + n_emulation;
    let (mut xs, mut ss, mut as_, mut ys) = (
        Vec::with_capacity(n * k),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    let mut x = vec![0.0; k];
    for (s, count, stream) in [(1u8, n_trial, 0u64), (0u8, n_emulation, 1u64)] {
        let mut rng = stream_rng(seed, stream);
        let atoms = cfg.conditional_atoms(s);
        let picker = if atoms.is_empty() {
            None
        } else {
            Some(
                WeightedIndex::new(atoms.iter().map(|a| a.mass))
                    .map_err(|e| Error::InvalidArgument(e.to_string()))?,
            )
        };
        for _ in 0..count {
            let ut = match &picker {
                Some(w) => {
                    let atom = &atoms[w.sample(&mut rng)];
                    x.copy_from_slice(&atom.x);
                    atom.ut
                }
                None => loop {
                    for v in x.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                    let ut = if cfg.transport.is_some() && bernoulli(&mut rng, cfg.ut_prevalence())
                    {
                        1.0
                    } else {
                        0.0
                    };
                    let p1 = cfg.participation_prob(&x, ut);
                    if bernoulli(&mut rng, if s == 1 { p1 } else { 1.0 - p1 }) {
                        break ut;
                    }
                },
            };
            let uc = if cfg.confounding.is_some() && bernoulli(&mut rng, cfg.uc_prevalence()) {
                1.0
            } else {
                0.0
            };
            let p_treat = if s == 1 {
                cfg.trial_arm_prob
            } else {
                cfg.emulation_treatment_prob(&x, uc)
            };
            let a = bernoulli(&mut rng, p_treat) as u8;
            let mean = cfg.outcome_mean(&x, a, uc, ut);
            let y = match cfg.outcome_kind {
                OutcomeKind::Continuous => {
                    mean + cfg.noise_sd * rng.sample::<f64, _>(StandardNormal)
                }
                OutcomeKind::Binary => bernoulli(&mut rng, mean) as u8 as f64,
            };
            xs.extend_from_slice(&x);
            ss.push(s);
            as_.push(a);
            ys.push(y);
        }
    }
    Dataset::new(cfg.covariate_names(), xs, ss, as_, ys)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truths {
    /// `E[Y^0 | S = 0]`, `E[Y^1 | S = 0]`.
    pub potential_outcome_means: [f64; 2],
    /// `E[Y^1 - Y^0 | S = 0]`.
    pub ate: f64,
    /// No unmeasured confounding in the emulation.
    pub emulation_exchangeable: bool,
    /// Exchangeability of the trial and emulation populations.
    pub transport_exchangeable: bool,
    /// Whether `E[Y|X,S=1,A=a] = E[Y|X,S=0,A=a]` holds for both arms.
    pub restriction_holds: bool,
    /// Monte Carlo standard error of the means when not computed exactly.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo_error: Option<f64>,
}

impl Truths {
    pub fn mean(&self, a: Arm) -> f64 {
        self.potential_outcome_means[a.index()]
    }
}

/// Ground truth: exact enumeration for binary covariates, otherwise an
/// average of the true conditional mean over `draws` super-population draws
/// reweighted to `S = 0`.
pub fn true_values(cfg: &ScenarioConfig) -> Result<Truths> {
    true_values_with(cfg, DEFAULT_TRUTH_DRAWS)
}

pub fn true_values_with(cfg: &ScenarioConfig, draws: usize) -> Result<Truths> {
    cfg.validate()?;
    let emulation_exchangeable = cfg
        .confounding
        .as_ref()
        .is_none_or(|c| c.on_treatment == 0.0 || c.on_outcome == 0.0);
    let transport_exchangeable = cfg
        .transport
        .as_ref()
        .is_none_or(|t| t.on_participation == 0.0 || t.on_outcome == 0.0);
    let (means, mc_error) = match &cfg.covariates {
        CovariateLaw::Binary { .. } => {
            let atoms = cfg.conditional_atoms(0);
            let m = |a: u8| {
                atoms
                    .iter()
                    .map(|at| at.mass * cfg.outcome_mean_given_ut(&at.x, a, at.ut))
                    .sum::<f64>()
            };
            ([m(0), m(1)], None)
        }
        CovariateLaw::Normal { dim } => {
            if draws < 2 {
                return Err(Error::InvalidArgument(
                    "need at least two truth draws".into(),
                ));
            }
            let mut rng = stream_rng(0x7472_7574_6873, 0);
            let mut x = vec![0.0; *dim];
            // ratio estimator sum(w h) / sum(w) with w = Pr[S=0 | x, u]
            let (mut sw, mut swh0, mut swh1) = (0.0, 0.0, 0.0);
            let mut samples = Vec::with_capacity(draws);
            for _ in 0..draws {
                for v in x.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let ut = if cfg.transport.is_some() && bernoulli(&mut rng, cfg.ut_prevalence()) {
                    1.0
                } else {
                    0.0
                };
                let w = 1.0 - cfg.participation_prob(&x, ut);
                let h0 = cfg.outcome_mean_given_ut(&x, 0, ut);
                let h1 = cfg.outcome_mean_given_ut(&x, 1, ut);
                sw += w;
                swh0 += w * h0;
                swh1 += w * h1;
                samples.push((w, h0, h1));
            }
            let m0 = swh0 / sw;
            let m1 = swh1 / sw;
            let wbar = sw / draws as f64;
            // delta-method standard error of the ratio, for the larger of the two arms
            let se = |m: f64, pick: fn(&(f64, f64, f64)) -> f64| {
                let v: f64 = samples
                    .iter()
                    .map(|s| (s.0 * (pick(s) - m)).powi(2))
                    .sum::<f64>()
                    / (draws - 1) as f64;
                (v / draws as f64).sqrt() / wbar
            };
            let e = se(m0, |s| s.1).max(se(m1, |s| s.2));
            ([m0, m1], Some(e))
        }
    };
    let restriction_holds = if emulation_exchangeable && transport_exchangeable {
        true
    } else {
        match observed_functionals(cfg, 0.5) {
            Some(f) => f.max_restriction_gap < 1e-12,
            None => false,
        }
    };
    Ok(Truths {
        potential_outcome_means: means,
        ate: means[1] - means[0],
        emulation_exchangeable,
        transport_exchangeable,
        restriction_holds,
        monte_carlo_error: mc_error,
    })
}

/// Population values of the observed-data functionals `phi`, `chi`, `psi`,
/// which the estimators converge to whether or not the identifying
/// conditions hold. Indexed by arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedFunctionals {
    pub phi: [f64; 2],
    pub chi: [f64; 2],
    pub psi: [f64; 2],
    /// `max |E[Y|x,S=1,A=a] - E[Y|x,S=0,A=a]|` over atoms and arms.
    pub max_restriction_gap: f64,
}

impl ObservedFunctionals {
    pub fn get(&self, est: Estimator, a: Arm) -> f64 {
        match est {
            Estimator::Phi => self.phi[a.index()],
            Estimator::Chi => self.chi[a.index()],
            Estimator::Psi => self.psi[a.index()],
        }
    }
}

/// Exact observed-data functionals for enumerable (binary) covariate laws.
/// `trial_fraction` is `n1 / (n0 + n1)`, which the pooled functional depends
/// on when the restriction fails. Returns `None` for continuous laws.
pub fn observed_functionals(
    cfg: &ScenarioConfig,
    trial_fraction: f64,
) -> Option<ObservedFunctionals> {
    let CovariateLaw::Binary { probs } = &cfg.covariates else {
        return None;
    };
    let k = probs.len();
    let q = cfg.uc_prevalence();
    let ucs: Vec<(f64, f64)> = if cfg.confounding.is_some() {
        vec![(0.0, 1.0 - q), (1.0, q)]
    } else {
        vec![(0.0, 1.0)]
    };
    let by_study: Vec<Vec<Atom>> = [0u8, 1].iter().map(|&s| cfg.conditional_atoms(s)).collect();
    let uts_per_x = if cfg.transport.is_some() { 2 } else { 1 };

    let (mut phi, mut chi, mut psi) = ([0.0; 2], [0.0; 2], [0.0; 2]);
    let mut gap = 0.0f64;
    for xi in 0..(1usize << k) {
        let span = xi * uts_per_x..(xi + 1) * uts_per_x;
        let x = &by_study[0][span.start].x;
        // f(x | S=s) and U_t | x, S=s
        let fx = |s: usize| {
            by_study[s][span.clone()]
                .iter()
                .map(|a| a.mass)
                .sum::<f64>()
        };
        let (f0, f1) = (fx(0), fx(1));
        for arm in [0u8, 1] {
            let mut cond = [0.0; 2];
            let mut treat = [0.0; 2];
            for s in [0usize, 1] {
                let fs = if s == 0 { f0 } else { f1 };
                // A | x, U_c, S=s and the posterior of U_c given x, A, S
                let pa = |uc: f64| {
                    let p1 = if s == 1 {
                        cfg.trial_arm_prob
                    } else {
                        cfg.emulation_treatment_prob(x, uc)
                    };
                    if arm == 1 {
                        p1
                    } else {
                        1.0 - p1
                    }
                };
                let norm: f64 = ucs.iter().map(|&(uc, pu)| pu * pa(uc)).sum();
                treat[s] = norm;
                let mut m = 0.0;
                for atom in &by_study[s][span.clone()] {
                    let put = atom.mass / fs;
                    for &(uc, pu) in &ucs {
                        m += put * pu * pa(uc) / norm * cfg.outcome_mean(x, arm, uc, atom.ut);
                    }
                }
                cond[s] = m;
            }
            gap = gap.max((cond[1] - cond[0]).abs());
            let w0 = (1.0 - trial_fraction) * f0 * treat[0];
            let w1 = trial_fraction * f1 * treat[1];
            let pooled = (w0 * cond[0] + w1 * cond[1]) / (w0 + w1);
            let a = arm as usize;
            phi[a] += f0 * cond[0];
            chi[a] += f0 * cond[1];
            psi[a] += f0 * pooled;
        }
    }
    Some(ObservedFunctionals {
        phi,
        chi,
        psi,
        max_restriction_gap: gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSettings {
    pub replicates: usize,
    pub n_trial: usize,
    pub n_emulation: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub misspecification: Option<Misspecification>,
    /// Confidence level of the sandwich intervals.
    pub level: f64,
    /// Significance level of the benchmarking and restriction tests.
    pub test_level: f64,
    pub include_interactions: bool,
    pub estimation: EstimatorOptions,
    pub irls: IrlsOptions,
    pub ridge_fallback: bool,
    /// Keep every replicate's point estimates in the report.
    pub keep_replicates: bool,
}

impl Default for MonteCarloSettings {
    fn default() -> Self {
        MonteCarloSettings {
            replicates: 200,
            n_trial: 5000,
            n_emulation: 5000,
            seed: 1,
            misspecification: None,
            level: 0.95,
            test_level: 0.05,
            include_interactions: false,
            estimation: EstimatorOptions::default(),
            irls: IrlsOptions::default(),
            ridge_fallback: false,
            keep_replicates: false,
        }
    }
}

impl MonteCarloSettings {
    pub fn new(replicates: usize, n_trial: usize, n_emulation: usize, seed: u64) -> Self {
        MonteCarloSettings {
            replicates,
            n_trial,
            n_emulation,
            seed,
            ..Default::default()
        }
    }

    /// Omit `covariate` from the named models.
    pub fn misspecify(mut self, models: &[ModelName], covariate: usize) -> Self {
        self.misspecification = Some(Misspecification {
            models: models.to_vec(),
            covariate,
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantityStats {
    pub label: String,
    /// Target value: the potential-outcome mean or effect; zero for the
    /// benchmarking contrast.
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub empirical_sd: f64,
    /// `empirical_sd / sqrt(replicates)`.
    pub mc_se: f64,
    pub mean_sandwich_se: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRate {
    pub arm: Arm,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCReport {
    pub scenario: String,
    pub truths: Truths,
    pub replicates_requested: usize,
    pub replicates: usize,
    pub failures: usize,
    pub n_trial: usize,
    pub n_emulation: usize,
    pub seed: u64,
    pub level: f64,
    pub test_level: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub misspecification: Option<Misspecification>,
    pub quantities: Vec<QuantityStats>,
    pub delta_rejection_rate: Vec<ArmRate>,
    pub restriction_rejection_rate: Vec<ArmRate>,
    /// Largest `|mean(IF)| / (1 + |value|)` over every replicate estimate.
    pub max_centering_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replicate_values: Option<BTreeMap<String, Vec<f64>>>,
}

impl MCReport {
    pub fn quantity(&self, label: &str) -> Option<&QuantityStats> {
        self.quantities.iter().find(|q| q.label == label)
    }

    pub fn estimator(&self, est: Estimator, a: Arm) -> &QuantityStats {
        self.quantity(&est.label(a)).expect("estimator in report")
    }

    pub fn delta_rejection(&self, a: Arm) -> f64 {
        self.delta_rejection_rate
            .iter()
            .find(|r| r.arm == a)
            .map_or(f64::NAN, |r| r.rate)
    }

    pub fn restriction_rejection(&self, a: Arm) -> f64 {
        self.restriction_rejection_rate
            .iter()
            .find(|r| r.arm == a)
            .map_or(f64::NAN, |r| r.rate)
    }
}

struct CellOutcome {
    values: Vec<f64>,
    se: Vec<f64>,
    delta_reject: Vec<bool>,
    centering: f64,
}

struct ReplicateOutcome {
    cells: Vec<CellOutcome>,
    restriction_reject: Vec<bool>,
}

const REPORT_ARMS: [Arm; 2] = [Arm::Treated, Arm::Control];

/// Monte Carlo study of all three estimators, their contrasts and the
/// restriction test. Replicate `r` generates from `derived_seed(seed, r)`,
/// so the report does not depend on scheduling.
pub fn run_monte_carlo(cfg: &ScenarioConfig, settings: &MonteCarloSettings) -> Result<MCReport> {
    let mut reports = run_monte_carlo_grid(
        cfg,
        settings,
        std::slice::from_ref(&settings.misspecification),
    )?;
    Ok(reports.remove(0))
}

/// Like [`run_monte_carlo`] for several misspecification cells at once.
/// All cells see the same replicate datasets; `settings.misspecification`
/// is ignored. A replicate that fails in any cell is dropped from all of them.
pub fn run_monte_carlo_grid(
    cfg: &ScenarioConfig,
    settings: &MonteCarloSettings,
    cells: &[Option<Misspecification>],
) -> Result<Vec<MCReport>> {
    cfg.validate()?;
    let reps = settings.replicates;
    if reps == 0 {
        return Err(Error::InvalidArgument("need at least one replicate".into()));
    }
    if cells.is_empty() {
        return Err(Error::InvalidArgument(
            "need at least one misspecification cell".into(),
        ));
    }
    let z = normal_quantile(settings.level)?;
    let truths = true_values(cfg)?;
    let plan = AnalysisPlan {
        fit: FitOptions {
            outcome_kind: cfg.outcome_kind,
            irls: settings.irls,
            ridge_fallback: settings.ridge_fallback,
            misspecification: None,
        },
        estimation: settings.estimation,
        arms: Arm::BOTH.to_vec(),
        estimators: Estimator::ALL.to_vec(),
    };
    let labels = plan.labels();
    let restriction_opts = RestrictionOptions {
        outcome_kind: cfg.outcome_kind,
        include_interactions: settings.include_interactions,
        threshold: settings.test_level,
        irls: settings.irls,
    };
    let mut dropped: Vec<usize> = cells.iter().flatten().map(|m| m.covariate).collect();
    dropped.sort_unstable();
    dropped.dedup();

    let runs: Vec<Result<ReplicateOutcome>> = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let d = generate(
                cfg,
                settings.n_trial,
                settings.n_emulation,
                derived_seed(settings.seed, r),
            )?;
            let correct = fit_nuisances(&d, &plan.fit)?;
            let reduced = dropped
                .iter()
                .map(|&covariate| {
                    let fit = FitOptions {
                        misspecification: Some(Misspecification {
                            models: ModelName::all(),
                            covariate,
                        }),
                        ..plan.fit.clone()
                    };
                    Ok((covariate, fit_nuisances(&d, &fit)?))
                })
                .collect::<Result<Vec<_>>>()?;
            let cells = cells
                .iter()
                .map(|cell| {
                    let nu = match cell {
                        None => correct.clone(),
                        Some(m) => {
                            let other = &reduced
                                .iter()
                                .find(|(c, _)| *c == m.covariate)
                                .expect("fitted")
                                .1;
                            correct.splice(other, &m.models)
                        }
                    };
                    let est = plan.evaluate_with(&d, &nu)?;
                    let mut values = Vec::with_capacity(labels.len());
                    let mut se = Vec::with_capacity(labels.len());
                    let mut centering = 0.0f64;
                    for l in &labels {
                        let e = est.get(l).expect("planned quantity");
                        values.push(e.value);
                        se.push(sandwich_se(e));
                        centering = centering.max(e.centering_residual());
                    }
                    let delta_reject = REPORT_ARMS
                        .iter()
                        .map(|&a| {
                            est.delta(a)
                                .and_then(|e| wald_test(e, 0.0).ok())
                                .is_some_and(|t| t.rejects(settings.test_level))
                        })
                        .collect();
                    Ok(CellOutcome {
                        values,
                        se,
                        delta_reject,
                        centering,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let restriction_reject = REPORT_ARMS
                .iter()
                .map(|&a| {
                    restriction_test(&d, a, &restriction_opts)
                        .map(|r| r.test.rejects(settings.test_level))
                })
                .collect::<Result<Vec<bool>>>()?;
            Ok(ReplicateOutcome {
                cells,
                restriction_reject,
            })
        })
        .collect();

    let mut done = Vec::with_capacity(reps);
    let mut failures = 0;
    for run in runs {
        match run {
            Ok(o) => done.push(o),
            Err(e) if e.is_replicate_failure() => failures += 1,
            Err(e) => return Err(e),
        }
    }
    if 2 * failures > reps {
        return Err(Error::TooManyFailures {
            what: "monte carlo",
            failures,
            replicates: reps,
        });
    }

    let m = done.len() as f64;
    let truth_for = |label: &str| -> f64 {
        for est in Estimator::ALL {
            for a in Arm::BOTH {
                if label == est.label(a) {
                    return truths.mean(a);
                }
            }
            if label == ate_label(est) {
                return truths.ate;
            }
        }
        debug_assert!(Arm::BOTH.iter().any(|&a| label == delta_label(a)));
        0.0
    };
    let rate = |pick: &dyn Fn(&ReplicateOutcome, usize) -> bool| -> Vec<ArmRate> {
        REPORT_ARMS
            .iter()
            .enumerate()
            .map(|(i, &arm)| ArmRate {
                arm,
                rate: done.iter().filter(|o| pick(o, i)).count() as f64 / m,
            })
            .collect()
    };
    let restriction_rejection_rate = rate(&|o, i| o.restriction_reject[i]);

    Ok(cells
        .iter()
        .enumerate()
        .map(|(c, cell)| {
            let quantities = labels
                .iter()
                .enumerate()
                .map(|(j, label)| {
                    let truth = truth_for(label);
                    let vals: Vec<f64> = done.iter().map(|o| o.cells[c].values[j]).collect();
                    let mean = vals.iter().sum::<f64>() / m;
                    let sd = if done.len() > 1 {
                        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
                    } else {
                        0.0
                    };
                    let covered = done
                        .iter()
                        .filter(|o| (o.cells[c].values[j] - truth).abs() <= z * o.cells[c].se[j])
                        .count();
                    QuantityStats {
                        label: label.clone(),
                        truth,
                        mean,
                        bias: mean - truth,
                        empirical_sd: sd,
                        mc_se: sd / m.sqrt(),
                        mean_sandwich_se: done.iter().map(|o| o.cells[c].se[j]).sum::<f64>() / m,
                        coverage: covered as f64 / m,
                    }
                })
                .collect();
            let replicate_values = settings.keep_replicates.then(|| {
                labels
                    .iter()
                    .enumerate()
                    .map(|(j, l)| {
                        (
                            l.clone(),
                            done.iter().map(|o| o.cells[c].values[j]).collect(),
                        )
                    })
                    .collect()
            });
            MCReport {
                scenario: cfg.name.clone(),
                truths: truths.clone(),
                replicates_requested: reps,
                replicates: done.len(),
                failures,
                n_trial: settings.n_trial,
                n_emulation: settings.n_emulation,
                seed: settings.seed,
                level: settings.level,
                test_level: settings.test_level,
                misspecification: cell.clone(),
                quantities,
                delta_rejection_rate: rate(&|o, i| o.cells[c].delta_reject[i]),
                restriction_rejection_rate: restriction_rejection_rate.clone(),
                max_centering_residual: done
                    .iter()
                    .map(|o| o.cells[c].centering)
                    .fold(0.0, f64::max),
                replicate_values,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn d1_truth_by_enumeration() {
        let t = true_values(&ScenarioConfig::d1()).unwrap();
        // Pr[X=1 | S=0] by Bayes' rule
        let p = (1.0 - expit(0.4)) * 0.5 / ((1.0 - expit(0.4)) * 0.5 + (1.0 - expit(-0.4)) * 0.5);
        assert!((p - 0.40131).abs() < 1e-5);
        assert!((t.mean(Arm::Treated) - (3.0 + 2.0 * p)).abs() < 1e-12);
        assert!((t.mean(Arm::Control) - (1.0 + p)).abs() < 1e-12);
        assert!((t.mean(Arm::Treated) - 3.80262).abs() < 1e-5);
        assert!((t.ate - 2.40131).abs() < 1e-5);
        assert!(t.emulation_exchangeable && t.transport_exchangeable && t.restriction_holds);
    }

    #[test]
    fn zero_effect_has_zero_ate() {
        let mut cfg = ScenarioConfig::d1();
        cfg.outcome.treatment = 0.0;
        cfg.outcome.interactions = vec![0.0];
        assert_eq!(true_values(&cfg).unwrap().ate, 0.0);
    }

    #[test]
    fn violation_flags() {
        let t = true_values(&ScenarioConfig::truth_row(true, false)).unwrap();
        assert!(t.emulation_exchangeable && !t.transport_exchangeable && !t.restriction_holds);
        let t = true_values(&ScenarioConfig::truth_row(false, true)).unwrap();
        assert!(!t.emulation_exchangeable && t.transport_exchangeable && !t.restriction_holds);
        let t = true_values(&ScenarioConfig::truth_row(false, false)).unwrap();
        assert!(!t.emulation_exchangeable && !t.transport_exchangeable && !t.restriction_holds);
        // a violation with no outcome pathway is vacuous
        let mut cfg = ScenarioConfig::truth_row(true, false);
        cfg.transport.as_mut().unwrap().on_outcome = 0.0;
        let t = true_values(&cfg).unwrap();
        assert!(t.transport_exchangeable && t.restriction_holds);
    }

    #[test]
    fn d1_functionals_agree_with_truth() {
        let cfg = ScenarioConfig::d1();
        let t = true_values(&cfg).unwrap();
        let f = observed_functionals(&cfg, 0.5).unwrap();
        for a in Arm::BOTH {
            for est in Estimator::ALL {
                assert!((f.get(est, a) - t.mean(a)).abs() < 1e-12);
            }
        }
        assert!(f.max_restriction_gap < 1e-12);
    }

    #[test]
    fn emulation_covariate_frequency() {
        let d = generate(&ScenarioConfig::d1(), 10, 100_000, 99).unwrap();
        let freq = d.rows().filter(|r| r.s == 0 && r.x[0] == 1.0).count() as f64 / d.n0() as f64;
        assert!((freq - 0.40131).abs() < 0.01, "{freq}");
    }

    #[test]
    fn noiseless_null_effect_outcomes_are_cell_constant() {
        let mut cfg = ScenarioConfig::d1();
        cfg.outcome.treatment = 0.0;
        cfg.outcome.interactions = vec![0.0];
        cfg.noise_sd = 0.0;
        let d = generate(&cfg, 300, 300, 5).unwrap();
        for r in d.rows() {
            assert_eq!(r.y, 1.0 + r.x[0]);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = ScenarioConfig::truth_row(false, false);
        assert_eq!(
            generate(&cfg, 500, 400, 3).unwrap(),
            generate(&cfg, 500, 400, 3).unwrap()
        );
        assert_ne!(
            generate(&cfg, 500, 400, 3).unwrap(),
            generate(&cfg, 500, 400, 4).unwrap()
        );
    }

    #[test]
    fn rejects_unattainable_configs() {
        let mut cfg = ScenarioConfig::d1();
        cfg.participation = vec![-40.0, 0.0];
        assert!(generate(&cfg, 10, 10, 1).is_err());
        let mut cfg = ScenarioConfig::d1();
        cfg.trial_arm_prob = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::d1();
        cfg.emulation_propensity = vec![0.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn normal_law_truth_reports_error() {
        let cfg = ScenarioConfig {
            covariates: CovariateLaw::Normal { dim: 2 },
            participation: vec![-0.4, 0.5, -0.3],
            emulation_propensity: vec![0.1, 0.4, 0.2],
            outcome: OutcomeCoefficients {
                intercept: 1.0,
                covariates: vec![1.0, 0.5],
                treatment: 1.5,
                interactions: vec![0.5, 0.0],
            },
            ..ScenarioConfig::d1()
        };
        let t = true_values_with(&cfg, 200_000).unwrap();
        let err = t.monte_carlo_error.unwrap();
        assert!(err > 0.0 && err < 0.01);
        let d = generate(&cfg, 100, 200_000, 8).unwrap();
        // E[Y^1 | S=0] = 2.5 + 1.5 E[X1 | S=0] + 0.5 E[X2 | S=0]
        let m =
            |j: usize| d.rows().filter(|r| r.s == 0).map(|r| r.x[j]).sum::<f64>() / d.n0() as f64;
        let direct = 2.5 + 1.5 * m(0) + 0.5 * m(1);
        assert!(
            (direct - t.mean(Arm::Treated)).abs() < 0.02,
            "{direct} vs {}",
            t.mean(Arm::Treated)
        );
    }
}
