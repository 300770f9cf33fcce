//! Doubly robust estimators of `E[Y^a | S = 0]`.
//!
//! * `phi(a)`: the emulation's own augmented IPW estimator, using
//!   `Pr[A=a|X,S=0]` and `E[Y|X,S=0,A=a]`.
//! * `chi(a)`: trial results transported to the emulation's covariate
//!   distribution, using `Pr[S=1|X]`, `Pr[A=a|X,S=1]` and `E[Y|X,S=1,A=a]`.
//! * `psi(a)`: joint analysis that pools both studies' outcome data, using
//!   `Pr[S=1|X]`, `Pr[A=a|X]` and `E[Y|X,A=a]`.
//!
//! All three share one shape: a standardization term averaging an outcome
//! model over the `S = 0` rows plus a weighted residual term, normalized by
//! the realized emulation count `n0`. Each estimate carries its per-row
//! influence-curve values, which drive all downstream inference.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{Arm, Dataset, Stratum};
use crate::error::{Error, Result};
use crate::nuisance::{NuisanceSet, OutcomeModel};

/// Smallest estimated probability accepted in an inverse weight.
pub const PROBABILITY_FLOOR: f64 = 1e-10;
/// Number of offending rows listed in a positivity error.
const LISTED_ROWS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Phi,
    Chi,
    Psi,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Phi, Estimator::Chi, Estimator::Psi];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Phi => "phi",
            Estimator::Chi => "chi",
            Estimator::Psi => "psi",
        }
    }

    pub fn label(self, a: Arm) -> String {
        format!("{}({a})", self.name())
    }

    pub fn estimate(
        self,
        d: &Dataset,
        nu: &NuisanceSet,
        a: Arm,
        opts: &EstimatorOptions,
    ) -> Result<EstimateWithIF> {
        match self {
            Estimator::Phi => estimate_phi(d, nu, a, opts),
            Estimator::Chi => estimate_chi(d, nu, a, opts),
            Estimator::Psi => estimate_psi(d, nu, a, opts),
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorOptions {
    /// Normalize the weighted residual term by the sum of its weights.
    pub hajek: bool,
    pub floor: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        EstimatorOptions {
            hajek: false,
            floor: PROBABILITY_FLOOR,
        }
    }
}

/// Point estimate with its estimated influence curve (one value per row, in
/// dataset row order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithIF {
    pub label: String,
    pub value: f64,
    pub if_values: Vec<f64>,
    /// Rows entering the estimator; for contrasts, rows with a nonzero
    /// contribution to either side.
    pub n_effective: usize,
    /// Fingerprint of the dataset the estimate was computed on.
    pub fingerprint: u64,
}

impl EstimateWithIF {
    pub fn n(&self) -> usize {
        self.if_values.len()
    }

    /// `|mean(if_values)| / (1 + |value|)`, which should be at rounding level.
    pub fn centering_residual(&self) -> f64 {
        let mean = self.if_values.iter().sum::<f64>() / self.n() as f64;
        mean.abs() / (1.0 + self.value.abs())
    }
}

/// Inputs for the common augmented form: outcome-model values on `S = 0`
/// rows and weighted residuals on the residual rows.
struct Augmented {
    standardized: Vec<(usize, f64)>,
    weighted: Vec<(usize, f64, f64)>,
}

impl Augmented {
    fn finish(self, d: &Dataset, label: String, opts: &EstimatorOptions) -> EstimateWithIF {
        let n = d.len() as f64;
        let n0 = d.n0() as f64;
        let mut if_values = vec![0.0; d.len()];
        let g_sum: f64 = self.standardized.iter().map(|&(_, g)| g).sum();
        let value = if opts.hajek {
            let g_bar = g_sum / n0;
            let w_sum: f64 = self.weighted.iter().map(|&(_, w, _)| w).sum();
            let resid = if w_sum > 0.0 {
                self.weighted.iter().map(|&(_, w, r)| w * r).sum::<f64>() / w_sum
            } else {
                0.0
            };
            for &(i, g) in &self.standardized {
                if_values[i] += n / n0 * (g - g_bar);
            }
            if w_sum > 0.0 {
                for &(i, w, r) in &self.weighted {
                    if_values[i] += n / w_sum * w * (r - resid);
                }
            }
            g_bar + resid
        } else {
            let resid_sum: f64 = self.weighted.iter().map(|&(_, w, r)| w * r).sum();
            let value = (resid_sum + g_sum) / n0;
            for &(i, w, r) in &self.weighted {
                if_values[i] += n / n0 * w * r;
            }
            for &(i, g) in &self.standardized {
                if_values[i] += n / n0 * (g - value);
            }
            value
        };
        let mut rows: Vec<usize> = self
            .standardized
            .iter()
            .map(|&(i, _)| i)
            .chain(self.weighted.iter().map(|&(i, _, _)| i))
            .collect();
        rows.sort_unstable();
        rows.dedup();
        EstimateWithIF {
            label,
            value,
            if_values,
            n_effective: rows.len(),
            fingerprint: d.fingerprint(),
        }
    }
}

fn positivity_error(model: &str, rows: Vec<usize>) -> Error {
    Error::Positivity {
        model: model.to_string(),
        count: rows.len(),
        rows: rows.into_iter().take(LISTED_ROWS).map(|i| i + 1).collect(),
    }
}

fn require_floor(model: &str, probs: &[(usize, f64)], floor: f64) -> Result<()> {
    let bad: Vec<usize> = probs
        .iter()
        .filter(|&&(_, p)| p.is_nan() || p < floor)
        .map(|&(i, _)| i)
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(positivity_error(model, bad))
    }
}

fn standardize(d: &Dataset, g: &OutcomeModel) -> Vec<(usize, f64)> {
    (0..d.len())
        .filter(|&i| d.s()[i] == 0)
        .map(|i| (i, g.mean(d.x(i))))
        .collect()
}

/// Observational estimator `phi(a)`.
pub fn estimate_phi(
    d: &Dataset,
    nu: &NuisanceSet,
    a: Arm,
    opts: &EstimatorOptions,
) -> Result<EstimateWithIF> {
    let g = nu.outcome(a, Stratum::Emulation);
    let e = &nu.propensity_s0;
    let rows: Vec<usize> = (0..d.len())
        .filter(|&i| d.s()[i] == 0 && d.a()[i] == a.as_u8())
        .collect();
    let probs: Vec<(usize, f64)> = rows
        .iter()
        .map(|&i| (i, e.prob(d.x(i), a.as_u8())))
        .collect();
    require_floor("propensity_s0", &probs, opts.floor)?;
    let weighted = probs
        .iter()
        .map(|&(i, p)| (i, 1.0 / p, d.y()[i] - g.mean(d.x(i))))
        .collect();
    Ok(Augmented {
        standardized: standardize(d, g),
        weighted,
    }
    .finish(d, Estimator::Phi.label(a), opts))
}

/// Transported trial estimator `chi(a)`.
pub fn estimate_chi(
    d: &Dataset,
    nu: &NuisanceSet,
    a: Arm,
    opts: &EstimatorOptions,
) -> Result<EstimateWithIF> {
    let g = nu.outcome(a, Stratum::Trial);
    let rows: Vec<usize> = (0..d.len())
        .filter(|&i| d.s()[i] == 1 && d.a()[i] == a.as_u8())
        .collect();
    let part: Vec<(usize, f64)> = rows
        .iter()
        .map(|&i| (i, nu.participation.prob(d.x(i), 1)))
        .collect();
    require_floor("participation", &part, opts.floor)?;
    let prop: Vec<(usize, f64)> = rows
        .iter()
        .map(|&i| (i, nu.propensity_s1.prob(d.x(i), a.as_u8())))
        .collect();
    require_floor("propensity_s1", &prop, opts.floor)?;
    let weighted = part
        .iter()
        .zip(&prop)
        .map(|(&(i, p), &(_, e))| {
            let odds = nu.participation.prob(d.x(i), 0) / p;
            (i, odds / e, d.y()[i] - g.mean(d.x(i)))
        })
        .collect();
    Ok(Augmented {
        standardized: standardize(d, g),
        weighted,
    }
    .finish(d, Estimator::Chi.label(a), opts))
}

/// Pooled joint-analysis estimator `psi(a)`.
pub fn estimate_psi(
    d: &Dataset,
    nu: &NuisanceSet,
    a: Arm,
    opts: &EstimatorOptions,
) -> Result<EstimateWithIF> {
    let g = nu.outcome(a, Stratum::Pooled);
    let rows: Vec<usize> = (0..d.len()).filter(|&i| d.a()[i] == a.as_u8()).collect();
    let prop: Vec<(usize, f64)> = rows
        .iter()
        .map(|&i| (i, nu.propensity_pooled.prob(d.x(i), a.as_u8())))
        .collect();
    require_floor("propensity_pooled", &prop, opts.floor)?;
    let weighted = prop
        .iter()
        .map(|&(i, e)| {
            let not_trial = nu.participation.prob(d.x(i), 0);
            (i, not_trial / e, d.y()[i] - g.mean(d.x(i)))
        })
        .collect();
    Ok(Augmented {
        standardized: standardize(d, g),
        weighted,
    }
    .finish(d, Estimator::Psi.label(a), opts))
}

/// `e1 - e2`, with elementwise-differenced influence curves.
pub fn contrast(e1: &EstimateWithIF, e2: &EstimateWithIF) -> Result<EstimateWithIF> {
    if e1.n() != e2.n() {
        return Err(Error::IncompatibleEstimates(format!(
            "{} has {} influence values, {} has {}",
            e1.label,
            e1.n(),
            e2.label,
            e2.n()
        )));
    }
    if e1.fingerprint != e2.fingerprint {
        return Err(Error::IncompatibleEstimates(format!(
            "{} and {} were computed on different datasets",
            e1.label, e2.label
        )));
    }
    let if_values: Vec<f64> = e1
        .if_values
        .iter()
        .zip(&e2.if_values)
        .map(|(a, b)| a - b)
        .collect();
    let n_effective = e1
        .if_values
        .iter()
        .zip(&e2.if_values)
        .filter(|(a, b)| **a != 0.0 || **b != 0.0)
        .count();
    Ok(EstimateWithIF {
        label: format!("{} - {}", e1.label, e2.label),
        value: e1.value - e2.value,
        if_values,
        n_effective,
        fingerprint: e1.fingerprint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nuisance::{fit_nuisances, FitOptions, OutcomeKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Small dataset with one binary covariate and every (S, A, X) cell populated.
    fn binary_dataset(seed: u64, n: usize, shift_trial: f64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut x, mut s, mut a, mut y) = (vec![], vec![], vec![], vec![]);
        for i in 0..n {
            let si = (i % 2) as u8;
            let xi = (rng.random::<f64>() < if si == 1 { 0.6 } else { 0.4 }) as u8 as f64;
            let p = if si == 1 { 0.5 } else { 0.3 + 0.3 * xi };
            let ai = (rng.random::<f64>() < p) as u8;
            let yi = 1.0 + xi + 2.0 * ai as f64 + si as f64 * shift_trial + rng.random::<f64>();
            x.push(xi);
            s.push(si);
            a.push(ai);
            y.push(yi);
        }
        Dataset::new(vec!["X1".into()], x, s, a, y).unwrap()
    }

    fn fitted(d: &Dataset) -> NuisanceSet {
        fit_nuisances(d, &FitOptions::new(OutcomeKind::Continuous)).unwrap()
    }

    /// Direct nonparametric standardization over S=0 cells.
    fn standardization_oracle(d: &Dataset, a: u8) -> f64 {
        let mut total = 0.0;
        for xv in [0.0, 1.0] {
            let cell: Vec<f64> = d
                .rows()
                .filter(|r| r.s == 0 && r.a == a && r.x[0] == xv)
                .map(|r| r.y)
                .collect();
            let freq = d.rows().filter(|r| r.s == 0 && r.x[0] == xv).count() as f64 / d.n0() as f64;
            total += freq * cell.iter().sum::<f64>() / cell.len() as f64;
        }
        total
    }

    #[test]
    fn phi_matches_standardization_with_saturated_models() {
        let d = binary_dataset(1, 2000, 0.0);
        let nu = fitted(&d);
        for arm in Arm::BOTH {
            let e = estimate_phi(&d, &nu, arm, &EstimatorOptions::default()).unwrap();
            assert!((e.value - standardization_oracle(&d, arm.as_u8())).abs() < 1e-10);
            assert!(e.centering_residual() < 1e-8);
            assert_eq!(e.n_effective, d.n0());
        }
    }

    #[test]
    fn constant_outcome_gives_constant() {
        let d = binary_dataset(2, 400, 0.0);
        let d = d.with_outcome(vec![4.25; d.len()]).unwrap();
        let nu = fitted(&d);
        let opts = EstimatorOptions::default();
        for est in Estimator::ALL {
            let e = est.estimate(&d, &nu, Arm::Treated, &opts).unwrap();
            assert!((e.value - 4.25).abs() < 1e-12, "{est}: {}", e.value);
        }
    }

    #[test]
    fn chi_reduces_to_standardized_trial_model_when_interpolating() {
        // Outcome depends on (S, A, X) only through a cell mean, so saturated
        // fits interpolate each trial cell and the residual term vanishes.
        let d = binary_dataset(3, 1000, 0.5);
        let y: Vec<f64> = d
            .rows()
            .map(|r| r.x[0] + 2.0 * r.a as f64 + 0.5 * r.s as f64)
            .collect();
        let d = d.with_outcome(y).unwrap();
        let nu = fitted(&d);
        let e = estimate_chi(&d, &nu, Arm::Treated, &EstimatorOptions::default()).unwrap();
        let g = nu.outcome(Arm::Treated, Stratum::Trial);
        let mean: f64 = d
            .rows()
            .filter(|r| r.s == 0)
            .map(|r| g.mean(r.x))
            .sum::<f64>()
            / d.n0() as f64;
        assert!((e.value - mean).abs() < 1e-10);
    }

    #[test]
    fn identical_studies_agree() {
        // Duplicate every row into both studies: the fitted trial, emulation
        // and pooled outcome models coincide.
        let base = binary_dataset(4, 600, 0.0);
        let (mut x, mut s, mut a, mut y) = (vec![], vec![], vec![], vec![]);
        for study in [0u8, 1] {
            for r in base.rows().filter(|r| r.s == 0) {
                x.extend_from_slice(r.x);
                s.push(study);
                a.push(r.a);
                y.push(r.y);
            }
        }
        let d = Dataset::new(vec!["X1".into()], x, s, a, y).unwrap();
        let nu = fitted(&d);
        let opts = EstimatorOptions::default();
        let phi = estimate_phi(&d, &nu, Arm::Treated, &opts).unwrap();
        let chi = estimate_chi(&d, &nu, Arm::Treated, &opts).unwrap();
        let psi = estimate_psi(&d, &nu, Arm::Treated, &opts).unwrap();
        assert!((phi.value - chi.value).abs() < 1e-10);
        assert!((phi.value - psi.value).abs() < 1e-10);
    }

    #[test]
    fn location_equivariance() {
        let d = binary_dataset(5, 1500, 0.3);
        let c = 17.5;
        let shifted = d
            .with_outcome(d.y().iter().map(|v| v + c).collect())
            .unwrap();
        let (nu, nu_c) = (fitted(&d), fitted(&shifted));
        let opts = EstimatorOptions::default();
        for arm in Arm::BOTH {
            for est in Estimator::ALL {
                let e = est.estimate(&d, &nu, arm, &opts).unwrap();
                let ec = est.estimate(&shifted, &nu_c, arm, &opts).unwrap();
                assert!((ec.value - e.value - c).abs() < 1e-10, "{est}({arm})");
            }
            let delta = estimate_phi(&d, &nu, arm, &opts).unwrap().value
                - estimate_chi(&d, &nu, arm, &opts).unwrap().value;
            let delta_c = estimate_phi(&shifted, &nu_c, arm, &opts).unwrap().value
                - estimate_chi(&shifted, &nu_c, arm, &opts).unwrap().value;
            assert!((delta - delta_c).abs() < 1e-10);
        }
    }

    #[test]
    fn hajek_estimates_are_centered() {
        let d = binary_dataset(6, 1000, 0.0);
        let nu = fitted(&d);
        let opts = EstimatorOptions {
            hajek: true,
            ..Default::default()
        };
        for est in Estimator::ALL {
            let e = est.estimate(&d, &nu, Arm::Treated, &opts).unwrap();
            assert!(e.centering_residual() < 1e-8);
        }
    }

    #[test]
    fn contrast_with_itself_is_zero() {
        let d = binary_dataset(7, 500, 0.0);
        let nu = fitted(&d);
        let e = estimate_psi(&d, &nu, Arm::Control, &EstimatorOptions::default()).unwrap();
        let z = contrast(&e, &e).unwrap();
        assert_eq!(z.value, 0.0);
        assert!(z.if_values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn contrast_rejects_other_datasets() {
        let d1 = binary_dataset(8, 500, 0.0);
        let d2 = binary_dataset(9, 500, 0.0);
        let d3 = binary_dataset(9, 400, 0.0);
        let opts = EstimatorOptions::default();
        let e1 = estimate_phi(&d1, &fitted(&d1), Arm::Treated, &opts).unwrap();
        let e2 = estimate_phi(&d2, &fitted(&d2), Arm::Treated, &opts).unwrap();
        let e3 = estimate_phi(&d3, &fitted(&d3), Arm::Treated, &opts).unwrap();
        assert!(matches!(
            contrast(&e1, &e2),
            Err(Error::IncompatibleEstimates(_))
        ));
        assert!(matches!(
            contrast(&e1, &e3),
            Err(Error::IncompatibleEstimates(_))
        ));
    }

    #[test]
    fn propensity_floor_violation_lists_rows() {
        let d = binary_dataset(10, 400, 0.0);
        let mut nu = fitted(&d);
        nu.propensity_s0.coefficients = vec![-40.0, 0.0];
        match estimate_phi(&d, &nu, Arm::Treated, &EstimatorOptions::default()) {
            Err(Error::Positivity { model, count, rows }) => {
                assert_eq!(model, "propensity_s0");
                assert!(count > 0);
                assert!(rows
                    .iter()
                    .all(|&r| d.row(r - 1).s == 0 && d.row(r - 1).a == 1));
            }
            other => panic!("expected positivity error, got {other:?}"),
        }
        nu = fitted(&d);
        nu.participation.coefficients = vec![-40.0, 0.0];
        assert!(matches!(
            estimate_chi(&d, &nu, Arm::Treated, &EstimatorOptions::default()),
            Err(Error::Positivity { ref model, .. }) if model == "participation"
        ));
    }
}
