//! Config-file driven front end: analysis of user data, Monte Carlo studies
//! and validation. Every run is described by one JSON file; the report
//! echoes the fully resolved config so it can be re-run as is.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::{
    load_dataset, validate, Arm, CheckStatus, ColumnSchema, Dataset, ValidationReport,
};
use crate::diagnostics::{
    combined_status, overlap_summary, restriction_test, OverlapReport, RestrictionOptions,
    RestrictionResult, RestrictionStatus, AGREEMENT_CAVEAT, DEFAULT_WEIGHT_THRESHOLD,
    RESTRICTION_FAILURE_ALTERNATIVES,
};
use crate::error::{Error, Result};
use crate::estimators::{EstimateWithIF, Estimator, EstimatorOptions};
use crate::inference::{
    bootstrap, sandwich_ci, sandwich_se, wald_test, AnalysisPlan, BootstrapResult, Interval,
    TestResult,
};
use crate::nuisance::{FitOptions, IrlsOptions, ModelSummary, OutcomeKind};
use crate::simulation::{run_monte_carlo, MCReport, MonteCarloSettings, ScenarioConfig, Truths};

pub const SCHEMA_VERSION: u32 = 1;
pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
/// Relative disagreement between bootstrap and sandwich standard errors
/// above which the report carries a warning.
pub const SE_DISAGREEMENT: f64 = 0.25;

fn default_true() -> bool {
    true
}

fn default_level() -> f64 {
    0.95
}

fn default_arms() -> Vec<Arm> {
    Arm::BOTH.to_vec()
}

fn default_estimators() -> Vec<Estimator> {
    Estimator::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_true")]
    pub sandwich: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapConfig>,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            level: 0.95,
            sandwich: true,
            bootstrap: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FittingConfig {
    pub irls: IrlsOptions,
    pub ridge_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub restriction: bool,
    pub include_interactions: bool,
    pub restriction_threshold: f64,
    pub overlap: bool,
    pub weight_threshold: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            restriction: true,
            include_interactions: false,
            restriction_threshold: 0.05,
            overlap: true,
            weight_threshold: DEFAULT_WEIGHT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// JSON report path.
    pub report: PathBuf,
    /// Plain-text summary path; defaults to the report path with a `.txt` extension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub input: PathBuf,
    pub schema: ColumnSchema,
    #[serde(default)]
    pub outcome_kind: OutcomeKind,
    #[serde(default = "default_arms")]
    pub arms: Vec<Arm>,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    #[serde(default)]
    pub inference: InferenceConfig,
    #[serde(default)]
    pub estimation: EstimatorOptions,
    #[serde(default)]
    pub fitting: FittingConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    pub output: OutputConfig,
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |field: &str, message: &str| {
            Err(Error::Config {
                field: Some(field.into()),
                message: message.into(),
            })
        };
        if self.estimators.is_empty() {
            return cfg_err("estimators", "at least one estimator must be selected");
        }
        if self.arms.is_empty() {
            return cfg_err("arms", "at least one treatment arm must be selected");
        }
        if !(self.inference.level > 0.0 && self.inference.level < 1.0) {
            return cfg_err("inference.level", "level must lie in (0, 1)");
        }
        if self
            .inference
            .bootstrap
            .as_ref()
            .is_some_and(|b| b.replicates == 0)
        {
            return cfg_err(
                "inference.bootstrap.replicates",
                "need at least one replicate",
            );
        }
        let t = self.diagnostics.restriction_threshold;
        if !(t > 0.0 && t < 1.0) {
            return cfg_err(
                "diagnostics.restriction_threshold",
                "threshold must lie in (0, 1)",
            );
        }
        if self.diagnostics.weight_threshold.is_nan() || self.diagnostics.weight_threshold <= 0.0 {
            return cfg_err("diagnostics.weight_threshold", "threshold must be positive");
        }
        if self.schema.covariates.is_empty() {
            return cfg_err("schema.covariates", "at least one covariate is required");
        }
        Ok(())
    }

    pub fn plan(&self) -> AnalysisPlan {
        AnalysisPlan {
            fit: FitOptions {
                outcome_kind: self.outcome_kind,
                irls: self.fitting.irls,
                ridge_fallback: self.fitting.ridge_fallback,
                misspecification: None,
            },
            estimation: self.estimation,
            arms: self.arms.clone(),
            estimators: self.estimators.clone(),
        }
    }

    pub fn summary_path(&self) -> PathBuf {
        self.output
            .summary
            .clone()
            .unwrap_or_else(|| self.output.report.with_extension("txt"))
    }

    /// Resolve relative paths against `base` and fill the summary default.
    fn resolve(&mut self, base: &Path) {
        self.input = absolute(base, &self.input);
        self.output.report = absolute(base, &self.output.report);
        self.output.summary = Some(absolute(base, &self.summary_path()));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationOutput {
    pub report: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub monte_carlo: MonteCarloSettings,
    pub output: SimulationOutput,
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    use std::path::Component;
    let joined = if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    };
    let joined = std::path::absolute(&joined).unwrap_or(joined);
    let mut out = PathBuf::new();
    for c in joined.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            c => out.push(c),
        }
    }
    out
}

fn config_dir(path: &Path) -> PathBuf {
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    absolute(Path::new("."), &dir)
}

/// Pull the offending field name out of a serde error message.
fn field_of(message: &str) -> Option<String> {
    for marker in ["missing field `", "unknown field `", "unknown variant `"] {
        if let Some(start) = message.find(marker) {
            let rest = &message[start + marker.len()..];
            return rest.find('`').map(|end| rest[..end].to_string());
        }
    }
    None
}

fn parse_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config {
        field: None,
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    serde_json::from_str(&text).map_err(|e| {
        let message = e.to_string();
        Error::Config {
            field: field_of(&message),
            message,
        }
    })
}

pub fn load_analysis_config(path: &Path) -> Result<AnalysisConfig> {
    let mut cfg: AnalysisConfig = parse_config(path)?;
    cfg.validate()?;
    cfg.resolve(&config_dir(path));
    Ok(cfg)
}

pub fn load_simulation_config(path: &Path) -> Result<SimulationConfig> {
    let mut cfg: SimulationConfig = parse_config(path)?;
    cfg.scenario.validate().map_err(|e| Error::Config {
        field: Some("scenario".into()),
        message: e.to_string(),
    })?;
    if cfg.monte_carlo.replicates == 0 {
        return Err(Error::Config {
            field: Some("monte_carlo.replicates".into()),
            message: "need at least one replicate".into(),
        });
    }
    cfg.output.report = absolute(&config_dir(path), &cfg.output.report);
    Ok(cfg)
}

#[derive(Debug, Clone, Serialize)]
pub struct Metadata<C> {
    pub tool: &'static str,
    pub version: &'static str,
    pub started_at: String,
    pub finished_at: String,
    pub config: C,
}

#[derive(Debug, Clone, Serialize)]
pub struct DataSummary {
    pub path: PathBuf,
    pub n: usize,
    pub n_trial: usize,
    pub n_emulation: usize,
    pub covariates: Vec<String>,
    /// Hex digest identifying the loaded rows.
    pub fingerprint: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateEntry {
    pub label: String,
    pub estimator: Estimator,
    pub arm: Arm,
    pub value: f64,
    pub n_effective: usize,
    pub intervals: Vec<Interval>,
    /// Bootstrap over sandwich standard error, when both are available.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bootstrap_failures: Option<usize>,
    pub centering_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContrastEntry {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimator: Option<Estimator>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub arm: Option<Arm>,
    pub value: f64,
    pub n_effective: usize,
    pub intervals: Vec<Interval>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se_ratio: Option<f64>,
    /// Two-sided Wald test of a zero contrast using the sandwich standard error.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<TestResult>,
    pub centering_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkStatus {
    Agreement,
    Disagreement,
    Untested,
    Omitted,
}

#[derive(Debug, Clone, Serialize)]
pub struct Benchmarking {
    pub status: BenchmarkStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub deltas: Vec<ContrastEntry>,
    pub interpretation: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Contrasts {
    pub treatment_effects: Vec<ContrastEntry>,
    pub benchmarking: Benchmarking,
}

#[derive(Debug, Clone, Serialize)]
pub struct RestrictionSection {
    pub status: RestrictionStatus,
    pub tests: Vec<RestrictionResult>,
    pub interpretation: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub restriction: Option<RestrictionSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub overlap: Option<OverlapReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub report_type: &'static str,
    pub metadata: Metadata<AnalysisConfig>,
    pub data: DataSummary,
    pub validation: ValidationReport,
    pub estimates: Vec<EstimateEntry>,
    pub contrasts: Contrasts,
    pub diagnostics: DiagnosticsSection,
    pub nuisance_models: Vec<ModelSummary>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationReport {
    pub schema_version: u32,
    pub report_type: &'static str,
    pub metadata: Metadata<SimulationConfig>,
    pub results: MCReport,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

struct Inference<'a> {
    level: f64,
    sandwich: bool,
    boot: Option<&'a std::collections::BTreeMap<String, BootstrapResult>>,
}

impl Inference<'_> {
    fn intervals(
        &self,
        e: &EstimateWithIF,
        warnings: &mut Vec<String>,
    ) -> Result<(Vec<Interval>, Option<f64>, Option<usize>)> {
        let mut out = Vec::new();
        if self.sandwich {
            out.push(sandwich_ci(e, self.level)?);
        }
        let mut ratio = None;
        let mut failures = None;
        if let Some(b) = self.boot.and_then(|m| m.get(&e.label)) {
            out.push(b.percentile_interval(e.value, self.level)?);
            failures = Some(b.failures);
            let se = sandwich_se(e);
            if se > 0.0 {
                let r = b.std_error() / se;
                if (r - 1.0).abs() > SE_DISAGREEMENT {
                    warnings.push(format!(
                        "{}: bootstrap and sandwich standard errors differ by {:.0}%",
                        e.label,
                        100.0 * (r - 1.0).abs()
                    ));
                }
                ratio = Some(r);
            }
        }
        Ok((out, ratio, failures))
    }

    fn contrast(
        &self,
        e: &EstimateWithIF,
        estimator: Option<Estimator>,
        arm: Option<Arm>,
        warnings: &mut Vec<String>,
    ) -> Result<ContrastEntry> {
        let (intervals, se_ratio, _) = self.intervals(e, warnings)?;
        let test = match wald_test(e, 0.0) {
            Ok(t) => Some(t),
            Err(Error::DegenerateTest) => {
                warnings.push(format!(
                    "{}: zero standard error, no test reported",
                    e.label
                ));
                None
            }
            Err(err) => return Err(err),
        };
        Ok(ContrastEntry {
            label: e.label.clone(),
            estimator,
            arm,
            value: e.value,
            n_effective: e.n_effective,
            intervals,
            se_ratio,
            test,
            centering_residual: e.centering_residual(),
        })
    }
}

/// Why the benchmarking contrast is absent, if it is.
pub fn benchmark_omission_reason(estimators: &[Estimator]) -> Option<String> {
    let has = |e| estimators.contains(&e);
    if has(Estimator::Phi) && has(Estimator::Chi) {
        return None;
    }
    let selected: Vec<&str> = estimators.iter().map(|e| e.name()).collect();
    Some(format!(
        "the benchmarking contrast compares phi with chi and needs both; selected estimators: {}",
        selected.join(", ")
    ))
}

/// Load, validate and analyze the data described by `cfg`. Nothing is written.
pub fn analyze(cfg: &AnalysisConfig) -> Result<AnalysisReport> {
    let started_at = now();
    cfg.validate()?;
    let d = load_dataset(&cfg.input, &cfg.schema)?;
    let validation = validate(&d);
    if !validation.passed() {
        let failed: Vec<String> = validation
            .checks
            .iter()
            .filter(|c| c.status == CheckStatus::Fail)
            .map(|c| format!("{}: {}", c.name, c.message))
            .collect();
        return Err(Error::InvalidDataset(failed.join("; ")));
    }
    let mut warnings: Vec<String> = validation
        .checks
        .iter()
        .filter(|c| c.status == CheckStatus::Warn)
        .map(|c| format!("{}: {}", c.name, c.message))
        .collect();

    let plan = cfg.plan();
    let (nu, est) = plan.evaluate(&d)?;
    let boot = match &cfg.inference.bootstrap {
        Some(b) => Some(bootstrap(&d, &plan, b.replicates, b.seed)?),
        None => None,
    };
    let inf = Inference {
        level: cfg.inference.level,
        sandwich: cfg.inference.sandwich,
        boot: boot.as_ref(),
    };

    let mut estimates = Vec::new();
    for (arm, estimator, e) in &est.estimates {
        let (intervals, se_ratio, bootstrap_failures) = inf.intervals(e, &mut warnings)?;
        estimates.push(EstimateEntry {
            label: e.label.clone(),
            estimator: *estimator,
            arm: *arm,
            value: e.value,
            n_effective: e.n_effective,
            intervals,
            se_ratio,
            bootstrap_failures,
            centering_residual: e.centering_residual(),
        });
    }
    let treatment_effects = est
        .treatment_effects
        .iter()
        .map(|(estimator, e)| inf.contrast(e, Some(*estimator), None, &mut warnings))
        .collect::<Result<Vec<_>>>()?;
    let deltas = est
        .deltas
        .iter()
        .map(|(arm, e)| inf.contrast(e, None, Some(*arm), &mut warnings))
        .collect::<Result<Vec<_>>>()?;

    let alpha = cfg.diagnostics.restriction_threshold;
    let reason = benchmark_omission_reason(&cfg.estimators);
    let status = if reason.is_some() {
        BenchmarkStatus::Omitted
    } else if deltas
        .iter()
        .any(|c| c.test.as_ref().is_some_and(|t| t.rejects(alpha)))
    {
        BenchmarkStatus::Disagreement
    } else if deltas.iter().all(|c| c.test.is_some()) {
        BenchmarkStatus::Agreement
    } else {
        BenchmarkStatus::Untested
    };
    let interpretation = match status {
        BenchmarkStatus::Disagreement => RESTRICTION_FAILURE_ALTERNATIVES
            .iter()
            .map(|s| s.to_string())
            .collect(),
        BenchmarkStatus::Agreement => vec![AGREEMENT_CAVEAT.to_string()],
        _ => Vec::new(),
    };

    let restriction = if cfg.diagnostics.restriction {
        let opts = RestrictionOptions {
            outcome_kind: cfg.outcome_kind,
            include_interactions: cfg.diagnostics.include_interactions,
            threshold: alpha,
            irls: cfg.fitting.irls,
        };
        let mut tests = Vec::new();
        for &arm in &cfg.arms {
            match restriction_test(&d, arm, &opts) {
                Ok(r) => tests.push(r),
                Err(e @ (Error::Precondition(_) | Error::Fit { .. })) => {
                    warnings.push(format!("restriction test for arm {arm} not available: {e}"))
                }
                Err(e) => return Err(e),
            }
        }
        let status = combined_status(&tests);
        if status == RestrictionStatus::Indeterminate {
            warnings.push("restriction diagnostic is indeterminate".into());
        }
        let interpretation = match status {
            RestrictionStatus::Inconsistent => RESTRICTION_FAILURE_ALTERNATIVES
                .iter()
                .map(|s| s.to_string())
                .collect(),
            RestrictionStatus::Consistent => vec![AGREEMENT_CAVEAT.to_string()],
            RestrictionStatus::Indeterminate => Vec::new(),
        };
        Some(RestrictionSection {
            status,
            tests,
            interpretation,
        })
    } else {
        None
    };

    let overlap = cfg.diagnostics.overlap.then(|| {
        let o = overlap_summary(&d, &nu, cfg.diagnostics.weight_threshold);
        for w in &o.weights {
            if w.n_above_threshold > 0
                && cfg.estimators.contains(&w.estimator)
                && cfg.arms.contains(&w.arm)
            {
                warnings.push(format!(
                    "{}: {} rows carry weight above {} (max {:.3})",
                    w.estimator.label(w.arm),
                    w.n_above_threshold,
                    o.weight_threshold,
                    w.max_weight
                ));
            }
        }
        o
    });

    let nuisance_models = nu.summaries(d.covariate_names());
    for m in &nuisance_models {
        if !m.converged {
            warnings.push(format!("{} did not converge", m.name));
        }
        if m.ridge.is_some_and(|r| r > 0.0) {
            warnings.push(format!(
                "{} was refitted with a ridge penalty after separation",
                m.name
            ));
        }
    }

    Ok(AnalysisReport {
        schema_version: SCHEMA_VERSION,
        report_type: "analysis",
        metadata: Metadata {
            tool: TOOL,
            version: VERSION,
            started_at,
            finished_at: now(),
            config: cfg.clone(),
        },
        data: data_summary(&cfg.input, &d),
        validation,
        estimates,
        contrasts: Contrasts {
            treatment_effects,
            benchmarking: Benchmarking {
                status,
                reason,
                deltas,
                interpretation,
            },
        },
        diagnostics: DiagnosticsSection {
            restriction,
            overlap,
        },
        nuisance_models,
        warnings,
    })
}

fn data_summary(path: &Path, d: &Dataset) -> DataSummary {
    DataSummary {
        path: path.to_path_buf(),
        n: d.len(),
        n_trial: d.n1(),
        n_emulation: d.n0(),
        covariates: d.covariate_names().to_vec(),
        fingerprint: format!("{:016x}", d.fingerprint()),
    }
}

fn fmt_interval(i: &Interval) -> String {
    format!(
        "[{:.4}, {:.4}] ({}, se {:.4})",
        i.lower,
        i.upper,
        serde_json::to_value(i.method)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default(),
        i.std_error
    )
}

/// Plain-text rendering of an analysis report.
pub fn render_summary(r: &AnalysisReport) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let cfg = &r.metadata.config;
    let _ = writeln!(
        s,
        "{} {} analysis of {}",
        r.metadata.tool,
        r.metadata.version,
        r.data.path.display()
    );
    let _ = writeln!(
        s,
        "rows: {} (trial {}, emulation {}); covariates: {}",
        r.data.n,
        r.data.n_trial,
        r.data.n_emulation,
        r.data.covariates.join(", ")
    );
    let _ = writeln!(
        s,
        "\nPotential outcome means in the emulation population ({:.0}% intervals)",
        100.0 * cfg.inference.level
    );
    for e in &r.estimates {
        let _ = write!(s, "  {:<10} {:>10.4}", e.label, e.value);
        for i in &e.intervals {
            let _ = write!(s, "  {}", fmt_interval(i));
        }
        let _ = writeln!(s);
    }
    if !r.contrasts.treatment_effects.is_empty() {
        let _ = writeln!(s, "\nTreatment effects");
        for c in &r.contrasts.treatment_effects {
            let _ = write!(s, "  {:<10} {:>10.4}", c.label, c.value);
            for i in &c.intervals {
                let _ = write!(s, "  {}", fmt_interval(i));
            }
            let _ = writeln!(s);
        }
    }
    let b = &r.contrasts.benchmarking;
    let _ = writeln!(s, "\nBenchmarking (phi - chi)");
    match &b.reason {
        Some(reason) => {
            let _ = writeln!(s, "  not reported: {reason}");
        }
        None => {
            for c in &b.deltas {
                let _ = write!(s, "  {:<10} {:>10.4}", c.label, c.value);
                if let Some(t) = &c.test {
                    let _ = write!(s, "  z = {:.3}, p = {:.4}", t.statistic, t.p_value);
                }
                let _ = writeln!(s);
            }
            match b.status {
                BenchmarkStatus::Disagreement => {
                    let _ = writeln!(
                        s,
                        "  The trial and its emulation disagree. The data cannot tell which of these holds:"
                    );
                    for (i, alt) in b.interpretation.iter().enumerate() {
                        let _ = writeln!(s, "    {}. {alt}", i + 1);
                    }
                }
                BenchmarkStatus::Agreement => {
                    let _ = writeln!(s, "  No evidence of disagreement. {}", AGREEMENT_CAVEAT);
                }
                _ => {
                    let _ = writeln!(s, "  No test available.");
                }
            }
        }
    }
    if let Some(res) = &r.diagnostics.restriction {
        let _ = writeln!(s, "\nRestriction diagnostic: {:?}", res.status);
        for t in &res.tests {
            let _ = writeln!(
                s,
                "  arm {}: chi2 = {:.3} (df {}), p = {:.4}",
                t.arm,
                t.test.statistic,
                t.test.df.unwrap_or(0),
                t.test.p_value
            );
        }
    }
    if let Some(o) = &r.diagnostics.overlap {
        let _ = writeln!(
            s,
            "\nLargest inverse weight: {:.3} (threshold {})",
            o.max_weight(),
            o.weight_threshold
        );
    }
    if !r.warnings.is_empty() {
        let _ = writeln!(s, "\nWarnings");
        for w in &r.warnings {
            let _ = writeln!(s, "  - {w}");
        }
    }
    s
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// `analyze <config>`: writes the JSON report and the text summary.
pub fn run_analysis(config_path: &Path) -> Result<AnalysisReport> {
    let cfg = load_analysis_config(config_path)?;
    let report = analyze(&cfg)?;
    write_file(&cfg.output.report, &serde_json::to_string_pretty(&report)?)?;
    write_file(&cfg.summary_path(), &render_summary(&report))?;
    Ok(report)
}

pub fn simulate(cfg: &SimulationConfig) -> Result<SimulationReport> {
    let started_at = now();
    let results = run_monte_carlo(&cfg.scenario, &cfg.monte_carlo)?;
    Ok(SimulationReport {
        schema_version: SCHEMA_VERSION,
        report_type: "simulation",
        metadata: Metadata {
            tool: TOOL,
            version: VERSION,
            started_at,
            finished_at: now(),
            config: cfg.clone(),
        },
        results,
    })
}

/// `simulate <config>`: writes the Monte Carlo report.
pub fn run_simulation(config_path: &Path) -> Result<SimulationReport> {
    let cfg = load_simulation_config(config_path)?;
    let report = simulate(&cfg)?;
    write_file(&cfg.output.report, &serde_json::to_string_pretty(&report)?)?;
    Ok(report)
}

/// Outcome of `validate <config>`.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "config_type", rename_all = "snake_case")]
pub enum ValidationOutcome {
    Analysis { data: ValidationReport },
    Simulation { truths: Truths },
}

impl ValidationOutcome {
    pub fn passed(&self) -> bool {
        match self {
            ValidationOutcome::Analysis { data } => data.passed(),
            ValidationOutcome::Simulation { .. } => true,
        }
    }
}

/// `validate <config>`: checks a simulation config, or an analysis config
/// and the data it names, without estimating anything.
pub fn run_validation(config_path: &Path) -> Result<ValidationOutcome> {
    let raw: Value = parse_config(config_path)?;
    if raw.get("scenario").is_some() {
        let cfg = load_simulation_config(config_path)?;
        Ok(ValidationOutcome::Simulation {
            truths: crate::simulation::true_values(&cfg.scenario)?,
        })
    } else {
        let cfg = load_analysis_config(config_path)?;
        let d = load_dataset(&cfg.input, &cfg.schema)?;
        Ok(ValidationOutcome::Analysis { data: validate(&d) })
    }
}

/// Machine-readable error object emitted on failure.
pub fn error_object(e: &Error) -> Value {
    let mut err = serde_json::json!({
        "kind": e.kind(),
        "exit_code": e.exit_code(),
        "message": e.to_string(),
    });
    let extra = match e {
        Error::Config { field: Some(f), .. } => Some(("field", Value::from(f.as_str()))),
        Error::Parse { row, .. } | Error::Domain { row, .. } => Some(("row", Value::from(*row))),
        Error::Fit { model, .. } | Error::Positivity { model, .. } => {
            Some(("model", Value::from(model.as_str())))
        }
        _ => None,
    };
    if let Some((k, v)) = extra {
        err[k] = v;
    }
    serde_json::json!({ "schema_version": SCHEMA_VERSION, "error": err })
}
