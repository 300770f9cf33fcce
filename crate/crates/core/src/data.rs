//! Composite trial + emulation dataset, CSV ingestion and structural validation.
//!
//! Rows with `S = 1` come from the index trial and rows with `S = 0` from the
//! observational emulation. The two samples are drawn separately, so the
//! realized counts `n1` and `n0` are fixed by design and every estimand in
//! this crate conditions on the emulation sample.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary treatment level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treated];

    pub fn as_u8(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    pub fn index(self) -> usize {
        self.as_u8() as usize
    }
}

impl TryFrom<u8> for Arm {
    type Error = String;
    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        match v {
            0 => Ok(Arm::Control),
            1 => Ok(Arm::Treated),
            other => Err(format!("treatment must be 0 or 1, got {other}")),
        }
    }
}

impl From<Arm> for u8 {
    fn from(a: Arm) -> u8 {
        a.as_u8()
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// Which rows a model is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    /// `S = 0` rows.
    Emulation,
    /// `S = 1` rows.
    Trial,
    /// All rows.
    Pooled,
}

impl Stratum {
    pub fn contains(self, s: u8) -> bool {
        match self {
            Stratum::Emulation => s == 0,
            Stratum::Trial => s == 1,
            Stratum::Pooled => true,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Stratum::Emulation => "s0",
            Stratum::Trial => "s1",
            Stratum::Pooled => "pooled",
        }
    }
}

/// Borrowed view of one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Row<'a> {
    pub x: &'a [f64],
    pub s: u8,
    pub a: u8,
    pub y: f64,
}

/// Immutable composite dataset stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariate_names: Vec<String>,
    k: usize,
    x: Vec<f64>,
    s: Vec<u8>,
    a: Vec<u8>,
    y: Vec<f64>,
    n1: usize,
    n0: usize,
    fingerprint: u64,
}

impl Dataset {
    /// Build from row-major covariates (`n * k` values) and per-row S, A, Y.
    pub fn new(
        covariate_names: Vec<String>,
        x: Vec<f64>,
        s: Vec<u8>,
        a: Vec<u8>,
        y: Vec<f64>,
    ) -> Result<Self> {
        let k = covariate_names.len();
        if k == 0 {
            return Err(Error::InvalidDataset(
                "at least one covariate is required".into(),
            ));
        }
        let n = s.len();
        if a.len() != n || y.len() != n || x.len() != n * k {
            return Err(Error::InvalidDataset(format!(
                "column lengths disagree: n={n}, a={}, y={}, x={} (k={k})",
                a.len(),
                y.len(),
                x.len()
            )));
        }
        for i in 0..n {
            if s[i] > 1 {
                return Err(Error::Domain {
                    row: i + 1,
                    column: "S".into(),
                    message: format!("study indicator must be 0 or 1, got {}", s[i]),
                });
            }
            if a[i] > 1 {
                return Err(Error::Domain {
                    row: i + 1,
                    column: "A".into(),
                    message: format!("treatment must be 0 or 1, got {}", a[i]),
                });
            }
            if !y[i].is_finite() {
                return Err(Error::Domain {
                    row: i + 1,
                    column: "Y".into(),
                    message: "outcome must be finite".into(),
                });
            }
            if let Some(j) = x[i * k..(i + 1) * k].iter().position(|v| !v.is_finite()) {
                return Err(Error::Domain {
                    row: i + 1,
                    column: covariate_names[j].clone(),
                    message: "covariate must be finite".into(),
                });
            }
        }
        let n1 = s.iter().filter(|&&v| v == 1).count();
        let n0 = n - n1;
        if n1 == 0 || n0 == 0 {
            return Err(Error::InvalidDataset(format!(
                "both studies must be present (n1={n1}, n0={n0})"
            )));
        }
        let fingerprint = fingerprint(&x, &s, &a, &y);
        Ok(Dataset {
            covariate_names,
            k,
            x,
            s,
            a,
            y,
            n1,
            n0,
            fingerprint,
        })
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    /// Number of trial (`S = 1`) rows.
    pub fn n1(&self) -> usize {
        self.n1
    }

    /// Number of emulation (`S = 0`) rows.
    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn n_covariates(&self) -> usize {
        self.k
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn row(&self, i: usize) -> Row<'_> {
        Row {
            x: self.x(i),
            s: self.s[i],
            a: self.a[i],
            y: self.y[i],
        }
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = Row<'_>> + '_ {
        (0..self.len()).map(move |i| self.row(i))
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.k..(i + 1) * self.k]
    }

    pub fn s(&self) -> &[u8] {
        &self.s
    }

    pub fn a(&self) -> &[u8] {
        &self.a
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Hash of the row contents in order; used to check that two estimates
    /// were computed on the same data.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// New dataset made of the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<Dataset> {
        let mut x = Vec::with_capacity(rows.len() * self.k);
        let mut s = Vec::with_capacity(rows.len());
        let mut a = Vec::with_capacity(rows.len());
        let mut y = Vec::with_capacity(rows.len());
        for &i in rows {
            x.extend_from_slice(self.x(i));
            s.push(self.s[i]);
            a.push(self.a[i]);
            y.push(self.y[i]);
        }
        Dataset::new(self.covariate_names.clone(), x, s, a, y)
    }

    /// Same rows with the outcome replaced.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Dataset> {
        Dataset::new(
            self.covariate_names.clone(),
            self.x.clone(),
            self.s.clone(),
            self.a.clone(),
            y,
        )
    }

    /// Same rows with the study labels swapped.
    pub fn with_studies_swapped(&self) -> Result<Dataset> {
        Dataset::new(
            self.covariate_names.clone(),
            self.x.clone(),
            self.s.iter().map(|&s| 1 - s).collect(),
            self.a.clone(),
            self.y.clone(),
        )
    }

    /// Write as CSV with columns `schema.study, schema.treatment, schema.outcome, covariates...`.
    pub fn write_csv<W: Write>(&self, schema: &ColumnSchema, out: W) -> Result<()> {
        if schema.covariates.len() != self.k {
            return Err(Error::Schema(format!(
                "schema names {} covariates, dataset has {}",
                schema.covariates.len(),
                self.k
            )));
        }
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![
            schema.study.clone(),
            schema.treatment.clone(),
            schema.outcome.clone(),
        ];
        header.extend(schema.covariates.iter().cloned());
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(header.len());
        for row in self.rows() {
            record.clear();
            record.push(row.s.to_string());
            record.push(row.a.to_string());
            record.push(row.y.to_string());
            record.extend(row.x.iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::io("<csv output>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, schema: &ColumnSchema, path: impl AsRef<Path>) -> Result<()> {
        let f = std::fs::File::create(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        self.write_csv(schema, std::io::BufWriter::new(f))
    }
}

fn fingerprint(x: &[f64], s: &[u8], a: &[u8], y: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    s.hash(&mut h);
    a.hash(&mut h);
    for v in x.iter().chain(y) {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

/// Mapping from CSV header names to the roles S, A, Y and the covariates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub study: String,
    pub treatment: String,
    pub outcome: String,
    pub covariates: Vec<String>,
}

impl ColumnSchema {
    /// `S`, `A`, `Y` and the given covariate names.
    pub fn standard(covariates: &[String]) -> Self {
        ColumnSchema {
            study: "S".into(),
            treatment: "A".into(),
            outcome: "Y".into(),
            covariates: covariates.to_vec(),
        }
    }
}

/// Load a dataset from a CSV file with a header row.
pub fn load_dataset(path: impl AsRef<Path>, schema: &ColumnSchema) -> Result<Dataset> {
    let f = std::fs::File::open(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    read_dataset(std::io::BufReader::new(f), schema)
}

/// Parse CSV from any reader. Row numbers in errors are 1-based data rows.
pub fn read_dataset<R: Read>(input: R, schema: &ColumnSchema) -> Result<Dataset> {
    if schema.covariates.is_empty() {
        return Err(Error::Schema(
            "schema must name at least one covariate".into(),
        ));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let s_col = find(&schema.study)?;
    let a_col = find(&schema.treatment)?;
    let y_col = find(&schema.outcome)?;
    let x_cols = schema
        .covariates
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;

    let (mut x, mut s, mut a, mut y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = rec.get(col).map(str::trim).unwrap_or("");
            if raw.is_empty() {
                return Err(Error::Parse {
                    row,
                    column: name.to_string(),
                    message: "missing value".into(),
                });
            }
            let v: f64 = raw.parse().map_err(|_| Error::Parse {
                row,
                column: name.to_string(),
                message: format!("not a number: {raw:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: name.to_string(),
                    message: format!("non-finite value: {raw:?}"),
                });
            }
            Ok(v)
        };
        let indicator = |v: f64, name: &str| -> Result<u8> {
            if v == 0.0 {
                Ok(0)
            } else if v == 1.0 {
                Ok(1)
            } else {
                Err(Error::Domain {
                    row,
                    column: name.to_string(),
                    message: format!("must be 0 or 1, got {v}"),
                })
            }
        };
        s.push(indicator(cell(s_col, &schema.study)?, &schema.study)?);
        a.push(indicator(
            cell(a_col, &schema.treatment)?,
            &schema.treatment,
        )?);
        y.push(cell(y_col, &schema.outcome)?);
        for (&c, name) in x_cols.iter().zip(&schema.covariates) {
            x.push(cell(c, name)?);
        }
    }
    Dataset::new(schema.covariates.clone(), x, s, a, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub status: CheckStatus,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.status != CheckStatus::Fail
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Structural checks shared by all estimators. Never modifies the data.
pub fn validate(d: &Dataset) -> ValidationReport {
    let mut checks = Vec::new();
    let k = d.n_covariates();
    let arity_ok = d.rows().all(|r| r.x.len() == k) && k >= 1;
    checks.push(Check {
        name: "arity".into(),
        status: if arity_ok {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        message: format!("{} rows with {k} covariates", d.len()),
    });

    let ranges_ok = d
        .rows()
        .all(|r| r.s <= 1 && r.a <= 1 && r.y.is_finite() && r.x.iter().all(|v| v.is_finite()));
    checks.push(Check {
        name: "value_ranges".into(),
        status: if ranges_ok {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        },
        message: if ranges_ok {
            "S, A in {0,1}; Y and covariates finite".into()
        } else {
            "out-of-range indicator or non-finite value".into()
        },
    });

    let mut cells = [[0usize; 2]; 2];
    for r in d.rows() {
        cells[r.s as usize][r.a as usize] += 1;
    }
    for (s, study) in [(1usize, "trial"), (0, "emulation")] {
        for a in [0usize, 1] {
            let n = cells[s][a];
            checks.push(Check {
                name: format!("{study}_positivity_a{a}"),
                status: if n > 0 {
                    CheckStatus::Pass
                } else {
                    CheckStatus::Fail
                },
                message: format!("{n} rows with S={s}, A={a}"),
            });
        }
    }

    for (j, name) in d.covariate_names().iter().enumerate() {
        for (s, study) in [(1u8, "trial"), (0, "emulation")] {
            let mut vals = d.rows().filter(|r| r.s == s).map(|r| r.x[j]);
            let first = vals.next();
            let constant = first.is_some_and(|v0| vals.all(|v| v == v0));
            if constant {
                checks.push(Check {
                    name: format!("constant_covariate_{name}_{study}"),
                    status: CheckStatus::Warn,
                    message: format!("covariate `{name}` is constant within S={s}"),
                });
            }
        }
    }

    let status = checks
        .iter()
        .map(|c| c.status)
        .max()
        .unwrap_or(CheckStatus::Pass);
    ValidationReport { status, checks }
}
