//! Tabular data: CSV ingestion with schema inference, admissibility checks and
//! seeded synthetic generators.

mod synthetic;

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synthetic::{
    generate, generate_collider_trap, generate_confounder_chain, generate_sodium, priors_from_dag, Generator,
    SyntheticTruth, TruthFile,
};

pub const CATEGORICAL_MAX_LEVELS: usize = 10;
pub const MAX_CATEGORICAL_COLUMNS: usize = 5;
pub const MIN_ROWS: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Binary,
    /// `encoded` columns held text labels; the stored value is the index into `levels`.
    Categorical { levels: Vec<String>, encoded: bool },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetJson", into = "DatasetJson")]
pub struct Dataset {
    columns: Vec<Column>,
    data: DMatrix<f64>,
    treatment: String,
    outcome: String,
    dropped_rows: usize,
}

#[derive(Serialize, Deserialize)]
struct DatasetJson {
    columns: Vec<Column>,
    rows: Vec<Vec<f64>>,
    treatment: String,
    outcome: String,
    #[serde(default)]
    dropped_rows: usize,
}

impl TryFrom<DatasetJson> for Dataset {
    type Error = Error;

    fn try_from(j: DatasetJson) -> Result<Self> {
        let d = j.columns.len();
        for row in &j.rows {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: row.len(),
                });
            }
        }
        let data = DMatrix::from_fn(j.rows.len(), d, |r, c| j.rows[r][c]);
        let ds = Dataset {
            columns: j.columns,
            data,
            treatment: j.treatment,
            outcome: j.outcome,
            dropped_rows: j.dropped_rows,
        };
        ds.check()?;
        Ok(ds)
    }
}

impl From<Dataset> for DatasetJson {
    fn from(ds: Dataset) -> Self {
        let rows = (0..ds.data.nrows())
            .map(|r| ds.data.row(r).iter().copied().collect())
            .collect();
        DatasetJson {
            columns: ds.columns,
            rows,
            treatment: ds.treatment,
            outcome: ds.outcome,
            dropped_rows: ds.dropped_rows,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum AdmissibilityWarning {
    NotNarrow { features: usize, samples: usize },
    HighCardinality { column: String, levels: usize },
    TooManyCategorical { count: usize },
    SmallSample { n: usize },
}

impl AdmissibilityWarning {
    pub fn message(&self) -> String {
        match self {
            Self::NotNarrow { features, samples } => {
                format!("{features} features for {samples} samples; data is not narrow")
            }
            Self::HighCardinality { column, levels } => {
                format!("categorical column `{column}` has {levels} levels")
            }
            Self::TooManyCategorical { count } => format!("{count} categorical columns"),
            Self::SmallSample { n } => format!("only {n} samples"),
        }
    }
}

impl Dataset {
    /// Builds a dataset from numeric columns, inferring kinds.
    pub fn new(names: Vec<String>, data: DMatrix<f64>, treatment: &str, outcome: &str) -> Result<Self> {
        if names.len() != data.ncols() {
            return Err(Error::DimensionMismatch {
                expected: data.ncols(),
                got: names.len(),
            });
        }
        let columns = names
            .into_iter()
            .enumerate()
            .map(|(c, name)| Column {
                kind: infer_numeric(data.column(c).iter().copied()),
                name,
            })
            .collect();
        let ds = Dataset {
            columns,
            data,
            treatment: treatment.to_string(),
            outcome: outcome.to_string(),
            dropped_rows: 0,
        };
        ds.check()?;
        Ok(ds)
    }

    fn check(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::DuplicateName(c.name.clone()));
            }
        }
        let missing: Vec<String> = [&self.treatment, &self.outcome]
            .into_iter()
            .filter(|n| !seen.contains(n.as_str()))
            .cloned()
            .collect();
        if !missing.is_empty() {
            return Err(Error::UnknownColumn(missing));
        }
        if self.treatment == self.outcome {
            return Err(Error::InvalidInput("treatment and outcome must differ".into()));
        }
        let t = self.index_of(&self.treatment)?;
        if self.columns[t].kind != ColumnKind::Binary {
            return Err(Error::TreatmentNotBinary(self.treatment.clone()));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite value in data".into()));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn treatment(&self) -> &str {
        &self.treatment
    }

    pub fn outcome(&self) -> &str {
        &self.outcome
    }

    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(vec![name.to_string()]))
    }

    /// Indices of all named columns; every unknown name is reported at once.
    pub fn indices_of<S: AsRef<str>>(&self, names: &[S]) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        let mut missing = Vec::new();
        for n in names {
            match self.index_of(n.as_ref()) {
                Ok(i) => out.push(i),
                Err(_) => missing.push(n.as_ref().to_string()),
            }
        }
        if missing.is_empty() {
            Ok(out)
        } else {
            Err(Error::UnknownColumn(missing))
        }
    }

    pub fn column(&self, name: &str) -> Result<DVector<f64>> {
        Ok(self.data.column(self.index_of(name)?).into_owned())
    }

    pub fn select<S: AsRef<str>>(&self, names: &[S]) -> Result<DMatrix<f64>> {
        let idx = self.indices_of(names)?;
        Ok(self.data.select_columns(&idx))
    }

    pub fn treatment_vector(&self) -> DVector<f64> {
        self.column(&self.treatment).expect("checked on construction")
    }

    pub fn outcome_vector(&self) -> DVector<f64> {
        self.column(&self.outcome).expect("checked on construction")
    }

    /// Covariate names: everything except treatment and outcome.
    pub fn covariates(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.name != self.treatment && c.name != self.outcome)
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn with_roles(&self, treatment: &str, outcome: &str) -> Result<Self> {
        let ds = Dataset {
            treatment: treatment.to_string(),
            outcome: outcome.to_string(),
            ..self.clone()
        };
        ds.check()?;
        Ok(ds)
    }

    /// Rows selected by index (with repetition), used for bootstrap resamples.
    pub fn rows(&self, idx: &[usize]) -> DMatrix<f64> {
        self.data.select_rows(idx)
    }
}

fn is_integer(v: f64) -> bool {
    v.fract() == 0.0 && v.abs() < 1e15
}

fn infer_numeric(values: impl Iterator<Item = f64>) -> ColumnKind {
    let mut distinct: BTreeSet<i64> = BTreeSet::new();
    for v in values {
        if !is_integer(v) {
            return ColumnKind::Continuous;
        }
        distinct.insert(v as i64);
        if distinct.len() > CATEGORICAL_MAX_LEVELS {
            return ColumnKind::Continuous;
        }
    }
    if distinct.len() <= 2 && distinct.iter().all(|v| *v == 0 || *v == 1) {
        ColumnKind::Binary
    } else {
        ColumnKind::Categorical {
            levels: distinct.iter().map(|v| v.to_string()).collect(),
            encoded: false,
        }
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "na" | "NaN" | "nan" | "null" | "NULL" | "?")
}

pub fn load_csv(path: impl AsRef<Path>, treatment: &str, outcome: &str) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, treatment, outcome)
}

/// Parses CSV with a header row. Rows with any missing cell are dropped and
/// counted. A column whose cells are not all numeric becomes an encoded
/// categorical column.
pub fn read_csv<R: Read>(reader: R, treatment: &str, outcome: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().any(String::is_empty) {
        return Err(Error::Parse("header row must name every column".into()));
    }
    let d = headers.len();
    let mut cells: Vec<Vec<String>> = Vec::new();
    let mut dropped = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.len() != d {
            return Err(Error::Parse(format!(
                "line {}: expected {d} fields, found {}",
                rec.position().map_or(0, |p| p.line()),
                rec.len()
            )));
        }
        if rec.iter().any(is_missing) {
            dropped += 1;
            continue;
        }
        cells.push(rec.iter().map(str::to_string).collect());
    }
    let n = cells.len();
    let mut data = DMatrix::zeros(n, d);
    let mut columns = Vec::with_capacity(d);
    for (c, name) in headers.iter().enumerate() {
        let parsed: Option<Vec<f64>> = cells.iter().map(|row| row[c].parse::<f64>().ok()).collect();
        let kind = match parsed {
            Some(vals) if vals.iter().all(|v| v.is_finite()) => {
                for (r, v) in vals.iter().enumerate() {
                    data[(r, c)] = *v;
                }
                infer_numeric(vals.into_iter())
            }
            _ => {
                if name == treatment {
                    return Err(Error::TreatmentNotBinary(name.clone()));
                }
                let levels: Vec<String> = cells
                    .iter()
                    .map(|row| row[c].clone())
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                for (r, row) in cells.iter().enumerate() {
                    data[(r, c)] = levels.binary_search(&row[c]).expect("level present") as f64;
                }
                ColumnKind::Categorical { levels, encoded: true }
            }
        };
        columns.push(Column {
            name: name.clone(),
            kind,
        });
    }
    let ds = Dataset {
        columns,
        data,
        treatment: treatment.to_string(),
        outcome: outcome.to_string(),
        dropped_rows: dropped,
    };
    ds.check()?;
    if dropped > 0 {
        log::info!("dropped {dropped} rows with missing cells");
    }
    Ok(ds)
}

pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    w.write_record(ds.columns.iter().map(|c| c.name.as_str())).map_err(io)?;
    for r in 0..ds.n_rows() {
        let row: Vec<String> = ds
            .columns
            .iter()
            .enumerate()
            .map(|(c, col)| {
                let v = ds.data[(r, c)];
                match &col.kind {
                    ColumnKind::Categorical { levels, encoded: true } => levels[v as usize].clone(),
                    _ => format!("{v}"),
                }
            })
            .collect();
        w.write_record(&row).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(ds, std::io::BufWriter::new(file))
}

pub fn validate_admissibility(ds: &Dataset) -> Vec<AdmissibilityWarning> {
    let mut out = Vec::new();
    let (n, d) = (ds.n_rows(), ds.n_cols());
    if d > 0 && d * 10 >= n {
        out.push(AdmissibilityWarning::NotNarrow {
            features: d,
            samples: n,
        });
    }
    let mut categorical = 0;
    for c in &ds.columns {
        if let ColumnKind::Categorical { levels, .. } = &c.kind {
            categorical += 1;
            if levels.len() > CATEGORICAL_MAX_LEVELS {
                out.push(AdmissibilityWarning::HighCardinality {
                    column: c.name.clone(),
                    levels: levels.len(),
                });
            }
        }
    }
    if categorical > MAX_CATEGORICAL_COLUMNS {
        out.push(AdmissibilityWarning::TooManyCategorical { count: categorical });
    }
    if n < MIN_ROWS {
        out.push(AdmissibilityWarning::SmallSample { n });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn infers_kinds() {
        let csv = "T,X,G,Y\n0,1.5,1,2.0\n1,2.5,3,3.0\n1,0.1,2,1.0\n";
        let ds = read_csv(csv.as_bytes(), "T", "Y").unwrap();
        let kinds: Vec<&ColumnKind> = ds.columns().iter().map(|c| &c.kind).collect();
        assert_eq!(kinds[0], &ColumnKind::Binary);
        assert_eq!(kinds[1], &ColumnKind::Continuous);
        assert_eq!(
            kinds[2],
            &ColumnKind::Categorical {
                levels: vec!["1".into(), "2".into(), "3".into()],
                encoded: false
            }
        );
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.covariates(), vec!["X", "G"]);
    }

    #[test]
    fn treatment_must_be_binary() {
        let csv = "T,Y\n0,1\n2,3\n1,2\n";
        assert!(matches!(read_csv(csv.as_bytes(), "T", "Y"), Err(Error::TreatmentNotBinary(_))));
        let csv = "T,Y\na,1\nb,3\n";
        assert!(matches!(read_csv(csv.as_bytes(), "T", "Y"), Err(Error::TreatmentNotBinary(_))));
    }

    #[test]
    fn unknown_columns_reported_together() {
        let csv = "T,Y\n0,1\n";
        match read_csv(csv.as_bytes(), "W", "Z") {
            Err(Error::UnknownColumn(c)) => assert_eq!(c, vec!["W", "Z"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_cells_drop_rows() {
        let mut text = String::from("T,X,Y\n");
        let mut affected = 0;
        for r in 0..40 {
            let x = if r % 7 == 3 { "".to_string() } else { format!("{}.5", r) };
            let y = if r % 11 == 5 { "NA".to_string() } else { format!("{}", r * 2) };
            if x.is_empty() || y == "NA" {
                affected += 1;
            }
            text.push_str(&format!("{},{x},{y}\n", r % 2));
        }
        let ds = read_csv(text.as_bytes(), "T", "Y").unwrap();
        assert_eq!(ds.dropped_rows(), affected);
        assert_eq!(ds.n_rows(), 40 - affected);
    }

    #[test]
    fn malformed_csv_is_parse_error() {
        let csv = "T,Y\n0,1,5\n";
        assert!(matches!(read_csv(csv.as_bytes(), "T", "Y"), Err(Error::Parse(_))));
        assert!(matches!(read_csv("".as_bytes(), "T", "Y"), Err(Error::Parse(_)) | Err(Error::UnknownColumn(_))));
    }

    #[test]
    fn text_categoricals_round_trip() {
        let csv = "T,C,Y\n0,red,1.5\n1,blue,2\n1,red,0.25\n";
        let ds = read_csv(csv.as_bytes(), "T", "Y").unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), "T", "Y").unwrap();
        assert_eq!(ds, back);
        let json = serde_json::to_string(&ds).unwrap();
        let back: Dataset = serde_json::from_str(&json).unwrap();
        assert_eq!(ds, back);
    }

    fn wide(n: usize, d: usize) -> Dataset {
        let names: Vec<String> = (0..d).map(|c| format!("c{c}")).collect();
        let data = DMatrix::from_fn(n, d, |r, c| if c == 0 { (r % 2) as f64 } else { (r * (c + 3)) as f64 * 0.173 });
        Dataset::new(names, data, "c0", "c1").unwrap()
    }

    #[test]
    fn admissibility() {
        assert!(validate_admissibility(&wide(10000, 5)).is_empty());
        assert_eq!(
            validate_admissibility(&wide(100, 50)),
            vec![AdmissibilityWarning::NotNarrow {
                features: 50,
                samples: 100
            }]
        );
        let mut text = String::from("T,G,Y\n");
        for r in 0..300 {
            text.push_str(&format!("{},g{},{}.5\n", r % 2, r % 30, r));
        }
        let ds = read_csv(text.as_bytes(), "T", "Y").unwrap();
        assert_eq!(
            validate_admissibility(&ds),
            vec![AdmissibilityWarning::HighCardinality {
                column: "G".into(),
                levels: 30
            }]
        );
        assert!(validate_admissibility(&wide(50, 2))
            .contains(&AdmissibilityWarning::SmallSample { n: 50 }));
    }
}
