//! Observational dataset `(yᵢ, Tᵢ, xᵢ)` and its CSV schema.
//!
//! The CSV header is `y,T,x1,...,xp`, optionally followed by the oracle columns
//! `pi_star`, `mu0_star`, `mu1_star` (simulation exports only).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{FiddleError, Result};
use crate::numerics::Matrix;

/// Ground-truth nuisance values, available for simulated data.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleColumns {
    pub pi_star: Vec<f64>,
    pub mu0_star: Option<Vec<f64>>,
    pub mu1_star: Option<Vec<f64>>,
}

impl OracleColumns {
    fn subset(&self, idx: &[usize]) -> Self {
        let pick = |v: &Vec<f64>| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            pi_star: pick(&self.pi_star),
            mu0_star: self.mu0_star.as_ref().map(pick),
            mu1_star: self.mu1_star.as_ref().map(pick),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub treatment: Vec<u8>,
    pub x: Matrix,
    pub oracle: Option<OracleColumns>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, treatment: Vec<u8>, x: Matrix) -> Result<Self> {
        let ds = Self {
            y,
            treatment,
            x,
            oracle: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_oracle(mut self, oracle: OracleColumns) -> Result<Self> {
        self.oracle = Some(oracle);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.treatment.len() != n || self.x.rows() != n {
            return Err(FiddleError::Shape(format!(
                "dataset has {} outcomes, {} treatments and {} covariate rows",
                n,
                self.treatment.len(),
                self.x.rows()
            )));
        }
        if let Some(i) = self.treatment.iter().position(|&t| t > 1) {
            return Err(FiddleError::InvalidArgument(format!(
                "treatment at row {i} is {}, expected 0 or 1",
                self.treatment[i]
            )));
        }
        if let Some(i) = self.y.iter().position(|v| !v.is_finite()) {
            return Err(FiddleError::NonFinite(format!("outcome at row {i}")));
        }
        if let Some(o) = &self.oracle {
            let lens = [
                Some(o.pi_star.len()),
                o.mu0_star.as_ref().map(Vec::len),
                o.mu1_star.as_ref().map(Vec::len),
            ];
            if lens.iter().flatten().any(|&l| l != n) {
                return Err(FiddleError::Shape("oracle column length differs from n".into()));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn n_treated(&self) -> usize {
        self.treatment.iter().filter(|&&t| t == 1).count()
    }

    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    /// Treatment indicators as `f64`.
    pub fn treatment_f64(&self) -> Vec<f64> {
        self.treatment.iter().map(|&t| f64::from(t)).collect()
    }

    /// Rows `idx`, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            treatment: idx.iter().map(|&i| self.treatment[i]).collect(),
            x: self.x.select_rows(idx),
            oracle: self.oracle.as_ref().map(|o| o.subset(idx)),
        }
    }

    /// Indices of rows with `T = arm`.
    pub fn arm_indices(&self, arm: u8) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.treatment[i] == arm).collect()
    }
}

const ORACLE_NAMES: [&str; 3] = ["pi_star", "mu0_star", "mu1_star"];

fn parse_cell(text: &str, row: usize, column: usize) -> Result<f64> {
    let v: f64 = text.parse().map_err(|_| FiddleError::Csv {
        row,
        column,
        message: format!("cannot parse {text:?} as a number"),
    })?;
    if !v.is_finite() {
        return Err(FiddleError::Csv {
            row,
            column,
            message: format!("non-finite value {text:?}"),
        });
    }
    Ok(v)
}

/// Reads a dataset from CSV. Row numbers in errors are 1-based file lines (header = line 1);
/// columns are 1-based.
pub fn read_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();

    let header = match records.next() {
        Some(rec) => rec.map_err(|e| FiddleError::CsvFormat(e.to_string()))?,
        None => return Err(FiddleError::CsvFormat("empty file: missing header".into())),
    };
    let names: Vec<String> = header.iter().map(str::to_string).collect();
    if names.len() < 2 || names[0] != "y" || names[1] != "T" {
        return Err(FiddleError::Csv {
            row: 1,
            column: 1,
            message: format!("header must start with `y,T`, found {:?}", names.join(",")),
        });
    }
    let first_oracle = names
        .iter()
        .position(|n| ORACLE_NAMES.contains(&n.as_str()))
        .unwrap_or(names.len());
    let oracle_names: Vec<&str> = names[first_oracle..].iter().map(String::as_str).collect();
    for (k, name) in oracle_names.iter().enumerate() {
        if !ORACLE_NAMES.contains(name) || oracle_names[..k].contains(name) {
            return Err(FiddleError::Csv {
                row: 1,
                column: first_oracle + k + 1,
                message: format!("unexpected column {name:?} after oracle columns"),
            });
        }
    }
    if !oracle_names.is_empty() && !oracle_names.contains(&"pi_star") {
        return Err(FiddleError::Csv {
            row: 1,
            column: first_oracle + 1,
            message: "oracle columns require pi_star".into(),
        });
    }
    let p = first_oracle - 2;
    let width = names.len();

    let mut y = Vec::new();
    let mut t = Vec::new();
    let mut x = Vec::new();
    let mut oracle: Vec<Vec<f64>> = vec![Vec::new(); oracle_names.len()];
    for (k, rec) in records.enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| FiddleError::CsvFormat(format!("line {line}: {e}")))?;
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != width {
            return Err(FiddleError::Csv {
                row: line,
                column: rec.len().min(width) + 1,
                message: format!("expected {width} fields, found {}", rec.len()),
            });
        }
        y.push(parse_cell(&rec[0], line, 1)?);
        let tv = parse_cell(&rec[1], line, 2)?;
        if tv != 0.0 && tv != 1.0 {
            return Err(FiddleError::Csv {
                row: line,
                column: 2,
                message: format!("treatment must be 0 or 1, found {}", &rec[1]),
            });
        }
        t.push(tv as u8);
        for j in 0..p {
            x.push(parse_cell(&rec[2 + j], line, 3 + j)?);
        }
        for (k, col) in oracle.iter_mut().enumerate() {
            col.push(parse_cell(&rec[first_oracle + k], line, first_oracle + k + 1)?);
        }
    }

    let n = y.len();
    let mut ds = Dataset::new(y, t, Matrix::from_vec(n, p, x)?)?;
    if !oracle_names.is_empty() {
        let mut take = |name: &str| {
            oracle_names
                .iter()
                .position(|n| *n == name)
                .map(|k| std::mem::take(&mut oracle[k]))
        };
        let pi_star = take("pi_star").unwrap_or_default();
        let mu0_star = take("mu0_star");
        let mu1_star = take("mu1_star");
        ds = ds.with_oracle(OracleColumns {
            pi_star,
            mu0_star,
            mu1_star,
        })?;
    }
    Ok(ds)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_csv(std::io::BufReader::new(file))
}

fn fmt(v: f64) -> String {
    // 17 significant digits: round-trips every f64 exactly
    format!("{v:.16e}")
}

/// Writes the dataset (and oracle columns, if present) in the CSV schema read by [`read_csv`].
pub fn write_csv<W: Write>(ds: &Dataset, writer: W) -> Result<()> {
    let mut w = std::io::BufWriter::new(writer);
    let mut header: Vec<String> = vec!["y".into(), "T".into()];
    header.extend((1..=ds.p()).map(|j| format!("x{j}")));
    let mut extra: Vec<&Vec<f64>> = Vec::new();
    if let Some(o) = &ds.oracle {
        header.push("pi_star".into());
        extra.push(&o.pi_star);
        if let Some(v) = &o.mu0_star {
            header.push("mu0_star".into());
            extra.push(v);
        }
        if let Some(v) = &o.mu1_star {
            header.push("mu1_star".into());
            extra.push(v);
        }
    }
    writeln!(w, "{}", header.join(","))?;
    let mut line = String::new();
    for i in 0..ds.n() {
        line.clear();
        line.push_str(&fmt(ds.y[i]));
        line.push(',');
        line.push_str(if ds.treatment[i] == 1 { "1" } else { "0" });
        for v in ds.x.row(i) {
            line.push(',');
            line.push_str(&fmt(*v));
        }
        for col in &extra {
            line.push(',');
            line.push_str(&fmt(col[i]));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn export_csv(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_csv(ds, std::fs::File::create(path)?)
}
