//! Rectangular regressor/target tables and their CSV form.
//!
//! CSV layout: optional `#`-prefixed provenance line, a header row with the
//! regressor names followed by the target names, then one row per sample.
//! Target columns are recognised by the `_next` suffix. Values are written
//! with 17 significant digits so a save/load cycle is lossless.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Suffix that marks a target column.
pub const TARGET_SUFFIX: &str = "_next";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    regressor_names: Vec<String>,
    target_names: Vec<String>,
    // column-major
    regressors: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    n_rows: usize,
    provenance: Option<String>,
}

impl Dataset {
    /// Build from row pairs. Rejects empty, ragged, or non-finite input.
    pub fn from_rows(
        regressor_names: Vec<String>,
        target_names: Vec<String>,
        rows: &[(Vec<f64>, Vec<f64>)],
    ) -> Result<Self> {
        let mut regressors = vec![Vec::with_capacity(rows.len()); regressor_names.len()];
        let mut targets = vec![Vec::with_capacity(rows.len()); target_names.len()];
        for (i, (x, y)) in rows.iter().enumerate() {
            if x.len() != regressor_names.len() || y.len() != target_names.len() {
                return Err(Error::Dimension(format!(
                    "row {i} has {}+{} values, expected {}+{}",
                    x.len(),
                    y.len(),
                    regressor_names.len(),
                    target_names.len()
                )));
            }
            for (col, v) in regressors.iter_mut().zip(x) {
                col.push(*v);
            }
            for (col, v) in targets.iter_mut().zip(y) {
                col.push(*v);
            }
        }
        Self::from_columns(regressor_names, target_names, regressors, targets)
    }

    pub fn from_columns(
        regressor_names: Vec<String>,
        target_names: Vec<String>,
        regressors: Vec<Vec<f64>>,
        targets: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if regressor_names.is_empty() || target_names.is_empty() {
            return Err(Error::Dimension(
                "dataset needs at least one regressor and one target column".into(),
            ));
        }
        if regressors.len() != regressor_names.len() || targets.len() != target_names.len() {
            return Err(Error::Dimension("column count does not match names".into()));
        }
        let mut all_names: Vec<&String> = regressor_names.iter().chain(&target_names).collect();
        for n in &regressor_names {
            if n.ends_with(TARGET_SUFFIX) || n.contains(',') || n.is_empty() {
                return Err(Error::InvalidArgument(format!("invalid regressor name `{n}`")));
            }
        }
        for n in &target_names {
            if !n.ends_with(TARGET_SUFFIX) || n.contains(',') {
                return Err(Error::InvalidArgument(format!(
                    "target name `{n}` must end with `{TARGET_SUFFIX}`"
                )));
            }
        }
        all_names.sort();
        if all_names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("column names must be unique".into()));
        }
        let n_rows = regressors[0].len();
        if n_rows == 0 {
            return Err(Error::InsufficientData("dataset has no rows".into()));
        }
        for (j, col) in regressors.iter().chain(&targets).enumerate() {
            if col.len() != n_rows {
                return Err(Error::Dimension(format!(
                    "column {j} has {} rows, expected {n_rows}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "non-finite value at row {i}, column {j}"
                )));
            }
        }
        Ok(Self {
            regressor_names,
            target_names,
            regressors,
            targets,
            n_rows,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, note: impl Into<String>) -> Self {
        let note: String = note.into();
        self.provenance = Some(note.replace(['\n', '\r'], " "));
        self
    }

    pub fn provenance(&self) -> Option<&str> {
        self.provenance.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn regressor_dim(&self) -> usize {
        self.regressor_names.len()
    }

    pub fn n_targets(&self) -> usize {
        self.target_names.len()
    }

    pub fn regressor_names(&self) -> &[String] {
        &self.regressor_names
    }

    pub fn target_names(&self) -> &[String] {
        &self.target_names
    }

    /// Regressor columns, one `Vec` per regressor variable.
    pub fn regressor_columns(&self) -> &[Vec<f64>] {
        &self.regressors
    }

    pub fn target_column(&self, t: usize) -> &[f64] {
        &self.targets[t]
    }

    pub fn regressor_row(&self, i: usize) -> Vec<f64> {
        self.regressors.iter().map(|c| c[i]).collect()
    }

    pub fn target_row(&self, i: usize) -> Vec<f64> {
        self.targets.iter().map(|c| c[i]).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = (Vec<f64>, Vec<f64>)> + '_ {
        (0..self.n_rows).map(|i| (self.regressor_row(i), self.target_row(i)))
    }

    /// Subset of rows in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::InsufficientData("row selection is empty".into()));
        }
        let pick = |cols: &[Vec<f64>]| -> Vec<Vec<f64>> {
            cols.iter()
                .map(|c| indices.iter().map(|&i| c[i]).collect())
                .collect()
        };
        Ok(Self {
            regressor_names: self.regressor_names.clone(),
            target_names: self.target_names.clone(),
            regressors: pick(&self.regressors),
            targets: pick(&self.targets),
            n_rows: indices.len(),
            provenance: self.provenance.clone(),
        })
    }

    /// Every third sample (indices 2, 5, 8, ...) goes to the test set, the
    /// rest to the training set. Returns `(train, test)`.
    pub fn split_every_third(&self) -> Result<(Self, Self)> {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..self.n_rows).partition(|i| i % 3 == 2);
        Ok((self.select_rows(&train)?, self.select_rows(&test)?))
    }

    /// Row-wise concatenation of datasets with identical column names.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if self.regressor_names != other.regressor_names || self.target_names != other.target_names {
            return Err(Error::Dimension("cannot concatenate datasets with different columns".into()));
        }
        let join = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.iter().chain(y).copied().collect())
                .collect()
        };
        Ok(Self {
            regressor_names: self.regressor_names.clone(),
            target_names: self.target_names.clone(),
            regressors: join(&self.regressors, &other.regressors),
            targets: join(&self.targets, &other.targets),
            n_rows: self.n_rows + other.n_rows,
            provenance: self.provenance.clone(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = fs::File::create(path.as_ref())?;
        let mut w = BufWriter::new(file);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        if let Some(p) = &self.provenance {
            writeln!(w, "# {p}")?;
        }
        let header: Vec<&str> = self
            .regressor_names
            .iter()
            .chain(&self.target_names)
            .map(String::as_str)
            .collect();
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for i in 0..self.n_rows {
            line.clear();
            for (j, col) in self.regressors.iter().chain(&self.targets).enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&format_float(col[i]));
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::parse_csv(&text).map_err(|e| match e {
            Error::InvalidArgument(message) | Error::Dimension(message) | Error::InsufficientData(message) => {
                Error::Malformed {
                    path: path.to_path_buf(),
                    message,
                }
            }
            other => other,
        })
    }

    /// Parse CSV text. Row numbers in errors are 1-based file lines.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut provenance = None;
        let mut header: Option<(usize, Vec<String>)> = None;
        let mut columns: Vec<Vec<f64>> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line_no = lineno + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if header.is_none() && provenance.is_none() {
                    provenance = Some(rest.strip_prefix(' ').unwrap_or(rest).to_string());
                }
                continue;
            }
            match &header {
                None => {
                    let names: Vec<String> = line.split(',').map(|s| s.trim().to_string()).collect();
                    columns = vec![Vec::new(); names.len()];
                    header = Some((line_no, names));
                }
                Some((_, names)) => {
                    let cells: Vec<&str> = line.split(',').collect();
                    if cells.len() != names.len() {
                        return Err(Error::Parse {
                            row: line_no,
                            column: cells.len().min(names.len()) + 1,
                            message: format!(
                                "expected {} cells, found {}",
                                names.len(),
                                cells.len()
                            ),
                        });
                    }
                    for (j, cell) in cells.iter().enumerate() {
                        let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                            row: line_no,
                            column: j + 1,
                            message: format!("`{}` in column `{}` is not a number", cell.trim(), names[j]),
                        })?;
                        columns[j].push(v);
                    }
                }
            }
        }
        let (_, names) = header.ok_or_else(|| Error::InvalidArgument("missing header row".into()))?;
        let split = names
            .iter()
            .position(|n| n.ends_with(TARGET_SUFFIX))
            .ok_or_else(|| Error::InvalidArgument("header has no target (`_next`) columns".into()))?;
        let targets = columns.split_off(split);
        let target_names = names[split..].to_vec();
        let regressor_names = names[..split].to_vec();
        let ds = Self::from_columns(regressor_names, target_names, columns, targets)?;
        Ok(match provenance {
            Some(p) => ds.with_provenance(p),
            None => ds,
        })
    }
}

/// 17 significant digits in scientific notation.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}
