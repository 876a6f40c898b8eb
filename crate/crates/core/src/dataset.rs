//! Descriptor matrices with per-column provenance, plus CSV ingestion and export.

use std::collections::HashSet;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::expr::{is_valid_raw_name, Expr};
use crate::ops::{Operation, OperationSet};

/// Smallest table `load_csv` accepts; anything smaller cannot be split.
pub const MIN_ROWS: usize = 10;

/// One named column and the expression that produced it.
///
/// The name is always the canonical rendering of the expression.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor {
    name: String,
    expr: Expr,
    values: Arc<[f64]>,
}

impl Descriptor {
    pub fn new(expr: Expr, values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "descriptor `{expr}` has a non-finite value at row {i}"
            )));
        }
        Ok(Self {
            name: expr.to_string(),
            expr,
            values: values.into(),
        })
    }

    pub fn raw(name: &str, values: Vec<f64>) -> Result<Self> {
        if !is_valid_raw_name(name) {
            return Err(Error::InvalidInput(format!(
                "`{name}` is not a usable column name (no parentheses, commas or surrounding spaces)"
            )));
        }
        Self::new(Expr::raw(name), values)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_original(&self) -> bool {
        self.expr.is_raw()
    }
}

/// Descriptor set plus regression target. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    columns: Vec<Descriptor>,
    target_name: String,
    target: Arc<[f64]>,
}

impl Dataset {
    pub fn new(columns: Vec<Descriptor>, target_name: &str, target: Vec<f64>) -> Result<Self> {
        Self::from_parts(columns, target_name.to_string(), target.into())
    }

    fn from_parts(columns: Vec<Descriptor>, target_name: String, target: Arc<[f64]>) -> Result<Self> {
        let n = target.len();
        if n == 0 {
            return Err(Error::Empty("dataset has no samples"));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("target contains non-finite values".into()));
        }
        let mut seen = HashSet::with_capacity(columns.len() + 1);
        seen.insert(target_name.as_str());
        for c in &columns {
            if c.values.len() != n {
                return Err(Error::LengthMismatch(c.values.len(), n));
            }
            if !seen.insert(c.name()) {
                return Err(Error::DuplicateColumn(c.name().to_string()));
            }
        }
        Ok(Self {
            columns,
            target_name,
            target,
        })
    }

    /// Convenience constructor for raw columns.
    pub fn from_columns(
        names: &[&str],
        columns: Vec<Vec<f64>>,
        target_name: &str,
        target: Vec<f64>,
    ) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::LengthMismatch(names.len(), columns.len()));
        }
        let cols = names
            .iter()
            .zip(columns)
            .map(|(n, v)| Descriptor::raw(n, v))
            .collect::<Result<Vec<_>>>()?;
        Self::new(cols, target_name, target)
    }

    /// Same samples and target with a different column list.
    pub fn with_columns(&self, columns: Vec<Descriptor>) -> Result<Self> {
        Self::from_parts(columns, self.target_name.clone(), Arc::clone(&self.target))
    }

    /// Keeps the listed column positions, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            columns: indices.iter().map(|&i| self.columns[i].clone()).collect(),
            target_name: self.target_name.clone(),
            target: Arc::clone(&self.target),
        }
    }

    pub fn columns(&self) -> &[Descriptor] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Descriptor> {
        self.columns.iter().find(|c| c.name() == name)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name() == name)
    }

    pub fn n_samples(&self) -> usize {
        self.target.len()
    }

    pub fn n_descriptors(&self) -> usize {
        self.columns.len()
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn names(&self) -> Vec<&str> {
        self.columns.iter().map(Descriptor::name).collect()
    }

    /// True when every column is an untransformed input column.
    pub fn is_raw(&self) -> bool {
        self.columns.iter().all(Descriptor::is_original)
    }
}

/// Recomputes an expression's values from the raw columns it names.
///
/// Uses the same operation definitions as generation, so for any generated
/// descriptor the result is bit-identical to its stored values.
pub fn evaluate_expression(expr: &Expr, raw: &Dataset, ops: &OperationSet) -> Result<Vec<f64>> {
    match expr {
        Expr::Raw(name) => raw
            .column(name)
            .filter(|c| c.is_original())
            .map(|c| c.values().to_vec())
            .ok_or_else(|| Error::MissingColumn(name.clone())),
        Expr::Unary(op, child) => {
            check_op(ops, Operation::Unary(*op))?;
            let mut v = evaluate_expression(child, raw, ops)?;
            v.iter_mut().for_each(|x| *x = op.apply(*x));
            Ok(v)
        }
        Expr::Binary(op, l, r) => {
            check_op(ops, Operation::Binary(*op))?;
            let a = evaluate_expression(l, raw, ops)?;
            let b = evaluate_expression(r, raw, ops)?;
            Ok(op.apply_all(&a, &b))
        }
    }
}

fn check_op(ops: &OperationSet, op: Operation) -> Result<()> {
    if ops.contains(op) {
        Ok(())
    } else {
        Err(Error::OperationNotInSet(op.name().to_string()))
    }
}

/// Reads a headed, comma-separated numeric table.
///
/// Plain headers become raw descriptors. Headers in canonical expression
/// form (as written by [`export_dataset`]) keep their lineage.
pub fn load_csv(path: impl AsRef<Path>, target_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, target_column)
}

pub fn read_csv<R: std::io::Read>(reader: R, target_column: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::None)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(Error::DuplicateColumn(h.clone()));
        }
    }
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingColumn(target_column.to_string()))?;

    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        // header is line 1
        let row = r + 2;
        if record.len() != headers.len() {
            return Err(Error::InvalidInput(format!(
                "line {row}: expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        for (c, cell) in record.iter().enumerate() {
            let v = cell
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::BadCell {
                    row,
                    column: headers[c].clone(),
                    value: cell.to_string(),
                })?;
            cols[c].push(v);
        }
    }
    let n = cols[target_idx].len();
    if n < MIN_ROWS {
        return Err(Error::TooFewRows(n));
    }

    let target = std::mem::take(&mut cols[target_idx]);
    let mut columns = Vec::with_capacity(headers.len() - 1);
    for (i, (h, values)) in headers.iter().zip(cols).enumerate() {
        if i == target_idx {
            continue;
        }
        let expr = if is_valid_raw_name(h) {
            Expr::raw(h.as_str())
        } else {
            h.parse::<Expr>().ok().filter(|e| !e.is_raw()).ok_or_else(|| {
                Error::InvalidInput(format!("column header `{h}` is neither a plain name nor an expression"))
            })?
        };
        columns.push(Descriptor::new(expr, values)?);
    }
    if columns.is_empty() {
        return Err(Error::Empty("no descriptor columns besides the target"));
    }
    Dataset::new(columns, target_column, target)
}

/// Writes descriptors (headed by canonical expression strings) followed by
/// the target column. Values use shortest round-trip formatting, so reading
/// the file back reproduces every value exactly.
pub fn export_dataset(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(d, file)
}

pub fn write_csv<W: std::io::Write>(d: &Dataset, writer: W) -> Result<()> {
    if d.n_descriptors() == 0 {
        return Err(Error::Empty("cannot export a dataset without descriptors"));
    }
    let mut w = csv::WriterBuilder::new()
        .quote_style(csv::QuoteStyle::Necessary)
        .from_writer(writer);
    let mut header: Vec<&str> = d.names();
    header.push(d.target_name());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for i in 0..d.n_samples() {
        row.clear();
        row.extend(d.columns().iter().map(|c| c.values()[i].to_string()));
        row.push(d.target()[i].to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}
