//! Headered CSV datasets: covariates plus optional target and block columns.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::family::GlmFamily;
use crate::glm::DesignMatrix;

/// Which columns play which role. Unlisted columns other than the target
/// and block columns are used as features when `features` is `None`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetOptions {
    pub target: Option<String>,
    pub block: Option<String>,
    pub features: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub x: Array2<f64>,
    pub target_name: Option<String>,
    pub target: Option<Vec<f64>>,
    pub block_name: Option<String>,
    pub block_labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn design_matrix(&self) -> Result<DesignMatrix<f64>> {
        DesignMatrix::new(self.x.clone())
    }

    pub fn target(&self) -> Result<&[f64]> {
        self.target
            .as_deref()
            .ok_or_else(|| Error::Dataset("no target column selected".into()))
    }

    /// Row ids grouped by block label, in order of first appearance.
    pub fn blocks(&self) -> Option<Vec<Vec<usize>>> {
        let labels = self.block_labels.as_ref()?;
        let mut order: Vec<&str> = Vec::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (row, label) in labels.iter().enumerate() {
            match order.iter().position(|l| *l == label) {
                Some(i) => groups[i].push(row),
                None => {
                    order.push(label);
                    groups.push(vec![row]);
                }
            }
        }
        Some(groups)
    }

    /// Checks the target column (if any) against the family domain.
    pub fn validate_for(&self, family: &GlmFamily<f64>) -> Result<()> {
        if let Some(t) = &self.target {
            family.check_targets(t).map_err(|e| match e {
                Error::OutOfDomain {
                    index,
                    value,
                    family,
                } => Error::Dataset(format!(
                    "row {}: target value {value} outside the {family} domain",
                    index + 2
                )),
                other => other,
            })?;
        }
        Ok(())
    }
}

pub fn read_dataset(path: impl AsRef<Path>, options: &DatasetOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))?;
    read_dataset_from(file, options)
}

/// Parses a comma-separated, headered CSV. Line numbers in errors count the
/// header as line 1.
pub fn read_dataset_from<R: Read>(reader: R, options: &DatasetOptions) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Dataset(format!("header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Dataset(format!("missing column '{name}'")))
    };
    let target_col = options.target.as_deref().map(find).transpose()?;
    let block_col = options.block.as_deref().map(find).transpose()?;
    let feature_cols: Vec<usize> = match &options.features {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..headers.len())
            .filter(|&i| Some(i) != target_col && Some(i) != block_col)
            .collect(),
    };
    if feature_cols.is_empty() {
        return Err(Error::Dataset("no feature columns".into()));
    }

    let mut flat = Vec::new();
    let mut target = target_col.map(|_| Vec::new());
    let mut blocks = block_col.map(|_| Vec::new());
    let mut n = 0;
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| Error::Dataset(format!("line {line}: {e}")))?;
        let cell = |col: usize| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::Dataset(format!(
                        "line {line}, column '{}': cannot parse '{raw}' as a number",
                        headers[col]
                    ))
                })
        };
        for &c in &feature_cols {
            flat.push(cell(c)?);
        }
        if let (Some(c), Some(t)) = (target_col, target.as_mut()) {
            t.push(cell(c)?);
        }
        if let (Some(c), Some(b)) = (block_col, blocks.as_mut()) {
            b.push(record.get(c).unwrap_or("").to_owned());
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Dataset("no data rows".into()));
    }
    let x = Array2::from_shape_vec((n, feature_cols.len()), flat)
        .map_err(|e| Error::Dataset(e.to_string()))?;
    Ok(Dataset {
        feature_names: feature_cols.iter().map(|&c| headers[c].clone()).collect(),
        x,
        target_name: target_col.map(|c| headers[c].clone()),
        target,
        block_name: block_col.map(|c| headers[c].clone()),
        block_labels: blocks,
    })
}

/// Writes features, then target, then block label. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_dataset<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let io = |e: csv::Error| Error::Dataset(e.to_string());
    let mut w = csv::Writer::from_writer(writer);
    let mut header = data.feature_names.clone();
    if let (Some(name), Some(_)) = (&data.target_name, &data.target) {
        header.push(name.clone());
    }
    if let (Some(name), Some(_)) = (&data.block_name, &data.block_labels) {
        header.push(name.clone());
    }
    w.write_record(&header).map_err(io)?;
    for (i, row) in data.x.rows().into_iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(t) = &data.target {
            rec.push(t[i].to_string());
        }
        if let Some(b) = &data.block_labels {
            rec.push(b[i].clone());
        }
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::Dataset(e.to_string()))?;
    Ok(())
}
