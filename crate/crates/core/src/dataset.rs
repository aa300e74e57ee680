use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub label: usize,
}

/// A labelled set of fixed-width real feature vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<Sample>,
    role: Role,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, role: Role) -> Result<Self> {
        let first = samples.first().ok_or(Error::EmptyDataset)?;
        let dim = first.x.len();
        if dim == 0 {
            return Err(Error::InvalidDataset("samples have no features".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.x.len() != dim {
                return Err(Error::InvalidDataset(format!(
                    "sample {i} has {} features, expected {dim}",
                    s.x.len()
                )));
            }
            if s.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!("sample {i} has a non-finite feature")));
            }
        }
        Ok(Dataset { samples, role })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn with_role(mut self, role: Role) -> Self {
        self.role = role;
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.samples[0].x.len()
    }

    pub fn max_label(&self) -> usize {
        self.samples.iter().map(|s| s.label).max().unwrap_or(0)
    }

    /// Fails if any label is not below `num_classes`.
    pub fn check_labels(&self, num_classes: usize) -> Result<()> {
        match self.samples.iter().find(|s| s.label >= num_classes) {
            Some(s) => Err(Error::InvalidLabel {
                label: s.label,
                num_classes,
            }),
            None => Ok(()),
        }
    }

    /// CSV with a header row `x1,…,xn,label`.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = (1..=self.input_dim()).map(|i| format!("x{i}")).collect();
        header.push("label".into());
        let csv_err = |e: csv::Error| Error::InvalidArgument(format!("csv encoding failed: {e}"));
        w.write_record(&header).map_err(csv_err)?;
        for s in &self.samples {
            let mut row: Vec<String> = s.x.iter().map(|v| v.to_string()).collect();
            row.push(s.label.to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.into_inner()
            .map_err(|e| Error::InvalidArgument(format!("csv encoding failed: {e}")))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_atomic(path, &self.to_csv()?)
    }

    pub fn load_csv(path: &Path, role: Role) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&bytes, role).map_err(|e| match e {
            Error::Parse { what, message, .. } => Error::parse(what, path, message),
            other => other,
        })
    }

    pub fn from_csv(bytes: &[u8], role: Role) -> Result<Self> {
        let perr = |m: String| Error::parse("dataset", "<memory>", m);
        let mut r = csv::Reader::from_reader(bytes);
        let header = r.headers().map_err(|e| perr(e.to_string()))?.clone();
        if header.len() < 2 || &header[header.len() - 1] != "label" {
            return Err(perr("last column must be `label`".into()));
        }
        let mut samples = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| perr(e.to_string()))?;
            let mut x = Vec::with_capacity(rec.len() - 1);
            for field in rec.iter().take(rec.len() - 1) {
                x.push(
                    field
                        .trim()
                        .parse::<f64>()
                        .map_err(|e| perr(format!("row {row}: {e}")))?,
                );
            }
            let label = rec[rec.len() - 1]
                .trim()
                .parse::<usize>()
                .map_err(|e| perr(format!("row {row}: label: {e}")))?;
            samples.push(Sample { x, label });
        }
        Dataset::new(samples, role)
    }
}
