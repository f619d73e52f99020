//! Treatment datasets, CSV ingestion and the flat key=value metadata sidecar.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Covariates, binary treatment and outcome for `n` units.
#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentDataset {
    x: Array2<f64>,
    t: Vec<u8>,
    y: Array1<f64>,
}

impl TreatmentDataset {
    pub fn new(x: Array2<f64>, t: Vec<u8>, y: Array1<f64>) -> Result<Self> {
        crate::error::check_len("TreatmentDataset treatment", x.nrows(), t.len())?;
        crate::error::check_len("TreatmentDataset outcome", x.nrows(), y.len())?;
        if let Some(bad) = t.iter().find(|&&v| v > 1) {
            return Err(Error::Domain(format!(
                "treatment value {bad} outside {{0,1}}"
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("dataset contains non-finite values".into()));
        }
        Ok(TreatmentDataset { x, t, y })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> ArrayView2<'_, f64> {
        self.x.view()
    }

    pub fn t(&self) -> &[u8] {
        &self.t
    }

    pub fn y(&self) -> ArrayView1<'_, f64> {
        self.y.view()
    }

    /// Row indices with treatment equal to `arm`.
    pub fn arm_rows(&self, arm: u8) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.t[i] == arm).collect()
    }

    pub fn arm_count(&self, arm: u8) -> usize {
        self.t.iter().filter(|&&v| v == arm).count()
    }

    pub fn select(&self, rows: &[usize]) -> TreatmentDataset {
        TreatmentDataset {
            x: self.x.select(Axis(0), rows),
            t: rows.iter().map(|&i| self.t[i]).collect(),
            y: self.y.select(Axis(0), rows),
        }
    }

    /// Covariates and outcomes of one treatment arm.
    pub fn arm(&self, arm: u8) -> (Array2<f64>, Array1<f64>) {
        let rows = self.arm_rows(arm);
        (self.x.select(Axis(0), &rows), self.y.select(Axis(0), &rows))
    }

    pub(crate) fn require_both_arms(&self, min: usize, what: &str) -> Result<()> {
        for arm in [1u8, 0u8] {
            let count = self.arm_count(arm);
            if count < min {
                return Err(Error::Fit(format!(
                    "{what} has {count} samples in arm t={arm}; at least {min} required"
                )));
            }
        }
        Ok(())
    }
}

/// A confounded observational dataset paired with a small randomized one.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedData {
    pub obs: TreatmentDataset,
    pub rand: TreatmentDataset,
}

impl CombinedData {
    pub fn new(obs: TreatmentDataset, rand: TreatmentDataset) -> Result<Self> {
        crate::error::check_len("CombinedData covariate dimension", obs.d(), rand.d())?;
        rand.require_both_arms(2, "randomized data")?;
        Ok(CombinedData { obs, rand })
    }

    pub fn d(&self) -> usize {
        self.obs.d()
    }
}

/// A numeric CSV file held column-wise by header name.
#[derive(Debug, Clone)]
pub struct CsvTable {
    headers: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)?;
        let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
        let mut columns = vec![Vec::new(); headers.len()];
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let row = i + 1;
            for (j, header) in headers.iter().enumerate() {
                let cell = record.get(j).ok_or_else(|| Error::Parse {
                    row,
                    column: header.clone(),
                    message: "missing cell".into(),
                })?;
                let value = cell.parse::<f64>().map_err(|_| Error::Parse {
                    row,
                    column: header.clone(),
                    message: format!("`{cell}` is not a number"),
                })?;
                columns[j].push(value);
            }
        }
        Ok(CsvTable { headers, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|j| self.columns[j].as_slice())
    }

    fn require(&self, name: &str) -> Result<&[f64]> {
        self.column(name).ok_or_else(|| Error::Parse {
            row: 0,
            column: name.to_owned(),
            message: "missing column".into(),
        })
    }

    /// Covariate matrix from columns `x1..xd`.
    pub fn covariates(&self) -> Result<Array2<f64>> {
        let mut indices: Vec<usize> = self
            .headers
            .iter()
            .filter_map(|h| h.strip_prefix('x').and_then(|r| r.parse::<usize>().ok()))
            .collect();
        indices.sort_unstable();
        if indices.is_empty() {
            return Err(Error::Parse {
                row: 0,
                column: "x1".into(),
                message: "missing column".into(),
            });
        }
        for (k, &idx) in indices.iter().enumerate() {
            if idx != k + 1 {
                return Err(Error::Parse {
                    row: 0,
                    column: format!("x{}", k + 1),
                    message: "missing column".into(),
                });
            }
        }
        let d = indices.len();
        let n = self.n_rows();
        let mut x = Array2::zeros((n, d));
        for j in 0..d {
            let col = self.require(&format!("x{}", j + 1))?;
            x.column_mut(j).assign(&ArrayView1::from(col));
        }
        Ok(x)
    }

    pub fn dataset(&self) -> Result<TreatmentDataset> {
        let x = self.covariates()?;
        let t_col = self.require("t")?;
        let mut t = Vec::with_capacity(t_col.len());
        for (i, &v) in t_col.iter().enumerate() {
            if v == 0.0 {
                t.push(0);
            } else if v == 1.0 {
                t.push(1);
            } else {
                return Err(Error::Parse {
                    row: i + 1,
                    column: "t".into(),
                    message: format!("treatment {v} outside {{0,1}}"),
                });
            }
        }
        let y = Array1::from(self.require("y")?.to_vec());
        TreatmentDataset::new(x, t, y)
    }
}

pub fn load_csv(path: &Path) -> Result<TreatmentDataset> {
    CsvTable::read(path)?.dataset()
}

pub fn write_csv(dataset: &TreatmentDataset, path: &Path) -> Result<()> {
    write_csv_with_tau(dataset, None, path)
}

/// Writes `x1..xd,t,y` and, when given, a trailing reference `tau` column.
pub fn write_csv_with_tau(
    dataset: &TreatmentDataset,
    tau: Option<ArrayView1<f64>>,
    path: &Path,
) -> Result<()> {
    if let Some(tau) = &tau {
        crate::error::check_len("write_csv tau column", dataset.n(), tau.len())?;
    }
    let mut w = csv::WriterBuilder::new().from_path(path)?;
    let mut header: Vec<String> = (1..=dataset.d()).map(|j| format!("x{j}")).collect();
    header.push("t".into());
    header.push("y".into());
    if tau.is_some() {
        header.push("tau".into());
    }
    w.write_record(&header)?;
    for i in 0..dataset.n() {
        let mut rec: Vec<String> = dataset.x.row(i).iter().map(|v| v.to_string()).collect();
        rec.push(dataset.t[i].to_string());
        rec.push(dataset.y[i].to_string());
        if let Some(tau) = &tau {
            rec.push(tau[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a flat `key=value` provenance file.
pub fn write_metadata(path: &Path, entries: &BTreeMap<String, String>) -> Result<()> {
    let mut s = String::new();
    for (k, v) in entries {
        s.push_str(k);
        s.push('=');
        s.push_str(v);
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_metadata(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            row: i + 1,
            column: "metadata".into(),
            message: "expected key=value".into(),
        })?;
        out.insert(k.trim().to_owned(), v.trim().to_owned());
    }
    Ok(out)
}
