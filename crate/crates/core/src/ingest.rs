//! Data loading, marginal standardization and exceedance extraction.
//!
//! Margins are mapped to the standard Pareto scale through the empirical
//! distribution function `F̂ = rank / (n + 1)` with average ranks for ties,
//! so every standardized value is finite and lies in `[(n+1)/n, n+1]`.

use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix_serde;

/// Norm used to split an observation into radius and angle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    L2,
    Linf,
}

impl Norm {
    pub fn of(self, x: &[f64]) -> f64 {
        match self {
            Norm::L1 => x.iter().map(|v| v.abs()).sum(),
            Norm::L2 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Norm::Linf => x.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    /// Norm of row `i` of `m`.
    pub fn of_row(self, m: &DMatrix<f64>, i: usize) -> f64 {
        let row = m.row(i);
        match self {
            Norm::L1 => row.iter().map(|v| v.abs()).sum(),
            Norm::L2 => row.iter().map(|v| v * v).sum::<f64>().sqrt(),
            Norm::Linf => row.iter().fold(0.0, |acc, v| acc.max(v.abs())),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L1 => "l1",
            Norm::L2 => "l2",
            Norm::Linf => "linf",
        })
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            "linf" | "max" => Ok(Norm::Linf),
            other => Err(invalid("norm", format!("unknown norm `{other}` (expected l1, l2 or linf)"))),
        }
    }
}

/// Raw observations: `n` rows, `d` labelled columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationMatrix {
    #[serde(with = "matrix_serde::rows")]
    values: DMatrix<f64>,
    labels: Vec<String>,
}

impl ObservationMatrix {
    pub fn new(values: DMatrix<f64>, labels: Vec<String>) -> Result<Self> {
        let (n, d) = values.shape();
        if n < 2 {
            return Err(Error::InvalidData(format!("need at least 2 observations, got {n}")));
        }
        if d < 2 {
            return Err(Error::InvalidData(format!("need at least 2 variables, got {d}")));
        }
        if labels.len() != d {
            return Err(Error::InvalidData(format!("{} labels for {d} columns", labels.len())));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos % n, pos / n);
            return Err(Error::InvalidData(format!(
                "non-finite entry at row {i}, column `{}`",
                labels[j]
            )));
        }
        for (j, col) in values.column_iter().enumerate() {
            let first = col[0];
            if col.iter().all(|v| *v == first) {
                return Err(Error::ConstantColumn {
                    label: labels[j].clone(),
                    index: j,
                });
            }
        }
        Ok(Self { values, labels })
    }

    /// Builds a matrix with default labels `X1, …, Xd`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let values = matrix_serde::from_rows(rows).ok_or_else(|| Error::InvalidData("ragged rows".into()))?;
        let labels = default_labels(values.ncols());
        Self::new(values, labels)
    }

    pub fn with_default_labels(values: DMatrix<f64>) -> Result<Self> {
        let labels = default_labels(values.ncols());
        Self::new(values, labels)
    }

    /// Reads a CSV document whose first row holds the column labels.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let labels: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != labels.len() {
                return Err(Error::InvalidData(format!(
                    "row {} has {} fields, expected {}",
                    i + 1,
                    rec.len(),
                    labels.len()
                )));
            }
            let row = rec
                .iter()
                .zip(&labels)
                .map(|(field, label)| {
                    field.parse::<f64>().map_err(|_| {
                        Error::InvalidData(format!("row {}: cannot parse `{field}` in column `{label}`", i + 1))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::InvalidData("no observations".into()));
        }
        let values = matrix_serde::from_rows(&rows).expect("rows checked for equal length");
        Self::new(values, labels)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(std::io::BufReader::new(file))
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.labels)?;
        for row in self.values.row_iter() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn d(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Keeps the listed columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        if let Some(bad) = cols.iter().find(|c| **c >= self.d()) {
            return Err(invalid("columns", format!("index {bad} out of range for d = {}", self.d())));
        }
        let values = DMatrix::from_fn(self.n(), cols.len(), |i, j| self.values[(i, cols[j])]);
        let labels = cols.iter().map(|c| self.labels[*c].clone()).collect();
        Self::new(values, labels)
    }
}

pub fn default_labels(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("X{j}")).collect()
}

/// Where a standardized sample came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSource {
    pub labels: Vec<String>,
    pub n: usize,
    pub d: usize,
}

/// Rank-transformed observations on the standard Pareto scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizedSample {
    #[serde(with = "matrix_serde::rows")]
    pareto: DMatrix<f64>,
    /// Average ranks in `1..=n`; half-integers appear only for ties.
    #[serde(with = "matrix_serde::rows")]
    ranks: DMatrix<f64>,
    source: SampleSource,
}

impl StandardizedSample {
    pub fn n(&self) -> usize {
        self.pareto.nrows()
    }

    pub fn d(&self) -> usize {
        self.pareto.ncols()
    }

    pub fn pareto(&self) -> &DMatrix<f64> {
        &self.pareto
    }

    pub fn ranks(&self) -> &DMatrix<f64> {
        &self.ranks
    }

    pub fn labels(&self) -> &[String] {
        &self.source.labels
    }

    pub fn source(&self) -> &SampleSource {
        &self.source
    }

    /// Empirical distribution function value `rank / (n + 1)` of entry `(i, j)`.
    pub fn ecdf(&self, i: usize, j: usize) -> f64 {
        self.ranks[(i, j)] / (self.n() as f64 + 1.0)
    }

    pub fn pareto_row(&self, i: usize) -> Vec<f64> {
        self.pareto.row(i).iter().copied().collect()
    }

    /// Re-standardizes the rows picked by `rows` (with repetition), as needed
    /// by the bootstrap.
    ///
    /// Copies of the same row are resampling artifacts rather than genuine
    /// ties, so ties are broken by the original rank and then by draw
    /// position; every column then holds the ranks `1..=m` exactly once.
    pub fn resample(&self, rows: &[usize]) -> StandardizedSample {
        let (m, d) = (rows.len(), self.d());
        let mut ranks = DMatrix::zeros(m, d);
        for j in 0..d {
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&a, &b| {
                self.ranks[(rows[a], j)]
                    .total_cmp(&self.ranks[(rows[b], j)])
                    .then(a.cmp(&b))
            });
            for (pos, &i) in order.iter().enumerate() {
                ranks[(i, j)] = (pos + 1) as f64;
            }
        }
        from_ranks(ranks, self.source.labels.clone())
    }
}

/// Average ranks (1-based) of `values`; ties share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

fn standardize(values: &DMatrix<f64>, labels: Vec<String>) -> StandardizedSample {
    let (n, d) = values.shape();
    let mut ranks = DMatrix::zeros(n, d);
    for j in 0..d {
        let col: Vec<f64> = values.column(j).iter().copied().collect();
        for (i, r) in average_ranks(&col).into_iter().enumerate() {
            ranks[(i, j)] = r;
        }
    }
    from_ranks(ranks, labels)
}

fn from_ranks(ranks: DMatrix<f64>, labels: Vec<String>) -> StandardizedSample {
    let (n, d) = ranks.shape();
    let np1 = n as f64 + 1.0;
    let pareto = ranks.map(|r| np1 / (np1 - r));
    StandardizedSample {
        pareto,
        ranks,
        source: SampleSource { labels, n, d },
    }
}

/// Maps each column to the standard Pareto scale via its empirical
/// distribution function.
pub fn rank_transform(data: &ObservationMatrix) -> StandardizedSample {
    standardize(data.values(), data.labels().to_vec())
}

/// Threshold exceedances of the radius `‖x‖` with their angles `x / ‖x‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceSet {
    pub norm: Norm,
    pub k: usize,
    /// Radius of the `(k+1)`-th largest observation.
    pub threshold: f64,
    /// Radii in non-increasing order.
    pub radii: Vec<f64>,
    #[serde(with = "matrix_serde::rows")]
    pub angles: DMatrix<f64>,
    /// Row indices into the standardized sample, aligned with `radii`.
    pub indices: Vec<usize>,
}

impl ExceedanceSet {
    pub fn d(&self) -> usize {
        self.angles.ncols()
    }

    pub fn angle(&self, i: usize) -> Vec<f64> {
        self.angles.row(i).iter().copied().collect()
    }

    /// Exceedance `i` divided by the threshold, `x / t`.
    pub fn scaled(&self, i: usize) -> Vec<f64> {
        let s = self.radii[i] / self.threshold;
        self.angles.row(i).iter().map(|a| a * s).collect()
    }
}

/// Keeps the `k` observations with the largest radius in the chosen norm.
/// Ties are broken by row index.
pub fn extract_exceedances(sample: &StandardizedSample, norm: Norm, k: usize) -> Result<ExceedanceSet> {
    let n = sample.n();
    if k == 0 || k >= n {
        return Err(invalid("k", format!("need 1 <= k < n = {n}, got {k}")));
    }
    let radii: Vec<f64> = (0..n).map(|i| norm.of_row(&sample.pareto, i)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| radii[b].total_cmp(&radii[a]).then(a.cmp(&b)));
    let threshold = radii[order[k]];
    let kept = &order[..k];
    let d = sample.d();
    let angles = DMatrix::from_fn(k, d, |i, j| sample.pareto[(kept[i], j)] / radii[kept[i]]);
    Ok(ExceedanceSet {
        norm,
        k,
        threshold,
        radii: kept.iter().map(|&i| radii[i]).collect(),
        angles,
        indices: kept.to_vec(),
    })
}

/// Number of exceedances implied by an empirical radial quantile level:
/// `k = floor((1 - q) n)`.
pub fn k_from_quantile(n: usize, q: f64) -> Result<usize> {
    if !(q > 0.0 && q < 1.0) {
        return Err(invalid("quantile", format!("must lie in (0, 1), got {q}")));
    }
    // guard against 0.1 * 2024 = 202.39999…
    let k = ((1.0 - q) * n as f64 + 1e-9).floor() as usize;
    if k == 0 || k >= n {
        return Err(invalid("quantile", format!("level {q} leaves k = {k} exceedances out of {n}")));
    }
    Ok(k)
}

/// Exceedances above the empirical radial `q`-quantile.
pub fn extract_by_quantile(sample: &StandardizedSample, norm: Norm, q: f64) -> Result<ExceedanceSet> {
    extract_exceedances(sample, norm, k_from_quantile(sample.n(), q)?)
}

/// Exceedances of an absolute radius level `t`, converted to the equivalent `k`.
pub fn extract_above_level(sample: &StandardizedSample, norm: Norm, level: f64) -> Result<ExceedanceSet> {
    let k = (0..sample.n())
        .filter(|&i| norm.of_row(&sample.pareto, i) > level)
        .count();
    extract_exceedances(sample, norm, k)
}
