//! Dataset ingestion and profiling.
//!
//! Supported layouts:
//! - `.mat` / `.npz`: arrays `X` (n×d) and optional `y` (n).
//! - `.csv`: header row; an optional final `label`/`y` column holds labels
//!   and an optional time-like first column is set aside.
//! - `.json`: graph bundle `{"node_features": [[..]], "edges": [[u, v], ..],
//!   "labels": [..]}` with `labels` optional.
//! - directory: time-series bundle of `train.csv`, `test.csv`,
//!   `test_label.csv`.

use std::fs::File;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::mat::{read_mat, MatArray};
use crate::registry::Modality;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    Mat,
    Csv,
    Npz,
    GraphBundle,
    TsBundle,
}

impl DataFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            DataFormat::Mat => "mat",
            DataFormat::Csv => "csv",
            DataFormat::Npz => "npz",
            DataFormat::GraphBundle => "graph_bundle",
            DataFormat::TsBundle => "ts_bundle",
        }
    }

    /// Detects the layout from the path alone.
    pub fn detect(path: &Path) -> Option<DataFormat> {
        if path.is_dir() {
            return Some(DataFormat::TsBundle);
        }
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "mat" => Some(DataFormat::Mat),
            "csv" => Some(DataFormat::Csv),
            "npz" => Some(DataFormat::Npz),
            "json" => Some(DataFormat::GraphBundle),
            _ => None,
        }
    }

    /// Modality forced by the format, or `None` for tabular files that could
    /// also hold a series.
    pub fn forced_modality(self) -> Option<Modality> {
        match self {
            DataFormat::GraphBundle => Some(Modality::Graph),
            DataFormat::TsBundle => Some(Modality::TimeSeries),
            DataFormat::Mat | DataFormat::Npz => Some(Modality::Multivariate),
            DataFormat::Csv => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    /// Labels on the training data.
    SupervisedCapable,
    /// Labels only on the test data.
    UnsupervisedWithEvaluation,
    /// No labels anywhere.
    Production,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataContent {
    Tabular { x: Array2<f64>, y: Option<Vec<u8>> },
    Graph { x: Array2<f64>, edges: Vec<(usize, usize)>, y: Option<Vec<u8>> },
    Series { train: Array2<f64>, test: Array2<f64>, test_labels: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub path: PathBuf,
    pub format: DataFormat,
    pub content: DataContent,
    /// Header of a set-aside time-like first CSV column.
    pub time_column: Option<String>,
}

/// Label summary of the data a pipeline scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub n_samples: usize,
    pub has_labels: bool,
    pub label_prevalence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProfile {
    pub modality: Modality,
    pub format: DataFormat,
    /// Rows, nodes, or training time steps.
    pub n_samples: usize,
    /// Columns, node feature width, or channels.
    pub n_features: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_edges: Option<usize>,
    pub has_labels: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_prevalence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_column: Option<String>,
    /// The scored split when it differs from the training data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<SplitSummary>,
    pub supervision: Supervision,
}

impl DatasetProfile {
    /// Labels available on whatever split the pipeline scores.
    pub fn eval_has_labels(&self) -> bool {
        match &self.test {
            Some(t) => t.has_labels,
            None => self.has_labels,
        }
    }

    pub fn n_eval(&self) -> usize {
        self.test.as_ref().map_or(self.n_samples, |t| t.n_samples)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("unsupported dataset format: {0}")]
    UnsupportedFormat(PathBuf),
    #[error("cannot read {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("dataset {0} has no rows")]
    EmptyDataset(PathBuf),
    #[error("train has {train} features but test has {test}")]
    FeatureMismatch { train: usize, test: usize },
}

fn corrupt(path: &Path, reason: impl ToString) -> DatasetError {
    DatasetError::CorruptFile { path: path.to_path_buf(), reason: reason.to_string() }
}

fn binary_labels(path: &Path, values: impl IntoIterator<Item = f64>) -> Result<Vec<u8>, DatasetError> {
    values
        .into_iter()
        .map(|v| {
            if v == 0.0 {
                Ok(0)
            } else if v == 1.0 {
                Ok(1)
            } else {
                Err(corrupt(path, format!("labels must be 0 or 1, found {v}")))
            }
        })
        .collect()
}

pub fn prevalence(labels: &[u8]) -> f64 {
    labels.iter().filter(|&&l| l == 1).count() as f64 / labels.len() as f64
}

impl Dataset {
    /// Rows, nodes, or training time steps.
    pub fn n_samples(&self) -> usize {
        match &self.content {
            DataContent::Tabular { x, .. } | DataContent::Graph { x, .. } => x.nrows(),
            DataContent::Series { train, .. } => train.nrows(),
        }
    }

    pub fn n_features(&self) -> usize {
        match &self.content {
            DataContent::Tabular { x, .. } | DataContent::Graph { x, .. } => x.ncols(),
            DataContent::Series { train, .. } => train.ncols(),
        }
    }

    /// Labels of the training part.
    pub fn train_labels(&self) -> Option<&[u8]> {
        match &self.content {
            DataContent::Tabular { y, .. } | DataContent::Graph { y, .. } => y.as_deref(),
            DataContent::Series { .. } => None,
        }
    }

    /// Labels of the part a pipeline scores when this dataset is the test set.
    pub fn eval_labels(&self) -> Option<&[u8]> {
        match &self.content {
            DataContent::Series { test_labels, .. } => Some(test_labels),
            _ => self.train_labels(),
        }
    }

    pub fn n_eval(&self) -> usize {
        match &self.content {
            DataContent::Series { test, .. } => test.nrows(),
            _ => self.n_samples(),
        }
    }

    fn eval_summary(&self) -> SplitSummary {
        let labels = self.eval_labels();
        SplitSummary { n_samples: self.n_eval(), has_labels: labels.is_some(), label_prevalence: labels.map(prevalence) }
    }
}

/// Reads and validates a dataset without modifying it.
pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let format = DataFormat::detect(path).ok_or_else(|| DatasetError::UnsupportedFormat(path.to_path_buf()))?;
    let mut time_column = None;
    let content = match format {
        DataFormat::Mat => {
            let bytes = std::fs::read(path).map_err(|e| corrupt(path, e))?;
            let arrays = read_mat(&bytes).map_err(|e| corrupt(path, e))?;
            tabular_from_arrays(path, arrays.get("X"), arrays.get("y"))?
        }
        DataFormat::Npz => load_npz(path)?,
        DataFormat::Csv => {
            let table = read_csv(path)?;
            time_column = table.time_column.clone();
            let y = table.labels.map(|l| binary_labels(path, l)).transpose()?;
            DataContent::Tabular { x: table.values, y }
        }
        DataFormat::GraphBundle => load_graph(path)?,
        DataFormat::TsBundle => {
            let train = read_csv(&path.join("train.csv"))?;
            let test = read_csv(&path.join("test.csv"))?;
            let labels = read_csv(&path.join("test_label.csv"))?;
            time_column = train.time_column.clone();
            if train.values.ncols() != test.values.ncols() {
                return Err(corrupt(
                    path,
                    format!("train.csv has {} channels but test.csv has {}", train.values.ncols(), test.values.ncols()),
                ));
            }
            let label_values = labels
                .labels
                .or_else(|| (labels.values.ncols() > 0).then(|| labels.values.column(labels.values.ncols() - 1).to_vec()))
                .ok_or_else(|| corrupt(path, "test_label.csv has no label column"))?;
            if label_values.len() != test.values.nrows() {
                return Err(corrupt(
                    path,
                    format!("test_label.csv has {} rows but test.csv has {}", label_values.len(), test.values.nrows()),
                ));
            }
            if test.values.nrows() == 0 {
                return Err(DatasetError::EmptyDataset(path.join("test.csv")));
            }
            DataContent::Series { train: train.values, test: test.values, test_labels: binary_labels(path, label_values)? }
        }
    };
    let dataset = Dataset { path: path.to_path_buf(), format, content, time_column };
    if dataset.n_samples() == 0 {
        return Err(DatasetError::EmptyDataset(path.to_path_buf()));
    }
    if dataset.n_features() == 0 {
        return Err(corrupt(path, "no feature columns"));
    }
    Ok(dataset)
}

/// Profiles a training dataset and an optional separate test dataset.
pub fn profile_datasets(train: &Dataset, test: Option<&Dataset>, modality: Modality) -> Result<DatasetProfile, DatasetError> {
    if let Some(t) = test {
        if t.n_features() != train.n_features() {
            return Err(DatasetError::FeatureMismatch { train: train.n_features(), test: t.n_features() });
        }
    }
    let train_labels = train.train_labels();
    let test_summary = match (test, &train.content) {
        (Some(t), _) => Some(t.eval_summary()),
        (None, DataContent::Series { .. }) => Some(train.eval_summary()),
        (None, _) => None,
    };
    let has_labels = train_labels.is_some();
    let supervision = if has_labels {
        Supervision::SupervisedCapable
    } else if test_summary.as_ref().is_some_and(|t| t.has_labels) {
        Supervision::UnsupervisedWithEvaluation
    } else {
        Supervision::Production
    };
    Ok(DatasetProfile {
        modality,
        format: train.format,
        n_samples: train.n_samples(),
        n_features: train.n_features(),
        n_edges: match &train.content {
            DataContent::Graph { edges, .. } => Some(edges.len()),
            _ => None,
        },
        has_labels,
        label_prevalence: train_labels.map(prevalence),
        time_column: train.time_column.clone(),
        test: test_summary,
        supervision,
    })
}

fn tabular_from_arrays(path: &Path, x: Option<&MatArray>, y: Option<&MatArray>) -> Result<DataContent, DatasetError> {
    let x = x.ok_or_else(|| corrupt(path, "missing array `X`"))?;
    if x.dims.len() != 2 {
        return Err(corrupt(path, format!("`X` must be 2-D, found dims {:?}", x.dims)));
    }
    let (rows, cols) = (x.rows(), x.cols());
    let matrix = Array2::from_shape_fn((rows, cols), |(r, c)| x.at(r, c));
    let labels = match y {
        None => None,
        Some(y) => {
            if !y.is_vector() || y.data.len() != rows {
                return Err(corrupt(path, format!("`y` has dims {:?} but `X` has {rows} rows", y.dims)));
            }
            Some(binary_labels(path, y.data.iter().copied())?)
        }
    };
    Ok(DataContent::Tabular { x: matrix, y: labels })
}

fn load_npz(path: &Path) -> Result<DataContent, DatasetError> {
    let x = read_npz_array(path, "X")?.ok_or_else(|| corrupt(path, "missing array `X`"))?;
    let y = read_npz_array(path, "y")?;
    let to_mat = |a: ndarray::ArrayD<f64>, name: &str| -> Result<MatArray, DatasetError> {
        let dims = a.shape().to_vec();
        if dims.len() > 2 {
            return Err(corrupt(path, format!("`{name}` has {} dimensions", dims.len())));
        }
        // Column-major copy to share the MAT code path.
        let data = if dims.len() == 2 { a.t().iter().copied().collect() } else { a.iter().copied().collect() };
        Ok(MatArray { dims, data })
    };
    let x = to_mat(x, "X")?;
    let y = y.map(|y| to_mat(y, "y")).transpose()?;
    tabular_from_arrays(path, Some(&x), y.as_ref())
}

/// Reads one array of any common numeric dtype as f64.
fn read_npz_array(path: &Path, name: &str) -> Result<Option<ndarray::ArrayD<f64>>, DatasetError> {
    use ndarray_npy::{NpzReader, ReadNpzError};
    let open = || -> Result<NpzReader<File>, DatasetError> {
        let file = File::open(path).map_err(|e| corrupt(path, e))?;
        NpzReader::new(file).map_err(|e| corrupt(path, e))
    };
    let names = open()?.names().map_err(|e| corrupt(path, e))?;
    let entry = [format!("{name}.npy"), name.to_string()].into_iter().find(|n| names.contains(n));
    let Some(entry) = entry else {
        return Ok(None);
    };
    macro_rules! attempt {
        ($t:ty) => {
            match open()?.by_name::<ndarray::OwnedRepr<$t>, ndarray::IxDyn>(&entry) {
                Ok(a) => return Ok(Some(a.mapv(|v| v as f64))),
                Err(ReadNpzError::Npy(_)) => {}
                Err(e) => return Err(corrupt(path, e)),
            }
        };
    }
    attempt!(f64);
    attempt!(f32);
    attempt!(i64);
    attempt!(i32);
    attempt!(u8);
    attempt!(i8);
    match open()?.by_name::<ndarray::OwnedRepr<bool>, ndarray::IxDyn>(&entry) {
        Ok(a) => Ok(Some(a.mapv(|v| if v { 1.0 } else { 0.0 }))),
        Err(e) => Err(corrupt(path, format!("array `{name}` has an unsupported dtype ({e})"))),
    }
}

struct CsvTable {
    values: Array2<f64>,
    labels: Option<Vec<f64>>,
    time_column: Option<String>,
}

const TIME_HEADERS: [&str; 7] = ["timestamp", "time", "date", "datetime", "ts", "time_stamp", "timestamp_(min)"];

fn looks_like_time_header(h: &str) -> bool {
    TIME_HEADERS.contains(&h.trim().to_ascii_lowercase().as_str())
}

fn looks_like_date(v: &str) -> bool {
    let v = v.trim();
    v.len() >= 8
        && v.as_bytes()[4] == b'-'
        && v[..4].chars().all(|c| c.is_ascii_digit())
        && (chrono::NaiveDate::parse_from_str(&v[..10.min(v.len())], "%Y-%m-%d").is_ok())
}

fn read_csv(path: &Path) -> Result<CsvTable, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_path(path).map_err(|e| corrupt(path, e))?;
    let headers: Vec<String> = reader.headers().map_err(|e| corrupt(path, e))?.iter().map(str::to_string).collect();
    if headers.is_empty() {
        return Err(corrupt(path, "missing header row"));
    }
    let rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>().map_err(|e| corrupt(path, e))?;

    let first_is_time = looks_like_time_header(&headers[0]) || rows.first().is_some_and(|r| r.get(0).is_some_and(looks_like_date));
    let last = headers.len() - 1;
    let label_col =
        (last > 0 || !first_is_time).then_some(last).filter(|&i| matches!(headers[i].trim().to_ascii_lowercase().as_str(), "label" | "y"));
    let start = usize::from(first_is_time && headers.len() > 1);
    let feature_cols: Vec<usize> = (start..headers.len()).filter(|&i| Some(i) != label_col).collect();

    let mut values = Array2::<f64>::zeros((rows.len(), feature_cols.len()));
    let mut labels = label_col.map(|_| Vec::with_capacity(rows.len()));
    for (r, record) in rows.iter().enumerate() {
        if record.len() != headers.len() {
            return Err(corrupt(path, format!("row {} has {} fields, header has {}", r + 2, record.len(), headers.len())));
        }
        let parse = |i: usize| -> Result<f64, DatasetError> {
            record[i]
                .parse::<f64>()
                .map_err(|_| corrupt(path, format!("row {} column `{}`: `{}` is not numeric", r + 2, headers[i], &record[i])))
        };
        for (c, &i) in feature_cols.iter().enumerate() {
            values[(r, c)] = parse(i)?;
        }
        if let (Some(i), Some(l)) = (label_col, labels.as_mut()) {
            l.push(parse(i)?);
        }
    }
    Ok(CsvTable { values, labels, time_column: (start == 1).then(|| headers[0].clone()) })
}

fn load_graph(path: &Path) -> Result<DataContent, DatasetError> {
    #[derive(Deserialize)]
    struct Bundle {
        node_features: Vec<Vec<f64>>,
        edges: Vec<[usize; 2]>,
        #[serde(default)]
        labels: Option<Vec<f64>>,
    }
    let text = std::fs::read_to_string(path).map_err(|e| corrupt(path, e))?;
    let bundle: Bundle = serde_json::from_str(&text).map_err(|e| corrupt(path, e))?;
    let n = bundle.node_features.len();
    if n == 0 {
        return Err(DatasetError::EmptyDataset(path.to_path_buf()));
    }
    let d = bundle.node_features[0].len();
    if bundle.node_features.iter().any(|row| row.len() != d) {
        return Err(corrupt(path, "node feature rows differ in width"));
    }
    let x = Array2::from_shape_vec((n, d), bundle.node_features.into_iter().flatten().collect()).map_err(|e| corrupt(path, e))?;
    if let Some(&[u, v]) = bundle.edges.iter().find(|[u, v]| *u >= n || *v >= n) {
        return Err(corrupt(path, format!("edge ({u}, {v}) references a node outside 0..{n}")));
    }
    let y = match bundle.labels {
        Some(l) if l.len() != n => {
            return Err(corrupt(path, format!("{} labels for {n} nodes", l.len())));
        }
        Some(l) => Some(binary_labels(path, l)?),
        None => None,
    };
    Ok(DataContent::Graph { x, edges: bundle.edges.into_iter().map(|[u, v]| (u, v)).collect(), y })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn csv_with_label_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.csv", "a,b,label\n1,2,0\n3,4,1\n5,6,0\n7,8,0\n");
        let ds = load_dataset(&p).unwrap();
        let prof = profile_datasets(&ds, None, Modality::Multivariate).unwrap();
        assert_eq!((prof.n_samples, prof.n_features), (4, 2));
        assert!(prof.has_labels);
        assert_eq!(prof.label_prevalence, Some(0.25));
        assert_eq!(prof.supervision, Supervision::SupervisedCapable);
        assert_eq!(prof.format, DataFormat::Csv);
    }

    #[test]
    fn csv_time_column_is_set_aside() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "s.csv", "timestamp,value\n2024-01-01,1.0\n2024-01-02,2.0\n2024-01-03,1.5\n");
        let ds = load_dataset(&p).unwrap();
        assert_eq!(ds.time_column.as_deref(), Some("timestamp"));
        assert_eq!(ds.n_features(), 1);
        assert!(ds.train_labels().is_none());
    }

    #[test]
    fn empty_and_malformed_csv() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "e.csv", "a,b\n");
        assert!(matches!(load_dataset(&p), Err(DatasetError::EmptyDataset(_))));
        let p = write(dir.path(), "m.csv", "a,b\n1,x\n");
        assert!(matches!(load_dataset(&p), Err(DatasetError::CorruptFile { .. })));
        let p = write(dir.path(), "l.csv", "a,label\n1,2\n");
        assert!(matches!(load_dataset(&p), Err(DatasetError::CorruptFile { .. })));
    }

    #[test]
    fn unsupported_extension() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "x.parquet", "");
        assert!(matches!(load_dataset(&p), Err(DatasetError::UnsupportedFormat(_))));
    }

    #[test]
    fn graph_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "g.json",
            r#"{"node_features": [[0.1, 1], [0.2, 0], [0.3, 1]], "edges": [[0, 1], [1, 2]], "labels": [0, 0, 1]}"#,
        );
        let ds = load_dataset(&p).unwrap();
        let prof = profile_datasets(&ds, None, Modality::Graph).unwrap();
        assert_eq!(prof.n_samples, 3);
        assert_eq!(prof.n_features, 2);
        assert_eq!(prof.n_edges, Some(2));
        assert_eq!(prof.format, DataFormat::GraphBundle);
        let bad = write(dir.path(), "b.json", r#"{"node_features": [[1]], "edges": [[0, 4]]}"#);
        assert!(matches!(load_dataset(&bad), Err(DatasetError::CorruptFile { .. })));
    }

    #[test]
    fn ts_bundle() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("MSL");
        std::fs::create_dir(&root).unwrap();
        write(&root, "train.csv", "c0,c1\n1,2\n2,3\n3,4\n");
        write(&root, "test.csv", "c0,c1\n1,2\n9,9\n");
        write(&root, "test_label.csv", "label\n0\n1\n");
        let ds = load_dataset(&root).unwrap();
        let prof = profile_datasets(&ds, None, Modality::TimeSeries).unwrap();
        assert_eq!(prof.format, DataFormat::TsBundle);
        assert!(!prof.has_labels);
        assert_eq!(prof.supervision, Supervision::UnsupervisedWithEvaluation);
        let test = prof.test.unwrap();
        assert_eq!(test.n_samples, 2);
        assert_eq!(test.label_prevalence, Some(0.5));
        assert_eq!(ds.eval_labels(), Some(&[0u8, 1][..]));
    }

    #[test]
    fn feature_mismatch_between_splits() {
        let dir = tempfile::tempdir().unwrap();
        let a = load_dataset(&write(dir.path(), "a.csv", "a,b\n1,2\n")).unwrap();
        let b = load_dataset(&write(dir.path(), "b.csv", "a\n1\n")).unwrap();
        assert!(matches!(profile_datasets(&a, Some(&b), Modality::Multivariate), Err(DatasetError::FeatureMismatch { train: 2, test: 1 })));
    }

    #[test]
    fn unlabeled_everywhere_is_production_mode() {
        let dir = tempfile::tempdir().unwrap();
        let a = load_dataset(&write(dir.path(), "a.csv", "a,b\n1,2\n")).unwrap();
        let prof = profile_datasets(&a, None, Modality::Multivariate).unwrap();
        assert_eq!(prof.supervision, Supervision::Production);
        assert_eq!(prof.label_prevalence, None);
    }
}
