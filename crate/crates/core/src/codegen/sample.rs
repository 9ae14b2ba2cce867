//! Miniature datasets for dry runs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::processor::DatasetProfile;
use crate::registry::Modality;

pub const TABLE_ROWS: usize = 16;
pub const GRAPH_NODES: usize = 12;
pub const GRAPH_EDGES: usize = 24;
pub const SERIES_STEPS: usize = 24;
const ANOMALIES: usize = 2;
const SHIFT: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub enum SampleContent {
    Table { x: Vec<Vec<f64>>, y: Option<Vec<u8>> },
    Graph { x: Vec<Vec<f64>>, edges: Vec<(usize, usize)>, y: Option<Vec<u8>> },
    Series { train: Vec<Vec<f64>>, test: Vec<Vec<f64>>, test_labels: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub seed: u64,
    pub content: SampleContent,
}

fn anomaly_mask(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut mask = vec![0u8; n];
    for &i in &idx[..ANOMALIES] {
        mask[i] = 1;
    }
    mask
}

fn gaussian_rows(rng: &mut ChaCha8Rng, mask: &[u8], width: usize) -> Vec<Vec<f64>> {
    mask.iter().map(|&m| (0..width).map(|_| rng.sample::<f64, _>(StandardNormal) + SHIFT * f64::from(m)).collect()).collect()
}

fn series(rng: &mut ChaCha8Rng, mask: &[u8], channels: usize, phase: usize) -> Vec<Vec<f64>> {
    mask.iter()
        .enumerate()
        .map(|(t, &m)| {
            (0..channels)
                .map(|c| {
                    let angle = (t + phase) as f64 * std::f64::consts::TAU / 8.0 + c as f64;
                    angle.sin() + 0.1 * rng.sample::<f64, _>(StandardNormal) + SHIFT * f64::from(m)
                })
                .collect()
        })
        .collect()
}

/// Deterministic in `(profile shape, seed)`. Labels cover both classes
/// whenever the profile has labels on any split.
pub fn make_synthetic_sample(profile: &DatasetProfile, seed: u64) -> SyntheticSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = profile.n_features.max(1);
    let labeled = profile.has_labels || profile.eval_has_labels();
    let content = match profile.modality {
        Modality::Multivariate => {
            let mask = anomaly_mask(&mut rng, TABLE_ROWS);
            SampleContent::Table { x: gaussian_rows(&mut rng, &mask, width), y: labeled.then_some(mask) }
        }
        Modality::Graph => {
            let mask = anomaly_mask(&mut rng, GRAPH_NODES);
            let x = gaussian_rows(&mut rng, &mask, width);
            let mut pairs: Vec<(usize, usize)> = (0..GRAPH_NODES).flat_map(|u| (u + 1..GRAPH_NODES).map(move |v| (u, v))).collect();
            pairs.shuffle(&mut rng);
            pairs.truncate(GRAPH_EDGES);
            pairs.sort_unstable();
            SampleContent::Graph { x, edges: pairs, y: labeled.then_some(mask) }
        }
        Modality::TimeSeries => {
            let clean = vec![0u8; SERIES_STEPS];
            let train = series(&mut rng, &clean, width, 0);
            let mask = anomaly_mask(&mut rng, SERIES_STEPS);
            let test = series(&mut rng, &mask, width, SERIES_STEPS);
            SampleContent::Series { train, test, test_labels: mask }
        }
    };
    SyntheticSample { seed, content }
}

fn csv_table(header_prefix: &str, rows: &[Vec<f64>], labels: Option<&[u8]>) -> String {
    let width = rows.first().map_or(0, Vec::len);
    let mut out = (0..width).map(|j| format!("{header_prefix}{j}")).collect::<Vec<_>>().join(",");
    if labels.is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        out.push_str(&cells.join(","));
        if let Some(l) = labels {
            let _ = write!(out, ",{}", l[i]);
        }
        out.push('\n');
    }
    out
}

impl SyntheticSample {
    /// Rows, nodes, or test steps a script must score.
    pub fn n_eval(&self) -> usize {
        match &self.content {
            SampleContent::Table { x, .. } | SampleContent::Graph { x, .. } => x.len(),
            SampleContent::Series { test, .. } => test.len(),
        }
    }

    pub fn width(&self) -> usize {
        match &self.content {
            SampleContent::Table { x, .. } | SampleContent::Graph { x, .. } => x.first().map_or(0, Vec::len),
            SampleContent::Series { train, .. } => train.first().map_or(0, Vec::len),
        }
    }

    pub fn labels(&self) -> Option<&[u8]> {
        match &self.content {
            SampleContent::Table { y, .. } | SampleContent::Graph { y, .. } => y.as_deref(),
            SampleContent::Series { test_labels, .. } => Some(test_labels),
        }
    }

    /// Relative file names and contents; the first entry (or its parent
    /// directory for series) is the data path.
    pub fn files(&self) -> Vec<(PathBuf, String)> {
        match &self.content {
            SampleContent::Table { x, y } => vec![("sample.csv".into(), csv_table("f", x, y.as_deref()))],
            SampleContent::Graph { x, edges, y } => {
                let mut doc = serde_json::json!({
                    "node_features": x,
                    "edges": edges.iter().map(|&(u, v)| [u, v]).collect::<Vec<_>>(),
                });
                if let Some(y) = y {
                    doc["labels"] = serde_json::json!(y);
                }
                vec![("sample.json".into(), doc.to_string())]
            }
            SampleContent::Series { train, test, test_labels } => {
                let labels: String = std::iter::once("label\n".to_string()).chain(test_labels.iter().map(|l| format!("{l}\n"))).collect();
                vec![
                    ("sample/train.csv".into(), csv_table("c", train, None)),
                    ("sample/test.csv".into(), csv_table("c", test, None)),
                    ("sample/test_label.csv".into(), labels),
                ]
            }
        }
    }

    /// Writes the sample under `dir` and returns the path scripts load.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<PathBuf> {
        for (rel, text) in self.files() {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, text)?;
        }
        Ok(match &self.content {
            SampleContent::Series { .. } => dir.join("sample"),
            SampleContent::Table { .. } => dir.join("sample.csv"),
            SampleContent::Graph { .. } => dir.join("sample.json"),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processor::{load_dataset, DataFormat, SplitSummary, Supervision};

    fn profile(modality: Modality, width: usize, has_labels: bool) -> DatasetProfile {
        DatasetProfile {
            modality,
            format: DataFormat::Csv,
            n_samples: 500,
            n_features: width,
            n_edges: None,
            has_labels,
            label_prevalence: None,
            time_column: None,
            test: None,
            supervision: Supervision::Production,
        }
    }

    #[test]
    fn shapes_match_the_profile() {
        let s = make_synthetic_sample(&profile(Modality::Multivariate, 21, true), 7);
        let SampleContent::Table { x, y } = &s.content else { panic!() };
        assert_eq!((x.len(), x[0].len()), (16, 21));
        let y = y.as_ref().unwrap();
        assert!(y.contains(&0) && y.contains(&1));

        let g = make_synthetic_sample(&profile(Modality::Graph, 5, false), 7);
        let SampleContent::Graph { x, edges, y } = &g.content else { panic!() };
        assert_eq!((x.len(), x[0].len(), edges.len()), (12, 5, 24));
        assert!(y.is_none());
        assert!(edges.iter().all(|&(u, v)| u < v && v < 12));

        let t = make_synthetic_sample(&profile(Modality::TimeSeries, 3, false), 7);
        assert_eq!((t.n_eval(), t.width()), (24, 3));
    }

    #[test]
    fn test_labels_alone_make_the_sample_labeled() {
        let mut p = profile(Modality::Multivariate, 4, false);
        p.test = Some(SplitSummary { n_samples: 10, has_labels: true, label_prevalence: Some(0.1) });
        assert!(make_synthetic_sample(&p, 1).labels().is_some());
    }

    #[test]
    fn same_seed_same_bytes() {
        for modality in [Modality::Multivariate, Modality::Graph, Modality::TimeSeries] {
            let p = profile(modality, 6, true);
            assert_eq!(make_synthetic_sample(&p, 42).files(), make_synthetic_sample(&p, 42).files());
            assert_ne!(make_synthetic_sample(&p, 42).files(), make_synthetic_sample(&p, 43).files());
        }
    }

    #[test]
    fn written_samples_load_with_the_same_shape() {
        let dir = tempfile::tempdir().unwrap();
        for (modality, format) in [
            (Modality::Multivariate, DataFormat::Csv),
            (Modality::Graph, DataFormat::GraphBundle),
            (Modality::TimeSeries, DataFormat::TsBundle),
        ] {
            let sub = dir.path().join(modality.as_str());
            let s = make_synthetic_sample(&profile(modality, 6, true), 3);
            let path = s.write_to(&sub).unwrap();
            let ds = load_dataset(&path).unwrap();
            assert_eq!(ds.format, format);
            assert_eq!(ds.n_features(), 6);
            assert_eq!(ds.n_eval(), s.n_eval());
            assert_eq!(ds.eval_labels(), s.labels());
        }
    }

    proptest::proptest! {
        #[test]
        fn rows_stay_small(width in 1usize..64, seed in proptest::prelude::any::<u64>()) {
            for modality in [Modality::Multivariate, Modality::Graph, Modality::TimeSeries] {
                let s = make_synthetic_sample(&profile(modality, width, true), seed);
                proptest::prop_assert!(s.n_eval() <= 32);
                proptest::prop_assert_eq!(s.width(), width);
                let labels = s.labels().unwrap();
                proptest::prop_assert!(labels.contains(&0) && labels.contains(&1));
            }
        }
    }
}
