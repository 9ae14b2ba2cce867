//! Dataset-by-model grids run as independent sessions, and scoring of
//! recommended models against a metric table.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::llm::{LedgerEntry, LlmGateway, PriceTable, TokenLedger};
use crate::memory::LongTermCache;
use crate::processor::{load_dataset, profile_datasets, DatasetError};
use crate::registry::{LibraryId, ModelName, Registry};
use crate::selector::{recommend_model, SelectorError};
use crate::session::{dataset_reference, run_session, SessionOptions, SessionOutcome, Stage};

/// One (dataset, model) session of a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub dataset: String,
    pub model: ModelName,
    pub success: bool,
    #[serde(default)]
    pub failed_stage: Option<Stage>,
    #[serde(default)]
    pub cause: Option<String>,
    /// Generation seconds, instruction receipt to last script saved.
    pub generation_time: f64,
    #[serde(default)]
    pub evaluation_time: Option<f64>,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub web_search_calls: u64,
    /// Token charges only.
    pub token_cost: f64,
    /// Token charges plus search fees.
    pub cost: f64,
    pub reviews: usize,
    /// Primary metric of the library, when the pair was evaluated.
    #[serde(default)]
    pub metric: Option<f64>,
}

impl PairRow {
    /// Summarizes a finished session. Generation-phase calls only, so
    /// evaluation and tuning spend does not inflate the averages.
    pub fn from_outcome(
        dataset: &str,
        model: &ModelName,
        library: LibraryId,
        registry: &Registry,
        prices: &PriceTable,
        outcome: &SessionOutcome,
    ) -> Self {
        let entries = &outcome.ledger().entries()[..outcome.generation_calls];
        let sum = |f: fn(&LedgerEntry) -> u64| entries.iter().map(f).sum::<u64>();
        let failure = outcome.failures.first();
        PairRow {
            dataset: dataset.to_string(),
            model: model.clone(),
            success: outcome.succeeded(),
            failed_stage: failure.filter(|_| !outcome.succeeded()).map(|f| f.stage),
            cause: failure.filter(|_| !outcome.succeeded()).map(|f| f.cause.clone()),
            generation_time: outcome.generation_time.unwrap_or(0.0),
            evaluation_time: outcome.evaluation_time,
            input_tokens: sum(|e| e.input_tokens),
            output_tokens: sum(|e| e.output_tokens),
            web_search_calls: sum(|e| u64::from(e.web_search_calls)),
            token_cost: entries.iter().map(|e| prices.cost(&e.model_id, e.input_tokens, e.output_tokens, 0)).sum(),
            cost: entries.iter().map(|e| e.cost).sum(),
            reviews: outcome.workspace.reviews(model).len(),
            metric: outcome.workspace.evaluation(model).and_then(|r| r.metric(registry.library(library).primary_metric)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub library: LibraryId,
    pub pairs_attempted: usize,
    pub pairs_succeeded: usize,
    /// Percent.
    pub success_rate: f64,
    pub mean_time: f64,
    pub mean_input_tokens: f64,
    pub mean_output_tokens: f64,
    /// Mean token cost in US$; search fees are reported per pair.
    pub mean_cost: f64,
    pub per_pair: Vec<PairRow>,
}

fn mean(values: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        values.sum::<f64>() / n as f64
    }
}

impl BenchmarkReport {
    /// Aggregates over every attempted pair, failed ones included.
    pub fn from_rows(library: LibraryId, rows: Vec<PairRow>) -> Self {
        let n = rows.len();
        let succeeded = rows.iter().filter(|r| r.success).count();
        BenchmarkReport {
            library,
            pairs_attempted: n,
            pairs_succeeded: succeeded,
            success_rate: if n == 0 { 0.0 } else { 100.0 * succeeded as f64 / n as f64 },
            mean_time: mean(rows.iter().map(|r| r.generation_time), n),
            mean_input_tokens: mean(rows.iter().map(|r| r.input_tokens as f64), n),
            mean_output_tokens: mean(rows.iter().map(|r| r.output_tokens as f64), n),
            mean_cost: mean(rows.iter().map(|r| r.token_cost), n),
            per_pair: rows,
        }
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {} of {} pairs succeeded ({:.1}%), mean time {:.1} s, mean tokens {:.0} in / {:.0} out, mean cost ${:.4}",
            self.library,
            self.pairs_succeeded,
            self.pairs_attempted,
            self.success_rate,
            self.mean_time,
            self.mean_input_tokens,
            self.mean_output_tokens,
            self.mean_cost
        )
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "dataset",
            "model",
            "success",
            "failed_stage",
            "cause",
            "generation_time",
            "evaluation_time",
            "input_tokens",
            "output_tokens",
            "web_search_calls",
            "token_cost",
            "cost",
            "reviews",
            "metric",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.per_pair {
            w.write_record([
                r.dataset.clone(),
                r.model.to_string(),
                r.success.to_string(),
                r.failed_stage.map(|s| s.banner_name().to_string()).unwrap_or_default(),
                r.cause.clone().unwrap_or_default(),
                r.generation_time.to_string(),
                opt(r.evaluation_time),
                r.input_tokens.to_string(),
                r.output_tokens.to_string(),
                r.web_search_calls.to_string(),
                r.token_cost.to_string(),
                r.cost.to_string(),
                r.reviews.to_string(),
                opt(r.metric),
            ])?;
        }
        w.flush()
    }

    /// Writes `benchmark_<library>.csv` and `.json` into `dir`.
    pub fn write(&self, dir: &Path) -> io::Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("benchmark_{}.csv", self.library));
        let json_path = dir.join(format!("benchmark_{}.json", self.library));
        self.write_csv(&csv_path)?;
        let text = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(&json_path, text + "\n")?;
        Ok((csv_path, json_path))
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkOptions {
    pub session: SessionOptions,
    /// Sessions run at once. Replay of a grid whose sessions share a cold
    /// cache needs 1, since cache hits change which calls are made.
    pub parallel: usize,
    /// Each session's stdout goes to `<log_dir>/<model>_<dataset>.log`.
    pub log_dir: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum BenchmarkError {
    #[error("{model} is not in the {library} roster")]
    UnknownModel { library: LibraryId, model: ModelName },
    #[error("cannot start {0} benchmark workers: {1}")]
    Workers(usize, String),
}

/// Instruction used for one grid cell.
pub fn pair_instruction(data_root: &Path, dataset: &str, model: &ModelName) -> String {
    let target = dataset_reference(data_root, dataset)
        .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .unwrap_or_else(|| dataset.to_string());
    format!("Run {model} on {target}")
}

/// Runs every (dataset, model) pair as its own session. A failing pair is
/// recorded and the grid continues; rows come back in grid order.
pub fn run_benchmark(
    gateway: &LlmGateway,
    registry: &Registry,
    cache: &LongTermCache,
    library: LibraryId,
    datasets: &[String],
    models: &[ModelName],
    options: &BenchmarkOptions,
) -> Result<BenchmarkReport, BenchmarkError> {
    let spec = registry.library(library);
    if let Some(model) = models.iter().find(|m| !spec.contains(m)) {
        return Err(BenchmarkError::UnknownModel { library, model: model.clone() });
    }
    let pairs: Vec<(&String, &ModelName)> = datasets.iter().flat_map(|d| models.iter().map(move |m| (d, m))).collect();
    let run_pair = |(dataset, model): &(&String, &ModelName)| -> PairRow {
        let instruction = pair_instruction(&options.session.data_root, dataset, model);
        let mut out = Vec::new();
        let outcome = run_session(gateway, registry, cache, &options.session, &instruction, &mut out);
        if let Some(dir) = &options.log_dir {
            let path = dir.join(format!("{model}_{dataset}.log"));
            if let Err(e) = fs::create_dir_all(dir).and_then(|_| fs::write(&path, &out)) {
                log::warn!("cannot write {}: {e}", path.display());
            }
        }
        let row = PairRow::from_outcome(dataset, model, library, registry, gateway.prices(), &outcome);
        log::info!("{model} on {dataset}: {}", if row.success { "ok" } else { "failed" });
        row
    };
    let rows: Vec<PairRow> = if options.parallel <= 1 {
        pairs.iter().map(run_pair).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(options.parallel)
            .build()
            .map_err(|e| BenchmarkError::Workers(options.parallel, e.to_string()))?
            .install(|| pairs.par_iter().map(run_pair).collect())
    };
    Ok(BenchmarkReport::from_rows(library, rows))
}

/// Per-(dataset, model) metric values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    values: BTreeMap<String, BTreeMap<ModelName, f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum MetricTableError {
    #[error("cannot read metric table {path}: {reason}")]
    Read { path: PathBuf, reason: String },
}

#[derive(Debug, Deserialize)]
struct MetricRecord {
    dataset: String,
    model: ModelName,
    #[serde(default)]
    metric: Option<f64>,
}

impl MetricTable {
    pub fn insert(&mut self, dataset: impl Into<String>, model: ModelName, value: f64) {
        self.values.entry(dataset.into()).or_default().insert(model, value);
    }

    pub fn get(&self, dataset: &str, model: &ModelName) -> Option<f64> {
        self.values.get(dataset)?.get(model).copied()
    }

    pub fn datasets(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// Evaluated pairs of a benchmark run.
    pub fn from_report(report: &BenchmarkReport) -> Self {
        let mut table = MetricTable::default();
        for r in &report.per_pair {
            if let Some(v) = r.metric {
                table.insert(r.dataset.clone(), r.model.clone(), v);
            }
        }
        table
    }

    /// Reads a CSV with `dataset`, `model` and `metric` columns; a benchmark
    /// CSV qualifies. Rows with an empty metric are skipped.
    pub fn read_csv(path: &Path) -> Result<Self, MetricTableError> {
        let err = |reason: String| MetricTableError::Read { path: path.to_path_buf(), reason };
        let mut reader = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
        let mut table = MetricTable::default();
        for record in reader.deserialize::<MetricRecord>() {
            let r = record.map_err(|e| err(e.to_string()))?;
            if let Some(v) = r.metric {
                table.insert(r.dataset, r.model, v);
            }
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionScore {
    pub dataset: String,
    /// Resolved votes in query order.
    pub votes: Vec<ModelName>,
    /// Mean metric over the votes, duplicates counted.
    pub vote_mean: f64,
    pub best: f64,
    pub best_model: ModelName,
    /// Mean over the whole roster.
    pub average_baseline: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum SelectionEvalError {
    #[error("no metric for {model} on {dataset}")]
    MissingMetric { dataset: String, model: ModelName },
    #[error("no resolved votes for {0}")]
    NoVotes(String),
    #[error("{dataset}: {source}")]
    Dataset {
        dataset: String,
        #[source]
        source: DatasetError,
    },
    #[error("dataset {0} not found under the data root")]
    DatasetNotFound(String),
    #[error(transparent)]
    Selector(#[from] SelectorError),
}

/// Scores `votes` against the roster on one dataset. Every roster model
/// needs a metric, since the baseline averages all of them.
pub fn score_votes(
    table: &MetricTable,
    dataset: &str,
    votes: &[ModelName],
    roster: &[ModelName],
) -> Result<SelectionScore, SelectionEvalError> {
    let metric = |model: &ModelName| {
        table.get(dataset, model).ok_or_else(|| SelectionEvalError::MissingMetric { dataset: dataset.to_string(), model: model.clone() })
    };
    if votes.is_empty() {
        return Err(SelectionEvalError::NoVotes(dataset.to_string()));
    }
    let roster_values = roster.iter().map(|m| metric(m).map(|v| (m, v))).collect::<Result<Vec<_>, _>>()?;
    let vote_values = votes.iter().map(metric).collect::<Result<Vec<_>, _>>()?;
    let (best_model, best) = roster_values
        .iter()
        .fold(None::<(&ModelName, f64)>, |acc, &(m, v)| match acc {
            Some((_, b)) if b >= v => acc,
            _ => Some((m, v)),
        })
        .expect("roster is non-empty");
    Ok(SelectionScore {
        dataset: dataset.to_string(),
        votes: votes.to_vec(),
        vote_mean: vote_values.iter().sum::<f64>() / vote_values.len() as f64,
        best,
        best_model: best_model.clone(),
        average_baseline: roster_values.iter().map(|(_, v)| v).sum::<f64>() / roster_values.len() as f64,
    })
}

/// Asks for `n_queries` recommendations per dataset and scores them. Table
/// coverage is checked before any model call.
#[allow(clippy::too_many_arguments)]
pub fn model_selection_eval(
    gateway: &LlmGateway,
    ledger: &mut TokenLedger,
    registry: &Registry,
    library: LibraryId,
    data_root: &Path,
    datasets: &[String],
    table: &MetricTable,
    n_queries: usize,
) -> Result<Vec<SelectionScore>, SelectionEvalError> {
    let spec = registry.library(library);
    let roster: Vec<ModelName> = spec.roster().cloned().collect();
    for dataset in datasets {
        if let Some(model) = roster.iter().find(|m| table.get(dataset, m).is_none()) {
            return Err(SelectionEvalError::MissingMetric { dataset: dataset.clone(), model: model.clone() });
        }
    }
    datasets
        .iter()
        .map(|dataset| {
            let path = dataset_reference(data_root, dataset).ok_or_else(|| SelectionEvalError::DatasetNotFound(dataset.clone()))?;
            let data_err = |source| SelectionEvalError::Dataset { dataset: dataset.clone(), source };
            let data = load_dataset(&path).map_err(data_err)?;
            let profile = profile_datasets(&data, None, spec.modality).map_err(data_err)?;
            let selection = recommend_model(gateway, ledger, registry, library, &profile, n_queries)?;
            score_votes(table, dataset, &selection.models, &roster)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(success: bool, time: f64, input: u64, output: u64, cost: f64) -> PairRow {
        PairRow {
            dataset: "d".into(),
            model: ModelName::new("m"),
            success,
            failed_stage: (!success).then_some(Stage::CodeReviewer),
            cause: None,
            generation_time: time,
            evaluation_time: None,
            input_tokens: input,
            output_tokens: output,
            web_search_calls: 1,
            token_cost: cost,
            cost: cost + 0.035,
            reviews: 1,
            metric: None,
        }
    }

    #[test]
    fn ten_pairs_with_one_failure() {
        let mut rows: Vec<PairRow> = (0..9).map(|i| row(true, i as f64, 100, 10, 0.01)).collect();
        rows.push(row(false, 30.0, 400, 40, 0.04));
        let r = BenchmarkReport::from_rows(LibraryId::Pyod, rows);
        assert_eq!((r.pairs_succeeded, r.pairs_attempted), (9, 10));
        assert_eq!(r.success_rate, 90.0);
        assert_eq!(r.mean_time, (36.0 + 30.0) / 10.0);
        assert_eq!(r.mean_input_tokens, 130.0);
        assert_eq!(r.mean_output_tokens, 13.0);
        assert!(r.summary().contains("9 of 10 pairs succeeded (90.0%)"));
    }

    #[test]
    fn empty_grid_reports_zero() {
        let r = BenchmarkReport::from_rows(LibraryId::Tslib, vec![]);
        assert_eq!(r.success_rate, 0.0);
        assert_eq!(r.mean_cost, 0.0);
    }

    #[test]
    fn csv_round_trips_into_a_metric_table() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = row(true, 1.0, 1, 1, 0.0);
        a.metric = Some(0.75);
        let mut b = row(false, 1.0, 1, 1, 0.0);
        b.model = ModelName::new("n");
        let report = BenchmarkReport::from_rows(LibraryId::Pyod, vec![a, b]);
        let (csv_path, json_path) = report.write(dir.path()).unwrap();
        let table = MetricTable::read_csv(&csv_path).unwrap();
        assert_eq!(table.get("d", &ModelName::new("m")), Some(0.75));
        assert_eq!(table.get("d", &ModelName::new("n")), None);
        assert_eq!(table, MetricTable::from_report(&report));
        let back: BenchmarkReport = serde_json::from_str(&fs::read_to_string(json_path).unwrap()).unwrap();
        assert_eq!(back, report);
    }

    fn table() -> (MetricTable, Vec<ModelName>) {
        let roster: Vec<ModelName> = ["A", "B", "C"].into_iter().map(ModelName::new).collect();
        let mut t = MetricTable::default();
        for (m, v) in roster.iter().zip([0.6, 0.9, 0.75]) {
            t.insert("x", m.clone(), v);
        }
        (t, roster)
    }

    #[test]
    fn votes_on_the_best_model_score_the_best() {
        let (t, roster) = table();
        let b = ModelName::new("B");
        let s = score_votes(&t, "x", &[b.clone(), b.clone(), b.clone()], &roster).unwrap();
        assert_eq!(s.vote_mean, s.best);
        assert_eq!(s.best_model, b);
        assert!((s.average_baseline - 0.75).abs() < 1e-15);
    }

    #[test]
    fn uniform_votes_average_to_the_baseline() {
        // Every ordered triple of roster picks, equally likely.
        let (t, roster) = table();
        let mut total = 0.0;
        let mut n = 0;
        for a in &roster {
            for b in &roster {
                for c in &roster {
                    total += score_votes(&t, "x", &[a.clone(), b.clone(), c.clone()], &roster).unwrap().vote_mean;
                    n += 1;
                }
            }
        }
        let baseline = score_votes(&t, "x", &roster[..1], &roster).unwrap().average_baseline;
        assert!((total / n as f64 - baseline).abs() < 1e-12);
    }

    #[test]
    fn uncovered_pairs_are_missing_metrics() {
        let (t, mut roster) = table();
        roster.push(ModelName::new("D"));
        let err = score_votes(&t, "x", &roster[..1], &roster).unwrap_err();
        assert!(matches!(err, SelectionEvalError::MissingMetric { ref model, .. } if model.as_str() == "D"));
        assert!(matches!(score_votes(&t, "y", &roster[..1], &roster[..1]), Err(SelectionEvalError::MissingMetric { .. })));
    }
}
