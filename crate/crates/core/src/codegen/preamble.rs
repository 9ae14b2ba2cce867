//! Loader preamble placed at the top of every generated script.
//!
//! The preamble owns data access, parameter defaults and result writing, so
//! the model-written body is the same for dry runs and real runs. Paths and
//! parameters can be redirected through environment variables:
//!
//! | variable                    | effect                                  |
//! |-----------------------------|-----------------------------------------|
//! | `AD_AGENT_DATA_OVERRIDE`    | train and test both read this path      |
//! | `AD_AGENT_TRAIN_OVERRIDE`   | train path (wins over the data override)|
//! | `AD_AGENT_TEST_OVERRIDE`    | test path (wins over the data override) |
//! | `AD_AGENT_RESULT_PATH`      | where `write_result` writes             |
//! | `AD_AGENT_PARAMS_OVERRIDE`  | JSON object merged into `PARAMS`        |

use std::path::Path;

use crate::info_miner::{params_to_python, ParamMap, ParamValue};
use crate::registry::{LibraryId, Modality};

pub const DATA_OVERRIDE_ENV: &str = "AD_AGENT_DATA_OVERRIDE";
pub const TRAIN_OVERRIDE_ENV: &str = "AD_AGENT_TRAIN_OVERRIDE";
pub const TEST_OVERRIDE_ENV: &str = "AD_AGENT_TEST_OVERRIDE";
pub const RESULT_PATH_ENV: &str = "AD_AGENT_RESULT_PATH";
pub const PARAMS_OVERRIDE_ENV: &str = "AD_AGENT_PARAMS_OVERRIDE";

/// Line separating the preamble from the model-written body.
pub const BODY_MARKER: &str = "# ---- pipeline body ----";

/// What the body can rely on; quoted in generation prompts.
pub const PREAMBLE_API: &str = "The script starts with a fixed preamble that you must not repeat. It defines:
- `PARAMS`: dict of constructor keyword arguments (documented defaults merged with user overrides). Pass it as `**PARAMS`; add required arguments that have no default explicitly.
- `load_train()` / `load_test()`: for tabular data return `(X, y)` with `X` a float ndarray and `y` an int ndarray or None; for graph data return one graph object with `x`, `edge_index` (2 x E) and `y`; for time series return `(values, labels)` where train labels are None.
- `write_result(scores, labels_pred, metrics=None)`: must be called once with one anomaly score and one 0/1 prediction per test sample.
- `np` is numpy. `MODEL_NAME`, `LIBRARY` and `MODALITY` are strings.
Do not read files or environment variables directly.";

pub struct PreambleSpec<'a> {
    pub model: &'a str,
    pub library: LibraryId,
    pub modality: Modality,
    pub train_path: &'a Path,
    pub test_path: Option<&'a Path>,
    pub default_result_path: &'a Path,
    pub params: &'a ParamMap,
    pub evaluate: bool,
}

fn py_str(s: &str) -> String {
    ParamValue::Str(s.to_string()).to_python()
}

fn py_path(p: &Path) -> String {
    py_str(&p.to_string_lossy())
}

const LOADERS: &str = r#"_TIME_HEADERS = {"timestamp", "time", "date", "datetime", "ts", "time_stamp", "timestamp_(min)"}
_LAST_TEST_LABELS = None


def _is_time(header, value):
    import re
    return header.strip().lower() in _TIME_HEADERS or bool(re.match(r"^\d{4}-\d{2}-\d{2}", value.strip()))


def _read_csv(path):
    import csv
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    first_is_time = bool(body) and _is_time(header[0], body[0][0])
    cols = list(range(len(header)))
    labels = None
    if len(header) > 1 and header[-1].lower() in ("label", "y"):
        labels = np.array([int(float(r[-1])) for r in body], dtype=int)
        cols = cols[:-1]
    if first_is_time and len(header) > 1:
        cols = cols[1:]
    values = np.array([[float(r[c]) for c in cols] for r in body], dtype=float).reshape(len(body), len(cols))
    return values, labels


def _series_labels(path):
    values, labels = _read_csv(path)
    if labels is None:
        labels = values[:, -1]
    return np.asarray(labels).astype(int).ravel()


class _Graph:
    def __init__(self, x, edge_index, y):
        self.x = x
        self.edge_index = edge_index
        self.y = y
        self.num_nodes = len(x)


def _graph(path):
    with open(path) as fh:
        raw = json.load(fh)
    x = np.asarray(raw["node_features"], dtype=float)
    edge_index = np.asarray(raw["edges"], dtype=int).reshape(-1, 2).T
    y = raw.get("labels")
    y = None if y is None else np.asarray(y, dtype=int)
    try:
        # PyG first: without it, importing torch alone is wasted time.
        from torch_geometric.data import Data
        import torch
    except ImportError:
        return _Graph(x, edge_index, y)
    data = Data(x=torch.tensor(x, dtype=torch.float), edge_index=torch.tensor(edge_index, dtype=torch.long))
    if y is not None:
        data.y = torch.tensor(y, dtype=torch.long)
    return data


def _load(path, part):
    global _LAST_TEST_LABELS
    if os.path.isdir(path):
        if part == "train":
            values, _ = _read_csv(os.path.join(path, "train.csv"))
            return values, None
        values, _ = _read_csv(os.path.join(path, "test.csv"))
        labels = _series_labels(os.path.join(path, "test_label.csv"))
        _LAST_TEST_LABELS = labels
        return values, labels
    ext = os.path.splitext(path)[1].lower()
    if ext == ".json":
        graph = _graph(path)
        if part == "test":
            y = getattr(graph, "y", None)
            _LAST_TEST_LABELS = None if y is None else np.asarray(y).astype(int).ravel()
        return graph
    if ext == ".mat":
        from scipy.io import loadmat
        raw = loadmat(path)
        X = np.asarray(raw["X"], dtype=float)
        y = np.asarray(raw["y"]).astype(int).ravel() if "y" in raw else None
    elif ext == ".npz":
        raw = np.load(path)
        X = np.asarray(raw["X"], dtype=float)
        y = np.asarray(raw["y"]).astype(int).ravel() if "y" in raw.files else None
    elif ext == ".csv":
        X, y = _read_csv(path)
    else:
        raise ValueError("unsupported dataset format: " + path)
    if part == "test":
        _LAST_TEST_LABELS = y
    return X, y


def load_train():
    return _load(TRAIN_PATH, "train")


def load_test():
    return _load(TEST_PATH or TRAIN_PATH, "test")


def _auroc(scores, labels):
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=float)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def write_result(scores, labels_pred, metrics=None):
    scores = np.asarray(scores, dtype=float).ravel()
    labels_pred = np.asarray(labels_pred).astype(int).ravel()
    if metrics is None:
        metrics = {}
        if EVALUATE and _LAST_TEST_LABELS is not None and len(_LAST_TEST_LABELS) == len(scores):
            auroc = _auroc(scores, np.asarray(_LAST_TEST_LABELS))
            if auroc is not None:
                metrics["auroc"] = auroc
    directory = os.path.dirname(os.path.abspath(RESULT_PATH))
    os.makedirs(directory, exist_ok=True)
    with open(RESULT_PATH, "w") as fh:
        json.dump({"scores": scores.tolist(), "labels_pred": labels_pred.tolist(), "metrics": metrics}, fh)
"#;

/// Renders the preamble, ending with [`BODY_MARKER`].
pub fn render_preamble(spec: &PreambleSpec<'_>) -> String {
    let test = spec.test_path.map_or_else(|| "None".to_string(), py_path);
    format!(
        "import json\nimport os\n\nimport numpy as np\n\n\
MODEL_NAME = {model}\n\
LIBRARY = {library}\n\
MODALITY = {modality}\n\
EVALUATE = {evaluate}\n\
TRAIN_PATH = os.environ.get(\"{train_env}\") or os.environ.get(\"{data_env}\") or {train}\n\
TEST_PATH = os.environ.get(\"{test_env}\") or os.environ.get(\"{data_env}\") or {test}\n\
RESULT_PATH = os.environ.get(\"{result_env}\") or {result}\n\
PARAMS = {params}\n\
PARAMS.update(json.loads(os.environ.get(\"{params_env}\") or \"{{}}\"))\n\n\
{loaders}\n\n{marker}\n",
        model = py_str(spec.model),
        library = py_str(spec.library.as_str()),
        modality = py_str(spec.modality.as_str()),
        evaluate = if spec.evaluate { "True" } else { "False" },
        train_env = TRAIN_OVERRIDE_ENV,
        test_env = TEST_OVERRIDE_ENV,
        data_env = DATA_OVERRIDE_ENV,
        result_env = RESULT_PATH_ENV,
        params_env = PARAMS_OVERRIDE_ENV,
        train = py_path(spec.train_path),
        test = test,
        result = py_path(spec.default_result_path),
        params = params_to_python(spec.params),
        loaders = LOADERS.trim_end(),
        marker = BODY_MARKER,
    )
}

/// Splits a full script into (preamble, body).
pub fn split_script(source: &str) -> (&str, &str) {
    match source.find(BODY_MARKER) {
        Some(i) => {
            let body_start = i + BODY_MARKER.len();
            (&source[..body_start], source[body_start..].trim_start_matches('\n'))
        }
        None => ("", source),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preamble_embeds_paths_and_params() {
        let mut params = ParamMap::new();
        params.insert("contamination".into(), ParamValue::Float(0.1));
        let text = render_preamble(&PreambleSpec {
            model: "VAE",
            library: LibraryId::Pyod,
            modality: Modality::Multivariate,
            train_path: Path::new("./data/cardio.mat"),
            test_path: None,
            default_result_path: Path::new("./results/VAE_cardio_result.json"),
            params: &params,
            evaluate: false,
        });
        assert!(text.contains("or './data/cardio.mat'\n"));
        assert!(
            text.contains("TEST_PATH = os.environ.get(\"AD_AGENT_TEST_OVERRIDE\") or os.environ.get(\"AD_AGENT_DATA_OVERRIDE\") or None\n")
        );
        assert!(text.contains("PARAMS = {'contamination': 0.1}\n"));
        assert!(text.ends_with(&format!("{BODY_MARKER}\n")));
        let full = format!("{text}print(1)\n");
        let (pre, body) = split_script(&full);
        assert_eq!(body, "print(1)\n");
        assert_eq!(pre.len() + 1, text.len());
    }
}
