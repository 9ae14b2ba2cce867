//! Offline stand-in for the language model.
//!
//! [`SimulatedLlm`] answers every agent request from a bundled model catalog
//! with fixed token counts and latencies, so sessions, benchmarks and
//! recorded transcripts are reproducible without network access. Generated
//! scripts target the catalog-backed Python stubs under `fixtures/pystubs`.
//! A [`FaultPlan`] injects known generation mistakes per (model, dataset) so
//! the review loop has something to repair.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};

use chrono::{DateTime, Utc};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::info_miner::{render_doc, AttributeSpec, DocSource, ModelDocSummary, ParamSpec, ParamValue};
use crate::llm::{fenced_block, AgentName, Backend, BackendError, LlmRequest, LlmResponse};
use crate::processor::parse_instruction_rules;
use crate::registry::{LibraryId, Modality, ModelName};

const CATALOG_JSON: &str = include_str!("../simulated/catalog.json");

/// Read by the Python stubs to find the catalog.
pub const STUB_CATALOG_ENV: &str = "AD_AGENT_STUB_CATALOG";

/// Bundled catalog file on disk.
pub fn catalog_path() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/simulated/catalog.json"))
}

/// Directory holding the `pyod`, `pygod` and `tslib` stub packages.
pub fn stub_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures/pystubs"))
}

/// Environment that makes sandboxed scripts import the stubs.
pub fn stub_env() -> Vec<(String, String)> {
    let mut path = stub_dir().to_string_lossy().into_owned();
    if let Some(existing) = std::env::var_os("PYTHONPATH").filter(|p| !p.is_empty()) {
        path.push(':');
        path.push_str(&existing.to_string_lossy());
    }
    vec![("PYTHONPATH".into(), path), (STUB_CATALOG_ENV.into(), catalog_path().to_string_lossy().into_owned())]
}

#[derive(Debug, Clone, Deserialize)]
struct Catalog {
    libraries: BTreeMap<String, LibraryCatalog>,
}

#[derive(Debug, Clone, Deserialize)]
struct LibraryCatalog {
    search_latency: f64,
    recommendations: Vec<String>,
    common_params: Vec<serde_json::Map<String, Value>>,
    #[serde(default)]
    common_attributes: Vec<CatalogAttribute>,
    models: BTreeMap<String, CatalogModel>,
}

#[derive(Debug, Clone, Deserialize)]
struct CatalogModel {
    module: String,
    class: String,
    description: String,
    params: Vec<serde_json::Map<String, Value>>,
    #[serde(default)]
    attributes: Vec<CatalogAttribute>,
}

#[derive(Debug, Clone, Deserialize)]
struct CatalogAttribute {
    name: String,
    #[serde(rename = "type")]
    type_text: String,
    description: String,
}

fn catalog() -> &'static Catalog {
    static CATALOG: OnceLock<Catalog> = OnceLock::new();
    CATALOG.get_or_init(|| serde_json::from_str(CATALOG_JSON).expect("bundled catalog parses"))
}

fn library_catalog(library: LibraryId) -> &'static LibraryCatalog {
    &catalog().libraries[library.as_str()]
}

fn catalog_model(library: LibraryId, model: &str) -> Option<&'static CatalogModel> {
    library_catalog(library).models.get(model)
}

fn param_spec(raw: &serde_json::Map<String, Value>) -> ParamSpec {
    let text = |k: &str| raw.get(k).and_then(Value::as_str).unwrap_or_default().to_string();
    let default = raw.get("default").map(|v| serde_json::from_value::<ParamValue>(v.clone()).expect("catalog defaults are literals"));
    ParamSpec::new(text("name"), text("type"), default).with_description(text("description"))
}

fn usage_notes(library: LibraryId, model: &CatalogModel) -> String {
    let import = format!("Import with `from {} import {}`.", model.module, model.class);
    let api = match library {
        LibraryId::Pyod => "Call `fit(X_train)`, then `decision_function(X_test)` for scores and `predict(X_test)` for 0/1 labels.",
        LibraryId::Pygod => {
            "Pass a graph object with `x` and `edge_index` to `fit(data)`, then call `decision_function(data)` and `predict(data)`."
        }
        LibraryId::Tslib => {
            "Construct with `enc_in` set to the number of channels, call `fit(train)`, then `decision_function(test)` and `predict(test)`."
        }
    };
    format!("{import} {api}")
}

/// Documentation of `model` as the catalog describes it.
pub fn catalog_doc(library: LibraryId, model: &str, now: DateTime<Utc>) -> Option<ModelDocSummary> {
    let lib = library_catalog(library);
    let entry = lib.models.get(model)?;
    let attrs = lib.common_attributes.iter().chain(&entry.attributes).map(|a| AttributeSpec {
        name: a.name.clone(),
        type_text: a.type_text.clone(),
        description: a.description.clone(),
    });
    Some(ModelDocSummary {
        model: ModelName::new(model),
        library,
        description: entry.description.clone(),
        init_params: lib.common_params.iter().chain(&entry.params).map(param_spec).collect(),
        attributes: attrs.collect(),
        usage_notes: usage_notes(library, entry),
        source: DocSource::Web,
        retrieved_at: now,
    })
}

/// A generation mistake the simulator can make.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Omits a required constructor argument.
    MissingArgument,
    /// Passes an undocumented keyword.
    BadKeyword,
    /// Imports from a module that does not exist.
    WrongImport,
    /// Feeds the model data that breaks one of its input constraints.
    DataConstraint,
    /// Never terminates.
    Timeout,
}

impl FaultKind {
    pub const ALL: [FaultKind; 5] =
        [FaultKind::MissingArgument, FaultKind::BadKeyword, FaultKind::WrongImport, FaultKind::DataConstraint, FaultKind::Timeout];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    pub kind: FaultKind,
    /// Whether a repair request fixes it; otherwise every revision repeats it.
    pub repairable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct FaultRule {
    model: ModelName,
    /// `None` matches every dataset.
    dataset: Option<String>,
    fault: Fault,
}

/// Faults keyed by model and dataset stem; the first matching rule wins.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultPlan {
    rules: Vec<FaultRule>,
}

impl FaultPlan {
    pub fn none() -> Self {
        FaultPlan::default()
    }

    /// DeepSVDD's required `n_features` and Pyraformer's window constraint
    /// are fixed on review; GAAN's label handling on four graph datasets is
    /// not.
    pub fn typical() -> Self {
        let mut plan = FaultPlan::none().with("DeepSVDD", None, FaultKind::MissingArgument, true).with(
            "Pyraformer",
            None,
            FaultKind::DataConstraint,
            true,
        );
        for ds in ["books", "disney", "enron", "reddit"] {
            plan = plan.with("GAAN", Some(ds), FaultKind::DataConstraint, false);
        }
        plan
    }

    pub fn with(mut self, model: &str, dataset: Option<&str>, kind: FaultKind, repairable: bool) -> Self {
        self.rules.push(FaultRule {
            model: ModelName::new(model),
            dataset: dataset.map(str::to_string),
            fault: Fault { kind, repairable },
        });
        self
    }

    pub fn lookup(&self, model: &str, dataset: &str) -> Option<Fault> {
        self.rules.iter().find(|r| r.model.as_str() == model && r.dataset.as_deref().map_or(true, |d| d == dataset)).map(|r| r.fault)
    }
}

/// Token counts and latency charged for one simulated reply.
#[derive(Debug, Clone, Copy)]
struct Usage {
    input: u64,
    output: u64,
    latency: f64,
}

const PARSE: Usage = Usage { input: 702, output: 96, latency: 1.4 };
const MODALITY: Usage = Usage { input: 250, output: 3, latency: 0.6 };
const DOCS: Usage = Usage { input: 1130, output: 318, latency: 0.0 };
const RECOMMEND: Usage = Usage { input: 410, output: 35, latency: 2.1 };
const GENERATE: Usage = Usage { input: 1440, output: 253, latency: 5.2 };
const REPAIR: Usage = Usage { input: 1820, output: 260, latency: 5.6 };
const REVIEW: Usage = Usage { input: 520, output: 90, latency: 1.3 };
const PROPOSE: Usage = Usage { input: 600, output: 80, latency: 1.8 };

fn reply(content: String, usage: Usage) -> LlmResponse {
    LlmResponse { content, input_tokens: usage.input, output_tokens: usage.output, latency: usage.latency, web_search_calls: 0 }
}

/// Deterministic model stand-in; see the module docs.
#[derive(Debug, Default)]
pub struct SimulatedLlm {
    faults: FaultPlan,
    /// Recommendation cursor per library.
    picks: Mutex<BTreeMap<LibraryId, usize>>,
}

impl SimulatedLlm {
    pub fn new(faults: FaultPlan) -> Self {
        SimulatedLlm { faults, picks: Mutex::default() }
    }

    pub fn faults(&self) -> &FaultPlan {
        &self.faults
    }
}

fn str_field<'a>(ctx: &'a Value, key: &str) -> Result<&'a str, BackendError> {
    ctx.get(key).and_then(Value::as_str).ok_or_else(|| BackendError::Unavailable(format!("simulated request lacks `{key}`")))
}

fn library_field(ctx: &Value) -> Result<LibraryId, BackendError> {
    str_field(ctx, "library")?.parse().map_err(|_| BackendError::Unavailable("simulated request names an unknown library".into()))
}

impl Backend for SimulatedLlm {
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, BackendError> {
        let user = request.last_user_content().unwrap_or_default();
        let ctx = fenced_block(user, "json").and_then(|t| serde_json::from_str::<Value>(t).ok());
        let task = ctx.as_ref().and_then(|c| c.get("task")).and_then(Value::as_str);
        let ctx = ctx.as_ref().unwrap_or(&Value::Null);
        match (request.agent, task) {
            (AgentName::Processor, None) => Ok(parse_reply(user)),
            (_, Some("infer_modality")) => Ok(reply("time_series".into(), MODALITY)),
            (AgentName::InfoMiner, Some("model_documentation")) => {
                let library = library_field(ctx)?;
                let mut r = match catalog_doc(library, str_field(ctx, "model")?, Utc::now()) {
                    Some(doc) => reply(render_doc(&doc), DOCS),
                    None => reply(String::new(), DOCS),
                };
                r.latency = library_catalog(library).search_latency;
                r.web_search_calls = 1;
                Ok(r)
            }
            // Reformatting requests only follow unparseable summaries, which
            // the catalog never produces.
            (AgentName::InfoMiner, None) => Ok(reply(user.to_string(), DOCS)),
            (AgentName::Selector, Some("recommend_model")) => {
                let library = library_field(ctx)?;
                let list = &library_catalog(library).recommendations;
                let mut picks = self.picks.lock().expect("pick cursor");
                let cursor = picks.entry(library).or_default();
                let pick = list[*cursor % list.len()].clone();
                *cursor += 1;
                Ok(reply(pick, RECOMMEND))
            }
            (AgentName::Selector, None) => {
                let first = user.rsplit(':').next().and_then(|l| l.split(',').next()).unwrap_or_default();
                Ok(reply(first.trim().to_string(), RECOMMEND))
            }
            (AgentName::Generator, Some(task @ ("generate_script" | "repair_script"))) => {
                let library = library_field(ctx)?;
                let model = str_field(ctx, "model")?;
                let stem = ctx.pointer("/dataset/stem").and_then(Value::as_str).unwrap_or_default();
                let fault = self.faults.lookup(model, stem).filter(|f| task == "generate_script" || !f.repairable).map(|f| f.kind);
                let body = script_body(library, model, fault)?;
                let usage = if task == "generate_script" { GENERATE } else { REPAIR };
                Ok(reply(format!("```python\n{body}```"), usage))
            }
            (AgentName::Reviewer, Some("review_failure")) => {
                let library = library_field(ctx)?;
                let model = str_field(ctx, "model")?;
                Ok(reply(review_hint(library, model, str_field(ctx, "error_category")?), REVIEW))
            }
            (AgentName::Optimizer, Some("propose_params")) => Ok(reply(propose(ctx), PROPOSE)),
            (agent, task) => {
                Err(BackendError::Unavailable(format!("the simulated model has no reply for {agent} task {}", task.unwrap_or("<none>"))))
            }
        }
    }

    fn name(&self) -> &'static str {
        "simulated"
    }
}

fn parse_reply(text: &str) -> LlmResponse {
    let content = match parse_instruction_rules(text) {
        Some(rule) => json!({
            "algorithms": rule.algorithms,
            "train_path": rule.train,
            "test_path": rule.test,
            "parameters": crate::info_miner::params_to_json(&rule.user_params),
            "evaluate": rule.evaluate,
            "optimize": rule.optimize,
            "modality_hint": rule.modality_hint.map(|m| m.as_str()),
        })
        .to_string(),
        None => "I could not find a dataset in that command.".into(),
    };
    reply(content, PARSE)
}

/// Script body for `model`, with `fault` injected when given.
fn script_body(library: LibraryId, model: &str, fault: Option<FaultKind>) -> Result<String, BackendError> {
    let entry =
        catalog_model(library, model).ok_or_else(|| BackendError::Unavailable(format!("the simulated model does not know {model}")))?;
    let class = entry.class.as_str();
    let module = match fault {
        Some(FaultKind::WrongImport) => match library {
            LibraryId::Pyod => format!("{}s", entry.module),
            LibraryId::Pygod => "pygod.detectors".into(),
            LibraryId::Tslib => "tslib.model".into(),
        },
        _ => entry.module.clone(),
    };
    let required_arg = match library {
        LibraryId::Tslib => "enc_in=train.shape[1], ",
        _ => "",
    };
    let needs_width = library == LibraryId::Pyod && model == "DeepSVDD";
    let (required_arg, width_line) = match fault {
        Some(FaultKind::MissingArgument) if library == LibraryId::Tslib || needs_width => ("", ""),
        _ if needs_width => (required_arg, "PARAMS[\"n_features\"] = X_train.shape[1]\n"),
        _ => (required_arg, ""),
    };
    let extra_kwarg = match fault {
        Some(FaultKind::BadKeyword) => ", n_epoch=10",
        Some(FaultKind::MissingArgument) if library != LibraryId::Tslib && !needs_width => ", n_epoch=10",
        _ => "",
    };
    let spin = if fault == Some(FaultKind::Timeout) { "while True:\n    pass\n" } else { "" };
    let constraint = fault == Some(FaultKind::DataConstraint);

    let body = match library {
        LibraryId::Pyod => format!(
            "from {module} import {class}\n\n\
X_train, _ = load_train()\n\
X_test, _ = load_test()\n\
{drop}{width_line}{spin}\
model = {class}(**PARAMS{extra_kwarg})\n\
model.fit(X_train)\n\
scores = model.decision_function(X_test)\n\
labels_pred = model.predict(X_test)\n\
write_result(scores, labels_pred)\n",
            drop = if constraint { "X_train = X_train[:, 1:]\n" } else { "" },
        ),
        LibraryId::Pygod => format!(
            "from {module} import {class}\n\n\
data = load_train()\n\
test = load_test()\n\
{tamper}{spin}\
model = {class}(**PARAMS{extra_kwarg})\n\
model.fit(data)\n\
{tamper_test}\
scores = np.asarray(model.decision_function(test), dtype=float)\n\
labels_pred = np.asarray(model.predict(test)).astype(int)\n\
write_result(scores, labels_pred)\n",
            tamper = if constraint && model == "GAAN" { "data.y = data.x[:, 0]\n" } else { "" },
            tamper_test = if constraint && model != "GAAN" { "test.x = test.x[:, 1:]\n" } else { "" },
        ),
        LibraryId::Tslib => format!(
            "from {module} import {class}\n\n\
train, _ = load_train()\n\
test, _ = load_test()\n\
{window}{spin}\
model = {class}({required_arg}**PARAMS{extra_kwarg})\n\
model.fit(train)\n\
{trim}\
scores = model.decision_function(test)\n\
labels_pred = model.predict(test)\n\
write_result(scores, labels_pred)\n",
            window = if constraint && model == "Pyraformer" { "PARAMS[\"seq_len\"] = train.shape[0]\n" } else { "" },
            trim = if constraint && model != "Pyraformer" { "test = test[:, 1:]\n" } else { "" },
        ),
    };
    Ok(body)
}

fn review_hint(library: LibraryId, model: &str, category: &str) -> String {
    let Some(entry) = catalog_model(library, model) else {
        return "Fix the error shown in the traceback.".into();
    };
    match category {
        "import_error" => format!("The import path is wrong; import `{}` from `{}`.", entry.class, entry.module),
        "missing_or_bad_argument" => {
            let required: Vec<String> = library_catalog(library)
                .common_params
                .iter()
                .chain(&entry.params)
                .filter(|p| !p.contains_key("default"))
                .filter_map(|p| p.get("name").and_then(Value::as_str).map(|n| format!("`{n}`")))
                .collect();
            let tail = if required.is_empty() {
                String::new()
            } else {
                format!(" and supply the required {}", required.join(", "))
            };
            format!("The constructor call does not match the documented signature; pass only documented parameters{tail}.")
        }
        "data_constraint_violation" => format!(
            "The data given to {} breaks its input constraints; pass the loaded data unchanged and keep documented defaults for shape parameters.",
            entry.class
        ),
        "timeout" => "The script never finishes; remove the unbounded loop and train once.".into(),
        _ => "Fix the runtime error shown in the traceback.".into(),
    }
}

const EPOCH_KEYS: [&str; 6] = ["epoch_num", "epochs", "n_epochs", "stop_epochs", "epoch", "train_epochs"];

/// Doubles the training length of the best trial so far; models without
/// one get their contamination halved.
fn propose(ctx: &Value) -> String {
    let names: Vec<&str> = ctx
        .get("init_params")
        .and_then(Value::as_array)
        .map(|ps| ps.iter().filter_map(|p| p.get("name").and_then(Value::as_str)).collect())
        .unwrap_or_default();
    let trials = ctx.get("trials").and_then(Value::as_array).cloned().unwrap_or_default();
    let metric = |t: &Value| t.get("metric").and_then(Value::as_f64).unwrap_or(f64::NEG_INFINITY);
    let best = trials.iter().fold(None::<&Value>, |best, t| match best {
        Some(b) if metric(b) >= metric(t) => Some(b),
        _ => Some(t),
    });
    let current = |key: &str| best.and_then(|b| b.pointer(&format!("/params/{key}"))).and_then(Value::as_f64);
    let proposal = match EPOCH_KEYS.iter().find(|k| names.contains(k)) {
        Some(key) => json!({ *key: (current(key).unwrap_or(10.0) * 2.0).round() as i64 }),
        None => json!({ "contamination": current("contamination").unwrap_or(0.1) / 2.0 }),
    };
    format!("```json\n{proposal}\n```")
}

/// Shape of a generated benchmark dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub modality: Modality,
    /// Rows, nodes, or steps per split.
    pub n_samples: usize,
    pub n_features: usize,
    pub anomaly_rate: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(modality: Modality, n_samples: usize, n_features: usize, seed: u64) -> Self {
        SyntheticSpec { modality, n_samples, n_features, anomaly_rate: 0.1, seed }
    }
}

/// Writes a Gaussian dataset with planted shifted anomalies under `dir` in
/// the layout the processor reads for its modality (`<name>.csv`,
/// `<name>.json`, or a `<name>/` series bundle) and returns its path.
pub fn write_synthetic_dataset(dir: &Path, name: &str, spec: SyntheticSpec) -> std::io::Result<PathBuf> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_samples.max(4);
    let d = spec.n_features.max(1);
    let labels = |rng: &mut ChaCha8Rng| -> Vec<u8> {
        let k = ((n as f64 * spec.anomaly_rate).round() as usize).clamp(1, n - 1);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let mut y = vec![0u8; n];
        for &i in &idx[..k] {
            y[i] = 1;
        }
        y
    };
    let rows = |rng: &mut ChaCha8Rng, y: &[u8]| -> Vec<Vec<f64>> {
        y.iter().map(|&l| (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) + 3.0 * f64::from(l)).collect()).collect()
    };
    let table = |prefix: &str, x: &[Vec<f64>], y: Option<&[u8]>| -> String {
        let mut out: Vec<String> = (0..d).map(|j| format!("{prefix}{j}")).collect();
        if y.is_some() {
            out.push("label".into());
        }
        let mut text = out.join(",") + "\n";
        for (i, row) in x.iter().enumerate() {
            let mut cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            if let Some(y) = y {
                cells.push(y[i].to_string());
            }
            text.push_str(&cells.join(","));
            text.push('\n');
        }
        text
    };
    std::fs::create_dir_all(dir)?;
    match spec.modality {
        Modality::Multivariate => {
            let y = labels(&mut rng);
            let x = rows(&mut rng, &y);
            let path = dir.join(format!("{name}.csv"));
            std::fs::write(&path, table("f", &x, Some(&y)))?;
            Ok(path)
        }
        Modality::Graph => {
            let y = labels(&mut rng);
            let x = rows(&mut rng, &y);
            let edges: Vec<[usize; 2]> =
                (0..n * 2).map(|_| [rng.random_range(0..n), rng.random_range(0..n)]).filter(|[u, v]| u != v).collect();
            let path = dir.join(format!("{name}.json"));
            let doc = json!({"node_features": x, "edges": edges, "labels": y});
            std::fs::write(&path, doc.to_string())?;
            Ok(path)
        }
        Modality::TimeSeries => {
            let bundle = dir.join(name);
            std::fs::create_dir_all(&bundle)?;
            let train = rows(&mut rng, &vec![0; n]);
            let y = labels(&mut rng);
            let test = rows(&mut rng, &y);
            std::fs::write(bundle.join("train.csv"), table("c", &train, None))?;
            std::fs::write(bundle.join("test.csv"), table("c", &test, None))?;
            let label_text: String = std::iter::once("label\n".to_string()).chain(y.iter().map(|l| format!("{l}\n"))).collect();
            std::fs::write(bundle.join("test_label.csv"), label_text)?;
            Ok(bundle)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info_miner::parse_doc_summary;
    use crate::llm::Message;
    use crate::registry::Registry;

    fn now() -> DateTime<Utc> {
        "2025-06-10T00:00:00Z".parse().unwrap()
    }

    #[test]
    fn catalog_covers_every_roster_model() {
        let reg = Registry::bundled();
        for (lib, model) in reg.all_models() {
            let doc = catalog_doc(lib, model.as_str(), now()).unwrap_or_else(|| panic!("{lib}/{model}"));
            let parsed = parse_doc_summary(&render_doc(&doc), model, lib, now()).unwrap().doc;
            assert_eq!(parsed.defaults(), doc.defaults(), "{lib}/{model}");
            assert_eq!(parsed.required_params().count(), doc.required_params().count());
        }
        for lib in LibraryId::ALL {
            for pick in &library_catalog(lib).recommendations {
                assert!(reg.library(lib).contains(&ModelName::new(pick.as_str())));
            }
        }
    }

    #[test]
    fn vae_doc_matches_published_defaults() {
        let doc = catalog_doc(LibraryId::Pyod, "VAE", now()).unwrap();
        let d = doc.defaults();
        assert_eq!(d["contamination"], ParamValue::Float(0.1));
        assert_eq!(d["encoder_neuron_list"], ParamValue::List(vec![ParamValue::Int(128), ParamValue::Int(64), ParamValue::Int(32)]));
        assert_eq!(d["epoch_num"], ParamValue::Int(30));
        assert_eq!(doc.param("contamination").unwrap().type_text, "float in (0., 0.5)");
        assert!(catalog_doc(LibraryId::Pyod, "IForest", now()).is_none());
    }

    fn generate(sim: &SimulatedLlm, task: &str, model: &str, library: &str, stem: &str) -> String {
        let ctx = json!({"task": task, "model": model, "library": library, "dataset": {"stem": stem}});
        let req = LlmRequest::new(AgentName::Generator, "gpt-4o", vec![Message::user(format!("```json\n{ctx}\n```"))]);
        let r = sim.complete(&req).unwrap();
        assert_eq!((r.input_tokens, r.output_tokens), if task == "generate_script" { (1440, 253) } else { (1820, 260) });
        fenced_block(&r.content, "python").unwrap().to_string()
    }

    #[test]
    fn faults_follow_the_plan() {
        let sim = SimulatedLlm::new(FaultPlan::typical());
        let first = generate(&sim, "generate_script", "DeepSVDD", "pyod", "cardio");
        assert!(!first.contains("n_features"));
        let fixed = generate(&sim, "repair_script", "DeepSVDD", "pyod", "cardio");
        assert!(fixed.contains("PARAMS[\"n_features\"] = X_train.shape[1]"));

        let gaan = generate(&sim, "generate_script", "GAAN", "pygod", "books");
        assert_eq!(generate(&sim, "repair_script", "GAAN", "pygod", "books"), gaan);
        assert!(gaan.contains("data.y = data.x[:, 0]"));
        assert!(!generate(&sim, "generate_script", "GAAN", "pygod", "weibo").contains("data.y"));

        let tslib = generate(&sim, "generate_script", "TimesNet", "tslib", "SMD");
        assert!(tslib.contains("TimesNet(enc_in=train.shape[1], **PARAMS)"));
    }

    #[test]
    fn every_fault_kind_changes_the_body() {
        for (lib, model) in [(LibraryId::Pyod, "VAE"), (LibraryId::Pygod, "CONAD"), (LibraryId::Tslib, "DLinear")] {
            let clean = script_body(lib, model, None).unwrap();
            for kind in FaultKind::ALL {
                assert_ne!(script_body(lib, model, Some(kind)).unwrap(), clean, "{model} {kind:?}");
            }
        }
    }

    #[test]
    fn documentation_reply_bills_one_search() {
        let sim = SimulatedLlm::default();
        let ctx = json!({"task": "model_documentation", "library": "pyod", "model": "VAE"});
        let req = LlmRequest::new(AgentName::InfoMiner, "gpt-4o-search-preview", vec![Message::user(format!("q\n```json\n{ctx}\n```"))]);
        let r = sim.complete(&req).unwrap();
        assert_eq!((r.input_tokens, r.output_tokens, r.web_search_calls), (1130, 318, 1));
        assert_eq!(r.latency, 10.6);
        let ctx = json!({"task": "model_documentation", "library": "pyod", "model": "IForest"});
        let req = LlmRequest::new(AgentName::InfoMiner, "gpt-4o-search-preview", vec![Message::user(format!("```json\n{ctx}\n```"))]);
        assert!(sim.complete(&req).unwrap().content.is_empty());
    }

    #[test]
    fn recommendations_cycle_per_library() {
        let sim = SimulatedLlm::default();
        let ctx = json!({"task": "recommend_model", "library": "pyod"});
        let req = LlmRequest::new(AgentName::Selector, "o4-mini", vec![Message::user(format!("```json\n{ctx}\n```"))]);
        let picks: Vec<String> = (0..4).map(|_| sim.complete(&req).unwrap().content).collect();
        assert_eq!(picks, ["VAE", "VAE", "AE1SVM", "VAE"]);
    }

    #[test]
    fn proposals_double_the_best_epoch_count() {
        let ctx = json!({
            "init_params": [{"name": "contamination"}, {"name": "epoch_num"}],
            "trials": [
                {"index": 0, "params": {"epoch_num": 30}, "metric": 0.8},
                {"index": 1, "params": {"epoch_num": 60}, "metric": 0.7},
            ],
        });
        assert_eq!(propose(&ctx), "```json\n{\"epoch_num\":60}\n```");
        let ctx = json!({"init_params": [{"name": "eps"}], "trials": []});
        assert!(propose(&ctx).contains("\"contamination\":0.05"));
    }

    #[test]
    fn synthetic_datasets_load_with_their_modality() {
        let dir = tempfile::tempdir().unwrap();
        for (modality, name) in [(Modality::Multivariate, "tab"), (Modality::Graph, "books"), (Modality::TimeSeries, "SMD")] {
            let path = write_synthetic_dataset(dir.path(), name, SyntheticSpec::new(modality, 50, 3, 1)).unwrap();
            let ds = crate::processor::load_dataset(&path).unwrap();
            assert_eq!(ds.n_features(), 3, "{name}");
            assert_eq!(ds.eval_labels().unwrap().iter().filter(|&&l| l == 1).count(), 5, "{name}");
            if modality != Modality::Multivariate {
                assert_eq!(ds.format.forced_modality(), Some(modality));
            }
        }
    }

    #[test]
    fn instruction_parse_reply_is_json() {
        let r = parse_reply("Run VAE on cardio.mat");
        let v: Value = serde_json::from_str(&r.content).unwrap();
        assert_eq!(v["algorithms"], json!(["VAE"]));
        assert_eq!(v["train_path"], "cardio.mat");
        assert_eq!((r.input_tokens, r.output_tokens), (702, 96));
    }
}
