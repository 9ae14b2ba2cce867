//! Structured model documentation and its text form.
//!
//! Summaries come back from the search model as loosely formatted Markdown
//! that ends with a Python dictionary of constructor defaults. The parser
//! treats that dictionary as authoritative for defaults and the
//! `**Parameters:**` bullets as the source of types and descriptions.
//! Anything it does not recognize is kept verbatim in `usage_notes`.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::registry::{LibraryId, ModelName};

/// A constructor default as it would appear in generated code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<ParamValue>),
}

impl ParamValue {
    /// Python literal for this value.
    pub fn to_python(&self) -> String {
        let mut out = String::new();
        self.write_python(&mut out);
        out
    }

    fn write_python(&self, out: &mut String) {
        match self {
            ParamValue::None => out.push_str("None"),
            ParamValue::Bool(true) => out.push_str("True"),
            ParamValue::Bool(false) => out.push_str("False"),
            ParamValue::Int(i) => write!(out, "{i}").unwrap(),
            ParamValue::Float(f) => out.push_str(&python_float(*f)),
            ParamValue::Str(s) => {
                out.push('\'');
                for c in s.chars() {
                    match c {
                        '\\' => out.push_str("\\\\"),
                        '\'' => out.push_str("\\'"),
                        '\n' => out.push_str("\\n"),
                        '\r' => out.push_str("\\r"),
                        '\t' => out.push_str("\\t"),
                        c if (c as u32) < 0x20 => write!(out, "\\x{:02x}", c as u32).unwrap(),
                        c => out.push(c),
                    }
                }
                out.push('\'');
            }
            ParamValue::List(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    item.write_python(out);
                }
                out.push(']');
            }
        }
    }

    /// JSON form, used for parameter overrides passed to generated scripts.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("param values serialize")
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(i) => Some(*i as f64),
            ParamValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ParamValue::None => "None",
            ParamValue::Bool(_) => "bool",
            ParamValue::Int(_) => "int",
            ParamValue::Float(_) => "float",
            ParamValue::Str(_) => "str",
            ParamValue::List(_) => "list",
        }
    }

    /// Converts a parsed Python literal. Numbers stay numbers, lists stay
    /// lists, and anything else (dicts, sets, complex) is kept as its source
    /// text.
    pub(crate) fn from_literal(value: &py_literal::Value) -> ParamValue {
        use py_literal::Value as Py;
        match value {
            Py::None => ParamValue::None,
            Py::Boolean(b) => ParamValue::Bool(*b),
            Py::Integer(i) => match i.to_string().parse::<i64>() {
                Ok(v) => ParamValue::Int(v),
                Err(_) => ParamValue::Str(i.to_string()),
            },
            Py::Float(f) => ParamValue::Float(*f),
            Py::String(s) => ParamValue::Str(s.clone()),
            Py::List(items) | Py::Tuple(items) => ParamValue::List(items.iter().map(ParamValue::from_literal).collect()),
            other => ParamValue::Str(other.to_string()),
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_python())
    }
}

fn python_float(f: f64) -> String {
    if f.is_nan() {
        return "float('nan')".into();
    }
    if f.is_infinite() {
        return if f > 0.0 { "float('inf')".into() } else { "float('-inf')".into() };
    }
    let s = format!("{f:?}");
    if s.contains(['.', 'e', 'E']) {
        s
    } else {
        format!("{s}.0")
    }
}

pub type ParamMap = BTreeMap<String, ParamValue>;

/// Renders a parameter map as a Python dict literal with sorted keys.
pub fn params_to_python(params: &ParamMap) -> String {
    let body: Vec<String> = params.iter().map(|(k, v)| format!("{}: {}", ParamValue::Str(k.clone()).to_python(), v.to_python())).collect();
    format!("{{{}}}", body.join(", "))
}

pub fn params_to_json(params: &ParamMap) -> serde_json::Value {
    serde_json::Value::Object(params.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(default)]
    pub type_text: String,
    /// Absent for required arguments; a `None` default is stored as null.
    #[serde(default, deserialize_with = "present_value", skip_serializing_if = "Option::is_none")]
    pub default_value: Option<ParamValue>,
    #[serde(default)]
    pub description: String,
    /// True exactly when `default_value` is absent.
    pub required: bool,
}

/// Keeps `null` as `Some(ParamValue::None)` instead of collapsing it into
/// "no default".
fn present_value<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<ParamValue>, D::Error> {
    ParamValue::deserialize(d).map(Some)
}

impl ParamSpec {
    pub fn new(name: impl Into<String>, type_text: impl Into<String>, default_value: Option<ParamValue>) -> Self {
        let required = default_value.is_none();
        ParamSpec { name: name.into(), type_text: type_text.into(), default_value, description: String::new(), required }
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    #[serde(default)]
    pub type_text: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocSource {
    Cache,
    Web,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocSummary {
    pub model: ModelName,
    pub library: LibraryId,
    pub description: String,
    pub init_params: Vec<ParamSpec>,
    #[serde(default)]
    pub attributes: Vec<AttributeSpec>,
    #[serde(default)]
    pub usage_notes: String,
    pub source: DocSource,
    pub retrieved_at: DateTime<Utc>,
}

impl ModelDocSummary {
    pub fn param(&self, name: &str) -> Option<&ParamSpec> {
        self.init_params.iter().find(|p| p.name == name)
    }

    /// Constructor defaults for every parameter that has one.
    pub fn defaults(&self) -> ParamMap {
        self.init_params.iter().filter_map(|p| p.default_value.clone().map(|v| (p.name.clone(), v))).collect()
    }

    pub fn required_params(&self) -> impl Iterator<Item = &ParamSpec> {
        self.init_params.iter().filter(|p| p.required)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DocParseError {
    #[error("summary has no extractable parameter mapping")]
    NoParameterBlock,
}

/// Result of parsing a summary: the document plus non-fatal findings.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDoc {
    pub doc: ModelDocSummary,
    pub warnings: Vec<String>,
}

const MAPPING_HEADING: &str = "**Python Dictionary of `__init__` Parameters with Default Values:**";

/// Text form consumed by prompts and printed to the session transcript.
pub fn render_doc(doc: &ModelDocSummary) -> String {
    let mut out = String::new();
    if !doc.description.trim().is_empty() {
        out.push_str(doc.description.trim());
        out.push_str("\n\n");
    }
    out.push_str("**Parameters:**\n");
    for p in &doc.init_params {
        writeln!(out, "- `{}`:", p.name).unwrap();
        writeln!(out, "  - **Type**: {}", p.type_text).unwrap();
        if let Some(v) = &p.default_value {
            writeln!(out, "  - **Default**: {}", v.to_python()).unwrap();
        }
        writeln!(out, "  - **Description**: {}", p.description).unwrap();
    }
    if !doc.attributes.is_empty() {
        out.push_str("\n**Attributes:**\n");
        for a in &doc.attributes {
            writeln!(out, "- `{}`:", a.name).unwrap();
            writeln!(out, "  - **Type**: {}", a.type_text).unwrap();
            writeln!(out, "  - **Description**: {}", a.description).unwrap();
        }
    }
    if !doc.usage_notes.trim().is_empty() {
        out.push('\n');
        out.push_str(doc.usage_notes.trim());
        out.push('\n');
    }
    out.push('\n');
    out.push_str(MAPPING_HEADING);
    out.push_str("\n{\n");
    for p in &doc.init_params {
        if let Some(v) = &p.default_value {
            writeln!(out, "    {}: {},", ParamValue::Str(p.name.clone()).to_python(), v.to_python()).unwrap();
        }
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Default)]
struct BulletItem {
    name: String,
    type_text: Option<String>,
    default_text: Option<String>,
    description: Vec<String>,
}

#[derive(Debug, PartialEq, Eq, Clone, Copy)]
enum Section {
    Preamble,
    Parameters,
    Attributes,
    Mapping,
    Other,
}

fn normalize_quotes(text: &str) -> String {
    text.replace(['\u{2018}', '\u{2019}'], "'").replace(['\u{201C}', '\u{201D}'], "\"")
}

/// Bold heading lines such as `**Parameters:**`.
fn heading(line: &str) -> Option<&str> {
    let t = line.trim();
    if t.starts_with("**") && t.ends_with("**") && t.len() > 4 {
        Some(t.trim_matches('*').trim().trim_end_matches(':').trim())
    } else {
        None
    }
}

fn classify_heading(title: &str) -> Section {
    let lower = title.to_ascii_lowercase();
    if lower.contains("dictionary") && lower.contains("default") {
        Section::Mapping
    } else if lower.starts_with("parameters") {
        Section::Parameters
    } else if lower.starts_with("attributes") {
        Section::Attributes
    } else {
        Section::Other
    }
}

/// `- `name`:` bullet at the top indentation level.
fn item_name(line: &str) -> Option<String> {
    if line.starts_with([' ', '\t']) {
        return None;
    }
    let rest = line.trim().strip_prefix(['-', '*'])?.trim();
    if rest.starts_with("**") {
        return None;
    }
    let rest = rest.trim_end_matches(':').trim();
    let name = rest.trim_matches(|c| matches!(c, '`' | '\'' | '"')).trim();
    let valid = !name.is_empty()
        && name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    valid.then(|| name.to_string())
}

/// `  - **Field**: value` sub-bullet.
fn field(line: &str) -> Option<(String, String)> {
    let rest = line.trim().strip_prefix(['-', '*'])?.trim();
    let rest = rest.strip_prefix("**")?;
    let end = rest.find("**")?;
    let key = rest[..end].trim().trim_end_matches(':').to_ascii_lowercase();
    let value = rest[end + 2..].trim().trim_start_matches(':').trim().to_string();
    Some((key, value))
}

/// Finds the `{ ... }` literal following `from`, honouring quotes.
fn balanced_braces(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '\'' | '"' => quote = Some(c),
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Drops placeholder lines and comment lines a model may leave inside the
/// mapping, then joins it onto one line (the literal parser rejects newlines).
fn clean_mapping(raw: &str) -> String {
    raw.lines()
        .filter(|l| {
            let t = l.trim();
            !(t.starts_with('#') || t == "..." || t == "...," || t.starts_with("```"))
        })
        .map(str::trim)
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_literal(text: &str) -> Option<py_literal::Value> {
    text.trim().parse::<py_literal::Value>().ok()
}

fn parse_mapping(text: &str, warnings: &mut Vec<String>) -> Option<Vec<(String, ParamValue)>> {
    let literal = balanced_braces(text)?;
    let parsed = parse_literal(&clean_mapping(literal))?;
    let pairs = parsed.as_dict()?;
    let mut out: Vec<(String, ParamValue)> = Vec::new();
    for (k, v) in pairs {
        let Some(name) = k.as_string() else {
            warnings.push(format!("ignoring non-string key {k} in default mapping"));
            continue;
        };
        let value = ParamValue::from_literal(v);
        if let Some(existing) = out.iter_mut().find(|(n, _)| n == name) {
            warnings.push(format!("parameter `{name}` appears more than once; keeping the later value"));
            existing.1 = value;
        } else {
            out.push((name.clone(), value));
        }
    }
    Some(out)
}

/// Parses a default written next to a parameter, e.g. `0.1` or `[128, 64, 32]`.
/// Text such as "None (required)" or prose that is not a literal yields `None`.
fn parse_inline_default(text: &str) -> Option<ParamValue> {
    let t = text.trim().trim_matches('`').trim();
    if t.is_empty() || t.to_ascii_lowercase().contains("required") || t.eq_ignore_ascii_case("n/a") {
        return None;
    }
    parse_literal(t).map(|v| ParamValue::from_literal(&v))
}

fn type_accepts(type_text: &str, value: &ParamValue) -> bool {
    let t = type_text.trim().to_ascii_lowercase();
    if t.is_empty() {
        return true;
    }
    if matches!(value, ParamValue::None) {
        return t.contains("none") || t.contains("optional");
    }
    let head = t.split(|c: char| !c.is_ascii_alphanumeric()).next().unwrap_or("");
    match head {
        "float" | "real" | "number" | "double" => matches!(value, ParamValue::Float(_) | ParamValue::Int(_)),
        "int" | "integer" => matches!(value, ParamValue::Int(_)),
        "bool" | "boolean" => matches!(value, ParamValue::Bool(_)),
        "str" | "string" => matches!(value, ParamValue::Str(_)),
        "list" | "tuple" | "array" | "sequence" => matches!(value, ParamValue::List(_)),
        _ => true,
    }
}

/// Parses raw summarizer output into a [`ModelDocSummary`].
///
/// The default mapping is mandatory; without it the summary is rejected
/// with [`DocParseError::NoParameterBlock`].
pub fn parse_doc_summary(
    raw: &str,
    model: &ModelName,
    library: LibraryId,
    retrieved_at: DateTime<Utc>,
) -> Result<ParsedDoc, DocParseError> {
    let text = normalize_quotes(raw);
    let mut warnings = Vec::new();

    let mut section = Section::Preamble;
    let mut description = Vec::new();
    let mut notes = Vec::new();
    let mut params: Vec<BulletItem> = Vec::new();
    let mut attrs: Vec<BulletItem> = Vec::new();
    let mut mapping_text = String::new();
    let mut in_fence = false;

    for line in text.lines() {
        if line.trim_start().starts_with("```") {
            in_fence = !in_fence;
            match section {
                Section::Mapping => mapping_text.push_str(line),
                Section::Preamble | Section::Other => notes.push(line.to_string()),
                _ => {}
            }
            if section == Section::Mapping {
                mapping_text.push('\n');
            }
            continue;
        }
        if !in_fence {
            if let Some(title) = heading(line) {
                section = classify_heading(title);
                if section == Section::Other {
                    notes.push(line.trim().to_string());
                }
                continue;
            }
        }
        match section {
            Section::Preamble => description.push(line.trim().to_string()),
            Section::Other => notes.push(line.to_string()),
            Section::Mapping => {
                mapping_text.push_str(line);
                mapping_text.push('\n');
            }
            Section::Parameters | Section::Attributes => {
                let items = if section == Section::Parameters { &mut params } else { &mut attrs };
                if let Some(name) = item_name(line) {
                    items.push(BulletItem { name, ..BulletItem::default() });
                } else if let (Some((key, value)), Some(item)) = (field(line), items.last_mut()) {
                    match key.as_str() {
                        "type" => item.type_text = Some(value),
                        "default" | "default value" => item.default_text = Some(value),
                        "description" => item.description.push(value),
                        _ => item.description.push(format!("{key}: {value}")),
                    }
                } else if let Some(item) = items.last_mut() {
                    let t = line.trim();
                    if !t.is_empty() {
                        item.description.push(t.to_string());
                    }
                } else if !line.trim().is_empty() {
                    notes.push(line.to_string());
                }
            }
        }
    }

    let mapping = if mapping_text.trim().is_empty() { None } else { parse_mapping(&mapping_text, &mut warnings) };
    let mapping = match mapping {
        Some(m) => m,
        None => {
            // No heading: accept a trailing fenced dict on its own.
            let fallback = crate::llm::fenced_block(&text, "python")
                .or_else(|| crate::llm::fenced_block(&text, ""))
                .filter(|b| b.trim_start().starts_with('{'));
            fallback.and_then(|b| parse_mapping(b, &mut warnings)).ok_or(DocParseError::NoParameterBlock)?
        }
    };

    // Section order wins; mapping-only params follow in mapping order.
    let mut init_params: Vec<ParamSpec> = Vec::new();
    let mut seen_in_section = Vec::new();
    for item in params {
        let from_mapping = mapping.iter().find(|(n, _)| *n == item.name).map(|(_, v)| v.clone());
        let default_value = from_mapping.or_else(|| item.default_text.as_deref().and_then(parse_inline_default));
        let spec = ParamSpec {
            required: default_value.is_none(),
            name: item.name.clone(),
            type_text: item.type_text.unwrap_or_default(),
            default_value,
            description: item.description.join(" "),
        };
        if let Some(pos) = init_params.iter().position(|p| p.name == spec.name) {
            warnings.push(format!("parameter `{}` is documented twice; keeping the later entry", spec.name));
            init_params[pos] = spec;
        } else {
            seen_in_section.push(spec.name.clone());
            init_params.push(spec);
        }
    }
    for (name, value) in &mapping {
        if !seen_in_section.contains(name) {
            init_params.push(ParamSpec::new(name.clone(), String::new(), Some(value.clone())));
        }
    }

    for p in &mut init_params {
        if let Some(v) = &p.default_value {
            if !type_accepts(&p.type_text, v) {
                warnings.push(format!(
                    "default {} for `{}` does not match declared type `{}`; using `{}`",
                    v.to_python(),
                    p.name,
                    p.type_text,
                    v.kind()
                ));
                p.type_text = v.kind().to_string();
            }
        }
    }

    let attributes = attrs
        .into_iter()
        .map(|a| AttributeSpec { name: a.name, type_text: a.type_text.unwrap_or_default(), description: a.description.join(" ") })
        .collect();

    let description = description.join("\n").trim().to_string();
    let usage_notes = notes.join("\n").trim().to_string();

    Ok(ParsedDoc {
        doc: ModelDocSummary {
            model: model.clone(),
            library,
            description,
            init_params,
            attributes,
            usage_notes,
            source: DocSource::Web,
            retrieved_at,
        },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn none_default_survives_serialization() {
        let specs = vec![ParamSpec::new("random_state", "int or None", Some(ParamValue::None)), ParamSpec::new("n_features", "int", None)];
        let text = serde_json::to_string(&specs).unwrap();
        let back: Vec<ParamSpec> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, specs);
        assert!(!back[0].required && back[1].required);
    }

    const VAE_SUMMARY: &str = "The Variational Autoencoder (VAE) in PyOD is a deep generative detector.

**Initialization Function (`__init__`):**
The `__init__` method initializes the VAE model with its network and training settings.

**Parameters:**
- `contamination`:
  - **Type**: float in (0., 0.5)
  - **Default**: 0.1
  - **Description**: The proportion of outliers in the data set.
- `encoder_neuron_list`:
  - **Type**: list of int
  - **Default**: [128, 64, 32]
  - **Description**: Hidden layer sizes of the encoder.

**Attributes:**
- `model`:
  - **Type**: torch.nn.Module
  - **Description**: The underlying VAE model.

**Python Dictionary of `__init__` Parameters with Default Values:**
{
    \u{2018}contamination\u{2019}: 0.1,
    \"encoder_neuron_list\": [128, 64, 32],
    # more omitted
}
";

    fn now() -> DateTime<Utc> {
        "2025-06-01T00:00:00Z".parse().unwrap()
    }

    fn parse(raw: &str) -> Result<ParsedDoc, DocParseError> {
        parse_doc_summary(raw, &ModelName::new("VAE"), LibraryId::Pyod, now())
    }

    #[test]
    fn parses_the_vae_summary() {
        let parsed = parse(VAE_SUMMARY).unwrap();
        let doc = &parsed.doc;
        let c = doc.param("contamination").unwrap();
        assert_eq!(c.type_text, "float in (0., 0.5)");
        assert_eq!(c.default_value, Some(ParamValue::Float(0.1)));
        assert!(!c.required);
        assert_eq!(c.description, "The proportion of outliers in the data set.");
        assert_eq!(
            doc.param("encoder_neuron_list").unwrap().default_value,
            Some(ParamValue::List(vec![ParamValue::Int(128), ParamValue::Int(64), ParamValue::Int(32)]))
        );
        assert_eq!(doc.attributes.len(), 1);
        assert_eq!(doc.attributes[0].type_text, "torch.nn.Module");
        assert!(doc.description.starts_with("The Variational Autoencoder"));
        assert!(doc.usage_notes.contains("Initialization Function"));
        assert_eq!(doc.source, DocSource::Web);
        assert!(parsed.warnings.is_empty(), "{:?}", parsed.warnings);
    }

    #[test]
    fn defaults_block_only() {
        let raw =
            "**Python Dictionary of `__init__` Parameters with Default Values:**\n{'a': 1, 'b': 2.5, 'c': 'relu', 'd': None, 'e': True}";
        let doc = parse(raw).unwrap().doc;
        let names: Vec<_> = doc.init_params.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["a", "b", "c", "d", "e"]);
        assert!(doc.init_params.iter().all(|p| p.description.is_empty() && !p.required));
        assert_eq!(doc.param("a").unwrap().default_value, Some(ParamValue::Int(1)));
        assert_eq!(doc.param("b").unwrap().default_value, Some(ParamValue::Float(2.5)));
        assert_eq!(doc.param("c").unwrap().default_value, Some(ParamValue::Str("relu".into())));
        assert_eq!(doc.param("d").unwrap().default_value, Some(ParamValue::None));
    }

    #[test]
    fn duplicated_name_keeps_the_later_value_and_warns() {
        let raw = "**Python Dictionary of `__init__` Parameters with Default Values:**\n{'lr': 0.1, 'epochs': 5, 'lr': 0.01}";
        let parsed = parse(raw).unwrap();
        assert_eq!(parsed.doc.init_params.len(), 2);
        assert_eq!(parsed.doc.param("lr").unwrap().default_value, Some(ParamValue::Float(0.01)));
        assert_eq!(parsed.warnings.len(), 1);
        assert!(parsed.warnings[0].contains("lr"));
    }

    #[test]
    fn missing_mapping_is_an_error() {
        let raw = "**Parameters:**\n- `a`:\n  - **Type**: int\n  - **Default**: 3\n";
        assert_eq!(parse(raw).unwrap_err(), DocParseError::NoParameterBlock);
        assert_eq!(parse("").unwrap_err(), DocParseError::NoParameterBlock);
    }

    #[test]
    fn fenced_mapping_without_heading_is_accepted() {
        let raw = "Some prose.\n```python\n{'n_neighbors': 5}\n```\n";
        let doc = parse(raw).unwrap().doc;
        assert_eq!(doc.param("n_neighbors").unwrap().default_value, Some(ParamValue::Int(5)));
    }

    #[test]
    fn section_param_without_default_is_required() {
        let raw = "**Parameters:**
- `n_features`:
  - **Type**: int
  - **Description**: Number of input features.
- `contamination`:
  - **Type**: float
  - **Default**: 0.1
  - **Description**: Outlier share.

**Python Dictionary of `__init__` Parameters with Default Values:**
{'contamination': 0.1}
";
        let doc = parse(raw).unwrap().doc;
        assert_eq!(doc.init_params[0].name, "n_features");
        assert!(doc.init_params[0].required);
        assert_eq!(doc.required_params().count(), 1);
        assert_eq!(doc.defaults().len(), 1);
    }

    #[test]
    fn type_mismatch_is_downgraded_with_warning() {
        let raw = "**Parameters:**
- `epochs`:
  - **Type**: int
  - **Default**: 'ten'
  - **Description**: x

**Python Dictionary of `__init__` Parameters with Default Values:**
{'epochs': 'ten'}
";
        let parsed = parse(raw).unwrap();
        assert_eq!(parsed.doc.param("epochs").unwrap().type_text, "str");
        assert_eq!(parsed.warnings.len(), 1);
    }

    #[test]
    fn python_rendering() {
        assert_eq!(ParamValue::Float(3.0).to_python(), "3.0");
        assert_eq!(ParamValue::Float(1e-5).to_python(), "1e-5");
        assert_eq!(ParamValue::Str("it's".into()).to_python(), "'it\\'s'");
        assert_eq!(ParamValue::None.to_python(), "None");
        let mut params = ParamMap::new();
        params.insert("contamination".into(), ParamValue::Float(0.2));
        params.insert("hidden".into(), ParamValue::List(vec![ParamValue::Int(8)]));
        assert_eq!(params_to_python(&params), "{'contamination': 0.2, 'hidden': [8]}");
        assert_eq!(params_to_python(&ParamMap::new()), "{}");
    }

    fn arb_scalar() -> impl Strategy<Value = ParamValue> {
        prop_oneof![
            Just(ParamValue::None),
            any::<bool>().prop_map(ParamValue::Bool),
            (-1_000_000i64..1_000_000).prop_map(ParamValue::Int),
            (-1e6f64..1e6).prop_map(ParamValue::Float),
            "[a-z][a-z _'-]{0,12}".prop_map(ParamValue::Str),
        ]
    }

    fn arb_value() -> impl Strategy<Value = ParamValue> {
        prop_oneof![
            3 => arb_scalar(),
            1 => proptest::collection::vec(arb_scalar(), 0..4).prop_map(ParamValue::List),
        ]
    }

    fn type_for(v: &Option<ParamValue>) -> String {
        match v {
            None => "int".into(),
            Some(ParamValue::None) => "int or None".into(),
            Some(v) => format!("{} value", v.kind()),
        }
    }

    fn arb_params() -> impl Strategy<Value = Vec<ParamSpec>> {
        proptest::collection::btree_map(
            "[a-z][a-z0-9_]{0,10}",
            (proptest::option::weighted(0.8, arb_value()), "([A-Za-z]+( [A-Za-z]+){0,4})?"),
            0..8,
        )
        .prop_map(|m| {
            m.into_iter()
                .map(|(name, (default, description))| {
                    let type_text = type_for(&default);
                    ParamSpec { required: default.is_none(), name, type_text, default_value: default, description }
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn render_then_parse_preserves_init_params(params in arb_params()) {
            let doc = ModelDocSummary {
                model: ModelName::new("VAE"),
                library: LibraryId::Pyod,
                description: "Round trip.".into(),
                init_params: params,
                attributes: vec![],
                usage_notes: String::new(),
                source: DocSource::Web,
                retrieved_at: now(),
            };
            let parsed = parse(&render_doc(&doc)).unwrap();
            prop_assert_eq!(&parsed.doc.init_params, &doc.init_params);
            prop_assert!(parsed.warnings.is_empty(), "{:?}", parsed.warnings);
        }
    }
}
