//! Static knowledge of the supported detection libraries.
//!
//! The registry is data: a JSON manifest bundled into the binary (see
//! `registry.json` next to this crate's manifest) that can be replaced at
//! runtime with [`Registry::from_path`]. It answers two questions for the
//! rest of the pipeline: which library serves a modality, and which library
//! owns a (possibly informally spelled) model name.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUNDLED_MANIFEST: &str = include_str!("../registry.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LibraryId {
    Pyod,
    Pygod,
    Tslib,
}

impl LibraryId {
    pub const ALL: [LibraryId; 3] = [LibraryId::Pyod, LibraryId::Pygod, LibraryId::Tslib];

    pub fn as_str(self) -> &'static str {
        match self {
            LibraryId::Pyod => "pyod",
            LibraryId::Pygod => "pygod",
            LibraryId::Tslib => "tslib",
        }
    }
}

impl fmt::Display for LibraryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LibraryId {
    type Err = RegistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pyod" => Ok(LibraryId::Pyod),
            "pygod" => Ok(LibraryId::Pygod),
            "tslib" => Ok(LibraryId::Tslib),
            other => Err(RegistryError::UnknownLibrary(other.to_string())),
        }
    }
}

/// Structural family of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Multivariate,
    Graph,
    TimeSeries,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Multivariate, Modality::Graph, Modality::TimeSeries];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Multivariate => "multivariate",
            Modality::Graph => "graph",
            Modality::TimeSeries => "time_series",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = RegistryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize(s).as_str() {
            "multivariate" | "tabular" => Ok(Modality::Multivariate),
            "graph" => Ok(Modality::Graph),
            "timeseries" => Ok(Modality::TimeSeries),
            _ => Err(RegistryError::UnknownModality(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PrimaryMetric {
    Auroc,
    F1,
}

/// Canonical model name as it appears in a library roster.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelName(String);

impl ModelName {
    pub fn new(name: impl Into<String>) -> Self {
        ModelName(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for ModelName {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub canonical: ModelName,
    #[serde(default)]
    pub aliases: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcludedModel {
    pub name: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibrarySpec {
    pub id: LibraryId,
    pub modality: Modality,
    pub primary_metric: PrimaryMetric,
    /// Recorded only; installed versions are not checked.
    #[serde(default)]
    pub min_version: Option<String>,
    pub models: Vec<ModelEntry>,
    pub datasets: Vec<String>,
    #[serde(default)]
    pub excluded: Vec<ExcludedModel>,
}

impl LibrarySpec {
    pub fn roster(&self) -> impl Iterator<Item = &ModelName> {
        self.models.iter().map(|m| &m.canonical)
    }

    pub fn contains(&self, model: &ModelName) -> bool {
        self.roster().any(|m| m == model)
    }
}

#[derive(Debug, Deserialize)]
struct Manifest {
    version: u32,
    libraries: Vec<LibrarySpec>,
}

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("unknown library `{0}`")]
    UnknownLibrary(String),
    #[error("unknown modality `{0}`")]
    UnknownModality(String),
    #[error("alias `{alias}` maps to models in both {first} and {second}")]
    AmbiguousName { alias: String, first: LibraryId, second: LibraryId },
    #[error("library {0} is listed twice in the manifest")]
    DuplicateLibrary(LibraryId),
    #[error("modality {0} is served by more than one library")]
    DuplicateModality(Modality),
    #[error("manifest does not cover modality {0}")]
    MissingModality(Modality),
    #[error("unsupported manifest version {0}")]
    UnsupportedVersion(u32),
    #[error("failed to read registry manifest: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed registry manifest: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Case-insensitive key with hyphens, underscores and whitespace stripped,
/// so that "MO-GAAL", "mo_gaal" and "mogaal" compare equal.
pub fn normalize(name: &str) -> String {
    name.chars().filter(|c| !matches!(c, '-' | '_') && !c.is_whitespace()).flat_map(char::to_lowercase).collect()
}

#[derive(Debug, Clone)]
pub struct Registry {
    libraries: Vec<LibrarySpec>,
    index: HashMap<String, (LibraryId, ModelName)>,
    excluded: HashMap<String, (LibraryId, String)>,
}

impl Registry {
    /// The manifest compiled into this crate.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_MANIFEST).expect("bundled registry manifest is valid")
    }

    pub fn from_path(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, RegistryError> {
        let manifest: Manifest = serde_json::from_str(text)?;
        if manifest.version != 1 {
            return Err(RegistryError::UnsupportedVersion(manifest.version));
        }
        Self::from_specs(manifest.libraries)
    }

    pub fn from_specs(libraries: Vec<LibrarySpec>) -> Result<Self, RegistryError> {
        let mut seen_libs = BTreeSet::new();
        let mut seen_modalities = HashMap::new();
        for lib in &libraries {
            if !seen_libs.insert(lib.id) {
                return Err(RegistryError::DuplicateLibrary(lib.id));
            }
            if seen_modalities.insert(lib.modality, lib.id).is_some() {
                return Err(RegistryError::DuplicateModality(lib.modality));
            }
        }
        for modality in Modality::ALL {
            if !seen_modalities.contains_key(&modality) {
                return Err(RegistryError::MissingModality(modality));
            }
        }

        let mut index: HashMap<String, (LibraryId, ModelName)> = HashMap::new();
        for lib in &libraries {
            for model in &lib.models {
                let keys = std::iter::once(model.canonical.as_str()).chain(model.aliases.iter().map(String::as_str));
                for key in keys {
                    let key = normalize(key);
                    match index.get(&key) {
                        Some((owner, existing)) if *owner != lib.id || *existing != model.canonical => {
                            return Err(RegistryError::AmbiguousName { alias: key, first: *owner, second: lib.id });
                        }
                        _ => {
                            index.insert(key, (lib.id, model.canonical.clone()));
                        }
                    }
                }
            }
        }

        let excluded = libraries
            .iter()
            .flat_map(|lib| lib.excluded.iter().map(move |ex| (normalize(&ex.name), (lib.id, ex.reason.clone()))))
            .collect();

        Ok(Registry { libraries, index, excluded })
    }

    pub fn libraries(&self) -> &[LibrarySpec] {
        &self.libraries
    }

    pub fn library(&self, id: LibraryId) -> &LibrarySpec {
        self.libraries.iter().find(|l| l.id == id).expect("registry construction guarantees every library id is present")
    }

    /// Returns the unique library owning `name` after canonicalization.
    pub fn resolve_model(&self, name: &str) -> Option<(LibraryId, ModelName)> {
        self.index.get(&normalize(name)).cloned()
    }

    /// Why a model was deliberately left out of the rosters, if it was.
    pub fn exclusion_reason(&self, name: &str) -> Option<(LibraryId, &str)> {
        self.excluded.get(&normalize(name)).map(|(lib, reason)| (*lib, reason.as_str()))
    }

    pub fn library_for_modality(&self, modality: Modality) -> LibraryId {
        self.libraries
            .iter()
            .find(|l| l.modality == modality)
            .map(|l| l.id)
            .expect("registry construction guarantees every modality is covered")
    }

    pub fn all_models(&self) -> impl Iterator<Item = (LibraryId, &ModelName)> {
        self.libraries.iter().flat_map(|lib| lib.roster().map(move |m| (lib.id, m)))
    }
}

impl Default for Registry {
    fn default() -> Self {
        Self::bundled()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roster_sizes() {
        let reg = Registry::bundled();
        assert_eq!(reg.library(LibraryId::Pyod).models.len(), 10);
        assert_eq!(reg.library(LibraryId::Pygod).models.len(), 9);
        assert_eq!(reg.library(LibraryId::Tslib).models.len(), 10);
        assert_eq!(reg.all_models().count(), 29);
    }

    #[test]
    fn dataset_rosters() {
        let reg = Registry::bundled();
        assert_eq!(reg.library(LibraryId::Pyod).datasets.len(), 17);
        assert_eq!(reg.library(LibraryId::Pygod).datasets, ["books", "disney", "enron", "reddit", "weibo"]);
        assert_eq!(reg.library(LibraryId::Tslib).datasets, ["MSL", "PSM", "SMAP", "SMD", "SWaT"]);
    }

    #[test]
    fn primary_metrics() {
        let reg = Registry::bundled();
        assert_eq!(reg.library(LibraryId::Pyod).primary_metric, PrimaryMetric::Auroc);
        assert_eq!(reg.library(LibraryId::Pygod).primary_metric, PrimaryMetric::Auroc);
        assert_eq!(reg.library(LibraryId::Tslib).primary_metric, PrimaryMetric::F1);
    }

    #[test]
    fn resolve_examples() {
        let reg = Registry::bundled();
        assert_eq!(reg.resolve_model("VAE"), Some((LibraryId::Pyod, ModelName::new("VAE"))));
        assert_eq!(reg.resolve_model("timesnet"), Some((LibraryId::Tslib, ModelName::new("TimesNet"))));
        assert_eq!(reg.resolve_model("mogaal"), Some((LibraryId::Pyod, ModelName::new("MO-GAAL"))));
        assert_eq!(reg.resolve_model("so_gaal"), Some((LibraryId::Pyod, ModelName::new("SO-GAAL"))));
        assert_eq!(reg.resolve_model("DOMINANT"), None);
        assert!(reg.exclusion_reason("dominant").is_some());
        assert_eq!(reg.resolve_model("IForest"), None);
    }

    #[test]
    fn resolve_is_identity_on_every_canonical_name() {
        let reg = Registry::bundled();
        for (lib, model) in reg.all_models() {
            assert_eq!(reg.resolve_model(model.as_str()), Some((lib, model.clone())));
        }
    }

    #[test]
    fn rosters_are_disjoint() {
        let reg = Registry::bundled();
        let mut seen = BTreeSet::new();
        for (_, model) in reg.all_models() {
            assert!(seen.insert(normalize(model.as_str())), "{model} appears twice");
        }
    }

    #[test]
    fn modality_routing() {
        let reg = Registry::bundled();
        assert_eq!(reg.library_for_modality(Modality::Multivariate), LibraryId::Pyod);
        assert_eq!(reg.library_for_modality(Modality::Graph), LibraryId::Pygod);
        assert_eq!(reg.library_for_modality(Modality::TimeSeries), LibraryId::Tslib);
        let libs: BTreeSet<_> = Modality::ALL.iter().map(|m| reg.library_for_modality(*m)).collect();
        assert_eq!(libs.len(), 3);
    }

    #[test]
    fn ambiguous_alias_is_rejected_at_construction() {
        let manifest = r#"{"version":1,"libraries":[
            {"id":"pyod","modality":"multivariate","primary_metric":"auroc",
             "models":[{"canonical":"GAN","aliases":["shared"]}],"datasets":[]},
            {"id":"pygod","modality":"graph","primary_metric":"auroc",
             "models":[{"canonical":"Other","aliases":["Shared"]}],"datasets":[]},
            {"id":"tslib","modality":"time_series","primary_metric":"f1",
             "models":[],"datasets":[]}]}"#;
        let err = Registry::from_json(manifest).unwrap_err();
        assert!(matches!(err, RegistryError::AmbiguousName { .. }), "{err}");
    }

    #[test]
    fn parses_library_and_modality_names() {
        assert_eq!("PyOD".parse::<LibraryId>().unwrap(), LibraryId::Pyod);
        assert_eq!("time-series".parse::<Modality>().unwrap(), Modality::TimeSeries);
        assert_eq!("time_series".parse::<Modality>().unwrap(), Modality::TimeSeries);
        assert!("image".parse::<Modality>().is_err());
    }
}
