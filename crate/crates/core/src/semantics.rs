//! Per-space model repositories, catalog records restricted to a DCAT-v2
//! subset, and the cross-space semantic index.
//!
//! The principal property set is fixed to {title, description, publisher,
//! theme, conforms_to, distribution_endpoint, issued}. Conversion between
//! spaces copies principal properties verbatim, remaps `conforms_to` through
//! the index when a mutually-best mapping exists, and drops extensions the
//! target space does not understand. Conversion never fails; loss of model
//! portability is reported as a warning, not an error.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::registry::SpaceDefinition;
use crate::trust::encoding::{self, tag, Canonical, EncodingError, Reader};
use crate::trust::{ParticipantId, Signature, SimTime, SpaceId};

pub type ModelId = String;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemanticsError {
    #[error("model ({0}, v{1}) is already registered")]
    DuplicateModel(ModelId, u32),
    #[error("model {0} is not registered in space {1}")]
    UnknownModel(ModelId, SpaceId),
    #[error("index entries must pair models from different spaces")]
    SameSpacePair,
    #[error("catalog record {0} already exists")]
    DuplicateRecord(String),
}

/// A data model or vocabulary entry: a name plus attribute/unit pairs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticModel {
    pub model_id: ModelId,
    pub space_id: SpaceId,
    pub name: String,
    pub version: u32,
    pub attributes: Vec<(String, String)>,
}

/// Space-operated repository of models and vocabularies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRepository {
    pub space_id: SpaceId,
    pub(crate) models: BTreeMap<(ModelId, u32), SemanticModel>,
}

impl ModelRepository {
    pub fn new(space_id: SpaceId) -> Self {
        Self {
            space_id,
            models: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, model: SemanticModel) -> Result<ModelId, SemanticsError> {
        let key = (model.model_id.clone(), model.version);
        if self.models.contains_key(&key) {
            return Err(SemanticsError::DuplicateModel(model.model_id, model.version));
        }
        let id = model.model_id.clone();
        self.models.insert(key, model);
        Ok(id)
    }

    pub fn get(&self, model_id: &str, version: u32) -> Option<&SemanticModel> {
        self.models.get(&(model_id.to_string(), version))
    }

    pub fn contains(&self, model_id: &str) -> bool {
        self.models.keys().any(|(id, _)| id == model_id)
    }

    /// Highest registered version of a model id.
    pub fn latest(&self, model_id: &str) -> Option<&SemanticModel> {
        self.models
            .iter()
            .filter(|((id, _), _)| id == model_id)
            .map(|(_, model)| model)
            .next_back()
    }

    pub fn list(&self) -> impl Iterator<Item = &SemanticModel> {
        self.models.values()
    }

    /// Distinct model ids in ascending order.
    pub fn model_ids(&self) -> Vec<ModelId> {
        let ids: BTreeSet<ModelId> = self.models.keys().map(|(id, _)| id.clone()).collect();
        ids.into_iter().collect()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }
}

// ---------------------------------------------------------------------------
// catalog records
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionEndpoint {
    pub domain: String,
    pub path: String,
}

/// Dataset advertisement in the shared DCAT-v2 subset. Everything outside
/// `extensions` is a principal property common to both spaces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogRecord {
    pub record_id: String,
    pub title: String,
    pub description: String,
    pub publisher: ParticipantId,
    pub theme: Vec<String>,
    pub conforms_to: ModelId,
    pub distribution_endpoint: DistributionEndpoint,
    pub issued: SimTime,
    #[serde(default)]
    pub extensions: BTreeMap<String, String>,
}

pub const PRINCIPAL_PROPERTIES: &[&str] = &[
    "title",
    "description",
    "publisher",
    "theme",
    "conforms_to",
    "distribution_endpoint",
    "issued",
];

impl Canonical for CatalogRecord {
    const TAG: u8 = tag::CATALOG_RECORD;

    fn encode_body(&self, out: &mut Vec<u8>) {
        encoding::put_str(out, &self.record_id);
        encoding::put_str(out, &self.title);
        encoding::put_str(out, &self.description);
        encoding::put_str(out, &self.publisher);
        encoding::put_str_list(out, self.theme.iter(), self.theme.len());
        encoding::put_str(out, &self.conforms_to);
        encoding::put_str(out, &self.distribution_endpoint.domain);
        encoding::put_str(out, &self.distribution_endpoint.path);
        encoding::put_u64(out, self.issued);
        encoding::put_str_map(out, self.extensions.iter(), self.extensions.len());
    }

    fn decode_body(r: &mut Reader<'_>) -> Result<Self, EncodingError> {
        Ok(CatalogRecord {
            record_id: r.take_str("record_id")?,
            title: r.take_str("title")?,
            description: r.take_str("description")?,
            publisher: r.take_str("publisher")?,
            theme: r.take_str_list("theme")?,
            conforms_to: r.take_str("conforms_to")?,
            distribution_endpoint: DistributionEndpoint {
                domain: r.take_str("distribution domain")?,
                path: r.take_str("distribution path")?,
            },
            issued: r.take_u64("issued")?,
            extensions: r.take_str_map("extensions")?,
        })
    }
}

/// Catalog validation outcome. Presence checks run over the principal
/// properties in declared order, then `conforms_to` must resolve locally.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CatalogCheck {
    Ok,
    MissingPrincipalProperty(String),
    UnknownModel(ModelId),
}

pub fn catalog_validate(record: &CatalogRecord, local_repo: &ModelRepository) -> CatalogCheck {
    if record.title.trim().is_empty() {
        return CatalogCheck::MissingPrincipalProperty("title".into());
    }
    if record.description.trim().is_empty() {
        return CatalogCheck::MissingPrincipalProperty("description".into());
    }
    if record.publisher.trim().is_empty() {
        return CatalogCheck::MissingPrincipalProperty("publisher".into());
    }
    if record.theme.is_empty() {
        return CatalogCheck::MissingPrincipalProperty("theme".into());
    }
    if record.conforms_to.trim().is_empty() {
        return CatalogCheck::MissingPrincipalProperty("conforms_to".into());
    }
    if record.distribution_endpoint.domain.trim().is_empty() {
        return CatalogCheck::MissingPrincipalProperty("distribution_endpoint".into());
    }
    if !local_repo.contains(&record.conforms_to) {
        return CatalogCheck::UnknownModel(record.conforms_to.clone());
    }
    CatalogCheck::Ok
}

/// Warnings surfaced by cross-space conversion; never fatal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "warning", rename_all = "kebab-case")]
pub enum ConversionWarning {
    Portability { model_id: ModelId },
    DroppedExtension { key: String },
}

impl fmt::Display for ConversionWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConversionWarning::Portability { model_id } => {
                write!(f, "portability:{model_id}")
            }
            ConversionWarning::DroppedExtension { key } => {
                write!(f, "dropped-extension:{key}")
            }
        }
    }
}

/// Convert a record for use in another space. Principal properties are
/// copied verbatim; `conforms_to` is remapped only through a mutually-best
/// index mapping so converting back restores the original id exactly.
pub fn catalog_convert(
    record: &CatalogRecord,
    from_space: &SpaceDefinition,
    to_space: &SpaceDefinition,
    index: &SemanticIndex,
) -> (CatalogRecord, Vec<ConversionWarning>) {
    let mut warnings = Vec::new();
    let mut converted = record.clone();

    match index.mutual_best(&from_space.space_id, &record.conforms_to, &to_space.space_id) {
        Some(mapped) => converted.conforms_to = mapped,
        None => warnings.push(ConversionWarning::Portability {
            model_id: record.conforms_to.clone(),
        }),
    }

    converted.extensions = BTreeMap::new();
    for (key, value) in &record.extensions {
        if to_space.catalog_extension_keys.contains(key) {
            converted.extensions.insert(key.clone(), value.clone());
        } else {
            warnings.push(ConversionWarning::DroppedExtension { key: key.clone() });
        }
    }

    (converted, warnings)
}

/// Per-space catalog store. When the space has the catalog-signing
/// capability, publishers' signatures over the canonical record are kept
/// alongside and can be checked at query time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogStore {
    pub space_id: SpaceId,
    pub records: BTreeMap<String, CatalogRecord>,
    pub signatures: BTreeMap<String, Signature>,
    pub(crate) record_counter: u64,
}

impl CatalogStore {
    pub fn new(space_id: SpaceId) -> Self {
        Self {
            space_id,
            records: BTreeMap::new(),
            signatures: BTreeMap::new(),
            record_counter: 0,
        }
    }

    pub fn next_record_id(&mut self) -> String {
        self.record_counter += 1;
        format!("cat-{}-{:04}", self.space_id, self.record_counter)
    }

    pub fn insert(
        &mut self,
        record: CatalogRecord,
        signature: Option<Signature>,
    ) -> Result<String, SemanticsError> {
        if self.records.contains_key(&record.record_id) {
            return Err(SemanticsError::DuplicateRecord(record.record_id));
        }
        let id = record.record_id.clone();
        if let Some(sig) = signature {
            self.signatures.insert(id.clone(), sig);
        }
        self.records.insert(id.clone(), record);
        Ok(id)
    }

    pub fn get(&self, record_id: &str) -> Option<&CatalogRecord> {
        self.records.get(record_id)
    }

    pub fn list(&self) -> impl Iterator<Item = &CatalogRecord> {
        self.records.values()
    }
}

// ---------------------------------------------------------------------------
// semantic index
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ModelRef {
    pub space_id: SpaceId,
    pub model_id: ModelId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndexOrigin {
    Manual,
    AutoSuggested,
}

/// One correspondence between models of two different spaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub model_a: ModelRef,
    pub model_b: ModelRef,
    pub confidence: f64,
    pub origin: IndexOrigin,
}

impl IndexEntry {
    /// Normalize so the lexicographically smaller reference is `model_a`;
    /// entries are symmetric and stored once.
    fn normalized(mut self) -> Self {
        if self.model_b < self.model_a {
            std::mem::swap(&mut self.model_a, &mut self.model_b);
        }
        self
    }
}

/// Cross-space correspondence registry, queryable in both directions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SemanticIndex {
    pub(crate) entries: Vec<IndexEntry>,
}

impl SemanticIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// Add or refresh an entry. Both models must exist in their space's
    /// repository. Re-adding an existing pair is idempotent; the higher
    /// confidence wins.
    pub fn add(
        &mut self,
        entry: IndexEntry,
        repositories: &BTreeMap<SpaceId, ModelRepository>,
    ) -> Result<IndexEntry, SemanticsError> {
        if entry.model_a.space_id == entry.model_b.space_id {
            return Err(SemanticsError::SameSpacePair);
        }
        for model_ref in [&entry.model_a, &entry.model_b] {
            let known = repositories
                .get(&model_ref.space_id)
                .is_some_and(|repo| repo.contains(&model_ref.model_id));
            if !known {
                return Err(SemanticsError::UnknownModel(
                    model_ref.model_id.clone(),
                    model_ref.space_id.clone(),
                ));
            }
        }
        let entry = entry.normalized();
        if let Some(existing) = self
            .entries
            .iter_mut()
            .find(|e| e.model_a == entry.model_a && e.model_b == entry.model_b)
        {
            if entry.confidence > existing.confidence {
                *existing = entry;
            }
            return Ok(existing.clone());
        }
        self.entries.push(entry.clone());
        self.entries.sort_by(|a, b| {
            (&a.model_a, &a.model_b).cmp(&(&b.model_a, &b.model_b))
        });
        Ok(entry)
    }

    /// All mappings of `(space, model)` into `to_space`, highest confidence
    /// first, ties by target model id.
    pub fn mappings(&self, space_id: &str, model_id: &str, to_space: &str) -> Vec<(ModelId, f64)> {
        let mut found: Vec<(ModelId, f64)> = self
            .entries
            .iter()
            .filter_map(|e| {
                if e.model_a.space_id == space_id
                    && e.model_a.model_id == model_id
                    && e.model_b.space_id == to_space
                {
                    Some((e.model_b.model_id.clone(), e.confidence))
                } else if e.model_b.space_id == space_id
                    && e.model_b.model_id == model_id
                    && e.model_a.space_id == to_space
                {
                    Some((e.model_a.model_id.clone(), e.confidence))
                } else {
                    None
                }
            })
            .collect();
        found.sort_by(|(id_a, conf_a), (id_b, conf_b)| {
            conf_b
                .partial_cmp(conf_a)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| id_a.cmp(id_b))
        });
        found
    }

    pub fn lookup(&self, space_id: &str, model_id: &str, to_space: &str) -> Option<(ModelId, f64)> {
        self.mappings(space_id, model_id, to_space).into_iter().next()
    }

    /// The mapping used by conversion: `b` is returned only when `b` is the
    /// best mapping of `a` and `a` is the best mapping of `b`, so the remap
    /// is invertible.
    pub fn mutual_best(&self, space_id: &str, model_id: &str, to_space: &str) -> Option<ModelId> {
        let (best_forward, _) = self.lookup(space_id, model_id, to_space)?;
        let (best_back, _) = self.lookup(to_space, &best_forward, space_id)?;
        (best_back == model_id).then_some(best_forward)
    }
}

// ---------------------------------------------------------------------------
// name-identification suggestions
// ---------------------------------------------------------------------------

/// Lowercased alphanumeric tokens of a model's name plus attribute names.
fn model_tokens(model: &SemanticModel) -> BTreeSet<String> {
    let mut text = model.name.clone();
    for (attr, _) in &model.attributes {
        text.push(' ');
        text.push_str(attr);
    }
    text.to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Token-set Jaccard similarity; 0.0 when both sets are empty.
pub fn name_similarity(a: &SemanticModel, b: &SemanticModel) -> f64 {
    let ta = model_tokens(a);
    let tb = model_tokens(b);
    let union = ta.union(&tb).count();
    if union == 0 {
        return 0.0;
    }
    let intersection = ta.intersection(&tb).count();
    intersection as f64 / union as f64
}

/// Propose cross-space correspondences by token overlap. One suggestion per
/// model-id pair (latest versions compared), confidence at or above the
/// threshold, ordered by confidence descending then model ids ascending.
pub fn index_suggest(
    repo_a: &ModelRepository,
    repo_b: &ModelRepository,
    threshold: f64,
) -> Vec<IndexEntry> {
    let mut suggestions = Vec::new();
    for id_a in repo_a.model_ids() {
        let Some(model_a) = repo_a.latest(&id_a) else {
            continue;
        };
        for id_b in repo_b.model_ids() {
            let Some(model_b) = repo_b.latest(&id_b) else {
                continue;
            };
            let confidence = name_similarity(model_a, model_b);
            if confidence >= threshold {
                suggestions.push(IndexEntry {
                    model_a: ModelRef {
                        space_id: repo_a.space_id.clone(),
                        model_id: id_a.clone(),
                    },
                    model_b: ModelRef {
                        space_id: repo_b.space_id.clone(),
                        model_id: id_b.clone(),
                    },
                    confidence,
                    origin: IndexOrigin::AutoSuggested,
                });
            }
        }
    }
    suggestions.sort_by(|x, y| {
        y.confidence
            .partial_cmp(&x.confidence)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| {
                (&x.model_a.model_id, &x.model_b.model_id)
                    .cmp(&(&y.model_a.model_id, &y.model_b.model_id))
            })
    });
    suggestions
}
