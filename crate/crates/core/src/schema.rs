//! Ontology and entity database.
//!
//! A [`Schema`] lists the supported domains, their slots and the value pools
//! of categorical slots. A [`Database`] holds one flat attribute table per
//! bookable domain. Both are immutable after loading and can be shared
//! freely between worker threads.
//!
//! Slots are addressed as `domain-slot` strings such as `restaurant-book time`
//! or `taxi-arriveby`. [`Schema::resolve`] maps spelling variants that language
//! models tend to produce (`taxi-leave at`, `restaurant-booktime`) onto the
//! canonical name.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::{is_clock_time, is_dontcare, normalize};

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse {what}: {source}")]
    Parse {
        what: String,
        source: serde_json::Error,
    },
    #[error("schema defines no domains")]
    NoDomains,
    #[error("duplicate domain `{0}`")]
    DuplicateDomain(String),
    #[error("duplicate slot `{slot}` in domain `{domain}`")]
    DuplicateSlot { domain: String, slot: String },
    #[error("invalid name `{0}`: domain names must be non-empty and must not contain '-'")]
    InvalidName(String),
    #[error("categorical slot `{0}` has an empty value pool")]
    EmptyPool(String),
    #[error("time slot `{slot}` has pool value `{value}` that is not in xx:xx form")]
    BadTimeValue { slot: String, value: String },
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("unknown slot `{0}`")]
    UnknownSlot(String),
    #[error("slot `{0}` is not backed by a database field")]
    NoDbField(String),
    #[error("entity #{index} in `{domain}` lacks attribute `{field}`")]
    MissingField {
        domain: String,
        index: usize,
        field: String,
    },
    #[error("database table `{domain}`: {message}")]
    BadTable { domain: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotKind {
    Categorical,
    Open,
    Time,
    Boolean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    pub kind: SlotKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool: Option<Vec<String>>,
    /// Entity attribute backing this slot, when the domain has a table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub db_field: Option<String>,
    /// Alternative spellings accepted by [`Schema::resolve`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

impl SlotSpec {
    /// Whether `value` is admissible for this slot. `dontcare` is always
    /// admissible.
    pub fn admits(&self, value: &str) -> bool {
        if is_dontcare(value) {
            return true;
        }
        match self.kind {
            SlotKind::Categorical | SlotKind::Boolean => {
                let v = normalize(value);
                self.pool
                    .as_deref()
                    .unwrap_or_default()
                    .iter()
                    .any(|p| normalize(p) == v)
            }
            SlotKind::Time => is_clock_time(value.trim()),
            SlotKind::Open => !value.trim().is_empty(),
        }
    }

    pub fn has_pool(&self) -> bool {
        matches!(self.kind, SlotKind::Categorical | SlotKind::Boolean)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub name: String,
    pub slots: Vec<SlotSpec>,
}

impl DomainSpec {
    pub fn slot(&self, name: &str) -> Option<&SlotSpec> {
        self.slots.iter().find(|s| s.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    pub domains: Vec<DomainSpec>,
}

const MULTIWOZ_SCHEMA: &str = include_str!("../fixtures/schema.json");

/// Splits `domain-slot` at the first dash.
pub fn split_slot(key: &str) -> Option<(&str, &str)> {
    let (d, s) = key.split_once('-')?;
    (!d.is_empty() && !s.is_empty()).then_some((d, s))
}

fn compact(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

impl Schema {
    pub fn from_json_str(text: &str) -> Result<Self, SchemaError> {
        let schema: Schema = serde_json::from_str(text).map_err(|source| SchemaError::Parse {
            what: "schema".into(),
            source,
        })?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SchemaError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| SchemaError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// The bundled five-domain MultiWOZ ontology.
    pub fn multiwoz() -> Self {
        Self::from_json_str(MULTIWOZ_SCHEMA).expect("bundled schema is valid")
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.domains.is_empty() {
            return Err(SchemaError::NoDomains);
        }
        let mut domains = HashSet::new();
        for d in &self.domains {
            if d.name.is_empty() || d.name.contains('-') {
                return Err(SchemaError::InvalidName(d.name.clone()));
            }
            if !domains.insert(d.name.as_str()) {
                return Err(SchemaError::DuplicateDomain(d.name.clone()));
            }
            let mut slots = HashSet::new();
            for s in &d.slots {
                if s.name.trim().is_empty() {
                    return Err(SchemaError::InvalidName(format!("{}-", d.name)));
                }
                if !slots.insert(compact(&s.name)) {
                    return Err(SchemaError::DuplicateSlot {
                        domain: d.name.clone(),
                        slot: s.name.clone(),
                    });
                }
                let key = format!("{}-{}", d.name, s.name);
                match s.kind {
                    SlotKind::Categorical | SlotKind::Boolean => {
                        if s.pool.as_ref().is_none_or(|p| p.is_empty()) {
                            return Err(SchemaError::EmptyPool(key));
                        }
                    }
                    SlotKind::Time => {
                        for v in s.pool.iter().flatten() {
                            if !is_clock_time(v) {
                                return Err(SchemaError::BadTimeValue {
                                    slot: key,
                                    value: v.clone(),
                                });
                            }
                        }
                    }
                    SlotKind::Open => {}
                }
            }
        }
        Ok(())
    }

    pub fn domain(&self, name: &str) -> Option<&DomainSpec> {
        self.domains.iter().find(|d| d.name == name)
    }

    pub fn domain_names(&self) -> Vec<String> {
        self.domains.iter().map(|d| d.name.clone()).collect()
    }

    /// Looks up a canonical `domain-slot` key.
    pub fn slot(&self, key: &str) -> Option<&SlotSpec> {
        let (d, s) = split_slot(key)?;
        self.domain(d)?.slot(s)
    }

    /// Maps a possibly misspelled `domain-slot` onto its canonical key.
    ///
    /// Matching ignores case, spaces and punctuation inside the slot part and
    /// consults the slot's aliases.
    pub fn resolve(&self, raw: &str) -> Option<String> {
        let raw = raw.trim().to_lowercase();
        let (d, s) = split_slot(&raw)?;
        let domain = self.domain(d.trim())?;
        let wanted = compact(s);
        domain
            .slots
            .iter()
            .find(|spec| {
                compact(&spec.name) == wanted || spec.aliases.iter().any(|a| compact(a) == wanted)
            })
            .map(|spec| format!("{}-{}", domain.name, spec.name))
    }

    /// Position of a slot in schema order (domain order, then slot order).
    pub fn slot_rank(&self, key: &str) -> Option<usize> {
        let (d, s) = split_slot(key)?;
        let mut rank = 0;
        for domain in &self.domains {
            if domain.name == d {
                return domain.slots.iter().position(|x| x.name == s).map(|p| rank + p);
            }
            rank += domain.slots.len();
        }
        None
    }

    /// All canonical slot keys in schema order.
    pub fn slot_keys(&self) -> Vec<String> {
        self.domains
            .iter()
            .flat_map(|d| d.slots.iter().map(move |s| format!("{}-{}", d.name, s.name)))
            .collect()
    }
}

/// A flat attribute map describing one bookable place or service.
pub type Entity = IndexMap<String, String>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Database {
    pub tables: IndexMap<String, Vec<Entity>>,
}

fn to_entity(domain: &str, index: usize, v: serde_json::Value) -> Result<Entity, SchemaError> {
    let serde_json::Value::Object(map) = v else {
        return Err(SchemaError::BadTable {
            domain: domain.into(),
            message: format!("entry #{index} is not an object"),
        });
    };
    Ok(map
        .into_iter()
        .filter_map(|(k, v)| {
            let s = match v {
                serde_json::Value::String(s) => s,
                serde_json::Value::Null => return None,
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => if b { "yes" } else { "no" }.into(),
                other => other.to_string(),
            };
            Some((k, s))
        })
        .collect())
}

impl Database {
    pub fn table(&self, domain: &str) -> Option<&[Entity]> {
        self.tables.get(domain).map(Vec::as_slice)
    }

    /// Adds a table from the JSON text of an array of objects.
    pub fn insert_json(&mut self, domain: &str, text: &str) -> Result<(), SchemaError> {
        let raw: Vec<serde_json::Value> =
            serde_json::from_str(text).map_err(|source| SchemaError::Parse {
                what: format!("database table `{domain}`"),
                source,
            })?;
        let rows = raw
            .into_iter()
            .enumerate()
            .map(|(i, v)| to_entity(domain, i, v))
            .collect::<Result<Vec<_>, _>>()?;
        self.tables.insert(domain.to_owned(), rows);
        Ok(())
    }

    /// Loads `<dir>/<domain>.json` for every schema domain that has one.
    pub fn load_dir(dir: impl AsRef<Path>, schema: &Schema) -> Result<Self, SchemaError> {
        let dir = dir.as_ref();
        let mut db = Database::default();
        for domain in &schema.domains {
            let path = dir.join(format!("{}.json", domain.name));
            if !path.exists() {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|source| SchemaError::Io {
                path: path.clone(),
                source,
            })?;
            db.insert_json(&domain.name, &text)?;
        }
        db.validate(schema)?;
        Ok(db)
    }

    /// Checks that every table belongs to a schema domain and every backed
    /// attribute is present on every entity.
    pub fn validate(&self, schema: &Schema) -> Result<(), SchemaError> {
        for (name, rows) in &self.tables {
            let domain = schema
                .domain(name)
                .ok_or_else(|| SchemaError::UnknownDomain(name.clone()))?;
            for (index, entity) in rows.iter().enumerate() {
                for field in domain.slots.iter().filter_map(|s| s.db_field.as_ref()) {
                    if !entity.contains_key(field) {
                        return Err(SchemaError::MissingField {
                            domain: name.clone(),
                            index,
                            field: field.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Entities of `domain` matching every filter, in table order.
    ///
    /// Filter keys may be bare slot names (`area`) or full keys
    /// (`restaurant-area`); values are compared after [`normalize`].
    pub fn query<'a, K, V>(
        &'a self,
        schema: &Schema,
        domain: &str,
        filters: impl IntoIterator<Item = (K, V)>,
    ) -> Result<Vec<&'a Entity>, SchemaError>
    where
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let spec = schema
            .domain(domain)
            .ok_or_else(|| SchemaError::UnknownDomain(domain.into()))?;
        let rows = self
            .tables
            .get(domain)
            .ok_or_else(|| SchemaError::UnknownDomain(domain.into()))?;
        let mut resolved = Vec::new();
        for (k, v) in filters {
            let k = k.as_ref();
            let key = if k.starts_with(&format!("{domain}-")) {
                k.to_owned()
            } else {
                format!("{domain}-{k}")
            };
            let canonical = schema
                .resolve(&key)
                .ok_or_else(|| SchemaError::UnknownSlot(key.clone()))?;
            let (_, slot) = split_slot(&canonical).expect("canonical key");
            let field = spec
                .slot(slot)
                .and_then(|s| s.db_field.clone())
                .ok_or(SchemaError::NoDbField(canonical.clone()))?;
            resolved.push((field, normalize(v.as_ref())));
        }
        Ok(rows
            .iter()
            .filter(|e| {
                resolved
                    .iter()
                    .all(|(f, v)| e.get(f).is_some_and(|x| normalize(x) == *v))
            })
            .collect())
    }
}
