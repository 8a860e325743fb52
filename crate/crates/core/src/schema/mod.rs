//! The hierarchical data model shared by every module.
//!
//! All node types descend from the root `Thing`. The first layer below the
//! root is `Entity`, `Event`, `Datetime`, `Location` and `Document`; every
//! further type is a refinement of one of those. Attribute declarations are
//! inherited along the path, and relationship kinds constrain which node
//! types may sit at either end of an edge.

mod defaults;
mod grade;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use grade::{
    grade_at_least, Actor, ActorKind, ConfidenceGrade, Credibility, GradeParseError, Reliability, AUTOMATION_CAP,
};

pub const ROOT: &str = "Thing";
pub const PATH_SEPARATOR: char = '/';

/// First-layer types directly below the root.
pub const FIRST_LAYER: [&str; 5] = ["Entity", "Event", "Datetime", "Location", "Document"];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SchemaError {
    #[error("invalid type path {0:?}")]
    InvalidPath(String),
    #[error("unknown parent type {0}")]
    UnknownParent(TypePath),
    #[error("type {0} is already registered")]
    DuplicatePath(TypePath),
    #[error("type {0} is not registered")]
    UnregisteredType(TypePath),
    #[error("attribute {attribute:?} on {path} collides with an inherited declaration")]
    AttributeCollision { path: TypePath, attribute: String },
    #[error("attribute {attribute:?} is not declared for {path}")]
    UndeclaredAttribute { path: TypePath, attribute: String },
    #[error("attribute {attribute:?} on {path} expects {expected}, got {actual}")]
    AttributeKind {
        path: TypePath,
        attribute: String,
        expected: ValueKind,
        actual: ValueKind,
    },
    #[error("unknown relationship kind {0:?}")]
    UnknownRelationship(String),
    #[error("relationship {kind:?} does not allow {from} -> {to}")]
    EndpointViolation {
        kind: String,
        from: TypePath,
        to: TypePath,
    },
    #[error("schema file: {0}")]
    File(String),
}

/// Full path of a type from the root, e.g. `Thing/Entity/Person`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypePath(Vec<String>);

impl TypePath {
    pub fn root() -> Self {
        TypePath(vec![ROOT.to_string()])
    }

    pub fn parse(s: &str) -> Result<Self, SchemaError> {
        let segments: Vec<String> = s.split(PATH_SEPARATOR).map(str::to_string).collect();
        if segments.first().map(String::as_str) != Some(ROOT)
            || segments.iter().any(|seg| seg.is_empty() || seg.trim() != seg)
        {
            return Err(SchemaError::InvalidPath(s.to_string()));
        }
        Ok(TypePath(segments))
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }

    pub fn depth(&self) -> usize {
        self.0.len() - 1
    }

    pub fn name(&self) -> &str {
        self.0.last().map(String::as_str).unwrap_or(ROOT)
    }

    pub fn parent(&self) -> Option<TypePath> {
        (self.0.len() > 1).then(|| TypePath(self.0[..self.0.len() - 1].to_vec()))
    }

    pub fn child(&self, name: &str) -> TypePath {
        let mut segments = self.0.clone();
        segments.push(name.to_string());
        TypePath(segments)
    }

    /// Inclusive prefix test: every path descends from itself.
    pub fn starts_with(&self, ancestor: &TypePath) -> bool {
        self.0.len() >= ancestor.0.len() && self.0[..ancestor.0.len()] == ancestor.0[..]
    }

    /// The first-layer ancestor (`Thing/Entity` for `Thing/Entity/Person`).
    pub fn first_layer(&self) -> Option<TypePath> {
        (self.0.len() >= 2).then(|| TypePath(self.0[..2].to_vec()))
    }

    /// Paths from the root down to and including `self`.
    pub fn lineage(&self) -> impl Iterator<Item = TypePath> + '_ {
        (1..=self.0.len()).map(|n| TypePath(self.0[..n].to_vec()))
    }
}

impl fmt::Display for TypePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join("/"))
    }
}

impl fmt::Debug for TypePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TypePath({self})")
    }
}

impl FromStr for TypePath {
    type Err = SchemaError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TypePath::parse(s)
    }
}

impl Serialize for TypePath {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TypePath {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        TypePath::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueKind {
    Text,
    Integer,
    Real,
    Timestamp,
    Interval,
    GeoPoint,
    BinaryReference,
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ValueKind::Text => "text",
            ValueKind::Integer => "integer",
            ValueKind::Real => "real",
            ValueKind::Timestamp => "timestamp",
            ValueKind::Interval => "interval",
            ValueKind::GeoPoint => "geo-point",
            ValueKind::BinaryReference => "binary-reference",
        };
        f.write_str(s)
    }
}

/// Half-open time interval `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

impl Interval {
    /// Closed-range intersection test against `[t0, t1]`.
    pub fn intersects(&self, t0: DateTime<Utc>, t1: DateTime<Utc>) -> bool {
        self.start <= t1 && self.end >= t0
    }
}

/// A typed attribute value. Binary payloads are never embedded; they are
/// referenced by content digest in object storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum Value {
    Text(String),
    Integer(i64),
    Real(f64),
    Timestamp(DateTime<Utc>),
    Interval(Interval),
    GeoPoint { lat: f64, lon: f64 },
    BinaryReference(String),
}

impl Value {
    pub fn kind(&self) -> ValueKind {
        match self {
            Value::Text(_) => ValueKind::Text,
            Value::Integer(_) => ValueKind::Integer,
            Value::Real(_) => ValueKind::Real,
            Value::Timestamp(_) => ValueKind::Timestamp,
            Value::Interval(_) => ValueKind::Interval,
            Value::GeoPoint { .. } => ValueKind::GeoPoint,
            Value::BinaryReference(_) => ValueKind::BinaryReference,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            Value::Text(s) | Value::BinaryReference(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_timestamp(&self) -> Option<DateTime<Utc>> {
        match self {
            Value::Timestamp(t) => Some(*t),
            _ => None,
        }
    }

    pub fn as_interval(&self) -> Option<Interval> {
        match self {
            Value::Interval(i) => Some(*i),
            Value::Timestamp(t) => Some(Interval { start: *t, end: *t }),
            _ => None,
        }
    }

    pub fn as_integer(&self) -> Option<i64> {
        match self {
            Value::Integer(i) => Some(*i),
            _ => None,
        }
    }
}

pub type Attributes = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeDef {
    pub path: TypePath,
    /// Attributes declared on this type itself (not inherited ones).
    pub declared: BTreeMap<String, ValueKind>,
}

/// A named edge kind. Empty endpoint lists mean "any type".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationshipKind {
    pub name: String,
    #[serde(default)]
    pub from: BTreeSet<TypePath>,
    #[serde(default)]
    pub to: BTreeSet<TypePath>,
}

impl RelationshipKind {
    fn allows(&self, from: &TypePath, to: &TypePath) -> bool {
        let ok = |allowed: &BTreeSet<TypePath>, t: &TypePath| {
            allowed.is_empty() || allowed.iter().any(|a| t.starts_with(a))
        };
        ok(&self.from, from) && ok(&self.to, to)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationReceipt {
    pub path: TypePath,
    pub effective_attributes: BTreeMap<String, ValueKind>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaRegistry {
    types: BTreeMap<TypePath, TypeDef>,
    relationships: BTreeMap<String, RelationshipKind>,
}

impl SchemaRegistry {
    /// A registry holding only the root type.
    pub fn empty() -> Self {
        let mut types = BTreeMap::new();
        types.insert(
            TypePath::root(),
            TypeDef {
                path: TypePath::root(),
                declared: BTreeMap::new(),
            },
        );
        SchemaRegistry {
            types,
            relationships: BTreeMap::new(),
        }
    }

    /// The shipped investigation schema.
    pub fn default_registry() -> Self {
        defaults::build()
    }

    pub fn register_type(
        &mut self,
        path: TypePath,
        attributes: BTreeMap<String, ValueKind>,
    ) -> Result<RegistrationReceipt, SchemaError> {
        if self.types.contains_key(&path) {
            return Err(SchemaError::DuplicatePath(path));
        }
        let parent = path.parent().ok_or_else(|| SchemaError::DuplicatePath(path.clone()))?;
        if !self.types.contains_key(&parent) {
            return Err(SchemaError::UnknownParent(parent));
        }
        let inherited = self.effective_attributes(&parent)?;
        if let Some(name) = attributes.keys().find(|name| inherited.contains_key(*name)) {
            return Err(SchemaError::AttributeCollision {
                path,
                attribute: name.clone(),
            });
        }
        self.types.insert(
            path.clone(),
            TypeDef {
                path: path.clone(),
                declared: attributes,
            },
        );
        let effective_attributes = self.effective_attributes(&path)?;
        Ok(RegistrationReceipt {
            path,
            effective_attributes,
        })
    }

    pub fn register_relationship(&mut self, kind: RelationshipKind) {
        match self.relationships.get_mut(&kind.name) {
            Some(existing) => {
                existing.from.extend(kind.from);
                existing.to.extend(kind.to);
            }
            None => {
                self.relationships.insert(kind.name.clone(), kind);
            }
        }
    }

    pub fn contains(&self, path: &TypePath) -> bool {
        self.types.contains_key(path)
    }

    pub fn types(&self) -> impl Iterator<Item = &TypePath> {
        self.types.keys()
    }

    pub fn type_count(&self) -> usize {
        self.types.len()
    }

    pub fn relationship_kinds(&self) -> impl Iterator<Item = &RelationshipKind> {
        self.relationships.values()
    }

    pub fn relationship(&self, name: &str) -> Option<&RelationshipKind> {
        self.relationships.get(name)
    }

    pub fn is_subtype(&self, a: &TypePath, b: &TypePath) -> Result<bool, SchemaError> {
        for p in [a, b] {
            if !self.contains(p) {
                return Err(SchemaError::UnregisteredType(p.clone()));
            }
        }
        Ok(a.starts_with(b))
    }

    pub fn declared_attributes(&self, path: &TypePath) -> Result<&BTreeMap<String, ValueKind>, SchemaError> {
        self.types
            .get(path)
            .map(|def| &def.declared)
            .ok_or_else(|| SchemaError::UnregisteredType(path.clone()))
    }

    /// Declared attributes of `path` and all its ancestors.
    pub fn effective_attributes(&self, path: &TypePath) -> Result<BTreeMap<String, ValueKind>, SchemaError> {
        if !self.contains(path) {
            return Err(SchemaError::UnregisteredType(path.clone()));
        }
        let mut out = BTreeMap::new();
        for ancestor in path.lineage() {
            if let Some(def) = self.types.get(&ancestor) {
                out.extend(def.declared.iter().map(|(k, v)| (k.clone(), *v)));
            }
        }
        Ok(out)
    }

    pub fn validate_attributes(&self, path: &TypePath, attributes: &Attributes) -> Result<(), SchemaError> {
        let effective = self.effective_attributes(path)?;
        for (name, value) in attributes {
            let expected = *effective.get(name).ok_or_else(|| SchemaError::UndeclaredAttribute {
                path: path.clone(),
                attribute: name.clone(),
            })?;
            if value.kind() != expected {
                return Err(SchemaError::AttributeKind {
                    path: path.clone(),
                    attribute: name.clone(),
                    expected,
                    actual: value.kind(),
                });
            }
        }
        Ok(())
    }

    pub fn check_edge(&self, kind: &str, from: &TypePath, to: &TypePath) -> Result<(), SchemaError> {
        let rel = self
            .relationships
            .get(kind)
            .ok_or_else(|| SchemaError::UnknownRelationship(kind.to_string()))?;
        if rel.allows(from, to) {
            Ok(())
        } else {
            Err(SchemaError::EndpointViolation {
                kind: kind.to_string(),
                from: from.clone(),
                to: to.clone(),
            })
        }
    }

    /// Loads a schema file: a JSON array of type entries, applied in order on
    /// top of an empty registry.
    pub fn from_json(json: &str) -> Result<Self, SchemaError> {
        let entries: Vec<SchemaFileEntry> =
            serde_json::from_str(json).map_err(|e| SchemaError::File(e.to_string()))?;
        let mut registry = SchemaRegistry::empty();
        for entry in entries {
            if entry.path != TypePath::root() {
                registry.register_type(entry.path.clone(), entry.attributes)?;
            } else if !entry.attributes.is_empty() {
                registry
                    .types
                    .get_mut(&entry.path)
                    .expect("root present")
                    .declared
                    .extend(entry.attributes);
            }
            // kinds declared on the root are unconstrained at the source end
            let from: BTreeSet<TypePath> = if entry.path == TypePath::root() {
                BTreeSet::new()
            } else {
                [entry.path.clone()].into_iter().collect()
            };
            for rel in entry.relationship_kinds {
                registry.register_relationship(RelationshipKind {
                    name: rel.kind,
                    from: from.clone(),
                    to: rel.to.into_iter().collect(),
                });
            }
        }
        Ok(registry)
    }

    pub fn load(path: &Path) -> Result<Self, SchemaError> {
        let text = std::fs::read_to_string(path).map_err(|e| SchemaError::File(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Serializes into the schema file format. Relationship kinds are emitted
    /// on each of their allowed source types (or the root when unconstrained).
    pub fn to_json(&self) -> String {
        let mut entries: Vec<SchemaFileEntry> = self
            .types
            .values()
            .map(|def| SchemaFileEntry {
                path: def.path.clone(),
                attributes: def.declared.clone(),
                relationship_kinds: Vec::new(),
            })
            .collect();
        for rel in self.relationships.values() {
            let sources: Vec<TypePath> = if rel.from.is_empty() {
                vec![TypePath::root()]
            } else {
                rel.from.iter().cloned().collect()
            };
            for source in sources {
                if let Some(entry) = entries.iter_mut().find(|e| e.path == source) {
                    entry.relationship_kinds.push(SchemaFileRelationship {
                        kind: rel.name.clone(),
                        to: rel.to.iter().cloned().collect(),
                    });
                }
            }
        }
        serde_json::to_string_pretty(&entries).expect("schema serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SchemaFileEntry {
    path: TypePath,
    #[serde(default)]
    attributes: BTreeMap<String, ValueKind>,
    #[serde(default)]
    relationship_kinds: Vec<SchemaFileRelationship>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SchemaFileRelationship {
    kind: String,
    #[serde(default)]
    to: Vec<TypePath>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> TypePath {
        TypePath::parse(s).unwrap()
    }

    #[test]
    fn register_subtype_inherits_parent_attributes() {
        let mut reg = SchemaRegistry::default_registry();
        let person = reg.effective_attributes(&p("Thing/Entity/Person")).unwrap();
        let receipt = reg
            .register_type(
                p("Thing/Entity/Person/Suspect"),
                [("case_role".to_string(), ValueKind::Text)].into_iter().collect(),
            )
            .unwrap();
        for (name, kind) in &person {
            assert_eq!(receipt.effective_attributes.get(name), Some(kind));
        }
        assert!(receipt.effective_attributes.contains_key("case_role"));
    }

    #[test]
    fn register_errors() {
        let mut reg = SchemaRegistry::default_registry();
        assert_eq!(
            reg.register_type(p("Thing/Entity/Person"), BTreeMap::new()),
            Err(SchemaError::DuplicatePath(p("Thing/Entity/Person")))
        );
        assert_eq!(
            reg.register_type(p("Thing/Foo/Bar"), BTreeMap::new()),
            Err(SchemaError::UnknownParent(p("Thing/Foo")))
        );
        let collision = reg.register_type(
            p("Thing/Entity/Person/Witness"),
            [("full_name".to_string(), ValueKind::Integer)].into_iter().collect(),
        );
        assert!(matches!(collision, Err(SchemaError::AttributeCollision { .. })));
    }

    #[test]
    fn subtype_queries() {
        let reg = SchemaRegistry::default_registry();
        assert!(reg.is_subtype(&p("Thing/Entity/Person"), &p("Thing/Entity")).unwrap());
        assert!(reg.is_subtype(&p("Thing/Entity"), &p("Thing/Entity")).unwrap());
        assert!(!reg.is_subtype(&p("Thing/Entity"), &p("Thing/Document")).unwrap());
        assert!(matches!(
            reg.is_subtype(&p("Thing/Nope"), &p("Thing")),
            Err(SchemaError::UnregisteredType(_))
        ));
    }

    #[test]
    fn path_parsing() {
        assert!(TypePath::parse("Entity/Person").is_err());
        assert!(TypePath::parse("Thing//Person").is_err());
        assert!(TypePath::parse("Thing/ Person").is_err());
        assert_eq!(p("Thing/Entity/Person").first_layer(), Some(p("Thing/Entity")));
        assert_eq!(TypePath::root().first_layer(), None);
    }

    #[test]
    fn shipped_registry_size() {
        let reg = SchemaRegistry::default_registry();
        assert!(reg.type_count() >= 51, "{} types", reg.type_count());
        assert!(reg.relationship_kinds().count() >= 10);
        for layer in FIRST_LAYER {
            assert!(reg.contains(&TypePath::root().child(layer)));
        }
        for t in reg.types() {
            assert!(t.starts_with(&TypePath::root()));
            assert!(reg.is_subtype(t, &TypePath::root()).unwrap());
        }
    }

    #[test]
    fn inheritance_is_a_superset_of_ancestors() {
        let reg = SchemaRegistry::default_registry();
        for t in reg.types() {
            let effective = reg.effective_attributes(t).unwrap();
            for ancestor in t.lineage() {
                for (name, kind) in reg.declared_attributes(&ancestor).unwrap() {
                    assert_eq!(effective.get(name), Some(kind), "{t} missing {name} from {ancestor}");
                }
            }
        }
    }

    #[test]
    fn schema_file_round_trip() {
        let reg = SchemaRegistry::default_registry();
        let back = SchemaRegistry::from_json(&reg.to_json()).unwrap();
        assert_eq!(back, reg);
    }

    #[test]
    fn edge_endpoint_constraints() {
        let reg = SchemaRegistry::default_registry();
        reg.check_edge("mentioned_in", &p("Thing/Entity/Person"), &p("Thing/Document/Text"))
            .unwrap();
        assert!(matches!(
            reg.check_edge("mentioned_in", &p("Thing/Entity/Person"), &p("Thing/Location")),
            Err(SchemaError::EndpointViolation { .. })
        ));
        assert!(matches!(
            reg.check_edge("likes", &p("Thing"), &p("Thing")),
            Err(SchemaError::UnknownRelationship(_))
        ));
    }

    #[test]
    fn attribute_validation() {
        let reg = SchemaRegistry::default_registry();
        let person = p("Thing/Entity/Person");
        let ok: Attributes = [("full_name".to_string(), Value::Text("Anna Adams".into()))].into_iter().collect();
        reg.validate_attributes(&person, &ok).unwrap();
        let bad: Attributes = [("full_name".to_string(), Value::Integer(3))].into_iter().collect();
        assert!(matches!(reg.validate_attributes(&person, &bad), Err(SchemaError::AttributeKind { .. })));
        let unknown: Attributes = [("shoe_size".to_string(), Value::Integer(3))].into_iter().collect();
        assert!(matches!(
            reg.validate_attributes(&person, &unknown),
            Err(SchemaError::UndeclaredAttribute { .. })
        ));
    }
}
