use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::schema::TypePath;

/// The fixed entity label set. Declaration order is the tie-break order for
/// equally long overlapping matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NerLabel {
    Person,
    Organization,
    Location,
    Misc,
    Event,
    Product,
    Datetime,
    Language,
    Law,
    Quantity,
    Numbers,
}

impl NerLabel {
    pub const ALL: [NerLabel; 11] = [
        NerLabel::Person,
        NerLabel::Organization,
        NerLabel::Location,
        NerLabel::Misc,
        NerLabel::Event,
        NerLabel::Product,
        NerLabel::Datetime,
        NerLabel::Language,
        NerLabel::Law,
        NerLabel::Quantity,
        NerLabel::Numbers,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NerLabel::Person => "PERSON",
            NerLabel::Organization => "ORGANIZATION",
            NerLabel::Location => "LOCATION",
            NerLabel::Misc => "MISC",
            NerLabel::Event => "EVENT",
            NerLabel::Product => "PRODUCT",
            NerLabel::Datetime => "DATETIME",
            NerLabel::Language => "LANGUAGE",
            NerLabel::Law => "LAW",
            NerLabel::Quantity => "QUANTITY",
            NerLabel::Numbers => "NUMBERS",
        }
    }

    /// Graph type for entities carrying this label.
    pub fn type_path(self) -> TypePath {
        let path = match self {
            NerLabel::Person => "Thing/Entity/Person",
            NerLabel::Organization => "Thing/Entity/Organization",
            NerLabel::Location => "Thing/Location",
            NerLabel::Datetime => "Thing/Datetime",
            NerLabel::Event => "Thing/Event",
            NerLabel::Misc => "Thing/Entity/Misc",
            NerLabel::Product => "Thing/Entity/Product",
            NerLabel::Language => "Thing/Entity/Language",
            NerLabel::Law => "Thing/Entity/Law",
            NerLabel::Quantity => "Thing/Entity/Quantity",
            NerLabel::Numbers => "Thing/Entity/Numbers",
        };
        TypePath::parse(path).expect("label paths are valid")
    }
}

impl fmt::Display for NerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown entity label {0:?}")]
pub struct UnknownLabel(pub String);

impl FromStr for NerLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NerLabel::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

impl Serialize for NerLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for NerLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
