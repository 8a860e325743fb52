//! The shipped investigation schema. A reconstruction of a police-style case
//! model; deployments are expected to extend it.

use std::collections::{BTreeMap, BTreeSet};

use super::{RelationshipKind, SchemaRegistry, TypePath, ValueKind};

use ValueKind::*;

const TYPES: &[(&str, &[(&str, ValueKind)])] = &[
    ("Thing", &[("description", Text)]),
    ("Thing/Entity", &[]),
    ("Thing/Event", &[("occurred", Interval)]),
    ("Thing/Datetime", &[("interval", Interval)]),
    ("Thing/Location", &[("geo", GeoPoint), ("address", Text)]),
    (
        "Thing/Document",
        &[
            ("object", BinaryReference),
            ("media_type", Text),
            ("byte_length", Integer),
            ("timestamp", Timestamp),
            ("source_name", Text),
        ],
    ),
    // entities
    ("Thing/Entity/Person", &[("full_name", Text), ("birth_date", Timestamp), ("nationality", Text)]),
    ("Thing/Entity/Organization", &[("registration_id", Text)]),
    ("Thing/Entity/Organization/Company", &[]),
    ("Thing/Entity/Organization/MilitaryUnit", &[]),
    ("Thing/Entity/Organization/CriminalGroup", &[]),
    ("Thing/Entity/Organization/Authority", &[]),
    ("Thing/Entity/Organization/MediaOutlet", &[]),
    ("Thing/Entity/Misc", &[]),
    ("Thing/Entity/Product", &[]),
    ("Thing/Entity/Language", &[]),
    ("Thing/Entity/Law", &[]),
    ("Thing/Entity/Quantity", &[("amount", Real), ("unit", Text)]),
    ("Thing/Entity/Numbers", &[("number", Real)]),
    ("Thing/Entity/PhoneNumber", &[("number", Text)]),
    ("Thing/Entity/EmailAddress", &[("address", Text)]),
    ("Thing/Entity/BankAccount", &[("iban", Text)]),
    ("Thing/Entity/CryptoWallet", &[("address", Text)]),
    ("Thing/Entity/Vehicle", &[("plate", Text)]),
    ("Thing/Entity/Weapon", &[]),
    ("Thing/Entity/Device", &[("imei", Text)]),
    ("Thing/Entity/Speaker", &[("speaker_label", Text), ("segments", Integer)]),
    ("Thing/Entity/SocialMediaAccount", &[("handle", Text), ("platform", Text)]),
    ("Thing/Entity/IpAddress", &[]),
    ("Thing/Entity/Website", &[("url", Text)]),
    ("Thing/Entity/Group", &[]),
    ("Thing/Entity/Codeword", &[]),
    // events
    ("Thing/Event/PhoneCall", &[("duration_seconds", Integer)]),
    ("Thing/Event/Message", &[]),
    ("Thing/Event/Meeting", &[]),
    ("Thing/Event/Transaction", &[("amount", Real), ("currency", Text)]),
    ("Thing/Event/Travel", &[]),
    ("Thing/Event/Attack", &[]),
    ("Thing/Event/Arrest", &[]),
    ("Thing/Event/Upload", &[]),
    ("Thing/Event/Sighting", &[]),
    // time
    ("Thing/Datetime/Timespan", &[]),
    ("Thing/Datetime/Date", &[]),
    ("Thing/Datetime/TimeOfDay", &[]),
    // places
    ("Thing/Location/Country", &[("iso_code", Text)]),
    ("Thing/Location/Region", &[]),
    ("Thing/Location/City", &[]),
    ("Thing/Location/Village", &[]),
    ("Thing/Location/Address", &[]),
    ("Thing/Location/Building", &[]),
    ("Thing/Location/Coordinates", &[]),
    ("Thing/Location/Forest", &[]),
    // documents
    ("Thing/Document/Text", &[]),
    ("Thing/Document/Email", &[]),
    ("Thing/Document/ChatLog", &[]),
    ("Thing/Document/Report", &[]),
    ("Thing/Document/Audio", &[("duration_seconds", Integer)]),
    ("Thing/Document/Audio/PhoneRecording", &[]),
    ("Thing/Document/Audio/Resynthesized", &[("speakers", Text)]),
    ("Thing/Document/Transcript", &[]),
    ("Thing/Document/Caption", &[]),
    ("Thing/Document/Image", &[]),
    ("Thing/Document/Video", &[("duration_seconds", Integer)]),
    ("Thing/Document/Binary", &[]),
];

const RELATIONSHIPS: &[(&str, &[&str], &[&str])] = &[
    ("related_to", &[], &[]),
    ("same_as", &[], &[]),
    (
        "mentioned_in",
        &["Thing/Entity", "Thing/Event", "Thing/Datetime", "Thing/Location"],
        &["Thing/Document"],
    ),
    ("derived_from", &["Thing/Document"], &["Thing/Document"]),
    (
        "transcript_of",
        &["Thing/Document/Transcript"],
        &["Thing/Document/Audio", "Thing/Document/Video"],
    ),
    ("speaker_in", &["Thing/Entity/Speaker", "Thing/Entity/Person"], &["Thing/Document"]),
    ("located_at", &["Thing/Entity", "Thing/Event", "Thing/Document"], &["Thing/Location"]),
    ("occurred_at", &["Thing/Event", "Thing/Document"], &["Thing/Datetime"]),
    ("participated_in", &["Thing/Entity"], &["Thing/Event"]),
    (
        "member_of",
        &["Thing/Entity/Person", "Thing/Entity/Organization"],
        &["Thing/Entity/Organization", "Thing/Entity/Group"],
    ),
    ("owns", &["Thing/Entity/Person", "Thing/Entity/Organization"], &["Thing/Entity"]),
    ("communicated_with", &["Thing/Entity"], &["Thing/Entity"]),
    ("depicts", &["Thing/Document/Image", "Thing/Document/Video"], &[]),
    ("part_of", &["Thing/Location"], &["Thing/Location"]),
    ("near", &["Thing/Location"], &["Thing/Location"]),
];

pub(super) fn build() -> SchemaRegistry {
    let mut registry = SchemaRegistry::empty();
    for (path, attributes) in TYPES {
        let path = TypePath::parse(path).expect("valid built-in path");
        let attributes: BTreeMap<String, ValueKind> =
            attributes.iter().map(|(name, kind)| (name.to_string(), *kind)).collect();
        if path == TypePath::root() {
            registry
                .types
                .get_mut(&path)
                .expect("root present")
                .declared
                .extend(attributes);
        } else {
            registry
                .register_type(path, attributes)
                .expect("built-in schema is consistent");
        }
    }
    let set = |paths: &[&str]| -> BTreeSet<TypePath> {
        paths
            .iter()
            .map(|p| TypePath::parse(p).expect("valid built-in path"))
            .collect()
    };
    for (name, from, to) in RELATIONSHIPS {
        registry.register_relationship(RelationshipKind {
            name: name.to_string(),
            from: set(from),
            to: set(to),
        });
    }
    registry
}
