use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::ids::ItemId;
use crate::orchestration::{NodeRef, ProposedEdge, ProposedNode, RunOutput};
use crate::schema::{Actor, Attributes, ConfidenceGrade, Credibility, Reliability, Value};
use crate::store::{normalize_label, Attribution, EdgeCandidate, GraphStore, NodeCandidate, StoreError};

use super::extract::{parse_datetime, Mention};
use super::labels::NerLabel;

/// Grade requested for automatically found mentions.
pub const MENTION_GRADE: ConfidenceGrade = ConfidenceGrade {
    reliability: Reliability::C,
    credibility: Credibility::PossiblyTrue,
};

/// A mention tied to its document and the node it was linked to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub document: ItemId,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub label: NerLabel,
    pub node: ItemId,
}

fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    s.replace(',', ".")
        .parse::<f64>()
        .ok()
        .or_else(|| s.replace([',', '.'], "").parse().ok())
}

/// Typed attributes derived from the surface form, where the label has any.
pub fn mention_attributes(mention: &Mention) -> Attributes {
    let mut attributes = Attributes::new();
    match mention.label {
        NerLabel::Datetime => {
            if let Some(interval) = parse_datetime(&mention.surface) {
                attributes.insert("interval".into(), Value::Interval(interval));
            }
        }
        NerLabel::Numbers => {
            if let Some(n) = parse_number(&mention.surface) {
                attributes.insert("number".into(), Value::Real(n));
            }
        }
        NerLabel::Quantity => {
            let s = mention.surface.trim();
            let (number, unit) = match s.char_indices().find(|(_, c)| c.is_ascii_digit()) {
                Some((0, _)) => {
                    let split = s
                        .find(|c: char| !(c.is_ascii_digit() || c == '.' || c == ','))
                        .unwrap_or(s.len());
                    (&s[..split], s[split..].trim())
                }
                Some((i, _)) => (&s[i..], s[..i].trim()),
                None => (s, ""),
            };
            if let Some(n) = parse_number(number) {
                attributes.insert("amount".into(), Value::Real(n));
            }
            if !unit.is_empty() {
                attributes.insert("unit".into(), Value::Text(unit.to_string()));
            }
        }
        _ => {}
    }
    attributes
}

fn mention_edge_attributes(mention: &Mention) -> Attributes {
    [
        ("start".to_string(), Value::Integer(mention.start as i64)),
        ("end".to_string(), Value::Integer(mention.end as i64)),
        ("label".to_string(), Value::Text(mention.label.as_str().into())),
    ]
    .into()
}

/// Run output for a module: one node per distinct entity, one
/// `mentioned_in` edge per mention.
pub fn mention_output(mentions: &[Mention]) -> RunOutput {
    let mut out = RunOutput::default();
    let mut seen: HashMap<(NerLabel, String), usize> = HashMap::new();
    for mention in mentions {
        let key = (mention.label, normalize_label(&mention.surface));
        let index = *seen.entry(key).or_insert_with(|| {
            out.nodes.push(ProposedNode {
                type_path: mention.label.type_path(),
                label: mention.surface.clone(),
                attributes: mention_attributes(mention),
            });
            out.nodes.len() - 1
        });
        out.edges.push(ProposedEdge {
            kind: "mentioned_in".into(),
            from: NodeRef::Node(index),
            to: NodeRef::Trigger,
            grade: Some(MENTION_GRADE),
            attributes: mention_edge_attributes(mention),
        });
    }
    out
}

/// Writes mentions of `document` straight into the store in one
/// transaction.
pub fn link_mentions(
    store: &mut GraphStore,
    document: ItemId,
    mentions: &[Mention],
    actor: &Actor,
) -> Result<Vec<EntityMention>, StoreError> {
    store.node(document).ok_or(StoreError::UnknownItem(document))?;
    let attribution = Attribution {
        document: Some(document),
        module: (!actor.is_user()).then(|| actor.id.clone()),
    };
    let mut txn = store.begin();
    let mut linked = Vec::with_capacity(mentions.len());
    for mention in mentions {
        let candidate = NodeCandidate {
            attributes: mention_attributes(mention),
            ..NodeCandidate::new(mention.label.type_path(), mention.surface.clone())
        }
        .with_attribution(attribution.clone());
        let node = txn.upsert_node(candidate, actor)?.id;
        let mut edge = EdgeCandidate::new("mentioned_in", node, document).with_grade(MENTION_GRADE);
        edge.attribution = attribution.clone();
        edge.attributes = mention_edge_attributes(mention);
        txn.upsert_edge(edge, actor)?;
        linked.push(EntityMention {
            document,
            start: mention.start,
            end: mention.end,
            surface: mention.surface.clone(),
            label: mention.label,
            node,
        });
    }
    txn.commit()?;
    Ok(linked)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use chrono::{TimeZone, Utc};

    use super::*;
    use crate::ner::{extract, Gazetteer};
    use crate::schema::{SchemaRegistry, TypePath};

    fn store_with_doc() -> (GraphStore, ItemId) {
        let mut store = GraphStore::in_memory(Arc::new(SchemaRegistry::default_registry()));
        let doc = store
            .upsert_node(
                NodeCandidate::new(TypePath::parse("Thing/Document/Text").unwrap(), "memo"),
                &Actor::user("ana"),
            )
            .unwrap()
            .id;
        (store, doc)
    }

    #[test]
    fn repeated_person_is_one_node() {
        let (mut store, doc) = store_with_doc();
        let text = "Anna called. Later ANNA left on 12.03.2022.";
        let mentions = extract(text, &Gazetteer::sample());
        let linked = link_mentions(&mut store, doc, &mentions, &Actor::module("ner")).unwrap();
        let annas: Vec<_> = linked.iter().filter(|m| m.label == NerLabel::Person).collect();
        assert_eq!(annas.len(), 2);
        assert_eq!(annas[0].node, annas[1].node);
        let state = store.state();
        let edges: Vec<_> = state
            .incident_edges(annas[0].node)
            .iter()
            .map(|e| state.edge(*e).unwrap())
            .collect();
        assert_eq!(edges.len(), 2);
        for e in edges {
            assert!(e.grade.reliability.rank() <= Reliability::C.rank());
            assert_eq!(e.attribution.module.as_deref(), Some("ner"));
        }

        let date = linked.iter().find(|m| m.label == NerLabel::Datetime).unwrap();
        let node = state.node(date.node).unwrap();
        let interval = node.attributes["interval"].as_interval().unwrap();
        assert_eq!(interval.start, Utc.with_ymd_and_hms(2022, 3, 12, 0, 0, 0).unwrap());
        assert_eq!(interval.end, Utc.with_ymd_and_hms(2022, 3, 13, 0, 0, 0).unwrap());
    }

    #[test]
    fn unknown_document() {
        let (mut store, doc) = store_with_doc();
        let err = link_mentions(&mut store, ItemId(doc.0 + 99), &[], &Actor::module("ner")).unwrap_err();
        assert!(matches!(err, StoreError::UnknownItem(_)));
    }

    #[test]
    fn quantity_and_number_attributes() {
        let m = |s: &str, label| Mention {
            start: 0,
            end: s.chars().count(),
            surface: s.into(),
            label,
        };
        let q = mention_attributes(&m("25 kg", NerLabel::Quantity));
        assert_eq!(q["amount"], Value::Real(25.0));
        assert_eq!(q["unit"], Value::Text("kg".into()));
        let q = mention_attributes(&m("€500", NerLabel::Quantity));
        assert_eq!(q["amount"], Value::Real(500.0));
        assert_eq!(q["unit"], Value::Text("€".into()));
        let n = mention_attributes(&m("3,5", NerLabel::Numbers));
        assert_eq!(n["number"], Value::Real(3.5));
    }

    #[test]
    fn output_shares_nodes() {
        let mentions = extract("Bob and bob", &Gazetteer::sample());
        let out = mention_output(&mentions);
        assert_eq!(out.nodes.len(), 1);
        assert_eq!(out.edges.len(), 2);
    }
}
