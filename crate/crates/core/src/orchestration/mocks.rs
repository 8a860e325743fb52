//! Scripted stand-ins for speaker detection, transcription and image
//! analysis.
//!
//! Mock audio is a UTF-8 script, one utterance per line, `S1: text`. Lines
//! without a speaker tag are treated as noise and ignored.

use std::collections::BTreeSet;

use serde_json::{json, Value as Json};

use crate::schema::{TypePath, Value};
use crate::store::{GraphState, NodeRecord};

use super::module::{
    AnalysisModule, ContextAction, Listener, ModuleDescriptor, ModuleError, NodeRef, ProposedDocument, ProposedEdge,
    ProposedNode, RunInput, RunOutput,
};

pub const SCRIPT_MEDIA_TYPE: &str = "audio/x-script";

fn tp(s: &str) -> TypePath {
    TypePath::parse(s).expect("built-in type path")
}

/// `(speaker, utterance)` pairs in order.
pub fn parse_script(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|line| {
            let (speaker, said) = line.split_once(':')?;
            let speaker = speaker.trim();
            let valid = !speaker.is_empty() && speaker.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
            valid.then(|| (speaker.to_string(), said.trim().to_string()))
        })
        .collect()
}

fn deselected(parameters: &Json) -> Result<BTreeSet<String>, ModuleError> {
    match parameters.get("deselect") {
        None | Some(Json::Null) => Ok(BTreeSet::new()),
        Some(Json::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .map(String::from)
                    .ok_or_else(|| ModuleError::Parameters("deselect must list speaker ids".into()))
            })
            .collect(),
        Some(_) => Err(ModuleError::Parameters("deselect must be an array".into())),
    }
}

/// Finds the speakers in a script and resynthesizes the audio with the
/// selected speakers only. Parameters: `{"deselect": ["S3", ...]}`.
#[derive(Debug, Default)]
pub struct SpeakerDetection;

impl AnalysisModule for SpeakerDetection {
    fn descriptor(&self) -> ModuleDescriptor {
        let mut d = ModuleDescriptor::new("speaker-detection");
        d.ingest_types.push("audio/*".into());
        d.preview_handlers.insert(tp("Thing/Entity/Speaker"), "audio-snippets".into());
        d
    }

    fn run(&self, input: &RunInput) -> Result<RunOutput, ModuleError> {
        let text = input
            .text()
            .ok_or_else(|| ModuleError::Input("audio script is not UTF-8".into()))?;
        let drop = deselected(&input.parameters)?;
        let lines = parse_script(text);
        let mut speakers: Vec<String> = Vec::new();
        for (s, _) in &lines {
            if !speakers.contains(s) {
                speakers.push(s.clone());
            }
        }
        let kept: Vec<&String> = speakers.iter().filter(|s| !drop.contains(*s)).collect();
        let mut out = RunOutput::default();
        for speaker in &speakers {
            out.nodes.push(ProposedNode {
                type_path: tp("Thing/Entity/Speaker"),
                label: format!("{speaker} in {}", input.trigger.label),
                attributes: Default::default(),
            });
            out.edges.push(ProposedEdge {
                kind: "speaker_in".into(),
                from: NodeRef::Node(out.nodes.len() - 1),
                to: NodeRef::Trigger,
                grade: Some("C3".parse().expect("grade literal")),
                attributes: Default::default(),
            });
        }
        let body: String = lines
            .iter()
            .filter(|(s, _)| !drop.contains(s))
            .map(|(s, said)| format!("{s}: {said}\n"))
            .collect();
        if body.is_empty() {
            return Ok(out);
        }
        let kept_list = kept.iter().map(|s| s.as_str()).collect::<Vec<_>>().join(",");
        out.documents.push(ProposedDocument {
            type_path: tp("Thing/Document/Audio/Resynthesized"),
            label: format!("{} [{}]", input.trigger.label, kept_list),
            media_type: SCRIPT_MEDIA_TYPE.into(),
            bytes: body.into_bytes(),
            attributes: [("speakers".to_string(), Value::Text(kept_list))].into(),
        });
        out.edges.push(ProposedEdge {
            kind: "derived_from".into(),
            from: NodeRef::Document(0),
            to: NodeRef::Trigger,
            grade: None,
            attributes: Default::default(),
        });
        Ok(out)
    }
}

/// Turns resynthesized audio into a transcript document.
#[derive(Debug, Default)]
pub struct Transcriber;

impl AnalysisModule for Transcriber {
    fn descriptor(&self) -> ModuleDescriptor {
        let mut d = ModuleDescriptor::new("transcriber");
        d.listeners
            .push(Listener::on_create(tp("Thing/Document/Audio/Resynthesized")));
        d
    }

    fn run(&self, input: &RunInput) -> Result<RunOutput, ModuleError> {
        let text = input
            .text()
            .ok_or_else(|| ModuleError::Input("audio script is not UTF-8".into()))?;
        let transcript: String = parse_script(text)
            .into_iter()
            .map(|(s, said)| format!("[{s}] {said}\n"))
            .collect();
        if transcript.is_empty() {
            return Ok(RunOutput::default());
        }
        Ok(RunOutput {
            documents: vec![ProposedDocument {
                type_path: tp("Thing/Document/Transcript"),
                label: format!("Transcript of {}", input.trigger.label),
                media_type: "text/plain".into(),
                bytes: transcript.into_bytes(),
                attributes: Default::default(),
            }],
            edges: vec![ProposedEdge {
                kind: "transcript_of".into(),
                from: NodeRef::Document(0),
                to: NodeRef::Trigger,
                grade: None,
                attributes: Default::default(),
            }],
            nodes: Vec::new(),
        })
    }
}

/// Reads a `caption:` line from a mock image and emits it as a Caption
/// document.
#[derive(Debug, Default)]
pub struct ImageAnalyzer;

impl AnalysisModule for ImageAnalyzer {
    fn descriptor(&self) -> ModuleDescriptor {
        let mut d = ModuleDescriptor::new("image-analyzer");
        d.ingest_types.push("image/*".into());
        d.context_actions.push(ContextAction {
            name: "show_depictions".into(),
            label: "Show images depicting this person".into(),
            target: tp("Thing/Entity/Person"),
        });
        d.preview_handlers.insert(tp("Thing/Document/Image"), "image-viewer".into());
        d
    }

    fn run(&self, input: &RunInput) -> Result<RunOutput, ModuleError> {
        let caption = input
            .text()
            .and_then(|t| t.lines().find_map(|l| l.strip_prefix("caption:")))
            .map(|c| c.trim().to_string())
            .filter(|c| !c.is_empty());
        let Some(caption) = caption else {
            return Ok(RunOutput::default());
        };
        Ok(RunOutput {
            documents: vec![ProposedDocument {
                type_path: tp("Thing/Document/Caption"),
                label: format!("Caption of {}", input.trigger.label),
                media_type: "text/plain".into(),
                bytes: caption.into_bytes(),
                attributes: Default::default(),
            }],
            edges: vec![ProposedEdge {
                kind: "derived_from".into(),
                from: NodeRef::Document(0),
                to: NodeRef::Trigger,
                grade: None,
                attributes: Default::default(),
            }],
            nodes: Vec::new(),
        })
    }

    fn context_action(&self, action: &str, item: &NodeRecord, state: &GraphState) -> Result<Json, ModuleError> {
        if action != "show_depictions" {
            return Err(ModuleError::UnknownAction(action.into()));
        }
        // Images whose caption mentions the person.
        let mut images = BTreeSet::new();
        for edge_id in state.incident_edges(item.id) {
            let edge = state.edge(*edge_id).expect("incident edge");
            if edge.hidden || edge.kind != "mentioned_in" {
                continue;
            }
            let Some(doc) = state.node(edge.other_end(item.id)) else { continue };
            if doc.type_path != tp("Thing/Document/Caption") {
                continue;
            }
            for e in state.incident_edges(doc.id) {
                let e = state.edge(*e).expect("incident edge");
                if e.kind == "derived_from" && e.from == doc.id && !e.hidden {
                    images.insert(e.to);
                }
            }
        }
        Ok(json!({ "person": item.id, "images": images }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_parsing() {
        let lines = parse_script("S1: hello there\n(noise)\nS2:bye\n: nobody\n");
        assert_eq!(
            lines,
            vec![("S1".into(), "hello there".into()), ("S2".into(), "bye".into())]
        );
    }

    #[test]
    fn deselect_parameter_validation() {
        assert!(deselected(&json!({})).unwrap().is_empty());
        assert_eq!(deselected(&json!({"deselect": ["S1"]})).unwrap().len(), 1);
        assert!(deselected(&json!({"deselect": "S1"})).is_err());
        assert!(deselected(&json!({"deselect": [1]})).is_err());
    }
}
