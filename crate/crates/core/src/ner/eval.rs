use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::extract::Mention;
use super::labels::NerLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub label: NerLabel,
}

impl From<&Mention> for Span {
    fn from(m: &Mention) -> Self {
        Span {
            start: m.start,
            end: m.end,
            label: m.label,
        }
    }
}

/// One line of the annotation format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub doc: String,
    pub start: usize,
    pub end: usize,
    pub label: NerLabel,
}

/// Labelled spans keyed by document name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub documents: BTreeMap<String, BTreeSet<Span>>,
}

impl AnnotationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_document(&mut self, doc: &str, spans: impl IntoIterator<Item = Span>) {
        self.documents.entry(doc.to_string()).or_default().extend(spans);
    }

    pub fn len(&self) -> usize {
        self.documents.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for (doc, spans) in &self.documents {
            for s in spans {
                let record = AnnotationRecord {
                    doc: doc.clone(),
                    start: s.start,
                    end: s.end,
                    label: s.label,
                };
                out.push_str(&serde_json::to_string(&record).expect("record serializes"));
                out.push('\n');
            }
        }
        out
    }
}

pub type GoldAnnotationSet = AnnotationSet;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnnotationError {
    #[error("line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{} invalid record(s); first at line {}: {}", .0.len(), .0[0].line, .0[0].message)]
    Invalid(Vec<LineError>),
}

/// Parses span annotations. With `lengths`, spans are checked against the
/// document length in chars and unknown documents are rejected.
pub fn import_annotations(
    ndjson: &str,
    lengths: Option<&BTreeMap<String, usize>>,
) -> Result<AnnotationSet, AnnotationError> {
    let mut set = AnnotationSet::new();
    let mut problems = Vec::new();
    for (i, line) in ndjson.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| AnnotationError::Parse {
            line: line_no,
            column: e.column(),
            message: e.to_string(),
        })?;
        let record: AnnotationRecord = match serde_json::from_value(value) {
            Ok(r) => r,
            Err(e) => {
                problems.push(LineError {
                    line: line_no,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let mut fail = |message: String| problems.push(LineError { line: line_no, message });
        if record.start >= record.end {
            fail(format!("empty or reversed span [{}, {})", record.start, record.end));
            continue;
        }
        if let Some(lengths) = lengths {
            match lengths.get(&record.doc) {
                None => {
                    fail(format!("unknown document {:?}", record.doc));
                    continue;
                }
                Some(&len) if record.end > len => {
                    fail(format!(
                        "span end {} beyond length {len} of document {:?}",
                        record.end, record.doc
                    ));
                    continue;
                }
                Some(_) => {}
            }
        }
        let span = Span {
            start: record.start,
            end: record.end,
            label: record.label,
        };
        let spans = set.documents.entry(record.doc.clone()).or_default();
        if !spans.insert(span) {
            fail(format!("duplicate span [{}, {}) {}", span.start, span.end, span.label));
        }
    }
    if problems.is_empty() {
        Ok(set)
    } else {
        Err(AnnotationError::Invalid(problems))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LabelScore {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl LabelScore {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        LabelScore {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_label: BTreeMap<NerLabel, LabelScore>,
    pub micro: LabelScore,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("predictions reference documents missing from the gold set: {0:?}")]
    DocumentMismatch(Vec<String>),
}

/// Scores predictions by exact `(start, end, label)` match. Gold documents
/// without predictions count as predicted empty.
pub fn evaluate(predicted: &AnnotationSet, gold: &GoldAnnotationSet) -> Result<EvalReport, EvalError> {
    let stray: Vec<String> = predicted
        .documents
        .keys()
        .filter(|d| !gold.documents.contains_key(*d))
        .cloned()
        .collect();
    if !stray.is_empty() {
        return Err(EvalError::DocumentMismatch(stray));
    }
    let empty = BTreeSet::new();
    let mut counts: BTreeMap<NerLabel, (usize, usize, usize)> = BTreeMap::new();
    for (doc, gold_spans) in &gold.documents {
        let pred_spans = predicted.documents.get(doc).unwrap_or(&empty);
        for s in pred_spans {
            let c = counts.entry(s.label).or_default();
            if gold_spans.contains(s) {
                c.0 += 1;
            } else {
                c.1 += 1;
            }
        }
        for s in gold_spans.difference(pred_spans) {
            counts.entry(s.label).or_default().2 += 1;
        }
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let per_label = counts
        .into_iter()
        .map(|(label, (t, f, n))| {
            tp += t;
            fp += f;
            fn_ += n;
            (label, LabelScore::from_counts(t, f, n))
        })
        .collect();
    Ok(EvalReport {
        per_label,
        micro: LabelScore::from_counts(tp, fp, fn_),
    })
}

fn cell(x: f64) -> String {
    let s = format!("{x:.2}");
    s.strip_prefix('0').map(String::from).unwrap_or(s)
}

impl EvalReport {
    /// Plain-text table: `Type  P  R  F1`, values like `.94`.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<14}{:>6}{:>6}{:>6}", "Type", "P", "R", "F1");
        let rows = self
            .per_label
            .iter()
            .map(|(l, s)| (l.as_str(), s))
            .chain(std::iter::once(("micro", &self.micro)));
        for (name, s) in rows {
            let _ = writeln!(
                out,
                "{:<14}{:>6}{:>6}{:>6}",
                name,
                cell(s.precision),
                cell(s.recall),
                cell(s.f1)
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(start: usize, end: usize, label: NerLabel) -> Span {
        Span { start, end, label }
    }

    fn set(spans: &[Span]) -> AnnotationSet {
        let mut s = AnnotationSet::new();
        s.insert_document("d", spans.iter().copied());
        s
    }

    #[test]
    fn half_right() {
        let a = span(0, 4, NerLabel::Person);
        let b = span(9, 12, NerLabel::Person);
        let c = span(5, 8, NerLabel::Person);
        let r = evaluate(&set(&[a, c]), &set(&[a, b])).unwrap();
        let p = r.per_label[&NerLabel::Person];
        assert_eq!((p.tp, p.fp, p.fn_), (1, 1, 1));
        assert_eq!((p.precision, p.recall, p.f1), (0.5, 0.5, 0.5));
    }

    #[test]
    fn identity_and_empty_prediction() {
        let g = set(&[span(0, 4, NerLabel::Person), span(5, 9, NerLabel::Location)]);
        let r = evaluate(&g, &g).unwrap();
        for s in r.per_label.values() {
            assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
        }
        let r = evaluate(&AnnotationSet::new(), &g).unwrap();
        for s in r.per_label.values().chain([&r.micro]) {
            assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn wrong_label_is_both_fp_and_fn() {
        let r = evaluate(&set(&[span(0, 4, NerLabel::Location)]), &set(&[span(0, 4, NerLabel::Person)])).unwrap();
        assert_eq!(r.per_label[&NerLabel::Location].fp, 1);
        assert_eq!(r.per_label[&NerLabel::Person].fn_, 1);
    }

    #[test]
    fn document_mismatch() {
        let mut p = AnnotationSet::new();
        p.insert_document("other", [span(0, 1, NerLabel::Misc)]);
        assert!(matches!(evaluate(&p, &set(&[])), Err(EvalError::DocumentMismatch(_))));
    }

    #[test]
    fn import_validates_with_line_numbers() {
        let ok = "{\"doc\":\"a\",\"start\":0,\"end\":4,\"label\":\"PERSON\"}\n\
                  {\"doc\":\"a\",\"start\":5,\"end\":8,\"label\":\"LOCATION\"}\n\
                  \n\
                  {\"doc\":\"b\",\"start\":0,\"end\":2,\"label\":\"NUMBERS\"}\n";
        let lengths: BTreeMap<String, usize> = [("a".to_string(), 10), ("b".to_string(), 2)].into();
        assert_eq!(import_annotations(ok, Some(&lengths)).unwrap().len(), 3);

        let beyond = "{\"doc\":\"a\",\"start\":0,\"end\":4,\"label\":\"PERSON\"}\n\
                      {\"doc\":\"a\",\"start\":5,\"end\":11,\"label\":\"PERSON\"}\n";
        match import_annotations(beyond, Some(&lengths)) {
            Err(AnnotationError::Invalid(errs)) => assert_eq!(errs[0].line, 2),
            other => panic!("{other:?}"),
        }
        let animal = "{\"doc\":\"a\",\"start\":0,\"end\":4,\"label\":\"ANIMAL\"}\n";
        match import_annotations(animal, None) {
            Err(AnnotationError::Invalid(errs)) => {
                assert_eq!(errs[0].line, 1);
                assert!(errs[0].message.contains("ANIMAL"));
            }
            other => panic!("{other:?}"),
        }
        let dup = "{\"doc\":\"a\",\"start\":0,\"end\":4,\"label\":\"PERSON\"}\n\
                   {\"doc\":\"a\",\"start\":0,\"end\":4,\"label\":\"PERSON\"}\n";
        assert!(matches!(import_annotations(dup, None), Err(AnnotationError::Invalid(_))));
        assert!(matches!(
            import_annotations("{\"doc\":", None),
            Err(AnnotationError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            import_annotations("{\"doc\":\"a\",\"start\":3,\"end\":3,\"label\":\"LAW\"}", None),
            Err(AnnotationError::Invalid(_))
        ));
    }

    #[test]
    fn ndjson_round_trip() {
        let g = set(&[span(0, 4, NerLabel::Person), span(5, 9, NerLabel::Location)]);
        assert_eq!(import_annotations(&g.to_ndjson(), None).unwrap(), g);
    }

    #[test]
    fn table_layout() {
        let g = set(&[span(0, 4, NerLabel::Person)]);
        let t = evaluate(&g, &g).unwrap().table();
        assert!(t.lines().next().unwrap().starts_with("Type"));
        assert!(t.contains("PERSON") && t.contains("1.00"));
        assert_eq!(cell(0.9412), ".94");
        assert_eq!(cell(0.0), ".00");
    }
}
