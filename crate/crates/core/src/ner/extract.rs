use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::sync::LazyLock;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, TimeDelta, TimeZone, Utc};
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::Interval;
use crate::text::{is_word_char, tokenize};

use super::labels::NerLabel;

const SAMPLE: &str = include_str!("../../data/gazetteer.json");

/// A recognized span. Offsets count Unicode scalar values, half-open.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub label: NerLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PatternToggles {
    pub datetime: bool,
    pub quantity: bool,
    pub numbers: bool,
}

impl Default for PatternToggles {
    fn default() -> Self {
        PatternToggles {
            datetime: true,
            quantity: true,
            numbers: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum GazetteerError {
    #[error("gazetteer file: {0}")]
    File(String),
    #[error("label {label} has an empty surface form")]
    EmptySurface { label: NerLabel },
    #[error(transparent)]
    Label(#[from] super::labels::UnknownLabel),
}

/// Surface forms per label plus rule toggles.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gazetteer {
    surfaces: BTreeMap<NerLabel, BTreeSet<String>>,
    patterns: PatternToggles,
    index: HashMap<String, Vec<(Vec<String>, NerLabel)>>,
}

impl Gazetteer {
    pub fn new(patterns: PatternToggles) -> Self {
        Gazetteer {
            patterns,
            ..Default::default()
        }
    }

    pub fn sample() -> Self {
        Self::from_json(SAMPLE).expect("shipped gazetteer is valid")
    }

    /// `{"PERSON": ["Anna", ...], ..., "patterns": {"datetime": true}}`
    pub fn from_json(json: &str) -> Result<Self, GazetteerError> {
        let raw: BTreeMap<String, serde_json::Value> =
            serde_json::from_str(json).map_err(|e| GazetteerError::File(e.to_string()))?;
        let mut gazetteer = Gazetteer::new(PatternToggles::default());
        for (key, value) in raw {
            if key == "patterns" {
                gazetteer.patterns =
                    serde_json::from_value(value).map_err(|e| GazetteerError::File(e.to_string()))?;
                continue;
            }
            let label: NerLabel = key.parse()?;
            let surfaces: Vec<String> =
                serde_json::from_value(value).map_err(|e| GazetteerError::File(format!("{key}: {e}")))?;
            for surface in surfaces {
                gazetteer.add(label, &surface)?;
            }
        }
        Ok(gazetteer)
    }

    pub fn load(path: &Path) -> Result<Self, GazetteerError> {
        let text = std::fs::read_to_string(path).map_err(|e| GazetteerError::File(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn add(&mut self, label: NerLabel, surface: &str) -> Result<(), GazetteerError> {
        let tokens: Vec<String> = tokenize(surface).into_iter().map(|t| t.norm).collect();
        if tokens.is_empty() {
            return Err(GazetteerError::EmptySurface { label });
        }
        if self.surfaces.entry(label).or_default().insert(tokens.join(" ")) {
            self.index.entry(tokens[0].clone()).or_default().push((tokens, label));
        }
        Ok(())
    }

    pub fn patterns(&self) -> PatternToggles {
        self.patterns
    }

    pub fn surfaces(&self, label: NerLabel) -> impl Iterator<Item = &str> {
        self.surfaces.get(&label).into_iter().flatten().map(String::as_str)
    }
}

const MONTHS: &str = "january|february|march|april|may|june|july|august|september|october|november|december|\
                      januar|februar|märz|maerz|juni|juli|oktober|dezember|\
                      jan|feb|mar|apr|jun|jul|aug|sept|sep|oct|okt|nov|dec|dez";

static DATETIME: LazyLock<Regex> = LazyLock::new(|| {
    let ord = r"(?:st|nd|rd|th)?";
    Regex::new(&format!(
        r"(?i)\d{{4}}-\d{{2}}-\d{{2}}(?:[T ]\d{{2}}:\d{{2}}(?::\d{{2}})?)?|\d{{1,2}}\.\d{{1,2}}\.\d{{4}}(?:,? \d{{1,2}}:\d{{2}})?|\d{{1,2}}/\d{{1,2}}/\d{{4}}|\d{{1,2}}{ord}\.? (?:{MONTHS})\.? \d{{4}}|(?:{MONTHS})\.? \d{{1,2}}{ord},? \d{{4}}|\d{{1,2}}:\d{{2}}(?: ?[ap]m)?|\d{{1,2}} ?[ap]m"
    ))
    .expect("datetime pattern")
});

static QUANTITY: LazyLock<Regex> = LazyLock::new(|| {
    let mut units = vec![
        "kg", "kilogram", "kilograms", "g", "gram", "grams", "mg", "t", "ton", "tons", "tonnes", "km", "kilometer",
        "kilometers", "kilometres", "m", "meter", "meters", "metres", "cm", "mm", "l", "liter", "liters", "litres",
        "ml", "%", "percent", "euro", "euros", "eur", "€", r"\$", "dollar", "dollars", "usd", "hour", "hours",
        "minute", "minutes", "piece", "pieces", "unit", "units", "container", "containers", "package", "packages",
        "boxes",
    ];
    units.sort_by_key(|u| std::cmp::Reverse(u.len()));
    Regex::new(&format!(
        r"(?i)[€$£] ?\d+(?:[.,]\d+)*|\d+(?:[.,]\d+)* ?(?:{})",
        units.join("|")
    ))
    .expect("quantity pattern")
});

static NUMBERS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+(?:[.,]\d+)*").expect("numbers pattern"));

/// Finds entity mentions. Output is sorted by start and non-overlapping:
/// longer spans win, then the leftmost, then label order.
pub fn extract(text: &str, gazetteer: &Gazetteer) -> Vec<Mention> {
    let chars: Vec<char> = text.chars().collect();
    let mut candidates: Vec<(usize, usize, NerLabel)> = Vec::new();

    let tokens = tokenize(text);
    for (i, token) in tokens.iter().enumerate() {
        let Some(entries) = gazetteer.index.get(&token.norm) else {
            continue;
        };
        for (surface, label) in entries {
            let window = tokens.get(i..i + surface.len());
            if window.is_some_and(|w| w.iter().zip(surface).all(|(t, s)| &t.norm == s)) {
                candidates.push((token.start, tokens[i + surface.len() - 1].end, *label));
            }
        }
    }

    let mut byte_to_char = vec![0usize; text.len() + 1];
    for (ci, (bi, _)) in text.char_indices().enumerate() {
        byte_to_char[bi] = ci;
    }
    byte_to_char[text.len()] = chars.len();
    let toggles = gazetteer.patterns;
    let rules: [(bool, &Regex, NerLabel); 3] = [
        (toggles.datetime, &DATETIME, NerLabel::Datetime),
        (toggles.quantity, &QUANTITY, NerLabel::Quantity),
        (toggles.numbers, &NUMBERS, NerLabel::Numbers),
    ];
    for (enabled, regex, label) in rules {
        if !enabled {
            continue;
        }
        for m in regex.find_iter(text) {
            let (start, end) = (byte_to_char[m.start()], byte_to_char[m.end()]);
            let open_left = start == 0 || !is_word_char(chars[start - 1]);
            let open_right = end == chars.len() || !is_word_char(chars[end]);
            if open_left && open_right && start < end {
                candidates.push((start, end, label));
            }
        }
    }

    candidates.sort_by_key(|&(start, end, label)| (std::cmp::Reverse(end - start), start, label));
    candidates.dedup();
    let mut taken: BTreeMap<usize, usize> = BTreeMap::new();
    let mut accepted = Vec::new();
    for (start, end, label) in candidates {
        let clash_before = taken.range(..end).next_back().is_some_and(|(_, &e)| e > start);
        if clash_before {
            continue;
        }
        taken.insert(start, end);
        accepted.push(Mention {
            start,
            end,
            surface: chars[start..end].iter().collect(),
            label,
        });
    }
    accepted.sort();
    accepted
}

fn month_number(name: &str) -> Option<u32> {
    let name = name.trim_end_matches('.').to_lowercase();
    let table: [(&[&str], u32); 12] = [
        (&["january", "januar", "jan"], 1),
        (&["february", "februar", "feb"], 2),
        (&["march", "märz", "maerz", "mar"], 3),
        (&["april", "apr"], 4),
        (&["may", "mai"], 5),
        (&["june", "juni", "jun"], 6),
        (&["july", "juli", "jul"], 7),
        (&["august", "aug"], 8),
        (&["september", "sept", "sep"], 9),
        (&["october", "oktober", "oct", "okt"], 10),
        (&["november", "nov"], 11),
        (&["december", "dezember", "dec", "dez"], 12),
    ];
    table
        .iter()
        .find(|(names, _)| names.contains(&name.as_str()))
        .map(|(_, n)| *n)
}

static NUMERIC_DATE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\d{1,2})[./](\d{1,2})[./](\d{4})(?:,? (\d{1,2}):(\d{2}))?$").expect("numeric date")
});
static ISO_DATE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(\d{4})-(\d{2})-(\d{2})(?:[T ](\d{2}):(\d{2})(?::(\d{2}))?)?$").expect("iso date")
});
static DAY_MONTH: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?i)(\d{1,2})(?:st|nd|rd|th)?\.? ([\p{L}]+)\.? (\d{4})$").expect("day month"));
static MONTH_DAY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^(?i)([\p{L}]+)\.? (\d{1,2})(?:st|nd|rd|th)?,? (\d{4})$").expect("month day"));

/// Interval covered by a DATETIME surface: a whole day for dates, one minute
/// when a time of day is given. Bare times have no interval.
pub fn parse_datetime(surface: &str) -> Option<Interval> {
    let n = |s: Option<regex::Match<'_>>| s.and_then(|m| m.as_str().parse::<u32>().ok());
    let (date, time) = if let Some(c) = ISO_DATE.captures(surface) {
        let date = NaiveDate::from_ymd_opt(n(c.get(1))? as i32, n(c.get(2))?, n(c.get(3))?)?;
        let time = match (n(c.get(4)), n(c.get(5))) {
            (Some(h), Some(m)) => Some(NaiveTime::from_hms_opt(h, m, n(c.get(6)).unwrap_or(0))?),
            _ => None,
        };
        (date, time)
    } else if let Some(c) = NUMERIC_DATE.captures(surface) {
        let date = NaiveDate::from_ymd_opt(n(c.get(3))? as i32, n(c.get(2))?, n(c.get(1))?)?;
        let time = match (n(c.get(4)), n(c.get(5))) {
            (Some(h), Some(m)) => Some(NaiveTime::from_hms_opt(h, m, 0)?),
            _ => None,
        };
        (date, time)
    } else if let Some(c) = DAY_MONTH.captures(surface) {
        let month = month_number(c.get(2)?.as_str())?;
        (NaiveDate::from_ymd_opt(n(c.get(3))? as i32, month, n(c.get(1))?)?, None)
    } else {
        let c = MONTH_DAY.captures(surface)?;
        let month = month_number(c.get(1)?.as_str())?;
        (NaiveDate::from_ymd_opt(n(c.get(3))? as i32, month, n(c.get(2))?)?, None)
    };
    let (start, length) = match time {
        Some(t) => (NaiveDateTime::new(date, t), TimeDelta::minutes(1)),
        None => (date.and_hms_opt(0, 0, 0)?, TimeDelta::days(1)),
    };
    let start = Utc.from_utc_datetime(&start);
    Some(Interval {
        start,
        end: start + length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaz(entries: &[(NerLabel, &str)]) -> Gazetteer {
        let mut g = Gazetteer::new(PatternToggles::default());
        for (l, s) in entries {
            g.add(*l, s).unwrap();
        }
        g
    }

    fn spans(text: &str, g: &Gazetteer) -> Vec<(usize, usize, NerLabel)> {
        extract(text, g).into_iter().map(|m| (m.start, m.end, m.label)).collect()
    }

    #[test]
    fn hand_checked_fixture() {
        let g = gaz(&[
            (NerLabel::Person, "anna"),
            (NerLabel::Person, "bob"),
            (NerLabel::Location, "berlin"),
        ]);
        let text = "Anna met Bob in Berlin on 12.03.2022";
        assert_eq!(&text[26..36], "12.03.2022");
        assert_eq!(
            spans(text, &g),
            vec![
                (0, 4, NerLabel::Person),
                (9, 12, NerLabel::Person),
                (16, 22, NerLabel::Location),
                (26, 36, NerLabel::Datetime),
            ]
        );
    }

    #[test]
    fn empty_text() {
        assert!(extract("", &Gazetteer::sample()).is_empty());
    }

    #[test]
    fn longest_match_wins() {
        let g = gaz(&[(NerLabel::Location, "New York"), (NerLabel::Person, "York")]);
        assert_eq!(spans("flights to New York today", &g), vec![(11, 19, NerLabel::Location)]);
        assert_eq!(spans("York said", &g), vec![(0, 4, NerLabel::Person)]);
    }

    #[test]
    fn offsets_count_chars_not_bytes() {
        let g = gaz(&[(NerLabel::Location, "München"), (NerLabel::Person, "Jürgen")]);
        let text = "Jürgen fuhr nach München.";
        let got = extract(text, &g);
        assert_eq!(got[0].start, 0);
        assert_eq!(got[0].end, 6);
        assert_eq!(got[1].start, 17);
        assert_eq!(got[1].end, 24);
        let chars: Vec<char> = text.chars().collect();
        for m in got {
            assert_eq!(chars[m.start..m.end].iter().collect::<String>(), m.surface);
        }
    }

    #[test]
    fn gazetteer_respects_token_boundaries() {
        let g = gaz(&[(NerLabel::Person, "Anna")]);
        assert!(spans("Annabelle and Hanna", &g).is_empty());
        assert_eq!(spans("(Anna)", &g), vec![(1, 5, NerLabel::Person)]);
    }

    #[test]
    fn rule_patterns() {
        let g = Gazetteer::new(PatternToggles::default());
        assert_eq!(spans("about 25 kg", &g), vec![(6, 11, NerLabel::Quantity)]);
        assert_eq!(spans("40 meters", &g), vec![(0, 9, NerLabel::Quantity)]);
        assert_eq!(spans("pay €500 now", &g), vec![(4, 8, NerLabel::Quantity)]);
        assert_eq!(spans("room 12", &g), vec![(5, 7, NerLabel::Numbers)]);
        assert_eq!(spans("at 14:30", &g), vec![(3, 8, NerLabel::Datetime)]);
        assert_eq!(spans("on 3 March 2021", &g), vec![(3, 15, NerLabel::Datetime)]);
        assert_eq!(spans("on March 3, 2021", &g), vec![(3, 16, NerLabel::Datetime)]);
        assert_eq!(spans("2022-03-12T10:00", &g), vec![(0, 16, NerLabel::Datetime)]);
        assert!(spans("A4B6", &g).is_empty());
        let off = Gazetteer::new(PatternToggles {
            datetime: false,
            quantity: false,
            numbers: false,
        });
        assert!(spans("12.03.2022 25 kg 7", &off).is_empty());
    }

    #[test]
    fn datetime_intervals() {
        let day = parse_datetime("12.03.2022").unwrap();
        assert_eq!(day.start, Utc.with_ymd_and_hms(2022, 3, 12, 0, 0, 0).unwrap());
        assert_eq!(day.end, Utc.with_ymd_and_hms(2022, 3, 13, 0, 0, 0).unwrap());
        assert_eq!(parse_datetime("12 March 2022"), Some(day));
        assert_eq!(parse_datetime("March 12th, 2022"), Some(day));
        assert_eq!(parse_datetime("2022-03-12"), Some(day));
        let minute = parse_datetime("2022-03-12 10:15").unwrap();
        assert_eq!(minute.end - minute.start, TimeDelta::minutes(1));
        assert_eq!(parse_datetime("14:30"), None);
        assert_eq!(parse_datetime("31.02.2022"), None);
    }

    #[test]
    fn sample_loads() {
        let g = Gazetteer::sample();
        assert!(g.surfaces(NerLabel::Person).any(|s| s == "anna adams"));
        assert!(g.patterns().datetime);
        assert!(Gazetteer::from_json(r#"{"ANIMAL": ["cat"]}"#).is_err());
        assert!(Gazetteer::from_json(r#"{"PERSON": [" "]}"#).is_err());
    }

    proptest::proptest! {
        #[test]
        fn fuzzed_output_is_sorted_disjoint_and_pure(
            words in proptest::collection::vec(
                proptest::prop_oneof![
                    proptest::string::string_regex("[A-Za-zäöüß]{1,8}").unwrap(),
                    proptest::string::string_regex("[0-9]{1,4}([.,:/][0-9]{1,4}){0,2}").unwrap(),
                    proptest::sample::select(vec![
                        "Anna".to_string(), "New".into(), "York".into(), "Berlin".into(), "kg".into(),
                        "March".into(), "12.03.2022".into(), ",".into(), "(".into(), "Anna Adams".into(),
                    ]),
                ],
                0..30,
            ),
            seps in proptest::collection::vec(proptest::sample::select(vec![" ", "  ", "\n", ", ", "-"]), 30),
        ) {
            let mut text = String::new();
            for (w, s) in words.iter().zip(&seps) {
                text.push_str(w);
                text.push_str(s);
            }
            let g = Gazetteer::sample();
            let got = extract(&text, &g);
            let chars: Vec<char> = text.chars().collect();
            for pair in got.windows(2) {
                proptest::prop_assert!(pair[0].end <= pair[1].start);
            }
            for m in &got {
                proptest::prop_assert!(m.start < m.end && m.end <= chars.len());
                proptest::prop_assert_eq!(&chars[m.start..m.end].iter().collect::<String>(), &m.surface);
            }
            proptest::prop_assert_eq!(got, extract(&text, &g));
        }
    }
}
