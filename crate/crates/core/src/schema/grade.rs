use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Source reliability, A (completely reliable) to E (unreliable); F means the
/// reliability cannot be judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Reliability {
    A,
    B,
    C,
    D,
    E,
    F,
}

/// Information credibility, 1 (confirmed) to 5 (improbable); 6 means the
/// truth cannot be judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Credibility {
    Confirmed = 1,
    ProbablyTrue = 2,
    PossiblyTrue = 3,
    DoubtfullyTrue = 4,
    Improbable = 5,
    Unknown = 6,
}

impl Reliability {
    pub const ALL: [Reliability; 6] = [
        Reliability::A,
        Reliability::B,
        Reliability::C,
        Reliability::D,
        Reliability::E,
        Reliability::F,
    ];

    /// Higher is better; F ranks lowest.
    pub fn rank(self) -> u8 {
        5 - self as u8
    }

    pub fn letter(self) -> char {
        (b'A' + self as u8) as char
    }

    fn from_letter(c: char) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.letter() == c.to_ascii_uppercase())
    }
}

impl Credibility {
    pub const ALL: [Credibility; 6] = [
        Credibility::Confirmed,
        Credibility::ProbablyTrue,
        Credibility::PossiblyTrue,
        Credibility::DoubtfullyTrue,
        Credibility::Improbable,
        Credibility::Unknown,
    ];

    /// Higher is better; 6 ranks lowest.
    pub fn rank(self) -> u8 {
        6 - self as u8
    }

    pub fn digit(self) -> u8 {
        self as u8
    }

    fn from_digit(d: char) -> Option<Self> {
        Self::ALL.into_iter().find(|c| char::from(b'0' + c.digit()) == d)
    }
}

/// A 6x6 intelligence grade such as `B2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConfidenceGrade {
    pub reliability: Reliability,
    pub credibility: Credibility,
}

/// The best reliability an unreviewed automated result may carry.
pub const AUTOMATION_CAP: Reliability = Reliability::C;

impl ConfidenceGrade {
    pub const UNKNOWN: ConfidenceGrade = ConfidenceGrade {
        reliability: Reliability::F,
        credibility: Credibility::Unknown,
    };

    pub fn new(reliability: Reliability, credibility: Credibility) -> Self {
        ConfidenceGrade {
            reliability,
            credibility,
        }
    }

    /// All 36 grades, best first.
    pub fn all() -> impl Iterator<Item = ConfidenceGrade> {
        Reliability::ALL
            .into_iter()
            .flat_map(|r| Credibility::ALL.into_iter().map(move |c| ConfidenceGrade::new(r, c)))
    }

    /// Component-wise threshold test. Forms a partial order over the 36 grades.
    pub fn at_least(&self, threshold: &ConfidenceGrade) -> bool {
        self.reliability.rank() >= threshold.reliability.rank()
            && self.credibility.rank() >= threshold.credibility.rank()
    }

    /// Component-wise worst of two grades.
    pub fn meet(&self, other: &ConfidenceGrade) -> ConfidenceGrade {
        let reliability = if self.reliability.rank() <= other.reliability.rank() {
            self.reliability
        } else {
            other.reliability
        };
        let credibility = if self.credibility.rank() <= other.credibility.rank() {
            self.credibility
        } else {
            other.credibility
        };
        ConfidenceGrade::new(reliability, credibility)
    }

    /// Clamps reliability to the automation cap; credibility is untouched.
    pub fn capped_for_automation(&self) -> ConfidenceGrade {
        if self.reliability.rank() > AUTOMATION_CAP.rank() {
            ConfidenceGrade::new(AUTOMATION_CAP, self.credibility)
        } else {
            *self
        }
    }
}

impl Default for ConfidenceGrade {
    fn default() -> Self {
        ConfidenceGrade::UNKNOWN
    }
}

pub fn grade_at_least(g: &ConfidenceGrade, threshold: &ConfidenceGrade) -> bool {
    g.at_least(threshold)
}

impl fmt::Display for ConfidenceGrade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.reliability.letter(), self.credibility.digit())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid confidence grade {0:?} (expected A-F followed by 1-6)")]
pub struct GradeParseError(pub String);

impl FromStr for ConfidenceGrade {
    type Err = GradeParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut chars = s.trim().chars();
        let (Some(r), Some(c), None) = (chars.next(), chars.next(), chars.next()) else {
            return Err(GradeParseError(s.to_string()));
        };
        match (Reliability::from_letter(r), Credibility::from_digit(c)) {
            (Some(r), Some(c)) => Ok(ConfidenceGrade::new(r, c)),
            _ => Err(GradeParseError(s.to_string())),
        }
    }
}

impl Serialize for ConfidenceGrade {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConfidenceGrade {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActorKind {
    User,
    Module,
}

/// Who performed a mutation: an analyst or an analysis module.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Actor {
    pub kind: ActorKind,
    pub id: String,
}

impl Actor {
    pub fn user(id: impl Into<String>) -> Self {
        Actor {
            kind: ActorKind::User,
            id: id.into(),
        }
    }

    pub fn module(id: impl Into<String>) -> Self {
        Actor {
            kind: ActorKind::Module,
            id: id.into(),
        }
    }

    pub fn is_user(&self) -> bool {
        self.kind == ActorKind::User
    }
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ActorKind::User => write!(f, "user:{}", self.id),
            ActorKind::Module => write!(f, "module:{}", self.id),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(s: &str) -> ConfidenceGrade {
        s.parse().unwrap()
    }

    #[test]
    fn threshold_examples() {
        assert!(grade_at_least(&g("B2"), &g("C3")));
        assert!(!grade_at_least(&g("F6"), &g("E5")));
        assert!(grade_at_least(&g("C3"), &g("C3")));
        assert!(!grade_at_least(&g("B4"), &g("C3")));
    }

    #[test]
    fn parse_and_display() {
        for grade in ConfidenceGrade::all() {
            assert_eq!(grade.to_string().parse::<ConfidenceGrade>().unwrap(), grade);
        }
        assert_eq!(ConfidenceGrade::all().count(), 36);
        for bad in ["", "A", "G1", "A7", "A0", "A12", "1A"] {
            assert!(bad.parse::<ConfidenceGrade>().is_err(), "{bad}");
        }
        assert_eq!(g("b2"), g("B2"));
        assert_eq!(ConfidenceGrade::default(), g("F6"));
    }

    #[test]
    fn automation_cap() {
        assert_eq!(g("A1").capped_for_automation(), g("C1"));
        assert_eq!(g("B5").capped_for_automation(), g("C5"));
        assert_eq!(g("D2").capped_for_automation(), g("D2"));
        assert_eq!(g("F6").capped_for_automation(), g("F6"));
    }

    #[test]
    fn partial_order_over_all_grades() {
        let all: Vec<_> = ConfidenceGrade::all().collect();
        for a in &all {
            assert!(a.at_least(a));
            for b in &all {
                if a.at_least(b) && b.at_least(a) {
                    assert_eq!(a, b);
                }
                for c in &all {
                    if a.at_least(b) && b.at_least(c) {
                        assert!(a.at_least(c));
                    }
                }
            }
        }
    }

    fn any_grade() -> impl Strategy<Value = ConfidenceGrade> {
        (0usize..6, 0usize..6).prop_map(|(r, c)| ConfidenceGrade::new(Reliability::ALL[r], Credibility::ALL[c]))
    }

    proptest! {
        #[test]
        fn meet_is_a_lower_bound(a in any_grade(), b in any_grade()) {
            let m = a.meet(&b);
            prop_assert!(a.at_least(&m));
            prop_assert!(b.at_least(&m));
        }
    }
}
