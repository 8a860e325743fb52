use chrono::{DateTime, DurationRound, TimeDelta, Utc};

/// Source of timestamps for provenance entries and records.
///
/// `Fixed` makes logs byte-identical across runs, which the determinism tests
/// and the fixed-timestamp config mode rely on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[derive(Default)]
pub enum Clock {
    #[default]
    System,
    Fixed(DateTime<Utc>),
}

impl Clock {
    /// Current time, truncated to microseconds so it survives a round trip
    /// through the log's timestamp format.
    pub fn now(&self) -> DateTime<Utc> {
        match self {
            Clock::System => Utc::now()
                .duration_trunc(TimeDelta::microseconds(1))
                .expect("microsecond truncation"),
            Clock::Fixed(t) => *t,
        }
    }
}

