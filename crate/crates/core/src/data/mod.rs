//! Event ingestion, per-player match lines, chronological splits and the
//! synthetic league generator.

mod dataset;
mod events;
pub mod synth;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use dataset::{
    build_match_dataset, group_events, player_history, read_match_metadata, Dataset, HistoryScope,
    HistoryWindow, LineupEntry, MatchMeta, MatchRecord, PlayerMatchLine, SplitConfig,
};
pub use events::{
    compute_event_counts, parse_event_stream, write_event_stream, EventCounts, EventKind,
    EventRecord,
};

macro_rules! int_id {
    ($name:ident) => {
        #[derive(
            Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub i64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

int_id!(MatchId);
int_id!(PlayerId);
int_id!(TeamId);

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DivisionId(pub String);

impl fmt::Display for DivisionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DivisionId {
    fn from(s: &str) -> Self {
        DivisionId(s.to_string())
    }
}

/// Match result from one side's perspective. Ordered lose < draw < win.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Lose,
    Draw,
    Win,
}

impl Outcome {
    /// Index into `[win, draw, lose]` tables.
    pub fn table_index(self) -> usize {
        match self {
            Outcome::Win => 0,
            Outcome::Draw => 1,
            Outcome::Lose => 2,
        }
    }

    pub const TABLE_ORDER: [Outcome; 3] = [Outcome::Win, Outcome::Draw, Outcome::Lose];

    pub fn flipped(self) -> Outcome {
        match self {
            Outcome::Win => Outcome::Lose,
            Outcome::Draw => Outcome::Draw,
            Outcome::Lose => Outcome::Win,
        }
    }

    pub fn from_goals(own: u32, other: u32) -> Outcome {
        match own.cmp(&other) {
            std::cmp::Ordering::Greater => Outcome::Win,
            std::cmp::Ordering::Equal => Outcome::Draw,
            std::cmp::Ordering::Less => Outcome::Lose,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Win => "win",
            Outcome::Draw => "draw",
            Outcome::Lose => "lose",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    GK,
    DF,
    MF,
    FW,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::GK, Role::DF, Role::MF, Role::FW];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::GK => "GK",
            Role::DF => "DF",
            Role::MF => "MF",
            Role::FW => "FW",
        };
        f.write_str(s)
    }
}

/// Home side is "red" in the interaction graph, away side "blue".
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Home,
    Away,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::Home => 0,
            Side::Away => 1,
        }
    }
}
