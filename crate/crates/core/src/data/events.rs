use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{DivisionId, MatchId, PlayerId, TeamId};
use crate::error::{Error, Result};

/// The ten event kinds tracked per player.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    Duel,
    Foul,
    FreeKick,
    GoalkeeperLeavingLine,
    Interruption,
    Offside,
    OthersOnTheBall,
    Pass,
    SaveAttempt,
    Shot,
}

impl EventKind {
    pub const COUNT: usize = 10;

    pub const ALL: [EventKind; 10] = [
        EventKind::Duel,
        EventKind::Foul,
        EventKind::FreeKick,
        EventKind::GoalkeeperLeavingLine,
        EventKind::Interruption,
        EventKind::Offside,
        EventKind::OthersOnTheBall,
        EventKind::Pass,
        EventKind::SaveAttempt,
        EventKind::Shot,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Canonical event name as written in event files.
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Duel => "Duel",
            EventKind::Foul => "Foul",
            EventKind::FreeKick => "Free Kick",
            EventKind::GoalkeeperLeavingLine => "Goalkeeper leaving line",
            EventKind::Interruption => "Interruption",
            EventKind::Offside => "Offside",
            EventKind::OthersOnTheBall => "Others on the ball",
            EventKind::Pass => "Pass",
            EventKind::SaveAttempt => "Save attempt",
            EventKind::Shot => "Shot",
        }
    }

    /// Case-insensitive; spaces, underscores and hyphens are interchangeable.
    pub fn parse(name: &str) -> Option<EventKind> {
        let norm: String = name
            .chars()
            .filter(|c| !matches!(c, ' ' | '_' | '-'))
            .flat_map(char::to_lowercase)
            .collect();
        EventKind::ALL.into_iter().find(|k| {
            let canon: String = k
                .name()
                .chars()
                .filter(|c| *c != ' ')
                .flat_map(char::to_lowercase)
                .collect();
            canon == norm
        })
    }

    pub fn is_defensive(self) -> bool {
        matches!(self, EventKind::Duel | EventKind::Foul)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventRecord {
    pub match_id: MatchId,
    pub division: DivisionId,
    pub timestamp: f64,
    pub kind: EventKind,
    pub actor: PlayerId,
    pub actor_team: TeamId,
    pub counterpart: Option<PlayerId>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawEvent {
    match_id: i64,
    division_id: String,
    event_sec: f64,
    event_name: String,
    player_id: i64,
    team_id: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    counterpart_player_id: Option<i64>,
}

impl RawEvent {
    fn into_record(self, line: usize) -> Result<EventRecord> {
        let kind = EventKind::parse(&self.event_name).ok_or_else(|| Error::Schema {
            line,
            message: format!("unknown event type {:?}", self.event_name),
        })?;
        if !self.event_sec.is_finite() {
            return Err(Error::Schema {
                line,
                message: "eventSec must be finite".into(),
            });
        }
        Ok(EventRecord {
            match_id: MatchId(self.match_id),
            division: DivisionId(self.division_id),
            timestamp: self.event_sec,
            kind,
            actor: PlayerId(self.player_id),
            actor_team: TeamId(self.team_id),
            counterpart: self
                .counterpart_player_id
                .filter(|&id| id >= 0)
                .map(PlayerId),
        })
    }

    fn from_record(e: &EventRecord) -> Self {
        RawEvent {
            match_id: e.match_id.0,
            division_id: e.division.0.clone(),
            event_sec: e.timestamp,
            event_name: e.kind.name().to_string(),
            player_id: e.actor.0,
            team_id: e.actor_team.0,
            counterpart_player_id: Some(e.counterpart.map_or(-1, |p| p.0)),
        }
    }
}

/// Parses newline-delimited JSON or a single JSON array of events. Order is
/// preserved.
pub fn parse_event_stream(raw: &[u8]) -> Result<Vec<EventRecord>> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::Parse {
        line: 1 + raw[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count(),
        message: format!("invalid UTF-8: {e}"),
    })?;
    let trimmed = text.trim_start();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    if trimmed.starts_with('[') {
        let values: Vec<serde_json::Value> =
            serde_json::from_str(text).map_err(|e| Error::Parse {
                line: e.line(),
                message: format!("column {}: {e}", e.column()),
            })?;
        values
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                let raw: RawEvent = serde_json::from_value(v).map_err(|e| Error::Parse {
                    line: i + 1,
                    message: format!("record {}: {e}", i + 1),
                })?;
                raw.into_record(i + 1)
            })
            .collect()
    } else {
        let mut out = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawEvent = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: i + 1,
                message: format!("column {}: {e}", e.column()),
            })?;
            out.push(raw.into_record(i + 1)?);
        }
        Ok(out)
    }
}

/// Writes events as newline-delimited JSON.
pub fn write_event_stream<W: Write>(mut w: W, events: &[EventRecord]) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut w, &RawEvent::from_record(e))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Per-player counts of the ten event kinds, indexed by [`EventKind::index`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventCounts(pub [u32; EventKind::COUNT]);

impl EventCounts {
    pub fn get(&self, kind: EventKind) -> u32 {
        self.0[kind.index()]
    }

    pub fn increment(&mut self, kind: EventKind) {
        self.0[kind.index()] += 1;
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }

    /// `log(1 + count)` per kind; the numeric form fed to the networks.
    pub fn log_features(&self) -> [f64; EventKind::COUNT] {
        self.0.map(|c| (c as f64).ln_1p())
    }
}

/// Counts events performed by `player` in `match_id`. Counterpart involvement
/// is not counted.
pub fn compute_event_counts(
    events: &[EventRecord],
    match_id: MatchId,
    player: PlayerId,
) -> EventCounts {
    let mut counts = EventCounts::default();
    for e in events
        .iter()
        .filter(|e| e.match_id == match_id && e.actor == player)
    {
        counts.increment(e.kind);
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(kind: &str, actor: i64, counterpart: i64) -> String {
        format!(
            r#"{{"matchId":1,"divisionId":"SPA","eventSec":1.5,"eventName":"{kind}","playerId":{actor},"teamId":10,"counterpartPlayerId":{counterpart}}}"#
        )
    }

    #[test]
    fn empty_input_is_empty_list() {
        assert!(parse_event_stream(b"").unwrap().is_empty());
        assert!(parse_event_stream(b"  \n ").unwrap().is_empty());
        assert!(parse_event_stream(b"[]").unwrap().is_empty());
    }

    #[test]
    fn single_pass_event() {
        let events = parse_event_stream(line("Pass", 7, 9).as_bytes()).unwrap();
        assert_eq!(events.len(), 1);
        let e = &events[0];
        assert_eq!(e.kind, EventKind::Pass);
        assert_eq!(e.actor, PlayerId(7));
        assert_eq!(e.counterpart, Some(PlayerId(9)));
        assert_eq!(e.match_id, MatchId(1));
    }

    #[test]
    fn minus_one_counterpart_is_absent() {
        let events = parse_event_stream(line("Shot", 7, -1).as_bytes()).unwrap();
        assert_eq!(events[0].counterpart, None);
    }

    #[test]
    fn array_form_and_order() {
        let text = format!("[{},{}]", line("Duel", 1, 2), line("Save attempt", 3, -1));
        let events = parse_event_stream(text.as_bytes()).unwrap();
        assert_eq!(events[0].kind, EventKind::Duel);
        assert_eq!(events[1].kind, EventKind::SaveAttempt);
    }

    #[test]
    fn unknown_kind_is_schema_error() {
        let text = format!("{}\n{}", line("Pass", 1, 2), line("Dribble", 1, -1));
        match parse_event_stream(text.as_bytes()) {
            Err(Error::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_names_line() {
        let text = format!("{}\n\n{{not json", line("Pass", 1, 2));
        match parse_event_stream(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in EventKind::ALL {
            assert_eq!(EventKind::parse(k.name()), Some(k));
        }
        assert_eq!(EventKind::parse("free_kick"), Some(EventKind::FreeKick));
        assert_eq!(
            EventKind::parse("GOALKEEPER-LEAVING-LINE"),
            Some(EventKind::GoalkeeperLeavingLine)
        );
    }

    #[test]
    fn counts_actor_only() {
        let text = [
            line("Pass", 7, 9),
            line("Pass", 7, 9),
            line("Pass", 7, 8),
            line("Shot", 7, -1),
            line("Duel", 9, 7),
        ]
        .join("\n");
        let events = parse_event_stream(text.as_bytes()).unwrap();
        let c = compute_event_counts(&events, MatchId(1), PlayerId(7));
        assert_eq!(c.get(EventKind::Pass), 3);
        assert_eq!(c.get(EventKind::Shot), 1);
        assert_eq!(c.total(), 4);
        let absent = compute_event_counts(&events, MatchId(1), PlayerId(42));
        assert_eq!(absent, EventCounts::default());
        let other_match = compute_event_counts(&events, MatchId(2), PlayerId(7));
        assert_eq!(other_match.total(), 0);
    }

    #[test]
    fn write_then_parse_preserves_records() {
        let text = [line("Pass", 7, 9), line("Offside", 4, -1)].join("\n");
        let events = parse_event_stream(text.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_event_stream(&mut buf, &events).unwrap();
        assert_eq!(parse_event_stream(&buf).unwrap(), events);
    }
}
