use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::events::{EventCounts, EventRecord};
use super::{DivisionId, MatchId, Outcome, PlayerId, Role, Side, TeamId};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LineupEntry {
    pub player_id: PlayerId,
    pub role: Role,
    #[serde(default = "default_started")]
    pub started: bool,
}

fn default_started() -> bool {
    true
}

/// One record of the match metadata file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MatchMeta {
    pub match_id: MatchId,
    pub division_id: DivisionId,
    #[serde(rename = "dateISO8601")]
    pub date_iso8601: String,
    pub home_team_id: TeamId,
    pub away_team_id: TeamId,
    pub lineups: BTreeMap<TeamId, Vec<LineupEntry>>,
    pub home_goals: u32,
    pub away_goals: u32,
}

impl MatchMeta {
    fn date(&self) -> Result<NaiveDate> {
        let s = self.date_iso8601.trim();
        if let Ok(dt) = chrono::DateTime::parse_from_rfc3339(s) {
            return Ok(dt.date_naive());
        }
        let day = s.get(..10).unwrap_or(s);
        NaiveDate::parse_from_str(day, "%Y-%m-%d").map_err(|e| {
            Error::data(format!(
                "match {}: bad date {:?}: {e}",
                self.match_id, self.date_iso8601
            ))
        })
    }
}

/// Reads match metadata given as a JSON array or newline-delimited JSON.
pub fn read_match_metadata(raw: &[u8]) -> Result<Vec<MatchMeta>> {
    let text = std::str::from_utf8(raw).map_err(|e| Error::Parse {
        line: 1,
        message: format!("invalid UTF-8: {e}"),
    })?;
    let trimmed = text.trim_start();
    if trimmed.is_empty() {
        return Ok(Vec::new());
    }
    if trimmed.starts_with('[') {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: format!("column {}: {e}", e.column()),
        })
    } else {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse {
                    line: i + 1,
                    message: format!("column {}: {e}", e.column()),
                })
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchRecord {
    pub match_id: MatchId,
    pub division: DivisionId,
    pub date: NaiveDate,
    pub home_team: TeamId,
    pub away_team: TeamId,
    pub home_players: Vec<PlayerId>,
    pub away_players: Vec<PlayerId>,
    pub home_goals: u32,
    pub away_goals: u32,
    /// Home perspective.
    pub label: Outcome,
}

impl MatchRecord {
    pub fn side_of_team(&self, team: TeamId) -> Option<Side> {
        if team == self.home_team {
            Some(Side::Home)
        } else if team == self.away_team {
            Some(Side::Away)
        } else {
            None
        }
    }

    pub fn team(&self, side: Side) -> TeamId {
        match side {
            Side::Home => self.home_team,
            Side::Away => self.away_team,
        }
    }

    pub fn players(&self, side: Side) -> &[PlayerId] {
        match side {
            Side::Home => &self.home_players,
            Side::Away => &self.away_players,
        }
    }

    pub fn side_of_player(&self, player: PlayerId) -> Option<Side> {
        if self.home_players.contains(&player) {
            Some(Side::Home)
        } else if self.away_players.contains(&player) {
            Some(Side::Away)
        } else {
            None
        }
    }

    /// Outcome from `side`'s perspective.
    pub fn outcome_for(&self, side: Side) -> Outcome {
        match side {
            Side::Home => self.label,
            Side::Away => self.label.flipped(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerMatchLine {
    pub match_id: MatchId,
    pub player_id: PlayerId,
    pub team_id: TeamId,
    pub role: Role,
    pub counts: EventCounts,
    /// From the player's team perspective.
    pub outcome: Outcome,
    pub started: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_fraction: 0.8,
        }
    }
}

/// Matches in chronological order with per-division train/test splits.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(from = "DatasetRepr", into = "DatasetRepr")]
pub struct Dataset {
    matches: Vec<MatchRecord>,
    train: Vec<MatchId>,
    test: Vec<MatchId>,
    lines: BTreeMap<MatchId, Vec<PlayerMatchLine>>,
    index: HashMap<MatchId, usize>,
    by_player: HashMap<PlayerId, Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct DatasetRepr {
    matches: Vec<MatchRecord>,
    train: Vec<MatchId>,
    test: Vec<MatchId>,
    lines: BTreeMap<MatchId, Vec<PlayerMatchLine>>,
}

impl From<DatasetRepr> for Dataset {
    fn from(r: DatasetRepr) -> Self {
        Dataset::assemble(r.matches, r.train, r.test, r.lines)
    }
}

impl From<Dataset> for DatasetRepr {
    fn from(d: Dataset) -> Self {
        DatasetRepr {
            matches: d.matches,
            train: d.train,
            test: d.test,
            lines: d.lines,
        }
    }
}

impl Dataset {
    fn assemble(
        mut matches: Vec<MatchRecord>,
        train: Vec<MatchId>,
        test: Vec<MatchId>,
        lines: BTreeMap<MatchId, Vec<PlayerMatchLine>>,
    ) -> Self {
        matches.sort_by_key(|m| (m.date, m.match_id));
        let index: HashMap<_, _> = matches
            .iter()
            .enumerate()
            .map(|(i, m)| (m.match_id, i))
            .collect();
        let mut by_player: HashMap<PlayerId, Vec<usize>> = HashMap::new();
        for (i, m) in matches.iter().enumerate() {
            for &p in m.home_players.iter().chain(&m.away_players) {
                by_player.entry(p).or_default().push(i);
            }
        }
        Dataset {
            matches,
            train,
            test,
            lines,
            index,
            by_player,
        }
    }

    /// All matches, ordered by `(date, match_id)`.
    pub fn matches(&self) -> &[MatchRecord] {
        &self.matches
    }

    pub fn get(&self, id: MatchId) -> Option<&MatchRecord> {
        self.index.get(&id).map(|&i| &self.matches[i])
    }

    pub fn match_record(&self, id: MatchId) -> Result<&MatchRecord> {
        self.get(id).ok_or(Error::UnknownMatch(id))
    }

    /// Position of a match in the global chronological order.
    pub fn position(&self, id: MatchId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn train_ids(&self) -> &[MatchId] {
        &self.train
    }

    pub fn test_ids(&self) -> &[MatchId] {
        &self.test
    }

    pub fn train(&self) -> impl Iterator<Item = &MatchRecord> {
        self.train.iter().filter_map(|id| self.get(*id))
    }

    pub fn test(&self) -> impl Iterator<Item = &MatchRecord> {
        self.test.iter().filter_map(|id| self.get(*id))
    }

    pub fn lines(&self, id: MatchId) -> &[PlayerMatchLine] {
        self.lines.get(&id).map_or(&[], Vec::as_slice)
    }

    pub fn line(&self, id: MatchId, player: PlayerId) -> Option<&PlayerMatchLine> {
        self.lines(id).iter().find(|l| l.player_id == player)
    }

    pub fn is_test(&self, id: MatchId) -> bool {
        self.test.contains(&id)
    }

    pub fn teams(&self) -> BTreeSet<TeamId> {
        self.matches
            .iter()
            .flat_map(|m| [m.home_team, m.away_team])
            .collect()
    }

    pub fn players(&self) -> BTreeSet<PlayerId> {
        self.by_player.keys().copied().collect()
    }

    pub fn divisions(&self) -> BTreeSet<DivisionId> {
        self.matches.iter().map(|m| m.division.clone()).collect()
    }

    /// Matches the player was listed for, chronological.
    pub fn matches_of(&self, player: PlayerId) -> impl Iterator<Item = &MatchRecord> {
        self.by_player
            .get(&player)
            .into_iter()
            .flatten()
            .map(|&i| &self.matches[i])
    }

    /// Most recent line of a player (team and role), if any.
    pub fn latest_line(&self, player: PlayerId) -> Option<&PlayerMatchLine> {
        let &last = self.by_player.get(&player)?.last()?;
        self.line(self.matches[last].match_id, player)
    }

    /// Label counts `[win, draw, lose]` (home perspective) over `ids`.
    pub fn label_histogram(&self, ids: &[MatchId]) -> [usize; 3] {
        let mut h = [0; 3];
        for m in ids.iter().filter_map(|id| self.get(*id)) {
            h[m.label.table_index()] += 1;
        }
        h
    }
}

/// Groups events by match, preserving order within each match.
pub fn group_events(events: &[EventRecord]) -> BTreeMap<MatchId, Vec<EventRecord>> {
    let mut out: BTreeMap<MatchId, Vec<EventRecord>> = BTreeMap::new();
    for e in events {
        out.entry(e.match_id).or_default().push(e.clone());
    }
    out
}

/// Builds match records, per-player lines and the chronological split: within
/// each division the earliest `train_fraction` of matches (floored) train, the
/// rest test.
pub fn build_match_dataset(
    events: &[EventRecord],
    metadata: &[MatchMeta],
    split: SplitConfig,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&split.train_fraction) {
        return Err(Error::config("train_fraction must lie in [0, 1]"));
    }
    let mut matches = Vec::with_capacity(metadata.len());
    let mut roles: HashMap<MatchId, Vec<(PlayerId, TeamId, Role, bool, Side)>> = HashMap::new();
    let mut seen = BTreeSet::new();
    for meta in metadata {
        if !seen.insert(meta.match_id) {
            return Err(Error::data(format!("duplicate match {}", meta.match_id)));
        }
        if meta.home_team_id == meta.away_team_id {
            return Err(Error::data(format!(
                "match {}: home and away team are both {}",
                meta.match_id, meta.home_team_id
            )));
        }
        let mut entries = Vec::new();
        let mut sides = [Vec::new(), Vec::new()];
        for (side, team) in [(Side::Home, meta.home_team_id), (Side::Away, meta.away_team_id)] {
            let lineup = meta.lineups.get(&team).map(Vec::as_slice).unwrap_or(&[]);
            if lineup.is_empty() {
                return Err(Error::data(format!(
                    "match {}: team {team} fields no players",
                    meta.match_id
                )));
            }
            if lineup.len() > 23 {
                return Err(Error::data(format!(
                    "match {}: team {team} lists {} players (max 23)",
                    meta.match_id,
                    lineup.len()
                )));
            }
            for entry in lineup {
                sides[side.index()].push(entry.player_id);
                entries.push((entry.player_id, team, entry.role, entry.started, side));
            }
        }
        let home: BTreeSet<_> = sides[0].iter().collect();
        if sides[1].iter().any(|p| home.contains(p)) {
            return Err(Error::data(format!(
                "match {}: a player is listed for both teams",
                meta.match_id
            )));
        }
        let [home_players, away_players] = sides;
        matches.push(MatchRecord {
            match_id: meta.match_id,
            division: meta.division_id.clone(),
            date: meta.date()?,
            home_team: meta.home_team_id,
            away_team: meta.away_team_id,
            home_players,
            away_players,
            home_goals: meta.home_goals,
            away_goals: meta.away_goals,
            label: Outcome::from_goals(meta.home_goals, meta.away_goals),
        });
        roles.insert(meta.match_id, entries);
    }

    let by_match: HashMap<MatchId, &MatchRecord> =
        matches.iter().map(|m| (m.match_id, m)).collect();
    let mut counts: HashMap<(MatchId, PlayerId), EventCounts> = HashMap::new();
    for e in events {
        let m = by_match
            .get(&e.match_id)
            .ok_or_else(|| Error::data(format!("event references unknown match {}", e.match_id)))?;
        if m.side_of_team(e.actor_team).is_none() {
            return Err(Error::data(format!(
                "match {}: event team {} does not participate",
                e.match_id, e.actor_team
            )));
        }
        counts.entry((e.match_id, e.actor)).or_default().increment(e.kind);
    }

    let mut lines = BTreeMap::new();
    for m in &matches {
        let entries = &roles[&m.match_id];
        let match_lines = entries
            .iter()
            .map(|&(player, team, role, started, side)| PlayerMatchLine {
                match_id: m.match_id,
                player_id: player,
                team_id: team,
                role,
                counts: counts.get(&(m.match_id, player)).copied().unwrap_or_default(),
                outcome: m.outcome_for(side),
                started,
            })
            .collect();
        lines.insert(m.match_id, match_lines);
    }

    let mut per_division: BTreeMap<&DivisionId, Vec<&MatchRecord>> = BTreeMap::new();
    for m in &matches {
        per_division.entry(&m.division).or_default().push(m);
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for list in per_division.values_mut() {
        list.sort_by_key(|m| (m.date, m.match_id));
        let n_train = (list.len() as f64 * split.train_fraction).floor() as usize;
        train.extend(list[..n_train].iter().map(|m| m.match_id));
        test.extend(list[n_train..].iter().map(|m| m.match_id));
    }

    let mut ds = Dataset::assemble(matches, train, test, lines);
    let pos = ds.index.clone();
    ds.train.sort_by_key(|id| pos[id]);
    ds.test.sort_by_key(|id| pos[id]);
    Ok(ds)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryScope {
    #[default]
    AllCompetitions,
    SameDivision,
}

/// A player's most recent match lines before some query match, oldest first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryWindow {
    pub player: PlayerId,
    pub capacity: usize,
    pub entries: Vec<PlayerMatchLine>,
}

impl HistoryWindow {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn match_ids(&self) -> impl Iterator<Item = MatchId> + '_ {
        self.entries.iter().map(|l| l.match_id)
    }
}

/// The player's at most `capacity` most recent lines strictly before
/// `query` in the global `(date, match_id)` order. The player need not be
/// listed for `query`.
pub fn player_history(
    ds: &Dataset,
    player: PlayerId,
    query: MatchId,
    capacity: usize,
    scope: HistoryScope,
) -> Result<HistoryWindow> {
    let q = ds.position(query).ok_or(Error::UnknownMatch(query))?;
    let division = &ds.matches[q].division;
    let played = ds.by_player.get(&player).map(Vec::as_slice).unwrap_or(&[]);
    let before = played.partition_point(|&i| i < q);
    let mut entries: Vec<PlayerMatchLine> = played[..before]
        .iter()
        .rev()
        .filter(|&&i| scope == HistoryScope::AllCompetitions || &ds.matches[i].division == division)
        .take(capacity)
        .filter_map(|&i| ds.line(ds.matches[i].match_id, player).cloned())
        .collect();
    entries.reverse();
    Ok(HistoryWindow {
        player,
        capacity,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::events::EventKind;

    fn meta(id: i64, div: &str, date: &str, home: i64, away: i64, hg: u32, ag: u32) -> MatchMeta {
        let lineup = |team: i64| {
            (0..3)
                .map(|j| LineupEntry {
                    player_id: PlayerId(team * 100 + j),
                    role: [Role::GK, Role::DF, Role::FW][j as usize],
                    started: true,
                })
                .collect::<Vec<_>>()
        };
        MatchMeta {
            match_id: MatchId(id),
            division_id: div.into(),
            date_iso8601: date.to_string(),
            home_team_id: TeamId(home),
            away_team_id: TeamId(away),
            lineups: [(TeamId(home), lineup(home)), (TeamId(away), lineup(away))]
                .into_iter()
                .collect(),
            home_goals: hg,
            away_goals: ag,
        }
    }

    fn ev(m: i64, actor: i64, team: i64, kind: EventKind) -> EventRecord {
        EventRecord {
            match_id: MatchId(m),
            division: "A".into(),
            timestamp: 0.0,
            kind,
            actor: PlayerId(actor),
            actor_team: TeamId(team),
            counterpart: None,
        }
    }

    fn league(n: usize) -> Vec<MatchMeta> {
        (0..n)
            .map(|i| {
                let day = format!("2017-08-{:02}", 1 + i % 28);
                let (h, a) = if i % 2 == 0 { (1, 2) } else { (2, 1) };
                meta(i as i64 + 1, "A", &day, h, a, (i % 3) as u32, 1)
            })
            .collect()
    }

    #[test]
    fn split_is_chronological_per_division() {
        let mut metas = league(10);
        metas.extend((0..5).map(|i| meta(100 + i, "B", "2018-01-01", 3, 4, 1, 0)));
        let ds = build_match_dataset(&[], &metas, SplitConfig::default()).unwrap();
        assert_eq!(ds.train_ids().len(), 8 + 4);
        assert_eq!(ds.test_ids().len(), 2 + 1);
        for div in ds.divisions() {
            let max_train = ds.train().filter(|m| m.division == div).map(|m| (m.date, m.match_id)).max();
            let min_test = ds.test().filter(|m| m.division == div).map(|m| (m.date, m.match_id)).min();
            assert!(max_train <= min_test);
        }
    }

    #[test]
    fn spa_sized_division_splits_304_76() {
        let metas: Vec<_> = (0..380)
            .map(|i| meta(i + 1, "SPA", "2017-09-01", 1 + i % 2, 2 - i % 2, 0, 0))
            .collect();
        let ds = build_match_dataset(&[], &metas, SplitConfig::default()).unwrap();
        assert_eq!(ds.train_ids().len(), 304);
        assert_eq!(ds.test_ids().len(), 76);
    }

    #[test]
    fn perspective_consistency() {
        let ds = build_match_dataset(&[], &league(6), SplitConfig::default()).unwrap();
        for m in ds.matches() {
            for l in ds.lines(m.match_id) {
                let side = m.side_of_team(l.team_id).unwrap();
                assert_eq!(l.outcome, m.outcome_for(side));
            }
            let home = ds.line(m.match_id, m.home_players[0]).unwrap().outcome;
            let away = ds.line(m.match_id, m.away_players[0]).unwrap().outcome;
            assert_eq!(home, away.flipped());
        }
    }

    #[test]
    fn empty_lineup_is_data_error() {
        let mut m = meta(1, "A", "2017-08-01", 1, 2, 0, 0);
        m.lineups.remove(&TeamId(2));
        assert!(matches!(
            build_match_dataset(&[], &[m], SplitConfig::default()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn event_for_unknown_match_is_rejected() {
        let err = build_match_dataset(
            &[ev(99, 100, 1, EventKind::Pass)],
            &league(2),
            SplitConfig::default(),
        );
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn counts_land_on_lines() {
        let events = vec![
            ev(1, 100, 1, EventKind::Pass),
            ev(1, 100, 1, EventKind::Pass),
            ev(1, 201, 2, EventKind::Foul),
        ];
        let ds = build_match_dataset(&events, &league(2), SplitConfig::default()).unwrap();
        let l = ds.line(MatchId(1), PlayerId(100)).unwrap();
        assert_eq!(l.counts.get(EventKind::Pass), 2);
        assert_eq!(ds.line(MatchId(1), PlayerId(201)).unwrap().counts.get(EventKind::Foul), 1);
    }

    #[test]
    fn history_window_semantics() {
        let ds = build_match_dataset(&[], &league(16), SplitConfig::default()).unwrap();
        let p = PlayerId(100);
        let first = ds.matches()[0].match_id;
        assert!(player_history(&ds, p, first, 10, HistoryScope::AllCompetitions)
            .unwrap()
            .is_empty());
        let last = ds.matches()[15].match_id;
        let w = player_history(&ds, p, last, 10, HistoryScope::AllCompetitions).unwrap();
        assert_eq!(w.len(), 10);
        let expected: Vec<_> = ds.matches()[5..15].iter().map(|m| m.match_id).collect();
        assert_eq!(w.match_ids().collect::<Vec<_>>(), expected);
        assert!(!w.match_ids().any(|id| id == last));
    }

    #[test]
    fn date_ties_break_by_match_id() {
        let metas = vec![
            meta(5, "A", "2017-08-01", 1, 2, 1, 0),
            meta(3, "A", "2017-08-01", 2, 1, 1, 0),
        ];
        let ds = build_match_dataset(&[], &metas, SplitConfig::default()).unwrap();
        assert_eq!(ds.matches()[0].match_id, MatchId(3));
        let w = player_history(&ds, PlayerId(100), MatchId(5), 10, HistoryScope::AllCompetitions)
            .unwrap();
        assert_eq!(w.match_ids().collect::<Vec<_>>(), vec![MatchId(3)]);
    }

    #[test]
    fn metadata_round_trips_through_json() {
        let metas = league(3);
        let text = serde_json::to_string(&metas).unwrap();
        assert!(text.contains("dateISO8601"));
        assert_eq!(read_match_metadata(text.as_bytes()).unwrap(), metas);
        let ndjson: String = metas
            .iter()
            .map(|m| serde_json::to_string(m).unwrap() + "\n")
            .collect();
        assert_eq!(read_match_metadata(ndjson.as_bytes()).unwrap(), metas);
    }

    #[test]
    fn dataset_serde_rebuilds_indexes() {
        let ds = build_match_dataset(&[], &league(6), SplitConfig::default()).unwrap();
        let back: Dataset = serde_json::from_str(&serde_json::to_string(&ds).unwrap()).unwrap();
        assert_eq!(back.position(MatchId(4)), ds.position(MatchId(4)));
        assert_eq!(back.matches_of(PlayerId(100)).count(), 6);
    }
}
