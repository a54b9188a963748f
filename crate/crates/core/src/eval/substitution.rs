use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Predictor;
use crate::data::{MatchId, Outcome, PlayerId, TeamId};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Substitution {
    pub out_player: PlayerId,
    pub in_player: PlayerId,
}

/// Outcome shares in percent from one team's perspective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub win: f64,
    pub draw: f64,
    pub lose: f64,
}

impl Distribution {
    pub fn from_outcomes(outcomes: &[Outcome]) -> Self {
        let n = outcomes.len().max(1) as f64;
        let share = |o: Outcome| 100.0 * outcomes.iter().filter(|x| **x == o).count() as f64 / n;
        Distribution {
            win: share(Outcome::Win),
            draw: share(Outcome::Draw),
            lose: share(Outcome::Lose),
        }
    }

    pub fn minus(&self, other: &Distribution) -> Distribution {
        Distribution {
            win: self.win - other.win,
            draw: self.draw - other.draw,
            lose: self.lose - other.lose,
        }
    }

    pub fn total(&self) -> f64 {
        self.win + self.draw + self.lose
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.win, self.draw, self.lose]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionRow {
    pub substitutions: Vec<Substitution>,
    pub distribution: Distribution,
    /// Percentage points relative to the baseline.
    pub delta: Distribution,
    /// Mean team-perspective score over the fixtures.
    pub mean_score: f64,
    /// Fixtures in which some outgoing player was listed.
    pub fixtures_affected: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionReport {
    pub team: TeamId,
    pub opponent: Option<TeamId>,
    pub fixtures: Vec<MatchId>,
    pub baseline: Distribution,
    pub baseline_mean_score: f64,
    /// One row per substitution applied alone.
    pub rows: Vec<SubstitutionRow>,
    /// All substitutions applied together.
    pub combined: SubstitutionRow,
}

/// The team's test fixtures, optionally only those against `opponent`.
pub fn team_test_fixtures(p: &Predictor<'_>, team: TeamId, opponent: Option<TeamId>) -> Vec<MatchId> {
    p.ds
        .test()
        .filter(|m| m.side_of_team(team).is_some())
        .filter(|m| opponent.is_none_or(|o| m.side_of_team(o).is_some() && o != team))
        .map(|m| m.match_id)
        .collect()
}

struct Evaluated {
    outcomes: Vec<Outcome>,
    mean_score: f64,
    affected: usize,
}

fn evaluate(p: &Predictor<'_>, team: TeamId, fixtures: &[MatchId], subs: &[Substitution]) -> Result<Evaluated> {
    let overrides: BTreeMap<PlayerId, PlayerId> = subs.iter().map(|s| (s.out_player, s.in_player)).collect();
    let mut outcomes = Vec::with_capacity(fixtures.len());
    let mut score = 0.0;
    let mut affected = 0;
    for &id in fixtures {
        let record = p.ds.match_record(id)?;
        let side = record
            .side_of_team(team)
            .ok_or_else(|| Error::Domain(format!("team {team} does not play in match {id}")))?;
        let own = record.players(side);
        // Only the host team's players are replaced.
        let local: BTreeMap<PlayerId, PlayerId> = overrides
            .iter()
            .filter(|(out, _)| own.contains(out))
            .map(|(a, b)| (*a, *b))
            .collect();
        if !local.is_empty() {
            affected += 1;
        }
        let pred = p.predict_fixture(id, &local)?;
        let home = pred.outcome_class;
        let (o, s) = match side {
            crate::data::Side::Home => (home, pred.y_hat),
            crate::data::Side::Away => (home.flipped(), 1.0 - pred.y_hat),
        };
        outcomes.push(o);
        score += s;
    }
    Ok(Evaluated {
        outcomes,
        mean_score: score / fixtures.len() as f64,
        affected,
    })
}

/// Baseline outcome distribution of `team` over `fixtures`, and the shift
/// caused by replacing each outgoing player's pooled history with the
/// incoming player's. The host team's identity embedding is kept.
pub fn substitution_analysis(
    p: &Predictor<'_>,
    team: TeamId,
    opponent: Option<TeamId>,
    substitutions: &[Substitution],
    fixtures: &[MatchId],
) -> Result<SubstitutionReport> {
    if !p.ds.teams().contains(&team) {
        return Err(Error::UnknownTeam(team));
    }
    if let Some(o) = opponent {
        if !p.ds.teams().contains(&o) {
            return Err(Error::UnknownTeam(o));
        }
    }
    if fixtures.is_empty() {
        return Err(Error::Domain(format!("team {team} has no fixtures to evaluate")));
    }
    let players = p.ds.players();
    let mut seen_out = Vec::new();
    for s in substitutions {
        for q in [s.out_player, s.in_player] {
            if !players.contains(&q) {
                return Err(Error::UnknownPlayer(q));
            }
        }
        if seen_out.contains(&s.out_player) {
            return Err(Error::Domain(format!("player {} is substituted more than once", s.out_player)));
        }
        seen_out.push(s.out_player);
        let listed = fixtures.iter().any(|id| {
            p.ds.get(*id)
                .and_then(|m| m.side_of_team(team).map(|side| m.players(side).contains(&s.out_player)))
                .unwrap_or(false)
        });
        if !listed {
            return Err(Error::Domain(format!(
                "player {} is not on team {team}'s roster in the selected fixtures",
                s.out_player
            )));
        }
    }

    let base = evaluate(p, team, fixtures, &[])?;
    let baseline = Distribution::from_outcomes(&base.outcomes);
    let row = |subs: &[Substitution]| -> Result<SubstitutionRow> {
        let e = evaluate(p, team, fixtures, subs)?;
        let distribution = Distribution::from_outcomes(&e.outcomes);
        Ok(SubstitutionRow {
            substitutions: subs.to_vec(),
            distribution,
            delta: distribution.minus(&baseline),
            mean_score: e.mean_score,
            fixtures_affected: e.affected,
        })
    };
    let rows = substitutions
        .iter()
        .map(|s| row(std::slice::from_ref(s)))
        .collect::<Result<Vec<_>>>()?;
    let combined = if substitutions.is_empty() {
        SubstitutionRow {
            substitutions: Vec::new(),
            distribution: baseline,
            delta: Distribution::default(),
            mean_score: base.mean_score,
            fixtures_affected: 0,
        }
    } else {
        row(substitutions)?
    };
    Ok(SubstitutionReport {
        team,
        opponent,
        fixtures: fixtures.to_vec(),
        baseline,
        baseline_mean_score: base.mean_score,
        rows,
        combined,
    })
}

fn signed(x: f64) -> String {
    let r = (x * 100.0).round() / 100.0;
    if r == 0.0 {
        "0.00".to_string()
    } else {
        format!("{r:+.2}")
    }
}

impl SubstitutionReport {
    /// Team baseline row, then one signed delta row per substitution.
    pub fn render(&self, team_name: &str, player_name: &dyn Fn(PlayerId) -> String) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<40} {:>8} {:>8} {:>8}", "", "Win", "Draw", "Lose");
        let _ = writeln!(
            out,
            "{:<40} {:>8.2} {:>8.2} {:>8.2}",
            team_name, self.baseline.win, self.baseline.draw, self.baseline.lose
        );
        let mut delta_row = |label: String, d: &Distribution| {
            let _ = writeln!(out, "{:<40} {:>8} {:>8} {:>8}", label, signed(d.win), signed(d.draw), signed(d.lose));
        };
        for r in &self.rows {
            let s = r.substitutions[0];
            delta_row(format!("\u{2192} {} (for {})", player_name(s.in_player), player_name(s.out_player)), &r.delta);
        }
        if self.rows.len() > 1 {
            delta_row("\u{2192} all substitutions".to_string(), &self.combined.delta);
        }
        out
    }
}
