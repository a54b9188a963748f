//! Synthetic round-robin leagues with a known outcome model.
//!
//! Each team has a latent strength evenly spaced over
//! `[-strength_spread, +strength_spread]` (assignment shuffled by the seed).
//! With `d = s_home - s_away + home_advantage` and draw margin `c`, a fixture
//! ends
//!
//! ```text
//! P(win)  = sigmoid(d - c)
//! P(lose) = sigmoid(-d - c)
//! P(draw) = 1 - P(win) - P(lose)
//! ```
//!
//! so the Bayes-optimal classifier predicts the arg-max class and its expected
//! accuracy is the mean over fixtures of the largest class probability.
//! Event counts are Poisson with rates tilted by the player's skill relative to
//! the opponent, and goals add shots, so the interaction graphs carry signal.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{Days, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{
    build_match_dataset, write_event_stream, Dataset, DivisionId, EventKind, EventRecord,
    LineupEntry, MatchId, MatchMeta, Outcome, PlayerId, Role, SplitConfig, TeamId,
};
use crate::autograd::sigmoid;
use crate::error::{Error, Result};
use crate::match_net::Thresholds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_teams: usize,
    pub n_players_per_team: usize,
    /// Number of single round-robin cycles; home and away swap every cycle.
    pub n_rounds: usize,
    pub strength_spread: f64,
    pub seed: u64,
    pub home_advantage: f64,
    pub draw_margin: f64,
    /// Log-rate tilt of event counts per unit of skill difference.
    pub event_coupling: f64,
    /// Spread of individual player skill around the team strength.
    pub player_skill_std: f64,
    pub division: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_teams: 10,
            n_players_per_team: 14,
            n_rounds: 16,
            strength_spread: 2.0,
            seed: 0,
            home_advantage: 0.6,
            draw_margin: 0.6,
            event_coupling: 0.35,
            player_skill_std: 0.3,
            division: "SYN".to_string(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_teams < 2 || self.n_teams % 2 != 0 {
            return Err(Error::config("n_teams must be even and at least 2"));
        }
        if !(1..=23).contains(&self.n_players_per_team) {
            return Err(Error::config("n_players_per_team must be in 1..=23"));
        }
        if self.n_rounds == 0 {
            return Err(Error::config("n_rounds must be positive"));
        }
        for (name, v) in [
            ("strength_spread", self.strength_spread),
            ("draw_margin", self.draw_margin),
            ("player_skill_std", self.player_skill_std),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("{name} must be finite and non-negative")));
            }
        }
        if !self.home_advantage.is_finite() || !self.event_coupling.is_finite() {
            return Err(Error::config("home_advantage and event_coupling must be finite"));
        }
        Ok(())
    }
}

/// `[win, draw, lose]` for the home side.
pub fn outcome_probabilities(
    home_strength: f64,
    away_strength: f64,
    home_advantage: f64,
    draw_margin: f64,
) -> [f64; 3] {
    let d = home_strength - away_strength + home_advantage;
    let win = sigmoid(d - draw_margin);
    let lose = sigmoid(-d - draw_margin);
    [win, 1.0 - win - lose, lose]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureProbabilities {
    pub match_id: MatchId,
    pub home_team: TeamId,
    pub away_team: TeamId,
    pub win: f64,
    pub draw: f64,
    pub lose: f64,
}

impl FixtureProbabilities {
    pub fn as_array(&self) -> [f64; 3] {
        [self.win, self.draw, self.lose]
    }

    pub fn bayes_class(&self) -> Outcome {
        let p = self.as_array();
        let best = (0..3).fold(0, |b, i| if p[i] > p[b] { i } else { b });
        Outcome::TABLE_ORDER[best]
    }
}

/// Sidecar written next to the generated data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub strengths: BTreeMap<TeamId, f64>,
    pub player_skills: BTreeMap<PlayerId, f64>,
    pub fixtures: Vec<FixtureProbabilities>,
    /// Expected accuracy of the arg-max classifier over all fixtures.
    pub bayes_accuracy: f64,
    /// Same, restricted to the chronological test split.
    pub bayes_accuracy_test: f64,
    /// Expected accuracy on the test split of thresholding the true expected
    /// target `P(win) + 0.5 P(draw)` at 4/7 and 5/7.
    pub threshold_accuracy_test: f64,
}

pub struct SyntheticLeague {
    pub events: Vec<EventRecord>,
    pub metadata: Vec<MatchMeta>,
    pub dataset: Dataset,
    pub manifest: SynthManifest,
}

impl SyntheticLeague {
    /// Writes `events.jsonl`, `matches.json` and `manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut events = Vec::new();
        write_event_stream(&mut events, &self.events)?;
        fs::write(dir.join("events.jsonl"), events)?;
        fs::write(
            dir.join("matches.json"),
            serde_json::to_vec_pretty(&self.metadata)?,
        )?;
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_vec_pretty(&self.manifest)?,
        )?;
        Ok(())
    }
}

const ROLE_PATTERN: [Role; 11] = [
    Role::GK,
    Role::DF,
    Role::DF,
    Role::DF,
    Role::DF,
    Role::MF,
    Role::MF,
    Role::MF,
    Role::MF,
    Role::FW,
    Role::FW,
];
const BENCH_PATTERN: [Role; 4] = [Role::GK, Role::DF, Role::MF, Role::FW];

fn squad_role(j: usize) -> Role {
    if j < ROLE_PATTERN.len() {
        ROLE_PATTERN[j]
    } else {
        BENCH_PATTERN[(j - ROLE_PATTERN.len()) % BENCH_PATTERN.len()]
    }
}

/// Mean events per match for a starter, indexed like [`EventKind::ALL`].
fn base_rates(role: Role) -> [f64; EventKind::COUNT] {
    match role {
        Role::GK => [0.5, 0.1, 0.6, 1.0, 0.2, 0.0, 0.4, 3.0, 2.5, 0.0],
        Role::DF => [3.0, 0.8, 0.2, 0.0, 0.4, 0.05, 0.8, 5.0, 0.0, 0.3],
        Role::MF => [3.0, 0.6, 0.4, 0.0, 0.4, 0.1, 1.2, 6.0, 0.0, 0.7],
        Role::FW => [3.0, 0.5, 0.2, 0.0, 0.3, 0.6, 1.2, 3.0, 0.0, 1.2],
    }
}

/// +1 when stronger sides produce more of the event, -1 when fewer.
fn coupling_sign(kind: EventKind) -> f64 {
    match kind {
        EventKind::Pass | EventKind::Shot | EventKind::OthersOnTheBall | EventKind::FreeKick => 1.0,
        EventKind::Offside => 0.5,
        EventKind::Foul | EventKind::SaveAttempt | EventKind::GoalkeeperLeavingLine => -1.0,
        EventKind::Duel | EventKind::Interruption => 0.0,
    }
}

fn poisson(rng: &mut ChaCha8Rng, rate: f64) -> u32 {
    if rate <= 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("positive rate").sample(rng) as u32
}

/// Circle-method round robin; returns `(matchday, home_index, away_index)`.
fn schedule(n_teams: usize, n_rounds: usize) -> Vec<(usize, usize, usize)> {
    let mut fixtures = Vec::new();
    let mut matchday = 0;
    for cycle in 0..n_rounds {
        let mut order: Vec<usize> = (0..n_teams).collect();
        for round in 0..n_teams - 1 {
            for i in 0..n_teams / 2 {
                let (mut a, mut b) = (order[i], order[n_teams - 1 - i]);
                if (round + i + cycle) % 2 == 1 {
                    std::mem::swap(&mut a, &mut b);
                }
                fixtures.push((matchday, a, b));
            }
            order[1..].rotate_right(1);
            matchday += 1;
        }
    }
    fixtures
}

pub fn synthesize_league(config: &SynthConfig) -> Result<SyntheticLeague> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_teams;
    let division = DivisionId(config.division.clone());

    let mut ranks: Vec<usize> = (0..n).collect();
    ranks.shuffle(&mut rng);
    let team_ids: Vec<TeamId> = (1..=n as i64).map(TeamId).collect();
    let strengths: Vec<f64> = ranks
        .iter()
        .map(|&r| config.strength_spread * (2.0 * r as f64 / (n - 1) as f64 - 1.0))
        .collect();

    let skill_noise = Normal::new(0.0, config.player_skill_std.max(1e-12)).expect("valid std");
    let squads: Vec<Vec<(PlayerId, Role, f64)>> = (0..n)
        .map(|t| {
            (0..config.n_players_per_team)
                .map(|j| {
                    let skill = if config.player_skill_std > 0.0 {
                        strengths[t] + skill_noise.sample(&mut rng)
                    } else {
                        strengths[t]
                    };
                    (PlayerId(team_ids[t].0 * 100 + j as i64), squad_role(j), skill)
                })
                .collect()
        })
        .collect();
    // Preferred pass receivers: two or three fixed teammates per player.
    let receivers: Vec<Vec<Vec<usize>>> = squads
        .iter()
        .map(|squad| {
            (0..squad.len())
                .map(|j| {
                    let mut mates: Vec<usize> = (0..squad.len()).filter(|&k| k != j).collect();
                    mates.shuffle(&mut rng);
                    mates.truncate(2 + (j % 2));
                    mates
                })
                .collect()
        })
        .collect();

    let start = NaiveDate::from_ymd_opt(2017, 8, 5).expect("valid date");
    let mut events = Vec::new();
    let mut metadata = Vec::new();
    let mut fixtures = Vec::new();
    for (k, (matchday, hi, ai)) in schedule(n, config.n_rounds).into_iter().enumerate() {
        let match_id = MatchId(k as i64 + 1);
        let probs = outcome_probabilities(
            strengths[hi],
            strengths[ai],
            config.home_advantage,
            config.draw_margin,
        );
        fixtures.push(FixtureProbabilities {
            match_id,
            home_team: team_ids[hi],
            away_team: team_ids[ai],
            win: probs[0],
            draw: probs[1],
            lose: probs[2],
        });
        let u: f64 = rng.random();
        let outcome = if u < probs[0] {
            Outcome::Win
        } else if u < probs[0] + probs[1] {
            Outcome::Draw
        } else {
            Outcome::Lose
        };
        let (home_goals, away_goals) = match outcome {
            Outcome::Draw => {
                let g = poisson(&mut rng, 1.0);
                (g, g)
            }
            Outcome::Win => {
                let l = poisson(&mut rng, 0.8);
                (l + 1 + poisson(&mut rng, 0.6), l)
            }
            Outcome::Lose => {
                let l = poisson(&mut rng, 0.8);
                (l, l + 1 + poisson(&mut rng, 0.6))
            }
        };

        let mut match_events = Vec::new();
        let sides = [(hi, ai, home_goals), (ai, hi, away_goals)];
        // Marked opponents for defensive events, drawn per match.
        let marks: Vec<Vec<Vec<usize>>> = sides
            .iter()
            .map(|&(t, o, _)| {
                (0..squads[t].len())
                    .map(|_| {
                        let pool: Vec<usize> = (0..squads[o].len()).collect();
                        pool.choose_multiple(&mut rng, 2.min(pool.len())).copied().collect()
                    })
                    .collect()
            })
            .collect();
        for (s, &(t, o, goals)) in sides.iter().enumerate() {
            let squad = &squads[t];
            let opp_strength = strengths[o];
            let attackers: Vec<usize> = (0..squad.len())
                .filter(|&j| matches!(squad[j].1, Role::FW | Role::MF))
                .collect();
            let mut extra_shots = vec![0u32; squad.len()];
            for _ in 0..goals {
                let pool = if attackers.is_empty() { (0..squad.len()).collect() } else { attackers.clone() };
                extra_shots[*pool.choose(&mut rng).expect("non-empty squad")] += 1;
            }
            for (j, &(pid, role, skill)) in squad.iter().enumerate() {
                let minutes = if j < 11 { 1.0 } else { 0.3 };
                let rates = base_rates(role);
                for kind in EventKind::ALL {
                    let tilt = (config.event_coupling * coupling_sign(kind) * (skill - opp_strength)).exp();
                    let mut count = poisson(&mut rng, rates[kind.index()] * minutes * tilt);
                    if kind == EventKind::Shot {
                        count += extra_shots[j];
                    }
                    for _ in 0..count {
                        let counterpart = match kind {
                            EventKind::Pass => receivers[t][j].choose(&mut rng).map(|&k| squad[k].0),
                            EventKind::Duel | EventKind::Foul => marks[s][j]
                                .choose(&mut rng)
                                .map(|&k| squads[o][k].0),
                            _ => None,
                        };
                        match_events.push(EventRecord {
                            match_id,
                            division: division.clone(),
                            timestamp: (rng.random::<f64>() * 5700.0 * 100.0).round() / 100.0,
                            kind,
                            actor: pid,
                            actor_team: team_ids[t],
                            counterpart,
                        });
                    }
                }
            }
        }
        match_events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        events.extend(match_events);

        let lineup = |t: usize| {
            squads[t]
                .iter()
                .enumerate()
                .map(|(j, &(pid, role, _))| LineupEntry {
                    player_id: pid,
                    role,
                    started: j < 11,
                })
                .collect::<Vec<_>>()
        };
        let date = start + Days::new(7 * matchday as u64);
        metadata.push(MatchMeta {
            match_id,
            division_id: division.clone(),
            date_iso8601: date.format("%Y-%m-%d").to_string(),
            home_team_id: team_ids[hi],
            away_team_id: team_ids[ai],
            lineups: [(team_ids[hi], lineup(hi)), (team_ids[ai], lineup(ai))]
                .into_iter()
                .collect(),
            home_goals,
            away_goals,
        });
    }

    let dataset = build_match_dataset(&events, &metadata, SplitConfig::default())?;
    let bayes = |fs: &mut dyn Iterator<Item = &FixtureProbabilities>| {
        let (sum, cnt) = fs.fold((0.0, 0usize), |(s, c), f| {
            (s + f.win.max(f.draw).max(f.lose), c + 1)
        });
        sum / cnt.max(1) as f64
    };
    let test_ids: std::collections::HashSet<_> = dataset.test_ids().iter().copied().collect();
    let bayes_accuracy = bayes(&mut fixtures.iter());
    let bayes_accuracy_test = bayes(&mut fixtures.iter().filter(|f| test_ids.contains(&f.match_id)));
    let thresholds = Thresholds::default();
    let test_fixtures: Vec<_> = fixtures.iter().filter(|f| test_ids.contains(&f.match_id)).collect();
    let threshold_accuracy_test = test_fixtures
        .iter()
        .map(|f| {
            let y = f.win + 0.5 * f.draw;
            let class = thresholds.classify(y).expect("probability in range");
            f.as_array()[class.table_index()]
        })
        .sum::<f64>()
        / test_fixtures.len().max(1) as f64;

    let manifest = SynthManifest {
        config: config.clone(),
        strengths: team_ids.iter().copied().zip(strengths.iter().copied()).collect(),
        player_skills: squads.iter().flatten().map(|&(p, _, s)| (p, s)).collect(),
        fixtures,
        bayes_accuracy,
        bayes_accuracy_test,
        threshold_accuracy_test,
    };
    Ok(SyntheticLeague {
        events,
        metadata,
        dataset,
        manifest,
    })
}
