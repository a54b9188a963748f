//! HTTP API over a loaded snapshot. Every response carries `v`, the schema
//! version.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::data::{PlayerId, Role, TeamId};
use crate::error::Error;
use crate::eval::{substitution_analysis, team_test_fixtures, Distribution, Substitution, SubstitutionReport};
use crate::match_net::MatchPrediction;
use crate::model::roster_inputs;
use crate::pipeline::Snapshot;

pub const API_VERSION: u32 = 1;

/// A snapshot plus data derived from it once at load time.
pub struct Loaded {
    pub snapshot: Snapshot,
    baselines: BTreeMap<TeamId, Option<Distribution>>,
    /// Each player's team at their latest appearance.
    rosters: BTreeMap<TeamId, Vec<PlayerId>>,
}

impl Loaded {
    pub fn new(snapshot: Snapshot) -> crate::Result<Self> {
        let baselines = snapshot.baselines()?;
        let mut latest: BTreeMap<PlayerId, TeamId> = BTreeMap::new();
        for m in snapshot.dataset.matches() {
            for (team, players) in [(m.home_team, &m.home_players), (m.away_team, &m.away_players)] {
                for &p in players {
                    latest.insert(p, team);
                }
            }
        }
        let mut rosters: BTreeMap<TeamId, Vec<PlayerId>> = snapshot.dataset.teams().into_iter().map(|t| (t, Vec::new())).collect();
        for (p, t) in latest {
            rosters.entry(t).or_default().push(p);
        }
        Ok(Loaded {
            snapshot,
            baselines,
            rosters,
        })
    }
}

/// Shared state. Reloading replaces the whole snapshot; handlers hold their
/// own `Arc` for the duration of a request.
#[derive(Clone)]
pub struct AppState {
    current: Arc<RwLock<Arc<Loaded>>>,
}

impl AppState {
    pub fn new(loaded: Loaded) -> Self {
        AppState {
            current: Arc::new(RwLock::new(Arc::new(loaded))),
        }
    }

    pub fn snapshot(&self) -> Arc<Loaded> {
        self.current.read().expect("state lock").clone()
    }

    pub fn swap(&self, loaded: Loaded) {
        *self.current.write().expect("state lock") = Arc::new(loaded);
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/teams", get(teams))
        .route("/api/players", get(players))
        .route("/api/predict", post(predict))
        .route("/api/whatif", post(whatif))
        .with_state(state)
}

pub async fn serve(state: AppState, bind: &str) -> crate::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    code: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

static FAULTS: AtomicU64 = AtomicU64::new(0);

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            body: ErrorBody {
                code: "bad_request",
                message: message.into(),
                id: None,
            },
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, code) = match &e {
            Error::UnknownTeam(_) | Error::UnknownPlayer(_) | Error::UnknownMatch(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::NoHistory(_) => (StatusCode::CONFLICT, "no_history"),
            Error::Domain(_) | Error::Config(_) | Error::Schema { .. } | Error::Parse { .. } | Error::LengthMismatch { .. } | Error::Json(_) => {
                (StatusCode::BAD_REQUEST, "bad_request")
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            let id = format!("{:08x}-{:04x}", std::process::id(), FAULTS.fetch_add(1, Ordering::Relaxed));
            tracing::error!(fault = %id, "{e}");
            return ApiError {
                status,
                body: ErrorBody {
                    code,
                    message: "internal error".into(),
                    id: Some(id),
                },
            };
        }
        ApiError {
            status,
            body: ErrorBody {
                code,
                message: e.to_string(),
                id: None,
            },
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "v": API_VERSION, "error": self.body });
        (self.status, Json(body)).into_response()
    }
}

/// Wraps a payload with the schema version.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Versioned<T> {
    pub v: u32,
    #[serde(flatten)]
    pub body: T,
}

fn ok<T: Serialize>(body: T) -> Json<Versioned<T>> {
    Json(Versioned { v: API_VERSION, body })
}

fn check_version(v: Option<u32>) -> Result<(), ApiError> {
    match v {
        None | Some(API_VERSION) => Ok(()),
        Some(other) => Err(ApiError::bad_request(format!("unsupported schema version {other}"))),
    }
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Health {
    pub status: String,
    pub stage: crate::training::Stage,
    pub trained: bool,
    pub teams: usize,
}

async fn health(State(s): State<AppState>) -> Json<Versioned<Health>> {
    let l = s.snapshot();
    ok(Health {
        status: "ok".into(),
        stage: l.snapshot.checkpoint.stage,
        trained: !l.snapshot.head_untrained(),
        teams: l.rosters.len(),
    })
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TeamSummary {
    pub team_id: TeamId,
    pub roster: Vec<PlayerId>,
    pub test_fixtures: usize,
    /// `None` when the team has no test fixtures.
    pub baseline: Option<Distribution>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct TeamsBody {
    pub teams: Vec<TeamSummary>,
}

async fn teams(State(s): State<AppState>) -> Json<Versioned<TeamsBody>> {
    let l = s.snapshot();
    let p = l.snapshot.predictor();
    let teams = l
        .rosters
        .iter()
        .map(|(&team_id, roster)| TeamSummary {
            team_id,
            roster: roster.clone(),
            test_fixtures: team_test_fixtures(&p, team_id, None).len(),
            baseline: l.baselines.get(&team_id).copied().flatten(),
        })
        .collect();
    ok(TeamsBody { teams })
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct PlayerSummary {
    pub player_id: PlayerId,
    pub role: Role,
    /// Matches the player appears in, all competitions.
    pub history_length: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct PlayersBody {
    pub team_id: TeamId,
    pub players: Vec<PlayerSummary>,
}

async fn players(State(s): State<AppState>, Query(q): Query<HashMap<String, String>>) -> Result<Json<Versioned<PlayersBody>>, ApiError> {
    let raw = q.get("team").ok_or_else(|| ApiError::bad_request("missing query parameter `team`"))?;
    let team = TeamId(raw.parse().map_err(|_| ApiError::bad_request(format!("team must be an integer, got {raw:?}")))?);
    let l = s.snapshot();
    let roster = l.rosters.get(&team).ok_or(Error::UnknownTeam(team))?;
    let ds = &l.snapshot.dataset;
    let players = roster
        .iter()
        .filter_map(|&p| {
            ds.latest_line(p).map(|line| PlayerSummary {
                player_id: p,
                role: line.role,
                history_length: ds.matches_of(p).count(),
            })
        })
        .collect();
    Ok(ok(PlayersBody { team_id: team, players }))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Rosters {
    pub home: Vec<PlayerId>,
    pub away: Vec<PlayerId>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PredictRequest {
    #[serde(default)]
    pub v: Option<u32>,
    pub home_team: TeamId,
    pub away_team: TeamId,
    pub rosters: Rosters,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct PredictBody {
    pub prediction: MatchPrediction,
}

/// Prediction for an arbitrary lineup, every player using their latest
/// stored history.
pub fn predict_lineup(l: &Loaded, req: &PredictRequest) -> crate::Result<MatchPrediction> {
    let snap = &l.snapshot;
    let ds = &snap.dataset;
    let teams = ds.teams();
    for t in [req.home_team, req.away_team] {
        if !teams.contains(&t) {
            return Err(Error::UnknownTeam(t));
        }
    }
    if req.home_team == req.away_team {
        return Err(Error::Domain("home and away team must differ".into()));
    }
    let Rosters { home, away } = &req.rosters;
    if home.is_empty() || away.is_empty() {
        return Err(Error::Domain("both rosters must list at least one player".into()));
    }
    let known = ds.players();
    let mut seen = std::collections::BTreeSet::new();
    for &p in home.iter().chain(away) {
        if !known.contains(&p) {
            return Err(Error::UnknownPlayer(p));
        }
        if !seen.insert(p) {
            return Err(Error::Domain(format!("player {p} is listed twice")));
        }
    }
    let inputs = roster_inputs(ds, req.home_team, req.away_team, home, away, snap.model.config.history);
    if let Some((i, _)) = inputs.history.iter().enumerate().find(|(_, h)| h.is_empty()) {
        return Err(Error::NoHistory(inputs.players[i]));
    }
    snap.model.predict(&snap.params, &snap.store, &snap.team_graph, &inputs)
}

async fn predict(State(s): State<AppState>, body: Result<Json<PredictRequest>, JsonRejection>) -> Result<Json<Versioned<PredictBody>>, ApiError> {
    let Json(req) = body?;
    check_version(req.v)?;
    let l = s.snapshot();
    let prediction = predict_lineup(&l, &req)?;
    Ok(ok(PredictBody { prediction }))
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WhatIfRequest {
    #[serde(default)]
    pub v: Option<u32>,
    pub team_id: TeamId,
    #[serde(default)]
    pub opponent: Option<TeamId>,
    #[serde(default)]
    pub substitutions: Vec<Substitution>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct WhatIfBody {
    pub report: SubstitutionReport,
}

pub fn run_whatif(l: &Loaded, req: &WhatIfRequest) -> crate::Result<SubstitutionReport> {
    let p = l.snapshot.predictor();
    if !l.snapshot.dataset.teams().contains(&req.team_id) {
        return Err(Error::UnknownTeam(req.team_id));
    }
    let fixtures = team_test_fixtures(&p, req.team_id, req.opponent);
    substitution_analysis(&p, req.team_id, req.opponent, &req.substitutions, &fixtures)
}

async fn whatif(State(s): State<AppState>, body: Result<Json<WhatIfRequest>, JsonRejection>) -> Result<Json<Versioned<WhatIfBody>>, ApiError> {
    let Json(req) = body?;
    check_version(req.v)?;
    let l = s.snapshot();
    let report = run_whatif(&l, &req)?;
    Ok(ok(WhatIfBody { report }))
}
