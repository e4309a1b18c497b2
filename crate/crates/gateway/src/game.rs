//! Human-vs-system game sessions.
//!
//! A session is a fixed list of rounds played in order. Submitting a guess
//! for the open round ranks its panorama, resolves the round and reveals the
//! truth together with both scores. Until then every view of the session
//! leaves the truth and the system's answer out.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use whichcountry_core::knowledge::CountryCode;
use whichcountry_core::CountryRanking;

use crate::catalog::Catalog;
use crate::error::GatewayError;

pub const EXACT_POINTS: u32 = 100;
pub const RANK_DECAY: u32 = 10;

/// Points of the system when the truth sits at 1-based `rank`.
pub fn system_points(rank_of_truth: usize) -> u32 {
    let lost = (rank_of_truth.saturating_sub(1) as u64).saturating_mul(RANK_DECAY as u64);
    (EXACT_POINTS as u64).saturating_sub(lost) as u32
}

pub fn user_points(user_guess: &CountryCode, truth: &CountryCode) -> u32 {
    if user_guess == truth {
        EXACT_POINTS
    } else {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub user_guess: CountryCode,
    pub system_top1: CountryCode,
    pub rank_of_truth: usize,
    pub user_points: u32,
    pub system_points: u32,
}

/// Scores one round from the user's guess, the system ranking and the truth.
pub fn score_round(
    user_guess: &CountryCode,
    ranking: &CountryRanking,
    truth: &CountryCode,
) -> Result<Resolution, GatewayError> {
    if ranking.position(user_guess).is_none() {
        return Err(GatewayError::usage(format!("unknown country {user_guess}")));
    }
    let rank_of_truth = ranking
        .position(truth)
        .ok_or_else(|| GatewayError::new(crate::error::ErrorKind::Internal, format!("truth {truth} not ranked")))?;
    let system_top1 = ranking.top().expect("ranking holds the truth");
    Ok(Resolution {
        user_guess: *user_guess,
        system_top1,
        rank_of_truth,
        user_points: user_points(user_guess, truth),
        system_points: system_points(rank_of_truth),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    pub panorama_id: String,
    pub truth: CountryCode,
    pub resolution: Option<Resolution>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameStatus {
    Active,
    Finished,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameSession {
    pub id: String,
    pub rounds: Vec<Round>,
    pub current_round: usize,
}

/// Client view of a round. Truth and results are present only once resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundView {
    pub index: usize,
    pub panorama_id: String,
    pub image_url: String,
    pub resolved: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<CountryCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<Resolution>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub user: u32,
    pub system: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameView {
    pub id: String,
    pub status: GameStatus,
    pub current_round: usize,
    pub round_count: usize,
    pub rounds: Vec<RoundView>,
    pub totals: Totals,
}

/// One played round, enough to replay the session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub round: usize,
    pub panorama_id: String,
    pub user_guess: CountryCode,
}

pub fn image_url(panorama_id: &str) -> String {
    format!("/api/panoramas/{panorama_id}/image")
}

impl GameSession {
    pub fn new(id: String, rounds: Vec<(String, CountryCode)>) -> Result<Self, GatewayError> {
        if rounds.is_empty() {
            return Err(GatewayError::usage("a game needs at least one round"));
        }
        Ok(Self {
            id,
            rounds: rounds
                .into_iter()
                .map(|(panorama_id, truth)| Round {
                    panorama_id,
                    truth,
                    resolution: None,
                })
                .collect(),
            current_round: 0,
        })
    }

    pub fn status(&self) -> GameStatus {
        if self.current_round == self.rounds.len() {
            GameStatus::Finished
        } else {
            GameStatus::Active
        }
    }

    /// Resolves round `k` with `user_guess`. `rank` produces the system
    /// ranking for a panorama id and is called only when the submission is
    /// admissible.
    pub fn submit(
        &mut self,
        k: usize,
        user_guess: CountryCode,
        rank: impl FnOnce(&str) -> Result<CountryRanking, GatewayError>,
    ) -> Result<Resolution, GatewayError> {
        if k >= self.rounds.len() {
            return Err(GatewayError::not_found(format!("game {} has no round {k}", self.id)));
        }
        if self.status() == GameStatus::Finished {
            return Err(GatewayError::state(format!("game {} is finished", self.id)));
        }
        if self.rounds[k].resolution.is_some() {
            return Err(GatewayError::state(format!("round {k} is already resolved")));
        }
        if k != self.current_round {
            return Err(GatewayError::state(format!(
                "round {k} is not open; the current round is {}",
                self.current_round
            )));
        }
        let round = &mut self.rounds[k];
        let ranking = rank(&round.panorama_id)?;
        let resolution = score_round(&user_guess, &ranking, &round.truth)?;
        round.resolution = Some(resolution);
        self.current_round += 1;
        Ok(resolution)
    }

    pub fn totals(&self) -> Totals {
        self.rounds
            .iter()
            .filter_map(|r| r.resolution)
            .fold(Totals::default(), |t, r| Totals {
                user: t.user + r.user_points,
                system: t.system + r.system_points,
            })
    }

    pub fn round_view(&self, k: usize) -> RoundView {
        let r = &self.rounds[k];
        RoundView {
            index: k,
            panorama_id: r.panorama_id.clone(),
            image_url: image_url(&r.panorama_id),
            resolved: r.resolution.is_some(),
            truth: r.resolution.map(|_| r.truth),
            result: r.resolution,
        }
    }

    pub fn view(&self) -> GameView {
        GameView {
            id: self.id.clone(),
            status: self.status(),
            current_round: self.current_round,
            round_count: self.rounds.len(),
            rounds: (0..self.rounds.len()).map(|k| self.round_view(k)).collect(),
            totals: self.totals(),
        }
    }

    pub fn transcript(&self) -> Vec<TranscriptEntry> {
        self.rounds
            .iter()
            .enumerate()
            .filter_map(|(k, r)| {
                r.resolution.map(|res| TranscriptEntry {
                    round: k,
                    panorama_id: r.panorama_id.clone(),
                    user_guess: res.user_guess,
                })
            })
            .collect()
    }
}

struct Entry {
    session: Arc<Mutex<GameSession>>,
    touched: Instant,
}

/// In-memory sessions that expire `ttl` after their last access.
pub struct GameStore {
    sessions: Mutex<HashMap<String, Entry>>,
    ttl: Duration,
}

impl GameStore {
    pub fn new(ttl: Duration) -> Self {
        Self {
            sessions: Mutex::new(HashMap::new()),
            ttl,
        }
    }

    fn purge(&self, sessions: &mut HashMap<String, Entry>, now: Instant) {
        sessions.retain(|_, e| now.duration_since(e.touched) < self.ttl);
    }

    /// New session over `rounds` distinct catalog panoramas chosen by `rng`.
    pub fn create(&self, catalog: &Catalog, rounds: usize, rng: &mut impl Rng) -> Result<GameView, GatewayError> {
        if rounds == 0 {
            return Err(GatewayError::usage("rounds must be at least 1"));
        }
        if rounds > catalog.len() {
            return Err(GatewayError::usage(format!(
                "{rounds} rounds requested but only {} panoramas are available",
                catalog.len()
            )));
        }
        let picks = sample(rng, catalog.len(), rounds)
            .into_iter()
            .map(|i| {
                let item = &catalog.items()[i];
                (item.id.clone(), item.truth)
            })
            .collect();
        let id = format!("{:032x}", rng.random::<u128>());
        let session = GameSession::new(id.clone(), picks)?;
        let view = session.view();
        let now = Instant::now();
        let mut sessions = self.sessions.lock().expect("session map lock");
        self.purge(&mut sessions, now);
        sessions.insert(
            id,
            Entry {
                session: Arc::new(Mutex::new(session)),
                touched: now,
            },
        );
        Ok(view)
    }

    /// The session behind `id`; holding its lock serializes mutations.
    pub fn get(&self, id: &str) -> Result<Arc<Mutex<GameSession>>, GatewayError> {
        let now = Instant::now();
        let mut sessions = self.sessions.lock().expect("session map lock");
        self.purge(&mut sessions, now);
        let entry = sessions
            .get_mut(id)
            .ok_or_else(|| GatewayError::not_found(format!("unknown game {id}")))?;
        entry.touched = now;
        Ok(entry.session.clone())
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("session map lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
