//! JSON API for the browser client and the static asset host.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | GET | `/api/countries` | | `[Country]` |
//! | GET | `/api/panoramas` | | `[PanoramaEntry]` |
//! | GET | `/api/panoramas/{id}/image` | | image bytes |
//! | POST | `/api/guess` | multipart `image` (+ `north_offset_deg`) or `GuessByRef` | `GuessResponse` |
//! | POST | `/api/game` | `NewGame` | `GameView` (201) |
//! | GET | `/api/game/{id}` | | `GameView` |
//! | POST | `/api/game/{id}/rounds/{k}/guess` | `RoundGuess` | `RoundOutcome` |
//!
//! Errors are `{"code": ..., "message": ...}` with the status from
//! [`status_of`].

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Request, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;
use whichcountry_core::engine::Engine;
use whichcountry_core::knowledge::CountryCode;

use crate::catalog::Catalog;
use crate::error::{ErrorKind, GatewayError};
use crate::game::{image_url, GameStore, GameView, RoundView};
use crate::report::GuessResponse;

pub const MAX_UPLOAD_BYTES: usize = 64 << 20;

pub struct AppState {
    pub engine: Arc<Engine>,
    pub catalog: Arc<Catalog>,
    pub games: GameStore,
    pub rng: Mutex<StdRng>,
    /// Built client assets; a placeholder page is served when absent.
    pub assets: Option<PathBuf>,
}

impl AppState {
    pub fn new(engine: Engine, catalog: Catalog, games: GameStore, seed: Option<u64>, assets: Option<PathBuf>) -> Self {
        let rng = match seed {
            Some(s) => StdRng::seed_from_u64(s),
            None => StdRng::from_os_rng(),
        };
        Self {
            engine: Arc::new(engine),
            catalog: Arc::new(catalog),
            games,
            rng: Mutex::new(rng),
            assets,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

pub fn status_of(kind: ErrorKind) -> StatusCode {
    match kind {
        ErrorKind::Usage | ErrorKind::Data => StatusCode::BAD_REQUEST,
        ErrorKind::Decode => StatusCode::UNPROCESSABLE_ENTITY,
        ErrorKind::NotFound => StatusCode::NOT_FOUND,
        ErrorKind::State => StatusCode::CONFLICT,
        ErrorKind::Provider | ErrorKind::Remote => StatusCode::BAD_GATEWAY,
        ErrorKind::Config | ErrorKind::Io | ErrorKind::Internal => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.kind.code().to_string(),
            message: self.message,
        };
        (status_of(self.kind), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, GatewayError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Country {
    pub code: CountryCode,
    pub name: String,
    pub languages: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanoramaEntry {
    pub id: String,
    pub image_url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuessByRef {
    pub panorama_id: String,
    /// Overrides the catalog's north offset.
    #[serde(default)]
    pub north_offset_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewGame {
    pub rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundGuess {
    pub country: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundOutcome {
    pub round: RoundView,
    pub game: GameView,
}

fn json_body<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| GatewayError::usage(format!("invalid request body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| GatewayError::new(ErrorKind::Internal, format!("worker failed: {e}")))?
}

async fn countries(State(state): State<Arc<AppState>>) -> Json<Vec<Country>> {
    Json(
        state
            .engine
            .registry()
            .sheets()
            .map(|s| Country {
                code: s.code,
                name: s.display_name.clone(),
                languages: s.languages.iter().map(|l| l.code.clone()).collect(),
            })
            .collect(),
    )
}

async fn panoramas(State(state): State<Arc<AppState>>) -> Json<Vec<PanoramaEntry>> {
    Json(
        state
            .catalog
            .items()
            .iter()
            .map(|i| PanoramaEntry {
                id: i.id.clone(),
                image_url: image_url(&i.id),
            })
            .collect(),
    )
}

fn image_content_type(bytes: &[u8]) -> &'static str {
    match image::guess_format(bytes) {
        Ok(image::ImageFormat::Png) => "image/png",
        Ok(image::ImageFormat::Jpeg) => "image/jpeg",
        _ => "application/octet-stream",
    }
}

async fn panorama_image(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let catalog = state.catalog.clone();
    let bytes = blocking(move || catalog.read(&id).map(|(b, _)| b)).await?;
    let mut resp = bytes.to_vec().into_response();
    resp.headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static(image_content_type(&bytes)));
    Ok(resp)
}

async fn read_multipart(mut form: Multipart) -> ApiResult<(Vec<u8>, Option<f64>)> {
    let mut image = None;
    let mut north = None;
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| GatewayError::usage(format!("invalid multipart body: {e}")))?
    {
        let name = field.name().unwrap_or_default().to_string();
        let data = field
            .bytes()
            .await
            .map_err(|e| GatewayError::usage(format!("invalid multipart field {name}: {e}")))?;
        match name.as_str() {
            "image" => image = Some(data.to_vec()),
            "north_offset_deg" => {
                let text = String::from_utf8_lossy(&data);
                let text = text.trim();
                if !text.is_empty() {
                    let v: f64 = text
                        .parse()
                        .map_err(|_| GatewayError::usage(format!("north_offset_deg {text:?} is not a number")))?;
                    north = Some(v);
                }
            }
            other => return Err(GatewayError::usage(format!("unexpected multipart field {other:?}"))),
        }
    }
    let image = image.ok_or_else(|| GatewayError::usage("multipart body has no image field"))?;
    Ok((image, north))
}

async fn guess(State(state): State<Arc<AppState>>, req: Request) -> ApiResult<Json<GuessResponse>> {
    let content_type = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or_default()
        .to_string();
    let (bytes, north) = if content_type.starts_with("multipart/form-data") {
        let form = Multipart::from_request(req, &state)
            .await
            .map_err(|e| GatewayError::usage(e.body_text()))?;
        read_multipart(form).await?
    } else {
        let body = Bytes::from_request(req, &state)
            .await
            .map_err(|e| GatewayError::usage(e.body_text()))?;
        let r: GuessByRef = json_body(&body)?;
        let catalog = state.catalog.clone();
        let id = r.panorama_id.clone();
        let (bytes, item_north) = blocking(move || catalog.read(&id).map(|(b, item)| (b, item.north_offset_deg))).await?;
        (bytes, r.north_offset_deg.or(item_north))
    };
    let engine = state.engine.clone();
    let response = blocking(move || {
        let report = engine.guess_bytes(&bytes, north)?;
        Ok(GuessResponse::from_report(&report, engine.registry()))
    })
    .await?;
    Ok(Json(response))
}

async fn create_game(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<GameView>)> {
    let req: NewGame = json_body(&body)?;
    let mut rng = state.rng.lock().expect("rng lock");
    let view = state.games.create(&state.catalog, req.rounds, &mut *rng)?;
    Ok((StatusCode::CREATED, Json(view)))
}

async fn game_state(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<GameView>> {
    let session = state.games.get(&id)?;
    let view = session.lock().expect("session lock").view();
    Ok(Json(view))
}

async fn round_guess(
    State(state): State<Arc<AppState>>,
    Path((id, k)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<RoundOutcome>> {
    let k: usize = k
        .parse()
        .map_err(|_| GatewayError::not_found(format!("game {id} has no round {k:?}")))?;
    let session = state.games.get(&id)?;
    let req: RoundGuess = json_body(&body)?;
    let guess = CountryCode::new(req.country.trim())
        .ok()
        .filter(|c| state.engine.registry().contains(c))
        .ok_or_else(|| GatewayError::usage(format!("unknown country {:?}", req.country)))?;
    let engine = state.engine.clone();
    let catalog = state.catalog.clone();
    let outcome = blocking(move || {
        // held for the whole submission: one mutation per session at a time
        let mut s = session.lock().expect("session lock");
        s.submit(k, guess, |pid| {
            let (bytes, item) = catalog.read(pid)?;
            Ok(engine.guess_bytes(&bytes, item.north_offset_deg)?.ranking)
        })?;
        Ok(RoundOutcome {
            round: s.round_view(k),
            game: s.view(),
        })
    })
    .await?;
    Ok(Json(outcome))
}

async fn api_not_found(req: Request) -> GatewayError {
    GatewayError::not_found(format!("no route for {} {}", req.method(), req.uri().path()))
}

const PLACEHOLDER_PAGE: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>whichcountry</title></head>
<body><h1>whichcountry</h1>
<p>No client assets are installed. Start the server with <code>--assets DIR</code> to serve a built client.</p>
<p>API: <a href=\"/api/countries\">/api/countries</a>, <a href=\"/api/panoramas\">/api/panoramas</a>,
POST /api/guess, POST /api/game.</p>
</body></html>
";

async fn placeholder() -> Html<&'static str> {
    Html(PLACEHOLDER_PAGE)
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/countries", get(countries))
        .route("/panoramas", get(panoramas))
        .route("/panoramas/{id}/image", get(panorama_image))
        .route("/guess", post(guess))
        .route("/game", post(create_game))
        .route("/game/{id}", get(game_state))
        .route("/game/{id}/rounds/{k}/guess", post(round_guess))
        .fallback(api_not_found);
    let app = Router::new()
        .nest("/api", api)
        .layer(DefaultBodyLimit::max(MAX_UPLOAD_BYTES));
    let app = match &state.assets {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.fallback(placeholder),
    };
    app.with_state(state)
}

/// Serves until interrupted.
pub async fn serve(state: Arc<AppState>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
