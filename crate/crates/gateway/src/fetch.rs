//! Street View client: one panorama per location, assembled from six
//! cube-face views into an equirectangular image.
//!
//! All traffic goes through [`HttpClient`] so runs can be recorded to a
//! directory and replayed offline. Recorded URLs never contain the API key.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use whichcountry_core::imaging::{Panorama, Rgb};

use crate::error::{ErrorKind, GatewayError};

pub const API_KEY_VAR: &str = "STREETVIEW_API_KEY";
pub const DEFAULT_ENDPOINT: &str = "https://maps.googleapis.com/maps/api/streetview";
/// Largest face size the static API serves.
pub const MAX_FACE_SIZE: u32 = 640;
const REPLAY_INDEX: &str = "index.json";

/// (heading, pitch) of the six cube faces, degrees.
pub const CUBE_FACES: [(f64, f64); 6] = [(0.0, 0.0), (90.0, 0.0), (180.0, 0.0), (270.0, 0.0), (0.0, 90.0), (0.0, -90.0)];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

pub trait HttpClient: Send + Sync {
    fn get(&self, url: &str) -> Result<HttpResponse, GatewayError>;
}

/// Live HTTPS client.
pub struct UreqClient {
    agent: ureq::Agent,
}

impl UreqClient {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent }
    }
}

impl HttpClient for UreqClient {
    fn get(&self, url: &str) -> Result<HttpResponse, GatewayError> {
        let target = redact(url);
        let mut resp = self
            .agent
            .get(url)
            .call()
            .map_err(|e| GatewayError::new(ErrorKind::Remote, format!("{target}: {e}")))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_vec()
            .map_err(|e| GatewayError::new(ErrorKind::Remote, format!("{target}: {e}")))?;
        Ok(HttpResponse { status, body })
    }
}

/// `url` with any `key=` query parameter removed.
pub fn redact(url: &str) -> String {
    let Some((base, query)) = url.split_once('?') else {
        return url.to_string();
    };
    let kept: Vec<&str> = query.split('&').filter(|p| !p.starts_with("key=")).collect();
    if kept.is_empty() {
        base.to_string()
    } else {
        format!("{base}?{}", kept.join("&"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordedResponse {
    pub url: String,
    pub status: u16,
    /// Body file relative to the replay directory.
    pub body_file: String,
}

/// Serves responses recorded in a directory holding `index.json` and the
/// body files it names.
#[derive(Debug, Clone, Default)]
pub struct ReplayClient {
    responses: BTreeMap<String, HttpResponse>,
}

impl ReplayClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, url: &str, status: u16, body: Vec<u8>) {
        self.responses.insert(redact(url), HttpResponse { status, body });
    }

    pub fn load(dir: &Path) -> Result<Self, GatewayError> {
        let index = dir.join(REPLAY_INDEX);
        let text = std::fs::read_to_string(&index).map_err(|e| GatewayError::io(&index, e))?;
        let entries: Vec<RecordedResponse> = serde_json::from_str(&text)
            .map_err(|e| GatewayError::new(ErrorKind::Data, format!("{}: {e}", index.display())))?;
        let mut client = Self::new();
        for e in entries {
            let path = dir.join(&e.body_file);
            let body = std::fs::read(&path).map_err(|err| GatewayError::io(&path, err))?;
            client.insert(&e.url, e.status, body);
        }
        Ok(client)
    }

    /// Writes `index.json` plus one body file per response.
    pub fn save(&self, dir: &Path) -> Result<(), GatewayError> {
        std::fs::create_dir_all(dir).map_err(|e| GatewayError::io(dir, e))?;
        let mut index = Vec::new();
        for (k, (url, resp)) in self.responses.iter().enumerate() {
            let body_file = format!("{k:03}.bin");
            let path = dir.join(&body_file);
            std::fs::write(&path, &resp.body).map_err(|e| GatewayError::io(&path, e))?;
            index.push(RecordedResponse {
                url: url.clone(),
                status: resp.status,
                body_file,
            });
        }
        let path = dir.join(REPLAY_INDEX);
        let text = serde_json::to_string_pretty(&index).expect("index serializes");
        std::fs::write(&path, text).map_err(|e| GatewayError::io(&path, e))
    }
}

impl HttpClient for ReplayClient {
    fn get(&self, url: &str) -> Result<HttpResponse, GatewayError> {
        let key = redact(url);
        self.responses
            .get(&key)
            .cloned()
            .ok_or_else(|| GatewayError::new(ErrorKind::Io, format!("no recorded response for {key}")))
    }
}

/// Forwards to `inner` and keeps every response for [`ReplayClient::save`].
pub struct RecordingClient<C> {
    inner: C,
    tape: Mutex<ReplayClient>,
}

impl<C: HttpClient> RecordingClient<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            tape: Mutex::new(ReplayClient::new()),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), GatewayError> {
        self.tape.lock().expect("tape lock").save(dir)
    }
}

impl<C: HttpClient> HttpClient for RecordingClient<C> {
    fn get(&self, url: &str) -> Result<HttpResponse, GatewayError> {
        let resp = self.inner.get(url)?;
        self.tape
            .lock()
            .expect("tape lock")
            .insert(url, resp.status, resp.body.clone());
        Ok(resp)
    }
}

/// Reads the API key, naming the variable when it is missing.
pub fn api_key_from_env() -> Result<String, GatewayError> {
    match std::env::var(API_KEY_VAR) {
        Ok(k) if !k.trim().is_empty() => Ok(k),
        _ => Err(GatewayError::config(format!(
            "environment variable {API_KEY_VAR} is not set; it must hold a Street View API key"
        ))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchRequest {
    pub lat: f64,
    pub lon: f64,
    /// Cube face edge in pixels.
    pub face_size: u32,
    /// Width of the assembled panorama; height is half of it.
    pub width: u32,
}

impl FetchRequest {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self {
            lat,
            lon,
            face_size: MAX_FACE_SIZE,
            width: 2048,
        }
    }

    fn validate(&self) -> Result<(), GatewayError> {
        if !(-90.0..=90.0).contains(&self.lat) || !(-180.0..=180.0).contains(&self.lon) {
            return Err(GatewayError::usage(format!("location {},{} is out of range", self.lat, self.lon)));
        }
        if self.face_size == 0 || self.face_size > MAX_FACE_SIZE {
            return Err(GatewayError::usage(format!("face size must be in 1..={MAX_FACE_SIZE}")));
        }
        if self.width < 2 || self.width % 2 != 0 {
            return Err(GatewayError::usage("panorama width must be even and at least 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchedPanorama {
    pub pano_id: String,
    pub lat: f64,
    pub lon: f64,
    pub date: Option<String>,
    /// Column 0 faces north, so the offset is zero.
    pub panorama: Panorama,
}

#[derive(Debug, Deserialize)]
struct Metadata {
    status: String,
    pano_id: Option<String>,
    location: Option<MetaLocation>,
    date: Option<String>,
    error_message: Option<String>,
}

#[derive(Debug, Deserialize)]
struct MetaLocation {
    lat: f64,
    lng: f64,
}

fn excerpt(body: &[u8]) -> String {
    let text = String::from_utf8_lossy(body);
    let t = text.trim();
    t.chars().take(200).collect()
}

fn checked(url: &str, resp: HttpResponse) -> Result<Vec<u8>, GatewayError> {
    if resp.status != 200 {
        return Err(GatewayError::new(
            ErrorKind::Remote,
            format!("HTTP {} from {}: {}", resp.status, redact(url), excerpt(&resp.body)),
        ));
    }
    Ok(resp.body)
}

pub fn metadata_url(endpoint: &str, lat: f64, lon: f64, key: &str) -> String {
    format!("{endpoint}/metadata?location={lat},{lon}&key={key}")
}

pub fn face_url(endpoint: &str, pano_id: &str, size: u32, heading: f64, pitch: f64, key: &str) -> String {
    format!("{endpoint}?size={size}x{size}&pano={pano_id}&heading={heading}&pitch={pitch}&fov=90&key={key}")
}

/// One square face image decoded to RGB rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub heading_deg: f64,
    pub pitch_deg: f64,
    pub size: u32,
    pub pixels: Vec<Rgb>,
}

impl Face {
    pub fn decode(heading_deg: f64, pitch_deg: f64, bytes: &[u8]) -> Result<Self, GatewayError> {
        let img = image::load_from_memory(bytes)
            .map_err(|e| GatewayError::new(ErrorKind::Decode, format!("face {heading_deg}/{pitch_deg}: {e}")))?
            .into_rgb8();
        let (w, h) = img.dimensions();
        if w != h || w == 0 {
            return Err(GatewayError::new(
                ErrorKind::Decode,
                format!("face {heading_deg}/{pitch_deg} is {w}x{h}, expected a square"),
            ));
        }
        Ok(Self {
            heading_deg,
            pitch_deg,
            size: w,
            pixels: img.pixels().map(|p| p.0).collect(),
        })
    }

    /// Camera basis (forward, right, up) in (east, north, up).
    fn basis(&self) -> [[f64; 3]; 3] {
        let (sh, ch) = self.heading_deg.to_radians().sin_cos();
        let (sp, cp) = self.pitch_deg.to_radians().sin_cos();
        [[cp * sh, cp * ch, sp], [ch, -sh, 0.0], [-sp * sh, -sp * ch, cp]]
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Equirectangular panorama from 90° faces covering the sphere. Each output
/// pixel takes the nearest pixel of the face it points most directly at.
pub fn assemble_faces(faces: &[Face], width: u32) -> Result<Panorama, GatewayError> {
    if faces.is_empty() {
        return Err(GatewayError::usage("no faces to assemble"));
    }
    let height = width / 2;
    let bases: Vec<[[f64; 3]; 3]> = faces.iter().map(Face::basis).collect();
    Panorama::from_fn(width, height, Some(0.0), |x, y| {
        let az = (x as f64 + 0.5) / width as f64 * 360.0;
        let el = 90.0 - (y as f64 + 0.5) / height as f64 * 180.0;
        let (sa, ca) = az.to_radians().sin_cos();
        let (se, ce) = el.to_radians().sin_cos();
        let d = [ce * sa, ce * ca, se];
        let (k, z) = bases
            .iter()
            .map(|b| dot(d, b[0]))
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .expect("faces are non-empty");
        let face = &faces[k];
        let [_, right, up] = bases[k];
        let s = face.size as f64;
        let u = dot(d, right) / z;
        let v = dot(d, up) / z;
        let i = (((u + 1.0) / 2.0 * s).floor() as i64).clamp(0, face.size as i64 - 1) as usize;
        let j = (((1.0 - v) / 2.0 * s).floor() as i64).clamp(0, face.size as i64 - 1) as usize;
        face.pixels[j * face.size as usize + i]
    })
    .map_err(GatewayError::from)
}

/// Looks up the panorama nearest to the location, downloads its six cube
/// faces and assembles them.
pub fn fetch_streetview(
    client: &dyn HttpClient,
    endpoint: &str,
    key: &str,
    req: &FetchRequest,
) -> Result<FetchedPanorama, GatewayError> {
    req.validate()?;
    let url = metadata_url(endpoint, req.lat, req.lon, key);
    let body = checked(&url, client.get(&url)?)?;
    let meta: Metadata = serde_json::from_slice(&body)
        .map_err(|e| GatewayError::new(ErrorKind::Remote, format!("malformed metadata: {e}")))?;
    if meta.status != "OK" {
        let detail = meta.error_message.map(|m| format!(": {m}")).unwrap_or_default();
        return Err(GatewayError::new(
            ErrorKind::Remote,
            format!("metadata status {}{detail}", meta.status),
        ));
    }
    let pano_id = meta
        .pano_id
        .ok_or_else(|| GatewayError::new(ErrorKind::Remote, "metadata has no pano_id"))?;
    let location = meta.location.unwrap_or(MetaLocation {
        lat: req.lat,
        lng: req.lon,
    });
    let mut faces = Vec::with_capacity(CUBE_FACES.len());
    for (heading, pitch) in CUBE_FACES {
        let url = face_url(endpoint, &pano_id, req.face_size, heading, pitch, key);
        let body = checked(&url, client.get(&url)?)?;
        faces.push(Face::decode(heading, pitch, &body)?);
    }
    Ok(FetchedPanorama {
        pano_id,
        lat: location.lat,
        lon: location.lng,
        date: meta.date,
        panorama: assemble_faces(&faces, req.width)?,
    })
}

/// Sidecar document written next to a fetched panorama.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchRecord {
    pub path: PathBuf,
    pub pano_id: String,
    pub lat: f64,
    pub lon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
    pub north_offset_deg: f64,
}
