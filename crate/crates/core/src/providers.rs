//! Boundary to external inference (OCR, captioning, object detection).
//!
//! External models run as worker processes speaking a line-delimited JSON
//! protocol over stdin/stdout:
//!
//! ```text
//! -> {"op":"ocr","image_path":"/tmp/.../req-3.png","request_id":3}
//! <- {"request_id":3,"result":[{"text":"Straße","confidence":0.9,"box":[4,8,60,20]}]}
//! <- {"request_id":3,"error":"model not loaded"}
//! ```
//!
//! `caption` results are a single string, `objects` results are
//! `[{"label":"car","confidence":0.8,"box":[x,y,w,h]}]`. Tests use
//! [`FixtureProvider`], which answers from canned documents keyed by image
//! digest.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::imaging::{RgbImage, View};
use crate::knowledge::PlateColor;

pub const DEFAULT_DEADLINE: Duration = Duration::from_secs(30);
pub const DEFAULT_OCR_FLOOR: f64 = 0.3;
pub const DEFAULT_OBJECT_FLOOR: f64 = 0.4;
pub const VEHICLE_LABELS: [&str; 4] = ["car", "truck", "bus", "motorcycle"];
pub const MIN_PLATE_SHARE: f64 = 0.3;

const STDERR_KEEP: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderOp {
    Ocr,
    Caption,
    Objects,
}

impl ProviderOp {
    pub fn name(self) -> &'static str {
        match self {
            ProviderOp::Ocr => "ocr",
            ProviderOp::Caption => "caption",
            ProviderOp::Objects => "objects",
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ProviderError {
    #[error("provider timed out after {0:?}")]
    Timeout(Duration),
    #[error("provider exited: {stderr}")]
    Crashed { stderr: String },
    #[error("provider I/O failure: {0}")]
    Io(String),
    #[error("malformed provider response: {message}")]
    Malformed { message: String, stderr: String },
    #[error("provider reported an error: {0}")]
    Remote(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("no fixture response for image {digest} ({op})")]
    MissingFixture { digest: String, op: &'static str },
    #[error("no provider configured for {0}")]
    Unconfigured(&'static str),
}

/// Pixel rectangle `(x, y, w, h)`, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    fn from_wire(raw: [f64; 4]) -> Result<Self, ProviderError> {
        if raw.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ProviderError::ProtocolViolation(format!("bad box {raw:?}")));
        }
        Ok(Self {
            x: raw[0].floor() as u32,
            y: raw[1].floor() as u32,
            w: raw[2].floor() as u32,
            h: raw[3].floor() as u32,
        })
    }

    fn within(&self, width: u32, height: u32) -> bool {
        self.x as u64 + self.w as u64 <= width as u64 && self.y as u64 + self.h as u64 <= height as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TextObservation {
    pub text: String,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectObservation {
    pub label: String,
    pub confidence: f64,
    #[serde(rename = "box")]
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlatePosition {
    Front,
    Rear,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlateColorObservation {
    pub color: PlateColor,
    pub position: PlatePosition,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Caption(String);

impl Caption {
    pub fn new(text: impl Into<String>) -> Result<Self, ProviderError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ProviderError::ProtocolViolation("empty caption".into()));
        }
        Ok(Self(text))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

/// Raw request/response access to one inference backend.
pub trait InferenceProvider: Send + Sync {
    fn request(&self, op: ProviderOp, image: &View) -> Result<Value, ProviderError>;
}

#[derive(Deserialize)]
struct WireObservation {
    #[serde(alias = "label")]
    text: String,
    confidence: f64,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

fn parse_observations(result: Value) -> Result<Vec<WireObservation>, ProviderError> {
    serde_json::from_value(result).map_err(|e| ProviderError::ProtocolViolation(e.to_string()))
}

fn check_confidence(c: f64) -> Result<(), ProviderError> {
    if (0.0..=1.0).contains(&c) {
        Ok(())
    } else {
        Err(ProviderError::ProtocolViolation(format!("confidence {c} outside [0, 1]")))
    }
}

/// Text found in `img`, dropping anything under `floor` confidence.
pub fn run_ocr(provider: &dyn InferenceProvider, img: &View, floor: f64) -> Result<Vec<TextObservation>, ProviderError> {
    let raw = parse_observations(provider.request(ProviderOp::Ocr, img)?)?;
    let mut out = Vec::with_capacity(raw.len());
    for obs in raw {
        check_confidence(obs.confidence)?;
        let bbox = BBox::from_wire(obs.bbox)?;
        if !bbox.within(img.width, img.height) {
            return Err(ProviderError::ProtocolViolation(format!(
                "text box {bbox:?} outside {}x{} image",
                img.width, img.height
            )));
        }
        if obs.confidence >= floor {
            out.push(TextObservation {
                text: obs.text,
                confidence: obs.confidence,
                bbox,
            });
        }
    }
    Ok(out)
}

pub fn run_caption(provider: &dyn InferenceProvider, img: &View) -> Result<Caption, ProviderError> {
    match provider.request(ProviderOp::Caption, img)? {
        Value::String(s) => Caption::new(s),
        other => Err(ProviderError::ProtocolViolation(format!("caption must be a string, got {other}"))),
    }
}

/// Detected objects; labels are lowercased, boxes clipped to the image.
pub fn run_objects(provider: &dyn InferenceProvider, img: &View, floor: f64) -> Result<Vec<ObjectObservation>, ProviderError> {
    let raw = parse_observations(provider.request(ProviderOp::Objects, img)?)?;
    let mut out = Vec::with_capacity(raw.len());
    for obs in raw {
        check_confidence(obs.confidence)?;
        let label = obs.text.trim().to_lowercase();
        if label.is_empty() {
            return Err(ProviderError::ProtocolViolation("empty object label".into()));
        }
        let mut bbox = BBox::from_wire(obs.bbox)?;
        bbox.x = bbox.x.min(img.width);
        bbox.y = bbox.y.min(img.height);
        bbox.w = bbox.w.min(img.width - bbox.x);
        bbox.h = bbox.h.min(img.height - bbox.y);
        if obs.confidence >= floor {
            out.push(ObjectObservation {
                label,
                confidence: obs.confidence,
                bbox,
            });
        }
    }
    Ok(out)
}

/// Nearest palette member by Euclidean RGB distance; lower index wins ties.
pub fn quantize_plate_color(px: [u8; 3]) -> PlateColor {
    let dist = |c: PlateColor| {
        let p = c.prototype();
        (0..3)
            .map(|i| {
                let d = px[i] as i32 - p[i] as i32;
                d * d
            })
            .sum::<i32>()
    };
    let mut best = PlateColor::ALL[0];
    for c in PlateColor::ALL.into_iter().skip(1) {
        if dist(c) < dist(best) {
            best = c;
        }
    }
    best
}

/// Plate-candidate strip of a vehicle box: bottom quarter of the rows,
/// middle half of the columns. `None` when the strip has no pixels.
pub fn plate_strip(bbox: &BBox) -> Option<BBox> {
    let x0 = bbox.x + bbox.w / 4;
    let x1 = bbox.x + bbox.w - bbox.w / 4;
    let y0 = bbox.y + bbox.h - bbox.h / 4;
    let y1 = bbox.y + bbox.h;
    (x1 > x0 && y1 > y0).then(|| BBox {
        x: x0,
        y: y0,
        w: x1 - x0,
        h: y1 - y0,
    })
}

/// Dominant quantized color under each vehicle's plate strip.
pub fn extract_plate_colors(img: &View, objects: &[ObjectObservation]) -> Vec<PlateColorObservation> {
    let mut out = Vec::new();
    for obj in objects {
        if !VEHICLE_LABELS.contains(&obj.label.as_str()) {
            continue;
        }
        let Some(strip) = plate_strip(&obj.bbox) else {
            continue;
        };
        let mut tally = [0usize; 6];
        let mut total = 0usize;
        for y in strip.y..(strip.y + strip.h).min(img.height) {
            for x in strip.x..(strip.x + strip.w).min(img.width) {
                tally[quantize_plate_color(img.pixel(x, y)).index()] += 1;
                total += 1;
            }
        }
        if total == 0 {
            continue;
        }
        // first maximum wins, i.e. the lower palette index
        let (best, count) = tally
            .iter()
            .enumerate()
            .fold((0, 0), |acc, (i, &n)| if n > acc.1 { (i, n) } else { acc });
        let share = count as f64 / total as f64;
        if share >= MIN_PLATE_SHARE {
            out.push(PlateColorObservation {
                color: PlateColor::ALL[best],
                position: PlatePosition::Unknown,
                confidence: share,
            });
        }
    }
    out
}

#[derive(Serialize)]
struct WireRequest<'a> {
    op: ProviderOp,
    image_path: &'a Path,
    request_id: u64,
}

#[derive(Deserialize)]
struct WireResponse {
    request_id: u64,
    #[serde(default)]
    result: Option<Value>,
    #[serde(default)]
    error: Option<Value>,
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    stderr: Arc<Mutex<Vec<u8>>>,
}

impl Worker {
    fn spawn(command: &[String]) -> Result<Self, ProviderError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| ProviderError::Io("empty provider command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| ProviderError::Io(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let mut stderr_pipe = child.stderr.take().expect("piped stderr");

        let (tx, lines) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stderr = Arc::new(Mutex::new(Vec::new()));
        let sink = Arc::clone(&stderr);
        std::thread::spawn(move || {
            let mut buf = [0u8; 1024];
            while let Ok(n) = stderr_pipe.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut kept = sink.lock().expect("stderr buffer");
                kept.extend_from_slice(&buf[..n]);
                let excess = kept.len().saturating_sub(STDERR_KEEP);
                kept.drain(..excess);
            }
        });
        Ok(Self {
            child,
            stdin,
            lines,
            stderr,
        })
    }

    fn stderr_excerpt(&self) -> String {
        // give the collector a moment to drain after an exit
        std::thread::sleep(Duration::from_millis(20));
        String::from_utf8_lossy(&self.stderr.lock().expect("stderr buffer")).trim().to_string()
    }

    fn kill(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Long-lived worker process, one request in flight at a time. A worker
/// that times out or crashes is discarded and restarted on the next call.
pub struct SubprocessProvider {
    command: Vec<String>,
    deadline: Duration,
    worker: Mutex<Option<Worker>>,
    next_id: AtomicU64,
    scratch: tempfile::TempDir,
}

impl SubprocessProvider {
    pub fn new(command: Vec<String>, deadline: Duration) -> Result<Self, ProviderError> {
        if command.is_empty() {
            return Err(ProviderError::Io("empty provider command".into()));
        }
        let scratch = tempfile::tempdir().map_err(|e| ProviderError::Io(e.to_string()))?;
        Ok(Self {
            command,
            deadline,
            worker: Mutex::new(None),
            next_id: AtomicU64::new(1),
            scratch,
        })
    }

    fn exchange(&self, worker: &mut Worker, op: ProviderOp, path: &Path, id: u64) -> Result<Value, ProviderError> {
        let mut line = serde_json::to_string(&WireRequest {
            op,
            image_path: path,
            request_id: id,
        })
        .expect("request serializes");
        line.push('\n');
        if let Err(e) = worker.stdin.write_all(line.as_bytes()).and_then(|_| worker.stdin.flush()) {
            return Err(ProviderError::Crashed {
                stderr: format!("{e}; {}", worker.stderr_excerpt()),
            });
        }
        let started = Instant::now();
        loop {
            let remaining = self.deadline.saturating_sub(started.elapsed());
            match worker.lines.recv_timeout(remaining) {
                Ok(Ok(reply)) => {
                    if reply.trim().is_empty() {
                        continue;
                    }
                    let resp: WireResponse = serde_json::from_str(&reply).map_err(|e| ProviderError::Malformed {
                        message: format!("{e}: {reply}"),
                        stderr: worker.stderr_excerpt(),
                    })?;
                    if resp.request_id != id {
                        // stale answer to an abandoned request
                        continue;
                    }
                    return match (resp.result, resp.error) {
                        (_, Some(err)) => Err(ProviderError::Remote(match err {
                            Value::String(s) => s,
                            other => other.to_string(),
                        })),
                        (Some(result), None) => Ok(result),
                        (None, None) => Err(ProviderError::Malformed {
                            message: "response has neither result nor error".into(),
                            stderr: worker.stderr_excerpt(),
                        }),
                    };
                }
                Ok(Err(e)) => return Err(ProviderError::Io(e.to_string())),
                Err(RecvTimeoutError::Timeout) => return Err(ProviderError::Timeout(self.deadline)),
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(ProviderError::Crashed {
                        stderr: worker.stderr_excerpt(),
                    })
                }
            }
        }
    }
}

impl InferenceProvider for SubprocessProvider {
    fn request(&self, op: ProviderOp, image: &View) -> Result<Value, ProviderError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let path = self.scratch.path().join(format!("req-{id}.png"));
        std::fs::write(&path, image.to_png()).map_err(|e| ProviderError::Io(e.to_string()))?;

        let mut slot = self.worker.lock().expect("worker lock");
        if slot.is_none() {
            *slot = Some(Worker::spawn(&self.command)?);
        }
        let worker = slot.as_mut().expect("worker present");
        let outcome = self.exchange(worker, op, &path, id);
        if matches!(
            outcome,
            Err(ProviderError::Timeout(_) | ProviderError::Crashed { .. } | ProviderError::Io(_))
        ) {
            if let Some(mut w) = slot.take() {
                w.kill();
            }
        }
        let _ = std::fs::remove_file(&path);
        outcome
    }
}

impl Drop for SubprocessProvider {
    fn drop(&mut self) {
        if let Ok(slot) = self.worker.get_mut() {
            if let Some(w) = slot.as_mut() {
                w.kill();
            }
        }
    }
}

/// One canned document: results per op, or a forced error.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FixtureResponse {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objects: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Deterministic provider backed by `<digest>.json` documents.
///
/// An op absent from a document answers with an empty list (OCR, objects);
/// a missing caption or a missing document is an error.
#[derive(Debug, Clone, Default)]
pub struct FixtureProvider {
    responses: BTreeMap<String, FixtureResponse>,
}

impl FixtureProvider {
    pub fn new(responses: BTreeMap<String, FixtureResponse>) -> Self {
        Self { responses }
    }

    pub fn load(dir: &Path) -> Result<Self, ProviderError> {
        let mut responses = BTreeMap::new();
        let entries = std::fs::read_dir(dir).map_err(|e| ProviderError::Io(format!("{}: {e}", dir.display())))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for path in paths {
            let digest = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let text = std::fs::read_to_string(&path).map_err(|e| ProviderError::Io(format!("{}: {e}", path.display())))?;
            let doc: FixtureResponse = serde_json::from_str(&text).map_err(|e| ProviderError::Malformed {
                message: format!("{}: {e}", path.display()),
                stderr: String::new(),
            })?;
            responses.insert(digest, doc);
        }
        Ok(Self { responses })
    }

    pub fn insert(&mut self, digest: String, response: FixtureResponse) {
        self.responses.insert(digest, response);
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (digest, doc) in &self.responses {
            let text = serde_json::to_string_pretty(doc).expect("fixture serializes");
            std::fs::write(dir.join(format!("{digest}.json")), text)?;
        }
        Ok(())
    }
}

impl InferenceProvider for FixtureProvider {
    fn request(&self, op: ProviderOp, image: &View) -> Result<Value, ProviderError> {
        let digest = image.digest();
        let doc = self.responses.get(&digest).ok_or_else(|| ProviderError::MissingFixture {
            digest: digest.clone(),
            op: op.name(),
        })?;
        if let Some(err) = &doc.error {
            return Err(ProviderError::Remote(err.clone()));
        }
        let slot = match op {
            ProviderOp::Ocr => &doc.ocr,
            ProviderOp::Caption => &doc.caption,
            ProviderOp::Objects => &doc.objects,
        };
        match (slot, op) {
            (Some(v), _) => Ok(v.clone()),
            (None, ProviderOp::Caption) => Err(ProviderError::MissingFixture {
                digest,
                op: op.name(),
            }),
            (None, _) => Ok(Value::Array(vec![])),
        }
    }
}
