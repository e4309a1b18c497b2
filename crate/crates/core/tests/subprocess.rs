use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use whichcountry_core::imaging::View;
use whichcountry_core::providers::{
    run_caption, run_objects, run_ocr, InferenceProvider, ProviderError, ProviderOp, SubprocessProvider,
};

const ECHO: &str = r#"
import json, os, sys
for line in sys.stdin:
    req = json.loads(line)
    assert os.path.getsize(req["image_path"]) > 0
    op = req["op"]
    if op == "ocr":
        result = [{"text": "Straße", "confidence": 0.9, "box": [0, 0, 2, 2]},
                  {"text": "faint", "confidence": 0.1, "box": [0, 0, 1, 1]}]
    elif op == "caption":
        result = "a red car on a street"
    else:
        result = [{"label": "Car", "confidence": 0.8, "box": [1, 1, 50, 50]}]
    print(json.dumps({"request_id": req["request_id"], "result": result}), flush=True)
"#;

const MALFORMED: &str = r#"
import sys
for line in sys.stdin:
    sys.stderr.write("tokenizer warning\n")
    sys.stderr.flush()
    print("this is not json", flush=True)
"#;

const CRASH: &str = r#"
import sys
sys.stdin.readline()
sys.stderr.write("model exploded: out of memory\n")
sys.stderr.flush()
sys.exit(3)
"#;

const SLOW: &str = r#"
import sys, time
for line in sys.stdin:
    time.sleep(10)
"#;

const BAD_CONFIDENCE: &str = r#"
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    result = [{"text": "x", "confidence": 1.5, "box": [0, 0, 1, 1]}]
    print(json.dumps({"request_id": req["request_id"], "result": result}), flush=True)
"#;

const EMPTY_CAPTION: &str = r#"
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"request_id": req["request_id"], "result": "  "}), flush=True)
"#;

const STALE_FIRST: &str = r#"
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"request_id": req["request_id"] + 1000, "result": "stale"}), flush=True)
    print("", flush=True)
    print(json.dumps({"request_id": req["request_id"], "result": "fresh caption"}), flush=True)
"#;

const REMOTE_ERROR: &str = r#"
import json, sys
for line in sys.stdin:
    req = json.loads(line)
    print(json.dumps({"request_id": req["request_id"], "error": "model not loaded"}), flush=True)
"#;

/// Crashes on the first request of its first life, then answers normally.
const CRASH_ONCE: &str = r#"
import json, os, sys
marker = sys.argv[1]
first = not os.path.exists(marker)
open(marker, "a").write("spawn\n")
for line in sys.stdin:
    if first:
        sys.exit(1)
    req = json.loads(line)
    print(json.dumps({"request_id": req["request_id"], "result": "recovered"}), flush=True)
"#;

fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

fn provider(dir: &Path, body: &str, deadline: Duration) -> SubprocessProvider {
    let path = script(dir, "worker.py", body);
    SubprocessProvider::new(vec!["python3".into(), path.display().to_string()], deadline).unwrap()
}

fn view() -> View {
    View::filled(8, 8, [10, 20, 30])
}

#[test]
fn echo_worker_answers_every_op() {
    let dir = tempfile::tempdir().unwrap();
    let p = provider(dir.path(), ECHO, Duration::from_secs(10));
    let ocr = run_ocr(&p, &view(), 0.3).unwrap();
    assert_eq!(ocr.len(), 1);
    assert_eq!(ocr[0].text, "Straße");
    assert_eq!(ocr[0].confidence, 0.9);
    assert_eq!(run_caption(&p, &view()).unwrap().as_str(), "a red car on a street");
    let objects = run_objects(&p, &view(), 0.4).unwrap();
    assert_eq!(objects.len(), 1);
    assert_eq!(objects[0].label, "car");
    // clipped to the 8x8 view
    assert_eq!((objects[0].bbox.w, objects[0].bbox.h), (7, 7));
}

#[test]
fn malformed_reply_carries_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let p = provider(dir.path(), MALFORMED, Duration::from_secs(10));
    match p.request(ProviderOp::Ocr, &view()) {
        Err(ProviderError::Malformed { stderr, message }) => {
            assert!(message.contains("this is not json"));
            assert!(stderr.contains("tokenizer warning"), "stderr was {stderr:?}");
        }
        other => panic!("expected malformed, got {other:?}"),
    }
}

#[test]
fn crash_reports_stderr_excerpt() {
    let dir = tempfile::tempdir().unwrap();
    let p = provider(dir.path(), CRASH, Duration::from_secs(10));
    match p.request(ProviderOp::Caption, &view()) {
        Err(ProviderError::Crashed { stderr }) => assert!(stderr.contains("model exploded"), "{stderr:?}"),
        other => panic!("expected crash, got {other:?}"),
    }
}

#[test]
fn slow_worker_times_out() {
    let dir = tempfile::tempdir().unwrap();
    let p = provider(dir.path(), SLOW, Duration::from_millis(300));
    let started = Instant::now();
    let err = run_objects(&p, &view(), 0.4).unwrap_err();
    assert!(matches!(err, ProviderError::Timeout(_)), "{err:?}");
    assert!(started.elapsed() < Duration::from_secs(5));
}

#[test]
fn out_of_range_confidence_is_a_violation() {
    let dir = tempfile::tempdir().unwrap();
    let p = provider(dir.path(), BAD_CONFIDENCE, Duration::from_secs(10));
    assert!(matches!(run_ocr(&p, &view(), 0.0), Err(ProviderError::ProtocolViolation(_))));
    assert!(matches!(run_objects(&p, &view(), 0.0), Err(ProviderError::ProtocolViolation(_))));
}

#[test]
fn blank_caption_is_a_violation() {
    let dir = tempfile::tempdir().unwrap();
    let p = provider(dir.path(), EMPTY_CAPTION, Duration::from_secs(10));
    assert!(matches!(run_caption(&p, &view()), Err(ProviderError::ProtocolViolation(_))));
}

#[test]
fn stale_and_blank_lines_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let p = provider(dir.path(), STALE_FIRST, Duration::from_secs(10));
    assert_eq!(run_caption(&p, &view()).unwrap().as_str(), "fresh caption");
    assert_eq!(run_caption(&p, &view()).unwrap().as_str(), "fresh caption");
}

#[test]
fn worker_error_field_is_remote_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = provider(dir.path(), REMOTE_ERROR, Duration::from_secs(10));
    match p.request(ProviderOp::Ocr, &view()) {
        Err(ProviderError::Remote(msg)) => assert_eq!(msg, "model not loaded"),
        other => panic!("expected remote error, got {other:?}"),
    }
}

#[test]
fn crashed_worker_is_restarted() {
    let dir = tempfile::tempdir().unwrap();
    let marker = dir.path().join("spawns.txt");
    let path = script(dir.path(), "worker.py", CRASH_ONCE);
    let p = SubprocessProvider::new(
        vec!["python3".into(), path.display().to_string(), marker.display().to_string()],
        Duration::from_secs(10),
    )
    .unwrap();
    assert!(matches!(p.request(ProviderOp::Caption, &view()), Err(ProviderError::Crashed { .. })));
    assert_eq!(run_caption(&p, &view()).unwrap().as_str(), "recovered");
    assert_eq!(run_caption(&p, &view()).unwrap().as_str(), "recovered");
    assert_eq!(std::fs::read_to_string(&marker).unwrap().lines().count(), 2);
}

#[test]
fn missing_program_is_an_io_error() {
    let p = SubprocessProvider::new(vec!["/nonexistent/worker-binary".into()], Duration::from_secs(1)).unwrap();
    assert!(matches!(p.request(ProviderOp::Ocr, &view()), Err(ProviderError::Io(_))));
    assert!(SubprocessProvider::new(vec![], Duration::from_secs(1)).is_err());
}
