use whichcountry_core::imaging::{extract_view, Panorama, RgbImage};
use whichcountry_gateway::fetch::{
    face_url, fetch_streetview, metadata_url, FetchRequest, ReplayClient, CUBE_FACES,
};
use whichcountry_gateway::ErrorKind;

const ENDPOINT: &str = "https://example.test/streetview";
const KEY: &str = "secret";
const FACE: u32 = 96;

fn smooth_source() -> Panorama {
    Panorama::from_fn(256, 128, None, |x, y| {
        let a = x as f64 / 256.0 * std::f64::consts::TAU;
        let e = y as f64 / 128.0 * std::f64::consts::PI;
        [
            (127.0 + 100.0 * a.cos() * e.sin()) as u8,
            (127.0 + 100.0 * a.sin() * e.sin()) as u8,
            (127.0 + 100.0 * e.cos()) as u8,
        ]
    })
    .unwrap()
}

fn recorded(source: &Panorama, metadata: &str) -> ReplayClient {
    let mut client = ReplayClient::new();
    client.insert(&metadata_url(ENDPOINT, 10.5, -20.25, KEY), 200, metadata.as_bytes().to_vec());
    for (heading, pitch) in CUBE_FACES {
        let view = extract_view(source, heading, pitch, 90.0, FACE, FACE).unwrap();
        client.insert(&face_url(ENDPOINT, "p1", FACE, heading, pitch, KEY), 200, view.to_png());
    }
    client
}

const OK_META: &str =
    r#"{"status":"OK","pano_id":"p1","location":{"lat":10.5001,"lng":-20.2499},"date":"2024-05"}"#;

fn request() -> FetchRequest {
    FetchRequest {
        face_size: FACE,
        width: 256,
        ..FetchRequest::new(10.5, -20.25)
    }
}

#[test]
fn replayed_faces_reassemble_the_source() {
    let source = smooth_source();
    let dir = tempfile::tempdir().unwrap();
    recorded(&source, OK_META).save(dir.path()).unwrap();
    let client = ReplayClient::load(dir.path()).unwrap();
    let fetched = fetch_streetview(&client, ENDPOINT, KEY, &request()).unwrap();
    assert_eq!(fetched.pano_id, "p1");
    assert_eq!(fetched.date.as_deref(), Some("2024-05"));
    assert!((fetched.lat - 10.5001).abs() < 1e-12 && (fetched.lon + 20.2499).abs() < 1e-12);
    let pano = fetched.panorama;
    assert_eq!((pano.width(), pano.height()), (256, 128));
    assert!(pano.has_north_offset());
    assert_eq!(pano.north_offset_deg(), 0.0);
    let total: f64 = pano
        .pixels()
        .iter()
        .zip(source.pixels())
        .flat_map(|(a, b)| (0..3).map(move |c| (a[c] as f64 - b[c] as f64).abs()))
        .sum();
    let mae = total / (256.0 * 128.0 * 3.0);
    assert!(mae < 4.0, "mean absolute error {mae}");
}

#[test]
fn zero_results_is_a_remote_error() {
    let client = recorded(&smooth_source(), r#"{"status":"ZERO_RESULTS"}"#);
    let err = fetch_streetview(&client, ENDPOINT, KEY, &request()).unwrap_err();
    assert_eq!(err.kind, ErrorKind::Remote);
    assert!(err.message.contains("ZERO_RESULTS"));
}

#[test]
fn denied_request_is_a_remote_error_without_the_key() {
    let mut client = ReplayClient::new();
    client.insert(&metadata_url(ENDPOINT, 10.5, -20.25, KEY), 403, b"denied".to_vec());
    let err = fetch_streetview(&client, ENDPOINT, KEY, &request()).unwrap_err();
    assert_eq!(err.kind, ErrorKind::Remote);
    assert!(err.message.contains("403"));
    assert!(!err.message.contains(KEY));
}

#[test]
fn missing_recording_is_an_io_error() {
    let err = fetch_streetview(&ReplayClient::new(), ENDPOINT, KEY, &request()).unwrap_err();
    assert_eq!(err.kind, ErrorKind::Io);
}

#[test]
fn out_of_range_requests_are_rejected_before_any_call() {
    let bad = FetchRequest {
        lat: 91.0,
        ..request()
    };
    let err = fetch_streetview(&ReplayClient::new(), ENDPOINT, KEY, &bad).unwrap_err();
    assert_eq!(err.kind, ErrorKind::Usage);
    let odd = FetchRequest { width: 255, ..request() };
    assert_eq!(
        fetch_streetview(&ReplayClient::new(), ENDPOINT, KEY, &odd).unwrap_err().kind,
        ErrorKind::Usage
    );
}
