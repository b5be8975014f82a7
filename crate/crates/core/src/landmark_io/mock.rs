//! A local stand-in for the face-analysis service.
//!
//! Answers Face++-style detect requests: form fields `api_key`, `api_secret`
//! and `image_base64`, response `{"faces": [...]}`. Wrong credentials get
//! HTTP 403. Without a fixture, the server synthesizes one face scaled to the
//! submitted image.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use base64::Engine as _;
use serde_json::{json, Value};

#[derive(Debug, Clone)]
pub struct MockConfig {
    pub api_key: String,
    pub api_secret: String,
    /// Response body returned for every authorized request.
    pub fixture: Option<Value>,
    /// Number of initial requests answered with HTTP 503.
    pub transient_failures: usize,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            api_key: "mock-key".into(),
            api_secret: "mock-secret".into(),
            fixture: None,
            transient_failures: 0,
        }
    }
}

pub struct MockProvider {
    addr: std::net::SocketAddr,
    requests: Arc<AtomicUsize>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockProvider {
    /// Binds `bind` (use port 0 for an ephemeral port) and serves on a
    /// background thread until dropped.
    pub fn start(bind: &str, config: MockConfig) -> std::io::Result<MockProvider> {
        let server = tiny_http::Server::http(bind).map_err(std::io::Error::other)?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("mock provider needs an IP listener"))?;
        let requests = Arc::new(AtomicUsize::new(0));
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let requests = Arc::clone(&requests);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || {
                while !stop.load(Ordering::Relaxed) {
                    match server.recv_timeout(Duration::from_millis(50)) {
                        Ok(Some(req)) => {
                            let n = requests.fetch_add(1, Ordering::SeqCst);
                            handle_request(req, &config, n);
                        }
                        Ok(None) => {}
                        Err(_) => break,
                    }
                }
            })
        };
        Ok(MockProvider {
            addr,
            requests,
            stop,
            handle: Some(handle),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}/facepp/v3/detect", self.addr)
    }

    pub fn addr(&self) -> std::net::SocketAddr {
        self.addr
    }

    pub fn request_count(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    /// Blocks the calling thread while the server runs.
    pub fn wait(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockProvider {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn handle_request(mut req: tiny_http::Request, config: &MockConfig, n: usize) {
    let request_id = req
        .headers()
        .iter()
        .find(|h| h.field.equiv("X-Request-Id"))
        .map(|h| h.value.as_str().to_string());
    let mut body = String::new();
    let (status, reply) = if req.as_reader().read_to_string(&mut body).is_err() {
        (400, json!({"error_message": "BAD_REQUEST"}))
    } else {
        let form: std::collections::HashMap<String, String> =
            form_urlencoded::parse(body.as_bytes()).into_owned().collect();
        if form.get("api_key") != Some(&config.api_key) || form.get("api_secret") != Some(&config.api_secret) {
            (403, json!({"error_message": "AUTHENTICATION_ERROR"}))
        } else if n < config.transient_failures {
            (503, json!({"error_message": "CONCURRENCY_LIMIT_EXCEEDED"}))
        } else {
            match &config.fixture {
                Some(fixture) => (200, fixture.clone()),
                None => match form.get("image_base64").and_then(|b| image_size(b)) {
                    Some((w, h)) => (200, json!({"faces": [synthetic_face(w, h)]})),
                    None => (400, json!({"error_message": "INVALID_IMAGE"})),
                },
            }
        }
    };
    let mut response = tiny_http::Response::from_string(reply.to_string())
        .with_status_code(status)
        .with_header(tiny_http::Header::from_bytes("Content-Type", "application/json").expect("static header"));
    if let Some(id) = request_id {
        if let Ok(h) = tiny_http::Header::from_bytes("X-Request-Id", id.as_bytes()) {
            response = response.with_header(h);
        }
    }
    let _ = req.respond(response);
}

fn image_size(b64: &str) -> Option<(u32, u32)> {
    let bytes = base64::engine::general_purpose::STANDARD.decode(b64).ok()?;
    image::ImageReader::new(std::io::Cursor::new(bytes))
        .with_guessed_format()
        .ok()?
        .into_dimensions()
        .ok()
}

/// A frontal face filling the central part of a `width`×`height` image, in
/// the Face++ payload shape.
pub fn synthetic_face(width: u32, height: u32) -> Value {
    let (w, h) = (width as f64, height as f64);
    let p = |fx: f64, fy: f64| json!({"x": (fx * w).round(), "y": (fy * h).round()});
    json!({
        "face_token": "mock",
        "face_rectangle": {
            "left": (0.15 * w).round() as i64,
            "top": (0.1 * h).round() as i64,
            "width": (0.7 * w).round() as i64,
            "height": (0.8 * h).round() as i64,
        },
        "landmark": {
            "left_eye_center": p(0.35, 0.38),
            "right_eye_center": p(0.65, 0.38),
            "left_eye_left_corner": p(0.28, 0.385),
            "left_eye_right_corner": p(0.42, 0.385),
            "left_eye_top": p(0.35, 0.36),
            "left_eye_bottom": p(0.35, 0.40),
            "right_eye_left_corner": p(0.58, 0.385),
            "right_eye_right_corner": p(0.72, 0.385),
            "right_eye_top": p(0.65, 0.36),
            "right_eye_bottom": p(0.65, 0.40),
            "nose_tip": p(0.5, 0.55),
            "mouth_left_corner": p(0.39, 0.70),
            "mouth_right_corner": p(0.61, 0.70),
            "mouth_upper_lip_top": p(0.5, 0.66),
            "mouth_lower_lip_bottom": p(0.5, 0.75),
        },
        "attributes": {
            "age": {"value": 27},
            "gender": {"value": "Female", "confidence": 95.2},
            "ethnicity": {"value": "ASIAN", "confidence": 90.5},
        }
    })
}

#[cfg(test)]
mod tests {
    use super::super::{detect_faces, LandmarkError, ServiceConfig};
    use super::*;

    fn png(width: u32, height: u32) -> Vec<u8> {
        let img = image::RgbImage::from_pixel(width, height, image::Rgb([120, 110, 100]));
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png).unwrap();
        out.into_inner()
    }

    fn service(mock: &MockProvider, key: &str) -> ServiceConfig {
        let mut cfg = ServiceConfig::new(mock.url(), key, "mock-secret");
        cfg.backoff = Duration::from_millis(5);
        cfg
    }

    #[test]
    fn maps_full_payload() {
        let mock = MockProvider::start("127.0.0.1:0", MockConfig::default()).unwrap();
        let faces = detect_faces("dir/portrait.png", &png(200, 240), &service(&mock, "mock-key")).unwrap();
        assert_eq!(faces.len(), 1);
        let f = &faces[0];
        assert_eq!(f.face_id, "portrait#0");
        assert_eq!(f.provider, "facepp");
        let demo = f.attributes.as_ref().unwrap();
        assert_eq!(demo.gender_confidence, Some(95.2));
        assert_eq!(demo.race_confidence, Some(90.5));
        assert_eq!(f.landmarks.get(super::super::Landmark::LeftEyeCenter).x, 70.0);
    }

    #[test]
    fn auth_failure_is_not_retried() {
        let mock = MockProvider::start("127.0.0.1:0", MockConfig::default()).unwrap();
        let err = detect_faces("a.png", &png(50, 50), &service(&mock, "wrong")).unwrap_err();
        assert!(matches!(err, LandmarkError::Auth { status: 403 }), "{err:?}");
        assert_eq!(mock.request_count(), 1);
    }

    #[test]
    fn transient_failures_are_retried() {
        let mock = MockProvider::start(
            "127.0.0.1:0",
            MockConfig {
                transient_failures: 2,
                ..MockConfig::default()
            },
        )
        .unwrap();
        let faces = detect_faces("a.png", &png(100, 100), &service(&mock, "mock-key")).unwrap();
        assert_eq!(faces.len(), 1);
        assert_eq!(mock.request_count(), 3);
    }

    #[test]
    fn retries_are_bounded() {
        let mock = MockProvider::start(
            "127.0.0.1:0",
            MockConfig {
                transient_failures: 100,
                ..MockConfig::default()
            },
        )
        .unwrap();
        let err = detect_faces("a.png", &png(100, 100), &service(&mock, "mock-key")).unwrap_err();
        assert!(matches!(err, LandmarkError::Transport { retryable: true, .. }));
        assert_eq!(mock.request_count(), 4);
    }

    #[test]
    fn zero_faces_is_empty() {
        let mock = MockProvider::start(
            "127.0.0.1:0",
            MockConfig {
                fixture: Some(json!({"faces": []})),
                ..MockConfig::default()
            },
        )
        .unwrap();
        let faces = detect_faces("a.png", &png(100, 100), &service(&mock, "mock-key")).unwrap();
        assert!(faces.is_empty());
    }

    #[test]
    fn payload_missing_point_is_schema_error() {
        let mut face = synthetic_face(100, 100);
        face["landmark"].as_object_mut().unwrap().remove("nose_tip");
        let mock = MockProvider::start(
            "127.0.0.1:0",
            MockConfig {
                fixture: Some(json!({"faces": [face]})),
                ..MockConfig::default()
            },
        )
        .unwrap();
        let err = detect_faces("a.png", &png(100, 100), &service(&mock, "mock-key")).unwrap_err();
        assert!(matches!(err, LandmarkError::MissingPoint("nose_tip")), "{err:?}");
    }

    #[test]
    fn batch_preserves_input_order() {
        let mock = MockProvider::start("127.0.0.1:0", MockConfig::default()).unwrap();
        let images: Vec<_> = (0..6).map(|i| (format!("img{i}.png"), png(80 + 10 * i, 90))).collect();
        let mut cfg = service(&mock, "mock-key");
        cfg.max_in_flight = 3;
        let out = super::super::detect_batch(&images, &cfg);
        for (i, r) in out.iter().enumerate() {
            let faces = r.as_ref().unwrap();
            assert_eq!(faces[0].face_id, format!("img{i}#0"));
            assert_eq!(faces[0].rect.w, (0.7 * (80.0 + 10.0 * i as f64)).round() as i64);
        }
    }
}
