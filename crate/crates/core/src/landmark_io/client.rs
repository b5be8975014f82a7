use std::sync::atomic::{AtomicU64, Ordering};
use std::thread;
use std::time::Duration;

use base64::Engine as _;
use rayon::prelude::*;
use serde_json::Value;

use super::{normalize_provider_payload, FaceRecord, LandmarkError, ProviderFormat};

/// Connection settings for a face-analysis service.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub endpoint: String,
    pub api_key: String,
    pub api_secret: String,
    pub format: ProviderFormat,
    /// Retries after the first attempt for retryable failures.
    pub max_retries: u32,
    pub backoff: Duration,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl ServiceConfig {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, api_secret: impl Into<String>) -> Self {
        ServiceConfig {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            api_secret: api_secret.into(),
            format: ProviderFormat::FacePlusPlus,
            max_retries: 3,
            backoff: Duration::from_millis(200),
            timeout: Duration::from_secs(30),
            max_in_flight: 4,
        }
    }

    fn agent(&self) -> ureq::Agent {
        ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(self.timeout))
            .build()
            .into()
    }
}

static NEXT_REQUEST: AtomicU64 = AtomicU64::new(1);

/// Sends one image to the service and maps every returned face.
///
/// Zero faces is an empty list. Connection failures, 429 and 5xx responses are
/// retried with exponential backoff; other 4xx responses fail immediately.
pub fn detect_faces(
    image_ref: &str,
    image_bytes: &[u8],
    config: &ServiceConfig,
) -> Result<Vec<FaceRecord>, LandmarkError> {
    let dims = image::ImageReader::new(std::io::Cursor::new(image_bytes))
        .with_guessed_format()
        .map_err(|e| LandmarkError::Image(e.to_string()))?
        .into_dimensions()
        .map_err(|e| LandmarkError::Image(e.to_string()))?;

    let payload = request_with_retry(image_bytes, config)?;
    let faces = match payload.get("faces") {
        None | Some(Value::Null) => return Ok(Vec::new()),
        Some(Value::Array(faces)) => faces,
        Some(_) => return Err(LandmarkError::Invalid("\"faces\" is not an array".into())),
    };
    let stem = std::path::Path::new(image_ref)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| image_ref.to_string());
    faces
        .iter()
        .enumerate()
        .map(|(i, face)| {
            let rec = normalize_provider_payload(config.format.tag(), face, &format!("{stem}#{i}"), image_ref)?;
            if !rec.rect.fits_within(dims.0, dims.1) {
                return Err(LandmarkError::Invalid(format!(
                    "face rectangle {:?} exceeds image bounds {}x{}",
                    rec.rect, dims.0, dims.1
                )));
            }
            Ok(rec)
        })
        .collect()
}

/// Runs [`detect_faces`] over many images with at most `max_in_flight`
/// concurrent requests. Results are in input order.
pub fn detect_batch(
    images: &[(String, Vec<u8>)],
    config: &ServiceConfig,
) -> Vec<Result<Vec<FaceRecord>, LandmarkError>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_in_flight.max(1))
        .build();
    let run = || {
        images
            .par_iter()
            .map(|(name, bytes)| detect_faces(name, bytes, config))
            .collect()
    };
    match pool {
        Ok(pool) => pool.install(run),
        Err(_) => images
            .iter()
            .map(|(name, bytes)| detect_faces(name, bytes, config))
            .collect(),
    }
}

fn request_with_retry(image_bytes: &[u8], config: &ServiceConfig) -> Result<Value, LandmarkError> {
    let agent = config.agent();
    let encoded = base64::engine::general_purpose::STANDARD.encode(image_bytes);
    let mut attempt = 0;
    loop {
        match request_once(&agent, &encoded, config) {
            Err(LandmarkError::Transport {
                message,
                retryable: true,
            }) if attempt < config.max_retries => {
                let wait = config.backoff * 2u32.pow(attempt);
                log::warn!(
                    "face service attempt {} failed ({message}); retrying in {wait:?}",
                    attempt + 1
                );
                thread::sleep(wait);
                attempt += 1;
            }
            other => return other,
        }
    }
}

fn request_once(agent: &ureq::Agent, image_base64: &str, config: &ServiceConfig) -> Result<Value, LandmarkError> {
    let request_id = NEXT_REQUEST.fetch_add(1, Ordering::Relaxed).to_string();
    let response = agent
        .post(&config.endpoint)
        .header("X-Request-Id", &request_id)
        .send_form([
            ("api_key", config.api_key.as_str()),
            ("api_secret", config.api_secret.as_str()),
            ("image_base64", image_base64),
            ("return_landmark", "1"),
            ("return_attributes", "gender,age,ethnicity"),
        ]);
    let mut response = match response {
        Ok(r) => r,
        Err(e) => {
            return Err(LandmarkError::Transport {
                message: e.to_string(),
                retryable: true,
            })
        }
    };
    let status = response.status().as_u16();
    if let Some(echo) = response.headers().get("X-Request-Id") {
        if echo.as_bytes() != request_id.as_bytes() {
            return Err(LandmarkError::Transport {
                message: format!("response correlation id mismatch (sent {request_id})"),
                retryable: true,
            });
        }
    }
    let body = response
        .body_mut()
        .read_to_string()
        .map_err(|e| LandmarkError::Transport {
            message: e.to_string(),
            retryable: true,
        })?;
    match status {
        200..=299 => serde_json::from_str(&body).map_err(|e| LandmarkError::Transport {
            message: format!("invalid JSON from face service: {e}"),
            retryable: false,
        }),
        401 | 403 => Err(LandmarkError::Auth { status }),
        429 | 500..=599 => Err(LandmarkError::Transport {
            message: format!("HTTP {status}: {}", truncate(&body)),
            retryable: true,
        }),
        _ => Err(LandmarkError::Transport {
            message: format!("HTTP {status}: {}", truncate(&body)),
            retryable: false,
        }),
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(200) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
