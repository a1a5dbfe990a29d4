//! Backend for a generic HTTP inference service.
//!
//! Wire contract (JSON over POST):
//!
//! | endpoint    | request                       | response            |
//! |-------------|-------------------------------|---------------------|
//! | `/ground`   | `{image, prompt}`             | `{score}` (cosine)  |
//! | `/complete` | `{prompt, n}`                 | `{texts: [string]}` |
//! | `/embed`    | `{text}`                      | `{vector: [number]}`|
//!
//! `image` is the image path, or its base64-encoded bytes when
//! [`ImageEncoding::Base64`] is selected.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use fmloc_core::gateway::grounding_subject;
use fmloc_core::{Capability, GatewayError, ImageRef, ModelBackend, ScoreScale};

/// Environment variable holding the bearer token.
pub const AUTH_TOKEN_ENV: &str = "FMLOC_AUTH_TOKEN";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageEncoding {
    #[default]
    Path,
    Base64,
}

#[derive(Clone, Debug)]
pub struct HttpConfig {
    pub base_url: String,
    pub auth_token: Option<String>,
    pub timeout: Duration,
    /// Retries after the first attempt.
    pub max_retries: u32,
    /// Delay before the first retry; doubled for each further retry.
    pub initial_backoff: Duration,
    pub max_in_flight: usize,
    pub image_encoding: ImageEncoding,
}

impl HttpConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            auth_token: None,
            timeout: Duration::from_secs(60),
            max_retries: 3,
            initial_backoff: Duration::from_millis(250),
            max_in_flight: 4,
            image_encoding: ImageEncoding::Path,
        }
    }
}

/// Counting semaphore bounding in-flight requests.
struct Permits {
    free: Mutex<usize>,
    released: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            released: Condvar::new(),
        }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.released.wait(free).unwrap();
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.released.notify_one();
    }
}

enum Attempt<T> {
    Done(T),
    Retry(String),
    Fail(GatewayError),
}

pub struct HttpBackend {
    agent: ureq::Agent,
    config: HttpConfig,
    permits: Permits,
}

#[derive(Serialize)]
struct GroundRequest<'a> {
    image: &'a str,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct GroundResponse {
    score: f64,
}

#[derive(Serialize)]
struct CompleteRequest<'a> {
    prompt: &'a str,
    n: usize,
}

#[derive(Deserialize)]
struct CompleteResponse {
    texts: Vec<String>,
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vector: Vec<f64>,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent = ureq::Agent::new_with_config(
            ureq::Agent::config_builder()
                .timeout_global(Some(config.timeout))
                .http_status_as_error(false)
                .build(),
        );
        Self {
            agent,
            permits: Permits::new(config.max_in_flight),
            config,
        }
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn attempt<B: Serialize, R: DeserializeOwned>(
        &self,
        capability: Capability,
        subject: &str,
        body: &B,
    ) -> Attempt<R> {
        let url = format!("{}/{}", self.config.base_url, capability.as_str());
        let mut request = self.agent.post(&url);
        if let Some(token) = &self.config.auth_token {
            request = request.header("Authorization", &format!("Bearer {token}"));
        }
        let response = {
            let _permit = self.permits.acquire();
            request.send_json(body)
        };
        let mut response = match response {
            Ok(r) => r,
            Err(
                e @ (ureq::Error::BadUri(_) | ureq::Error::Http(_) | ureq::Error::InvalidProxyUrl),
            ) => {
                return Attempt::Fail(GatewayError::Request {
                    capability,
                    subject: subject.to_string(),
                    message: e.to_string(),
                })
            }
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = response.status().as_u16();
        if status == 408 || status == 429 || status >= 500 {
            return Attempt::Retry(format!("HTTP status {status}"));
        }
        if !(200..300).contains(&status) {
            let detail = response.body_mut().read_to_string().unwrap_or_default();
            return Attempt::Fail(GatewayError::Request {
                capability,
                subject: subject.to_string(),
                message: format!("HTTP status {status}: {}", detail.trim()),
            });
        }
        match response.body_mut().read_json::<R>() {
            Ok(v) => Attempt::Done(v),
            Err(e) => Attempt::Fail(GatewayError::Malformed {
                capability,
                subject: subject.to_string(),
                message: e.to_string(),
            }),
        }
    }

    fn post<B: Serialize, R: DeserializeOwned>(
        &self,
        capability: Capability,
        subject: &str,
        body: &B,
    ) -> Result<R, GatewayError> {
        let attempts = self.config.max_retries + 1;
        let mut backoff = self.config.initial_backoff;
        let mut last = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                std::thread::sleep(backoff);
                backoff *= 2;
            }
            match self.attempt(capability, subject, body) {
                Attempt::Done(v) => return Ok(v),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(reason) => last = reason,
            }
        }
        Err(GatewayError::RetriesExhausted {
            capability,
            subject: subject.to_string(),
            attempts,
            last,
        })
    }

    fn encode_image(&self, image: &ImageRef) -> Result<String, GatewayError> {
        match self.config.image_encoding {
            ImageEncoding::Path => Ok(image.path.clone()),
            ImageEncoding::Base64 => std::fs::read(&image.path)
                .map(|bytes| base64::engine::general_purpose::STANDARD.encode(bytes))
                .map_err(|e| GatewayError::Request {
                    capability: Capability::Ground,
                    subject: format!("image \"{}\"", image.id),
                    message: format!("cannot read {}: {e}", image.path),
                }),
        }
    }
}

impl ModelBackend for HttpBackend {
    fn identity(&self) -> String {
        format!("http:{}", self.config.base_url)
    }

    fn score_scale(&self) -> ScoreScale {
        ScoreScale::Cosine
    }

    fn ground_raw(&self, image: &ImageRef, prompt: &str) -> Result<f64, GatewayError> {
        let encoded = self.encode_image(image)?;
        let body = GroundRequest {
            image: &encoded,
            prompt,
        };
        let r: GroundResponse = self.post(
            Capability::Ground,
            &grounding_subject(&image.id, prompt),
            &body,
        )?;
        Ok(r.score)
    }

    fn complete_raw(&self, prompt: &str, n: usize) -> Result<Vec<String>, GatewayError> {
        let r: CompleteResponse = self.post(
            Capability::Complete,
            &format!("prompt \"{prompt}\""),
            &CompleteRequest { prompt, n },
        )?;
        Ok(r.texts)
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let r: EmbedResponse = self.post(
            Capability::Embed,
            &format!("text \"{text}\""),
            &EmbedRequest { text },
        )?;
        Ok(r.vector)
    }
}
