use std::thread;
use std::time::{Duration, Instant};

use super::wire::{self, EpsRequest, EpsResponse, HealthResponse, SampleRequest, SampleResponse};
use super::{GuidanceProvider, GuidanceRequest, GuidanceResponse, NoiseSchedule, ProviderMeta};
use crate::error::{Error, Result};
use crate::raster::RasterImage;

/// Retries after the first failed attempt, one per backoff entry.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub backoff: Vec<Duration>,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            backoff: vec![Duration::from_millis(500), Duration::from_secs(1), Duration::from_secs(2)],
            timeout: Duration::from_secs(120),
        }
    }
}

/// HTTP client for the guidance service.
pub struct RemoteProvider {
    base_url: String,
    agent: ureq::Agent,
    retry: RetryPolicy,
    health: HealthResponse,
    schedule: NoiseSchedule,
}

enum Attempt<T> {
    Done(T),
    Retry(Error),
    Fatal(Error),
}

impl RemoteProvider {
    /// Connects and reads the service's advertised schedule.
    pub fn connect(base_url: &str, retry: RetryPolicy) -> Result<Self> {
        let agent = ureq::AgentBuilder::new().timeout(retry.timeout).build();
        let base_url = base_url.trim_end_matches('/').to_string();
        let health: HealthResponse = with_retry(&retry, || {
            classify(agent.get(&format!("{base_url}/v1/health")).call()).and_then_json()
        })?;
        let schedule = NoiseSchedule::from_spec(health.schedule)
            .map_err(|e| Error::Guidance(format!("service advertised an invalid schedule: {e}")))?;
        Ok(Self {
            base_url,
            agent,
            retry,
            health,
            schedule,
        })
    }

    pub fn health(&self) -> &HealthResponse {
        &self.health
    }

    fn post<T: serde::de::DeserializeOwned>(&self, path: &str, body: &impl serde::Serialize) -> Result<T> {
        let url = format!("{}{path}", self.base_url);
        let body = serde_json::to_value(body)?;
        with_retry(&self.retry, || classify(self.agent.post(&url).send_json(body.clone())).and_then_json())
    }
}

trait ThenJson {
    fn and_then_json<T: serde::de::DeserializeOwned>(self) -> Attempt<T>;
}

impl ThenJson for Attempt<ureq::Response> {
    fn and_then_json<T: serde::de::DeserializeOwned>(self) -> Attempt<T> {
        match self {
            Attempt::Done(resp) => match resp.into_json::<T>() {
                Ok(v) => Attempt::Done(v),
                Err(e) => Attempt::Fatal(Error::Guidance(format!("malformed response: {e}"))),
            },
            Attempt::Retry(e) => Attempt::Retry(e),
            Attempt::Fatal(e) => Attempt::Fatal(e),
        }
    }
}

fn classify(result: std::result::Result<ureq::Response, ureq::Error>) -> Attempt<ureq::Response> {
    match result {
        Ok(resp) => Attempt::Done(resp),
        Err(ureq::Error::Status(code, resp)) => {
            let body = resp.into_string().unwrap_or_default();
            let err = Error::Guidance(format!("service returned HTTP {code}: {body}"));
            if code >= 500 {
                Attempt::Retry(err)
            } else {
                Attempt::Fatal(err)
            }
        }
        Err(ureq::Error::Transport(t)) => Attempt::Retry(Error::Guidance(format!("transport failure: {t}"))),
    }
}

fn with_retry<T>(policy: &RetryPolicy, mut call: impl FnMut() -> Attempt<T>) -> Result<T> {
    let mut delays = policy.backoff.iter();
    loop {
        match call() {
            Attempt::Done(v) => return Ok(v),
            Attempt::Fatal(e) => return Err(e),
            Attempt::Retry(e) => match delays.next() {
                Some(d) => thread::sleep(*d),
                None => return Err(e),
            },
        }
    }
}

impl GuidanceProvider for RemoteProvider {
    fn name(&self) -> &str {
        "remote"
    }

    fn predict_eps(&self, req: &GuidanceRequest) -> Result<GuidanceResponse> {
        req.validate()?;
        let start = Instant::now();
        let body = EpsRequest {
            image_b64: wire::encode_f32(req.image.data()),
            h: req.image.height(),
            w: req.image.width(),
            t: req.t,
            prompt: req.prompt.clone(),
            guidance_scale: req.guidance_scale,
            seed: req.seed,
        };
        let resp: EpsResponse = self.post("/v1/eps", &body)?;
        let out = GuidanceResponse {
            eps_hat: wire::decode_f32(&resp.eps_b64)?,
            meta: ProviderMeta {
                model_id: resp.model_id,
                latency_ms: start.elapsed().as_secs_f64() * 1e3,
                timestep_index: Some(self.schedule.index(req.t)),
            },
        };
        out.check_against(req)?;
        Ok(out)
    }

    fn sample(&self, prompt: &str, size: usize, seed: u64) -> Result<RasterImage> {
        let body = SampleRequest {
            prompt: prompt.into(),
            steps: self.schedule.steps(),
            seed,
            size,
        };
        let resp: SampleResponse = self.post("/v1/sample", &body)?;
        let data = wire::decode_f32(&resp.image_b64)?;
        if data.len() != size * size * 3 {
            return Err(Error::Guidance(format!("sample has {} values for size {size}", data.len())));
        }
        RasterImage::new(size, size, data.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    fn schedule(&self) -> Option<NoiseSchedule> {
        Some(self.schedule.clone())
    }
}
