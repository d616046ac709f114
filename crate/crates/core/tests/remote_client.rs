use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use implicit_layers::guidance::wire::{self, EpsRequest, EpsResponse, HealthResponse, SampleRequest, SampleResponse};
use implicit_layers::guidance::{GuidanceProvider, GuidanceRequest, RemoteProvider, RetryPolicy, ScheduleSpec};
use implicit_layers::{Error, RasterImage};
use serde_json::json;

type Handler = dyn Fn(&str, &str) -> (u16, String) + Send + Sync;

/// Local HTTP server answering with `handler(url, body)`.
struct MockService {
    server: Arc<tiny_http::Server>,
    thread: Option<JoinHandle<()>>,
    hits: Arc<AtomicUsize>,
    bodies: Arc<Mutex<Vec<(String, String)>>>,
}

impl MockService {
    fn start(handler: impl Fn(&str, &str) -> (u16, String) + Send + Sync + 'static) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let thread = {
            let (server, hits, bodies) = (server.clone(), hits.clone(), bodies.clone());
            std::thread::spawn(move || {
                for mut req in server.incoming_requests() {
                    hits.fetch_add(1, Ordering::SeqCst);
                    let mut body = String::new();
                    req.as_reader().read_to_string(&mut body).unwrap();
                    let url = req.url().to_string();
                    let (code, text) = handler(&url, &body);
                    bodies.lock().unwrap().push((url, body));
                    let header = tiny_http::Header::from_bytes("Content-Type", "application/json").unwrap();
                    let _ = req.respond(tiny_http::Response::from_string(text).with_status_code(code).with_header(header));
                }
            })
        };
        Self {
            server,
            thread: Some(thread),
            hits,
            bodies,
        }
    }

    fn url(&self) -> String {
        format!("http://{}", self.server.server_addr().to_ip().unwrap())
    }

    fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }
}

impl Drop for MockService {
    fn drop(&mut self) {
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}


fn fast_retry(retries: usize) -> RetryPolicy {
    RetryPolicy {
        backoff: vec![Duration::from_millis(5); retries],
        timeout: Duration::from_secs(5),
    }
}

fn health_json(spec: ScheduleSpec) -> String {
    serde_json::to_string(&HealthResponse {
        status: "ok".into(),
        mode: "stub".into(),
        model_id: "mock-model".into(),
        schedule: spec,
    })
    .unwrap()
}

/// Answers health, echoes `ε̂ = 2·z` on /v1/eps and a constant sample.
fn echo_service(spec: ScheduleSpec) -> MockService {
    MockService::start(move |url, body| match url {
        "/v1/health" => (200, health_json(spec)),
        "/v1/eps" => {
            let req: EpsRequest = serde_json::from_str(body).unwrap();
            let z = wire::decode_f32(&req.image_b64).unwrap();
            let eps: Vec<f64> = z.iter().map(|v| 2.0 * v).collect();
            let resp = EpsResponse {
                eps_b64: wire::encode_f32(&eps),
                alpha_t: 0.8,
                sigma_t: 0.6,
                model_id: "mock-model".into(),
                guidance_scale: Some(req.guidance_scale),
            };
            (200, serde_json::to_string(&resp).unwrap())
        }
        "/v1/sample" => {
            let req: SampleRequest = serde_json::from_str(body).unwrap();
            let image = vec![0.25; req.size * req.size * 3];
            (200, serde_json::to_string(&SampleResponse { image_b64: wire::encode_f32(&image) }).unwrap())
        }
        _ => (404, "{}".into()),
    })
}

fn request(width: usize, height: usize) -> GuidanceRequest {
    GuidanceRequest {
        image: RasterImage::from_fn(width, height, |p| [p.x, p.y, 0.5]).unwrap(),
        t: 0.4,
        prompt: "a red circle".into(),
        guidance_scale: 14.0,
        seed: 7,
    }
}

#[test]
fn adopts_the_advertised_schedule() {
    let spec = ScheduleSpec {
        steps: 500,
        beta_start: 2e-4,
        beta_end: 0.03,
    };
    let svc = echo_service(spec);
    let remote = RemoteProvider::connect(&svc.url(), fast_retry(0)).unwrap();
    assert_eq!(remote.schedule().unwrap().spec(), spec);
    assert_eq!(remote.health().model_id, "mock-model");
}

#[test]
fn eps_request_carries_every_field_and_decodes_the_reply() {
    let svc = echo_service(ScheduleSpec::default());
    let remote = RemoteProvider::connect(&svc.url(), fast_retry(0)).unwrap();
    let req = request(6, 4);
    let resp = remote.predict_eps(&req).unwrap();

    let bodies = svc.bodies.lock().unwrap();
    let (url, body) = bodies.last().unwrap();
    assert_eq!(url, "/v1/eps");
    let sent: serde_json::Value = serde_json::from_str(body).unwrap();
    assert_eq!(sent["h"], 4);
    assert_eq!(sent["w"], 6);
    assert_eq!(sent["t"], 0.4);
    assert_eq!(sent["prompt"], "a red circle");
    assert_eq!(sent["guidance_scale"], 14.0);
    assert_eq!(sent["seed"], 7);
    let image = wire::decode_f32(sent["image_b64"].as_str().unwrap()).unwrap();
    assert_eq!(image.len(), 6 * 4 * 3);
    for (a, b) in image.iter().zip(req.image.data()) {
        assert_eq!(*a as f32, *b as f32);
    }

    assert_eq!(resp.eps_hat.len(), req.image.data().len());
    for (e, z) in resp.eps_hat.iter().zip(req.image.data()) {
        assert_eq!(*e as f32, (2.0 * *z as f32 as f64) as f32);
    }
    assert_eq!(resp.meta.model_id, "mock-model");
    assert!(resp.meta.timestep_index.is_some());
}

#[test]
fn sample_is_decoded_to_the_requested_size() {
    let svc = echo_service(ScheduleSpec::default());
    let remote = RemoteProvider::connect(&svc.url(), fast_retry(0)).unwrap();
    let img = remote.sample("a cat", 16, 3).unwrap();
    assert_eq!((img.width(), img.height()), (16, 16));
    assert!(img.data().iter().all(|&v| v == 0.25));
    let bodies = svc.bodies.lock().unwrap();
    let sent: serde_json::Value = serde_json::from_str(&bodies.last().unwrap().1).unwrap();
    assert_eq!(sent, json!({ "prompt": "a cat", "steps": 1000, "seed": 3, "size": 16 }));
}

#[test]
fn shape_mismatch_in_reply_is_a_guidance_error() {
    let svc = MockService::start(|url, _| match url {
        "/v1/health" => (200, health_json(ScheduleSpec::default())),
        _ => (
            200,
            json!({ "eps_b64": wire::encode_f32(&[0.0; 5]), "alpha_t": 0.8, "sigma_t": 0.6, "model_id": "m" }).to_string(),
        ),
    });
    let remote = RemoteProvider::connect(&svc.url(), fast_retry(0)).unwrap();
    assert!(matches!(remote.predict_eps(&request(4, 4)), Err(Error::Guidance(_))));
}

#[test]
fn server_errors_are_retried_then_succeed() {
    let failures = Arc::new(AtomicUsize::new(2));
    let svc = {
        let failures = failures.clone();
        MockService::start(move |url, _| {
            if url == "/v1/health" && failures.load(Ordering::SeqCst) > 0 {
                failures.fetch_sub(1, Ordering::SeqCst);
                return (503, r#"{"detail":"model not ready"}"#.into());
            }
            (200, health_json(ScheduleSpec::default()))
        })
    };
    RemoteProvider::connect(&svc.url(), fast_retry(3)).unwrap();
    assert_eq!(svc.hits(), 3);
}

#[test]
fn retries_are_bounded_by_the_policy() {
    let svc = MockService::start(|_, _| (503, "{}".into()));
    let err = RemoteProvider::connect(&svc.url(), fast_retry(3)).err().unwrap();
    assert!(matches!(err, Error::Guidance(_)), "{err:?}");
    assert_eq!(svc.hits(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let svc = MockService::start(|url, _| match url {
        "/v1/health" => (200, health_json(ScheduleSpec::default())),
        _ => (400, r#"{"detail":"malformed payload"}"#.into()),
    });
    let remote = RemoteProvider::connect(&svc.url(), fast_retry(3)).unwrap();
    match remote.predict_eps(&request(4, 4)) {
        Err(Error::Guidance(msg)) => assert!(msg.contains("400"), "{msg}"),
        other => panic!("expected a guidance error, got {other:?}"),
    }
    assert_eq!(svc.hits(), 2);
}

#[test]
fn unreachable_service_fails_fast() {
    let addr = {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.local_addr().unwrap()
    };
    let start = Instant::now();
    let err = RemoteProvider::connect(&format!("http://{addr}"), fast_retry(3)).err().unwrap();
    assert!(matches!(err, Error::Guidance(_)), "{err:?}");
    assert!(start.elapsed() < Duration::from_secs(5));
}
