mod common;

use std::time::Duration;

use latent_recall::backend::server::MockServer;
use latent_recall::backend::{EndpointConfig, HttpBackend, LMBackend, MockBackend};
use latent_recall::harness::{batch_evaluate, DecodeSettings};
use latent_recall::{batch_recall, Error, MetricConfig};

use common::{gap_fixture, ScriptedServer};

fn settings() -> DecodeSettings {
    DecodeSettings {
        top_k: 3,
        ..DecodeSettings::default()
    }
}

#[test]
fn mock_and_http_are_interchangeable() {
    let (records, spec) = gap_fixture(40, 10);
    let mock = MockBackend::new(spec.clone()).unwrap();
    let server = MockServer::start(MockBackend::new(spec).unwrap(), "127.0.0.1:0", 2).unwrap();
    let http = HttpBackend::new(EndpointConfig::new(server.url()));
    let config = MetricConfig::default().with_k_values(vec![1, 2, 3]);

    let a = batch_evaluate(&records, &mock, &config, &settings(), 1).unwrap();
    let b = batch_evaluate(&records, &http, &config, &settings(), 4).unwrap();
    assert_eq!(a.distributions, b.distributions);
    assert_eq!(a.report, b.report);

    let a = batch_recall(&records, &mock, &config, &settings(), 1).unwrap();
    let b = batch_recall(&records, &http, &config, &settings(), 4).unwrap();
    assert_eq!(a.results, b.results);
    assert_eq!(a.after, b.after);
    assert_eq!(http.retry_count(), 0);
}

#[test]
fn client_errors_are_not_retried() {
    let server = ScriptedServer::start(vec![(400, r#"{"error":"bad"}"#.into())]);
    let mut cfg = EndpointConfig::new(server.url.clone());
    cfg.backoff_base = Duration::from_millis(1);
    let http = HttpBackend::new(cfg);
    let err = http.complete(&settings().request("r", "p")).unwrap_err();
    assert!(matches!(err, Error::HttpStatus { status: 400, .. }), "{err}");
    assert_eq!(err.exit_code(), 1);
    assert_eq!(server.join().len(), 1);
    assert_eq!(http.retry_count(), 0);
}

#[test]
fn retries_give_up_after_max_attempts() {
    let server = ScriptedServer::start(vec![(503, "{}".into()), (503, "{}".into())]);
    let mut cfg = EndpointConfig::new(server.url.clone());
    cfg.backoff_base = Duration::from_millis(1);
    cfg.max_attempts = 2;
    let http = HttpBackend::new(cfg);
    let err = http.complete(&settings().request("r", "p")).unwrap_err();
    assert!(matches!(err, Error::HttpStatus { status: 503, .. }), "{err}");
    assert_eq!(http.retry_count(), 1);
    assert_eq!(server.join().len(), 2);
}

#[test]
fn malformed_response_is_a_schema_error() {
    let server = ScriptedServer::start(vec![(200, r#"{"choices":[{"text":"x"}]}"#.into())]);
    let http = HttpBackend::new(EndpointConfig::new(server.url.clone()));
    let err = http.complete(&settings().request("r", "p")).unwrap_err();
    assert!(matches!(err, Error::Schema(_)), "{err}");
    server.join();
}

#[test]
fn mock_server_rejects_sampling() {
    let (_, spec) = gap_fixture(2, 0);
    let server = MockServer::start(MockBackend::new(spec).unwrap(), "127.0.0.1:0", 1).unwrap();
    let resp = ureq::post(&format!("{}/v1/completions", server.url()))
        .send_string(r#"{"prompt":"p","max_tokens":4,"temperature":0.7,"logprobs":2}"#);
    match resp {
        Err(ureq::Error::Status(400, _)) => {}
        other => panic!("expected 400, got {other:?}"),
    }
}
