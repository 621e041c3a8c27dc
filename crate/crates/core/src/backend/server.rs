//! Local HTTP server that exposes a [`MockBackend`] over the completions wire
//! format.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::json;
use tiny_http::{Header, Method, Request, Response, Server};
use tracing::{debug, info};

use super::wire::{CompletionBody, CompletionResponse, COMPLETIONS_PATH};
use super::{CompletionRequest, LMBackend, MockBackend};
use crate::error::{Error, Result};

const POLL_INTERVAL: Duration = Duration::from_millis(50);

pub struct MockServer {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl MockServer {
    /// Binds `addr` (port 0 picks a free port) and serves on `threads` workers.
    pub fn start(backend: MockBackend, addr: &str, threads: usize) -> Result<Self> {
        let server = Server::http(addr)
            .map_err(|e| Error::Config(format!("cannot bind {addr}: {e}")))?;
        let bound = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Server("server is not bound to an IP socket".into()))?;
        let server = Arc::new(server);
        let backend = Arc::new(backend);
        let stop = Arc::new(AtomicBool::new(false));
        let workers = (0..threads.max(1))
            .map(|_| {
                let server = Arc::clone(&server);
                let backend = Arc::clone(&backend);
                let stop = Arc::clone(&stop);
                thread::spawn(move || {
                    while !stop.load(Ordering::Relaxed) {
                        match server.recv_timeout(POLL_INTERVAL) {
                            Ok(Some(req)) => handle(&backend, req),
                            Ok(None) => {}
                            Err(_) => break,
                        }
                    }
                })
            })
            .collect();
        info!(%bound, "mock completion server listening");
        Ok(Self {
            addr: bound,
            stop,
            workers,
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL suitable for [`super::EndpointConfig::new`].
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Handle that can stop the server from another thread (e.g. a signal handler).
    pub fn stop_handle(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.stop)
    }

    /// Blocks until the workers exit.
    pub fn wait(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn shutdown(self) {
        self.stop.store(true, Ordering::Relaxed);
        self.wait();
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

fn json_header() -> Header {
    Header::from_bytes("Content-Type", "application/json").expect("static header")
}

fn error_response(status: u16, message: &str) -> Response<std::io::Cursor<Vec<u8>>> {
    let body = json!({"error": {"message": message, "type": "invalid_request_error"}});
    Response::from_string(body.to_string())
        .with_status_code(status)
        .with_header(json_header())
}

fn respond(
    backend: &MockBackend,
    method: &Method,
    path: &str,
    body: &str,
) -> Response<std::io::Cursor<Vec<u8>>> {
    match (method, path) {
        (Method::Get, "/health") => Response::from_string("ok"),
        (Method::Post, COMPLETIONS_PATH) => {
            let req: CompletionBody = match serde_json::from_str(body) {
                Ok(r) => r,
                Err(e) => return error_response(400, &format!("schema error: {e}")),
            };
            if req.temperature != 0.0 {
                return error_response(400, "only greedy decoding (temperature 0.0) is served");
            }
            let max = backend.capability().max_top_logprobs;
            if req.logprobs > max {
                return error_response(400, &format!("logprobs must be <= {max}"));
            }
            let completion = backend.complete(&CompletionRequest {
                record_id: "",
                prompt: &req.prompt,
                top_k: req.logprobs,
                max_tokens: req.max_tokens,
                probe_position: 0,
            });
            match completion {
                Ok(dist) => {
                    let model = req.model.as_deref().unwrap_or("mock");
                    let resp = CompletionResponse::from_distribution(&dist, model);
                    match serde_json::to_string(&resp) {
                        Ok(text) => Response::from_string(text).with_header(json_header()),
                        Err(e) => error_response(500, &e.to_string()),
                    }
                }
                Err(e) => error_response(500, &e.to_string()),
            }
        }
        (_, COMPLETIONS_PATH) => error_response(405, "method not allowed"),
        _ => error_response(404, "not found"),
    }
}

fn handle(backend: &MockBackend, mut req: Request) {
    let mut body = String::new();
    let response = if let Err(e) = req.as_reader().read_to_string(&mut body) {
        error_response(400, &format!("unreadable body: {e}"))
    } else {
        let path = req.url().split('?').next().unwrap_or("").to_string();
        respond(backend, req.method(), &path, &body)
    };
    debug!(status = response.status_code().0, "served request");
    let _ = req.respond(response);
}
