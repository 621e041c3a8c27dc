#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

use latent_recall::backend::{GapModelSpec, MockCandidate, MockScript, PromptScript};
use latent_recall::dataset::{partition_by_popularity, write_dataset_jsonl};
use latent_recall::{Bucket, QARecord};

pub const N_GAP: usize = 200;

pub fn record(id: &str, prompt: &str, answers: &[&str], entity: &str, popularity: f64) -> QARecord {
    QARecord {
        record_id: id.to_string(),
        question: prompt.to_string(),
        prompt: prompt.to_string(),
        answers: answers.iter().map(|a| a.to_string()).collect(),
        entity_id: entity.to_string(),
        popularity,
        bucket: Bucket::Unassigned,
    }
}

fn script(prompt: String, greedy: &str, cands: &[(&str, f64)], cont: &[(&str, &str)]) -> PromptScript {
    PromptScript {
        prompt,
        script: MockScript {
            greedy_completion: greedy.to_string(),
            candidates: cands.iter().map(|(t, l)| MockCandidate::new(*t, *l)).collect(),
            continuations: cont
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect::<BTreeMap<_, _>>(),
        },
    }
}

/// `n` records. The first `hidden` give "unsure" greedily but hold a prefix of
/// the answer at rank 2; of the rest, even indices answer correctly at rank 1
/// and odd ones answer wrongly with the answer absent from the top 3.
pub fn gap_fixture(n: usize, hidden: usize) -> (Vec<QARecord>, GapModelSpec) {
    let mut records = Vec::with_capacity(n);
    let mut scripts = Vec::with_capacity(n);
    for i in 0..n {
        let prompt = format!("Q: which place is number {i}?\nA:");
        let answer = format!("Vandor{i}");
        records.push(record(
            &format!("r{i:04}"),
            &prompt,
            &[&answer],
            &format!("e{i:04}"),
            (i * 7 % 101) as f64,
        ));
        let full = format!(" {answer}");
        let rest = format!("or{i}");
        scripts.push(if i < hidden {
            script(
                prompt,
                "unsure",
                &[(" unsure", -0.1), (" Vand", -0.7), (" Quibble", -1.5)],
                &[(" Vand", &rest)],
            )
        } else if i % 2 == 0 {
            script(
                prompt,
                &answer,
                &[(&full, -0.05), (" Quibble", -2.0), (" Mexlit", -3.0)],
                &[],
            )
        } else {
            script(
                prompt,
                "Quibble",
                &[(" Quibble", -0.2), (" Mexlit", -1.0), (" unsure", -2.0)],
                &[],
            )
        });
    }
    let records = partition_by_popularity(&records, 0.1, 0.4).unwrap();
    let spec = GapModelSpec {
        max_top_logprobs: 20,
        default: MockScript {
            greedy_completion: "unsure".into(),
            candidates: vec![MockCandidate::new(" unsure", 0.0)],
            continuations: BTreeMap::new(),
        },
        scripts,
    };
    (records, spec)
}

pub fn write_fixture(dir: &Path, records: &[QARecord], spec: &GapModelSpec) {
    write_dataset_jsonl(&dir.join("dataset.jsonl"), records).unwrap();
    std::fs::write(dir.join("spec.json"), spec.to_json_pretty().unwrap()).unwrap();
}

/// Minimal HTTP server that answers with canned `(status, body)` pairs in
/// order and records every request body it sees.
pub struct ScriptedServer {
    pub url: String,
    pub bodies: Arc<Mutex<Vec<String>>>,
    handle: Option<JoinHandle<()>>,
}

impl ScriptedServer {
    pub fn start(responses: Vec<(u16, String)>) -> Self {
        let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
        let url = format!("http://{}", server.server_addr().to_ip().unwrap());
        let bodies = Arc::new(Mutex::new(Vec::new()));
        let seen = Arc::clone(&bodies);
        let handle = thread::spawn(move || {
            for (status, body) in responses {
                let mut req = match server.recv() {
                    Ok(r) => r,
                    Err(_) => return,
                };
                let mut text = String::new();
                req.as_reader().read_to_string(&mut text).unwrap();
                seen.lock().unwrap().push(text);
                let resp = tiny_http::Response::from_string(body).with_status_code(status);
                let _ = req.respond(resp);
            }
        });
        Self {
            url,
            bodies,
            handle: Some(handle),
        }
    }

    pub fn join(mut self) -> Vec<String> {
        if let Some(h) = self.handle.take() {
            h.join().unwrap();
        }
        self.bodies.lock().unwrap().clone()
    }
}
