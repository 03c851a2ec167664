//! Runs the engine against a local OpenAI-compatible mock server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use adaptive_tor::backends::BackendRole;
use adaptive_tor::config::BackendKind;
use adaptive_tor::dataset::{build_kb, synthetic_catalog, QueryRecord};
use adaptive_tor::{Engine, EngineConfig, ExecutionMode};
use serde_json::{json, Value};

#[derive(Clone, Copy)]
enum Behavior {
    Normal,
    ChatError,
}

#[derive(Default)]
struct Log {
    chat: Vec<Value>,
    embeddings: usize,
}

fn embedding_for(text: &str) -> Vec<f64> {
    // Cheap bag-of-letters vector; similar texts land close together.
    let mut v = vec![0.01; 8];
    for b in text.bytes().filter(u8::is_ascii_alphabetic) {
        v[(b.to_ascii_lowercase() - b'a') as usize % 8] += 1.0;
    }
    v
}

fn chat_reply(body: &Value) -> String {
    let system = body["messages"][0]["content"].as_str().unwrap_or_default();
    if system.contains("semantically complex") {
        "High".into()
    } else if system.contains("split user requests") {
        "1. check my balance\n2. report a lost card".into()
    } else if system.contains("judge whether") {
        "Relevant".into()
    } else if system.contains("score passages") {
        (1..=40)
            .map(|i| format!("{i}: {:.2}", 1.0 - f64::from(i) / 50.0))
            .collect::<Vec<_>>()
            .join("\n")
    } else {
        "card_lost, check_balance".into()
    }
}

fn handle(stream: TcpStream, log: Arc<Mutex<Log>>, behavior: Behavior) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut out = stream;
    loop {
        let mut request_line = String::new();
        if reader.read_line(&mut request_line).unwrap_or(0) == 0 {
            return;
        }
        let mut len = 0;
        loop {
            let mut h = String::new();
            reader.read_line(&mut h).unwrap();
            let h = h.trim_end();
            if h.is_empty() {
                break;
            }
            if let Some((k, v)) = h.split_once(':') {
                if k.eq_ignore_ascii_case("content-length") {
                    len = v.trim().parse().unwrap();
                }
            }
        }
        let mut raw = vec![0; len];
        reader.read_exact(&mut raw).unwrap();
        let body: Value = serde_json::from_slice(&raw).unwrap();
        let (status, reply) = if request_line.contains("/v1/embeddings") {
            log.lock().unwrap().embeddings += 1;
            let text = body["input"][0].as_str().unwrap();
            (
                "200 OK",
                json!({ "data": [{ "embedding": embedding_for(text) }] }),
            )
        } else {
            log.lock().unwrap().chat.push(body.clone());
            match behavior {
                Behavior::ChatError => ("500 Internal Server Error", json!({ "error": "boom" })),
                Behavior::Normal => (
                    "200 OK",
                    json!({ "choices": [{ "message": { "role": "assistant", "content": chat_reply(&body) } }] }),
                ),
            }
        };
        let payload = reply.to_string();
        write!(
            out,
            "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{payload}",
            payload.len()
        )
        .unwrap();
    }
}

fn serve(behavior: Behavior) -> (String, Arc<Mutex<Log>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let log = Arc::new(Mutex::new(Log::default()));
    let shared = log.clone();
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let log = shared.clone();
            thread::spawn(move || handle(stream, log, behavior));
        }
    });
    (format!("http://{addr}"), log)
}

fn remote_engine(endpoint: &str) -> Engine {
    let mut cfg = EngineConfig {
        deterministic: true,
        ..EngineConfig::default()
    };
    cfg.store.dimension = 8;
    cfg.embed.backend = BackendKind::Remote;
    cfg.embed.endpoint = endpoint.into();
    cfg.embed.model = "mock-embed".into();
    cfg.backend.kind = BackendKind::Remote;
    cfg.backend.endpoint = endpoint.into();
    cfg.backend.model = "mock-chat".into();
    let kb = build_kb(&[], Some(&synthetic_catalog()));
    Engine::from_config(cfg, kb).unwrap()
}

fn record(id: &str, text: &str) -> QueryRecord {
    QueryRecord {
        id: id.into(),
        text: text.into(),
        intents: ["card_lost".to_owned()].into(),
        domain: None,
    }
}

#[test]
fn simple_query_makes_one_classifier_call() {
    let (endpoint, log) = serve(Behavior::Normal);
    let engine = remote_engine(&endpoint);
    let indexed = log.lock().unwrap().embeddings;
    assert_eq!(indexed, 16);

    let t = engine.process_query(&record("q1", "my card is lost"), ExecutionMode::Adaptive);
    assert!(t.error.is_none(), "{:?}", t.error);
    assert_eq!(t.depth, 0);
    assert_eq!(t.ledger.total_calls, 1);
    let expected: std::collections::BTreeSet<String> =
        ["card_lost".to_owned(), "check_balance".to_owned()].into();
    assert_eq!(t.predicted_intents, expected);

    let log = log.lock().unwrap();
    assert_eq!(log.chat.len(), 1);
    assert_eq!(log.chat[0]["model"], "mock-chat");
    assert_eq!(log.chat[0]["stream"], false);
}

#[test]
fn tree_query_uses_every_role_over_http() {
    let (endpoint, log) = serve(Behavior::Normal);
    let engine = remote_engine(&endpoint);
    let t = engine.process_query(
        &record("q2", "compare interest rates and recommend the best option"),
        ExecutionMode::Adaptive,
    );
    assert!(t.error.is_none(), "{:?}", t.error);
    assert_eq!(t.depth, 3);
    assert_eq!(t.ledger.calls(BackendRole::LevelAssessor), 1);
    assert_eq!(t.ledger.calls(BackendRole::Decomposer), 7);
    assert_eq!(t.ledger.calls(BackendRole::Reranker), 1);
    assert_eq!(t.ledger.calls(BackendRole::IntentClassifier), 1);
    assert_eq!(log.lock().unwrap().chat.len(), t.ledger.total_calls);
    assert!(!t.evidence.is_empty() && t.evidence.len() <= 10);
}

#[test]
fn server_errors_degrade_or_fail_per_role() {
    let (endpoint, _log) = serve(Behavior::ChatError);
    let engine = remote_engine(&endpoint);

    // A failed classifier call leaves an empty prediction and a warning.
    let t = engine.process_query(&record("q3", "my card is lost"), ExecutionMode::Adaptive);
    assert!(t.error.is_none());
    assert!(t.predicted_intents.is_empty());
    assert!(
        t.warnings.iter().any(|w| w.contains("500")),
        "{:?}",
        t.warnings
    );

    // Without an assessor verdict there is no depth, so the query fails.
    let t = engine.process_query(
        &record("q4", "compare interest rates and recommend the best option"),
        ExecutionMode::Adaptive,
    );
    assert!(t.failed());
}

#[test]
fn unreachable_endpoint_fails_index_build() {
    // Bind then drop to get a port nobody listens on.
    let port = TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let mut cfg = EngineConfig::default();
    cfg.store.dimension = 8;
    cfg.embed.backend = BackendKind::Remote;
    cfg.embed.endpoint = format!("http://127.0.0.1:{port}");
    cfg.embed.timeout_ms = 2000;
    let err = Engine::from_config(cfg, build_kb(&[], Some(&synthetic_catalog())))
        .err()
        .expect("indexing must fail");
    assert_eq!(err.kind(), "backend");
}
