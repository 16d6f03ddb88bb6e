//! LLM rater against a scripted local HTTP server.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use phonosem_core::ratings::{
    rate_batch, ApiStyle, Dimension, LlmConfig, RaterKind, RaterSpec, RawScale, WordItem,
};
use phonosem_core::Error;

#[derive(Clone, Debug)]
struct Captured {
    headers: Vec<(String, String)>,
    body: String,
}

struct Mock {
    url: String,
    requests: Arc<Mutex<Vec<Captured>>>,
}

/// Serves `script` in order, repeating the last entry once exhausted.
fn mock(script: Vec<(u16, String)>) -> Mock {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let log = requests.clone();
    let mut queue: VecDeque<(u16, String)> = script.into();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap() == 0 || line == "\r\n" {
                    break;
                }
                if let Some((k, v)) = line.trim_end().split_once(':') {
                    let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
                    if k == "content-length" {
                        len = v.parse().unwrap();
                    }
                    headers.push((k, v));
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            log.lock().unwrap().push(Captured {
                headers,
                body: String::from_utf8(body).unwrap(),
            });
            let (status, text) = if queue.len() > 1 {
                queue.pop_front().unwrap()
            } else {
                queue.front().cloned().unwrap()
            };
            let resp = format!(
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
                text.len()
            );
            let _ = stream.write_all(resp.as_bytes());
        }
    });
    Mock { url, requests }
}

fn openai(content: &str) -> (u16, String) {
    (
        200,
        serde_json::json!({"choices": [{"message": {"content": content}}]}).to_string(),
    )
}

fn rater(url: &str, style: ApiStyle, max_retries: u32) -> RaterSpec {
    RaterSpec {
        id: "mock".into(),
        kind: RaterKind::LlmHttp(LlmConfig {
            endpoint: url.into(),
            model: "mock-1".into(),
            api_style: style,
            max_retries,
            requests_per_second: 1000.0,
            backoff_ms: 1,
            max_backoff_ms: 4,
            timeout_secs: 5,
            ..LlmConfig::default()
        }),
    }
}

fn one_word() -> Vec<WordItem> {
    vec![WordItem::new("brev", "e-o.s01")]
}

#[test]
fn well_formed_reply_is_scaled_to_hundred() {
    let m = mock(vec![openai("7")]);
    let out = rate_batch(
        &rater(&m.url, ApiStyle::Openai, 2),
        &one_word(),
        &[Dimension::Size],
    )
    .unwrap();
    assert_eq!(out.records.len(), 1);
    let r = &out.records[0];
    assert_eq!(r.score, 70.0);
    assert_eq!(r.raw_scale, RawScale::ZeroToTen);
    assert_eq!(out.provenance.kind, "llm:mock-1");
    assert!(out.accounting_holds());
    let req = &m.requests.lock().unwrap()[0];
    let body: serde_json::Value = serde_json::from_str(&req.body).unwrap();
    assert_eq!(body["temperature"], 0.0);
    assert!(body["messages"][0]["content"]
        .as_str()
        .unwrap()
        .contains("brev"));
}

#[test]
fn malformed_reply_is_retried() {
    let m = mock(vec![
        openai("somewhere between 3 and 4"),
        openai("Rating: 6"),
    ]);
    let out = rate_batch(
        &rater(&m.url, ApiStyle::Openai, 3),
        &one_word(),
        &[Dimension::Shape],
    )
    .unwrap();
    assert_eq!(out.records[0].score, 60.0);
    assert_eq!(m.requests.lock().unwrap().len(), 2);
}

#[test]
fn persistent_malformed_reply_becomes_a_failure_record() {
    let m = mock(vec![openai("no idea")]);
    let words = vec![
        WordItem::new("brev", "e-o.s01"),
        WordItem::new("brov", "e-o.s01"),
    ];
    let out = rate_batch(
        &rater(&m.url, ApiStyle::Openai, 2),
        &words,
        &[Dimension::Size],
    )
    .unwrap();
    assert!(out.records.is_empty());
    assert_eq!(out.failures.len(), 2);
    assert_eq!(out.failures[0].attempts, 3);
    assert!(out.accounting_holds());
    assert_eq!(m.requests.lock().unwrap().len(), 6);
}

#[test]
fn server_errors_are_retried_with_backoff() {
    let m = mock(vec![(500, "{}".into()), (429, "{}".into()), openai("9")]);
    let out = rate_batch(
        &rater(&m.url, ApiStyle::Openai, 3),
        &one_word(),
        &[Dimension::Size],
    )
    .unwrap();
    assert_eq!(out.records[0].score, 90.0);
    assert_eq!(m.requests.lock().unwrap().len(), 3);
}

#[test]
fn auth_failure_aborts_without_retry() {
    let m = mock(vec![(401, r#"{"error":"bad key"}"#.into())]);
    let err = rate_batch(
        &rater(&m.url, ApiStyle::Openai, 5),
        &one_word(),
        &[Dimension::Size],
    )
    .unwrap_err();
    assert!(matches!(err, Error::Transport { attempts: 1, .. }), "{err}");
    assert_eq!(m.requests.lock().unwrap().len(), 1);
}

#[test]
fn exhausted_transport_retries_are_an_error() {
    let m = mock(vec![(503, "{}".into())]);
    let err = rate_batch(
        &rater(&m.url, ApiStyle::Openai, 2),
        &one_word(),
        &[Dimension::Size],
    )
    .unwrap_err();
    assert!(matches!(err, Error::Transport { attempts: 3, .. }), "{err}");
}

#[test]
fn anthropic_style_sends_key_header_and_reads_content_blocks() {
    let m = mock(vec![(
        200,
        r#"{"content":[{"type":"text","text":"4"}]}"#.into(),
    )]);
    std::env::set_var("PHONOSEM_TEST_KEY", "k-123");
    let mut spec = rater(&m.url, ApiStyle::Anthropic, 1);
    if let RaterKind::LlmHttp(c) = &mut spec.kind {
        c.api_key_env = Some("PHONOSEM_TEST_KEY".into());
    }
    let out = rate_batch(&spec, &one_word(), &[Dimension::Weight]).unwrap();
    assert_eq!(out.records[0].score, 40.0);
    let req = m.requests.lock().unwrap()[0].clone();
    let header = |k: &str| {
        req.headers
            .iter()
            .find(|(h, _)| h == k)
            .map(|(_, v)| v.clone())
    };
    assert_eq!(header("x-api-key").as_deref(), Some("k-123"));
    assert!(header("anthropic-version").is_some());
}

#[test]
fn missing_key_variable_is_a_config_error() {
    let mut spec = rater("http://127.0.0.1:9/", ApiStyle::Openai, 0);
    if let RaterKind::LlmHttp(c) = &mut spec.kind {
        c.api_key_env = Some("PHONOSEM_DEFINITELY_UNSET".into());
    }
    let err = rate_batch(&spec, &one_word(), &[Dimension::Size]).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn requests_respect_the_rate_limit() {
    let m = mock(vec![openai("5")]);
    let mut spec = rater(&m.url, ApiStyle::Openai, 0);
    if let RaterKind::LlmHttp(c) = &mut spec.kind {
        c.requests_per_second = 20.0;
        c.burst = 1;
    }
    let start = Instant::now();
    let out = rate_batch(&spec, &one_word(), &Dimension::ALL[..6]).unwrap();
    assert_eq!(out.records.len(), 6);
    // Six requests at 20/s with a burst of one need at least five intervals.
    assert!(
        start.elapsed().as_secs_f64() >= 0.24,
        "{:?}",
        start.elapsed()
    );
}
