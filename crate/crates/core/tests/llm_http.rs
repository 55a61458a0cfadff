mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use common::{cli, edit_toml, fixture_copy, parity_answer, MockServer};
use jargon::llm::{ChatCache, ChatClient, ClientConfig, HttpTransport};
use jargon::Error;

/// Points the copied fixture at `server` with the credential in `key_env`.
fn point_at(dir: &std::path::Path, server: &MockServer, key_env: &str) -> String {
    let run = dir.join("run.toml");
    edit_toml(
        &run,
        "llm",
        &[
            ("endpoint", &format!("\"{}\"", server.url)),
            ("api_key_env", &format!("\"{key_env}\"")),
            ("requests_per_second", "1000.0"),
            ("backoff_ms", "1"),
            ("max_test_rows", "5"),
        ],
    );
    run.display().to_string()
}

#[test]
fn llm_run_then_offline_replay() {
    let server = MockServer::start(parity_answer);
    let dir = fixture_copy();
    let config = point_at(dir.path(), &server, "JARGON_TEST_KEY_REPLAY");
    std::env::set_var("JARGON_TEST_KEY_REPLAY", "sk-replay");

    let first = cli(&["llm", "--config", &config], "");
    assert_eq!(first.code, 0, "{}", first.stderr);
    let calls = server.calls();
    // 11 annotators x 5 rows x 4 strategies; some prompts repeat across strategies
    assert!(calls > 0 && calls <= 220, "{calls}");
    assert!(server.authorization().iter().all(|a| a == "Bearer sk-replay"));
    assert!(!std::fs::read_to_string(dir.path().join("run.toml"))
        .unwrap()
        .contains("sk-replay"));
    let results = std::fs::read_to_string(dir.path().join("out/llm_results.csv")).unwrap();
    for label in [
        "llm_baseline",
        "llm_metadata",
        "llm_context_enhanced_individual_5",
        "llm_few_shot_individual_5",
    ] {
        assert_eq!(results.matches(&format!(",{label},")).count(), 11, "{label}");
    }

    std::env::remove_var("JARGON_TEST_KEY_REPLAY");
    let second = cli(&["llm", "--config", &config], "");
    assert_eq!(second.code, 0, "{}", second.stderr);
    assert_eq!(server.calls(), calls);
    assert_eq!(
        std::fs::read_to_string(dir.path().join("out/llm_results.csv")).unwrap(),
        results
    );
}

#[test]
fn missing_credential_fails_before_any_request() {
    let server = MockServer::start(parity_answer);
    let dir = fixture_copy();
    let config = point_at(dir.path(), &server, "JARGON_TEST_KEY_UNSET");
    let o = cli(&["llm", "--config", &config], "");
    assert_eq!(o.code, 1);
    assert!(o.stderr.contains("JARGON_TEST_KEY_UNSET"), "{}", o.stderr);
    assert_eq!(server.calls(), 0);
}

#[test]
fn extract_terms_feeds_annotate() {
    let server = MockServer::start(|_| (200, "1. Alpha Beta\n2. gamma\n3. alpha beta\n".into()));
    let dir = fixture_copy();
    let config = point_at(dir.path(), &server, "JARGON_TEST_KEY_EXTRACT");
    std::env::set_var("JARGON_TEST_KEY_EXTRACT", "sk-extract");
    let text = std::fs::read_to_string(dir.path().join("abstracts.jsonl")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let id = doc["doc_id"].as_str().unwrap();

    let o = cli(&["extract-terms", "--config", &config, "--abstract", id], "");
    assert_eq!(o.code, 0, "{}", o.stderr);
    assert_eq!(
        o.stdout,
        format!("abstract_id,rank,term\n{id},1,Alpha Beta\n{id},2,gamma\n")
    );
    assert_eq!(server.calls(), 1);
    assert!(server.prompts()[0].contains(doc["abstract"].as_str().unwrap()));

    let target = dir.path().join("fresh.jsonl");
    let o = cli(
        &[
            "annotate",
            "--config",
            &config,
            "--annotator",
            "new",
            "--output",
            target.to_str().unwrap(),
        ],
        "2\n\n4\nbackground\n",
    );
    assert_eq!(o.code, 0, "{}", o.stderr);
    let written = std::fs::read_to_string(&target).unwrap();
    assert_eq!(written.lines().count(), 2);
    assert!(written.contains("\"term\":\"gamma\""));

    let o = cli(&["extract-terms", "--config", &config, "--abstract", "no-such-id"], "");
    assert_eq!(o.code, 3);
}

#[test]
fn transient_statuses_are_retried_over_http() {
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = hits.clone();
    let server = MockServer::start(move |_| match counter.fetch_add(1, Ordering::SeqCst) {
        0 | 1 => (429, String::new()),
        _ => (200, "0".into()),
    });
    std::env::set_var("JARGON_TEST_KEY_RETRY", "sk-retry");
    let config = ClientConfig {
        api_key_env: "JARGON_TEST_KEY_RETRY".into(),
        backoff: Duration::from_millis(1),
        requests_per_second: 1000.0,
        ..ClientConfig::default()
    };
    let transport = Arc::new(HttpTransport::new(server.url.clone(), Duration::from_secs(10)));
    let client = ChatClient::new(config.clone(), transport.clone(), ChatCache::in_memory());
    let ex = client.chat("familiarity.v1", "hello").unwrap();
    assert_eq!((ex.attempts, ex.response.text.as_str()), (3, "0"));

    let always_down = MockServer::start(|_| (503, String::new()));
    let transport = Arc::new(HttpTransport::new(always_down.url.clone(), Duration::from_secs(10)));
    let client = ChatClient::new(config.clone(), transport, ChatCache::in_memory());
    let err = client.chat("familiarity.v1", "hello").unwrap_err();
    assert!(matches!(err, Error::RetriesExhausted { attempts: 5, .. }), "{err}");
    assert_eq!(always_down.calls(), 5);

    let denied = MockServer::start(|_| (401, String::new()));
    let transport = Arc::new(HttpTransport::new(denied.url.clone(), Duration::from_secs(10)));
    let client = ChatClient::new(config, transport, ChatCache::in_memory());
    assert!(matches!(client.chat("familiarity.v1", "hello"), Err(Error::Auth(_))));
    assert_eq!(denied.calls(), 1);
}
