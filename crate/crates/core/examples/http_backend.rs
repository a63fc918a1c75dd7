//! The chat-completions backend. With ROBOCHAR_API_KEY set this calls the
//! configured endpoint; otherwise it talks to a local stand-in server so the
//! example runs offline.

use axum::routing::post;
use axum::{Json, Router};
use robochar::appraisal::{appraise, HumanInput};
use robochar::llm::{BackendConfig, BackendKind, HttpBackend};
use robochar::persona::PersonalityProfile;
use serde_json::{json, Value};

async fn stand_in(Json(req): Json<Value>) -> Json<Value> {
    let prompt = req["messages"][1]["content"].as_str().unwrap_or_default();
    eprintln!(
        "stand-in received {} prompt bytes for model {}",
        prompt.len(),
        req["model"]
    );
    let content = r#"{"relevance":0.9,"valence":-0.5,"impact":0.7,"inferred_intent":"worried about the fluids final","rationale":"stress cue"}"#;
    Json(json!({ "choices": [{ "message": { "role": "assistant", "content": content } }] }))
}

fn main() {
    let mut config = BackendConfig {
        kind: BackendKind::Http,
        ..BackendConfig::default()
    };
    let runtime = tokio::runtime::Runtime::new().unwrap();
    if std::env::var(&config.api_key_env).is_err() {
        let listener = runtime
            .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
            .unwrap();
        config.endpoint = format!(
            "http://{}/v1/chat/completions",
            listener.local_addr().unwrap()
        );
        let app = Router::new().route("/v1/chat/completions", post(stand_in));
        runtime.spawn(async move { axum::serve(listener, app).await });
    }
    println!("endpoint: {}", config.endpoint);

    let backend = HttpBackend::new(config.clone());
    let input = HumanInput::new(
        "It's just too much to review for the fluids final.",
        &["looks concerned and stressed"],
        1,
    );
    match appraise(
        &input,
        &PersonalityProfile::bella(),
        None,
        true,
        &backend,
        config.retry_budget,
    ) {
        Ok(out) => println!("{:#?}\nattempts: {}", out.value, out.attempts),
        Err(e) => println!("backend error: {e}"),
    }
}
