//! Run the `/v1` API in-process on an ephemeral port and drive one session
//! through it with a plain HTTP client.

use robochar::data;
use robochar::server::{router, AppState, ServerOptions};
use serde_json::{json, Value};

fn call(agent: &ureq::Agent, method: &str, url: &str, body: Option<Value>) -> Value {
    let mut resp = match (method, body) {
        ("POST", Some(b)) => agent
            .post(url)
            .header("content-type", "application/json")
            .send(b.to_string()),
        ("POST", None) => agent.post(url).send_empty(),
        _ => agent.get(url).call(),
    }
    .unwrap();
    serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap()
}

fn main() {
    let runtime = tokio::runtime::Runtime::new().unwrap();
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind("127.0.0.1:0"))
        .unwrap();
    let base = format!("http://{}/v1", listener.local_addr().unwrap());
    let app = router(AppState::new(ServerOptions::default()));
    runtime.spawn(async move { axum::serve(listener, app).await });

    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .build()
        .into();
    let config: Value = serde_json::from_str(data::BELLA_CONFIG_JSON).unwrap();
    let id = call(&agent, "POST", &format!("{base}/sessions"), Some(config))["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    println!("session {id}");

    let turn = call(
        &agent,
        "POST",
        &format!("{base}/sessions/{id}/turns"),
        Some(json!({
            "utterance": "It's just too much to review for the fluids final. Why is Mike giving us such a hard time?",
            "cues": ["looks concerned and stressed"],
            "day": 1
        })),
    );
    for stage in turn["trace"].as_array().unwrap() {
        println!(
            "  {:<15} {}",
            stage["stage"].as_str().unwrap(),
            stage["note"].as_str().unwrap_or("")
        );
    }
    println!(
        "  -> {} \"{}\"",
        turn["selection"]["action_id"],
        turn["selection"]["utterance"].as_str().unwrap()
    );

    println!(
        "state:  {}",
        call(&agent, "GET", &format!("{base}/sessions/{id}/state"), None)["emotion"]
    );
    println!(
        "end-day: {}",
        call(
            &agent,
            "POST",
            &format!("{base}/sessions/{id}/end-day"),
            None
        )
    );
    let memory = call(&agent, "GET", &format!("{base}/sessions/{id}/memory"), None);
    println!(
        "memory: {} episodic, {} semantic",
        memory["episodic"].as_array().unwrap().len(),
        memory["semantic"].as_array().unwrap().len()
    );
}
