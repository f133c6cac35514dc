use std::path::{Path, PathBuf};

use reqwest::{Client, StatusCode};
use semcost_cli::backend::load_fixtures;
use semcost_cli::server::{router, AppState, ServerConfig};
use serde_json::{json, Value};

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn scenario(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(repo(&format!("scenarios/{name}.json"))).unwrap()).unwrap()
}

async fn spawn(config: ServerConfig) -> String {
    let state = AppState::new(config).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    format!("http://{addr}")
}

fn fixture_config(state_dir: Option<PathBuf>) -> ServerConfig {
    ServerConfig {
        state_dir,
        fixtures: load_fixtures(&[
            repo("scenarios/fixtures/workzone.json"),
            repo("scenarios/fixtures/workzone_failure.json"),
        ])
        .unwrap(),
        ..Default::default()
    }
}

async fn create(client: &Client, base: &str, name: &str) -> String {
    let res = client
        .post(format!("{base}/sessions"))
        .json(&json!({ "scenario": scenario(name) }))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::CREATED);
    res.json::<Value>().await.unwrap()["session_id"].as_str().unwrap().to_string()
}

async fn snapshot(client: &Client, base: &str, id: &str) -> Value {
    let res = client.get(format!("{base}/sessions/{id}")).send().await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    res.json().await.unwrap()
}

fn assert_error_shape(body: &Value, code: &str) {
    assert_eq!(body["code"], code, "{body}");
    assert!(body["message"].is_string(), "{body}");
    assert!(body.get("detail").is_some(), "{body}");
}

#[tokio::test]
async fn full_session_lifecycle() {
    let base = spawn(fixture_config(None)).await;
    let client = Client::new();
    let id = create(&client, &base, "workzone").await;

    let snap = snapshot(&client, &base, &id).await;
    assert_eq!(snap["session_id"], id.as_str());
    assert_eq!(snap["undo_depth"], 0);
    assert!(snap["last_plan"].is_null());
    assert_eq!(snap["error_log"].as_array().unwrap().len(), 0);

    let res = client.get(format!("{base}/sessions/{id}/path")).send().await.unwrap();
    assert_eq!(res.status(), StatusCode::CONFLICT);
    assert_error_shape(&res.json().await.unwrap(), "no_plan");

    let res = client
        .post(format!("{base}/sessions/{id}/prompt"))
        .json(&json!({ "text": "The work zone is busy today; proceed to your destination.", "backend": "fixture" }))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    let after: Value = res.json().await.unwrap();
    assert_eq!(after["undo_depth"], 1);
    assert_eq!(after["prompt_log"][0]["backend"], "fixture");

    let res = client.post(format!("{base}/sessions/{id}/plan")).send().await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    let plan: Value = res.json().await.unwrap();
    assert!(plan["metrics"]["length_m"].as_f64().unwrap() > 0.0);

    let res = client.get(format!("{base}/sessions/{id}/path")).send().await.unwrap();
    let path: Value = res.json().await.unwrap();
    assert_eq!(path["path"], plan["path"]);

    for kind in ["edf", "potential", "combined"] {
        let res = client
            .get(format!("{base}/sessions/{id}/field?kind={kind}"))
            .send()
            .await
            .unwrap();
        assert_eq!(res.status(), StatusCode::OK);
        let body: Value = res.json().await.unwrap();
        assert_eq!(body["kind"], kind);
        let (w, h) = (body["width"].as_u64().unwrap(), body["height"].as_u64().unwrap());
        assert_eq!(body["values"].as_array().unwrap().len() as u64, w * h);
    }
    let res = client.get(format!("{base}/sessions/{id}/field")).send().await.unwrap();
    assert_eq!(res.json::<Value>().await.unwrap()["kind"], "combined");

    let res = client.post(format!("{base}/sessions/{id}/undo")).send().await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
    let undone: Value = res.json().await.unwrap();
    assert_eq!(undone["undo_depth"], 0);
    assert!(undone["last_plan"].is_null());
    assert_eq!(undone["posteriors"], snap["posteriors"]);
}

#[tokio::test]
async fn errors_are_structured() {
    let base = spawn(ServerConfig::default()).await;
    let client = Client::new();
    let id = create(&client, &base, "cement").await;

    let res = client.post(format!("{base}/sessions/{id}/undo")).send().await.unwrap();
    assert_eq!(res.status(), StatusCode::CONFLICT);
    assert_error_shape(&res.json().await.unwrap(), "nothing_to_undo");

    let res = client
        .get(format!("{base}/sessions/{id}/field?kind=heat"))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::BAD_REQUEST);
    assert_error_shape(&res.json().await.unwrap(), "bad_request");

    let res = client.get(format!("{base}/sessions/nope")).send().await.unwrap();
    assert_eq!(res.status(), StatusCode::NOT_FOUND);
    assert_error_shape(&res.json().await.unwrap(), "not_found");

    let mut bad = scenario("cement");
    bad["start_cell"] = json!([400, 400]);
    let res = client
        .post(format!("{base}/sessions"))
        .json(&json!({ "scenario": bad }))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::UNPROCESSABLE_ENTITY);
    assert_error_shape(&res.json().await.unwrap(), "invalid_scenario");

    let res = client
        .post(format!("{base}/sessions/{id}/prompt"))
        .json(&json!({ "text": "anything", "backend": "fixture" }))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::BAD_GATEWAY);
    assert_error_shape(&res.json().await.unwrap(), "fixture_miss");

    let res = client
        .post(format!("{base}/sessions/{id}/prompt"))
        .json(&json!({ "text": "hi", "trust_n": -1.0 }))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::UNPROCESSABLE_ENTITY);

    if std::env::var("SEMCOST_LLM_KEY").is_err() {
        let res = client
            .post(format!("{base}/sessions/{id}/prompt"))
            .json(&json!({ "text": "hi", "backend": "http" }))
            .send()
            .await
            .unwrap();
        assert_eq!(res.status(), StatusCode::SERVICE_UNAVAILABLE);
        assert_error_shape(&res.json().await.unwrap(), "sensor_config");
    }

    let snap = snapshot(&client, &base, &id).await;
    assert_eq!(snap["undo_depth"], 0);
    let ops: Vec<_> = snap["error_log"].as_array().unwrap().iter().map(|e| e["operation"].clone()).collect();
    assert!(ops.contains(&json!("undo")));
    assert!(ops.contains(&json!("prompt")));
}

#[tokio::test]
async fn garbled_reply_leaves_session_untouched() {
    let base = spawn(fixture_config(None)).await;
    let client = Client::new();
    let id = create(&client, &base, "workzone").await;
    client.post(format!("{base}/sessions/{id}/plan")).send().await.unwrap();
    let before = snapshot(&client, &base, &id).await;

    let res = client
        .post(format!("{base}/sessions/{id}/prompt"))
        .json(&json!({
            "text": "The work zone sensor feed is garbled today; proceed to your destination.",
            "backend": "fixture"
        }))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), StatusCode::BAD_GATEWAY);
    let err: Value = res.json().await.unwrap();
    assert_error_shape(&err, "sensor_error");
    assert!(err["detail"]["raw"].is_string());

    let after = snapshot(&client, &base, &id).await;
    for key in ["posteriors", "prompt_log", "last_plan", "undo_depth"] {
        assert_eq!(after[key], before[key], "{key} changed");
    }
    let log = after["error_log"].as_array().unwrap();
    assert_eq!(log.len(), 1);
    assert_eq!(log[0]["error"]["code"], "sensor_error");
}

#[tokio::test]
async fn sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let client = Client::new();
    let base = spawn(fixture_config(Some(dir.path().to_path_buf()))).await;
    let id = create(&client, &base, "workzone").await;
    client
        .post(format!("{base}/sessions/{id}/prompt"))
        .json(&json!({ "text": "The work zone is empty today; proceed to your destination.", "trust_n": 10 }))
        .send()
        .await
        .unwrap();
    client.post(format!("{base}/sessions/{id}/plan")).send().await.unwrap();
    let before = snapshot(&client, &base, &id).await;
    assert!(dir.path().join(format!("{id}.json")).exists());

    let base = spawn(fixture_config(Some(dir.path().to_path_buf()))).await;
    let after = snapshot(&client, &base, &id).await;
    assert_eq!(after, before);
    let res = client.post(format!("{base}/sessions/{id}/undo")).send().await.unwrap();
    assert_eq!(res.status(), StatusCode::OK);
}
