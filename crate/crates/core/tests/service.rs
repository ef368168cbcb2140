use std::sync::Arc;
use std::time::Duration;

use muas_core::datasets::{generate_sodium, priors_from_dag, write_csv};
use muas_core::pipeline::Engine;
use muas_core::service::{router, AppState, ServiceConfig};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

struct Server {
    base: String,
    client: Client,
    _dir: tempfile::TempDir,
}

fn start(async_after: Duration, max_body_bytes: usize) -> Server {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        listen: "127.0.0.1:0".parse().unwrap(),
        session_root: dir.path().to_path_buf(),
        async_after,
        max_body_bytes,
    };
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind(config.listen).await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            let app = router(AppState::new(config, Arc::new(Engine::default())));
            axum::serve(listener, app).await.unwrap();
        });
    });
    let addr = rx.recv().unwrap();
    Server {
        base: format!("http://{addr}"),
        client: Client::builder().timeout(Duration::from_secs(120)).build().unwrap(),
        _dir: dir,
    }
}

fn local() -> Server {
    start(Duration::from_secs(60), 64 << 20)
}

impl Server {
    fn call(&self, method: &str, path: &str, body: Option<Value>) -> (StatusCode, Value) {
        let url = format!("{}{}", self.base, path);
        let req = match method {
            "GET" => self.client.get(url),
            "POST" => self.client.post(url),
            "PATCH" => self.client.patch(url),
            _ => unreachable!(),
        };
        let req = match body {
            Some(b) => req.json(&b),
            None => req,
        };
        let resp = req.send().unwrap();
        let status = resp.status();
        let text = resp.text().unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }

    fn session(&self) -> String {
        let (s, v) = self.call("POST", "/sessions", None);
        assert_eq!(s, StatusCode::CREATED);
        v["session_id"].as_str().unwrap().to_string()
    }

    fn step_count(&self, id: &str) -> usize {
        let (s, v) = self.call("GET", &format!("/sessions/{id}"), None);
        assert_eq!(s, StatusCode::OK, "{v}");
        v["steps"].as_array().unwrap().len()
    }
}

fn sodium(n: usize, seed: u64) -> (String, Value) {
    let (ds, truth) = generate_sodium(n, seed).unwrap();
    let mut buf = Vec::new();
    write_csv(&ds, &mut buf).unwrap();
    let priors = serde_json::to_value(priors_from_dag(&truth.true_dag, 0.9)).unwrap();
    (String::from_utf8(buf).unwrap(), priors)
}

fn code(v: &Value) -> &str {
    v["code"].as_str().unwrap_or("")
}

#[test]
fn full_pipeline_over_http() {
    let srv = local();
    let id = srv.session();
    let p = |s: &str| format!("/sessions/{id}/{s}");
    let (csv, priors) = sodium(2000, 7);

    let (s, v) = srv.call("POST", &p("data"), Some(json!({"csv": csv, "treatment": "W", "outcome": "BP"})));
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["outputs"]["n_rows"], 2000);
    let (s, v) = srv.call("POST", &p("discover"), Some(json!({"method": "pc"})));
    assert_eq!(s, StatusCode::OK, "{v}");
    let (s, v) = srv.call("POST", &p("orient"), Some(json!({"provider": {"kind": "file", "priors": priors}})));
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(srv.step_count(&id), 3);

    let (s, v) = srv.call("GET", &p("adjustment-sets?max_size=4"), None);
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["outputs"]["status"], "ok");
    assert_eq!(v["outputs"]["muas"]["chosen"]["Z"], json!(["Age"]));
    assert_eq!(srv.step_count(&id), 4);

    let (s, v) = srv.call("POST", &p("whatif/flip"), Some(json!({"edge": "Age->W"})));
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(srv.step_count(&id), 4, "what-if must not record a step");

    let (s, v) = srv.call("POST", &p("estimate"), Some(json!({"estimator": "s_learner", "n_runs": 3})));
    assert_eq!(s, StatusCode::OK, "{v}");
    let ate = v["outputs"]["result"]["ate_mean"].as_f64().unwrap();
    assert!((ate - 1.05).abs() < 0.2, "{ate}");
    assert_eq!(srv.step_count(&id), 5);

    let (s, v) = srv.call("GET", &p("assumptions"), None);
    assert_eq!(s, StatusCode::OK);
    let names: Vec<&str> = v["assumptions"]
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|a| a["name"].as_str())
        .collect();
    for n in ["positivity", "no_interference", "consistency"] {
        assert!(names.contains(&n), "{n} missing from {names:?}");
    }

    let (s, v) = srv.call("GET", &p("replay"), None);
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["ok"], true, "{v}");

    let (s, v) = srv.call("GET", &p("report"), None);
    assert_eq!(s, StatusCode::OK);
    assert!(v["decision_log"].is_array() || v["decision_log"].is_object(), "{v}");

    let (s, _) = srv.call("POST", &p("trackback"), Some(json!({"step_id": 3})));
    assert_eq!(s, StatusCode::OK);
    let (s, _) = srv.call("POST", &p("close"), None);
    assert_eq!(s, StatusCode::OK);
    let (s, v) = srv.call("POST", &p("discover"), None);
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(code(&v), "SessionClosed");
}

#[test]
fn error_statuses() {
    let srv = local();
    let (s, v) = srv.call("GET", "/sessions/does-not-exist", None);
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(code(&v), "UnknownSession");

    let id = srv.session();
    let p = |s: &str| format!("/sessions/{id}/{s}");
    let (s, v) = srv.call("POST", &p("discover"), None);
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(code(&v), "OutOfOrder");

    let (csv, _) = sodium(300, 1);
    let (s, v) = srv.call("POST", &p("data"), Some(json!({"csv": csv, "treatment": "BP", "outcome": "W"})));
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(code(&v), "TreatmentNotBinary");
    assert_eq!(srv.step_count(&id), 0);

    let (s, _) = srv.call("POST", &p("data"), Some(json!({"csv": csv, "treatment": "W", "outcome": "BP"})));
    assert_eq!(s, StatusCode::OK);
    let (s, v) = srv.call("POST", &p("discover"), Some(json!({"method": "nope"})));
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(code(&v), "UnknownPlugin");

    let (s, v) = srv.call("GET", "/no/such/route", None);
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(code(&v), "NotFound");
    assert_eq!(srv.step_count(&id), 1);
}

#[test]
fn cycle_override_is_rejected() {
    let srv = local();
    let id = srv.session();
    let p = |s: &str| format!("/sessions/{id}/{s}");
    let (csv, priors) = sodium(2000, 7);
    srv.call("POST", &p("data"), Some(json!({"csv": csv, "treatment": "W", "outcome": "BP"})));
    srv.call("POST", &p("discover"), None);
    let (s, v) = srv.call("POST", &p("orient"), Some(json!({"provider": {"kind": "file", "priors": priors}})));
    assert_eq!(s, StatusCode::OK, "{v}");
    let before = srv.step_count(&id);

    let (s, v) = srv.call("PATCH", &p("edges"), Some(json!({"from": "BP", "to": "Age"})));
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    assert_eq!(code(&v), "WouldCreateCycle");
    let (s, v) = srv.call("POST", &p("whatif/flip"), Some(json!({"edge": "Age->BP"})));
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{v}");
    assert_eq!(srv.step_count(&id), before);

    let (s, v) = srv.call("PATCH", &p("edges"), Some(json!({"from": "Proteinuria", "to": "BP", "confidence": 0.7})));
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(srv.step_count(&id), before + 1);
}

#[test]
fn raw_csv_upload_and_body_limit() {
    let srv = start(Duration::from_secs(60), 32 << 10);
    let id = srv.session();
    let (csv, _) = sodium(2000, 3);
    let resp = srv
        .client
        .post(format!("{}/sessions/{id}/data?treatment=W&outcome=BP", srv.base))
        .header("content-type", "text/csv")
        .body(csv)
        .send()
        .unwrap();
    assert_eq!(resp.status(), StatusCode::PAYLOAD_TOO_LARGE);
    let v: Value = resp.json().unwrap();
    assert_eq!(code(&v), "PayloadTooLarge");

    let (small, _) = sodium(120, 3);
    let resp = srv
        .client
        .post(format!("{}/sessions/{id}/data?treatment=W&outcome=BP", srv.base))
        .header("content-type", "text/csv")
        .body(small)
        .send()
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert_eq!(srv.step_count(&id), 1);
}

#[test]
fn slow_requests_become_jobs() {
    let srv = start(Duration::from_millis(1), 64 << 20);
    let id = srv.session();
    let (csv, _) = sodium(3000, 5);
    let (s, v) = srv.call("POST", &format!("/sessions/{id}/data"), Some(json!({"csv": csv, "treatment": "W", "outcome": "BP"})));
    let body = if s == StatusCode::ACCEPTED {
        let poll = v["poll"].as_str().unwrap().to_string();
        let mut out = None;
        for _ in 0..600 {
            let (s, v) = srv.call("GET", &poll, None);
            if s != StatusCode::ACCEPTED {
                assert_eq!(s, StatusCode::OK, "{v}");
                out = Some(v);
                break;
            }
            std::thread::sleep(Duration::from_millis(50));
        }
        out.expect("job finished")
    } else {
        assert_eq!(s, StatusCode::OK);
        v
    };
    assert_eq!(body["outputs"]["n_rows"], 3000);
    let (s, v) = srv.call("GET", "/jobs/nope", None);
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(code(&v), "NotFound");
}

#[test]
fn spec_lists_routes_and_error_codes() {
    let srv = local();
    let (s, v) = srv.call("GET", "/spec", None);
    assert_eq!(s, StatusCode::OK);
    let paths = v["paths"].as_object().unwrap();
    for r in ["/sessions", "/sessions/{id}/estimate", "/sessions/{id}/adjustment-sets", "/jobs/{token}"] {
        assert!(paths.contains_key(r), "{r}");
    }
    let text = v.to_string();
    assert!(text.contains("WouldCreateCycle") && text.contains("OutOfOrder"));
}
