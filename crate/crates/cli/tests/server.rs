use std::path::Path;

use phonosem_cli::server::{self, StudyApp, TOKEN_HEADER};
use phonosem_core::behavior::{
    analyze_study, derive_participants, parse_trials, Choice, Modality, Pole, StudyDefinition,
    StudyItem,
};
use phonosem_core::ratings::Dimension;
use serde_json::{json, Value};

fn item(pair_id: &str, dim: Dimension, predicted: Choice) -> StudyItem {
    StudyItem {
        pair_id: pair_id.into(),
        dimension: dim,
        prompt_pole: Pole::High,
        stimulus_a: format!("{pair_id}-a"),
        stimulus_b: format!("{pair_id}-b"),
        audio_a: None,
        audio_b: None,
        predicted,
        is_attention_check: false,
    }
}

/// 9 dimensions x 2 pairs, two sets of one pair per dimension, one attention check.
fn definition(token: Option<&str>) -> StudyDefinition {
    let mut items = Vec::new();
    for d in Dimension::ALL {
        items.push(item(&format!("{d}.s01"), d, Choice::A));
        items.push(item(&format!("{d}.s02"), d, Choice::B));
    }
    let mut check = item("check.size", Dimension::Size, Choice::B);
    check.stimulus_a = "tiny".into();
    check.stimulus_b = "enormous".into();
    StudyDefinition {
        study_id: "pilot".into(),
        language: "en".into(),
        modality: Modality::Text,
        token: token.map(str::to_string),
        n_sets: 2,
        per_dimension_quota: 1,
        seed: 5,
        items,
        attention_checks: vec![check],
    }
}

struct Harness {
    base: String,
    agent: ureq::Agent,
    token: Option<String>,
    _rt: tokio::runtime::Runtime,
}

impl Harness {
    fn start(def: StudyDefinition, log: &Path) -> Harness {
        let rt = tokio::runtime::Runtime::new().unwrap();
        let token = def.token.clone();
        let app = StudyApp::new(def, log.to_path_buf()).unwrap();
        let (addr, _) = rt
            .block_on(server::spawn(app, None, "127.0.0.1:0"))
            .unwrap();
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        Harness {
            base: format!("http://{addr}"),
            agent,
            token,
            _rt: rt,
        }
    }

    fn get(&self, path: &str) -> (u16, String) {
        let mut req = self.agent.get(format!("{}{path}", self.base));
        if let Some(t) = &self.token {
            req = req.header(TOKEN_HEADER, t);
        }
        let mut resp = req.call().unwrap();
        (
            resp.status().as_u16(),
            resp.body_mut().read_to_string().unwrap(),
        )
    }

    fn post(&self, path: &str, body: &str) -> (u16, Value) {
        let mut req = self
            .agent
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json");
        if let Some(t) = &self.token {
            req = req.header(TOKEN_HEADER, t);
        }
        let mut resp = req.send(body).unwrap();
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::Null))
    }

    fn get_json(&self, path: &str) -> (u16, Value) {
        let (s, t) = self.get(path);
        (s, serde_json::from_str(&t).unwrap_or(Value::Null))
    }

    fn new_session(&self, participant: Option<&str>) -> Value {
        let body = match participant {
            Some(p) => json!({ "participant_id": p }).to_string(),
            None => String::new(),
        };
        let (status, v) = self.post("/api/session", &body);
        assert_eq!(status, 200, "{v}");
        v
    }

    /// Answers every remaining trial with `pick(trial)`; returns the number answered.
    fn complete(&self, session_id: &str, pick: impl Fn(&Value) -> &'static str) -> usize {
        let mut answered = 0;
        loop {
            let (status, v) = self.get_json(&format!("/api/trial?session={session_id}"));
            assert_eq!(status, 200, "{v}");
            if v["done"] == true {
                assert_eq!(v["completion_code"].as_str().unwrap().len(), 8);
                return answered;
            }
            let body = json!({
                "session_id": session_id,
                "index": v["index"],
                "chosen": pick(&v["trial"]),
                "pair_id": v["trial"]["pair_id"],
            });
            let (status, r) = self.post("/api/trial", &body.to_string());
            assert_eq!(status, 200, "{r}");
            assert_eq!(r["duplicate"], false);
            answered += 1;
        }
    }
}

#[test]
fn sessions_alternate_between_sets() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::start(definition(None), &dir.path().join("trials.log"));
    let sets: Vec<u64> = (0..4)
        .map(|_| h.new_session(None)["set"].as_u64().unwrap())
        .collect();
    assert_eq!(sets, [1, 2, 1, 2]);
    let s = h.new_session(Some("p-7"));
    assert_eq!(s["total"], 10);
    let again = h.new_session(Some("p-7"));
    assert_eq!(again["session_id"], s["session_id"]);
    assert_eq!(again["resumed"], true);
}

#[test]
fn malformed_requests_get_machine_readable_4xx() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::start(definition(None), &dir.path().join("trials.log"));
    let (status, v) = h.post(
        "/api/trial",
        r#"{"session_id":"nope","index":0,"chosen":"A"}"#,
    );
    assert_eq!(status, 404);
    assert_eq!(v["error"], "unknown_session");

    let (status, v) = h.post("/api/trial", "{not json");
    assert_eq!(status, 400);
    assert_eq!(v["error"], "malformed_body");

    let sid = h.new_session(None)["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    let (status, v) = h.post(
        "/api/trial",
        &json!({"session_id": sid, "index": 0, "chosen": "C"}).to_string(),
    );
    assert_eq!(status, 400);
    assert_eq!(v["error"], "malformed_body");

    let (status, v) = h.post(
        "/api/trial",
        &json!({"session_id": sid, "index": 99, "chosen": "A"}).to_string(),
    );
    assert_eq!(status, 422);
    assert_eq!(v["error"], "index_out_of_range");

    let (status, v) = h.post(
        "/api/trial",
        &json!({"session_id": sid, "index": 3, "chosen": "A"}).to_string(),
    );
    assert_eq!(status, 409);
    assert_eq!(v["error"], "out_of_order");

    let (status, v) = h.get_json("/api/trial?session=missing");
    assert_eq!(status, 404);
    assert_eq!(v["error"], "unknown_session");

    let (status, v) = h.get_json("/api/trial");
    assert_eq!(status, 400);
    assert_eq!(v["error"], "missing_session");
}

#[test]
fn duplicate_answers_are_idempotent_and_conflicts_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::start(definition(None), &dir.path().join("trials.log"));
    let sid = h.new_session(None)["session_id"]
        .as_str()
        .unwrap()
        .to_string();
    let answer = |c: &str| json!({"session_id": sid, "index": 0, "chosen": c}).to_string();
    let (status, v) = h.post("/api/trial", &answer("A"));
    assert_eq!((status, v["duplicate"].clone()), (200, Value::Bool(false)));
    let (status, v) = h.post("/api/trial", &answer("A"));
    assert_eq!((status, v["duplicate"].clone()), (200, Value::Bool(true)));
    let (status, v) = h.post("/api/trial", &answer("B"));
    assert_eq!(status, 409);
    assert_eq!(v["error"], "already_answered");
    let (_, export) = h.get("/api/export");
    assert_eq!(parse_trials("export", &export).unwrap().len(), 1);
}

#[test]
fn token_is_required_when_configured() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::start(definition(Some("s3cret")), &dir.path().join("trials.log"));
    h.new_session(None);
    let mut resp = h
        .agent
        .post(format!("{}/api/session", h.base))
        .send("")
        .unwrap();
    assert_eq!(resp.status().as_u16(), 401);
    let v: Value = serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap();
    assert_eq!(v["error"], "unauthorized");
    let resp = h
        .agent
        .get(format!("{}/api/export?token=s3cret", h.base))
        .call()
        .unwrap();
    assert_eq!(resp.status().as_u16(), 200);
}

#[test]
fn three_sessions_export_round_trips_through_behavior() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("trials.log");
    let h = Harness::start(definition(None), &log);
    let predicted = |t: &Value| -> &'static str {
        // The server never reveals predictions, so score against the fixture.
        let pair = t["pair_id"].as_str().unwrap();
        if pair.ends_with("s01") {
            "A"
        } else {
            "B"
        }
    };
    let mut total = 0;
    for p in ["p1", "p2", "p3"] {
        let sid = h.new_session(Some(p))["session_id"]
            .as_str()
            .unwrap()
            .to_string();
        total += h.complete(&sid, predicted);
    }
    assert_eq!(total, 30);
    let (status, export) = h.get("/api/export");
    assert_eq!(status, 200);
    let trials =
        parse_trials("export", &export).expect("export parses with zero validation errors");
    assert_eq!(trials.len(), 30);
    assert_eq!(trials.iter().filter(|t| t.is_attention_check).count(), 3);
    let compacted = std::fs::read_to_string(server::export_path(&log)).unwrap();
    assert_eq!(compacted, export);

    let participants = derive_participants(&trials);
    assert!(participants.iter().all(|p| p.attention_pass));
    let result = analyze_study(&trials, &participants).unwrap();
    assert_eq!(result.overall.n, 27);
    assert_eq!(result.overall.accuracy, 1.0);

    let (_, ptab) = h.get("/api/export/participants");
    assert!(ptab.contains("p1\ten\t1\ttrue"), "{ptab}");
    assert!(ptab.contains("p2\ten\t2\ttrue"), "{ptab}");
}

#[test]
fn concurrent_sessions_lose_no_trials() {
    let dir = tempfile::tempdir().unwrap();
    let h = std::sync::Arc::new(Harness::start(
        definition(None),
        &dir.path().join("trials.log"),
    ));
    let workers: Vec<_> = (0..6)
        .map(|i| {
            let h = h.clone();
            std::thread::spawn(move || {
                let sid = h.new_session(Some(&format!("w{i}")))["session_id"]
                    .as_str()
                    .unwrap()
                    .to_string();
                h.complete(&sid, |_| "A")
            })
        })
        .collect();
    let answered: usize = workers.into_iter().map(|w| w.join().unwrap()).sum();
    let (_, export) = h.get("/api/export");
    assert_eq!(parse_trials("export", &export).unwrap().len(), answered);
    assert_eq!(answered, 60);
}

#[test]
fn restart_resumes_at_first_unanswered_trial() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("trials.log");
    let sid;
    {
        let h = Harness::start(definition(None), &log);
        sid = h.new_session(Some("r1"))["session_id"]
            .as_str()
            .unwrap()
            .to_string();
        for i in 0..4 {
            let (s, _) = h.post(
                "/api/trial",
                &json!({"session_id": sid, "index": i, "chosen": "B"}).to_string(),
            );
            assert_eq!(s, 200);
        }
    }
    let h = Harness::start(definition(None), &log);
    let (status, v) = h.get_json(&format!("/api/trial?session={sid}"));
    assert_eq!(status, 200);
    assert_eq!(v["index"], 4);
    let (_, v) = h.get_json(&format!("/api/trial?session={sid}&index=1"));
    assert_eq!(v["answered"], "B");
    assert_eq!(h.new_session(None)["set"], 2);
}
