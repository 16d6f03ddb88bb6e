//! Study server: hands out counterbalanced trial sequences and collects
//! forced-choice answers into an append-only log.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{mpsc, oneshot, Mutex};
use tower_http::services::ServeDir;

use phonosem_core::behavior::{
    parse_trials, participants_table, trial_line, trials_header, trials_table, Choice, Modality,
    ParticipantRecord, StudyDefinition, StudyItem, TrialRecord,
};
use phonosem_core::seed::short_hash;
use phonosem_core::tsv;

pub const TOKEN_HEADER: &str = "x-study-token";

#[derive(Debug)]
struct Session {
    session_id: String,
    participant_id: String,
    language: String,
    /// Zero-based counterbalance set.
    set: usize,
    trials: Vec<StudyItem>,
    answers: Vec<Option<Choice>>,
}

impl Session {
    fn next_unanswered(&self) -> Option<usize> {
        self.answers.iter().position(Option::is_none)
    }
}

/// One line of the session log, enough to rebuild a session after restart.
#[derive(Debug, Serialize, Deserialize)]
struct SessionLine {
    session_id: String,
    participant_id: String,
    language: String,
    set: usize,
}

enum WriterCmd {
    Session(SessionLine, oneshot::Sender<std::io::Result<()>>),
    Trial(TrialRecord, oneshot::Sender<std::io::Result<()>>),
    Export(oneshot::Sender<std::result::Result<String, String>>),
}

#[derive(Default)]
struct Sessions {
    by_id: HashMap<String, Session>,
    by_participant: HashMap<String, String>,
    created: usize,
}

struct Inner {
    def: StudyDefinition,
    sets: Vec<Vec<StudyItem>>,
    sessions: Mutex<Sessions>,
    writer: mpsc::Sender<WriterCmd>,
}

#[derive(Clone)]
pub struct StudyApp(Arc<Inner>);

fn session_log_path(trial_log: &Path) -> PathBuf {
    trial_log.with_extension("sessions.jsonl")
}

/// Compacted export written alongside the log (`trials.log` -> `trials.tsv`).
pub fn export_path(trial_log: &Path) -> PathBuf {
    trial_log.with_extension("tsv")
}

fn open_append(path: &Path) -> std::io::Result<std::fs::File> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    OpenOptions::new().create(true).append(true).open(path)
}

/// The only code that touches the log files. Runs on its own thread so that
/// appends and exports are strictly serialized.
fn writer_loop(trial_log: PathBuf, mut rx: mpsc::Receiver<WriterCmd>) {
    let session_log = session_log_path(&trial_log);
    while let Some(cmd) = rx.blocking_recv() {
        match cmd {
            WriterCmd::Session(line, ack) => {
                let res = open_append(&session_log).and_then(|mut f| {
                    let mut text = serde_json::to_string(&line).expect("session line serializes");
                    text.push('\n');
                    f.write_all(text.as_bytes())?;
                    f.sync_data()
                });
                let _ = ack.send(res);
            }
            WriterCmd::Trial(record, ack) => {
                let res = open_append(&trial_log).and_then(|mut f| {
                    if f.metadata()?.len() == 0 {
                        f.write_all(trials_header().as_bytes())?;
                    }
                    f.write_all(trial_line(&record).as_bytes())?;
                    f.sync_data()
                });
                let _ = ack.send(res);
            }
            WriterCmd::Export(reply) => {
                let res = read_log(&trial_log)
                    .map_err(|e| e.to_string())
                    .and_then(|trials| {
                        let text = trials_table(&trials).render();
                        tsv::write_file(&export_path(&trial_log), text.as_bytes())
                            .map_err(|e| e.to_string())?;
                        Ok(text)
                    });
                let _ = reply.send(res);
            }
        }
    }
}

fn read_log(path: &Path) -> phonosem_core::Result<Vec<TrialRecord>> {
    match std::fs::read_to_string(path) {
        Ok(text) if !text.is_empty() => parse_trials(&path.display().to_string(), &text),
        Ok(_) => Ok(Vec::new()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(phonosem_core::Error::io(path, e)),
    }
}

impl StudyApp {
    /// Builds the app, replaying any existing logs so interrupted sessions resume.
    pub fn new(def: StudyDefinition, trial_log: PathBuf) -> Result<StudyApp> {
        def.validate()?;
        let sets = def.build_sets()?;
        let mut sessions = Sessions::default();
        let session_log = session_log_path(&trial_log);
        if session_log.exists() {
            let text = std::fs::read_to_string(&session_log)
                .with_context(|| format!("reading {}", session_log.display()))?;
            for (i, line) in text
                .lines()
                .enumerate()
                .filter(|(_, l)| !l.trim().is_empty())
            {
                let s: SessionLine = serde_json::from_str(line).with_context(|| {
                    format!(
                        "{}:{}: malformed session line",
                        session_log.display(),
                        i + 1
                    )
                })?;
                anyhow::ensure!(
                    s.set < sets.len(),
                    "{}: session {} has unknown set",
                    session_log.display(),
                    s.session_id
                );
                let trials = def.session_trials(&sets[s.set], &s.session_id);
                sessions
                    .by_participant
                    .insert(s.participant_id.clone(), s.session_id.clone());
                sessions.by_id.insert(
                    s.session_id.clone(),
                    Session {
                        answers: vec![None; trials.len()],
                        trials,
                        session_id: s.session_id,
                        participant_id: s.participant_id,
                        language: s.language,
                        set: s.set,
                    },
                );
                sessions.created += 1;
            }
        }
        for record in read_log(&trial_log)? {
            let Some(sid) = sessions.by_participant.get(&record.participant_id).cloned() else {
                continue;
            };
            let session = sessions
                .by_id
                .get_mut(&sid)
                .expect("indexed session exists");
            if let Some(i) = session
                .trials
                .iter()
                .position(|t| t.pair_id == record.pair_id)
            {
                session.answers[i] = Some(record.chosen);
            }
        }
        let (tx, rx) = mpsc::channel(256);
        std::thread::Builder::new()
            .name("trial-writer".into())
            .spawn(move || writer_loop(trial_log, rx))
            .context("starting trial writer")?;
        Ok(StudyApp(Arc::new(Inner {
            def,
            sets,
            sessions: Mutex::new(sessions),
            writer: tx,
        })))
    }

    pub fn router(&self, assets: Option<&Path>) -> Router {
        let api = Router::new()
            .route("/api/session", post(create_session))
            .route("/api/trial", get(next_trial).post(answer_trial))
            .route("/api/export", get(export_trials))
            .route("/api/export/participants", get(export_participants))
            .route("/api/study", get(study_info))
            .with_state(self.clone());
        match assets {
            Some(dir) => api.fallback_service(ServeDir::new(dir)),
            None => api.fallback(|| async {
                ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
            }),
        }
    }
}

/// Binds `addr` and serves until the task is dropped; returns the bound address.
pub async fn spawn(
    app: StudyApp,
    assets: Option<PathBuf>,
    addr: &str,
) -> Result<(SocketAddr, tokio::task::JoinHandle<std::io::Result<()>>)> {
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    let local = listener.local_addr()?;
    let router = app.router(assets.as_deref());
    let handle = tokio::spawn(async move { axum::serve(listener, router).await });
    Ok((local, handle))
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> ApiError {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", message)
    }

    fn unknown_session(id: &str) -> ApiError {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_session",
            format!("no session `{id}`"),
        )
    }

    fn internal(message: impl Into<String>) -> ApiError {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "write_failed", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.code, "message": self.message })),
        )
            .into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn check_token(app: &StudyApp, headers: &HeaderMap, query_token: Option<&str>) -> ApiResult<()> {
    let Some(expected) = &app.0.def.token else {
        return Ok(());
    };
    let given = headers
        .get(TOKEN_HEADER)
        .and_then(|v| v.to_str().ok())
        .or(query_token);
    if given == Some(expected.as_str()) {
        Ok(())
    } else {
        Err(ApiError::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "missing or wrong study token",
        ))
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(e.to_string()))
}

fn clean_field(name: &str, value: &str) -> ApiResult<()> {
    if value.is_empty() || value.len() > 128 || value.contains(['\t', '\n', '\r']) {
        return Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "invalid_field",
            format!("{name} must be 1-128 characters without tabs or newlines"),
        ));
    }
    Ok(())
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionRequest {
    participant_id: Option<String>,
    language: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
struct TokenQuery {
    token: Option<String>,
}

fn unix_now() -> String {
    let d = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or_default();
    format!("unix:{}.{:03}", d.as_secs(), d.subsec_millis())
}

fn completion_code(app: &StudyApp, session_id: &str) -> String {
    short_hash(format!("{}|{session_id}", app.0.def.study_id).as_bytes())[..8].to_uppercase()
}

async fn study_info(
    State(app): State<StudyApp>,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
) -> ApiResult<Json<serde_json::Value>> {
    check_token(&app, &headers, q.token.as_deref())?;
    let def = &app.0.def;
    Ok(Json(json!({
        "study_id": def.study_id,
        "language": def.language,
        "modality": def.modality,
        "n_sets": app.0.sets.len(),
        "trials_per_session": app.0.sets.first().map_or(0, Vec::len),
    })))
}

async fn create_session(
    State(app): State<StudyApp>,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    check_token(&app, &headers, q.token.as_deref())?;
    let req: SessionRequest = if body.iter().all(u8::is_ascii_whitespace) {
        SessionRequest::default()
    } else {
        parse_body(&body)?
    };
    let mut sessions = app.0.sessions.lock().await;
    if let Some(pid) = &req.participant_id {
        clean_field("participant_id", pid)?;
        if let Some(sid) = sessions.by_participant.get(pid) {
            let s = &sessions.by_id[sid];
            return Ok(Json(session_json(&app, s, true)));
        }
    }
    let ordinal = sessions.created;
    let session_id =
        short_hash(format!("{}|{ordinal}|{}", app.0.def.study_id, unix_now()).as_bytes());
    let participant_id = req.participant_id.unwrap_or_else(|| session_id.clone());
    let language = req.language.unwrap_or_else(|| app.0.def.language.clone());
    clean_field("language", &language)?;
    let set = ordinal % app.0.sets.len();
    let line = SessionLine {
        session_id: session_id.clone(),
        participant_id: participant_id.clone(),
        language: language.clone(),
        set,
    };
    let (ack, done) = oneshot::channel();
    app.0
        .writer
        .send(WriterCmd::Session(line, ack))
        .await
        .map_err(|_| ApiError::internal("writer stopped"))?;
    done.await
        .map_err(|_| ApiError::internal("writer stopped"))?
        .map_err(|e| ApiError::internal(e.to_string()))?;
    let trials = app.0.def.session_trials(&app.0.sets[set], &session_id);
    let session = Session {
        answers: vec![None; trials.len()],
        trials,
        session_id: session_id.clone(),
        participant_id: participant_id.clone(),
        language,
        set,
    };
    let body = session_json(&app, &session, false);
    sessions.created += 1;
    sessions
        .by_participant
        .insert(participant_id, session_id.clone());
    sessions.by_id.insert(session_id, session);
    Ok(Json(body))
}

fn session_json(app: &StudyApp, s: &Session, resumed: bool) -> serde_json::Value {
    json!({
        "session_id": s.session_id,
        "participant_id": s.participant_id,
        "set": s.set + 1,
        "total": s.trials.len(),
        "next_index": s.next_unanswered(),
        "modality": app.0.def.modality,
        "resumed": resumed,
    })
}

#[derive(Debug, Deserialize)]
struct TrialQuery {
    session: Option<String>,
    index: Option<usize>,
    token: Option<String>,
}

#[derive(Debug, Serialize)]
struct Stimulus<'a> {
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    audio_url: Option<&'a str>,
}

fn trial_json(app: &StudyApp, s: &Session, index: usize) -> serde_json::Value {
    let item = &s.trials[index];
    json!({
        "done": false,
        "session_id": s.session_id,
        "index": index,
        "total": s.trials.len(),
        "answered": s.answers[index],
        "trial": {
            "pair_id": item.pair_id,
            "dimension": item.dimension,
            "prompt_pole": item.prompt_pole,
            "question": item.question(),
            "is_attention_check": item.is_attention_check,
            "modality": app.0.def.modality,
            "stimuli": {
                "a": Stimulus { text: &item.stimulus_a, audio_url: item.audio_a.as_deref() },
                "b": Stimulus { text: &item.stimulus_b, audio_url: item.audio_b.as_deref() },
            },
        },
    })
}

async fn next_trial(
    State(app): State<StudyApp>,
    headers: HeaderMap,
    Query(q): Query<TrialQuery>,
) -> ApiResult<Json<serde_json::Value>> {
    check_token(&app, &headers, q.token.as_deref())?;
    let sid = q.session.ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "missing_session",
            "query parameter `session` is required",
        )
    })?;
    let sessions = app.0.sessions.lock().await;
    let s = sessions
        .by_id
        .get(&sid)
        .ok_or_else(|| ApiError::unknown_session(&sid))?;
    let index = match q.index {
        Some(i) if i < s.trials.len() => Some(i),
        Some(i) => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "index_out_of_range",
                format!("index {i} outside 0..{}", s.trials.len()),
            ))
        }
        None => s.next_unanswered(),
    };
    Ok(Json(match index {
        Some(i) => trial_json(&app, s, i),
        None => json!({
            "done": true,
            "session_id": s.session_id,
            "total": s.trials.len(),
            "completion_code": completion_code(&app, &s.session_id),
        }),
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerRequest {
    session_id: String,
    index: usize,
    chosen: Choice,
    /// Optional echo of the displayed pair, checked when present.
    #[serde(default)]
    pair_id: Option<String>,
}

async fn answer_trial(
    State(app): State<StudyApp>,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
    body: Bytes,
) -> ApiResult<Json<serde_json::Value>> {
    check_token(&app, &headers, q.token.as_deref())?;
    let req: AnswerRequest = parse_body(&body)?;
    let mut sessions = app.0.sessions.lock().await;
    let s = sessions
        .by_id
        .get_mut(&req.session_id)
        .ok_or_else(|| ApiError::unknown_session(&req.session_id))?;
    if req.index >= s.trials.len() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "index_out_of_range",
            format!("index {} outside 0..{}", req.index, s.trials.len()),
        ));
    }
    let item = s.trials[req.index].clone();
    if let Some(p) = &req.pair_id {
        if *p != item.pair_id {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "pair_mismatch",
                format!("trial {} shows {}, not {p}", req.index, item.pair_id),
            ));
        }
    }
    if let Some(prev) = s.answers[req.index] {
        if prev == req.chosen {
            return Ok(Json(json!({
                "accepted": true,
                "duplicate": true,
                "next_index": s.next_unanswered(),
                "done": s.next_unanswered().is_none(),
            })));
        }
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "already_answered",
            format!("trial {} was already answered {prev}", req.index),
        ));
    }
    if s.next_unanswered() != Some(req.index) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "out_of_order",
            format!("next unanswered trial is {:?}", s.next_unanswered()),
        ));
    }
    let record = TrialRecord {
        participant_id: s.participant_id.clone(),
        language: s.language.clone(),
        pair_id: item.pair_id.clone(),
        dimension: item.dimension,
        prompt_pole: item.prompt_pole,
        chosen: req.chosen,
        predicted: item.predicted,
        is_attention_check: item.is_attention_check,
        timestamp: unix_now(),
        modality: app.0.def.modality,
    };
    let (ack, done) = oneshot::channel();
    app.0
        .writer
        .send(WriterCmd::Trial(record, ack))
        .await
        .map_err(|_| ApiError::internal("writer stopped"))?;
    done.await
        .map_err(|_| ApiError::internal("writer stopped"))?
        .map_err(|e| ApiError::internal(e.to_string()))?;
    s.answers[req.index] = Some(req.chosen);
    let next = s.next_unanswered();
    let mut body =
        json!({ "accepted": true, "duplicate": false, "next_index": next, "done": next.is_none() });
    if next.is_none() {
        body["completion_code"] = completion_code(&app, &s.session_id).into();
    }
    Ok(Json(body))
}

async fn export_trials(
    State(app): State<StudyApp>,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
) -> ApiResult<Response> {
    check_token(&app, &headers, q.token.as_deref())?;
    let (reply, rx) = oneshot::channel();
    app.0
        .writer
        .send(WriterCmd::Export(reply))
        .await
        .map_err(|_| ApiError::internal("writer stopped"))?;
    let text = rx
        .await
        .map_err(|_| ApiError::internal("writer stopped"))?
        .map_err(ApiError::internal)?;
    Ok((
        [(
            header::CONTENT_TYPE,
            "text/tab-separated-values; charset=utf-8",
        )],
        text,
    )
        .into_response())
}

async fn export_participants(
    State(app): State<StudyApp>,
    headers: HeaderMap,
    Query(q): Query<TokenQuery>,
) -> ApiResult<Response> {
    check_token(&app, &headers, q.token.as_deref())?;
    let sessions = app.0.sessions.lock().await;
    let mut rows: Vec<ParticipantRecord> = sessions
        .by_id
        .values()
        .map(|s| ParticipantRecord {
            participant_id: s.participant_id.clone(),
            language: s.language.clone(),
            set_assignment: s.set + 1,
            attention_pass: s
                .trials
                .iter()
                .zip(&s.answers)
                .filter(|(t, _)| t.is_attention_check)
                .all(|(t, a)| a.is_none_or(|c| c == t.predicted)),
        })
        .collect();
    rows.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
    let text = participants_table(&rows).render();
    Ok((
        [(
            header::CONTENT_TYPE,
            "text/tab-separated-values; charset=utf-8",
        )],
        text,
    )
        .into_response())
}

/// Loads the study definition and serves until interrupted.
pub async fn serve(
    def: StudyDefinition,
    trial_log: PathBuf,
    assets: Option<PathBuf>,
    bind: &str,
) -> Result<()> {
    if def.modality == Modality::Audio && assets.is_none() {
        log::warn!("audio study without an assets directory; audio URLs must be absolute");
    }
    let app = StudyApp::new(def, trial_log.clone())?;
    let (addr, handle) = spawn(app, assets, bind).await?;
    log::info!(
        "study server listening on http://{addr} (log {})",
        trial_log.display()
    );
    tokio::select! {
        res = handle => { res.context("server task")?.context("server")?; }
        _ = tokio::signal::ctrl_c() => { log::info!("shutting down"); }
    }
    Ok(())
}
