use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use serde::Serialize;

use phonosem_core::artpred::{self, load_hypotheses, FindingSet};
use phonosem_core::behavior::{
    self, analyzable, analyze_study, cross_language_table, derive_participants,
    llm_human_pair_correlation, pooled_pair_accuracy, AccuracyCell, ParticipantRecord, Pooling,
};
use phonosem_core::config::{stage_hash, PipelineConfig};
use phonosem_core::corpus::{self, Corpus};
use phonosem_core::effects::{self, CONSENSUS_FILE, PROFILE_FILE};
use phonosem_core::phonfeat::PhonFeat;
use phonosem_core::ratings::{load_store, rate_batch, RatingStore, WordItem};
use phonosem_core::seed::short_hash;
use phonosem_core::tsv::{self, fmt_f64, fmt_opt, Table};
use phonosem_core::Error;

use crate::exit::UpstreamMissing;

pub const BEHAVIOR_SCHEMA: &str = "phonosem-behavior/1";

/// Provenance written next to every stage's outputs.
#[derive(Serialize)]
struct StageRecord<'a> {
    stage: &'a str,
    config_hash: &'a str,
    upstream_hash: &'a str,
    seeds: BTreeMap<&'a str, u64>,
}

fn write_stage_record(dir: &Path, record: &StageRecord) -> Result<()> {
    let mut text = serde_json::to_string_pretty(record)?;
    text.push('\n');
    tsv::write_file(&dir.join("stage.json"), text.as_bytes())?;
    Ok(())
}

fn require(path: &Path, what: &'static str, stage: &'static str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(UpstreamMissing {
            what,
            path: path.to_path_buf(),
            stage,
        }
        .into())
    }
}

pub fn load_corpus(cfg: &PipelineConfig) -> Result<Corpus> {
    let dir = cfg.paths.corpus_dir();
    require(&dir.join("pairs.tsv"), "corpus", "generate")?;
    Ok(corpus::read_corpus(&dir)?)
}

pub fn generate(cfg: &PipelineConfig) -> Result<Corpus> {
    let lexicon = cfg.corpus.load_lexicon()?;
    let phon = cfg.corpus.load_phonotactics()?;
    let corpus = phonosem_core::corpus::generate_corpus_with(&cfg.corpus, &lexicon, &phon)?;
    let invalid = corpus.validate(&phon, &lexicon);
    if !invalid.is_empty() {
        return Err(Error::Invariant(format!(
            "{} generated pairs failed validation: {}",
            invalid.len(),
            invalid[0]
        ))
        .into());
    }
    let dir = cfg.paths.corpus_dir();
    corpus::write_corpus(&corpus, &dir)?;
    info!(
        "wrote {} pairs over {} contrasts to {}",
        corpus.pairs.len(),
        corpus.manifest.contrasts.len(),
        dir.display()
    );
    Ok(corpus)
}

/// Rates every corpus word with every configured rater.
///
/// When the existing store was produced by the same configuration, cells it
/// already holds are kept and only missing cells are requested.
pub fn rate(cfg: &PipelineConfig, only: &[String]) -> Result<RatingStore> {
    if cfg.raters.is_empty() {
        return Err(Error::Config("no raters configured; add a [[raters]] section".into()).into());
    }
    let corpus = load_corpus(cfg)?;
    let dims = cfg.rating.dimensions();
    let hash = stage_hash(&corpus.manifest.config_hash, &(&cfg.raters, &dims));
    let path = cfg.paths.ratings();
    let mut store = match path.exists() {
        true => {
            let (existing, _) = load_store(&path)?;
            if existing.config_hash.as_deref() == Some(hash.as_str()) {
                existing
            } else {
                RatingStore::new()
            }
        }
        false => RatingStore::new(),
    };
    store.config_hash = Some(hash);
    let words: Vec<WordItem> = corpus
        .unique_words()
        .into_iter()
        .map(|(w, p)| WordItem::new(w, p))
        .collect();
    let mut failures = Vec::new();
    for rater in &cfg.raters {
        if !only.is_empty() && !only.contains(&rater.id) {
            continue;
        }
        let todo: Vec<WordItem> = words
            .iter()
            .filter(|w| {
                dims.iter()
                    .any(|&d| store.get(&rater.id, &w.word, d).is_none())
            })
            .cloned()
            .collect();
        if todo.is_empty() {
            info!("{}: all {} words already rated", rater.id, words.len());
            continue;
        }
        let outcome =
            rate_batch(rater, &todo, &dims).with_context(|| format!("rater {}", rater.id))?;
        info!(
            "{}: {} ratings, {} failures",
            rater.id,
            outcome.records.len(),
            outcome.failures.len()
        );
        for f in &outcome.failures {
            warn!(
                "{}: {} {} failed after {} attempts: {}",
                rater.id, f.pseudoword, f.dimension, f.attempts, f.reason
            );
        }
        failures.extend(
            outcome
                .failures
                .iter()
                .map(|f| (rater.id.clone(), f.clone())),
        );
        store.extend(outcome.provenance, outcome.records)?;
        // Persist after each rater so an interrupted live run can resume.
        store.save(&path)?;
    }
    store.save(&path)?;
    let fail_path = path.with_extension("failures.tsv");
    if failures.is_empty() {
        if fail_path.exists() {
            std::fs::remove_file(&fail_path).map_err(|e| Error::io(&fail_path, e))?;
        }
    } else {
        let mut t = Table::new(["rater_id", "word", "dimension", "attempts", "reason"]);
        for (r, f) in &failures {
            t.push([
                r.clone(),
                f.pseudoword.clone(),
                f.dimension.to_string(),
                f.attempts.to_string(),
                f.reason.replace(['\t', '\n'], " "),
            ]);
        }
        t.write(&fail_path)?;
    }
    Ok(store)
}

pub fn load_ratings(cfg: &PipelineConfig) -> Result<RatingStore> {
    let path = cfg.paths.ratings();
    require(&path, "rating store", "rate")?;
    let (store, warnings) = load_store(&path)?;
    for w in warnings {
        warn!("{w}");
    }
    Ok(store)
}

pub fn analyze(cfg: &PipelineConfig) -> Result<effects::Analysis> {
    let corpus = load_corpus(cfg)?;
    let store = load_ratings(cfg)?;
    let upstream = store
        .config_hash
        .clone()
        .unwrap_or_else(|| "unhashed".into());
    let hash = stage_hash(&upstream, &cfg.effects);
    let analysis = effects::analyze(&corpus, &store, &cfg.effects)?;
    for w in &analysis.warnings {
        warn!("{w}");
    }
    let dir = cfg.paths.effects_dir();
    effects::write_analysis(&dir, &analysis, &hash)?;
    write_stage_record(
        &dir,
        &StageRecord {
            stage: "analyze",
            config_hash: &hash,
            upstream_hash: &upstream,
            seeds: [("effects", cfg.effects.seed)].into(),
        },
    )?;
    info!(
        "wrote {} effect cells to {}",
        analysis.table.cells.len(),
        dir.display()
    );
    Ok(analysis)
}

pub fn predict(cfg: &PipelineConfig) -> Result<artpred::Prediction> {
    let dir = cfg.paths.effects_dir();
    let consensus_path = dir.join(CONSENSUS_FILE);
    require(&consensus_path, "consensus effects", "analyze")?;
    require(&dir.join(PROFILE_FILE), "letter profile", "analyze")?;
    let upstream = Table::read(&consensus_path)?
        .meta_value("config_hash")
        .unwrap_or("unhashed")
        .to_string();
    let consensus = effects::read_consensus(&consensus_path)?;
    let profile = effects::read_profile(&dir.join(PROFILE_FILE))?;
    let hypotheses = load_hypotheses(cfg.predict.hypotheses.as_deref())?;
    let findings = FindingSet::load(cfg.predict.classic_findings.as_deref())?;
    let targets = artpred::targets_from_consensus(&consensus);
    let prediction = artpred::predict(
        &targets,
        &profile,
        &PhonFeat::bundled(),
        &hypotheses,
        &findings,
        &cfg.predict.options,
    )?;
    for w in &prediction.warnings {
        warn!("{w}");
    }
    let hash = stage_hash(&upstream, &cfg.predict);
    let out = cfg.paths.predict_dir();
    artpred::write_prediction(&out, &prediction, &hash)?;
    write_stage_record(
        &out,
        &StageRecord {
            stage: "predict",
            config_hash: &hash,
            upstream_hash: &upstream,
            seeds: [("predict", cfg.predict.options.seed)].into(),
        },
    )?;
    info!(
        "{} of {} hypotheses consistent; wrote {}",
        prediction.hypotheses_consistent,
        hypotheses.len(),
        out.display()
    );
    Ok(prediction)
}

#[derive(Debug, Serialize)]
pub struct BehaviorReport {
    pub study: behavior::StudyResult,
    pub cross_language: Option<behavior::CrossLanguageTable>,
    pub llm_human: Option<behavior::Correlation>,
    pub warnings: Vec<String>,
}

fn read_pair_accuracy(path: &Path) -> Result<BTreeMap<String, f64>> {
    let table = Table::read(path)?;
    let src = path.display().to_string();
    let cols = table.require_columns(&src, &["pair_id", "accuracy"])?;
    let mut out = BTreeMap::new();
    for (i, row) in table.rows.iter().enumerate() {
        let acc: f64 = row[cols["accuracy"]]
            .parse()
            .map_err(|_| Error::format(&src, i + 1, "bad accuracy"))?;
        out.insert(row[cols["pair_id"]].clone(), acc);
    }
    Ok(out)
}

/// Participants from file, with anyone failing an attention check in the trials excluded.
fn merged_participants(
    trials: &[behavior::TrialRecord],
    file: Option<Vec<ParticipantRecord>>,
) -> Vec<ParticipantRecord> {
    let derived = derive_participants(trials);
    let Some(mut listed) = file else {
        return derived;
    };
    for d in derived {
        match listed
            .iter_mut()
            .find(|p| p.participant_id == d.participant_id)
        {
            Some(p) => p.attention_pass &= d.attention_pass,
            None => listed.push(d),
        }
    }
    listed.sort_by(|a, b| a.participant_id.cmp(&b.participant_id));
    listed
}

fn accuracy_rows(t: &mut Table, scope: &str, key: &str, c: &AccuracyCell) {
    t.push([
        scope.to_string(),
        key.to_string(),
        c.correct.to_string(),
        c.n.to_string(),
        fmt_f64(c.accuracy),
        fmt_f64(c.p_two_sided),
        fmt_f64(c.p_greater),
        fmt_f64(c.log10_p_two_sided),
        fmt_f64(c.log10_p_greater),
    ]);
}

pub fn behavior(cfg: &PipelineConfig) -> Result<BehaviorReport> {
    let trials_path = cfg
        .behavior
        .trials
        .clone()
        .unwrap_or_else(|| cfg.paths.out_dir.join("study").join("trials.tsv"));
    require(&trials_path, "trial file", "serve-study")?;
    let trials_bytes = std::fs::read(&trials_path).map_err(|e| Error::io(&trials_path, e))?;
    let trials = behavior::parse_trials(
        &trials_path.display().to_string(),
        &String::from_utf8_lossy(&trials_bytes),
    )?;
    let mut hash_input = short_hash(&trials_bytes);
    let listed = match &cfg.behavior.participants {
        Some(p) => {
            hash_input.push_str(&short_hash(&std::fs::read(p).map_err(|e| Error::io(p, e))?));
            Some(behavior::read_participants(p)?)
        }
        None => None,
    };
    let participants = merged_participants(&trials, listed);
    let study = analyze_study(&trials, &participants)?;
    let kept = analyzable(&trials, &participants);
    let mut warnings = Vec::new();
    let cross_language = match cross_language_table(&kept) {
        Ok(t) => Some(t),
        Err(e) => {
            warnings.push(format!("cross-language table skipped: {e}"));
            None
        }
    };
    let llm_human = match &cfg.behavior.llm_pair_accuracy {
        None => None,
        Some(path) => {
            hash_input.push_str(&short_hash(
                &std::fs::read(path).map_err(|e| Error::io(path, e))?,
            ));
            let llm = read_pair_accuracy(path)?;
            let human = pooled_pair_accuracy(&kept, Pooling::Trials);
            let (a, b): (Vec<f64>, Vec<f64>) = llm
                .iter()
                .filter_map(|(pair, &acc)| human.get(pair).map(|&h| (acc, h)))
                .unzip();
            match llm_human_pair_correlation(&a, &b) {
                Ok(c) => Some(c),
                Err(e) => {
                    warnings.push(format!("model-human correlation skipped: {e}"));
                    None
                }
            }
        }
    };
    for w in &warnings {
        warn!("{w}");
    }
    let hash = stage_hash(&hash_input, &"behavior");
    let dir = cfg.paths.behavior_dir();
    let mut t = Table::new([
        "scope",
        "key",
        "correct",
        "n",
        "accuracy",
        "p_two_sided",
        "p_greater",
        "log10_p_two_sided",
        "log10_p_greater",
    ])
    .with_meta("schema", BEHAVIOR_SCHEMA)
    .with_meta("config_hash", &hash);
    accuracy_rows(&mut t, "overall", "all", &study.overall);
    for (d, c) in &study.per_dimension {
        accuracy_rows(&mut t, "dimension", d.as_str(), c);
    }
    for (l, c) in &study.per_language {
        accuracy_rows(&mut t, "language", l, c);
    }
    for (p, c) in &study.per_pair {
        accuracy_rows(&mut t, "pair", p, c);
    }
    t.write(&dir.join("accuracy.tsv"))?;
    if let Some(cl) = &cross_language {
        let mut t = Table::new(["language_a", "language_b", "r", "n_pairs"])
            .with_meta("schema", BEHAVIOR_SCHEMA)
            .with_meta("config_hash", &hash);
        for p in &cl.correlations {
            t.push([
                p.language_a.clone(),
                p.language_b.clone(),
                fmt_opt(p.r),
                p.n_pairs.to_string(),
            ]);
        }
        t.write(&dir.join("cross_language.tsv"))?;
    }
    behavior::participants_table(&participants)
        .with_meta("config_hash", &hash)
        .write(&dir.join("participants.tsv"))?;
    let report = BehaviorReport {
        study,
        cross_language,
        llm_human,
        warnings,
    };
    let mut json = serde_json::to_value(&report)?;
    json["config_hash"] = hash.clone().into();
    json["schema"] = BEHAVIOR_SCHEMA.into();
    let mut text = serde_json::to_string_pretty(&json)?;
    text.push('\n');
    tsv::write_file(&dir.join("behavior.json"), text.as_bytes())?;
    info!(
        "accuracy {:.3} over {} trials; wrote {}",
        report.study.overall.accuracy,
        report.study.overall.n,
        dir.display()
    );
    Ok(report)
}

/// Resolves the trial log path for the study server.
pub fn study_log(cfg: &PipelineConfig) -> PathBuf {
    cfg.study
        .log
        .clone()
        .unwrap_or_else(|| cfg.paths.out_dir.join("study").join("trials.log"))
}
