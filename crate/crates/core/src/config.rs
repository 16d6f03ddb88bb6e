//! Pipeline configuration: one TOML file with a section per stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artpred::PredictOptions;
use crate::corpus::CorpusConfig;
use crate::effects::EffectsOptions;
use crate::error::{Error, Result};
use crate::ratings::{Dimension, RaterSpec};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Root for stage outputs that are not given explicitly.
    pub out_dir: PathBuf,
    pub corpus_dir: Option<PathBuf>,
    pub ratings: Option<PathBuf>,
    pub effects_dir: Option<PathBuf>,
    pub predict_dir: Option<PathBuf>,
    pub behavior_dir: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            out_dir: PathBuf::from("out"),
            corpus_dir: None,
            ratings: None,
            effects_dir: None,
            predict_dir: None,
            behavior_dir: None,
            report: None,
        }
    }
}

impl Paths {
    fn or(&self, explicit: &Option<PathBuf>, name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out_dir.join(name))
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.or(&self.corpus_dir, "corpus")
    }

    pub fn ratings(&self) -> PathBuf {
        self.or(&self.ratings, "ratings.tsv")
    }

    pub fn effects_dir(&self) -> PathBuf {
        self.or(&self.effects_dir, "effects")
    }

    pub fn predict_dir(&self) -> PathBuf {
        self.or(&self.predict_dir, "predict")
    }

    pub fn behavior_dir(&self) -> PathBuf {
        self.or(&self.behavior_dir, "behavior")
    }

    pub fn report(&self) -> PathBuf {
        self.or(&self.report, "report.md")
    }
}

#[derive(Default, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatingSection {
    /// Dimensions to rate; empty means all nine.
    pub dimensions: Vec<Dimension>,
}

impl RatingSection {
    pub fn dimensions(&self) -> Vec<Dimension> {
        if self.dimensions.is_empty() {
            Dimension::ALL.to_vec()
        } else {
            let mut d = self.dimensions.clone();
            d.sort();
            d.dedup();
            d
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    #[serde(flatten)]
    pub options: PredictOptions,
    pub hypotheses: Option<PathBuf>,
    pub classic_findings: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorSection {
    pub trials: Option<PathBuf>,
    pub participants: Option<PathBuf>,
    /// Two-column TSV (`pair_id`, `accuracy`) of model accuracy per pair.
    pub llm_pair_accuracy: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub definition: Option<PathBuf>,
    /// Append-only trial log; defaults to `<out_dir>/study/trials.log`.
    pub log: Option<PathBuf>,
    pub assets: Option<PathBuf>,
    pub bind: String,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            definition: None,
            log: None,
            assets: None,
            bind: "127.0.0.1:8080".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: CorpusConfig,
    pub rating: RatingSection,
    pub raters: Vec<RaterSpec>,
    pub effects: EffectsOptions,
    pub predict: PredictSection,
    pub behavior: BehaviorSection,
    pub study: StudySection,
    pub paths: Paths,
}

impl PipelineConfig {
    pub fn parse(source: &str, text: &str) -> Result<PipelineConfig> {
        toml::from_str(text).map_err(|e| Error::Config(format!("{source}: {e}")))
    }

    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&path.display().to_string(), &text)
    }

    /// Checks every section; called before any stage runs.
    pub fn validate(&self) -> Result<()> {
        if self.corpus.n_single + self.corpus.n_double == 0 {
            return Err(Error::Config(
                "corpus needs at least one pair per contrast".into(),
            ));
        }
        if self.corpus.attempts_per_pair == 0 {
            return Err(Error::Config(
                "corpus.attempts_per_pair must be positive".into(),
            ));
        }
        self.corpus
            .selected_contrasts()
            .map_err(|e| Error::Config(e.to_string()))?;
        let mut ids = std::collections::BTreeSet::new();
        for r in &self.raters {
            r.validate()?;
            if !ids.insert(&r.id) {
                return Err(Error::Config(format!("duplicate rater id `{}`", r.id)));
            }
        }
        let e = &self.effects;
        if e.n_iter == 0 || e.n_splits == 0 {
            return Err(Error::Config(
                "effects.n_iter and effects.n_splits must be positive".into(),
            ));
        }
        if !(e.q_threshold > 0.0 && e.q_threshold < 1.0) {
            return Err(Error::Config(format!(
                "effects.q_threshold must be in (0, 1), got {}",
                e.q_threshold
            )));
        }
        if e.min_agree == 0 {
            return Err(Error::Config("effects.min_agree must be positive".into()));
        }
        if !(1..=Dimension::COUNT).contains(&e.pca_components) {
            return Err(Error::Config(format!(
                "effects.pca_components must be 1..=9, got {}",
                e.pca_components
            )));
        }
        self.predict
            .options
            .cv
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// Hash over the whole configuration.
    pub fn hash(&self) -> String {
        section_hash(&[&to_json(self)])
    }

    /// Seeds as `name=value` pairs for output metadata.
    pub fn seeds(&self) -> String {
        format!(
            "corpus={};effects={};predict={}",
            self.corpus.seed, self.effects.seed, self.predict.options.seed
        )
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("config serializes")
}

/// Chains an upstream artifact hash with the settings of the stage that consumes it.
pub fn stage_hash<T: Serialize>(upstream: &str, settings: &T) -> String {
    section_hash(&[upstream, &to_json(settings)])
}

fn section_hash(parts: &[&str]) -> String {
    seed::short_hash(parts.join("|").as_bytes())
}
