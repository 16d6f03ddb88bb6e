//! Semantic ratings: the nine dimensions, pluggable raters and the rating store.

mod llm;
mod store;
mod synthetic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use llm::{ApiStyle, LlmConfig, PromptTemplate, TokenBucket};
pub use store::{load_store, RatingStore, STORE_SCHEMA};
pub use synthetic::{synthetic_score, PlantedProfile, RandomWeights};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Size,
    Shape,
    Brightness,
    Texture,
    Speed,
    Temperature,
    Pleasantness,
    Weight,
    Elevation,
}

impl Dimension {
    pub const COUNT: usize = 9;

    /// Canonical order used by every table and matrix.
    pub const ALL: [Dimension; 9] = [
        Dimension::Size,
        Dimension::Shape,
        Dimension::Brightness,
        Dimension::Texture,
        Dimension::Speed,
        Dimension::Temperature,
        Dimension::Pleasantness,
        Dimension::Weight,
        Dimension::Elevation,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Size => "size",
            Dimension::Shape => "shape",
            Dimension::Brightness => "brightness",
            Dimension::Texture => "texture",
            Dimension::Speed => "speed",
            Dimension::Temperature => "temperature",
            Dimension::Pleasantness => "pleasantness",
            Dimension::Weight => "weight",
            Dimension::Elevation => "elevation",
        }
    }

    /// Low and high anchor labels of the rating scale.
    pub fn poles(self) -> (&'static str, &'static str) {
        match self {
            Dimension::Size => ("small", "large"),
            Dimension::Shape => ("round", "spiky"),
            Dimension::Brightness => ("dark", "bright"),
            Dimension::Texture => ("smooth", "rough"),
            Dimension::Speed => ("slow", "fast"),
            Dimension::Temperature => ("cold", "hot"),
            Dimension::Pleasantness => ("unpleasant", "pleasant"),
            Dimension::Weight => ("light", "heavy"),
            Dimension::Elevation => ("low", "high"),
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown dimension `{s}`")))
    }
}

/// Scale a score was originally elicited on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RawScale {
    #[serde(rename = "0-10")]
    ZeroToTen,
    #[serde(rename = "0-100")]
    ZeroToHundred,
}

impl RawScale {
    pub fn as_str(self) -> &'static str {
        match self {
            RawScale::ZeroToTen => "0-10",
            RawScale::ZeroToHundred => "0-100",
        }
    }

    /// Converts a raw answer to the canonical 0-100 scale.
    pub fn to_canonical(self, raw: f64) -> f64 {
        match self {
            RawScale::ZeroToTen => raw * 10.0,
            RawScale::ZeroToHundred => raw,
        }
    }
}

impl FromStr for RawScale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "0-10" => Ok(RawScale::ZeroToTen),
            "0-100" => Ok(RawScale::ZeroToHundred),
            other => Err(Error::InvalidInput(format!("unknown raw scale `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub rater_id: String,
    pub pseudoword: String,
    /// First corpus pair that uses the word; joins go through the word text.
    pub pair_id: String,
    pub dimension: Dimension,
    /// Canonical 0-100 score.
    pub score: f64,
    pub raw_scale: RawScale,
    pub provenance: String,
}

/// Who produced a set of records, with what configuration, and when.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub hash: String,
    pub rater_id: String,
    pub kind: String,
    /// `unix:<seconds>`; pure raters use `unix:0` so reruns are byte-identical.
    pub timestamp: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RaterKind {
    Synthetic(PlantedProfile),
    LlmHttp(LlmConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RaterSpec {
    pub id: String,
    #[serde(flatten)]
    pub kind: RaterKind,
}

impl RaterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() || self.id.contains(['\t', '\n', '|']) {
            return Err(Error::Config(format!("invalid rater id `{}`", self.id)));
        }
        match &self.kind {
            RaterKind::Synthetic(p) => p.validate(),
            RaterKind::LlmHttp(c) => c.validate(),
        }
    }
}

/// An item that could not be rated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingFailure {
    pub pseudoword: String,
    pub dimension: Dimension,
    pub attempts: u32,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchOutcome {
    pub provenance: Provenance,
    pub records: Vec<RatingRecord>,
    pub failures: Vec<RatingFailure>,
    pub requested: usize,
}

impl BatchOutcome {
    pub fn accounting_holds(&self) -> bool {
        self.requested == self.records.len() + self.failures.len()
    }
}

/// Word to rate with the pair it was taken from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordItem {
    pub word: String,
    pub pair_id: String,
}

impl WordItem {
    pub fn new(word: impl Into<String>, pair_id: impl Into<String>) -> Self {
        WordItem {
            word: word.into(),
            pair_id: pair_id.into(),
        }
    }
}

/// Rates every (word, dimension) combination with one rater.
///
/// Synthetic raters are pure and run in parallel. LLM raters run sequentially
/// through a token bucket and retry transport and parse failures with
/// exponential backoff; unparseable answers become explicit failures.
pub fn rate_batch(
    rater: &RaterSpec,
    words: &[WordItem],
    dims: &[Dimension],
) -> Result<BatchOutcome> {
    rater.validate()?;
    if words.is_empty() {
        return Err(Error::InvalidInput(
            "rate_batch needs at least one word".into(),
        ));
    }
    match &rater.kind {
        RaterKind::Synthetic(profile) if profile.random_weights.is_some() => Ok(synthetic::rate(
            &rater.id,
            &profile.clone().expand(),
            words,
            dims,
        )),
        RaterKind::Synthetic(profile) => Ok(synthetic::rate(&rater.id, profile, words, dims)),
        RaterKind::LlmHttp(config) => llm::rate(&rater.id, config, words, dims),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_dimensions_in_canonical_order() {
        assert_eq!(Dimension::ALL.len(), 9);
        for (i, d) in Dimension::ALL.iter().enumerate() {
            assert_eq!(d.index(), i);
            assert_eq!(d.as_str().parse::<Dimension>().unwrap(), *d);
        }
        assert_eq!(Dimension::Shape.poles(), ("round", "spiky"));
    }

    #[test]
    fn zero_to_ten_scales_by_ten() {
        assert_eq!(RawScale::ZeroToTen.to_canonical(7.0), 70.0);
        assert_eq!(RawScale::ZeroToHundred.to_canonical(7.0), 7.0);
    }

    #[test]
    fn llm_with_nonzero_temperature_is_a_config_error() {
        let spec = RaterSpec {
            id: "gpt".into(),
            kind: RaterKind::LlmHttp(LlmConfig {
                temperature: 0.7,
                ..LlmConfig::default()
            }),
        };
        let words = [WordItem::new("brev", "e-o.s01")];
        assert!(matches!(
            rate_batch(&spec, &words, &Dimension::ALL),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn empty_dims_give_empty_batch() {
        let spec = RaterSpec {
            id: "syn".into(),
            kind: RaterKind::Synthetic(PlantedProfile::zero(0.0, 1)),
        };
        let out = rate_batch(&spec, &[WordItem::new("brev", "e-o.s01")], &[]).unwrap();
        assert!(out.records.is_empty());
        assert!(out.accounting_holds());
    }

    #[test]
    fn rater_spec_reads_from_toml() {
        let text = r#"
            id = "syn-1"
            kind = "synthetic"
            noise_sd = 5.0
            seed = 3
            [weights.i]
            size = -5.0
        "#;
        let spec: RaterSpec = toml::from_str(text).unwrap();
        match &spec.kind {
            RaterKind::Synthetic(p) => {
                assert_eq!(
                    p.weight(crate::Letter::new('i').unwrap(), Dimension::Size),
                    -5.0
                );
                assert_eq!(p.noise_sd, 5.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = r#"
            id = "gpt"
            kind = "llm_http"
            endpoint = "http://localhost:1/v1/chat/completions"
            model = "m"
        "#;
        let spec: RaterSpec = toml::from_str(text).unwrap();
        assert!(matches!(spec.kind, RaterKind::LlmHttp(_)));
        spec.validate().unwrap();
    }
}
