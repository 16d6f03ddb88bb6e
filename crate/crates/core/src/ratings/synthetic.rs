use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{BatchOutcome, Dimension, Provenance, RatingRecord, RawScale, WordItem};
use crate::error::{Error, Result};
use crate::letters::Letter;
use crate::seed;

pub const BASE_SCORE: f64 = 50.0;

/// Additive letter-by-dimension weights plus seeded Gaussian noise.
///
/// Weights are stored sparsely; letters or dimensions not listed weigh zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantedProfile {
    #[serde(default)]
    pub weights: BTreeMap<Letter, BTreeMap<Dimension, f64>>,
    #[serde(default)]
    pub noise_sd: f64,
    #[serde(default)]
    pub seed: u64,
    /// Fill unlisted weights with a seeded ternary draw; see [`PlantedProfile::expand`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_weights: Option<RandomWeights>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomWeights {
    pub magnitude: f64,
    pub seed: u64,
}

impl PlantedProfile {
    pub fn zero(noise_sd: f64, seed: u64) -> PlantedProfile {
        PlantedProfile {
            weights: BTreeMap::new(),
            noise_sd,
            seed,
            random_weights: None,
        }
    }

    pub fn from_matrix(
        weights: &[[f64; Dimension::COUNT]; 26],
        noise_sd: f64,
        seed: u64,
    ) -> PlantedProfile {
        let mut map = BTreeMap::new();
        for l in Letter::all() {
            let row: BTreeMap<Dimension, f64> = Dimension::ALL
                .iter()
                .filter(|d| weights[l.index()][d.index()] != 0.0)
                .map(|&d| (d, weights[l.index()][d.index()]))
                .collect();
            if !row.is_empty() {
                map.insert(l, row);
            }
        }
        PlantedProfile {
            weights: map,
            noise_sd,
            seed,
            random_weights: None,
        }
    }

    /// Every letter x dimension weight drawn from {-magnitude, 0, +magnitude}.
    pub fn random_ternary(
        magnitude: f64,
        weight_seed: u64,
        noise_sd: f64,
        noise_seed: u64,
    ) -> PlantedProfile {
        let mut rng = ChaCha8Rng::seed_from_u64(weight_seed);
        let mut m = [[0.0; Dimension::COUNT]; 26];
        for row in m.iter_mut() {
            for w in row.iter_mut() {
                *w = f64::from(rng.random_range(-1i32..=1)) * magnitude;
            }
        }
        PlantedProfile::from_matrix(&m, noise_sd, noise_seed)
    }

    /// Materializes `random_weights`; explicitly listed weights take precedence.
    pub fn expand(mut self) -> PlantedProfile {
        let Some(rw) = self.random_weights.take() else {
            return self;
        };
        let mut drawn =
            PlantedProfile::random_ternary(rw.magnitude, rw.seed, self.noise_sd, self.seed);
        for (letter, row) in self.weights {
            let entry = drawn.weights.entry(letter).or_default();
            for (dim, w) in row {
                entry.insert(dim, w);
            }
        }
        drawn.weights.retain(|_, row| {
            row.retain(|_, w| *w != 0.0);
            !row.is_empty()
        });
        drawn
    }

    pub fn weight(&self, letter: Letter, dim: Dimension) -> f64 {
        self.weights
            .get(&letter)
            .and_then(|row| row.get(&dim))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sd must be >= 0, got {}",
                self.noise_sd
            )));
        }
        if self
            .weights
            .values()
            .flat_map(|r| r.values())
            .any(|w| !w.is_finite())
        {
            return Err(Error::Config("planted weights must be finite".into()));
        }
        if let Some(rw) = &self.random_weights {
            if !(rw.magnitude.is_finite() && rw.magnitude >= 0.0) {
                return Err(Error::Config(format!(
                    "random weight magnitude must be >= 0, got {}",
                    rw.magnitude
                )));
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> String {
        seed::short_hash(
            serde_json::to_string(self)
                .expect("profile serializes")
                .as_bytes(),
        )
    }
}

/// `50 + sum of letter weights + noise`, clamped to [0, 100].
///
/// The noise draw depends only on (profile seed, word, dimension), so a word
/// always gets the same score no matter which batch rates it.
pub fn synthetic_score(profile: &PlantedProfile, word: &str, dim: Dimension) -> f64 {
    let signal: f64 = word
        .chars()
        .filter_map(|c| Letter::new(c).ok())
        .map(|l| profile.weight(l, dim))
        .sum();
    let noise = if profile.noise_sd > 0.0 {
        let mut rng =
            ChaCha8Rng::seed_from_u64(seed::derive(profile.seed, &format!("{word}|{dim}")));
        Normal::new(0.0, profile.noise_sd)
            .expect("validated sd")
            .sample(&mut rng)
    } else {
        0.0
    };
    (BASE_SCORE + signal + noise).clamp(0.0, 100.0)
}

pub(super) fn rate(
    rater_id: &str,
    profile: &PlantedProfile,
    words: &[WordItem],
    dims: &[Dimension],
) -> BatchOutcome {
    let provenance = Provenance {
        hash: profile.hash(),
        rater_id: rater_id.to_string(),
        kind: "synthetic".into(),
        timestamp: "unix:0".into(),
    };
    let records = words
        .par_iter()
        .flat_map_iter(|item| {
            let prov = provenance.hash.clone();
            dims.iter().map(move |&dim| RatingRecord {
                rater_id: rater_id.to_string(),
                pseudoword: item.word.clone(),
                pair_id: item.pair_id.clone(),
                dimension: dim,
                score: synthetic_score(profile, &item.word, dim),
                raw_scale: RawScale::ZeroToHundred,
                provenance: prov.clone(),
            })
        })
        .collect();
    BatchOutcome {
        provenance,
        records,
        failures: Vec::new(),
        requested: words.len() * dims.len(),
    }
}
