use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::trials::{Choice, Modality, Pole};
use crate::error::{Error, Result};
use crate::ratings::Dimension;
use crate::seed;

/// Splits dimension-tagged pairs into `n_sets` disjoint sets holding
/// `quota` pairs of every dimension present.
pub fn counterbalance_assign(
    pairs: &[(String, Dimension)],
    n_sets: usize,
    quota: usize,
    seed_value: u64,
) -> Result<Vec<Vec<String>>> {
    if n_sets == 0 || quota == 0 {
        return Err(Error::InvalidArgument(
            "n_sets and quota must be positive".into(),
        ));
    }
    let mut by_dim: BTreeMap<Dimension, Vec<&String>> = BTreeMap::new();
    for (id, dim) in pairs {
        by_dim.entry(*dim).or_default().push(id);
    }
    let mut sets = vec![Vec::new(); n_sets];
    for (dim, mut ids) in by_dim {
        ids.sort();
        ids.dedup();
        let need = n_sets * quota;
        if ids.len() < need {
            return Err(Error::InvalidInput(format!(
                "dimension {dim} has {} pairs but {n_sets} sets x {quota} need {need}",
                ids.len()
            )));
        }
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed::derive(
            seed_value,
            &format!("counterbalance|{dim}"),
        )));
        for (s, set) in sets.iter_mut().enumerate() {
            set.extend(
                ids[s * quota..(s + 1) * quota]
                    .iter()
                    .map(|id| (*id).clone()),
            );
        }
    }
    Ok(sets)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyItem {
    pub pair_id: String,
    pub dimension: Dimension,
    pub prompt_pole: Pole,
    pub stimulus_a: String,
    pub stimulus_b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_a: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_b: Option<String>,
    pub predicted: Choice,
    #[serde(default)]
    pub is_attention_check: bool,
}

impl StudyItem {
    /// Question shown to participants, e.g. `Which word sounds more large?` becomes
    /// `Which word better matches "large"?`.
    pub fn question(&self) -> String {
        let (low, high) = self.dimension.poles();
        let pole = match self.prompt_pole {
            Pole::Low => low,
            Pole::High => high,
        };
        format!("Which word better matches \"{pole}\"?")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyDefinition {
    pub study_id: String,
    pub language: String,
    #[serde(default = "default_modality")]
    pub modality: Modality,
    /// Shared secret required on every API call when set.
    #[serde(default)]
    pub token: Option<String>,
    pub n_sets: usize,
    pub per_dimension_quota: usize,
    #[serde(default)]
    pub seed: u64,
    pub items: Vec<StudyItem>,
    #[serde(default)]
    pub attention_checks: Vec<StudyItem>,
}

fn default_modality() -> Modality {
    Modality::Text
}

impl StudyDefinition {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let def: StudyDefinition = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        def.validate()?;
        Ok(def)
    }

    pub fn validate(&self) -> Result<()> {
        if self.study_id.is_empty() || self.language.is_empty() {
            return Err(Error::Config("study_id and language are required".into()));
        }
        if self.modality == Modality::Audio
            && self
                .items
                .iter()
                .chain(&self.attention_checks)
                .any(|i| i.audio_a.is_none() || i.audio_b.is_none())
        {
            return Err(Error::Config(
                "audio studies need audio_a and audio_b on every item".into(),
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for item in self.items.iter().chain(&self.attention_checks) {
            if !seen.insert(&item.pair_id) {
                return Err(Error::Config(format!(
                    "duplicate pair_id `{}` in study",
                    item.pair_id
                )));
            }
        }
        self.build_sets().map(|_| ())
    }

    /// Counterbalanced sets; every set also carries all attention checks.
    pub fn build_sets(&self) -> Result<Vec<Vec<StudyItem>>> {
        let tagged: Vec<(String, Dimension)> = self
            .items
            .iter()
            .map(|i| (i.pair_id.clone(), i.dimension))
            .collect();
        let sets =
            counterbalance_assign(&tagged, self.n_sets, self.per_dimension_quota, self.seed)?;
        let by_id: BTreeMap<&str, &StudyItem> =
            self.items.iter().map(|i| (i.pair_id.as_str(), i)).collect();
        Ok(sets
            .into_iter()
            .map(|ids| {
                let mut items: Vec<StudyItem> =
                    ids.iter().map(|id| by_id[id.as_str()].clone()).collect();
                items.extend(self.attention_checks.iter().cloned().map(|mut c| {
                    c.is_attention_check = true;
                    c
                }));
                items
            })
            .collect())
    }

    /// Trial order for one session: the set's items shuffled by a stream
    /// derived from the session id.
    pub fn session_trials(&self, set: &[StudyItem], session_id: &str) -> Vec<StudyItem> {
        let mut items = set.to_vec();
        items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed::derive(
            self.seed,
            &format!("session|{session_id}"),
        )));
        items
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tagged(per_dim: usize) -> Vec<(String, Dimension)> {
        Dimension::ALL
            .iter()
            .flat_map(|d| (0..per_dim).map(move |i| (format!("{d}-{i:02}"), *d)))
            .collect()
    }

    #[test]
    fn two_sets_of_fifty_four() {
        let sets = counterbalance_assign(&tagged(12), 2, 6, 1).unwrap();
        assert_eq!(sets.len(), 2);
        for s in &sets {
            assert_eq!(s.len(), 54);
        }
        let all: std::collections::BTreeSet<&String> = sets.iter().flatten().collect();
        assert_eq!(all.len(), 108);
        assert_eq!(sets, counterbalance_assign(&tagged(12), 2, 6, 1).unwrap());
    }

    #[test]
    fn single_full_set() {
        let sets = counterbalance_assign(&tagged(1), 1, 1, 9).unwrap();
        assert_eq!(sets[0].len(), 9);
    }

    #[test]
    fn infeasible_quota_names_dimension() {
        let err = counterbalance_assign(&tagged(12), 1, 20, 1)
            .unwrap_err()
            .to_string();
        assert!(err.contains("size"), "{err}");
    }
}
