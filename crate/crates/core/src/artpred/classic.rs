use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::effects::LetterProfile;
use crate::error::{Error, Result};
use crate::letters::Letter;
use crate::ratings::Dimension;
use crate::stats::{mean, spearman};

const BUNDLED: &str = include_str!("../../data/classic_findings.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Pattern {
    /// Letters from highest to lowest expected value.
    Ranking { ranking: String },
    /// Named letter sets; `high` should exceed `low`.
    Groups { high: String, low: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassicFinding {
    pub name: String,
    pub citation: String,
    pub category: String,
    pub dimension: Dimension,
    #[serde(flatten)]
    pub pattern: Pattern,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FindingSet {
    #[serde(default)]
    pub sets: BTreeMap<String, String>,
    pub finding: Vec<ClassicFinding>,
}

impl FindingSet {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled findings parse")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let set: FindingSet =
            toml::from_str(text).map_err(|e| Error::Config(format!("classic findings: {e}")))?;
        for f in &set.finding {
            match &f.pattern {
                Pattern::Ranking { ranking } => {
                    letters_of(ranking).map_err(|e| Error::Config(format!("{}: {e}", f.name)))?;
                }
                Pattern::Groups { high, low } => {
                    set.group(high)?;
                    set.group(low)?;
                }
            }
        }
        Ok(set)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::bundled()),
            Some(p) => Self::parse(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        }
    }

    fn group(&self, name: &str) -> Result<Vec<Letter>> {
        let letters = self
            .sets
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown letter set `{name}`")))?;
        letters_of(letters).map_err(|e| Error::Config(format!("letter set `{name}`: {e}")))
    }
}

fn letters_of(text: &str) -> Result<Vec<Letter>> {
    let letters: Vec<Letter> = text.chars().map(Letter::new).collect::<Result<_>>()?;
    if letters.is_empty() {
        return Err(Error::Config("empty letter list".into()));
    }
    Ok(letters)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FindingResult {
    pub name: String,
    pub category: String,
    pub dimension: Dimension,
    /// Observed order for rankings (e.g. `O>A>U>E>I`), group means otherwise.
    pub observed: String,
    pub rho: Option<f64>,
    pub high_mean: Option<f64>,
    pub low_mean: Option<f64>,
    /// `None` when the statistic is undefined (zero variance or missing values).
    pub consistent: Option<bool>,
}

fn value(profile: &LetterProfile, l: Letter, dim: Dimension) -> Option<f64> {
    profile.get(l, dim)
}

fn group_mean(profile: &LetterProfile, letters: &[Letter], dim: Dimension) -> Option<f64> {
    let vals: Vec<f64> = letters
        .iter()
        .filter_map(|&l| value(profile, l, dim))
        .collect();
    (!vals.is_empty()).then(|| mean(&vals))
}

/// Scores every finding on a letter profile.
pub fn classic_findings(
    profile: &LetterProfile,
    findings: &FindingSet,
) -> Result<Vec<FindingResult>> {
    findings
        .finding
        .iter()
        .map(|f| {
            let dim = f.dimension;
            match &f.pattern {
                Pattern::Ranking { ranking } => {
                    let letters = letters_of(ranking)?;
                    let observed: Option<Vec<f64>> =
                        letters.iter().map(|&l| value(profile, l, dim)).collect();
                    let (rho, order) = match observed {
                        Some(obs) => {
                            // Expected values: first letter highest.
                            let expected: Vec<f64> =
                                (0..letters.len()).rev().map(|i| i as f64).collect();
                            let mut order: Vec<(Letter, f64)> =
                                letters.iter().copied().zip(obs.iter().copied()).collect();
                            order.sort_by(|a, b| b.1.total_cmp(&a.1));
                            let text = order
                                .iter()
                                .map(|(l, _)| l.as_char().to_ascii_uppercase().to_string())
                                .collect::<Vec<_>>()
                                .join(">");
                            (spearman(&obs, &expected), text)
                        }
                        None => (None, "NA".to_string()),
                    };
                    Ok(FindingResult {
                        name: f.name.clone(),
                        category: f.category.clone(),
                        dimension: dim,
                        observed: order,
                        rho,
                        high_mean: None,
                        low_mean: None,
                        consistent: rho.map(|r| r > 0.0),
                    })
                }
                Pattern::Groups { high, low } => {
                    let hi = group_mean(profile, &findings.group(high)?, dim);
                    let lo = group_mean(profile, &findings.group(low)?, dim);
                    let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:+.2}"));
                    Ok(FindingResult {
                        name: f.name.clone(),
                        category: f.category.clone(),
                        dimension: dim,
                        observed: format!("{high}={} {low}={}", fmt(hi), fmt(lo)),
                        rho: None,
                        high_mean: hi,
                        low_mean: lo,
                        consistent: match (hi, lo) {
                            (Some(h), Some(l)) if h != l => Some(h > l),
                            _ => None,
                        },
                    })
                }
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile_with(dim: Dimension, values: &[(char, f64)]) -> LetterProfile {
        let mut m = [[0.0; Dimension::COUNT]; 26];
        for &(c, v) in values {
            m[Letter::new(c).unwrap().index()][dim.index()] = v;
        }
        LetterProfile::from_values(&m)
    }

    #[test]
    fn fifteen_bundled_findings() {
        let set = FindingSet::bundled();
        assert_eq!(set.finding.len(), 15);
    }

    #[test]
    fn sapir_ranking_scores_one() {
        let p = profile_with(
            Dimension::Size,
            &[('o', 0.9), ('a', 0.5), ('u', 0.2), ('e', -0.3), ('i', -1.6)],
        );
        let res = classic_findings(&p, &FindingSet::bundled()).unwrap();
        let size = res.iter().find(|r| r.name == "Vowel size ranking").unwrap();
        assert_eq!(size.rho, Some(1.0));
        assert_eq!(size.observed, "O>A>U>E>I");
        assert_eq!(size.consistent, Some(true));
    }

    #[test]
    fn flat_profile_is_undefined() {
        let p = LetterProfile::from_values(&[[0.0; Dimension::COUNT]; 26]);
        let res = classic_findings(&p, &FindingSet::bundled()).unwrap();
        assert!(res.iter().all(|r| r.consistent.is_none()));
        assert!(res[0].rho.is_none());
    }

    #[test]
    fn brightness_reference_gives_point_nine() {
        // Observed I>A>E>O>U against the reference i>e>a>o>u.
        let p = profile_with(
            Dimension::Brightness,
            &[('i', 1.0), ('a', 0.5), ('e', 0.2), ('o', -0.4), ('u', -0.9)],
        );
        let res = classic_findings(&p, &FindingSet::bundled()).unwrap();
        let b = res
            .iter()
            .find(|r| r.name == "Vowel brightness ranking")
            .unwrap();
        assert!((b.rho.unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn unknown_set_is_config_error() {
        let text = "[sets]\nx = \"ab\"\n[[finding]]\nname='n'\ncitation='c'\ncategory='k'\ndimension='size'\nkind='groups'\nhigh='x'\nlow='nope'\n";
        assert!(matches!(FindingSet::parse(text), Err(Error::Config(_))));
    }
}
