//! Letter to phoneme mapping, articulatory feature vectors and signed
//! feature deltas for letter contrasts.
//!
//! All tables are plain data files bundled with the crate and can be
//! replaced from disk.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::letters::{Letter, LetterPair, PairClass};
use crate::tsv::Table;

const BUNDLED_FEATURES: &str = include_str!("../data/features.tsv");
const BUNDLED_LETTERS: &str = include_str!("../data/letter_map.tsv");
const BUNDLED_CONFIG: &str = include_str!("../data/phonfeat.toml");

pub const N_FEATURES: usize = 24;

/// Feature order of every vector in this module.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "syllabic",
    "sonorant",
    "consonantal",
    "continuant",
    "delayed_release",
    "lateral",
    "nasal",
    "strident",
    "voice",
    "spread_glottis",
    "constricted_glottis",
    "labial",
    "round",
    "labiodental",
    "coronal",
    "anterior",
    "distributed",
    "dorsal",
    "high",
    "low",
    "back",
    "tense",
    "long",
    "trill",
];

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|&f| f == name)
}

fn require_feature(name: &str) -> Result<usize> {
    feature_index(name)
        .ok_or_else(|| Error::Config(format!("unknown articulatory feature `{name}`")))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector([f64; N_FEATURES]);

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.0[i])
    }

    pub fn values(&self) -> &[f64; N_FEATURES] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        FEATURE_NAMES.iter().copied().zip(self.0.iter().copied())
    }

    fn sub(&self, other: &FeatureVector) -> [f64; N_FEATURES] {
        std::array::from_fn(|i| self.0[i] - other.0[i])
    }
}

/// Signed feature difference `second - first` for a contrast.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDelta {
    pub contrast: LetterPair,
    deltas: [f64; N_FEATURES],
}

impl FeatureDelta {
    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.deltas[i])
    }

    pub fn values(&self) -> &[f64; N_FEATURES] {
        &self.deltas
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        FEATURE_NAMES
            .iter()
            .copied()
            .zip(self.deltas.iter().copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureClass {
    Manner,
    Place,
    Laryngeal,
    Major,
}

impl FeatureClass {
    pub const ALL: [FeatureClass; 4] = [
        FeatureClass::Manner,
        FeatureClass::Place,
        FeatureClass::Laryngeal,
        FeatureClass::Major,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureClass::Manner => "manner",
            FeatureClass::Place => "place",
            FeatureClass::Laryngeal => "laryngeal",
            FeatureClass::Major => "major",
        }
    }
}

impl std::fmt::Display for FeatureClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Deserialize)]
struct PerClassLists {
    #[serde(rename = "CC")]
    cc: Vec<String>,
    #[serde(rename = "VV")]
    vv: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct ConfigFile {
    design: PerClassLists,
    correlation: PerClassLists,
    classes: BTreeMap<FeatureClass, Vec<String>>,
}

/// Feature table, letter map, design lists and the feature-class partition.
#[derive(Debug, Clone)]
pub struct PhonFeat {
    segments: BTreeMap<String, [i8; N_FEATURES]>,
    letter_segments: Vec<Vec<String>>,
    letter_vectors: Vec<FeatureVector>,
    design_cc: Vec<usize>,
    design_vv: Vec<usize>,
    corr_cc: Vec<usize>,
    corr_vv: Vec<usize>,
    classes: [FeatureClass; N_FEATURES],
}

fn parse_features(source: &str, text: &str) -> Result<BTreeMap<String, [i8; N_FEATURES]>> {
    let table = Table::parse(source, text)?;
    if table.header.first().map(String::as_str) != Some("segment")
        || table.header.len() != N_FEATURES + 1
    {
        return Err(Error::format(
            source,
            1,
            format!("expected `segment` plus {N_FEATURES} feature columns"),
        ));
    }
    let cols: Vec<usize> = FEATURE_NAMES
        .iter()
        .map(|f| {
            table
                .column(f)
                .ok_or_else(|| Error::format(source, 1, format!("missing feature column `{f}`")))
        })
        .collect::<Result<_>>()?;
    let mut out = BTreeMap::new();
    for (i, row) in table.rows.iter().enumerate() {
        let mut v = [0i8; N_FEATURES];
        for (k, &c) in cols.iter().enumerate() {
            v[k] = match row[c].as_str() {
                "+" => 1,
                "-" => -1,
                "0" => 0,
                other => {
                    return Err(Error::format(
                        source,
                        i + 2,
                        format!("feature value `{other}` is not +, - or 0"),
                    ))
                }
            };
        }
        if out.insert(row[0].clone(), v).is_some() {
            return Err(Error::format(
                source,
                i + 2,
                format!("duplicate segment `{}`", row[0]),
            ));
        }
    }
    Ok(out)
}

impl PhonFeat {
    pub fn bundled() -> PhonFeat {
        PhonFeat::parse(BUNDLED_FEATURES, BUNDLED_LETTERS, BUNDLED_CONFIG)
            .expect("bundled feature tables are valid")
    }

    /// Loads any subset of the three tables from disk, falling back to the
    /// bundled copy for the rest.
    pub fn load(
        features: Option<&Path>,
        letters: Option<&Path>,
        config: Option<&Path>,
    ) -> Result<PhonFeat> {
        let read = |p: Option<&Path>, fallback: &str| -> Result<String> {
            match p {
                Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e)),
                None => Ok(fallback.to_string()),
            }
        };
        PhonFeat::parse(
            &read(features, BUNDLED_FEATURES)?,
            &read(letters, BUNDLED_LETTERS)?,
            &read(config, BUNDLED_CONFIG)?,
        )
    }

    pub fn parse(features_text: &str, letters_text: &str, config_text: &str) -> Result<PhonFeat> {
        let segments = parse_features("feature table", features_text)?;

        let letters = Table::parse("letter map", letters_text)?;
        let (lc, sc) = match (letters.column("letter"), letters.column("segments")) {
            (Some(l), Some(s)) => (l, s),
            _ => {
                return Err(Error::format(
                    "letter map",
                    1,
                    "expected `letter` and `segments` columns",
                ))
            }
        };
        let mut letter_segments: Vec<Option<Vec<String>>> = vec![None; 26];
        for (i, row) in letters.rows.iter().enumerate() {
            let mut chars = row[lc].chars();
            let letter = match (chars.next(), chars.next()) {
                (Some(c), None) => Letter::new(c)?,
                _ => {
                    return Err(Error::format(
                        "letter map",
                        i + 2,
                        format!("`{}` is not a letter", row[lc]),
                    ))
                }
            };
            let segs: Vec<String> = row[sc].split_whitespace().map(str::to_string).collect();
            if segs.is_empty() || segs.len() > 2 {
                return Err(Error::format(
                    "letter map",
                    i + 2,
                    "a letter maps to one or two segments",
                ));
            }
            for s in &segs {
                if !segments.contains_key(s) {
                    return Err(Error::Config(format!(
                        "letter {letter} uses segment `{s}` missing from the feature table"
                    )));
                }
            }
            letter_segments[letter.index()] = Some(segs);
        }
        let letter_segments: Vec<Vec<String>> = letter_segments
            .into_iter()
            .enumerate()
            .map(|(i, s)| {
                s.ok_or_else(|| {
                    Error::Config(format!("letter map is missing `{}`", Letter::from_index(i)))
                })
            })
            .collect::<Result<_>>()?;

        let letter_vectors = letter_segments
            .iter()
            .map(|segs| {
                let mut acc = [0.0; N_FEATURES];
                for s in segs {
                    for (a, &v) in acc.iter_mut().zip(segments[s].iter()) {
                        *a += f64::from(v);
                    }
                }
                FeatureVector(acc.map(|x| x / segs.len() as f64))
            })
            .collect();

        let config: ConfigFile = toml::from_str(config_text)
            .map_err(|e| Error::Config(format!("feature config: {e}")))?;
        let to_idx = |names: &[String]| {
            names
                .iter()
                .map(|n| require_feature(n))
                .collect::<Result<Vec<_>>>()
        };
        let mut classes: [Option<FeatureClass>; N_FEATURES] = [None; N_FEATURES];
        for (&class, names) in &config.classes {
            for n in names {
                let i = require_feature(n)?;
                if let Some(prev) = classes[i] {
                    return Err(Error::Config(format!(
                        "feature `{n}` is in both {prev} and {class}"
                    )));
                }
                classes[i] = Some(class);
            }
        }
        let classes = std::array::from_fn(|i| classes[i]);
        if let Some(i) = classes.iter().position(Option::is_none) {
            return Err(Error::Config(format!(
                "feature `{}` has no class",
                FEATURE_NAMES[i]
            )));
        }
        let classes = classes.map(|c| c.expect("checked above"));

        let mut pf = PhonFeat {
            segments,
            letter_segments,
            letter_vectors,
            design_cc: to_idx(&config.design.cc)?,
            design_vv: to_idx(&config.design.vv)?,
            corr_cc: to_idx(&config.correlation.cc)?,
            corr_vv: to_idx(&config.correlation.vv)?,
            classes,
        };
        // Design lists only keep features that vary within the class.
        for class in [PairClass::Cc, PairClass::Vv] {
            let keep: Vec<usize> = pf
                .design_indices(class)
                .iter()
                .copied()
                .filter(|&i| pf.varies_within(class, i))
                .collect();
            match class {
                PairClass::Cc => pf.design_cc = keep,
                PairClass::Vv => pf.design_vv = keep,
            }
        }
        Ok(pf)
    }

    fn design_indices(&self, class: PairClass) -> &[usize] {
        match class {
            PairClass::Cc => &self.design_cc,
            PairClass::Vv => &self.design_vv,
        }
    }

    /// True when some contrast of `class` has a nonzero delta on the feature.
    pub fn varies_within(&self, class: PairClass, feature: usize) -> bool {
        let letters: Vec<Letter> = Letter::of_class(class.letter_class()).collect();
        let v0 = self.letter_vectors[letters[0].index()].0[feature];
        letters
            .iter()
            .any(|l| self.letter_vectors[l.index()].0[feature] != v0)
    }

    pub fn segment(&self, label: &str) -> Option<[i8; N_FEATURES]> {
        self.segments.get(label).copied()
    }

    pub fn segments_of(&self, letter: Letter) -> &[String] {
        &self.letter_segments[letter.index()]
    }

    /// Letter vector; multi-segment letters average their segments without snapping.
    pub fn canonical_vector(&self, letter: Letter) -> FeatureVector {
        self.letter_vectors[letter.index()]
    }

    pub fn feature_delta(&self, contrast: LetterPair) -> FeatureDelta {
        let a = self.canonical_vector(contrast.first());
        let b = self.canonical_vector(contrast.second());
        FeatureDelta {
            contrast,
            deltas: b.sub(&a),
        }
    }

    /// Regression predictors for a contrast class, in configured order.
    pub fn design_features(&self, class: PairClass) -> Vec<&'static str> {
        self.design_indices(class)
            .iter()
            .map(|&i| FEATURE_NAMES[i])
            .collect()
    }

    /// Features entered in the correlation matrix (may include zero-variance ones).
    pub fn correlation_features(&self, class: PairClass) -> Vec<&'static str> {
        let idx = match class {
            PairClass::Cc => &self.corr_cc,
            PairClass::Vv => &self.corr_vv,
        };
        idx.iter().map(|&i| FEATURE_NAMES[i]).collect()
    }

    pub fn feature_class(&self, feature: &str) -> Option<FeatureClass> {
        feature_index(feature).map(|i| self.classes[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(c: char) -> Letter {
        Letter::new(c).unwrap()
    }

    fn pair(s: &str) -> LetterPair {
        s.parse().unwrap()
    }

    #[test]
    fn bundled_table_is_complete() {
        let pf = PhonFeat::bundled();
        for letter in Letter::all() {
            let segs = pf.segments_of(letter);
            assert!(!segs.is_empty() && segs.len() <= 2);
            for s in segs {
                let row = pf.segment(s).unwrap();
                assert!(row.iter().all(|v| (-1..=1).contains(v)));
            }
        }
        assert_eq!(pf.segments_of(l('x')).len(), 2);
    }

    #[test]
    fn m_and_t_rows() {
        let pf = PhonFeat::bundled();
        let m = pf.canonical_vector(l('m'));
        assert_eq!(m.get("sonorant"), Some(1.0));
        assert_eq!(m.get("nasal"), Some(1.0));
        assert_eq!(m.get("voice"), Some(1.0));
        let t = pf.canonical_vector(l('t'));
        assert_eq!(t.get("sonorant"), Some(-1.0));
        assert_eq!(t.get("voice"), Some(-1.0));
        assert_eq!(t.get("continuant"), Some(-1.0));
    }

    #[test]
    fn self_delta_is_zero() {
        let pf = PhonFeat::bundled();
        let a = pf.canonical_vector(l('a'));
        assert!(a.sub(&a).iter().all(|&d| d == 0.0));
    }

    #[test]
    fn delta_examples() {
        let pf = PhonFeat::bundled();
        let mt = pf.feature_delta(pair("m-t"));
        assert_eq!(mt.get("sonorant"), Some(-2.0));
        let bp = pf.feature_delta(pair("b-p"));
        assert_eq!(bp.get("voice"), Some(-2.0));
        for (name, d) in bp.iter() {
            if pf.feature_class(name) == Some(FeatureClass::Place) {
                assert_eq!(d, 0.0, "{name}");
            }
            if pf.feature_class(name) != Some(FeatureClass::Laryngeal) {
                assert_eq!(d, 0.0, "{name}");
            }
        }
        assert!(LetterPair::new(l('x'), l('x')).is_err());
    }

    #[test]
    fn x_keeps_fractional_means() {
        let pf = PhonFeat::bundled();
        let x = pf.canonical_vector(l('x'));
        // k is [-continuant], s is [+continuant]
        assert_eq!(x.get("continuant"), Some(0.0));
        assert_eq!(x.get("strident"), Some(0.0));
        assert_eq!(x.get("coronal"), Some(0.0));
        assert_eq!(x.get("voice"), Some(-1.0));
    }

    #[test]
    fn antisymmetry_over_all_pairs() {
        let pf = PhonFeat::bundled();
        for p in LetterPair::all() {
            let fwd = pf.feature_delta(p);
            let rev = pf.feature_delta(p.swapped());
            for i in 0..N_FEATURES {
                assert_eq!(fwd.values()[i], -rev.values()[i]);
                assert!(fwd.values()[i].abs() <= 2.0);
            }
        }
    }

    #[test]
    fn design_feature_counts() {
        let pf = PhonFeat::bundled();
        assert_eq!(pf.design_features(PairClass::Cc).len(), 11);
        assert_eq!(pf.design_features(PairClass::Vv).len(), 4);
        assert!(!pf.design_features(PairClass::Vv).contains(&"sonorant"));
    }

    #[test]
    fn design_features_vary_over_pairs() {
        let pf = PhonFeat::bundled();
        for class in [PairClass::Cc, PairClass::Vv] {
            let pairs = LetterPair::all_of_class(class);
            for f in pf.design_features(class) {
                let vals: Vec<f64> = pairs
                    .iter()
                    .map(|&p| pf.feature_delta(p).get(f).unwrap())
                    .collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
                assert!(var > 0.0, "{class} {f}");
            }
        }
    }

    #[test]
    fn vowel_constant_features_are_dropped_constructively() {
        let config = BUNDLED_CONFIG.replace(
            "VV = [\"high\", \"low\", \"back\", \"tense\"]",
            "VV = [\"sonorant\", \"high\", \"low\", \"back\", \"tense\"]",
        );
        let pf = PhonFeat::parse(BUNDLED_FEATURES, BUNDLED_LETTERS, &config).unwrap();
        assert_eq!(
            pf.design_features(PairClass::Vv),
            vec!["high", "low", "back", "tense"]
        );
    }

    #[test]
    fn classes_partition_every_feature() {
        let pf = PhonFeat::bundled();
        for f in FEATURE_NAMES {
            assert!(pf.feature_class(f).is_some());
        }
        assert_eq!(pf.feature_class("sonorant"), Some(FeatureClass::Manner));
        assert_eq!(pf.feature_class("high"), Some(FeatureClass::Place));
        assert_eq!(pf.feature_class("voice"), Some(FeatureClass::Laryngeal));
    }

    #[test]
    fn duplicate_class_membership_is_rejected() {
        let config = BUNDLED_CONFIG.replace(
            "laryngeal = [\"voice\"",
            "laryngeal = [\"sonorant\", \"voice\"",
        );
        assert!(matches!(
            PhonFeat::parse(BUNDLED_FEATURES, BUNDLED_LETTERS, &config),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn missing_segment_is_rejected() {
        let letters = BUNDLED_LETTERS.replace("b\tb", "b\tβ");
        assert!(PhonFeat::parse(BUNDLED_FEATURES, &letters, BUNDLED_CONFIG).is_err());
    }
}
