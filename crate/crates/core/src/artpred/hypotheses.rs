use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::letters::PairClass;
use crate::phonfeat::PhonFeat;
use crate::ratings::Dimension;
use crate::stats::{pearson, pearson_p};

use super::Targets;

const BUNDLED: &str = include_str!("../../data/hypotheses.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hypothesis {
    pub name: String,
    pub citation: String,
    pub feature: String,
    pub dimension: Dimension,
    pub expected_sign: i8,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HypothesisFile {
    hypothesis: Vec<Hypothesis>,
}

pub fn bundled_hypotheses() -> Vec<Hypothesis> {
    parse_hypotheses(BUNDLED).expect("bundled hypotheses parse")
}

pub fn parse_hypotheses(text: &str) -> Result<Vec<Hypothesis>> {
    let file: HypothesisFile =
        toml::from_str(text).map_err(|e| Error::Config(format!("hypotheses: {e}")))?;
    for h in &file.hypothesis {
        if h.expected_sign != 1 && h.expected_sign != -1 {
            return Err(Error::Config(format!(
                "{}: expected_sign must be 1 or -1",
                h.name
            )));
        }
    }
    Ok(file.hypothesis)
}

pub fn load_hypotheses(path: Option<&Path>) -> Result<Vec<Hypothesis>> {
    match path {
        None => Ok(bundled_hypotheses()),
        Some(p) => parse_hypotheses(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Consistent,
    Inconsistent,
    /// The feature has no variance within the class.
    Na,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisResult {
    pub name: String,
    pub class: PairClass,
    pub feature: String,
    pub dimension: Dimension,
    pub expected_sign: i8,
    pub r: Option<f64>,
    pub p: Option<f64>,
    pub n: usize,
    pub verdict: Verdict,
    /// p < .05 uncorrected, in the expected direction.
    pub significant: bool,
}

/// Pearson r between a feature's deltas and the consensus effects, per class.
pub fn evaluate_hypotheses(
    hypotheses: &[Hypothesis],
    phonfeat: &PhonFeat,
    targets: &[(PairClass, Targets)],
) -> Result<Vec<HypothesisResult>> {
    let mut out = Vec::new();
    for h in hypotheses {
        let fi = crate::phonfeat::feature_index(&h.feature)
            .ok_or_else(|| Error::Config(format!("{}: unknown feature `{}`", h.name, h.feature)))?;
        for (class, rows) in targets {
            let (x, y): (Vec<f64>, Vec<f64>) = rows
                .iter()
                .filter_map(|(contrast, ds)| {
                    Some((
                        phonfeat.feature_delta(*contrast).values()[fi],
                        ds[h.dimension.index()]?,
                    ))
                })
                .unzip();
            let varies = phonfeat.varies_within(*class, fi);
            let r = if varies { pearson(&x, &y) } else { None };
            let p = r.and_then(|r| pearson_p(r, x.len()));
            let verdict = match r {
                _ if !varies => Verdict::Na,
                Some(r) if r * f64::from(h.expected_sign) > 0.0 => Verdict::Consistent,
                _ => Verdict::Inconsistent,
            };
            out.push(HypothesisResult {
                name: h.name.clone(),
                class: *class,
                feature: h.feature.clone(),
                dimension: h.dimension,
                expected_sign: h.expected_sign,
                r,
                p,
                n: x.len(),
                verdict,
                significant: verdict == Verdict::Consistent && p.is_some_and(|p| p < 0.05),
            });
        }
    }
    Ok(out)
}

/// Hypotheses consistent in every class where they apply (and applicable somewhere).
pub fn consistent_count(results: &[HypothesisResult]) -> usize {
    let mut names: Vec<&str> = results.iter().map(|r| r.name.as_str()).collect();
    names.dedup();
    names
        .into_iter()
        .filter(|name| {
            let rows: Vec<&HypothesisResult> = results.iter().filter(|r| r.name == *name).collect();
            rows.iter().any(|r| r.verdict != Verdict::Na)
                && rows.iter().all(|r| r.verdict != Verdict::Inconsistent)
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_bundled_hypotheses_on_design_features() {
        let hs = bundled_hypotheses();
        assert_eq!(hs.len(), 7);
        let pf = PhonFeat::bundled();
        for h in &hs {
            let in_design = [PairClass::Cc, PairClass::Vv]
                .iter()
                .any(|c| pf.design_features(*c).contains(&h.feature.as_str()));
            assert!(in_design, "{} uses {}", h.name, h.feature);
        }
    }

    #[test]
    fn bad_sign_rejected() {
        let text = "[[hypothesis]]\nname='x'\ncitation='y'\nfeature='voice'\ndimension='size'\nexpected_sign=2\n";
        assert!(parse_hypotheses(text).is_err());
    }
}
