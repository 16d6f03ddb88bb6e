use std::collections::BTreeMap;
use std::path::Path;

use super::cells::{ConsensusCell, EffectCell};
use super::profile::{LetterMatrix, LetterProfile, PcaResult};
use super::Analysis;
use crate::error::{Error, Result};
use crate::letters::Letter;
use crate::ratings::Dimension;
use crate::tsv::{self, fmt_f64, fmt_opt, Table};

pub const EFFECTS_SCHEMA: &str = "phonosem-effects/1";
pub const CONSENSUS_FILE: &str = "consensus.tsv";
pub const PROFILE_FILE: &str = "profile.tsv";

fn header_with_dims(lead: &[&str]) -> Vec<String> {
    lead.iter()
        .map(|s| s.to_string())
        .chain(Dimension::ALL.iter().map(|d| d.to_string()))
        .collect()
}

fn meta(table: Table, config_hash: &str) -> Table {
    table
        .with_meta("schema", EFFECTS_SCHEMA)
        .with_meta("config_hash", config_hash)
}

fn flag(b: Option<bool>) -> String {
    match b {
        Some(true) => "1".into(),
        Some(false) => "0".into(),
        None => "NA".into(),
    }
}

pub fn effects_table(
    cells: &[EffectCell],
    consensus: &[ConsensusCell],
    config_hash: &str,
) -> Table {
    let mut t = meta(
        Table::new([
            "contrast",
            "class",
            "dimension",
            "rater_id",
            "n_pairs",
            "mean_diff",
            "d",
            "p",
            "q",
            "t_p",
            "consensus",
        ]),
        config_hash,
    );
    let lookup: BTreeMap<(String, Dimension), Option<bool>> = consensus
        .iter()
        .map(|c| ((c.contrast.to_string(), c.dimension), c.significant))
        .collect();
    for c in cells {
        t.push([
            c.contrast.to_string(),
            c.contrast.class().to_string(),
            c.dimension.to_string(),
            c.rater_id.clone(),
            c.n_pairs.to_string(),
            fmt_f64(c.mean_diff),
            fmt_opt(c.d),
            fmt_f64(c.p),
            fmt_f64(c.q),
            fmt_opt(c.t_p),
            flag(
                lookup
                    .get(&(c.contrast.to_string(), c.dimension))
                    .copied()
                    .flatten(),
            ),
        ]);
    }
    t
}

pub fn consensus_table(consensus: &[ConsensusCell], config_hash: &str) -> Table {
    let mut t = meta(
        Table::new([
            "contrast",
            "class",
            "dimension",
            "d",
            "n_raters",
            "n_agree",
            "significant",
        ]),
        config_hash,
    );
    for c in consensus {
        t.push([
            c.contrast.to_string(),
            c.contrast.class().to_string(),
            c.dimension.to_string(),
            fmt_opt(c.d),
            c.n_raters.to_string(),
            c.n_agree.to_string(),
            flag(c.significant),
        ]);
    }
    t
}

fn matrix_rows(t: &mut Table, prefix: &[String], m: &LetterMatrix) {
    for l in Letter::all() {
        let mut row = prefix.to_vec();
        row.push(l.to_string());
        row.extend(m[l.index()].iter().map(|v| fmt_opt(*v)));
        t.push(row);
    }
}

pub fn profile_table(profile: &LetterProfile, config_hash: &str) -> Table {
    let mut t = meta(Table::new(header_with_dims(&["letter"])), config_hash);
    matrix_rows(&mut t, &[], &profile.consensus);
    t
}

pub fn rater_profile_table(profile: &LetterProfile, config_hash: &str) -> Table {
    let mut t = meta(
        Table::new(header_with_dims(&["rater_id", "letter"])),
        config_hash,
    );
    for (rater, m) in &profile.per_rater {
        matrix_rows(&mut t, std::slice::from_ref(rater), m);
    }
    t
}

pub fn pca_tables(pca: &PcaResult, config_hash: &str) -> (Table, Table) {
    let mut loadings = meta(
        Table::new(header_with_dims(&["component", "explained_variance_ratio"])),
        config_hash,
    );
    for (j, comp) in pca.components.iter().enumerate() {
        let mut row = vec![
            format!("PC{}", j + 1),
            fmt_f64(pca.explained_variance_ratio[j]),
        ];
        row.extend(comp.iter().map(|v| fmt_f64(*v)));
        loadings.push(row);
    }
    let header: Vec<String> = std::iter::once("letter".to_string())
        .chain((1..=pca.components.len()).map(|j| format!("PC{j}")))
        .collect();
    let mut scores = meta(Table::new(header), config_hash);
    for l in Letter::all() {
        let mut row = vec![l.to_string()];
        row.extend(pca.scores[l.index()].iter().map(|v| fmt_f64(*v)));
        scores.push(row);
    }
    (loadings, scores)
}

/// Writes every effects artifact into `dir`.
pub fn write_analysis(dir: &Path, analysis: &Analysis, config_hash: &str) -> Result<()> {
    let table = &analysis.table;
    effects_table(&table.cells, &table.consensus, config_hash).write(&dir.join("effects.tsv"))?;
    consensus_table(&table.consensus, config_hash).write(&dir.join(CONSENSUS_FILE))?;
    profile_table(&analysis.profile, config_hash).write(&dir.join(PROFILE_FILE))?;
    rater_profile_table(&analysis.profile, config_hash).write(&dir.join("profile_by_rater.tsv"))?;
    if let Some(pca) = &analysis.pca {
        let (loadings, scores) = pca_tables(pca, config_hash);
        loadings.write(&dir.join("pca_loadings.tsv"))?;
        scores.write(&dir.join("pca_scores.tsv"))?;
    }
    let mut json = serde_json::to_value(analysis.report()).expect("report serializes");
    json["config_hash"] = config_hash.into();
    json["schema"] = EFFECTS_SCHEMA.into();
    let mut text = serde_json::to_string_pretty(&json).expect("value serializes");
    text.push('\n');
    tsv::write_file(&dir.join("analysis.json"), text.as_bytes())
}

fn read_checked(path: &Path) -> Result<Table> {
    let table = Table::read(path)?;
    let found = table.meta_value("schema").unwrap_or("");
    if found != EFFECTS_SCHEMA {
        return Err(Error::Schema {
            path: path.display().to_string(),
            expected: EFFECTS_SCHEMA.into(),
            found: found.into(),
        });
    }
    Ok(table)
}

fn parse_opt(src: &str, line: usize, s: &str) -> Result<Option<f64>> {
    if s == "NA" {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::format(src, line, format!("bad number `{s}`")))
}

fn parse_usize(src: &str, line: usize, s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::format(src, line, format!("bad count `{s}`")))
}

pub fn read_consensus(path: &Path) -> Result<Vec<ConsensusCell>> {
    let table = read_checked(path)?;
    let src = path.display().to_string();
    let cols = table.require_columns(
        &src,
        &[
            "contrast",
            "dimension",
            "d",
            "n_raters",
            "n_agree",
            "significant",
        ],
    )?;
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let f = |n: &str| row[cols[n]].as_str();
            Ok(ConsensusCell {
                contrast: f("contrast").parse()?,
                dimension: f("dimension").parse()?,
                d: parse_opt(&src, i + 1, f("d"))?,
                n_raters: parse_usize(&src, i + 1, f("n_raters"))?,
                n_agree: parse_usize(&src, i + 1, f("n_agree"))?,
                significant: match f("significant") {
                    "1" => Some(true),
                    "0" => Some(false),
                    _ => None,
                },
            })
        })
        .collect()
}

pub fn read_profile(path: &Path) -> Result<LetterProfile> {
    let table = read_checked(path)?;
    let src = path.display().to_string();
    let mut names = vec!["letter"];
    names.extend(Dimension::ALL.iter().map(|d| d.as_str()));
    let cols = table.require_columns(&src, &names)?;
    let mut consensus = [[None; Dimension::COUNT]; 26];
    for (i, row) in table.rows.iter().enumerate() {
        let letter_text = &row[cols["letter"]];
        let mut chars = letter_text.chars();
        let letter = match (chars.next(), chars.next()) {
            (Some(c), None) => Letter::new(c)?,
            _ => {
                return Err(Error::format(
                    &src,
                    i + 1,
                    format!("bad letter `{letter_text}`"),
                ))
            }
        };
        for d in Dimension::ALL {
            consensus[letter.index()][d.index()] = parse_opt(&src, i + 1, &row[cols[d.as_str()]])?;
        }
    }
    Ok(LetterProfile {
        consensus,
        per_rater: BTreeMap::new(),
    })
}
