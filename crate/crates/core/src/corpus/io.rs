use std::path::Path;

use super::{Corpus, Manifest, NonwordPair, Pseudoword};
use crate::error::{Error, Result};
use crate::tsv::{self, Table};

pub const CORPUS_SCHEMA: &str = "phonosem-corpus/1";

const COLUMNS: [&str; 7] = [
    "pair_id",
    "contrast",
    "class",
    "word_a",
    "word_b",
    "occurrence_count",
    "target_positions",
];

/// Writes `pairs.tsv` and `manifest.json` into `dir`.
pub fn write_corpus(corpus: &Corpus, dir: &Path) -> Result<()> {
    let mut table = Table::new(COLUMNS)
        .with_meta("schema", CORPUS_SCHEMA)
        .with_meta("config_hash", &corpus.manifest.config_hash)
        .with_meta("seed", corpus.manifest.seed.to_string());
    for p in &corpus.pairs {
        let positions: Vec<String> = p
            .word_a
            .target_positions
            .iter()
            .map(usize::to_string)
            .collect();
        table.push([
            p.pair_id.clone(),
            p.contrast.to_string(),
            p.class().to_string(),
            p.word_a.text.clone(),
            p.word_b.text.clone(),
            p.occurrence_count.to_string(),
            positions.join(";"),
        ]);
    }
    table.write(&dir.join("pairs.tsv"))?;
    let mut manifest = serde_json::to_string_pretty(&corpus.manifest).expect("manifest serializes");
    manifest.push('\n');
    tsv::write_file(&dir.join("manifest.json"), manifest.as_bytes())
}

pub fn read_corpus(dir: &Path) -> Result<Corpus> {
    let pairs_path = dir.join("pairs.tsv");
    let manifest_path = dir.join("manifest.json");
    let table = Table::read(&pairs_path)?;
    let src = pairs_path.display().to_string();
    match table.meta_value("schema") {
        Some(CORPUS_SCHEMA) => {}
        other => {
            return Err(Error::Schema {
                path: src,
                expected: CORPUS_SCHEMA.into(),
                found: other.unwrap_or("none").into(),
            })
        }
    }
    let cols = table.require_columns(&src, &COLUMNS)?;
    let mut pairs = Vec::with_capacity(table.rows.len());
    for (i, row) in table.rows.iter().enumerate() {
        let line = i + 2 + table.meta.len();
        let field = |name: &str| row[cols[name]].as_str();
        let bad = |m: String| Error::format(src.clone(), line, m);
        let contrast = field("contrast")
            .parse()
            .map_err(|e: Error| bad(e.to_string()))?;
        let occurrence_count: u8 = field("occurrence_count").parse().map_err(|_| {
            bad(format!(
                "bad occurrence_count `{}`",
                field("occurrence_count")
            ))
        })?;
        let target_positions = field("target_positions")
            .split(';')
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|_| bad(format!("bad target position `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let pair = NonwordPair {
            pair_id: field("pair_id").to_string(),
            contrast,
            word_a: Pseudoword {
                text: field("word_a").to_string(),
                target_positions: target_positions.clone(),
            },
            word_b: Pseudoword {
                text: field("word_b").to_string(),
                target_positions,
            },
            occurrence_count,
        };
        if pair.class().as_str() != field("class") {
            return Err(bad(format!(
                "class `{}` does not match contrast",
                field("class")
            )));
        }
        pairs.push(pair);
    }
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::format(manifest_path.display().to_string(), e.line(), e.to_string()))?;
    if manifest.total_pairs != pairs.len() {
        return Err(Error::Invariant(format!(
            "manifest lists {} pairs but {} has {}",
            manifest.total_pairs,
            src,
            pairs.len()
        )));
    }
    Ok(Corpus { pairs, manifest })
}
