use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{Dimension, Provenance, RatingRecord, RawScale};
use crate::error::{Error, Result};
use crate::tsv::{self, Table};

pub const STORE_SCHEMA: &str = "phonosem-ratings/1";

const COLUMNS: [&str; 7] = [
    "rater_id",
    "pair_id",
    "word",
    "dimension",
    "score",
    "raw_scale",
    "provenance",
];

/// All ratings, at most one per (rater, word, dimension).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RatingStore {
    records: Vec<RatingRecord>,
    provenance: BTreeMap<String, Provenance>,
    index: HashMap<(String, String, Dimension), usize>,
    /// Hash of the configuration that produced the store, if recorded.
    pub config_hash: Option<String>,
}

impl RatingStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[RatingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn provenance(&self) -> impl Iterator<Item = &Provenance> {
        self.provenance.values()
    }

    pub fn raters(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.records.iter().map(|r| r.rater_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn get(&self, rater: &str, word: &str, dim: Dimension) -> Option<f64> {
        self.index
            .get(&(rater.to_string(), word.to_string(), dim))
            .map(|&i| self.records[i].score)
    }

    pub fn add_provenance(&mut self, p: Provenance) {
        self.provenance.insert(p.hash.clone(), p);
    }

    /// Inserts a record, replacing any earlier rating of the same key.
    pub fn insert(&mut self, record: RatingRecord) -> Result<()> {
        check_record(&record)?;
        if !self.provenance.contains_key(&record.provenance) {
            return Err(Error::Invariant(format!(
                "record for `{}` cites unknown provenance {}",
                record.pseudoword, record.provenance
            )));
        }
        let key = (
            record.rater_id.clone(),
            record.pseudoword.clone(),
            record.dimension,
        );
        match self.index.get(&key) {
            Some(&i) => self.records[i] = record,
            None => {
                self.index.insert(key, self.records.len());
                self.records.push(record);
            }
        }
        Ok(())
    }

    pub fn extend(&mut self, provenance: Provenance, records: Vec<RatingRecord>) -> Result<()> {
        self.add_provenance(provenance);
        records.into_iter().try_for_each(|r| self.insert(r))
    }

    fn sorted(&self) -> Vec<&RatingRecord> {
        let mut out: Vec<&RatingRecord> = self.records.iter().collect();
        out.sort_by(|a, b| {
            (&a.rater_id, &a.pseudoword, a.dimension).cmp(&(
                &b.rater_id,
                &b.pseudoword,
                b.dimension,
            ))
        });
        out
    }

    pub fn to_table(&self) -> Table {
        let mut table = Table::new(COLUMNS);
        table.meta.push(("schema".into(), STORE_SCHEMA.into()));
        if let Some(h) = &self.config_hash {
            table.meta.push(("config_hash".into(), h.clone()));
        }
        for p in self.provenance.values() {
            table.meta.push((
                "provenance".into(),
                format!("{}|{}|{}|{}", p.hash, p.rater_id, p.kind, p.timestamp),
            ));
        }
        for r in self.sorted() {
            table.push(vec![
                r.rater_id.clone(),
                r.pair_id.clone(),
                r.pseudoword.clone(),
                r.dimension.to_string(),
                tsv::fmt_f64(r.score),
                r.raw_scale.as_str().to_string(),
                r.provenance.clone(),
            ]);
        }
        table
    }

    /// Writes the store as TSV; output is sorted so it is byte-stable.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_table().write(path)
    }
}

fn check_record(r: &RatingRecord) -> Result<()> {
    if !(0.0..=100.0).contains(&r.score) {
        return Err(Error::Invariant(format!(
            "score {} for `{}` ({}) outside 0-100",
            r.score, r.pseudoword, r.dimension
        )));
    }
    if r.pseudoword.is_empty() || r.rater_id.is_empty() {
        return Err(Error::Invariant("rating with empty rater or word".into()));
    }
    Ok(())
}

fn parse_provenance(source: &str, value: &str) -> Result<Provenance> {
    let parts: Vec<&str> = value.split('|').collect();
    if parts.len() != 4 {
        return Err(Error::format(
            source,
            0,
            format!("malformed provenance line `{value}`"),
        ));
    }
    Ok(Provenance {
        hash: parts[0].into(),
        rater_id: parts[1].into(),
        kind: parts[2].into(),
        timestamp: parts[3].into(),
    })
}

/// Loads a rating store, returning any non-fatal warnings.
///
/// An empty file yields an empty store and a warning. Schema mismatches and
/// scores outside 0-100 are errors.
pub fn load_store(path: &Path) -> Result<(RatingStore, Vec<String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.trim().is_empty() {
        let msg = format!("rating store {} is empty", path.display());
        log::warn!("{msg}");
        return Ok((RatingStore::new(), vec![msg]));
    }
    let src = path.display().to_string();
    let table = Table::parse(&src, &text)?;
    let schema = table.meta_value("schema").unwrap_or("");
    if schema != STORE_SCHEMA {
        return Err(Error::Schema {
            path: src.clone(),
            expected: STORE_SCHEMA.into(),
            found: schema.into(),
        });
    }
    let cols = table.require_columns(&src, &COLUMNS)?;
    let mut store = RatingStore::new();
    store.config_hash = table.meta_value("config_hash").map(str::to_string);
    for (key, value) in &table.meta {
        if key == "provenance" {
            store.add_provenance(parse_provenance(&src, value)?);
        }
    }
    for (i, row) in table.rows.iter().enumerate() {
        let line = i + 1;
        let field = |name: &str| row[cols[name]].as_str();
        let score: f64 = field("score")
            .parse()
            .map_err(|_| Error::format(&src, line, format!("bad score `{}`", field("score"))))?;
        let record = RatingRecord {
            rater_id: field("rater_id").into(),
            pseudoword: field("word").into(),
            pair_id: field("pair_id").into(),
            dimension: field("dimension").parse()?,
            score,
            raw_scale: field("raw_scale").parse::<RawScale>()?,
            provenance: field("provenance").into(),
        };
        store.insert(record)?;
    }
    Ok((store, Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance {
            hash: "0123456789abcdef".into(),
            rater_id: "syn".into(),
            kind: "synthetic".into(),
            timestamp: "unix:0".into(),
        }
    }

    fn rec(word: &str, dim: Dimension, score: f64) -> RatingRecord {
        RatingRecord {
            rater_id: "syn".into(),
            pseudoword: word.into(),
            pair_id: "e-o.s01".into(),
            dimension: dim,
            score,
            raw_scale: RawScale::ZeroToHundred,
            provenance: prov().hash,
        }
    }

    #[test]
    fn round_trip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ratings.tsv");
        let mut store = RatingStore::new();
        store
            .extend(
                prov(),
                vec![
                    rec("brov", Dimension::Size, 61.25),
                    rec("brev", Dimension::Size, 1.0 / 3.0),
                ],
            )
            .unwrap();
        store.save(&path).unwrap();
        let (back, warnings) = load_store(&path).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(back.len(), 2);
        assert_eq!(back.get("syn", "brev", Dimension::Size), Some(1.0 / 3.0));
        assert_eq!(back.provenance().next(), Some(&prov()));
        back.save(&dir.path().join("again.tsv")).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(dir.path().join("again.tsv")).unwrap()
        );
    }

    #[test]
    fn out_of_range_score_is_an_invariant_error() {
        let mut store = RatingStore::new();
        store.add_provenance(prov());
        assert!(matches!(
            store.insert(rec("brev", Dimension::Size, 150.0)),
            Err(Error::Invariant(_))
        ));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.tsv");
        let text = format!(
            "#schema={STORE_SCHEMA}\n#provenance=0123456789abcdef|syn|synthetic|unix:0\n{}\nsyn\te-o.s01\tbrev\tsize\t150\t0-100\t0123456789abcdef\n",
            COLUMNS.join("\t")
        );
        std::fs::write(&path, text).unwrap();
        assert!(matches!(load_store(&path), Err(Error::Invariant(_))));
    }

    #[test]
    fn empty_file_loads_as_empty_store_with_warning() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.tsv");
        std::fs::write(&path, "").unwrap();
        let (store, warnings) = load_store(&path).unwrap();
        assert!(store.is_empty());
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("old.tsv");
        std::fs::write(
            &path,
            format!("#schema=ratings/0\n{}\n", COLUMNS.join("\t")),
        )
        .unwrap();
        assert!(matches!(load_store(&path), Err(Error::Schema { .. })));
    }

    #[test]
    fn one_rating_per_key() {
        let mut store = RatingStore::new();
        store.add_provenance(prov());
        store.insert(rec("brev", Dimension::Size, 10.0)).unwrap();
        store.insert(rec("brev", Dimension::Size, 20.0)).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(store.get("syn", "brev", Dimension::Size), Some(20.0));
    }
}
