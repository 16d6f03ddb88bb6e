use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ratings::Dimension;
use crate::tsv::Table;

pub const TRIALS_SCHEMA: &str = "phonosem-trials/1";
pub const PARTICIPANTS_SCHEMA: &str = "phonosem-participants/1";

pub const TRIAL_COLUMNS: [&str; 10] = [
    "participant_id",
    "language",
    "pair_id",
    "dimension",
    "prompt_pole",
    "chosen",
    "predicted",
    "is_attention_check",
    "timestamp",
    "modality",
];

pub const PARTICIPANT_COLUMNS: [&str; 4] = [
    "participant_id",
    "language",
    "set_assignment",
    "attention_pass",
];

macro_rules! text_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::InvalidInput(format!(
                        concat!("invalid ", stringify!($name), " `{}`"), other
                    ))),
                }
            }
        }
    };
}

text_enum!(Choice { A => "A", B => "B" });
text_enum!(Pole { Low => "low", High => "high" });
text_enum!(Modality { Text => "TEXT", Audio => "AUDIO" });

impl Choice {
    pub fn other(self) -> Choice {
        match self {
            Choice::A => Choice::B,
            Choice::B => Choice::A,
        }
    }
}

/// Member of a pair the effects predict for a pole: the B word (later letter)
/// scores higher when d > 0.
pub fn predict_choice(consensus_d: f64, pole: Pole) -> Choice {
    match (consensus_d > 0.0, pole) {
        (true, Pole::High) | (false, Pole::Low) => Choice::B,
        _ => Choice::A,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub participant_id: String,
    pub language: String,
    pub pair_id: String,
    pub dimension: Dimension,
    pub prompt_pole: Pole,
    pub chosen: Choice,
    pub predicted: Choice,
    pub is_attention_check: bool,
    pub timestamp: String,
    pub modality: Modality,
}

impl TrialRecord {
    pub fn correct(&self) -> bool {
        self.chosen == self.predicted
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParticipantRecord {
    pub participant_id: String,
    pub language: String,
    pub set_assignment: usize,
    pub attention_pass: bool,
}

fn bool_field(s: &str) -> Result<bool> {
    match s {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        other => Err(Error::InvalidInput(format!("invalid boolean `{other}`"))),
    }
}

fn check_field(name: &str, value: &str) -> Result<()> {
    if value.is_empty() || value.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidInput(format!(
            "{name} must be non-empty and free of tabs/newlines"
        )));
    }
    Ok(())
}

impl TrialRecord {
    pub fn validate(&self) -> Result<()> {
        check_field("participant_id", &self.participant_id)?;
        check_field("language", &self.language)?;
        check_field("pair_id", &self.pair_id)?;
        check_field("timestamp", &self.timestamp)
    }

    fn row(&self) -> [String; 10] {
        [
            self.participant_id.clone(),
            self.language.clone(),
            self.pair_id.clone(),
            self.dimension.to_string(),
            self.prompt_pole.to_string(),
            self.chosen.to_string(),
            self.predicted.to_string(),
            self.is_attention_check.to_string(),
            self.timestamp.clone(),
            self.modality.to_string(),
        ]
    }
}

pub fn trials_table(trials: &[TrialRecord]) -> Table {
    let mut t = Table::new(TRIAL_COLUMNS).with_meta("schema", TRIALS_SCHEMA);
    for tr in trials {
        t.push(tr.row());
    }
    t
}

/// Renders one trial as a data line without header (for append-only logs).
pub fn trial_line(trial: &TrialRecord) -> String {
    let mut s = trial.row().join("\t");
    s.push('\n');
    s
}

pub fn trials_header() -> String {
    format!("#schema={TRIALS_SCHEMA}\n{}\n", TRIAL_COLUMNS.join("\t"))
}

pub fn parse_trials(source: &str, text: &str) -> Result<Vec<TrialRecord>> {
    let table = Table::parse(source, text)?;
    let found = table.meta_value("schema").unwrap_or("");
    if found != TRIALS_SCHEMA {
        return Err(Error::Schema {
            path: source.into(),
            expected: TRIALS_SCHEMA.into(),
            found: found.into(),
        });
    }
    let cols = table.require_columns(source, &TRIAL_COLUMNS)?;
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let f = |n: &str| row[cols[n]].as_str();
            let rec = (|| {
                let rec = TrialRecord {
                    participant_id: f("participant_id").into(),
                    language: f("language").into(),
                    pair_id: f("pair_id").into(),
                    dimension: f("dimension").parse()?,
                    prompt_pole: f("prompt_pole").parse()?,
                    chosen: f("chosen").parse()?,
                    predicted: f("predicted").parse()?,
                    is_attention_check: bool_field(f("is_attention_check"))?,
                    timestamp: f("timestamp").into(),
                    modality: f("modality").parse()?,
                };
                rec.validate()?;
                Ok(rec)
            })();
            rec.map_err(|e: Error| Error::format(source, i + 1, e.to_string()))
        })
        .collect()
}

pub fn read_trials(path: &Path) -> Result<Vec<TrialRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trials(&path.display().to_string(), &text)
}

pub fn write_trials(path: &Path, trials: &[TrialRecord]) -> Result<()> {
    trials_table(trials).write(path)
}

pub fn participants_table(participants: &[ParticipantRecord]) -> Table {
    let mut t = Table::new(PARTICIPANT_COLUMNS).with_meta("schema", PARTICIPANTS_SCHEMA);
    for p in participants {
        t.push([
            p.participant_id.clone(),
            p.language.clone(),
            p.set_assignment.to_string(),
            p.attention_pass.to_string(),
        ]);
    }
    t
}

pub fn read_participants(path: &Path) -> Result<Vec<ParticipantRecord>> {
    let table = Table::read(path)?;
    let src = path.display().to_string();
    let found = table.meta_value("schema").unwrap_or("");
    if found != PARTICIPANTS_SCHEMA {
        return Err(Error::Schema {
            path: src,
            expected: PARTICIPANTS_SCHEMA.into(),
            found: found.into(),
        });
    }
    let cols = table.require_columns(&src, &PARTICIPANT_COLUMNS)?;
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let f = |n: &str| row[cols[n]].as_str();
            Ok(ParticipantRecord {
                participant_id: f("participant_id").into(),
                language: f("language").into(),
                set_assignment: f("set_assignment")
                    .parse()
                    .map_err(|_| Error::format(&src, i + 1, "bad set_assignment"))?,
                attention_pass: bool_field(f("attention_pass"))
                    .map_err(|e| Error::format(&src, i + 1, e.to_string()))?,
            })
        })
        .collect()
}
