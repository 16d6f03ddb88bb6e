//! Forced-choice behavioral studies: trial records, exclusions, accuracy with
//! exact binomial inference, cross-language comparison and counterbalancing.

mod analysis;
mod binomial;
mod study;
mod trials;

pub use analysis::{
    analyzable, analyze_study, cross_language_table, derive_participants,
    llm_human_pair_correlation, pooled_pair_accuracy, AccuracyCell, Correlation,
    CrossLanguageTable, LanguagePair, Pooling, StudyResult,
};
pub use binomial::{exact_binomial_p, BinomialP};
pub use study::{counterbalance_assign, StudyDefinition, StudyItem};
pub use trials::{
    parse_trials, participants_table, predict_choice, read_participants, read_trials, trial_line,
    trials_header, trials_table, write_trials, Choice, Modality, ParticipantRecord, Pole,
    TrialRecord, PARTICIPANTS_SCHEMA, PARTICIPANT_COLUMNS, TRIALS_SCHEMA, TRIAL_COLUMNS,
};
