use std::path::PathBuf;

use phonosem_core::Error;

pub const CONFIG: i32 = 2;
pub const IO: i32 = 3;
pub const UPSTREAM_MISSING: i32 = 4;
pub const COMPUTATION: i32 = 5;

/// A stage input that an earlier stage should have produced.
#[derive(Debug, thiserror::Error)]
#[error("missing {what} at {path}; run `phonosem {stage}` first")]
pub struct UpstreamMissing {
    pub what: &'static str,
    pub path: PathBuf,
    pub stage: &'static str,
}

/// Maps an error chain to the process exit code.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.downcast_ref::<UpstreamMissing>().is_some() {
            return UPSTREAM_MISSING;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Config(_) | Error::InvalidArgument(_) => CONFIG,
                Error::Io { .. } | Error::Format { .. } | Error::Schema { .. } => IO,
                _ => COMPUTATION,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return IO;
        }
    }
    COMPUTATION
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct_per_category() {
        let up = anyhow::Error::new(UpstreamMissing {
            what: "corpus",
            path: "out/corpus".into(),
            stage: "generate",
        });
        assert_eq!(exit_code(&up), UPSTREAM_MISSING);
        assert!(up.to_string().contains("phonosem generate"));
        assert_eq!(exit_code(&Error::Config("x".into()).into()), CONFIG);
        assert_eq!(
            exit_code(&Error::io("p", std::io::Error::other("x")).into()),
            IO
        );
        let ctx = anyhow::Error::new(Error::InsufficientData("x".into())).context("analyze");
        assert_eq!(exit_code(&ctx), COMPUTATION);
    }
}
