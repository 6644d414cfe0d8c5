use democratic_pooling::Error;

pub const IO: u8 = 3;
pub const PARSE: u8 = 4;
pub const INVALID_INPUT: u8 = 5;
pub const NUMERICAL: u8 = 6;
pub const CONFIG: u8 = 7;
pub const OTHER: u8 = 1;

fn library_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => IO,
        Error::Parse { .. } | Error::BadHeader(_) => PARSE,
        Error::InvalidConfig(_) | Error::InvalidExponent(_) => CONFIG,
        Error::NoConvergence { .. } | Error::NotPositiveSemidefinite { .. } => NUMERICAL,
        _ => INVALID_INPUT,
    }
}

/// Exit status for an error, taken from the innermost recognised cause.
pub fn code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return library_code(e);
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return IO;
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return PARSE;
        }
        if cause.downcast_ref::<rayon::ThreadPoolBuildError>().is_some() {
            return CONFIG;
        }
    }
    OTHER
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrapped_library_errors_keep_their_code() {
        let err = anyhow::Error::new(Error::NoConvergence { sweeps: 3 }).context("while pooling a.csv");
        assert_eq!(code_for(&err), NUMERICAL);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(code_for(&anyhow::Error::new(Error::Io(io))), IO);
        assert_eq!(code_for(&anyhow::anyhow!("plain")), OTHER);
    }
}
