//! Worker pool sizing. Every parallel kernel in this crate writes disjoint
//! output slices addressed by index, so the thread count never changes results.

use rayon::ThreadPool;

use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "VEILKIT_THREADS";

/// Thread count requested through `VEILKIT_THREADS`, if set.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => parse_threads(&v).map(Some),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::invalid(format!("{THREADS_ENV}: {e}"))),
    }
}

pub fn parse_threads(v: &str) -> Result<usize> {
    match v.trim().parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err(Error::invalid(format!(
            "{THREADS_ENV} must be a positive integer, got {v:?}"
        ))),
    }
}

/// A pool with `threads` workers, or one per logical core when `None`.
pub fn pool(threads: Option<usize>) -> Result<ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_counts() {
        assert_eq!(parse_threads("8").unwrap(), 8);
        assert!(parse_threads("0").is_err());
        assert!(parse_threads("many").is_err());
        assert_eq!(pool(Some(3)).unwrap().current_num_threads(), 3);
    }
}
