//! Deterministic synthetic infrared small-target scenes, portable PGM I/O
//! and dataset management. Every sample derives its own random stream from
//! (seed, index), so parallel and serial generation produce identical data.

pub mod augment;
pub mod dataset;
pub mod pgm;
pub mod scene;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: parse error at byte {offset}: {msg}")]
    Parse {
        path: String,
        offset: usize,
        msg: String,
    },

    #[error("could not place target {target} of sample {index} after {attempts} attempts")]
    Placement {
        index: u64,
        target: usize,
        attempts: usize,
    },

    #[error("refusing to write into non-empty directory {root} (pass force to override)")]
    Exists { root: String },

    #[error("manifest {path} line {line}: {msg}")]
    Manifest {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid scene config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

pub(crate) fn io_err(path: &std::path::Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Independent, portable random stream for (seed, stream).
pub fn stream_rng(seed: u64, stream: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
