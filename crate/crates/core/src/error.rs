//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON record at {path}:{line}: {message}")]
    MalformedRecord {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("signature length mismatch: {left} vs {right}")]
    SignatureLengthMismatch { left: usize, right: usize },

    #[error("target vocabulary {target} is below the fixed floor of {floor} (bytes + specials)")]
    VocabTooSmall { target: usize, floor: usize },

    #[error("token id {id} out of range for vocabulary of size {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },

    #[error("document {doc_index} contains the end-of-text id {eot_id} in its body")]
    EotInDocument { doc_index: usize, eot_id: u16 },

    #[error("packed stream carried {found} end-of-text delimiters for {expected} documents")]
    MissingDelimiters { expected: usize, found: usize },

    #[error("bad magic in packed file {path}: expected \"NPK1\"")]
    BadMagic { path: PathBuf },

    #[error("unsupported packed-format version {version} in {path}")]
    BadVersion { path: PathBuf, version: u32 },

    #[error("token dtype code {code} in {path} is not supported (expected 1 = u16 little-endian)")]
    DtypeMismatch { path: PathBuf, code: u8 },

    #[error("packed file {path} is truncated: {detail}")]
    Truncated { path: PathBuf, detail: String },

    #[error("packed dataset failed verification: {0}")]
    VerifyFailed(String),

    #[error("unknown model size label {label:?}; valid labels: {valid}")]
    UnknownPreset { label: String, valid: String },

    #[error("schedule position {position} exceeds the schedule span {span}")]
    BeyondSchedule { position: f64, span: f64 },

    #[error("invalid schedule argument: {0}")]
    InvalidSchedule(String),

    #[error("invalid conversation: {0}")]
    InvalidConversation(String),
}
