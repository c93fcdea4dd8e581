// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty stream")]
    EmptyStream,
    #[error("stream too short: need at least {need} words, got {got}")]
    StreamTooShort { need: usize, got: usize },
    #[error("word {word:#x} does not fit in {width} bits")]
    WordOutOfRange { word: u64, width: u32 },
    #[error("invalid width {0}: must be within 1..=64")]
    InvalidWidth(u32),
    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown distribution `{0}`")]
    UnknownDistribution(String),
    #[error("unknown codec `{0}`")]
    UnknownCodec(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-square matrix: {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("asymmetric capacitance matrix")]
    Asymmetric,
    #[error("negative capacitance at ({row}, {col}): {value}")]
    NegativeCapacitance { row: usize, col: usize, value: f64 },
    #[error("invalid data-flow matrix: {0}")]
    InvalidDataFlow(String),
    #[error("zero reference energy")]
    ZeroEnergy,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
