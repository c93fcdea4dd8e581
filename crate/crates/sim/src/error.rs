// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config line {line}, column {col}: {msg}")]
    Config { line: u32, col: u32, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("no route from {from} to {to}: {at} has no {port} neighbour")]
    Unreachable {
        from: String,
        to: String,
        at: String,
        port: String,
    },
    #[error(transparent)]
    Model(#[from] vclink::Error),
    #[error(transparent)]
    Xml(#[from] roxmltree::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
