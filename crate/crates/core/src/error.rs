use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("local alternative leaves the parameter set: u* = {u_star} exceeds the admissible maximum {max_u_star}")]
    Range { u_star: f64, max_u_star: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no {test} threshold at eps = {eps}; run `singtest calibrate` for this model class first")]
    MissingThreshold { test: String, eps: f64 },

    #[error("fractional Brownian motion synthesis failed: {0}")]
    Synthesis(String),

    #[error("duplicate event time {time} in replicate {replicate_id}")]
    DuplicateEvent { time: f64, replicate_id: u64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
