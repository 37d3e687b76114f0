//! Versioned JSON envelope shared by the trained models.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("malformed model document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("expected a {expected} document, found {found}")]
    WrongFormat { expected: &'static str, found: String },
    #[error("unsupported {format} version {found} (this build reads version {supported})")]
    UnsupportedVersion {
        format: &'static str,
        found: u32,
        supported: u32,
    },
}

/// A model that can be saved in the envelope.
pub trait Persist: Serialize + DeserializeOwned {
    const FORMAT: &'static str;
    const VERSION: u32 = 1;
}

#[derive(Serialize)]
struct EnvelopeOut<'a, T> {
    format: &'a str,
    version: u32,
    model: &'a T,
}

#[derive(Deserialize)]
struct EnvelopeIn {
    format: String,
    version: u32,
    model: serde_json::Value,
}

pub fn to_json<T: Persist>(model: &T) -> String {
    let doc = EnvelopeOut {
        format: T::FORMAT,
        version: T::VERSION,
        model,
    };
    serde_json::to_string_pretty(&doc).expect("model serialization cannot fail")
}

pub fn from_json<T: Persist>(text: &str) -> Result<T, PersistError> {
    let doc: EnvelopeIn = serde_json::from_str(text)?;
    if doc.format != T::FORMAT {
        return Err(PersistError::WrongFormat {
            expected: T::FORMAT,
            found: doc.format,
        });
    }
    if doc.version != T::VERSION {
        return Err(PersistError::UnsupportedVersion {
            format: T::FORMAT,
            found: doc.version,
            supported: T::VERSION,
        });
    }
    Ok(serde_json::from_value(doc.model)?)
}
