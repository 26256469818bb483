//! TOML loading and saving for every configuration type.
//!
//! Unknown keys are rejected by the types themselves (`deny_unknown_fields`).
//! A file that cannot be opened is [`Error::Unreadable`]; a file that opens but
//! does not describe the expected type is [`Error::Parse`].

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn from_toml_str<T: DeserializeOwned>(text: &str, origin: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn load_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    from_toml_str(&text, path)
}

pub fn to_toml_string<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))
}

pub fn save_toml<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    std::fs::write(path, to_toml_string(value)?)?;
    Ok(())
}
