//! JSON configuration files. Keys are the [`HyperParams`] field names; missing
//! keys take their defaults and unknown keys are rejected.

use std::path::Path;

use ucr_core::HyperParams;

use crate::binary::write_file;
use crate::error::{Error, Result};

pub fn parse_config(path: &Path, text: &[u8]) -> Result<HyperParams> {
    let hp: HyperParams = serde_json::from_slice(text).map_err(|e| Error::Config {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    hp.validate().map_err(|e| Error::Config {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    Ok(hp)
}

pub fn load_config(path: &Path) -> Result<HyperParams> {
    match std::fs::read(path) {
        Ok(bytes) => parse_config(path, &bytes),
        Err(e) => Err(Error::Config {
            path: path.to_path_buf(),
            reason: e.to_string(),
        }),
    }
}

pub fn write_config(hp: &HyperParams, path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(hp).expect("serializable");
    bytes.push(b'\n');
    write_file(path, &bytes)
}

/// Config file contents, or the built-in defaults without a file.
pub fn load_or_default(path: Option<&Path>) -> Result<HyperParams> {
    path.map_or_else(|| Ok(HyperParams::default()), load_config)
}
