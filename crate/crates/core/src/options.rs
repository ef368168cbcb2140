//! Flat key → value option maps shared by plugins.

use serde_json::Value;

use crate::error::{Error, Result};

pub type Options = serde_json::Map<String, Value>;

pub fn opt_f64(opts: &Options, key: &str, default: f64) -> Result<f64> {
    match opts.get(key) {
        None | Some(Value::Null) => Ok(default),
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::InvalidInput(format!("option `{key}` must be a number"))),
    }
}

pub fn opt_usize(opts: &Options, key: &str, default: usize) -> Result<usize> {
    match opts.get(key) {
        None | Some(Value::Null) => Ok(default),
        Some(v) => v
            .as_u64()
            .map(|x| x as usize)
            .ok_or_else(|| Error::InvalidInput(format!("option `{key}` must be a non-negative integer"))),
    }
}

pub fn opt_bool(opts: &Options, key: &str, default: bool) -> Result<bool> {
    match opts.get(key) {
        None | Some(Value::Null) => Ok(default),
        Some(v) => v
            .as_bool()
            .ok_or_else(|| Error::InvalidInput(format!("option `{key}` must be a boolean"))),
    }
}

pub fn opt_str<'a>(opts: &'a Options, key: &str) -> Result<Option<&'a str>> {
    match opts.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_str()
            .map(Some)
            .ok_or_else(|| Error::InvalidInput(format!("option `{key}` must be a string"))),
    }
}
