//! Plain-text checkpoint format.
//!
//! ```text
//! ram-checkpoint 1
//! steps <u64>
//! params <count>
//! <name> <rows> <cols>
//! <rows*cols whitespace-separated values>
//! ...
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so a
//! save/load cycle reproduces every bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::params::ParamStore;
use crate::error::{RamError, Result};

const MAGIC: &str = "ram-checkpoint 1";

pub fn to_string(store: &ParamStore) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "steps {}", store.steps());
    let _ = writeln!(out, "params {}", store.len());
    for id in store.ids() {
        let (r, c) = store.shape(id);
        let _ = writeln!(out, "{} {} {}", store.name(id), r, c);
        let vals: Vec<String> = store.value(id).iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(out, "{}", vals.join(" "));
    }
    out
}

pub fn from_str(text: &str, path: &Path) -> Result<ParamStore> {
    let err = |line: usize, message: String| RamError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| err(0, format!("unexpected end of file, expected {what}")))
    };

    let (n, magic) = next("header")?;
    if magic.trim() != MAGIC {
        return Err(err(n, format!("bad header {magic:?}")));
    }
    let (n, steps_line) = next("steps")?;
    let steps: u64 = steps_line
        .strip_prefix("steps ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| err(n, "expected `steps <n>`".into()))?;
    let (n, count_line) = next("params")?;
    let count: usize = count_line
        .strip_prefix("params ")
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| err(n, "expected `params <n>`".into()))?;

    let mut store = ParamStore::new();
    for _ in 0..count {
        let (n, head) = next("parameter header")?;
        let mut parts = head.split_whitespace();
        let (Some(name), Some(r), Some(c), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(err(n, "expected `<name> <rows> <cols>`".into()));
        };
        let rows: usize = r
            .parse()
            .map_err(|_| err(n, format!("bad row count {r:?}")))?;
        let cols: usize = c
            .parse()
            .map_err(|_| err(n, format!("bad column count {c:?}")))?;
        let (n, body) = next("parameter values")?;
        let values = body
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| err(n, format!("bad value {t:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != rows * cols {
            return Err(err(
                n,
                format!(
                    "{name}: expected {} values, found {}",
                    rows * cols,
                    values.len()
                ),
            ));
        }
        store.push(name.to_string(), rows, cols, values);
    }
    store.set_steps(steps);
    Ok(store)
}

pub fn save(store: &ParamStore, path: &Path) -> Result<()> {
    fs::write(path, to_string(store)).map_err(|e| RamError::io(path, e))
}

pub fn load(path: &Path) -> Result<ParamStore> {
    let text = fs::read_to_string(path).map_err(|e| RamError::io(path, e))?;
    from_str(&text, path)
}

/// Loads `path` into an existing store, requiring an identical layout.
pub fn load_into(store: &mut ParamStore, path: &Path) -> Result<()> {
    let loaded = load(path)?;
    store.copy_values_from(&loaded)?;
    store.set_steps(loaded.steps());
    Ok(())
}
