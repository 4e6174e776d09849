//! Grid files and report files.

use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::grid::GridFunction;

/// Reads `{"dimension": n, "depth": L, "values": [...]}`.
pub fn load_function(path: impl AsRef<Path>) -> Result<GridFunction<f64>> {
    let text = fs::read_to_string(path.as_ref())?;
    parse_function(&text)
}

pub fn parse_function(text: &str) -> Result<GridFunction<f64>> {
    let v: Value = serde_json::from_str(text)?;
    let obj = v
        .as_object()
        .ok_or_else(|| Error::Schema("top level must be an object".into()))?;
    let uint = |name: &str| -> Result<u64> {
        obj.get(name)
            .ok_or_else(|| Error::Schema(format!("missing field `{name}`")))?
            .as_u64()
            .ok_or_else(|| Error::Schema(format!("field `{name}` must be a non-negative integer")))
    };
    let dim = uint("dimension")? as usize;
    let depth = u32::try_from(uint("depth")?).map_err(|_| Error::Schema("field `depth` too large".into()))?;
    let values = obj
        .get("values")
        .ok_or_else(|| Error::Schema("missing field `values`".into()))?
        .as_array()
        .ok_or_else(|| Error::Schema("field `values` must be an array".into()))?
        .iter()
        .enumerate()
        .map(|(i, x)| {
            x.as_f64()
                .ok_or_else(|| Error::Schema(format!("field `values`: entry {i} is not a number")))
        })
        .collect::<Result<Vec<f64>>>()?;
    GridFunction::new(dim, depth, values).map_err(|e| match e {
        Error::InvalidGrid(m) => Error::Schema(format!("field {m}")),
        other => other,
    })
}

pub fn save_function(f: &GridFunction<f64>, path: impl AsRef<Path>) -> Result<()> {
    save_json(f, path)
}

/// Writes pretty JSON with a trailing newline.
pub fn save_json<S: Serialize + ?Sized>(value: &S, path: impl AsRef<Path>) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn load_json(path: impl AsRef<Path>) -> Result<Value> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
