//! Output files. Every artifact carries the hash of the configuration that
//! produced it and the base seed: `.dat` files as `#` comment lines above the
//! data, JSON files as a `meta` object next to `data`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// First 16 hex digits of the SHA-256 of the config's JSON encoding.
pub fn config_hash<T: Serialize + ?Sized>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config).map_err(|e| Error::json("<config>", e))?;
    Ok(hex::encode(&Sha256::digest(&bytes)[..8]))
}

/// Provenance stamped on every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Meta {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    /// Free-form `key=value` remarks, e.g. how checkpoints were read.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl Meta {
    pub fn new<T: Serialize + ?Sized>(command: &str, config: &T, seed: u64) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            config_hash: config_hash(config)?,
            seed,
            notes: Vec::new(),
        })
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.notes.push(note.into());
        self
    }
}

/// Whitespace-separated columns under a `#` header row.
#[derive(Debug, Clone, PartialEq)]
pub struct DatTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl DatTable {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Self {
            columns: columns.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) -> Result<()> {
        if row.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                context: "DatTable row",
                expected: self.columns.len(),
                got: row.len(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn render(&self, meta: &Meta) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# {}", self.columns.join(" "));
        let _ = writeln!(
            out,
            "# command={} config_hash={} seed={}",
            meta.command, meta.config_hash, meta.seed
        );
        for note in &meta.notes {
            let _ = writeln!(out, "# {note}");
        }
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: &Path, meta: &Meta) -> Result<()> {
        fs::write(path, self.render(meta)).map_err(|e| Error::io(path, e))
    }
}

/// Shortest round-trip representation; non-finite values as `nan`/`inf`/`-inf`.
pub fn format_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:e}")
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    meta: &'a Meta,
    data: &'a T,
}

pub fn write_json<T: Serialize>(path: &Path, meta: &Meta, data: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(&Envelope { meta, data }).map_err(|e| Error::json(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Reads the data section back from a [`write_json`] file.
pub fn read_json_data<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    #[derive(serde::Deserialize)]
    struct Data<T> {
        data: T,
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let d: Data<T> = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    Ok(d.data)
}

/// Data lines of a `.dat` file (comments stripped).
pub fn dat_data_section(text: &str) -> String {
    text.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = config_hash(&serde_json::json!({"n": 1})).unwrap();
        assert_eq!(a, config_hash(&serde_json::json!({"n": 1})).unwrap());
        assert_ne!(a, config_hash(&serde_json::json!({"n": 2})).unwrap());
        assert_eq!(a.len(), 16);
    }

    #[test]
    fn dat_layout() {
        let meta = Meta::new("solve", &1u8, 7).unwrap().with_note("checkpoints=mid-training");
        let mut t = DatTable::new(["K", "rmse"]);
        t.push(vec![100.0, 0.25]).unwrap();
        t.push(vec![200.0, f64::NAN]).unwrap();
        assert!(t.push(vec![1.0]).is_err());
        let text = t.render(&meta);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# K rmse");
        assert!(lines[1].starts_with("# command=solve config_hash="));
        assert!(lines[1].ends_with("seed=7"));
        assert_eq!(lines[2], "# checkpoints=mid-training");
        assert_eq!(dat_data_section(&text), "1e2 2.5e-1\n2e2 nan\n");
    }

    #[test]
    fn values_round_trip() {
        for v in [0.1, 1.0 / 3.0, 9.4134e-17, -2.5e300] {
            assert_eq!(format_value(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn json_envelope_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        let meta = Meta::new("eval-uq", &"cfg", 3).unwrap();
        write_json(&path, &meta, &vec![1.5, 2.0]).unwrap();
        let back: Vec<f64> = read_json_data(&path).unwrap();
        assert_eq!(back, vec![1.5, 2.0]);
    }
}
