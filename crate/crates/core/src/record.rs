//! Multichannel sampled recordings and their on-disk formats.
//!
//! CSV: first line `fs=<Hz>`, then one row per sample with one
//! comma-separated column per channel.
//!
//! Binary: raw little-endian `f64`, sample-major (all channels of sample 0,
//! then sample 1, ...), with a JSON sidecar at `<path>.json`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelRecord {
    pub fs: f64,
    /// Channel-major samples, `data[c][k]`.
    pub data: Vec<Vec<f64>>,
    pub channel_labels: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Csv,
    Binary,
}

impl RecordFormat {
    /// `.csv` means CSV; anything else is treated as raw binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => RecordFormat::Csv,
            _ => RecordFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySidecar {
    pub fs: f64,
    pub channels: usize,
    pub samples: usize,
    pub dtype: String,
    pub layout: String,
    pub channel_labels: Vec<String>,
}

pub fn default_labels(channels: usize) -> Vec<String> {
    (1..=channels).map(|c| format!("ch{c}")).collect()
}

impl MultichannelRecord {
    pub fn new(fs: f64, data: Vec<Vec<f64>>) -> Result<Self> {
        let labels = default_labels(data.len());
        let rec = Self {
            fs,
            data,
            channel_labels: labels,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0) || !self.fs.is_finite() {
            return Err(Error::validation(format!(
                "sampling frequency must be > 0 (got {})",
                self.fs
            )));
        }
        if self.data.is_empty() {
            return Err(Error::validation("record has no channels"));
        }
        let k = self.data[0].len();
        for (c, ch) in self.data.iter().enumerate() {
            if ch.len() != k {
                return Err(Error::validation(format!(
                    "channel {c} has {} samples, expected {k}",
                    ch.len()
                )));
            }
            if let Some(i) = ch.iter().position(|v| !v.is_finite()) {
                return Err(Error::validation(format!(
                    "channel {c}, sample {i}: non-finite value"
                )));
            }
        }
        if self.channel_labels.len() != self.data.len() {
            return Err(Error::validation(
                "channel label count does not match channel count",
            ));
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.data.len()
    }

    pub fn samples(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn duration(&self) -> f64 {
        self.samples() as f64 / self.fs
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.samples() * self.channels() * 12 + 32);
        out.push_str(&format!("fs={}\n", self.fs));
        for k in 0..self.samples() {
            for (c, ch) in self.data.iter().enumerate() {
                if c > 0 {
                    out.push(',');
                }
                out.push_str(&format!("{}", ch[k]));
            }
            out.push('\n');
        }
        out
    }

    /// Parse CSV text. `origin` names the source in error messages; rows are
    /// 1-based file line numbers (the header is row 1).
    pub fn from_csv_str(text: &str, origin: &Path) -> Result<Self> {
        let parse_err = |location: String, message: String| Error::Parse {
            path: origin.to_path_buf(),
            location,
            message,
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err("row 1".into(), "empty file".into()))?;
        let fs = header
            .trim()
            .strip_prefix("fs=")
            .ok_or_else(|| {
                parse_err(
                    "row 1".into(),
                    format!("expected header 'fs=<Hz>', found '{header}'"),
                )
            })?
            .trim()
            .parse::<f64>()
            .map_err(|e| parse_err("row 1".into(), format!("bad sampling frequency: {e}")))?;
        if !(fs > 0.0) || !fs.is_finite() {
            return Err(parse_err(
                "row 1".into(),
                format!("sampling frequency must be > 0 (got {fs})"),
            ));
        }

        let mut data: Vec<Vec<f64>> = Vec::new();
        for (idx, line) in lines {
            let row = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if data.is_empty() {
                data = vec![Vec::new(); fields.len()];
            }
            if fields.len() != data.len() {
                return Err(parse_err(
                    format!("row {row}"),
                    format!(
                        "ragged row: expected {} columns, found {}",
                        data.len(),
                        fields.len()
                    ),
                ));
            }
            for (c, field) in fields.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|e| {
                    parse_err(
                        format!("row {row}, column {}", c + 1),
                        format!("'{}': {e}", field.trim()),
                    )
                })?;
                if !v.is_finite() {
                    return Err(parse_err(
                        format!("row {row}, column {}", c + 1),
                        "non-finite value".into(),
                    ));
                }
                data[c].push(v);
            }
        }
        if data.is_empty() {
            return Err(parse_err("row 2".into(), "no samples".into()));
        }
        let labels = default_labels(data.len());
        Ok(Self {
            fs,
            data,
            channel_labels: labels,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text, path)
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.samples() * self.channels() * 8);
        for k in 0..self.samples() {
            for ch in &self.data {
                bytes.extend_from_slice(&ch[k].to_le_bytes());
            }
        }
        let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        file.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        let sidecar = BinarySidecar {
            fs: self.fs,
            channels: self.channels(),
            samples: self.samples(),
            dtype: "f64le".into(),
            layout: "sample-major".into(),
            channel_labels: self.channel_labels.clone(),
        };
        let side = sidecar_path(path);
        let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        fs::write(&side, json).map_err(|e| Error::io(&side, e))
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let side = sidecar_path(path);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let meta: BinarySidecar = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: side.clone(),
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        let bad = |location: String, message: String| Error::Parse {
            path: path.to_path_buf(),
            location,
            message,
        };
        if meta.dtype != "f64le" || meta.layout != "sample-major" {
            return Err(bad(
                "sidecar".into(),
                format!("unsupported dtype/layout {}/{}", meta.dtype, meta.layout),
            ));
        }
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let expected = meta.channels * meta.samples * 8;
        if bytes.len() != expected {
            return Err(bad(
                "file size".into(),
                format!("expected {expected} bytes, found {}", bytes.len()),
            ));
        }
        let mut data = vec![Vec::with_capacity(meta.samples); meta.channels];
        for (i, chunk) in bytes.chunks_exact(8).enumerate() {
            let v = f64::from_le_bytes(chunk.try_into().expect("8-byte chunk"));
            let (k, c) = (i / meta.channels, i % meta.channels);
            if !v.is_finite() {
                return Err(bad(
                    format!("sample {k}, channel {}", c + 1),
                    "non-finite value".into(),
                ));
            }
            data[c].push(v);
        }
        let labels = if meta.channel_labels.len() == meta.channels {
            meta.channel_labels
        } else {
            default_labels(meta.channels)
        };
        let rec = Self {
            fs: meta.fs,
            data,
            channel_labels: labels,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match RecordFormat::from_path(path) {
            RecordFormat::Csv => self.write_csv(path),
            RecordFormat::Binary => self.write_binary(path),
        }
    }
}

/// Load a record, inferring the format from the file extension.
pub fn load_record(path: &Path) -> Result<MultichannelRecord> {
    load_record_as(path, RecordFormat::from_path(path))
}

pub fn load_record_as(path: &Path, format: RecordFormat) -> Result<MultichannelRecord> {
    match format {
        RecordFormat::Csv => MultichannelRecord::read_csv(path),
        RecordFormat::Binary => MultichannelRecord::read_binary(path),
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}
