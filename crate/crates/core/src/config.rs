//! Pipeline configuration files (TOML).
//!
//! ```toml
//! seed = 7
//!
//! [filter]
//! n = 3
//! N = 0
//! alpha = 12.0
//! theta = 1.0
//! k = 6            # or: window = 0.1129
//! f0 = 50.0
//!
//! [detection]
//! percentile = 99.5
//!
//! [clustering]
//! delta_t_beat = 0.030
//! rho = 0.6
//! ref_channel = 7
//! ```
//!
//! Range violations are reported with the line of the offending key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterParams, TimeCoordinate};
use crate::detect::DetectParams;
use crate::error::{Error, Result};
use crate::kernel::{resolve_window, KernelSpec, WindowChoice};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default = "default_n")]
    pub n: u32,
    #[serde(rename = "N", default)]
    pub poly_degree: u32,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Defaults to `alpha`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "default_theta")]
    pub theta: f64,
    /// Bessel-zero index; `k = 6` when neither `k` nor `window` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
    /// Explicit window length in seconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<f64>,
    #[serde(default = "default_f0")]
    pub f0: f64,
}

fn default_n() -> u32 {
    3
}
fn default_alpha() -> f64 {
    12.0
}
fn default_theta() -> f64 {
    1.0
}
fn default_f0() -> f64 {
    50.0
}
pub const DEFAULT_K: u32 = 6;

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            n: default_n(),
            poly_degree: 0,
            alpha: default_alpha(),
            beta: None,
            theta: default_theta(),
            k: None,
            window: None,
            f0: default_f0(),
        }
    }
}

impl FilterConfig {
    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(self.alpha)
    }

    pub fn window_choice(&self) -> WindowChoice {
        match (self.window, self.k) {
            (Some(seconds), _) => WindowChoice::Explicit { seconds },
            (None, k) => WindowChoice::BesselZero {
                k: k.unwrap_or(DEFAULT_K),
            },
        }
    }

    /// Kernel spec with the window resolved.
    pub fn kernel_spec(&self) -> Result<KernelSpec> {
        let window = resolve_window(self.window_choice(), self.alpha, self.beta(), self.f0)?;
        let spec = KernelSpec {
            deriv_order: self.n,
            poly_degree: self.poly_degree,
            alpha: self.alpha,
            beta: self.beta(),
            theta: self.theta,
            window,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn issues(&self) -> Option<Issue> {
        let bad = |key: &'static str, message: String| Some(Issue::new("filter", key, message));
        if self.n == 0 {
            return bad("n", "derivative order n must be >= 1".into());
        }
        if !(self.alpha > -1.0) || !self.alpha.is_finite() {
            return bad(
                "alpha",
                format!("alpha must exceed -1 (got {})", self.alpha),
            );
        }
        if !(self.beta() > -1.0) || !self.beta().is_finite() {
            return bad("beta", format!("beta must exceed -1 (got {})", self.beta()));
        }
        let bound = f64::from(self.n) - 1.0;
        if self.alpha <= bound {
            return bad(
                "alpha",
                format!("alpha must exceed n - 1 = {bound} (got {})", self.alpha),
            );
        }
        if self.beta() <= bound {
            return bad(
                "beta",
                format!("beta must exceed n - 1 = {bound} (got {})", self.beta()),
            );
        }
        if !(-1.0..=1.0).contains(&self.theta) {
            return bad(
                "theta",
                format!("theta must lie in [-1, 1] (got {})", self.theta),
            );
        }
        if !(self.f0 > 0.0) || !self.f0.is_finite() {
            return bad("f0", format!("f0 must be > 0 (got {})", self.f0));
        }
        if self.k.is_some() && self.window.is_some() {
            return bad("window", "give either k or window, not both".into());
        }
        if self.k == Some(0) {
            return bad("k", "k must be >= 1".into());
        }
        if let Some(w) = self.window {
            if !(w > 0.0) || !w.is_finite() {
                return bad("window", format!("window must be > 0 (got {w})"));
            }
        } else if self.beta() != self.alpha {
            return bad(
                "beta",
                "Bessel-null window design requires beta == alpha; set an explicit window".into(),
            );
        }
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionConfig {
    #[serde(default = "default_percentile")]
    pub percentile: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_min: Option<usize>,
}

fn default_percentile() -> f64 {
    99.5
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            percentile: default_percentile(),
            l_min: None,
        }
    }
}

impl DetectionConfig {
    pub fn params(&self) -> DetectParams {
        DetectParams {
            percentile: self.percentile,
            l_min: self.l_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusteringConfig {
    #[serde(default = "default_delta")]
    pub delta_t_beat: f64,
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Zero-based; defaults to the last channel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_channel: Option<usize>,
    #[serde(default)]
    pub allow_out_of_range: bool,
    #[serde(default)]
    pub time_coordinate: TimeCoordinate,
}

fn default_delta() -> f64 {
    0.030
}
fn default_rho() -> f64 {
    0.6
}

impl Default for ClusteringConfig {
    fn default() -> Self {
        Self {
            delta_t_beat: default_delta(),
            rho: default_rho(),
            ref_channel: None,
            allow_out_of_range: false,
            time_coordinate: TimeCoordinate::Start,
        }
    }
}

impl ClusteringConfig {
    pub fn params(&self) -> ClusterParams {
        ClusterParams {
            delta_t_beat: self.delta_t_beat,
            rho: self.rho,
            ref_channel: self.ref_channel,
            allow_out_of_range: self.allow_out_of_range,
            time_coordinate: self.time_coordinate,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Ground-truth cardiac impulse record for the SNR.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub detection: DetectionConfig,
    #[serde(default)]
    pub clustering: ClusteringConfig,
    #[serde(default)]
    pub io: IoConfig,
}

struct Issue {
    section: &'static str,
    key: &'static str,
    message: String,
}

impl Issue {
    fn new(section: &'static str, key: &'static str, message: String) -> Self {
        Self {
            section,
            key,
            message,
        }
    }
}

impl PipelineConfig {
    fn issues(&self) -> Option<Issue> {
        if let Some(i) = self.filter.issues() {
            return Some(i);
        }
        let d = &self.detection;
        if !(d.percentile > 0.0 && d.percentile < 100.0) {
            return Some(Issue::new(
                "detection",
                "percentile",
                format!("percentile must lie in (0, 100) (got {})", d.percentile),
            ));
        }
        if d.l_min == Some(0) {
            return Some(Issue::new(
                "detection",
                "l_min",
                "l_min must be >= 1".into(),
            ));
        }
        let c = &self.clustering;
        let key_of = |msg: &str| {
            if msg.contains("rho") {
                "rho"
            } else if msg.contains("ref_channel") {
                "ref_channel"
            } else {
                "delta_t_beat"
            }
        };
        // Channel count is unknown here; ref_channel is range-checked against the record.
        if let Err(e) = c.params().validate(usize::MAX) {
            let msg = e.to_string();
            return Some(Issue::new("clustering", key_of(&msg), msg));
        }
        None
    }

    /// Range checks without source locations.
    pub fn validate(&self) -> Result<()> {
        match self.issues() {
            Some(i) => Err(Error::Validation(format!(
                "{}.{}: {}",
                i.section, i.key, i.message
            ))),
            None => Ok(()),
        }
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let location = e.span().map(|s| line_col(text, s.start)).map_or_else(
                || "config".to_string(),
                |(l, c)| format!("line {l}, column {c}"),
            );
            Error::Parse {
                path: origin.to_path_buf(),
                location,
                message: e.message().to_string(),
            }
        })?;
        if let Some(i) = cfg.issues() {
            let location = match find_key_line(text, i.section, i.key) {
                Some(line) => format!("line {line}, key {}.{}", i.section, i.key),
                None => format!("key {}.{} (default)", i.section, i.key),
            };
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                location,
                message: i.message,
            });
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub(crate) fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before
        .rfind('\n')
        .map_or(before.len(), |p| before.len() - p - 1)
        + 1;
    (line, col)
}

/// 1-based line of `key = ...` inside `[section]`.
fn find_key_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<PipelineConfig> {
        PipelineConfig::from_toml_str(text, Path::new("cfg.toml"))
    }

    #[test]
    fn defaults_and_round_trip() {
        let cfg = parse("").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(
            cfg.filter.window_choice(),
            WindowChoice::BesselZero { k: 6 }
        );
        let back = parse(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn explicit_window_spec() {
        let cfg = parse("[filter]\nn = 3\nalpha = 12\nwindow = 0.1129\n").unwrap();
        let spec = cfg.filter.kernel_spec().unwrap();
        assert_eq!(spec.window, 0.1129);
        assert_eq!(spec.beta, 12.0);
    }

    #[test]
    fn range_error_names_line() {
        let text = "seed = 1\n\n[filter]\nn = 3\nalpha = 1.5\n";
        let msg = parse(text).unwrap_err().to_string();
        assert!(
            msg.contains("line 5") && msg.contains("filter.alpha"),
            "{msg}"
        );

        let text = "[filter]\nk = 3\nwindow = 0.1\n\n[clustering]\nrho = 0.95\n";
        let msg = parse(text).unwrap_err().to_string();
        assert!(msg.contains("line 3"), "{msg}");
        let text = "[clustering]\ndelta_t_beat = 0.03\nrho = 0.95\n";
        let msg = parse(text).unwrap_err().to_string();
        assert!(msg.contains("line 3") && msg.contains("rho"), "{msg}");
        let text = "[detection]\n\npercentile = 100\n";
        assert!(parse(text).unwrap_err().to_string().contains("line 3"));
    }

    #[test]
    fn syntax_and_unknown_keys_are_located() {
        let msg = parse("[filter]\nn = \n").unwrap_err().to_string();
        assert!(msg.contains("line 2"), "{msg}");
        let msg = parse("[filter]\nn = 3\nalpah = 2\n")
            .unwrap_err()
            .to_string();
        assert!(msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn out_of_range_override() {
        let text = "[clustering]\nrho = 1.0\nallow_out_of_range = true\n";
        assert!(parse(text).is_ok());
    }
}
