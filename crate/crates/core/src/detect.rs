//! Derivative signals, percentile thresholds, crossing consolidation and
//! pulse start localization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fir::FirFilter;
use crate::record::MultichannelRecord;

/// Filtered channel `y^(n)`; the first `warmup` samples see zero history.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeSignal {
    pub channel: usize,
    pub order: u32,
    pub samples: Vec<f64>,
    pub fs: f64,
    pub warmup: usize,
}

impl DerivativeSignal {
    pub fn valid(&self) -> &[f64] {
        &self.samples[self.warmup.min(self.samples.len())..]
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionFlag {
    /// No sign change within `L` samples after the peak; start = peak.
    NoZeroCrossing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub channel: usize,
    pub peak_index: usize,
    /// Zero crossing `z`, rounded to the nearest sample.
    pub start_index: usize,
    pub peak_time_s: f64,
    /// Sub-sample zero-crossing time.
    pub start_time_s: f64,
    pub magnitude: f64,
    #[serde(default)]
    pub flags: Vec<DetectionFlag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectParams {
    pub percentile: f64,
    /// Defaults to `floor(T·fs)`.
    pub l_min: Option<usize>,
}

impl Default for DetectParams {
    fn default() -> Self {
        Self {
            percentile: 99.5,
            l_min: None,
        }
    }
}

/// Detections and threshold of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDetections {
    pub channel: usize,
    pub threshold: f64,
    pub detections: Vec<Detection>,
}

pub fn filter_channel(
    record: &MultichannelRecord,
    channel: usize,
    fir: &FirFilter,
) -> Result<DerivativeSignal> {
    let data = record.data.get(channel).ok_or_else(|| {
        Error::validation(format!(
            "channel {channel} out of range (record has {})",
            record.channels()
        ))
    })?;
    if (record.fs - fir.sample_rate).abs() > 1e-9 * record.fs {
        return Err(Error::validation(format!(
            "filter designed for {} Hz but record is sampled at {} Hz",
            fir.sample_rate, record.fs
        )));
    }
    if data.len() < fir.len() {
        return Err(Error::validation(format!(
            "record has {} samples, shorter than the filter length {}",
            data.len(),
            fir.len()
        )));
    }
    Ok(DerivativeSignal {
        channel,
        order: fir.deriv_order,
        samples: fir.apply(data),
        fs: record.fs,
        warmup: fir.warmup(),
    })
}

/// Filter every channel; output order follows channel order.
pub fn filter_record(
    record: &MultichannelRecord,
    fir: &FirFilter,
) -> Result<Vec<DerivativeSignal>> {
    (0..record.channels())
        .into_par_iter()
        .map(|c| filter_channel(record, c, fir))
        .collect()
}

/// Nearest-rank percentile of `values` (need not be sorted).
pub fn nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    let i = nearest_rank_index(v.len(), p);
    let (_, x, _) = v.select_nth_unstable_by(i, f64::total_cmp);
    Some(*x)
}

/// Zero-based index of the nearest-rank `p`-th percentile in a sorted slice.
pub fn nearest_rank_index(len: usize, p: f64) -> usize {
    let rank = (p / 100.0 * len as f64).ceil() as usize;
    rank.clamp(1, len) - 1
}

/// `p`-th percentile of `|y|` over the valid region.
pub fn percentile_threshold(deriv: &DerivativeSignal, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 100.0) {
        return Err(Error::validation(format!(
            "percentile must lie in (0, 100) (got {p})"
        )));
    }
    let mags: Vec<f64> = deriv.valid().iter().map(|v| v.abs()).collect();
    nearest_rank(&mags, p)
        .ok_or_else(|| Error::validation("derivative signal has no samples after warm-up"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PercentileWarning {
    /// No beats expected; the bound is trivially 100.
    NoBeats,
    /// Pulse supports cover the whole record; the bound clamps to 0.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinPercentile {
    pub percent: f64,
    pub warning: Option<PercentileWarning>,
}

/// Lower bound `100·(1 − N_beats·T·fs/K)` on an admissible percentile.
pub fn min_percentile(
    n_beats: usize,
    window: f64,
    fs: f64,
    samples: usize,
) -> Result<MinPercentile> {
    if samples == 0 {
        return Err(Error::validation("record has no samples"));
    }
    if n_beats == 0 {
        return Ok(MinPercentile {
            percent: 100.0,
            warning: Some(PercentileWarning::NoBeats),
        });
    }
    let raw = 100.0 * (1.0 - n_beats as f64 * window * fs / samples as f64);
    if raw <= 0.0 {
        Ok(MinPercentile {
            percent: 0.0,
            warning: Some(PercentileWarning::Dense),
        })
    } else {
        Ok(MinPercentile {
            percent: raw,
            warning: None,
        })
    }
}

/// Greedy consolidation: keep a crossing iff it lies at least `l_min`
/// samples after the last kept one. `crossings` must be ascending.
pub fn consolidate(crossings: &[usize], l_min: usize) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for &k in crossings {
        match kept.last() {
            Some(&last) if k - last < l_min => {}
            _ => kept.push(k),
        }
    }
    kept
}

/// Sample indices in the valid region with `|y| > threshold`.
pub fn threshold_crossings(deriv: &DerivativeSignal, threshold: f64) -> Vec<usize> {
    deriv
        .samples
        .iter()
        .enumerate()
        .skip(deriv.warmup)
        .filter(|(_, v)| v.abs() > threshold)
        .map(|(k, _)| k)
        .collect()
}

/// Consolidated detections with peak and start localization.
///
/// The peak of a kept crossing is the magnitude maximum of the contiguous
/// supra-threshold run that begins at it, i.e. the first lobe of the pulse
/// signature that clears the threshold.
pub fn detect_and_consolidate(
    deriv: &DerivativeSignal,
    threshold: f64,
    l_min: usize,
) -> Vec<Detection> {
    let y = &deriv.samples;
    let search = deriv.warmup + 1;
    consolidate(&threshold_crossings(deriv, threshold), l_min)
        .into_iter()
        .map(|k| {
            let mut peak = k;
            let mut j = k;
            while j < y.len() && y[j].abs() > threshold {
                if y[j].abs() > y[peak].abs() {
                    peak = j;
                }
                j += 1;
            }
            let start = locate_start_within(deriv, peak, search);
            Detection {
                channel: deriv.channel,
                peak_index: peak,
                start_index: start.index,
                peak_time_s: peak as f64 / deriv.fs,
                start_time_s: start.time_s,
                magnitude: y[peak].abs(),
                flags: if start.fallback {
                    vec![DetectionFlag::NoZeroCrossing]
                } else {
                    vec![]
                },
            }
        })
        .collect()
}

/// Threshold at the configured percentile and detect on one channel.
pub fn detect_channel(
    deriv: &DerivativeSignal,
    params: &DetectParams,
    window: f64,
) -> Result<ChannelDetections> {
    let threshold = percentile_threshold(deriv, params.percentile)?;
    let l_min = params
        .l_min
        .unwrap_or_else(|| default_l_min(window, deriv.fs));
    Ok(ChannelDetections {
        channel: deriv.channel,
        threshold,
        detections: detect_and_consolidate(deriv, threshold, l_min),
    })
}

/// Detect on all channels.
pub fn detect_all(
    derivs: &[DerivativeSignal],
    params: &DetectParams,
    window: f64,
) -> Result<Vec<ChannelDetections>> {
    derivs
        .par_iter()
        .map(|d| detect_channel(d, params, window))
        .collect()
}

/// `floor(T·fs)`, with products within 1e-9 of an integer taken as exact.
pub fn default_l_min(window: f64, fs: f64) -> usize {
    let x = window * fs;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r as usize
    } else {
        x.floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartEstimate {
    pub index: usize,
    pub time_s: f64,
    pub fallback: bool,
}

/// First zero crossing at or after `peak_index`, searched over the filter
/// length `warmup + 1` samples.
pub fn locate_start(deriv: &DerivativeSignal, peak_index: usize) -> StartEstimate {
    locate_start_within(deriv, peak_index, deriv.warmup + 1)
}

fn locate_start_within(deriv: &DerivativeSignal, peak: usize, span: usize) -> StartEstimate {
    let y = &deriv.samples;
    let fs = deriv.fs;
    let end = (peak + span).min(y.len().saturating_sub(1));
    for j in peak..end {
        if y[j] == 0.0 {
            return StartEstimate {
                index: j,
                time_s: j as f64 / fs,
                fallback: false,
            };
        }
        if y[j + 1] == 0.0 {
            return StartEstimate {
                index: j + 1,
                time_s: (j + 1) as f64 / fs,
                fallback: false,
            };
        }
        if y[j].signum() != y[j + 1].signum() {
            let frac = y[j] / (y[j] - y[j + 1]);
            let index = (j as f64 + frac + 0.5).floor() as usize;
            let x = j as f64 + refine_crossing(y, j, frac);
            return StartEstimate {
                index,
                time_s: x / fs,
                fallback: false,
            };
        }
    }
    StartEstimate {
        index: peak,
        time_s: peak as f64 / fs,
        fallback: true,
    }
}

/// Root in `[0, 1]` of the cubic through `y[j-1..=j+2]`, offset from `j`.
/// Falls back to the linear estimate near the record edges.
fn refine_crossing(y: &[f64], j: usize, linear: f64) -> f64 {
    if j == 0 || j + 2 >= y.len() {
        return linear;
    }
    let (a, b, c, d) = (y[j - 1], y[j], y[j + 1], y[j + 2]);
    // Lagrange basis on nodes -1, 0, 1, 2.
    let p = |x: f64| {
        -a * x * (x - 1.0) * (x - 2.0) / 6.0 + b * (x + 1.0) * (x - 1.0) * (x - 2.0) / 2.0
            - c * (x + 1.0) * x * (x - 2.0) / 2.0
            + d * (x + 1.0) * x * (x - 1.0) / 6.0
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut p_lo = b;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let pm = p(mid);
        if pm == 0.0 {
            return mid;
        }
        if pm.signum() == p_lo.signum() {
            lo = mid;
            p_lo = pm;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(samples: Vec<f64>, warmup: usize) -> DerivativeSignal {
        DerivativeSignal {
            channel: 0,
            order: 1,
            samples,
            fs: 1000.0,
            warmup,
        }
    }

    #[test]
    fn nearest_rank_examples() {
        let d = sig((1..=100).map(f64::from).collect(), 0);
        assert_eq!(percentile_threshold(&d, 99.0).unwrap(), 99.0);
        assert_eq!(percentile_threshold(&d, 50.0).unwrap(), 50.0);
        let flat = sig(vec![-3.0; 17], 2);
        assert_eq!(percentile_threshold(&flat, 12.3).unwrap(), 3.0);
        assert!(percentile_threshold(&flat, 100.0).is_err());
        assert!(percentile_threshold(&sig(vec![1.0; 3], 3), 50.0).is_err());
    }

    #[test]
    fn min_percentile_examples() {
        let m = min_percentile(60, 0.1129, 5000.0, 300_000).unwrap();
        assert!((m.percent - 100.0 * (1.0 - 33_870.0 / 300_000.0)).abs() < 1e-9);
        assert!(m.warning.is_none());
        let m = min_percentile(0, 0.1, 5000.0, 1000).unwrap();
        assert_eq!(
            (m.percent, m.warning),
            (100.0, Some(PercentileWarning::NoBeats))
        );
        let m = min_percentile(2, 0.1, 5000.0, 1000).unwrap();
        assert_eq!(
            (m.percent, m.warning),
            (0.0, Some(PercentileWarning::Dense))
        );
        assert!(min_percentile(1, 0.1, 10.0, 0).is_err());
    }

    #[test]
    fn consolidation_rule() {
        assert_eq!(consolidate(&[100, 150, 800], 500), vec![100, 800]);
        assert_eq!(
            consolidate(&[100, 599, 600, 1099, 1100], 500),
            vec![100, 600, 1100]
        );
        assert!(consolidate(&[], 10).is_empty());
    }

    #[test]
    fn no_crossings_no_detections() {
        let d = sig(vec![0.1; 100], 0);
        assert!(detect_and_consolidate(&d, 1.0, 10).is_empty());
    }

    #[test]
    fn first_sign_change_after_peak() {
        let d = sig(vec![1.0, 1.0, -1.0, -1.0], 3);
        let s = locate_start(&d, 0);
        assert_eq!(s.index, 2);
        assert!(!s.fallback);
        let d = sig(vec![1.0, 0.0, -1.0], 2);
        assert_eq!(locate_start(&d, 0).index, 1);
    }

    #[test]
    fn monotone_tail_falls_back() {
        let d = sig((0..50).map(|k| 10.0 - 0.1 * k as f64).collect(), 10);
        let s = locate_start(&d, 5);
        assert!(s.fallback);
        assert_eq!(s.index, 5);
    }

    #[test]
    fn cubic_refinement_is_exact_for_cubics() {
        // y(x) = (x - 3.3)(x² + 1) has its only root at 3.3.
        let y: Vec<f64> = (0..8)
            .map(|k| {
                let x = k as f64;
                (x - 3.3) * (x * x + 1.0)
            })
            .collect();
        let mut d = sig(y, 7);
        d.fs = 1.0;
        let s = locate_start(&d, 0);
        assert_eq!(s.index, 3);
        assert!((s.time_s - 3.3).abs() < 1e-12, "{}", s.time_s);
    }

    #[test]
    fn peak_is_run_maximum() {
        let mut y = vec![0.0; 40];
        for (i, v) in [2.0, 5.0, 3.0].iter().enumerate() {
            y[10 + i] = *v;
        }
        y[13] = 0.5;
        y[14] = -6.0;
        let det = detect_and_consolidate(&sig(y, 5), 1.0, 20);
        assert_eq!(det.len(), 1);
        assert_eq!(det[0].peak_index, 11);
        // crossing at 13 + 0.5/6.5 rounds to 13
        assert_eq!(det[0].start_index, 13);
        assert_eq!(det[0].magnitude, 5.0);
    }

    #[test]
    fn l_min_default() {
        assert_eq!(default_l_min(0.1129, 5000.0), 564);
        assert_eq!(default_l_min(0.02, 500.0), 10);
    }
}
