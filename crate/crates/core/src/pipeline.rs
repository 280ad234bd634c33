//! End-to-end orchestration: design → filter → detect → cluster →
//! reconstruct, plus the on-disk artifact formats of each stage.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{cluster, delay_stats, ChannelDelay, Classification, ClusterOutcome};
use crate::config::{FilterConfig, PipelineConfig};
use crate::detect::{detect_all, filter_record, ChannelDetections, DerivativeSignal, Detection};
use crate::error::{Error, Result};
use crate::fir::{discretize, FilterDescriptor, FirFilter};
use crate::kernel::KernelSpec;
use crate::reconstruct::{
    estimate_amplitude, flag_overlaps, pulse_derivative_component, reconstruct_and_clean,
    snr_energies, snr_from_energies, CleanResult, PulseEstimate, PulseModel, SnrDb,
};
use crate::record::{MultichannelRecord, RecordFormat};

/// Order-n and order-0 filters of one parameter set.
#[derive(Debug, Clone)]
pub struct Design {
    pub spec: KernelSpec,
    pub fir_n: FirFilter,
    pub fir_0: FirFilter,
    pub model: PulseModel,
}

impl Design {
    pub fn new(filter: &FilterConfig, fs: f64) -> Result<Self> {
        Self::from_spec(filter.kernel_spec()?, fs)
    }

    pub fn from_spec(spec: KernelSpec, fs: f64) -> Result<Self> {
        let fir_n = discretize(&spec, spec.deriv_order, fs)?;
        let fir_0 = discretize(&spec, 0, fs)?;
        let model = PulseModel::new(&fir_n)?;
        Ok(Self {
            spec,
            fir_n,
            fir_0,
            model,
        })
    }

    pub fn window(&self) -> f64 {
        self.spec.window
    }
}

/// Representative of one channel in a beat table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeRecord {
    pub channel: usize,
    pub start_time_s: f64,
}

/// One row of the beat table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatRecord {
    pub group_id: usize,
    pub classification: Classification,
    pub median_time_s: f64,
    pub channels: Vec<usize>,
    pub representatives: Vec<RepresentativeRecord>,
}

/// Beat table rows; representatives carry zero-crossing start times
/// whatever time coordinate was used for grouping.
pub fn beat_table(outcome: &ClusterOutcome, detections: &[ChannelDetections]) -> Vec<BeatRecord> {
    let lookup = |channel: usize, idx: usize| -> &Detection {
        let cd = detections
            .iter()
            .find(|c| c.channel == channel)
            .expect("pulse refers to a known channel");
        &cd.detections[idx]
    };
    outcome
        .groups
        .iter()
        .map(|g| {
            let mut channels: Vec<usize> = g.members.iter().map(|p| p.channel).collect();
            channels.sort_unstable();
            channels.dedup();
            BeatRecord {
                group_id: g.id,
                classification: g.classification,
                median_time_s: g.median_time_s,
                channels,
                representatives: g
                    .representatives
                    .iter()
                    .map(|p| RepresentativeRecord {
                        channel: p.channel,
                        start_time_s: lookup(p.channel, p.detection).start_time_s,
                    })
                    .collect(),
            }
        })
        .collect()
}

/// Cardiac start times per channel, ascending.
pub fn cardiac_starts(beats: &[BeatRecord], channels: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(); channels];
    for b in beats
        .iter()
        .filter(|b| b.classification == Classification::Cardiac)
    {
        for r in &b.representatives {
            if r.channel < channels {
                out[r.channel].push(r.start_time_s);
            }
        }
    }
    for v in &mut out {
        v.sort_by(f64::total_cmp);
    }
    out
}

/// Least-squares amplitudes for the cardiac representatives of each channel.
pub fn estimate_pulses(
    derivs: &[DerivativeSignal],
    model: &PulseModel,
    beats: &[BeatRecord],
) -> Result<Vec<Vec<PulseEstimate>>> {
    let starts = cardiac_starts(beats, derivs.len());
    derivs
        .par_iter()
        .zip(starts.par_iter())
        .map(|(d, s)| {
            let mut est = s
                .iter()
                .map(|t| estimate_amplitude(d, model, *t))
                .collect::<Result<Vec<_>>>()?;
            flag_overlaps(&mut est);
            Ok(est)
        })
        .collect()
}

/// Reconstruct and subtract the cardiac component on every channel.
pub fn clean_record(
    record: &MultichannelRecord,
    design: &Design,
    estimates: &[Vec<PulseEstimate>],
) -> Result<Vec<CleanResult>> {
    record
        .data
        .par_iter()
        .zip(estimates.par_iter())
        .enumerate()
        .map(|(c, (x, est))| reconstruct_and_clean(c, x, &design.fir_0, &design.model, est))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSnr {
    pub channel: usize,
    pub snr_db: SnrDb,
}

/// Output SNR per channel and pooled over channels (energy sums).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrReport {
    /// True when the reconstructed pulse component stands in for ground truth.
    pub proxy: bool,
    pub pooled_db: SnrDb,
    pub channels: Vec<ChannelSnr>,
}

/// SNR of the derivative signals against the true cardiac pulse component
/// (`truth` holds each channel's cardiac impulse train), or against the
/// reconstructed derivative component when no truth is available.
pub fn snr_report(
    derivs: &[DerivativeSignal],
    design: &Design,
    estimates: &[Vec<PulseEstimate>],
    truth: Option<&MultichannelRecord>,
) -> Result<SnrReport> {
    if let Some(t) = truth {
        if t.channels() != derivs.len() || t.samples() != derivs.first().map_or(0, |d| d.len()) {
            return Err(Error::validation(format!(
                "truth record is {}x{}, derivative signals {}x{}",
                t.channels(),
                t.samples(),
                derivs.len(),
                derivs.first().map_or(0, |d| d.len())
            )));
        }
    }
    let energies: Vec<(f64, f64)> = derivs
        .par_iter()
        .enumerate()
        .map(|(c, d)| {
            let pulse = match truth {
                Some(t) => design.fir_n.apply(&t.data[c]),
                None => pulse_derivative_component(d.len(), &design.model, &estimates[c]),
            };
            snr_energies(d, &pulse)
        })
        .collect::<Result<_>>()?;
    let (p, r) = energies
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    Ok(SnrReport {
        proxy: truth.is_none(),
        pooled_db: snr_from_energies(p, r),
        channels: energies
            .iter()
            .enumerate()
            .map(|(c, (p, r))| ChannelSnr {
                channel: c,
                snr_db: snr_from_energies(*p, *r),
            })
            .collect(),
    })
}

/// Everything one pipeline run produces.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub filter: FilterDescriptor,
    pub derivs: Vec<DerivativeSignal>,
    pub detections: Vec<ChannelDetections>,
    pub clusters: ClusterOutcome,
    pub beats: Vec<BeatRecord>,
    /// Empty when no cardiac group contains the reference channel.
    pub delays: Vec<ChannelDelay>,
    pub ref_channel: usize,
    pub estimates: Vec<Vec<PulseEstimate>>,
    pub clean: Vec<CleanResult>,
    pub snr: SnrReport,
}

/// Run all stages on `record`; errors are tagged with the failing stage.
pub fn run_pipeline(
    config: &PipelineConfig,
    record: &MultichannelRecord,
    truth: Option<&MultichannelRecord>,
) -> Result<PipelineOutput> {
    config.validate().map_err(|e| e.in_stage("config"))?;
    record.validate().map_err(|e| e.in_stage("input"))?;
    let design = Design::new(&config.filter, record.fs).map_err(|e| e.in_stage("design"))?;
    run_with_design(config, &design, record, truth)
}

pub fn run_with_design(
    config: &PipelineConfig,
    design: &Design,
    record: &MultichannelRecord,
    truth: Option<&MultichannelRecord>,
) -> Result<PipelineOutput> {
    let channels = record.channels();
    let derivs = filter_record(record, &design.fir_n).map_err(|e| e.in_stage("filter"))?;
    let detections = detect_all(&derivs, &config.detection.params(), design.window())
        .map_err(|e| e.in_stage("detect"))?;
    let params = config.clustering.params();
    let clusters = cluster(&detections, channels, &params).map_err(|e| e.in_stage("cluster"))?;
    let beats = beat_table(&clusters, &detections);
    let ref_channel = params.reference(channels);
    let delays = match delay_stats(&clusters.groups, ref_channel, channels) {
        Ok(d) => d,
        Err(e) => {
            log::warn!("delay statistics unavailable: {e}");
            Vec::new()
        }
    };
    let estimates =
        estimate_pulses(&derivs, &design.model, &beats).map_err(|e| e.in_stage("reconstruct"))?;
    let clean = clean_record(record, design, &estimates).map_err(|e| e.in_stage("reconstruct"))?;
    let snr = snr_report(&derivs, design, &estimates, truth).map_err(|e| e.in_stage("snr"))?;
    Ok(PipelineOutput {
        filter: design.fir_n.descriptor(),
        derivs,
        detections,
        clusters,
        beats,
        delays,
        ref_channel,
        estimates,
        clean,
        snr,
    })
}

// ---------------------------------------------------------------------------
// Artifact formats

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn json_err(path: &Path, e: serde_json::Error, line_offset: usize) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        location: format!("line {}, column {}", e.line() + line_offset, e.column()),
        message: e.to_string(),
    }
}

pub fn to_json_pretty<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("value serializes");
    s.push('\n');
    s
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| json_err(path, e, 0))
}

/// Write the filter taps CSV and its JSON descriptor (`<stem>.json`).
pub fn write_filter(fir: &FirFilter, taps_path: &Path, descriptor_path: &Path) -> Result<()> {
    write(taps_path, &fir.taps_csv())?;
    write(descriptor_path, &to_json_pretty(&fir.descriptor()))
}

/// Detections as JSON lines, ordered by (channel, peak_index).
pub fn detections_jsonl(detections: &[ChannelDetections]) -> String {
    let mut all: Vec<&Detection> = detections.iter().flat_map(|c| &c.detections).collect();
    all.sort_by_key(|d| (d.channel, d.peak_index));
    let mut out = String::new();
    for d in all {
        out.push_str(&serde_json::to_string(d).expect("detection serializes"));
        out.push('\n');
    }
    out
}

/// Parse detections JSON lines back into per-channel lists.
pub fn parse_detections_jsonl(
    text: &str,
    channels: usize,
    path: &Path,
) -> Result<Vec<ChannelDetections>> {
    let mut out: Vec<ChannelDetections> = (0..channels)
        .map(|c| ChannelDetections {
            channel: c,
            threshold: f64::NAN,
            detections: vec![],
        })
        .collect();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let d: Detection = serde_json::from_str(line).map_err(|e| json_err(path, e, i))?;
        if d.channel >= channels {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                location: format!("line {}", i + 1),
                message: format!("channel {} out of range ({channels} channels)", d.channel),
            });
        }
        out[d.channel].detections.push(d);
    }
    for c in &mut out {
        c.detections.sort_by_key(|d| d.peak_index);
    }
    Ok(out)
}

/// Thresholds per channel, for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRecord {
    pub channel: usize,
    pub threshold: f64,
}

pub fn thresholds(detections: &[ChannelDetections]) -> Vec<ThresholdRecord> {
    detections
        .iter()
        .map(|c| ThresholdRecord {
            channel: c.channel,
            threshold: c.threshold,
        })
        .collect()
}

/// `channel,median_ms,q1_ms,q3_ms,count`; empty fields for channels
/// without common beats.
pub fn delays_csv(delays: &[ChannelDelay]) -> String {
    let ms = |v: Option<f64>| v.map_or(String::new(), |x| format!("{}", x * 1e3));
    let mut out = String::from("channel,median_ms,q1_ms,q3_ms,count\n");
    for d in delays {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            d.channel,
            ms(d.median),
            ms(d.q1),
            ms(d.q3),
            d.samples.len()
        ));
    }
    out
}

/// All per-beat delay samples (`channel,delay_ms`) for box plots.
pub fn delay_samples_csv(delays: &[ChannelDelay]) -> String {
    let mut out = String::from("channel,delay_ms\n");
    for d in delays {
        for s in &d.samples {
            out.push_str(&format!("{},{}\n", d.channel, s * 1e3));
        }
    }
    out
}

/// Record with the given channel data, same rate and labels as `like`.
pub fn record_like(like: &MultichannelRecord, data: Vec<Vec<f64>>) -> MultichannelRecord {
    MultichannelRecord {
        fs: like.fs,
        data,
        channel_labels: like.channel_labels.clone(),
    }
}

/// Per-channel time series for plotting: raw, filtered and clean traces and
/// the derivative with its threshold.
pub fn plot_series_csv(
    record: &MultichannelRecord,
    out: &PipelineOutput,
    channel: usize,
) -> String {
    let raw = &record.data[channel];
    let cr = &out.clean[channel];
    let d = &out.derivs[channel];
    let thr = out.detections[channel].threshold;
    let mut s = String::from("time_s,raw,filtered,pulse,clean,derivative,threshold,valid\n");
    for (k, x) in raw.iter().enumerate() {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            k as f64 / record.fs,
            x,
            cr.filtered[k],
            cr.pulse_component[k],
            cr.clean[k],
            d.samples[k],
            thr,
            u8::from(k >= d.warmup)
        ));
    }
    s
}

/// File extension matching the input record's format.
pub fn record_extension(format: RecordFormat) -> &'static str {
    match format {
        RecordFormat::Csv => "csv",
        RecordFormat::Binary => "bin",
    }
}

/// Write every artifact of a run into `dir`.
pub fn write_artifacts(
    dir: &Path,
    record: &MultichannelRecord,
    format: RecordFormat,
    design: &Design,
    out: &PipelineOutput,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_filter(
        &design.fir_n,
        &dir.join("filter_taps.csv"),
        &dir.join("filter.json"),
    )?;
    write(
        &dir.join("detections.jsonl"),
        &detections_jsonl(&out.detections),
    )?;
    write(
        &dir.join("thresholds.json"),
        &to_json_pretty(&thresholds(&out.detections)),
    )?;
    write(&dir.join("beats.json"), &to_json_pretty(&out.beats))?;
    write(&dir.join("delays.csv"), &delays_csv(&out.delays))?;
    write(
        &dir.join("delay_samples.csv"),
        &delay_samples_csv(&out.delays),
    )?;
    write(&dir.join("estimates.json"), &to_json_pretty(&out.estimates))?;
    write(&dir.join("snr.json"), &to_json_pretty(&out.snr))?;
    let clean = record_like(record, out.clean.iter().map(|c| c.clean.clone()).collect());
    clean.save(&dir.join(format!("clean.{}", record_extension(format))))?;
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    for c in 0..record.channels() {
        write(
            &plots.join(format!("channel_{c}.csv")),
            &plot_series_csv(record, out, c),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthScenario};

    #[test]
    fn detections_round_trip_through_jsonl() {
        let sc = SynthScenario::reference();
        let (rec, _) = generate(&sc).unwrap();
        let cfg = PipelineConfig::default();
        let out = run_pipeline(&cfg, &rec, None).unwrap();
        let text = detections_jsonl(&out.detections);
        let back = parse_detections_jsonl(&text, rec.channels(), Path::new("d.jsonl")).unwrap();
        for (a, b) in out.detections.iter().zip(&back) {
            assert_eq!(a.detections, b.detections);
        }
    }

    #[test]
    fn bad_detection_line_is_located() {
        let err =
            parse_detections_jsonl("\n{\"channel\": 0}\n", 2, Path::new("d.jsonl")).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
