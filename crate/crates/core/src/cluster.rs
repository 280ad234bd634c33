//! Cross-channel grouping of detections into beats, cardiac/artifact
//! classification, representative selection and delay statistics.

use serde::{Deserialize, Serialize};

use crate::detect::{nearest_rank_index, ChannelDetections, Detection};
use crate::error::{Error, Result};

/// Which detection time is used for grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeCoordinate {
    #[default]
    Start,
    Peak,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub delta_t_beat: f64,
    pub rho: f64,
    /// Defaults to the last channel.
    pub ref_channel: Option<usize>,
    /// Accept `delta_t_beat` outside 20–50 ms and `rho` outside 0.5–0.7.
    pub allow_out_of_range: bool,
    pub time_coordinate: TimeCoordinate,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            delta_t_beat: 0.030,
            rho: 0.6,
            ref_channel: None,
            allow_out_of_range: false,
            time_coordinate: TimeCoordinate::Start,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self, channels: usize) -> Result<()> {
        if !(self.delta_t_beat >= 0.0) || !self.delta_t_beat.is_finite() {
            return Err(Error::validation(format!(
                "delta_t_beat must be >= 0 (got {})",
                self.delta_t_beat
            )));
        }
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::validation(format!(
                "rho must lie in (0, 1] (got {})",
                self.rho
            )));
        }
        if !self.allow_out_of_range {
            if !(0.020..=0.050).contains(&self.delta_t_beat) {
                return Err(Error::validation(format!(
                    "delta_t_beat {} s outside [0.020, 0.050] s (set allow_out_of_range to override)",
                    self.delta_t_beat
                )));
            }
            if !(0.5..=0.7).contains(&self.rho) {
                return Err(Error::validation(format!(
                    "rho {} outside [0.5, 0.7] (set allow_out_of_range to override)",
                    self.rho
                )));
            }
        }
        if let Some(r) = self.ref_channel {
            if r >= channels {
                return Err(Error::validation(format!(
                    "ref_channel {r} out of range ({channels} channels)"
                )));
            }
        }
        Ok(())
    }

    pub fn reference(&self, channels: usize) -> usize {
        self.ref_channel.unwrap_or(channels.saturating_sub(1))
    }
}

/// A detection placed on the common time axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub time_s: f64,
    pub channel: usize,
    /// Position of the detection within its channel's list.
    pub detection: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Cardiac,
    Artifact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatGroup {
    pub id: usize,
    /// Sorted by time.
    pub members: Vec<Pulse>,
    pub classification: Classification,
    pub median_time_s: f64,
    /// One per channel, ordered by channel; empty for artifact groups.
    pub representatives: Vec<Pulse>,
}

impl BeatGroup {
    pub fn channel_count(&self) -> usize {
        let mut ch: Vec<usize> = self.members.iter().map(|p| p.channel).collect();
        ch.sort_unstable();
        ch.dedup();
        ch.len()
    }

    pub fn span(&self) -> (f64, f64) {
        (
            self.members.first().map_or(f64::NAN, |p| p.time_s),
            self.members.last().map_or(f64::NAN, |p| p.time_s),
        )
    }

    pub fn representative(&self, channel: usize) -> Option<&Pulse> {
        self.representatives.iter().find(|p| p.channel == channel)
    }
}

/// Flatten per-channel detections into a time-sorted pulse list.
pub fn collect_pulses(detections: &[ChannelDetections], coord: TimeCoordinate) -> Vec<Pulse> {
    let mut pulses: Vec<Pulse> = detections
        .iter()
        .flat_map(|cd| {
            cd.detections.iter().enumerate().map(move |(i, d)| Pulse {
                time_s: detection_time(d, coord),
                channel: cd.channel,
                detection: i,
            })
        })
        .collect();
    sort_pulses(&mut pulses);
    pulses
}

fn detection_time(d: &Detection, coord: TimeCoordinate) -> f64 {
    match coord {
        TimeCoordinate::Start => d.start_time_s,
        TimeCoordinate::Peak => d.peak_time_s,
    }
}

fn sort_pulses(p: &mut [Pulse]) {
    p.sort_by(|a, b| {
        a.time_s
            .total_cmp(&b.time_s)
            .then(a.channel.cmp(&b.channel))
            .then(a.detection.cmp(&b.detection))
    });
}

/// Greedy chaining: a pulse joins the current group iff it follows the
/// group's latest time by at most `delta_t_beat`. Groups come back
/// unclassified (marked artifact) without representatives.
pub fn group_beats(pulses: &[Pulse], delta_t_beat: f64) -> Vec<BeatGroup> {
    let mut sorted = pulses.to_vec();
    sort_pulses(&mut sorted);
    let mut groups: Vec<Vec<Pulse>> = Vec::new();
    for p in sorted {
        match groups.last_mut() {
            Some(g) if p.time_s - g.last().expect("groups are nonempty").time_s <= delta_t_beat => {
                g.push(p)
            }
            _ => groups.push(vec![p]),
        }
    }
    groups
        .into_iter()
        .enumerate()
        .map(|(id, members)| BeatGroup {
            id,
            median_time_s: lower_median(members.iter().map(|p| p.time_s)),
            members,
            classification: Classification::Artifact,
            representatives: vec![],
        })
        .collect()
}

fn lower_median(times: impl Iterator<Item = f64>) -> f64 {
    let mut t: Vec<f64> = times.collect();
    if t.is_empty() {
        return f64::NAN;
    }
    t.sort_by(f64::total_cmp);
    t[(t.len() - 1) / 2]
}

/// Cardiac iff at least `ceil(rho·C)` distinct channels participate.
pub fn classify(group: &BeatGroup, rho: f64, channels: usize) -> Classification {
    if group.channel_count() >= required_channels(rho, channels) {
        Classification::Cardiac
    } else {
        Classification::Artifact
    }
}

pub fn required_channels(rho: f64, channels: usize) -> usize {
    let x = rho * channels as f64;
    // Guard against 0.6·5 = 3.0000000000000004 style rounding.
    let r = x.round();
    if (x - r).abs() <= 1e-9 {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Keep, per channel, the member closest to the lower median time
/// (earlier member on ties).
pub fn select_representatives(group: &BeatGroup) -> BeatGroup {
    let median = lower_median(group.members.iter().map(|p| p.time_s));
    let mut reps: Vec<Pulse> = Vec::new();
    for p in &group.members {
        match reps.iter_mut().find(|r| r.channel == p.channel) {
            Some(r) => {
                if (p.time_s - median).abs() < (r.time_s - median).abs() {
                    *r = *p;
                }
            }
            None => reps.push(*p),
        }
    }
    reps.sort_by_key(|p| p.channel);
    BeatGroup {
        median_time_s: median,
        representatives: reps,
        ..group.clone()
    }
}

/// Pairs of consecutive groups whose median times are closer than
/// `2·delta_t_beat` and may have been merged or split incorrectly.
pub fn merge_hazards(groups: &[BeatGroup], delta_t_beat: f64) -> Vec<(usize, usize)> {
    groups
        .windows(2)
        .filter(|w| w[1].median_time_s - w[0].median_time_s < 2.0 * delta_t_beat)
        .map(|w| (w[0].id, w[1].id))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOutcome {
    pub groups: Vec<BeatGroup>,
    pub merge_hazards: Vec<(usize, usize)>,
}

impl ClusterOutcome {
    pub fn cardiac(&self) -> impl Iterator<Item = &BeatGroup> {
        self.groups
            .iter()
            .filter(|g| g.classification == Classification::Cardiac)
    }
}

/// Group, classify and select representatives in one pass.
pub fn cluster(
    detections: &[ChannelDetections],
    channels: usize,
    params: &ClusterParams,
) -> Result<ClusterOutcome> {
    params.validate(channels)?;
    let pulses = collect_pulses(detections, params.time_coordinate);
    let groups: Vec<BeatGroup> = group_beats(&pulses, params.delta_t_beat)
        .into_iter()
        .map(|g| {
            let class = classify(&g, params.rho, channels);
            if class == Classification::Cardiac {
                BeatGroup {
                    classification: class,
                    ..select_representatives(&g)
                }
            } else {
                g
            }
        })
        .collect();
    let merge_hazards = merge_hazards(&groups, params.delta_t_beat);
    for (a, b) in &merge_hazards {
        log::warn!(
            "beat groups {a} and {b} lie closer than 2·delta_t_beat; greedy grouping may have merged or split beats"
        );
    }
    Ok(ClusterOutcome {
        groups,
        merge_hazards,
    })
}

/// Per-channel delay relative to the reference channel, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDelay {
    pub channel: usize,
    pub samples: Vec<f64>,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
}

impl ChannelDelay {
    pub fn iqr(&self) -> Option<f64> {
        Some(self.q3? - self.q1?)
    }
}

/// Collect `t_c − t_ref` over cardiac groups containing both channels;
/// quartiles use the nearest-rank rule.
pub fn delay_stats(
    groups: &[BeatGroup],
    ref_channel: usize,
    channels: usize,
) -> Result<Vec<ChannelDelay>> {
    let cardiac: Vec<&BeatGroup> = groups
        .iter()
        .filter(|g| g.classification == Classification::Cardiac)
        .collect();
    if !cardiac
        .iter()
        .any(|g| g.representative(ref_channel).is_some())
    {
        return Err(Error::validation(format!(
            "no cardiac beat group contains the reference channel {ref_channel}"
        )));
    }
    Ok((0..channels)
        .map(|c| {
            let samples: Vec<f64> = cardiac
                .iter()
                .filter_map(|g| {
                    Some(g.representative(c)?.time_s - g.representative(ref_channel)?.time_s)
                })
                .collect();
            let mut sorted = samples.clone();
            sorted.sort_by(f64::total_cmp);
            let q =
                |p: f64| (!sorted.is_empty()).then(|| sorted[nearest_rank_index(sorted.len(), p)]);
            ChannelDelay {
                channel: c,
                median: q(50.0),
                q1: q(25.0),
                q3: q(75.0),
                samples,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulses(times: &[(f64, usize)]) -> Vec<Pulse> {
        times
            .iter()
            .enumerate()
            .map(|(i, &(t, c))| Pulse {
                time_s: t,
                channel: c,
                detection: i,
            })
            .collect()
    }

    #[test]
    fn chaining_example() {
        let g = group_beats(
            &pulses(&[(0.0, 0), (0.010, 1), (0.020, 2), (0.100, 3)]),
            0.030,
        );
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].members.len(), 3);
        assert_eq!(g[1].members.len(), 1);
        assert!(group_beats(&[], 0.03).is_empty());
    }

    #[test]
    fn chaining_can_span_more_than_delta() {
        let g = group_beats(&pulses(&[(0.0, 0), (0.025, 1), (0.050, 2)]), 0.030);
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn classification_rule() {
        let mk = |n: usize| BeatGroup {
            id: 0,
            members: pulses(&(0..n).map(|c| (0.0, c)).collect::<Vec<_>>()),
            classification: Classification::Artifact,
            median_time_s: 0.0,
            representatives: vec![],
        };
        assert_eq!(classify(&mk(6), 0.6, 8), Classification::Cardiac);
        assert_eq!(classify(&mk(2), 0.6, 8), Classification::Artifact);
        assert_eq!(classify(&mk(5), 0.625, 8), Classification::Cardiac);
        assert_eq!(classify(&mk(4), 0.6, 8), Classification::Artifact);
        assert_eq!(required_channels(0.6, 5), 3);
    }

    #[test]
    fn representatives_closest_to_median() {
        let g = &group_beats(
            &pulses(&[
                (0.991, 0),
                (0.997, 0),
                (1.0, 1),
                (1.0, 2),
                (1.003, 3),
                (1.009, 3),
            ]),
            0.03,
        )[0];
        let r = select_representatives(g);
        assert_eq!(r.median_time_s, 1.0);
        assert_eq!(r.representatives.len(), 4);
        assert_eq!(r.representative(0).unwrap().time_s, 0.997);
        assert_eq!(r.representative(3).unwrap().time_s, 1.003);
    }

    #[test]
    fn representative_ties_keep_earlier() {
        let g = &group_beats(&pulses(&[(0.996, 0), (1.0, 1), (1.004, 0)]), 0.03)[0];
        let r = select_representatives(g);
        assert_eq!(r.representative(0).unwrap().time_s, 0.996);
    }

    #[test]
    fn delay_stats_relative_to_reference() {
        let mut groups = Vec::new();
        for (i, jitter) in [0.0, 0.0002, -0.0002].iter().enumerate() {
            let base = i as f64 + jitter;
            let g = &group_beats(
                &pulses(&[(base, 1), (base + 0.004, 0), (base + 0.002, 2)]),
                0.03,
            )[0];
            let mut g = select_representatives(g);
            g.classification = Classification::Cardiac;
            groups.push(g);
        }
        let d = delay_stats(&groups, 1, 4).unwrap();
        assert_eq!(d[1].median, Some(0.0));
        assert_eq!(d[1].iqr(), Some(0.0));
        assert!((d[0].median.unwrap() - 0.004).abs() < 1e-12);
        assert!(d[3].samples.is_empty() && d[3].median.is_none());
        assert!(delay_stats(&groups, 3, 4).is_err());
    }

    #[test]
    fn params_validation() {
        let p = ClusterParams::default();
        assert!(p.validate(8).is_ok());
        assert_eq!(p.reference(8), 7);
        let bad = ClusterParams { rho: 1.0, ..p };
        assert!(bad.validate(8).is_err());
        assert!(ClusterParams {
            allow_out_of_range: true,
            ..bad
        }
        .validate(8)
        .is_ok());
        assert!(ClusterParams {
            ref_channel: Some(8),
            ..p
        }
        .validate(8)
        .is_err());
    }

    #[test]
    fn hazards_flag_close_groups() {
        let g = group_beats(&pulses(&[(0.0, 0), (0.05, 0), (1.0, 0)]), 0.03);
        assert_eq!(merge_hazards(&g, 0.03), vec![(0, 1)]);
    }
}
