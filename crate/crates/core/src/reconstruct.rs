//! Pulse amplitude estimation, cardiac component reconstruction and output SNR.

use serde::{Deserialize, Serialize, Serializer};

use crate::detect::DerivativeSignal;
use crate::error::{Error, Result};
use crate::fir::FirFilter;
use crate::kernel::Kernel;

const ZERO_SCAN_POINTS: usize = 20_000;

/// First zero crossing `t₀` of `g^(n)` after its (earliest) peak magnitude.
pub fn kernel_zero_crossing(fir_n: &FirFilter) -> Result<f64> {
    let order = fir_n.deriv_order;
    if order == 0 {
        return Err(Error::validation(
            "the kernel zero crossing needs a derivative order n >= 1",
        ));
    }
    let kernel = Kernel::new(fir_n.source_spec)?;
    kernel.spec().validate_order(order)?;
    let t = kernel.spec().window;
    let h = t / ZERO_SCAN_POINTS as f64;
    let f = |tau: f64| kernel.derivative_unchecked(order, tau);
    let vals: Vec<f64> = (0..ZERO_SCAN_POINTS)
        .map(|i| f((i as f64 + 0.5) * h))
        .collect();
    let max = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 {
        return Err(Error::numeric("kernel derivative vanishes identically"));
    }
    // Symmetric kernels have equal lobes; take the earliest one.
    let peak = vals
        .iter()
        .position(|v| v.abs() >= (1.0 - 1e-9) * max)
        .expect("maximum is attained");
    for i in peak..ZERO_SCAN_POINTS - 1 {
        let (a, b) = (vals[i], vals[i + 1]);
        if a == 0.0 {
            return Ok((i as f64 + 0.5) * h);
        }
        if a.signum() != b.signum() {
            let (mut lo, mut hi) = ((i as f64 + 0.5) * h, (i as f64 + 1.5) * h);
            let mut f_lo = a;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let fm = f(mid);
                if fm == 0.0 {
                    return Ok(mid);
                }
                if fm.signum() == f_lo.signum() {
                    lo = mid;
                    f_lo = fm;
                } else {
                    hi = mid;
                }
            }
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(Error::numeric(
        "kernel derivative has no zero crossing after its peak",
    ))
}

/// Shifted-kernel pulse templates for one filter design.
#[derive(Debug, Clone)]
pub struct PulseModel {
    kernel: Kernel,
    pub order: u32,
    /// Zero crossing `t₀` of `g^(n)`.
    pub t0: f64,
    pub window: f64,
    pub fs: f64,
}

impl PulseModel {
    pub fn new(fir_n: &FirFilter) -> Result<Self> {
        let t0 = kernel_zero_crossing(fir_n)?;
        Ok(Self {
            kernel: Kernel::new(fir_n.source_spec)?,
            order: fir_n.deriv_order,
            t0,
            window: fir_n.source_spec.window,
            fs: fir_n.sample_rate,
        })
    }

    /// `g^(n)(t − t_m + t₀)`.
    pub fn derivative_template(&self, t: f64, start: f64) -> f64 {
        self.kernel
            .derivative_unchecked(self.order, t - start + self.t0)
    }

    /// `g(t − t_m + t₀)`.
    pub fn template(&self, t: f64, start: f64) -> f64 {
        self.kernel.eval(t - start + self.t0)
    }

    /// Time span `[t_m − t₀, t_m − t₀ + T]` where the templates are nonzero.
    pub fn support(&self, start: f64) -> (f64, f64) {
        (start - self.t0, start - self.t0 + self.window)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseFlag {
    /// Window or support clipped at the record boundary or warm-up.
    Truncated,
    /// Fit window overlaps the next pulse's.
    Overlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseEstimate {
    pub channel: usize,
    /// Start time `t_m` (zero crossing) in seconds.
    pub start_time_s: f64,
    pub amplitude: f64,
    /// `[t_m, t_m + T]`.
    pub fit_window: (f64, f64),
    #[serde(default)]
    pub flags: Vec<PulseFlag>,
}

/// Sample indices `i` with `lo ≤ i/fs ≤ hi`, clipped to `[first, len)`.
fn index_range(lo: f64, hi: f64, fs: f64, first: usize, len: usize) -> (usize, usize, bool) {
    let a = (lo * fs - 1e-9).ceil();
    let b = (hi * fs + 1e-9).floor() + 1.0;
    let clipped = a < first as f64 || b > len as f64;
    let ca = a.max(first as f64).min(len as f64) as usize;
    let cb = b.min(len as f64).max(ca as f64) as usize;
    (ca, cb, clipped)
}

/// Least-squares amplitude of the shifted derivative kernel over `[t_m, t_m + T]`.
pub fn estimate_amplitude(
    deriv: &DerivativeSignal,
    model: &PulseModel,
    start_time_s: f64,
) -> Result<PulseEstimate> {
    let fit_window = (start_time_s, start_time_s + model.window);
    let (a, b, truncated) = index_range(
        fit_window.0,
        fit_window.1,
        deriv.fs,
        deriv.warmup,
        deriv.len(),
    );
    let (mut num, mut den) = (0.0, 0.0);
    for i in a..b {
        let s = model.derivative_template(i as f64 / deriv.fs, start_time_s);
        num += deriv.samples[i] * s;
        den += s * s;
    }
    if den < 1e-30 {
        return Err(Error::numeric(format!(
            "degenerate least-squares fit at t = {start_time_s:.6} s on channel {} (Σs² = {den:e})",
            deriv.channel
        )));
    }
    Ok(PulseEstimate {
        channel: deriv.channel,
        start_time_s,
        amplitude: num / den,
        fit_window,
        flags: if truncated {
            vec![PulseFlag::Truncated]
        } else {
            vec![]
        },
    })
}

/// Mark estimates whose fit windows overlap; returns how many were marked.
pub fn flag_overlaps(estimates: &mut [PulseEstimate]) -> usize {
    estimates.sort_by(|a, b| a.start_time_s.total_cmp(&b.start_time_s));
    let mut marked = 0;
    for i in 1..estimates.len() {
        if estimates[i].fit_window.0 < estimates[i - 1].fit_window.1 {
            for j in [i - 1, i] {
                if !estimates[j].flags.contains(&PulseFlag::Overlap) {
                    estimates[j].flags.push(PulseFlag::Overlap);
                    marked += 1;
                }
            }
        }
    }
    if marked > 0 {
        log::warn!(
            "{marked} pulse fit windows overlap; independent amplitude fits are approximate there"
        );
    }
    marked
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanResult {
    pub channel: usize,
    /// Order-0 filtered signal.
    pub filtered: Vec<f64>,
    pub pulse_component: Vec<f64>,
    /// `filtered − pulse_component`.
    pub clean: Vec<f64>,
    /// Estimates whose reconstructed support was clipped at the record ends.
    pub truncated: Vec<usize>,
}

/// `Σ â·g(t − t_m + t₀)` sampled at `k/fs` for `k < len`.
pub fn pulse_component(
    len: usize,
    model: &PulseModel,
    estimates: &[PulseEstimate],
) -> (Vec<f64>, Vec<usize>) {
    synthesize(len, model, estimates, |t, s| model.template(t, s))
}

/// `Σ â·g^(n)(t − t_m + t₀)`: the reconstructed pulse derivative component.
pub fn pulse_derivative_component(
    len: usize,
    model: &PulseModel,
    estimates: &[PulseEstimate],
) -> Vec<f64> {
    synthesize(len, model, estimates, |t, s| {
        model.derivative_template(t, s)
    })
    .0
}

fn synthesize(
    len: usize,
    model: &PulseModel,
    estimates: &[PulseEstimate],
    shape: impl Fn(f64, f64) -> f64,
) -> (Vec<f64>, Vec<usize>) {
    let mut out = vec![0.0; len];
    let mut truncated = Vec::new();
    for (m, e) in estimates.iter().enumerate() {
        let (lo, hi) = model.support(e.start_time_s);
        let (a, b, clipped) = index_range(lo, hi, model.fs, 0, len);
        if clipped {
            truncated.push(m);
        }
        for (k, v) in out.iter_mut().enumerate().take(b).skip(a) {
            *v += e.amplitude * shape(k as f64 / model.fs, e.start_time_s);
        }
    }
    (out, truncated)
}

/// Subtract the reconstructed pulse component from the order-0 filtered channel.
pub fn reconstruct_and_clean(
    channel: usize,
    signal: &[f64],
    fir0: &FirFilter,
    model: &PulseModel,
    estimates: &[PulseEstimate],
) -> Result<CleanResult> {
    if fir0.deriv_order != 0 {
        return Err(Error::validation("reconstruction needs the order-0 filter"));
    }
    let filtered = fir0.apply(signal);
    let (pulse, truncated) = pulse_component(signal.len(), model, estimates);
    if !truncated.is_empty() {
        log::warn!(
            "channel {channel}: {} reconstructed pulses truncated at the record boundary",
            truncated.len()
        );
    }
    let clean = filtered.iter().zip(&pulse).map(|(f, p)| f - p).collect();
    Ok(CleanResult {
        channel,
        filtered,
        pulse_component: pulse,
        clean,
        truncated,
    })
}

/// Output SNR in dB, `+∞` when the residual vanishes.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SnrDb(pub f64);

impl Serialize for SnrDb {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0 > 0.0 {
            s.serialize_str("+inf")
        } else if self.0 < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }
}

impl<'de> Deserialize<'de> for SnrDb {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(SnrDb(v)),
            Repr::Text(t) => match t.as_str() {
                "+inf" | "inf" => Ok(SnrDb(f64::INFINITY)),
                "-inf" => Ok(SnrDb(f64::NEG_INFINITY)),
                "nan" => Ok(SnrDb(f64::NAN)),
                other => Err(serde::de::Error::custom(format!("bad SNR value '{other}'"))),
            },
        }
    }
}

/// `‖pulse‖²` and `‖deriv − pulse‖²` over the valid region.
pub fn snr_energies(deriv: &DerivativeSignal, pulse: &[f64]) -> Result<(f64, f64)> {
    if pulse.len() != deriv.len() {
        return Err(Error::validation(format!(
            "pulse component has {} samples, derivative signal {}",
            pulse.len(),
            deriv.len()
        )));
    }
    let start = deriv.warmup.min(pulse.len());
    let (mut p, mut r) = (0.0, 0.0);
    for (y, q) in deriv.samples[start..].iter().zip(&pulse[start..]) {
        p += q * q;
        r += (y - q) * (y - q);
    }
    Ok((p, r))
}

pub fn snr_from_energies(pulse: f64, residual: f64) -> SnrDb {
    if residual == 0.0 {
        SnrDb(f64::INFINITY)
    } else {
        SnrDb(10.0 * (pulse / residual).log10())
    }
}

/// `10·log10(‖pulse‖² / ‖deriv − pulse‖²)` over valid samples.
pub fn snr_out(deriv: &DerivativeSignal, pulse: &[f64]) -> Result<SnrDb> {
    let (p, r) = snr_energies(deriv, pulse)?;
    Ok(snr_from_energies(p, r))
}
