//! Causal FIR realization of the differentiator kernels.
//!
//! Taps sample the analytic kernel derivative at interval mid-points,
//! `h[i] = g^(n)((i + 1/2)/fs) / fs`, so plain discrete convolution
//! approximates the continuous convolution integral.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Kernel, KernelSpec};

/// Discretized causal filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub sample_rate: f64,
    pub deriv_order: u32,
    /// Effective delay of the discrete estimate in seconds: the kernel delay
    /// `T(1-ϑ)/2` minus the half sample introduced by mid-point sampling.
    pub estimation_delay: f64,
    pub source_spec: KernelSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyPoint {
    pub frequency: f64,
    pub magnitude: f64,
    pub phase: f64,
}

/// JSON descriptor of an exported filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDescriptor {
    pub n: u32,
    #[serde(rename = "N")]
    pub poly_degree: u32,
    pub alpha: f64,
    pub beta: f64,
    pub theta: f64,
    #[serde(rename = "T")]
    pub window: f64,
    pub fs: f64,
    #[serde(rename = "L")]
    pub len: usize,
    pub delay: f64,
}

/// Number of taps `ceil(T·fs)`, treating products within 1e-9 of an
/// integer as exact so that e.g. `0.02 · 500` yields 10.
pub fn tap_count(window: f64, fs: f64) -> usize {
    let x = window * fs;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Sample the `order`-th derivative of `spec`'s kernel at rate `fs`.
pub fn discretize(spec: &KernelSpec, order: u32, fs: f64) -> Result<FirFilter> {
    if !(fs > 0.0) || !fs.is_finite() {
        return Err(Error::validation(format!(
            "sample rate must be > 0 (got {fs})"
        )));
    }
    let kernel = Kernel::new(*spec)?;
    spec.validate_order(order)?;
    let len = tap_count(spec.window, fs);
    if len < spec.poly_degree as usize + 1 || len == 0 {
        return Err(Error::validation(format!(
            "kernel under-resolved: L = {len} taps < N + 1 = {} at fs = {fs}",
            spec.poly_degree + 1
        )));
    }
    let taps = (0..len)
        .map(|i| kernel.derivative_unchecked(order, (i as f64 + 0.5) / fs) / fs)
        .collect();
    Ok(FirFilter {
        taps,
        sample_rate: fs,
        deriv_order: order,
        estimation_delay: spec.estimation_delay() - 0.5 / fs,
        source_spec: *spec,
    })
}

impl FirFilter {
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    /// Leading output samples that still see the implicit zero history.
    pub fn warmup(&self) -> usize {
        self.taps.len().saturating_sub(1)
    }

    /// Causal convolution; the output has the input's length.
    pub fn apply(&self, input: &[f64]) -> Vec<f64> {
        convolve_causal(&self.taps, input)
    }

    /// Discrete-time transfer function at `freq` Hz, `0 ≤ freq ≤ fs/2`.
    pub fn frequency_response(&self, freq: f64) -> Result<FrequencyPoint> {
        if !(0.0..=0.5 * self.sample_rate).contains(&freq) {
            return Err(Error::validation(format!(
                "frequency {freq} Hz outside [0, {}] Hz",
                0.5 * self.sample_rate
            )));
        }
        let h = self.transfer(freq);
        Ok(FrequencyPoint {
            frequency: freq,
            magnitude: h.norm(),
            phase: h.arg(),
        })
    }

    pub(crate) fn transfer(&self, freq: f64) -> Complex<f64> {
        let w = 2.0 * PI * freq / self.sample_rate;
        self.taps
            .iter()
            .enumerate()
            .fold(Complex::new(0.0, 0.0), |acc, (i, &t)| {
                let phi = w * i as f64;
                acc + Complex::new(t * phi.cos(), -t * phi.sin())
            })
    }

    /// White-noise variance gain `Σ h²`.
    pub fn noise_gain(&self) -> f64 {
        noise_gain(self)
    }

    pub fn descriptor(&self) -> FilterDescriptor {
        let s = &self.source_spec;
        FilterDescriptor {
            n: self.deriv_order,
            poly_degree: s.poly_degree,
            alpha: s.alpha,
            beta: s.beta,
            theta: s.theta,
            window: s.window,
            fs: self.sample_rate,
            len: self.len(),
            delay: self.estimation_delay,
        }
    }

    /// Rebuild a filter from its descriptor.
    pub fn from_descriptor(desc: &FilterDescriptor) -> Result<Self> {
        let spec = KernelSpec {
            deriv_order: desc.n,
            poly_degree: desc.poly_degree,
            alpha: desc.alpha,
            beta: desc.beta,
            theta: desc.theta,
            window: desc.window,
        };
        let fir = discretize(&spec, desc.n, desc.fs)?;
        if fir.len() != desc.len {
            return Err(Error::validation(format!(
                "descriptor length L = {} does not match rebuilt filter ({})",
                desc.len,
                fir.len()
            )));
        }
        Ok(fir)
    }

    /// Taps, one per line, 17 significant digits.
    pub fn taps_csv(&self) -> String {
        let mut out = String::with_capacity(self.taps.len() * 26);
        for t in &self.taps {
            out.push_str(&format!("{t:.16e}\n"));
        }
        out
    }
}

/// `Σ h²` of the taps.
pub fn noise_gain(filter: &FirFilter) -> f64 {
    filter.taps.iter().map(|t| t * t).sum()
}

/// Parse a taps CSV produced by [`FirFilter::taps_csv`].
pub fn parse_taps_csv(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|e| Error::validation(format!("taps line {}: {e}", i + 1)))
        })
        .collect()
}

/// Work above which overlap-save FFT convolution replaces the direct sum.
const FFT_WORK_THRESHOLD: usize = 1 << 24;
const DIRECT_BLOCK: usize = 2048;

/// `y[k] = Σ_{i ≤ k} h[i] x[k-i]` for `k < x.len()`.
///
/// The method is chosen from the sizes alone, so identical inputs always
/// produce identical outputs.
pub fn convolve_causal(taps: &[f64], input: &[f64]) -> Vec<f64> {
    if taps.is_empty() || input.is_empty() {
        return vec![0.0; input.len()];
    }
    let work = taps.len().saturating_mul(input.len());
    if taps.len() >= 64 && input.len() >= 4 * taps.len() && work > FFT_WORK_THRESHOLD {
        convolve_fft(taps, input)
    } else {
        convolve_direct(taps, input)
    }
}

pub(crate) fn convolve_direct(taps: &[f64], input: &[f64]) -> Vec<f64> {
    let n = input.len();
    let mut out = vec![0.0; n];
    for block in (0..n).step_by(DIRECT_BLOCK) {
        let end = (block + DIRECT_BLOCK).min(n);
        for (i, &h) in taps.iter().enumerate() {
            let lo = block.max(i);
            if lo >= end {
                break;
            }
            let dst = &mut out[lo..end];
            let src = &input[lo - i..end - i];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += h * s;
            }
        }
    }
    out
}

pub(crate) fn convolve_fft(taps: &[f64], input: &[f64]) -> Vec<f64> {
    let l = taps.len();
    let nfft = (8 * l).next_power_of_two().max(1024);
    let step = nfft - (l - 1);
    let mut planner = FftPlanner::<f64>::new();
    let fwd: Arc<dyn rustfft::Fft<f64>> = planner.plan_fft_forward(nfft);
    let inv = planner.plan_fft_inverse(nfft);

    let mut spectrum: Vec<Complex<f64>> = taps
        .iter()
        .map(|&t| Complex::new(t, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(nfft)
        .collect();
    fwd.process(&mut spectrum);

    let n = input.len();
    let mut out = vec![0.0; n];
    let mut buf = vec![Complex::new(0.0, 0.0); nfft];
    let scale = 1.0 / nfft as f64;
    let mut start = 0;
    while start < n {
        // buf[j] holds x[start - (l-1) + j]
        for (j, b) in buf.iter_mut().enumerate() {
            let idx = (start + j) as isize - (l as isize - 1);
            *b = if idx >= 0 && (idx as usize) < n {
                Complex::new(input[idx as usize], 0.0)
            } else {
                Complex::new(0.0, 0.0)
            };
        }
        fwd.process(&mut buf);
        for (b, h) in buf.iter_mut().zip(&spectrum) {
            *b *= h;
        }
        inv.process(&mut buf);
        let take = step.min(n - start);
        for j in 0..take {
            out[start + j] = buf[l - 1 + j].re * scale;
        }
        start += step;
    }
    out
}
