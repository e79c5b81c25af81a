//! Linear-phase low-pass FIR design (Kaiser window) and decimation.

use std::f64::consts::PI;

use super::sequence::SensorSequence;
use crate::error::{Error, Result};

/// Edge of the passband, Hz.
pub const PASSBAND_HZ: f64 = 10.0;
/// Edge of the stopband, Hz.
pub const STOPBAND_HZ: f64 = 15.0;
/// Design attenuation, dB. Above the required 33.5 dB to leave headroom for
/// the Kaiser sizing formula, which is approximate.
pub const DESIGN_ATTENUATION_DB: f64 = 40.0;
/// Rate every sequence is brought to before feature extraction.
pub const TARGET_HZ: f64 = 30.0;

/// Zeroth-order modified Bessel function of the first kind, by its series.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half = x / 2.0;
    for k in 1..200 {
        term *= (half / k as f64).powi(2);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// A symmetric (linear-phase) FIR filter with an odd number of taps.
#[derive(Clone, Debug, PartialEq)]
pub struct FirFilter {
    taps: Vec<f64>,
    rate_hz: f64,
}

impl FirFilter {
    /// Kaiser-window low-pass for sampling rate `rate_hz` with the band edges
    /// above, normalized to unit DC gain.
    pub fn lowpass(rate_hz: f64) -> Result<Self> {
        if rate_hz <= 2.0 * STOPBAND_HZ {
            return Err(Error::invalid(format!(
                "sampling rate {rate_hz} Hz cannot represent a {STOPBAND_HZ} Hz stopband"
            )));
        }
        let a = DESIGN_ATTENUATION_DB;
        let beta = if a > 50.0 {
            0.1102 * (a - 8.7)
        } else if a >= 21.0 {
            0.5842 * (a - 21.0).powf(0.4) + 0.07886 * (a - 21.0)
        } else {
            0.0
        };
        let width = 2.0 * PI * (STOPBAND_HZ - PASSBAND_HZ) / rate_hz;
        let mut n = ((a - 8.0) / (2.285 * width)).ceil() as usize + 1;
        if n.is_multiple_of(2) {
            n += 1;
        }
        let fc = (PASSBAND_HZ + STOPBAND_HZ) / 2.0 / rate_hz;
        let mid = (n - 1) as f64 / 2.0;
        let i0_beta = bessel_i0(beta);
        let mut taps: Vec<f64> = (0..n)
            .map(|i| {
                let x = i as f64 - mid;
                let ideal = if x == 0.0 { 2.0 * fc } else { (2.0 * PI * fc * x).sin() / (PI * x) };
                let r = x / mid;
                ideal * bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0_beta
            })
            .collect();
        let dc: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= dc);
        Ok(FirFilter { taps, rate_hz })
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Magnitude response at `freq_hz`, in dB.
    pub fn response_db(&self, freq_hz: f64) -> f64 {
        let w = 2.0 * PI * freq_hz / self.rate_hz;
        let (re, im) = self
            .taps
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (k, &h)| (re + h * (w * k as f64).cos(), im - h * (w * k as f64).sin()));
        20.0 * re.hypot(im).log10()
    }

    /// Zero-phase application: output sample `t` is centred on input sample
    /// `t`, with the signal edge-extended beyond both ends.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let half = self.taps.len() / 2;
        let at = |i: isize| x[i.clamp(0, n as isize - 1) as usize];
        (0..n)
            .map(|t| {
                self.taps
                    .iter()
                    .enumerate()
                    .map(|(k, &h)| h * at(t as isize + k as isize - half as isize))
                    .sum()
            })
            .collect()
    }
}

/// Removes ±360° jumps from an angle track (degrees).
pub fn unwrap_degrees(x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut offset = 0.0;
    for (i, &v) in x.iter().enumerate() {
        if i > 0 {
            let d = v - x[i - 1];
            offset -= 360.0 * (d / 360.0).round();
        }
        out.push(v + offset);
    }
    out
}

/// Maps an angle in degrees to `[−180, 180)`.
pub fn wrap_degrees(v: f64) -> f64 {
    (v + 180.0).rem_euclid(360.0) - 180.0
}

/// Number of frames after resampling `len` frames from `rate` to `target`:
/// `ceil(len · target / rate)`.
pub fn resampled_len(len: usize, rate: f64, target: f64) -> usize {
    ((len as f64 * target / rate) - 1e-9).ceil().max(1.0) as usize
}

/// Source frame of output frame `j`: the nearest input index.
pub fn source_index(j: usize, len: usize, rate: f64, target: f64) -> usize {
    ((j as f64 * rate / target).round() as usize).min(len - 1)
}

/// Low-pass filters every channel and decimates to `target_hz`. Labels are
/// taken from the nearest source frame. A sequence already at the target
/// rate is returned unchanged.
pub fn fir_lowpass_resample(seq: &SensorSequence, target_hz: f64) -> Result<SensorSequence> {
    let rate = seq.rate_hz();
    if rate < target_hz {
        return Err(Error::invalid(format!("cannot upsample from {rate} Hz to {target_hz} Hz")));
    }
    if rate == target_hz {
        return Ok(seq.clone());
    }
    let layout = seq.layout();
    let w = layout.width();
    let len = seq.len();
    let out_len = resampled_len(len, rate, target_hz);
    let src: Vec<usize> = (0..out_len).map(|j| source_index(j, len, rate, target_hz)).collect();
    let filter = (rate > 2.0 * STOPBAND_HZ).then(|| FirFilter::lowpass(rate)).transpose()?;

    let mut channels = vec![0.0; out_len * w];
    for c in 0..w {
        let raw = seq.channel(c);
        let track = if layout.is_angle(c) { unwrap_degrees(&raw) } else { raw };
        let smooth = match &filter {
            Some(f) => f.apply(&track),
            None => track,
        };
        for (j, &s) in src.iter().enumerate() {
            let v = smooth[s];
            channels[j * w + c] = if layout.is_angle(c) { wrap_degrees(v) } else { v };
        }
    }
    let labels = src.iter().map(|&s| seq.labels()[s]).collect();
    SensorSequence::new(target_hz, layout, channels, labels)
}
