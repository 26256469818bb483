use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Welch averaging: this many half-overlapping Hann segments span the record.
pub const WELCH_SEGMENTS: usize = 4;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FrequencyResponse {
    pub frequencies: Vec<f64>,
    pub magnitude_db: Vec<f64>,
    /// Unwrapped, starting from the principal value at the first bin.
    pub phase_deg: Vec<f64>,
    pub coherence: Vec<f64>,
}

impl FrequencyResponse {
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }
}

fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// H1 estimate `Pyx / Pxx` from Welch-averaged spectra, with coherence.
///
/// Only bins inside `band` (Hz, inclusive) with non-zero input power are kept.
pub fn estimate_frf(input: &[f64], output: &[f64], rate: f64, band: (f64, f64)) -> Result<FrequencyResponse> {
    let n = input.len();
    if n != output.len() {
        return Err(Error::Domain(format!(
            "input and output lengths differ ({n} vs {})",
            output.len()
        )));
    }
    let (f0, f1) = band;
    if !(rate > 0.0 && f0 > 0.0 && f1 > f0) {
        return Err(Error::Domain(format!("invalid band [{f0}, {f1}] at {rate} Hz")));
    }
    let needed = (2.0 * rate / f0).floor() as usize;
    if n < needed {
        return Err(Error::Domain(format!(
            "record of {n} samples is shorter than 2 periods of the lowest frequency ({needed})"
        )));
    }
    if input.iter().chain(output).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("frf record"));
    }

    let seg = 2 * n / (WELCH_SEGMENTS + 1);
    let hop = seg / 2;
    let window = hann(seg);
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(seg);
    let bins = seg / 2 + 1;
    let mut pxx = vec![0.0; bins];
    let mut pyy = vec![0.0; bins];
    let mut pyx = vec![Complex64::new(0.0, 0.0); bins];
    let spectrum = |x: &[f64]| -> Vec<Complex64> {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let mut buf: Vec<Complex64> = x
            .iter()
            .zip(&window)
            .map(|(v, w)| Complex64::new((v - mean) * w, 0.0))
            .collect();
        fft.process(&mut buf);
        buf
    };
    for s in 0..WELCH_SEGMENTS {
        let start = s * hop;
        let x = spectrum(&input[start..start + seg]);
        let y = spectrum(&output[start..start + seg]);
        for k in 0..bins {
            pxx[k] += x[k].norm_sqr();
            pyy[k] += y[k].norm_sqr();
            pyx[k] += x[k].conj() * y[k];
        }
    }

    let floor = pxx.iter().cloned().fold(0.0, f64::max) * 1e-20;
    let mut out = FrequencyResponse::default();
    let mut prev_phase: Option<f64> = None;
    for k in 1..bins {
        let f = k as f64 * rate / seg as f64;
        if f < f0 || f > f1 || !(pxx[k] > floor) {
            continue;
        }
        let h = pyx[k] / pxx[k];
        let mut phase = h.arg().to_degrees();
        if let Some(p) = prev_phase {
            phase -= 360.0 * ((phase - p) / 360.0).round();
        }
        prev_phase = Some(phase);
        let coh = if pyy[k] > 0.0 {
            (pyx[k].norm_sqr() / (pxx[k] * pyy[k])).min(1.0)
        } else {
            0.0
        };
        out.frequencies.push(f);
        out.magnitude_db.push(20.0 * h.norm().log10());
        out.phase_deg.push(phase);
        out.coherence.push(coh);
    }
    if out.is_empty() {
        return Err(Error::Domain("no input power inside the analysis band".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BandwidthCriterion {
    MagnitudeMinus3dB,
    Phase45deg,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    pub hz: f64,
    pub criterion: BandwidthCriterion,
}

fn first_crossing(f: &[f64], y: &[f64], level: f64) -> Option<(usize, f64)> {
    (0..y.len()).find(|&k| y[k] <= level).map(|k| {
        if k == 0 {
            (0, f[0])
        } else {
            let frac = (y[k - 1] - level) / (y[k - 1] - y[k]);
            (k, f[k - 1] + frac * (f[k] - f[k - 1]))
        }
    })
}

/// Lower of the first -3 dB magnitude crossing and the first -45 deg phase
/// crossing. When both fall in the same bin the magnitude criterion wins.
pub fn bandwidth(frf: &FrequencyResponse) -> Result<Bandwidth> {
    let first = *frf
        .magnitude_db
        .first()
        .ok_or_else(|| Error::Domain("empty frequency response".into()))?;
    if first.abs() > 1.0 {
        return Err(Error::Domain(format!(
            "low-frequency magnitude {first:.2} dB is not within 1 dB of unity"
        )));
    }
    let mag = first_crossing(&frf.frequencies, &frf.magnitude_db, -3.0);
    let phase = first_crossing(&frf.frequencies, &frf.phase_deg, -45.0);
    match (mag, phase) {
        (Some((km, fm)), Some((kp, fp))) => Ok(if km <= kp {
            Bandwidth {
                hz: fm,
                criterion: BandwidthCriterion::MagnitudeMinus3dB,
            }
        } else {
            Bandwidth {
                hz: fp,
                criterion: BandwidthCriterion::Phase45deg,
            }
        }),
        (Some((_, fm)), None) => Ok(Bandwidth {
            hz: fm,
            criterion: BandwidthCriterion::MagnitudeMinus3dB,
        }),
        (None, Some((_, fp))) => Ok(Bandwidth {
            hz: fp,
            criterion: BandwidthCriterion::Phase45deg,
        }),
        (None, None) => Err(Error::Domain(
            "neither -3 dB nor -45 deg is crossed inside the analysis band".into(),
        )),
    }
}
