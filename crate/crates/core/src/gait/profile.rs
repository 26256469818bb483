use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plant::PlantConfig;

/// Control targets per stride.
pub const STRIDE_SAMPLES: usize = 51;

/// First line of a stride profile CSV.
pub const PROFILE_SCHEMA: &str = "# stride_profile v1";

pub const PROFILE_COLUMNS: [&str; 6] = [
    "stride_progress",
    "theta_ref_rad",
    "s_ref_m",
    "ankle_torque_ext_nm",
    "ap_force_ext_n",
    "accel_event_marker",
];

/// Tolerances for the first/last sample periodicity check.
pub const PERIODIC_THETA_TOL: f64 = 1e-3;
pub const PERIODIC_S_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrideSample {
    pub stride_progress: f64,
    /// Plantarflexion positive.
    pub theta_ref: f64,
    pub s_ref: f64,
    pub ankle_torque_ext: f64,
    pub ap_force_ext: f64,
    /// Heel strike happens at this sample.
    pub accel_event_marker: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrideProfile {
    pub samples: Vec<StrideSample>,
    pub stride_duration: f64,
    pub walking_speed: f64,
    /// Set when the source had a different row count and was interpolated.
    pub resampled: bool,
}

impl StrideProfile {
    /// Every violated invariant, one line each, naming the row where relevant.
    pub fn violations(&self, plant: &PlantConfig) -> Vec<String> {
        let mut out = Vec::new();
        if self.samples.len() != STRIDE_SAMPLES {
            out.push(format!("expected {STRIDE_SAMPLES} samples, found {}", self.samples.len()));
        }
        if !(self.stride_duration > 0.0 && self.stride_duration.is_finite()) {
            out.push(format!("stride_duration_s must be positive (got {})", self.stride_duration));
        }
        if !(self.walking_speed > 0.0 && self.walking_speed.is_finite()) {
            out.push(format!("walking_speed_m_per_s must be positive (got {})", self.walking_speed));
        }
        let [t_lo, t_hi] = plant.flexion_limits;
        let [s_lo, s_hi] = plant.translation_limits;
        for (i, s) in self.samples.iter().enumerate() {
            let row = i + 1;
            let fields = [s.stride_progress, s.theta_ref, s.s_ref, s.ankle_torque_ext, s.ap_force_ext];
            if fields.iter().any(|v| !v.is_finite()) {
                out.push(format!("row {row}: non-finite value"));
                continue;
            }
            if !(0.0..=1.0).contains(&s.stride_progress) {
                out.push(format!("row {row}: stride_progress {} outside [0, 1]", s.stride_progress));
            }
            if i > 0 && s.stride_progress <= self.samples[i - 1].stride_progress {
                out.push(format!("row {row}: stride_progress is not increasing"));
            }
            if s.theta_ref < t_lo || s.theta_ref > t_hi {
                out.push(format!(
                    "row {row}: theta_ref {:.1} deg outside flexion limits [{:.1}, {:.1}] deg",
                    s.theta_ref.to_degrees(),
                    t_lo.to_degrees(),
                    t_hi.to_degrees()
                ));
            }
            if s.s_ref < s_lo || s.s_ref > s_hi {
                out.push(format!("row {row}: s_ref {} m outside translation limits [{s_lo}, {s_hi}]", s.s_ref));
            }
        }
        if let (Some(first), Some(last)) = (self.samples.first(), self.samples.last()) {
            if (first.theta_ref - last.theta_ref).abs() > PERIODIC_THETA_TOL
                || (first.s_ref - last.s_ref).abs() > PERIODIC_S_TOL
            {
                out.push("profile is not periodic: first and last samples differ".into());
            }
        }
        out
    }

    pub fn validate(&self, plant: &PlantConfig) -> Result<()> {
        let v = self.violations(plant);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Profile(v))
        }
    }

    /// Linear interpolation at `progress`, wrapped into one stride. Markers
    /// are not interpolated.
    pub fn at(&self, progress: f64) -> StrideSample {
        let p = progress.rem_euclid(1.0);
        let s = &self.samples;
        let i = s.partition_point(|x| x.stride_progress <= p).clamp(1, s.len() - 1);
        let (a, b) = (&s[i - 1], &s[i]);
        let f = ((p - a.stride_progress) / (b.stride_progress - a.stride_progress)).clamp(0.0, 1.0);
        let lerp = |x: f64, y: f64| x + f * (y - x);
        StrideSample {
            stride_progress: p,
            theta_ref: lerp(a.theta_ref, b.theta_ref),
            s_ref: lerp(a.s_ref, b.s_ref),
            ankle_torque_ext: lerp(a.ankle_torque_ext, b.ankle_torque_ext),
            ap_force_ext: lerp(a.ap_force_ext, b.ap_force_ext),
            accel_event_marker: false,
        }
    }

    /// Stride progress of every heel-strike marker.
    pub fn markers(&self) -> Vec<f64> {
        self.samples
            .iter()
            .filter(|s| s.accel_event_marker)
            .map(|s| s.stride_progress)
            .collect()
    }
}

/// Template for [`synth_stride`]. Angles are magnitudes in degrees; progress
/// values are fractions of the stride.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrideShape {
    /// Stride duration at 1 m/s; scales inversely with speed.
    #[serde(rename = "stride_duration_s")]
    pub stride_duration: f64,
    pub stance_fraction: f64,
    pub peak_dorsiflexion_deg: f64,
    pub peak_dorsiflexion_at: f64,
    pub peak_plantarflexion_deg: f64,
    pub peak_plantarflexion_at: f64,
    /// Swing is back at neutral by this point.
    pub swing_neutral_at: f64,
    /// Ground loads per m/s of walking speed at the hump peaks.
    #[serde(rename = "ap_force_per_speed_n_s_per_m")]
    pub ap_force_per_speed: f64,
    #[serde(rename = "ankle_torque_per_speed_nm_s_per_m")]
    pub ankle_torque_per_speed: f64,
}

impl Default for StrideShape {
    fn default() -> Self {
        Self {
            stride_duration: 1.1,
            stance_fraction: 0.62,
            peak_dorsiflexion_deg: 10.0,
            peak_dorsiflexion_at: 0.40,
            peak_plantarflexion_deg: 20.0,
            peak_plantarflexion_at: 0.60,
            swing_neutral_at: 0.80,
            ap_force_per_speed: 80.0,
            ankle_torque_per_speed: 60.0,
        }
    }
}

fn smoothstep(a: f64, b: f64, f: f64) -> f64 {
    a + (b - a) * 0.5 * (1.0 - (PI * f).cos())
}

/// Ground-reaction style double hump over stance, peak 1, zero at the ends.
pub fn double_hump(p: f64) -> f64 {
    const PEAK: f64 = 0.771_263_4;
    if !(0.0..=1.0).contains(&p) {
        return 0.0;
    }
    (PI * p).sin() * (0.75 - 0.25 * (4.0 * PI * p).cos()) / PEAK
}

/// Canonical synthetic stride: dorsiflexion ramp to a peak, rapid
/// plantarflexion to push-off, swing back to neutral. Heel strike is at
/// progress 0. All values are synthetic.
pub fn synth_stride(speed: f64, shape: &StrideShape) -> Result<StrideProfile> {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(Error::Domain(format!("walking speed must be positive (got {speed})")));
    }
    let knots = [
        (0.0, 0.0),
        (shape.peak_dorsiflexion_at, -shape.peak_dorsiflexion_deg.to_radians()),
        (shape.peak_plantarflexion_at, shape.peak_plantarflexion_deg.to_radians()),
        (shape.swing_neutral_at, 0.0),
        (1.0, 0.0),
    ];
    if knots.windows(2).any(|w| w[1].0 <= w[0].0) || !(shape.stance_fraction > 0.0 && shape.stance_fraction < 1.0) {
        return Err(Error::Domain("stride shape knots must be increasing inside (0, 1)".into()));
    }
    let theta = |p: f64| {
        let i = knots.iter().rposition(|k| k.0 <= p).unwrap_or(0).min(knots.len() - 2);
        let (a, b) = (knots[i], knots[i + 1]);
        smoothstep(a.1, b.1, (p - a.0) / (b.0 - a.0))
    };
    let samples = (0..STRIDE_SAMPLES)
        .map(|i| {
            let p = i as f64 / (STRIDE_SAMPLES - 1) as f64;
            let hump = double_hump(p / shape.stance_fraction);
            StrideSample {
                stride_progress: p,
                theta_ref: theta(p),
                s_ref: 0.0,
                ankle_torque_ext: -shape.ankle_torque_per_speed * speed * hump,
                ap_force_ext: -shape.ap_force_per_speed * speed * hump,
                accel_event_marker: i == 0,
            }
        })
        .collect();
    Ok(StrideProfile {
        samples,
        stride_duration: shape.stride_duration / speed,
        walking_speed: speed,
        resampled: false,
    })
}

pub fn save_stride(profile: &StrideProfile, path: &Path) -> Result<()> {
    let mut text = format!(
        "{PROFILE_SCHEMA}, stride_duration_s={}, walking_speed_m_per_s={}\n",
        profile.stride_duration, profile.walking_speed
    );
    text.push_str(&PROFILE_COLUMNS.join(","));
    text.push('\n');
    for s in &profile.samples {
        let row = [
            s.stride_progress,
            s.theta_ref,
            s.s_ref,
            s.ankle_torque_ext,
            s.ap_force_ext,
            f64::from(u8::from(s.accel_event_marker)),
        ];
        text.push_str(&row.map(crate::csvio::format_value).join(","));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn parse_metadata(line: &str) -> std::result::Result<(f64, f64), String> {
    let rest = line
        .strip_prefix(PROFILE_SCHEMA)
        .ok_or_else(|| format!("line 1: expected schema header {PROFILE_SCHEMA:?}"))?;
    let (mut duration, mut speed) = (None, None);
    for part in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| format!("line 1: malformed metadata {part:?}"))?;
        let v: f64 = v.trim().parse().map_err(|_| format!("line 1: {k} is not a number"))?;
        match k.trim() {
            "stride_duration_s" => duration = Some(v),
            "walking_speed_m_per_s" => speed = Some(v),
            other => return Err(format!("line 1: unknown metadata key {other:?}")),
        }
    }
    Ok((
        duration.ok_or("line 1: missing stride_duration_s")?,
        speed.ok_or("line 1: missing walking_speed_m_per_s")?,
    ))
}

/// Loads and validates a profile. Inputs with a row count other than 51 are
/// resampled linearly onto 51 evenly spaced points and flagged.
pub fn load_stride(path: &Path, plant: &PlantConfig) -> Result<StrideProfile> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let (first, body) = text.split_once('\n').unwrap_or((&text, ""));
    let (stride_duration, walking_speed) = parse_metadata(first.trim_end()).map_err(|m| Error::Profile(vec![m]))?;

    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(body.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Profile(vec![format!("line 2: {e}")]))?
        .clone();
    let mut problems = Vec::new();
    let index: Vec<Option<usize>> = PROFILE_COLUMNS
        .iter()
        .map(|c| {
            let i = headers.iter().position(|h| h == *c);
            if i.is_none() {
                problems.push(format!("missing column {c:?}"));
            }
            i
        })
        .collect();
    if !problems.is_empty() {
        return Err(Error::Profile(problems));
    }
    let mut rows = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let row = r + 1;
        let rec = match rec {
            Ok(rec) => rec,
            Err(e) => {
                problems.push(format!("row {row}: {e}"));
                continue;
            }
        };
        let mut vals = [0.0; 6];
        let mut ok = true;
        for (k, i) in index.iter().enumerate() {
            let field = rec.get(i.unwrap_or(0)).unwrap_or("");
            match field.parse::<f64>() {
                Ok(v) => vals[k] = v,
                Err(_) => {
                    problems.push(format!("row {row}: {} is not a number: {field:?}", PROFILE_COLUMNS[k]));
                    ok = false;
                }
            }
        }
        if ok {
            rows.push(StrideSample {
                stride_progress: vals[0],
                theta_ref: vals[1],
                s_ref: vals[2],
                ankle_torque_ext: vals[3],
                ap_force_ext: vals[4],
                accel_event_marker: vals[5] != 0.0,
            });
        }
    }
    if !problems.is_empty() {
        return Err(Error::Profile(problems));
    }
    if rows.len() < 2 {
        return Err(Error::Profile(vec![format!("need at least 2 rows, found {}", rows.len())]));
    }
    let raw = StrideProfile {
        samples: rows,
        stride_duration,
        walking_speed,
        resampled: false,
    };
    // Row-level checks on the file as written, before any resampling.
    let mut v: Vec<String> = raw
        .violations(plant)
        .into_iter()
        .filter(|m| !m.starts_with("expected "))
        .collect();
    if let (Some(a), Some(b)) = (raw.samples.first(), raw.samples.last()) {
        if a.stride_progress != 0.0 || b.stride_progress != 1.0 {
            v.push("stride_progress must run from 0 to 1".into());
        }
    }
    if !v.is_empty() {
        return Err(Error::Profile(v));
    }
    let profile = if raw.samples.len() == STRIDE_SAMPLES {
        raw
    } else {
        resample(&raw)
    };
    profile.validate(plant)?;
    Ok(profile)
}

fn resample(raw: &StrideProfile) -> StrideProfile {
    let markers = raw.markers();
    let mut samples: Vec<StrideSample> = (0..STRIDE_SAMPLES)
        .map(|i| {
            let p = i as f64 / (STRIDE_SAMPLES - 1) as f64;
            let mut s = if i == STRIDE_SAMPLES - 1 {
                StrideSample {
                    stride_progress: 1.0,
                    ..*raw.samples.last().unwrap_or(&raw.at(1.0))
                }
            } else {
                raw.at(p)
            };
            s.accel_event_marker = false;
            s
        })
        .collect();
    let step = 1.0 / (STRIDE_SAMPLES - 1) as f64;
    for m in markers {
        let i = ((m / step).round() as usize).min(STRIDE_SAMPLES - 1);
        samples[i].accel_event_marker = true;
    }
    StrideProfile {
        samples,
        stride_duration: raw.stride_duration,
        walking_speed: raw.walking_speed,
        resampled: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_hump_shape() {
        let peak = (0..=10_000).map(|i| double_hump(i as f64 / 10_000.0)).fold(0.0, f64::max);
        assert!((peak - 1.0).abs() < 1e-3, "{peak}");
        assert_eq!(double_hump(0.0), 0.0);
        assert!(double_hump(1.0).abs() < 1e-12);
        assert!(double_hump(0.5) < double_hump(0.3));
    }

    #[test]
    fn synthetic_stride_contract() {
        let p = synth_stride(1.0, &StrideShape::default()).unwrap();
        assert_eq!(p.samples.len(), STRIDE_SAMPLES);
        p.validate(&PlantConfig::default()).unwrap();
        let min = p.samples.iter().map(|s| s.theta_ref).fold(f64::INFINITY, f64::min);
        let (imax, max) = p
            .samples
            .iter()
            .enumerate()
            .map(|(i, s)| (i, s.theta_ref))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        assert!((min.to_degrees() + 10.0).abs() < 0.5);
        assert!((max.to_degrees() - 20.0).abs() < 0.5);
        assert!((p.samples[imax].stride_progress - 0.6).abs() < 0.03);
        assert_eq!(p.markers(), vec![0.0]);
        assert!(synth_stride(0.0, &StrideShape::default()).is_err());
    }

    #[test]
    fn interpolation_hits_samples() {
        let p = synth_stride(1.2, &StrideShape::default()).unwrap();
        for s in &p.samples[..STRIDE_SAMPLES - 1] {
            assert!((p.at(s.stride_progress).theta_ref - s.theta_ref).abs() < 1e-12);
        }
        assert!((p.at(1.0).theta_ref - p.samples[0].theta_ref).abs() < 1e-12);
    }
}
