use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planar geometry of the plantarflexion cable and the lever on the foot.
///
/// Frame: origin on the flexion axis, x anterior, y up. The attachment point
/// sits at `attachment_radius` from the axis at polar angle
/// `attachment_angle_offset - theta`, so plantarflexion swings a posterior
/// lever upward toward the cable exit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeverGeometry {
    #[serde(rename = "attachment_radius_m")]
    pub attachment_radius: f64,
    #[serde(rename = "attachment_angle_offset_rad")]
    pub attachment_angle_offset: f64,
    /// Where the cable leaves the frame toward the Bowden sheath.
    #[serde(rename = "cable_exit_point_m")]
    pub cable_exit_point: [f64; 2],
}

const DEGENERATE_LENGTH: f64 = 1e-9;

impl LeverGeometry {
    pub fn attachment_point(&self, theta: f64) -> [f64; 2] {
        let angle = self.attachment_angle_offset - theta;
        [
            self.attachment_radius * angle.cos(),
            self.attachment_radius * angle.sin(),
        ]
    }

    /// Straight-line cable length from the attachment point to the exit point.
    pub fn cable_path_length(&self, theta: f64) -> f64 {
        let a = self.attachment_point(theta);
        let [ex, ey] = self.cable_exit_point;
        (ex - a[0]).hypot(ey - a[1])
    }

    /// Moment arm without the degeneracy check. The result is `-dL/dtheta`, so
    /// tension times this arm is exactly the plantarflexing torque.
    pub(crate) fn arm(&self, theta: f64) -> f64 {
        let a = self.attachment_point(theta);
        let [ex, ey] = self.cable_exit_point;
        let (dx, dy) = (ex - a[0], ey - a[1]);
        let len = dx.hypot(dy);
        if len < DEGENERATE_LENGTH {
            return 0.0;
        }
        (a[1] * dx - a[0] * dy) / len
    }
}

/// Perpendicular distance from the flexion axis to the cable line, signed
/// positive when cable tension plantarflexes the foot.
pub fn pf_moment_arm(theta: f64, geom: &LeverGeometry) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::NonFinite("theta"));
    }
    let a = geom.attachment_point(theta);
    let [ex, ey] = geom.cable_exit_point;
    if (ex - a[0]).hypot(ey - a[1]) < DEGENERATE_LENGTH {
        return Err(Error::Config(
            "pf_lever: attachment point coincides with the cable exit point".into(),
        ));
    }
    Ok(geom.arm(theta))
}
